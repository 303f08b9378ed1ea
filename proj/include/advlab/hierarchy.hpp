#pragma once

// Class taxonomy as a tree of named collections.
//
// File format (JSON), one object per node:
//
//   {
//     "name": "Canine",            display name (required)
//     "path": "1.1.2.1.4",         hierarchy label; "" for the root
//     "class_count": 130,          optional; checked against the computed size
//     "classes": [151, 152, ...],  classes whose deepest collection is this node
//     "children": [ ... ]          nested nodes
//   }
//
// The root may also carry "num_classes" (M). A class index may be listed at
// most once in the whole file. Classes listed nowhere belong to the root only.
// A child's path must extend its parent's path by one ".<label>" segment
// (root children use a bare "<label>").

#include <algorithm>
#include <cstddef>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "advlab/error.hpp"

namespace advlab {

struct HierarchyNode {
    std::string name;
    std::string path;
    std::optional<std::size_t> parent;
    std::vector<std::size_t> children;
    std::vector<std::size_t> own_classes;  // listed directly on this node, ascending
    std::vector<std::size_t> class_set;    // own classes plus all descendants', ascending
    std::size_t depth = 0;

    friend bool operator==(const HierarchyNode&, const HierarchyNode&) = default;
};

/// Immutable validated taxonomy. Node ids are pre-order positions; the root is 0.
class HierarchyTree {
public:
    static constexpr std::size_t root = 0;

    std::size_t size() const noexcept { return nodes_.size(); }
    std::size_t num_classes() const noexcept { return num_classes_; }
    const HierarchyNode& node(std::size_t id) const {
        if (id >= nodes_.size()) throw LookupError("unknown collection id " + std::to_string(id));
        return nodes_[id];
    }
    const std::vector<HierarchyNode>& nodes() const noexcept { return nodes_; }

    std::size_t class_count(std::size_t id) const { return node(id).class_set.size(); }

    bool contains(std::size_t id, std::size_t cls) const {
        const auto& s = node(id).class_set;
        return std::binary_search(s.begin(), s.end(), cls);
    }

    /// Deepest collection listing `cls`, or the root when none does.
    std::size_t deepest_collection(std::size_t cls) const {
        check_class(cls);
        return deepest_[cls];
    }

    std::optional<std::size_t> find_path(const std::string& path) const {
        for (std::size_t i = 0; i < nodes_.size(); ++i)
            if (nodes_[i].path == path) return i;
        return std::nullopt;
    }

    /// First node in pre-order with this display name.
    std::optional<std::size_t> find_name(const std::string& name) const {
        for (std::size_t i = 0; i < nodes_.size(); ++i)
            if (nodes_[i].name == name) return i;
        return std::nullopt;
    }

    std::size_t require_name(const std::string& name) const {
        if (auto id = find_name(name)) return *id;
        throw LookupError("unknown collection '" + name + "'");
    }

    void check_class(std::size_t cls) const {
        if (cls >= num_classes_) {
            throw LookupError("class " + std::to_string(cls) + " is not part of the hierarchy (M = " +
                              std::to_string(num_classes_) + ")");
        }
    }

    static HierarchyTree from_json(const nlohmann::json& j, std::optional<std::size_t> num_classes = std::nullopt);
    nlohmann::ordered_json to_json() const;

    friend bool operator==(const HierarchyTree&, const HierarchyTree&) = default;

private:
    std::size_t add_node(const nlohmann::json& j, std::optional<std::size_t> parent, std::size_t depth);
    std::size_t finish_sets(std::size_t id);
    nlohmann::ordered_json node_json(std::size_t id) const;

    std::vector<HierarchyNode> nodes_;
    std::vector<std::size_t> deepest_;
    std::size_t num_classes_ = 0;
};

inline std::size_t HierarchyTree::add_node(const nlohmann::json& j, std::optional<std::size_t> parent,
                                           std::size_t depth) {
    if (!j.is_object()) throw StructureError("hierarchy node must be a JSON object");
    HierarchyNode n;
    if (!j.contains("name") || !j["name"].is_string()) throw StructureError("hierarchy node without a string name");
    n.name = j["name"].get<std::string>();
    n.path = j.value("path", std::string{});
    n.parent = parent;
    n.depth = depth;
    if (parent) {
        const std::string& pp = nodes_[*parent].path;
        const std::string prefix = pp.empty() ? "" : pp + ".";
        const bool extends = n.path.size() > prefix.size() && n.path.compare(0, prefix.size(), prefix) == 0 &&
                             n.path.find('.', prefix.size()) == std::string::npos;
        if (!extends) {
            throw StructureError("node '" + n.name + "' has path '" + n.path + "', which does not extend parent path '" +
                                 pp + "'");
        }
    } else if (!n.path.empty()) {
        throw StructureError("root node '" + n.name + "' must have an empty path");
    }
    for (const auto& other : nodes_) {
        if (other.path == n.path) {
            throw StructureError("node '" + n.name + "' reuses path '" + n.path + "' of node '" + other.name +
                                 "' (a collection may have only one parent)");
        }
    }
    if (j.contains("classes")) {
        if (!j["classes"].is_array()) throw StructureError("node '" + n.name + "': classes must be an array");
        for (const auto& c : j["classes"]) {
            if (!c.is_number_integer() || c.get<long long>() < 0) {
                throw StructureError("node '" + n.name + "': class indices must be non-negative integers");
            }
            n.own_classes.push_back(c.get<std::size_t>());
        }
        std::sort(n.own_classes.begin(), n.own_classes.end());
    }
    const std::size_t id = nodes_.size();
    nodes_.push_back(std::move(n));
    if (j.contains("children")) {
        if (!j["children"].is_array()) throw StructureError("node '" + nodes_[id].name + "': children must be an array");
        for (const auto& child : j["children"]) {
            const std::size_t cid = add_node(child, id, depth + 1);
            nodes_[id].children.push_back(cid);
        }
    }
    return id;
}

inline std::size_t HierarchyTree::finish_sets(std::size_t id) {
    std::vector<std::size_t> set = nodes_[id].own_classes;
    for (std::size_t c : nodes_[id].children) {
        finish_sets(c);
        const auto& cs = nodes_[c].class_set;
        set.insert(set.end(), cs.begin(), cs.end());
    }
    std::sort(set.begin(), set.end());
    nodes_[id].class_set = std::move(set);
    return nodes_[id].class_set.size();
}

inline HierarchyTree HierarchyTree::from_json(const nlohmann::json& j, std::optional<std::size_t> num_classes) {
    HierarchyTree tree;
    tree.add_node(j, std::nullopt, 0);

    if (!num_classes && j.contains("num_classes")) num_classes = j["num_classes"].get<std::size_t>();
    std::map<std::size_t, std::size_t> owner;  // class -> node listing it
    std::size_t max_class = 0;
    bool any = false;
    for (std::size_t id = 0; id < tree.nodes_.size(); ++id) {
        for (std::size_t c : tree.nodes_[id].own_classes) {
            if (num_classes && c >= *num_classes) {
                throw RangeError("node '" + tree.nodes_[id].name + "' lists class " + std::to_string(c) +
                                 " >= M = " + std::to_string(*num_classes));
            }
            auto [it, fresh] = owner.emplace(c, id);
            if (!fresh) {
                throw ConflictError("class " + std::to_string(c) + " is listed in both '" +
                                    tree.nodes_[it->second].name + "' (" + tree.nodes_[it->second].path + ") and '" +
                                    tree.nodes_[id].name + "' (" + tree.nodes_[id].path + ")");
            }
            max_class = std::max(max_class, c);
            any = true;
        }
    }
    tree.num_classes_ = num_classes.value_or(any ? max_class + 1 : 0);
    if (tree.num_classes_ == 0) throw StructureError("hierarchy has no classes; give num_classes");

    // Every class is implicitly a member of the root.
    std::vector<std::size_t> implicit;
    for (std::size_t c = 0; c < tree.num_classes_; ++c)
        if (!owner.count(c)) implicit.push_back(c);
    tree.finish_sets(root);
    {
        auto& rs = tree.nodes_[root].class_set;
        rs.insert(rs.end(), implicit.begin(), implicit.end());
        std::sort(rs.begin(), rs.end());
    }

    tree.deepest_.assign(tree.num_classes_, root);
    for (const auto& [c, id] : owner) tree.deepest_[c] = id;

    // class_count check and non-empty collections.
    // Walk the JSON again in the same pre-order as add_node.
    std::size_t id = 0;
    const std::function<void(const nlohmann::json&)> walk = [&](const nlohmann::json& nj) {
        const HierarchyNode& n = tree.nodes_[id];
        if (nj.contains("class_count")) {
            const auto declared = nj["class_count"].get<std::size_t>();
            if (declared != n.class_set.size()) {
                throw StructureError("node '" + n.name + "' (" + n.path + ") declares " + std::to_string(declared) +
                                     " classes but contains " + std::to_string(n.class_set.size()));
            }
        }
        if (id != root && n.class_set.empty()) {
            throw StructureError("collection '" + n.name + "' (" + n.path + ") has no classes");
        }
        ++id;
        if (nj.contains("children"))
            for (const auto& c : nj["children"]) walk(c);
    };
    walk(j);
    return tree;
}

inline nlohmann::ordered_json HierarchyTree::node_json(std::size_t id) const {
    const HierarchyNode& n = nodes_[id];
    nlohmann::ordered_json j;
    j["name"] = n.name;
    j["path"] = n.path;
    if (id == root) j["num_classes"] = num_classes_;
    j["class_count"] = n.class_set.size();
    j["classes"] = n.own_classes;
    auto children = nlohmann::ordered_json::array();
    for (std::size_t c : n.children) children.push_back(node_json(c));
    j["children"] = std::move(children);
    return j;
}

inline nlohmann::ordered_json HierarchyTree::to_json() const { return node_json(root); }

inline HierarchyTree parse_hierarchy(const std::string& text, std::optional<std::size_t> num_classes = std::nullopt) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("malformed hierarchy JSON: ") + e.what(), e.byte);
    }
    try {
        return HierarchyTree::from_json(j, num_classes);
    } catch (const nlohmann::json::exception& e) {
        throw StructureError(std::string("invalid hierarchy: ") + e.what());
    }
}

inline HierarchyTree load_hierarchy(const std::string& path, std::optional<std::size_t> num_classes = std::nullopt) {
    std::ifstream in(path);
    if (!in) throw LookupError("cannot open hierarchy file '" + path + "'");
    const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_hierarchy(text, num_classes);
}

inline std::string serialize_hierarchy(const HierarchyTree& tree) { return tree.to_json().dump(2) + "\n"; }

/// True iff both classes belong to the collection.
inline bool is_intra_collection(const HierarchyTree& tree, std::size_t collection, std::size_t a, std::size_t b) {
    tree.node(collection);
    tree.check_class(a);
    tree.check_class(b);
    return tree.contains(collection, a) && tree.contains(collection, b);
}

/// Ancestor chain of the class's deepest collection, root first.
inline std::vector<std::size_t> collections_of(const HierarchyTree& tree, std::size_t cls) {
    std::vector<std::size_t> chain;
    std::optional<std::size_t> at = tree.deepest_collection(cls);
    while (at) {
        chain.push_back(*at);
        at = tree.node(*at).parent;
    }
    std::reverse(chain.begin(), chain.end());
    return chain;
}

/// Deepest collection containing both classes (the root if nothing deeper).
inline std::size_t deepest_common_collection(const HierarchyTree& tree, std::size_t a, std::size_t b) {
    const auto ca = collections_of(tree, a);
    const auto cb = collections_of(tree, b);
    std::size_t common = HierarchyTree::root;
    for (std::size_t i = 0; i < std::min(ca.size(), cb.size()) && ca[i] == cb[i]; ++i) common = ca[i];
    return common;
}

} // namespace advlab
