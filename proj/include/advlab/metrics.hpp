#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "advlab/error.hpp"
#include "advlab/hierarchy.hpp"
#include "advlab/transfer.hpp"

namespace advlab {

/// Percentage 100 * num / den, absent for an empty denominator.
inline std::optional<double> percentage(std::size_t num, std::size_t den) {
    if (den == 0) return std::nullopt;
    return 100.0 * static_cast<double>(num) / static_cast<double>(den);
}

// ---------------------------------------------------------------------------
// Transfer matrices
// ---------------------------------------------------------------------------

enum class MatrixMode { Untargeted, Targeted };

inline const char* mode_name(MatrixMode m) { return m == MatrixMode::Untargeted ? "untargeted" : "targeted"; }

struct MatrixCell {
    std::size_t count = 0;
    std::size_t attempted = 0;

    std::optional<double> percent() const { return percentage(count, attempted); }
};

/// Rows are attacking (source) models, columns are evaluated (target) models.
struct TransferMatrix {
    std::string attack;
    MatrixMode mode = MatrixMode::Untargeted;
    std::vector<std::string> models;
    std::vector<std::vector<MatrixCell>> cells;

    const MatrixCell& cell(std::size_t source, std::size_t target) const { return cells.at(source).at(target); }
};

/// Does this record count as a success for a matrix in `mode`?
inline bool counts_as_success(const TransferRecord& r, MatrixMode mode) {
    return mode == MatrixMode::Untargeted ? r.untargeted_transfer() : r.targeted_success();
}

/// Models in order of first appearance as source or target.
inline std::vector<std::string> model_order(const std::vector<TransferRecord>& records) {
    std::vector<std::string> order;
    std::set<std::string> seen;
    for (const auto& r : records) {
        for (const std::string* name : {&r.source_model, &r.target_model})
            if (seen.insert(*name).second) order.push_back(*name);
    }
    return order;
}

/// Attack names in order of first appearance.
inline std::vector<std::string> attack_order(const std::vector<TransferRecord>& records) {
    std::vector<std::string> order;
    std::set<std::string> seen;
    for (const auto& r : records)
        if (seen.insert(r.attack).second) order.push_back(r.attack);
    return order;
}

/// Success counts per (source, target) for one attack.
///
/// `attempted` is the number of source images each source model attacked.
/// Without it, the number of distinct items present in the attack's records
/// is used, which is all a bare log can tell.
inline TransferMatrix transfer_matrix(const std::vector<TransferRecord>& records, const std::string& attack,
                                      MatrixMode mode, std::optional<std::size_t> attempted = std::nullopt,
                                      std::vector<std::string> models = {}) {
    std::vector<const TransferRecord*> mine;
    std::set<std::string> items;
    for (const auto& r : records) {
        if (r.attack != attack) continue;
        mine.push_back(&r);
        items.insert(r.item_id);
    }
    if (mine.empty()) throw LookupError("no records for attack '" + attack + "'");
    if (models.empty()) models = model_order(records);
    std::map<std::string, std::size_t> pos;
    for (std::size_t i = 0; i < models.size(); ++i) pos.emplace(models[i], i);

    TransferMatrix m;
    m.attack = attack;
    m.mode = mode;
    m.models = models;
    const std::size_t denom = attempted.value_or(items.size());
    m.cells.assign(models.size(), std::vector<MatrixCell>(models.size(), MatrixCell{0, denom}));
    for (const TransferRecord* r : mine) {
        const auto s = pos.find(r->source_model);
        const auto t = pos.find(r->target_model);
        if (s == pos.end() || t == pos.end()) {
            throw LookupError("record model '" + (s == pos.end() ? r->source_model : r->target_model) +
                              "' missing from the model order");
        }
        if (counts_as_success(*r, mode)) ++m.cells[s->second][t->second].count;
    }
    for (const auto& row : m.cells) {
        for (const auto& c : row) {
            if (c.count > c.attempted) {
                throw ContractError("matrix for '" + attack + "': " + std::to_string(c.count) +
                                    " successes exceed " + std::to_string(c.attempted) + " attempted sources");
            }
        }
    }
    return m;
}

// ---------------------------------------------------------------------------
// Top-K misclassification
// ---------------------------------------------------------------------------

struct TopKTally {
    std::size_t in_top_k = 0;
    std::size_t total = 0;

    std::optional<double> rate() const {
        if (total == 0) return std::nullopt;
        return static_cast<double>(in_top_k) / static_cast<double>(total);
    }
};

struct TopKResult {
    std::size_t k = 0;
    TopKTally overall;
    std::map<std::size_t, TopKTally> per_class;  // keyed by true class
};

inline bool in_top_k(const TransferRecord& r, std::size_t k) {
    const auto end = r.clean_top_k.begin() + static_cast<std::ptrdiff_t>(std::min(k, r.clean_top_k.size()));
    return std::find(r.clean_top_k.begin(), end, r.adv_pred) != end;
}

/// Fraction of untargeted transfers whose adversarial class is among the
/// first K classes the target model ranked for the clean input.
inline TopKResult topk_misclassification(const std::vector<TransferRecord>& records, std::size_t k) {
    if (k < 2) throw ContractError("top-K analysis needs K >= 2, got " + std::to_string(k));
    TopKResult out;
    out.k = k;
    for (const auto& r : records) {
        if (!r.untargeted_transfer()) continue;
        if (r.clean_top_k.size() < k) {
            throw ContractError("K=" + std::to_string(k) + " exceeds the captured top-K depth " +
                                std::to_string(r.clean_top_k.size()) + " of item '" + r.item_id + "'");
        }
        const bool hit = in_top_k(r, k);
        auto& cls = out.per_class[r.true_class];
        ++cls.total;
        ++out.overall.total;
        if (hit) {
            ++cls.in_top_k;
            ++out.overall.in_top_k;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Per-collection report
// ---------------------------------------------------------------------------

struct TopKCount {
    std::size_t k = 0;
    std::size_t count = 0;
    std::optional<double> pct;

    friend bool operator==(const TopKCount&, const TopKCount&) = default;
};

struct CollectionReportRow {
    std::size_t node = 0;
    std::string path;
    std::string name;
    std::size_t classes_in_collection = 0;
    std::size_t source_images_in_collection = 0;
    std::size_t adv_examples_from_collection = 0;
    std::size_t intra_count = 0;
    std::optional<double> intra_pct;
    std::vector<TopKCount> topk;

    friend bool operator==(const CollectionReportRow&, const CollectionReportRow&) = default;
};

/// Orders hierarchy labels segment by segment numerically; "" (the root) first.
inline bool path_less(const std::string& a, const std::string& b) {
    const auto pa = detail::split(a, '.');
    const auto pb = detail::split(b, '.');
    if (a.empty() || b.empty()) return a.empty() && !b.empty();
    const std::size_t n = std::min(pa.size(), pb.size());
    for (std::size_t i = 0; i < n; ++i) {
        if (pa[i] == pb[i]) continue;
        if (pa[i].size() != pb[i].size()) return pa[i].size() < pb[i].size();
        return pa[i] < pb[i];
    }
    return pa.size() < pb.size();
}

struct CollectionReportOptions {
    std::vector<std::size_t> ks{3, 5};
    std::optional<SourceIndex> sources;  // filtered source items; defaults to the items in the records
    std::string root_name = "All";
};

/// One row per collection: adversarial examples originating from its classes,
/// how many of them land in a class of the same collection, and top-K rates.
/// Rows are ordered by hierarchy path. An empty `collections` means every node.
inline std::vector<CollectionReportRow> collection_report(const std::vector<TransferRecord>& records,
                                                          const HierarchyTree& tree,
                                                          std::vector<std::size_t> collections = {},
                                                          const CollectionReportOptions& opt = {}) {
    if (collections.empty()) {
        for (std::size_t i = 0; i < tree.size(); ++i) collections.push_back(i);
    }
    for (std::size_t id : collections) tree.node(id);
    for (std::size_t k : opt.ks)
        if (k < 1) throw ContractError("top-K columns need K >= 1");

    SourceIndex sources;
    if (opt.sources) {
        sources = *opt.sources;
    } else {
        for (const auto& r : records) sources.emplace(r.item_id, r.true_class);
    }
    for (const auto& [id, cls] : sources) tree.check_class(cls);

    std::vector<const TransferRecord*> adv;
    for (const auto& r : records) {
        tree.check_class(r.true_class);
        if (!r.untargeted_transfer()) continue;
        tree.check_class(r.adv_pred);
        for (std::size_t k : opt.ks) {
            if (r.clean_top_k.size() < k) {
                throw ContractError("K=" + std::to_string(k) + " exceeds the captured top-K depth " +
                                    std::to_string(r.clean_top_k.size()) + " of item '" + r.item_id + "'");
            }
        }
        adv.push_back(&r);
    }

    std::vector<CollectionReportRow> rows;
    for (std::size_t id : collections) {
        const HierarchyNode& n = tree.node(id);
        CollectionReportRow row;
        row.node = id;
        row.path = n.path;
        row.name = id == HierarchyTree::root ? opt.root_name : n.name;
        row.classes_in_collection = n.class_set.size();
        for (const auto& [item, cls] : sources)
            if (tree.contains(id, cls)) ++row.source_images_in_collection;
        std::vector<std::size_t> topk_counts(opt.ks.size(), 0);
        for (const TransferRecord* r : adv) {
            if (!tree.contains(id, r->true_class)) continue;
            ++row.adv_examples_from_collection;
            if (tree.contains(id, r->adv_pred)) ++row.intra_count;
            for (std::size_t i = 0; i < opt.ks.size(); ++i)
                if (in_top_k(*r, opt.ks[i])) ++topk_counts[i];
        }
        row.intra_pct = percentage(row.intra_count, row.adv_examples_from_collection);
        for (std::size_t i = 0; i < opt.ks.size(); ++i) {
            row.topk.push_back({opt.ks[i], topk_counts[i], percentage(topk_counts[i], row.adv_examples_from_collection)});
        }
        rows.push_back(std::move(row));
    }
    std::stable_sort(rows.begin(), rows.end(),
                     [](const CollectionReportRow& a, const CollectionReportRow& b) { return path_less(a.path, b.path); });
    return rows;
}

// ---------------------------------------------------------------------------
// Record selection (per attack / per model breakdowns)
// ---------------------------------------------------------------------------

struct RecordFilter {
    std::optional<std::string> attack;
    std::optional<std::string> source_model;
    std::optional<std::string> target_model;
    bool cross_model_only = false;  // drop records where source == target
};

inline std::vector<TransferRecord> filter_records(const std::vector<TransferRecord>& records, const RecordFilter& f) {
    std::vector<TransferRecord> out;
    for (const auto& r : records) {
        if (f.attack && r.attack != *f.attack) continue;
        if (f.source_model && r.source_model != *f.source_model) continue;
        if (f.target_model && r.target_model != *f.target_model) continue;
        if (f.cross_model_only && r.source_model == r.target_model) continue;
        out.push_back(r);
    }
    return out;
}

} // namespace advlab
