#pragma once

// Brute-force reference implementations used to cross-check the library.
// They share no code with the metric or hierarchy modules: trees are read
// straight from JSON, and every count is a fresh scan over the records.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "advlab/random.hpp"
#include "advlab/transfer.hpp"

namespace oracle {

struct Collection {
    std::string path;
    std::string name;
    std::set<std::size_t> classes;
    std::size_t depth = 0;
};

/// Collections of a hierarchy JSON document with their full class sets. The
/// root holds all `num_classes` classes.
inline std::vector<Collection> collections(const nlohmann::json& root, std::size_t num_classes) {
    std::vector<Collection> out;
    std::function<std::set<std::size_t>(const nlohmann::json&, std::size_t)> walk = [&](const nlohmann::json& j,
                                                                                       std::size_t depth) {
        const std::size_t slot = out.size();
        out.push_back({j.value("path", ""), j["name"].get<std::string>(), {}, depth});
        std::set<std::size_t> mine;
        if (j.contains("classes"))
            for (const auto& c : j["classes"]) mine.insert(c.get<std::size_t>());
        if (j.contains("children"))
            for (const auto& ch : j["children"]) {
                const auto sub = walk(ch, depth + 1);
                mine.insert(sub.begin(), sub.end());
            }
        out[slot].classes = mine;
        return mine;
    };
    walk(root, 0);
    for (std::size_t c = 0; c < num_classes; ++c) out[0].classes.insert(c);
    return out;
}

inline bool untargeted_transfer(const advlab::TransferRecord& r) {
    return r.adv_pred != r.true_class && !(r.target_class && *r.target_class == r.adv_pred);
}

inline bool in_first_k(const advlab::TransferRecord& r, std::size_t k) {
    for (std::size_t i = 0; i < k && i < r.clean_top_k.size(); ++i)
        if (r.clean_top_k[i] == r.adv_pred) return true;
    return false;
}

/// (source, target) -> successes for one attack.
inline std::map<std::pair<std::string, std::string>, std::size_t> matrix_counts(
    const std::vector<advlab::TransferRecord>& records, const std::string& attack, bool targeted) {
    std::map<std::pair<std::string, std::string>, std::size_t> out;
    for (const auto& r : records) {
        if (r.attack != attack) continue;
        const bool ok = targeted ? (r.target_class && r.adv_pred == *r.target_class) : untargeted_transfer(r);
        if (ok) ++out[{r.source_model, r.target_model}];
    }
    return out;
}

struct TopK {
    std::size_t hits = 0;
    std::size_t total = 0;
    std::map<std::size_t, std::pair<std::size_t, std::size_t>> per_class;  // class -> (hits, total)
};

inline TopK topk(const std::vector<advlab::TransferRecord>& records, std::size_t k) {
    TopK out;
    for (const auto& r : records) {
        if (!untargeted_transfer(r)) continue;
        const bool hit = in_first_k(r, k);
        ++out.total;
        out.hits += hit;
        auto& pc = out.per_class[r.true_class];
        ++pc.second;
        pc.first += hit;
    }
    return out;
}

struct Row {
    std::string path;
    std::size_t classes = 0;
    std::size_t sources = 0;
    std::size_t adversarial = 0;
    std::size_t intra = 0;
    std::map<std::size_t, std::size_t> topk;
};

inline std::vector<Row> collection_rows(const std::vector<advlab::TransferRecord>& records,
                                        const std::vector<Collection>& tree,
                                        const std::map<std::string, std::size_t>& sources,
                                        const std::vector<std::size_t>& ks) {
    std::vector<Row> rows;
    for (const auto& c : tree) {
        Row row{c.path, c.classes.size(), 0, 0, 0, {}};
        for (const auto& [id, cls] : sources) row.sources += c.classes.count(cls);
        for (const auto& r : records) {
            if (!untargeted_transfer(r) || !c.classes.count(r.true_class)) continue;
            ++row.adversarial;
            row.intra += c.classes.count(r.adv_pred);
            for (std::size_t k : ks) row.topk[k] += in_first_k(r, k);
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

/// Probability that a uniformly random wrong class shares a collection with
/// the true class, averaged over the untargeted transfers in `records`.
/// Baseline for "adversarial classes are semantically close".
inline double proportional_intra_baseline(const std::vector<advlab::TransferRecord>& records,
                                          const std::vector<Collection>& collections_below_root,
                                          std::size_t num_classes) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& r : records) {
        if (!untargeted_transfer(r)) continue;
        for (const auto& c : collections_below_root) {
            if (!c.classes.count(r.true_class)) continue;
            sum += static_cast<double>(c.classes.size() - 1) / static_cast<double>(num_classes - 1);
            ++n;
        }
    }
    return n ? sum / static_cast<double>(n) : 0.0;
}

/// Parses "12.3", "12.3%" or an em dash (nullopt).
inline std::optional<double> parse_pct(std::string s) {
    if (s == "\xE2\x80\x94") return std::nullopt;
    if (!s.empty() && s.back() == '%') s.pop_back();
    return std::stod(s);
}

inline std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> f;
        std::string cell;
        std::istringstream ls(line);
        while (std::getline(ls, cell, ',')) f.push_back(cell);
        if (!line.empty() && line.back() == ',') f.emplace_back();
        rows.push_back(std::move(f));
    }
    return rows;
}

/// Random log over `num_classes` classes: every record obeys the log
/// invariants (clean_top_k starts with the true class, distinct entries, target
/// differs from the true class).
struct LogShape {
    std::size_t num_classes = 8;
    std::size_t items = 200;
    std::vector<std::string> models{"alpha", "beta", "gamma"};
    std::vector<std::string> attacks{"PGD", "CW"};
    std::set<std::string> targeted_attacks;
    std::size_t depth = 5;
    double success_rate = 0.6;
};

inline std::vector<advlab::TransferRecord> random_log(advlab::SplitMix64& rng, const LogShape& shape,
                                                      std::map<std::string, std::size_t>* sources = nullptr) {
    std::vector<advlab::TransferRecord> out;
    for (std::size_t i = 0; i < shape.items; ++i) {
        const std::string id = "item-" + std::to_string(i);
        const std::size_t k = rng.below(shape.num_classes);
        if (sources) (*sources)[id] = k;
        // Clean rankings per target model.
        std::vector<std::vector<std::size_t>> ranks;
        for (std::size_t t = 0; t < shape.models.size(); ++t) {
            std::vector<std::size_t> perm;
            for (std::size_t c = 0; c < shape.num_classes; ++c)
                if (c != k) perm.push_back(c);
            rng.shuffle(perm);
            perm.insert(perm.begin(), k);
            perm.resize(std::min(shape.depth, shape.num_classes));
            ranks.push_back(perm);
        }
        for (const auto& source : shape.models) {
            for (const auto& attack : shape.attacks) {
                if (rng.uniform() > shape.success_rate) continue;
                std::optional<std::size_t> target;
                if (shape.targeted_attacks.count(attack)) target = (k + 1 + rng.below(shape.num_classes - 1)) % shape.num_classes;
                for (std::size_t t = 0; t < shape.models.size(); ++t) {
                    advlab::TransferRecord r;
                    r.item_id = id;
                    r.true_class = k;
                    r.source_model = source;
                    r.attack = attack;
                    r.target_model = shape.models[t];
                    r.clean_top_k = ranks[t];
                    const double u = rng.uniform();
                    if (u < 0.3) r.adv_pred = k;
                    else if (u < 0.7) r.adv_pred = ranks[t][rng.below(ranks[t].size())];
                    else r.adv_pred = rng.below(shape.num_classes);
                    if (target && rng.uniform() < 0.3) r.adv_pred = *target;
                    r.target_class = target;
                    out.push_back(std::move(r));
                }
            }
        }
    }
    return out;
}

} // namespace oracle
