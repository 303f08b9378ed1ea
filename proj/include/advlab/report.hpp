#pragma once

// Report renderers. CSV carries percentages rounded to one decimal; JSON
// carries the exact counts they were computed from.

#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "advlab/metrics.hpp"

namespace advlab {

/// "%.1f" of a percentage, or an em dash when undefined.
inline std::string format_pct(const std::optional<double>& pct) {
    if (!pct) return "\xE2\x80\x94";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f", *pct);
    return buf;
}

inline nlohmann::ordered_json optional_json(const std::optional<double>& v) {
    return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

// Transfer matrix, long format for plotting:
//   attack,mode,source_model,target_model,count,attempted,percent
inline std::string matrix_csv(const std::vector<TransferMatrix>& matrices) {
    std::string out = "attack,mode,source_model,target_model,count,attempted,percent\n";
    for (const auto& m : matrices) {
        for (std::size_t s = 0; s < m.models.size(); ++s) {
            for (std::size_t t = 0; t < m.models.size(); ++t) {
                const auto& c = m.cell(s, t);
                out += m.attack + ',' + mode_name(m.mode) + ',' + m.models[s] + ',' + m.models[t] + ',' +
                       std::to_string(c.count) + ',' + std::to_string(c.attempted) + ',' + format_pct(c.percent()) +
                       '\n';
            }
        }
    }
    return out;
}

inline nlohmann::ordered_json matrix_json(const std::vector<TransferMatrix>& matrices) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& m : matrices) {
        nlohmann::ordered_json j;
        j["attack"] = m.attack;
        j["mode"] = mode_name(m.mode);
        j["models"] = m.models;
        auto counts = nlohmann::ordered_json::array();
        auto attempted = nlohmann::ordered_json::array();
        for (const auto& row : m.cells) {
            auto cr = nlohmann::ordered_json::array();
            auto ar = nlohmann::ordered_json::array();
            for (const auto& c : row) {
                cr.push_back(c.count);
                ar.push_back(c.attempted);
            }
            counts.push_back(std::move(cr));
            attempted.push_back(std::move(ar));
        }
        j["counts"] = std::move(counts);
        j["attempted"] = std::move(attempted);
        arr.push_back(std::move(j));
    }
    return arr;
}

// Per-class top-K table:
//   true_class,adv_examples,top2_count,top2_pct,...,topK_count,topK_pct
// followed by one "all" row. Percentages are of the class's adversarial examples.
inline std::string topk_csv(const std::vector<TopKResult>& results) {
    std::string out = "true_class,adv_examples";
    for (const auto& r : results) {
        const std::string k = std::to_string(r.k);
        out += ",top" + k + "_count,top" + k + "_pct";
    }
    out += '\n';
    if (results.empty()) return out;
    for (const auto& [cls, tally] : results.front().per_class) {
        out += std::to_string(cls) + ',' + std::to_string(tally.total);
        for (const auto& r : results) {
            const auto& t = r.per_class.at(cls);
            out += ',' + std::to_string(t.in_top_k) + ',' + format_pct(percentage(t.in_top_k, t.total));
        }
        out += '\n';
    }
    out += "all," + std::to_string(results.front().overall.total);
    for (const auto& r : results) {
        out += ',' + std::to_string(r.overall.in_top_k) + ',' + format_pct(percentage(r.overall.in_top_k, r.overall.total));
    }
    out += '\n';
    return out;
}

inline nlohmann::ordered_json topk_json(const std::vector<TopKResult>& results) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& r : results) {
        nlohmann::ordered_json j;
        j["k"] = r.k;
        j["in_top_k"] = r.overall.in_top_k;
        j["total"] = r.overall.total;
        j["rate"] = optional_json(r.overall.rate());
        auto per = nlohmann::ordered_json::array();
        for (const auto& [cls, t] : r.per_class) {
            per.push_back({{"true_class", cls}, {"in_top_k", t.in_top_k}, {"total", t.total}});
        }
        j["per_class"] = std::move(per);
        arr.push_back(std::move(j));
    }
    return arr;
}

// Collection table, one row per collection:
//   hierarchy,collection,classes_in_collection,source_images_in_collection,
//   adv_examples_from_collection,intra_count,intra_pct,top3_pct,top5_pct
inline std::string collection_csv(const std::vector<CollectionReportRow>& rows, const std::vector<std::size_t>& ks = {3, 5}) {
    std::string out =
        "hierarchy,collection,classes_in_collection,source_images_in_collection,adv_examples_from_collection,"
        "intra_count,intra_pct";
    for (std::size_t k : ks) out += ",top" + std::to_string(k) + "_pct";
    out += '\n';
    for (const auto& r : rows) {
        out += r.path + ',' + r.name + ',' + std::to_string(r.classes_in_collection) + ',' +
               std::to_string(r.source_images_in_collection) + ',' + std::to_string(r.adv_examples_from_collection) +
               ',' + std::to_string(r.intra_count) + ',' + format_pct(r.intra_pct) + (r.intra_pct ? "%" : "");
        for (const auto& t : r.topk) out += ',' + format_pct(t.pct) + (t.pct ? "%" : "");
        out += '\n';
    }
    return out;
}

inline nlohmann::ordered_json collection_json(const std::vector<CollectionReportRow>& rows) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& r : rows) {
        nlohmann::ordered_json j;
        j["hierarchy"] = r.path;
        j["collection"] = r.name;
        j["classes_in_collection"] = r.classes_in_collection;
        j["source_images_in_collection"] = r.source_images_in_collection;
        j["adv_examples_from_collection"] = r.adv_examples_from_collection;
        j["intra_count"] = r.intra_count;
        auto topk = nlohmann::ordered_json::object();
        for (const auto& t : r.topk) topk["top" + std::to_string(t.k)] = t.count;
        j["topk_counts"] = std::move(topk);
        arr.push_back(std::move(j));
    }
    return arr;
}

} // namespace advlab
