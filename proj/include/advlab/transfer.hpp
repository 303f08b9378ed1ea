#pragma once

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstddef>
#include <exception>
#include <fstream>
#include <iterator>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include "advlab/attacks.hpp"
#include "advlab/classifier.hpp"
#include "advlab/dataset.hpp"
#include "advlab/error.hpp"

namespace advlab {

/// Outcome of one adversarial example (made on `source_model` with `attack`)
/// evaluated on one `target_model`.
struct TransferRecord {
    std::string item_id;
    std::size_t true_class = 0;
    std::string source_model;
    std::string attack;
    std::string target_model;
    std::vector<std::size_t> clean_top_k;  // target model's ranking of the clean input
    std::size_t adv_pred = 0;              // target model's class for the adversarial input
    std::optional<std::size_t> target_class;

    bool untargeted_success() const noexcept { return adv_pred != true_class; }
    bool targeted_success() const noexcept { return target_class && adv_pred == *target_class; }

    /// Misclassified into neither the true class nor the attack's target.
    bool untargeted_transfer() const noexcept {
        return adv_pred != true_class && (!target_class || adv_pred != *target_class);
    }

    friend bool operator==(const TransferRecord&, const TransferRecord&) = default;
};

/// Description of the first broken record invariant, if any.
inline std::optional<std::string> record_problem(const TransferRecord& r) {
    if (r.clean_top_k.empty()) return "clean_top_k is empty";
    if (r.clean_top_k.front() != r.true_class) {
        return "clean_top_k starts with " + std::to_string(r.clean_top_k.front()) + " but true_class is " +
               std::to_string(r.true_class);
    }
    std::set<std::size_t> seen(r.clean_top_k.begin(), r.clean_top_k.end());
    if (seen.size() != r.clean_top_k.size()) return "clean_top_k repeats a class";
    if (r.target_class && *r.target_class == r.true_class) return "target_class equals true_class";
    return std::nullopt;
}

/// Items every model classifies correctly. An empty result carries a warning.
inline LabeledDataset filter_commonly_correct(const LabeledDataset& data, const std::vector<TrainedModel>& models) {
    if (models.empty()) throw ContractError("filter_commonly_correct needs at least one model");
    std::vector<LabeledItem> kept;
    for (const auto& item : data.items()) {
        const bool all = std::all_of(models.begin(), models.end(), [&](const TrainedModel& m) {
            return m.predicted_class(item.input) == item.label;
        });
        if (all) kept.push_back(item);
    }
    LabeledDataset out(data.num_classes(), std::move(kept));
    if (out.empty()) {
        out.set_warning("no item is classified correctly by all " + std::to_string(models.size()) + " models");
    }
    return out;
}

struct StudyOptions {
    std::size_t top_k = 5;
    std::size_t jobs = 1;
};

/// White-box tally for one (source model, attack) pair.
struct WhiteBoxStat {
    std::string source_model;
    std::string attack;
    std::size_t attempted = 0;
    std::size_t successes = 0;
};

struct StudyResult {
    std::vector<TransferRecord> records;
    std::vector<WhiteBoxStat> white_box;
    std::size_t source_count = 0;
};

namespace detail {

[[noreturn]] inline void rethrow_annotated(const std::string& where) {
    try {
        throw;
    } catch (const AttackNumericError& e) {
        throw AttackNumericError(where + ": " + e.what(), e.iteration());
    } catch (const NumericError& e) {
        throw NumericError(where + ": " + e.what());
    } catch (const IndexError& e) {
        throw IndexError(where + ": " + e.what());
    } catch (const DimensionError& e) {
        throw DimensionError(where + ": " + e.what());
    } catch (const ValidationError& e) {
        throw ContractError(where + ": " + e.what());
    }
}

} // namespace detail

/// Attacks every item with every (source model, attack) pair. Each white-box
/// success is evaluated on every model and yields one record per target model.
/// Records come out ordered by (item, source model, attack, target model)
/// in input order, independent of `jobs`.
inline StudyResult run_transfer_study(const LabeledDataset& data, const std::vector<TrainedModel>& models,
                                      const std::vector<AttackConfig>& attacks, const StudyOptions& opt = {}) {
    if (models.size() < 2) throw ContractError("run_transfer_study needs at least two models");
    {
        std::set<std::string> names;
        for (const auto& m : models)
            if (!names.insert(m.name()).second) throw ContractError("duplicate model name '" + m.name() + "'");
        std::set<std::string> attack_names;
        for (const auto& a : attacks)
            if (!attack_names.insert(a.name).second) throw ContractError("duplicate attack name '" + a.name + "'");
    }
    const std::size_t depth = std::min(opt.top_k, data.num_classes());
    const std::size_t n_models = models.size();

    // Clean rankings, shared by every unit touching the item.
    std::vector<std::vector<std::vector<std::size_t>>> clean(data.size(), std::vector<std::vector<std::size_t>>(n_models));
    for (std::size_t i = 0; i < data.size(); ++i) {
        for (std::size_t m = 0; m < n_models; ++m) {
            const auto p = predict(models[m], data[i].input, depth);
            if (p.top() != data[i].label) {
                throw ContractError("item '" + data[i].id + "' is misclassified by '" + models[m].name() +
                                    "'; filter the dataset first");
            }
            for (const auto& cs : p.top_k) clean[i][m].push_back(cs.class_index);
        }
    }

    struct Unit {
        std::size_t item, source, attack;
    };
    std::vector<Unit> units;
    for (std::size_t i = 0; i < data.size(); ++i)
        for (std::size_t s = 0; s < n_models; ++s)
            for (std::size_t a = 0; a < attacks.size(); ++a) units.push_back({i, s, a});

    std::vector<std::vector<TransferRecord>> slots(units.size());
    std::vector<char> white_box_ok(units.size(), 0);

    const auto work = [&](std::size_t u) {
        const Unit& unit = units[u];
        const LabeledItem& item = data[unit.item];
        const TrainedModel& source = models[unit.source];
        AttackConfig attack = attacks[unit.attack];
        std::optional<std::size_t> target;
        if (attack.mode().targeted) {
            if (!attack.mode().target) attack.mode().target = (item.label + 1) % data.num_classes();
            target = attack.mode().target;
        }
        AttackOutcome outcome;
        try {
            outcome = run_attack(source, item.input, item.label, attack);
        } catch (const Error&) {
            detail::rethrow_annotated("item '" + item.id + "', model '" + source.name() + "', attack '" +
                                      attack.name + "'");
        }
        if (!outcome.success) return;
        white_box_ok[u] = 1;
        for (std::size_t t = 0; t < n_models; ++t) {
            TransferRecord r;
            r.item_id = item.id;
            r.true_class = item.label;
            r.source_model = source.name();
            r.attack = attack.name;
            r.target_model = models[t].name();
            r.clean_top_k = clean[unit.item][t];
            r.adv_pred = models[t].predicted_class(outcome.adversarial);
            r.target_class = target;
            slots[u].push_back(std::move(r));
        }
    };

    const std::size_t jobs = std::max<std::size_t>(1, std::min(opt.jobs, units.size()));
    if (jobs == 1) {
        for (std::size_t u = 0; u < units.size(); ++u) work(u);
    } else {
        std::atomic<std::size_t> next{0};
        std::exception_ptr failure;
        std::mutex failure_mutex;
        std::vector<std::thread> pool;
        for (std::size_t j = 0; j < jobs; ++j) {
            pool.emplace_back([&] {
                for (std::size_t u = next++; u < units.size(); u = next++) {
                    try {
                        work(u);
                    } catch (...) {
                        std::lock_guard lock(failure_mutex);
                        if (!failure) failure = std::current_exception();
                        next = units.size();
                    }
                }
            });
        }
        for (auto& t : pool) t.join();
        if (failure) std::rethrow_exception(failure);
    }

    StudyResult result;
    result.source_count = data.size();
    for (std::size_t s = 0; s < n_models; ++s)
        for (const auto& a : attacks) result.white_box.push_back({models[s].name(), a.name, data.size(), 0});
    for (std::size_t u = 0; u < units.size(); ++u) {
        if (white_box_ok[u]) ++result.white_box[units[u].source * attacks.size() + units[u].attack].successes;
        for (auto& r : slots[u]) result.records.push_back(std::move(r));
    }
    return result;
}

// ---------------------------------------------------------------------------
// Prediction log CSV
//
//   item_id,true_class,source_model,attack,target_model,clean_top_k,adv_pred,target_class
//
// clean_top_k is ';'-joined; target_class is empty for untargeted runs. UTF-8,
// LF line endings, no quoting, so text fields may not contain ',', '"', or
// line breaks. On input, two optional trailing columns
// `untargeted_success,targeted_success` (0/1) are accepted and checked.
// ---------------------------------------------------------------------------

inline constexpr std::string_view prediction_log_header =
    "item_id,true_class,source_model,attack,target_model,clean_top_k,adv_pred,target_class";
inline constexpr std::string_view prediction_log_flag_columns = ",untargeted_success,targeted_success";

namespace detail {

inline void check_text_field(const std::string& v, const char* what) {
    if (v.empty() || v.find_first_of(",\"\r\n") != std::string::npos) {
        throw ValidationError(std::string(what) + " '" + v + "' cannot be written to the prediction log");
    }
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = s.find(sep, start);
        out.push_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

inline std::size_t parse_index(std::string_view field, const char* what, std::size_t line) {
    std::size_t v = 0;
    const auto* end = field.data() + field.size();
    const auto [ptr, ec] = std::from_chars(field.data(), end, v);
    if (field.empty() || ec != std::errc{} || ptr != end) {
        throw ParseError("line " + std::to_string(line) + ": " + what + " '" + std::string(field) +
                             "' is not a non-negative integer",
                         line);
    }
    return v;
}

inline bool parse_flag(std::string_view field, const char* what, std::size_t line) {
    if (field == "1" || field == "true") return true;
    if (field == "0" || field == "false") return false;
    throw ParseError("line " + std::to_string(line) + ": " + what + " must be 0 or 1", line);
}

} // namespace detail

inline std::string format_prediction_log(const std::vector<TransferRecord>& records) {
    std::string out(prediction_log_header);
    out += '\n';
    for (const auto& r : records) {
        if (auto problem = record_problem(r)) throw ValidationError("record for item '" + r.item_id + "': " + *problem);
        detail::check_text_field(r.item_id, "item_id");
        detail::check_text_field(r.source_model, "source_model");
        detail::check_text_field(r.attack, "attack");
        detail::check_text_field(r.target_model, "target_model");
        out += r.item_id + ',' + std::to_string(r.true_class) + ',' + r.source_model + ',' + r.attack + ',' +
               r.target_model + ',';
        for (std::size_t i = 0; i < r.clean_top_k.size(); ++i) {
            if (i) out += ';';
            out += std::to_string(r.clean_top_k[i]);
        }
        out += ',' + std::to_string(r.adv_pred) + ',';
        if (r.target_class) out += std::to_string(*r.target_class);
        out += '\n';
    }
    return out;
}

inline std::vector<TransferRecord> parse_prediction_log(std::string_view text) {
    std::vector<TransferRecord> records;
    std::size_t line_no = 0;
    bool with_flags = false;
    std::size_t start = 0;
    while (start < text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(start, end - start);
        start = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line_no == 1) {
            if (line == prediction_log_header) continue;
            if (line == std::string(prediction_log_header) + std::string(prediction_log_flag_columns)) {
                with_flags = true;
                continue;
            }
            throw ParseError("line 1: unexpected header '" + std::string(line) + "'", 1);
        }
        if (line.empty()) {
            if (start >= text.size()) break;
            throw ParseError("line " + std::to_string(line_no) + ": empty row", line_no);
        }
        const auto f = detail::split(line, ',');
        const std::size_t expected = with_flags ? 10 : 8;
        if (f.size() != expected) {
            throw ParseError("line " + std::to_string(line_no) + ": expected " + std::to_string(expected) +
                                 " fields, got " + std::to_string(f.size()),
                             line_no);
        }
        TransferRecord r;
        r.item_id = std::string(f[0]);
        r.true_class = detail::parse_index(f[1], "true_class", line_no);
        r.source_model = std::string(f[2]);
        r.attack = std::string(f[3]);
        r.target_model = std::string(f[4]);
        if (r.item_id.empty() || r.source_model.empty() || r.attack.empty() || r.target_model.empty()) {
            throw ParseError("line " + std::to_string(line_no) + ": empty text field", line_no);
        }
        if (f[5].empty()) throw ParseError("line " + std::to_string(line_no) + ": clean_top_k is empty", line_no);
        for (auto c : detail::split(f[5], ';')) r.clean_top_k.push_back(detail::parse_index(c, "clean_top_k entry", line_no));
        r.adv_pred = detail::parse_index(f[6], "adv_pred", line_no);
        if (!f[7].empty()) r.target_class = detail::parse_index(f[7], "target_class", line_no);
        if (auto problem = record_problem(r)) {
            throw ConsistencyError("line " + std::to_string(line_no) + ": " + *problem, line_no);
        }
        if (with_flags) {
            const bool untargeted = detail::parse_flag(f[8], "untargeted_success", line_no);
            const bool targeted = detail::parse_flag(f[9], "targeted_success", line_no);
            if (untargeted != r.untargeted_success()) {
                throw ConsistencyError("line " + std::to_string(line_no) + ": untargeted_success=" +
                                           std::to_string(untargeted) + " contradicts adv_pred " +
                                           std::to_string(r.adv_pred) + " vs true_class " +
                                           std::to_string(r.true_class),
                                       line_no);
            }
            if (targeted != r.targeted_success()) {
                throw ConsistencyError("line " + std::to_string(line_no) + ": targeted_success=" +
                                           std::to_string(targeted) + " contradicts adv_pred and target_class",
                                       line_no);
            }
        }
        records.push_back(std::move(r));
    }
    if (line_no == 0) throw ParseError("line 1: missing header", 1);
    return records;
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LookupError("cannot open '" + path + "'");
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

inline void write_text_file(const std::string& path, std::string_view text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot open '" + path + "' for writing");
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw ValidationError("failed writing '" + path + "'");
}

inline std::vector<TransferRecord> ingest_prediction_log(const std::string& path) {
    return parse_prediction_log(read_text_file(path));
}

inline void export_prediction_log(const std::vector<TransferRecord>& records, const std::string& path) {
    write_text_file(path, format_prediction_log(records));
}

// ---------------------------------------------------------------------------
// Source list CSV: `item_id,true_class`, one row per filtered source item.
// Supplies the denominators (attempted sources, source images per collection)
// that a prediction log alone cannot.
// ---------------------------------------------------------------------------

using SourceIndex = std::map<std::string, std::size_t>;

inline SourceIndex source_index(const LabeledDataset& data) {
    SourceIndex idx;
    for (const auto& item : data.items()) idx.emplace(item.id, item.label);
    return idx;
}

inline std::string format_sources(const LabeledDataset& data) {
    std::string out = "item_id,true_class\n";
    for (const auto& item : data.items()) {
        detail::check_text_field(item.id, "item_id");
        out += item.id + ',' + std::to_string(item.label) + '\n';
    }
    return out;
}

inline SourceIndex parse_sources(std::string_view text) {
    SourceIndex idx;
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start < text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(start, end - start);
        start = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line_no == 1) {
            if (line != "item_id,true_class") throw ParseError("line 1: unexpected sources header", 1);
            continue;
        }
        if (line.empty()) continue;
        const auto f = detail::split(line, ',');
        if (f.size() != 2) throw ParseError("line " + std::to_string(line_no) + ": expected 2 fields", line_no);
        if (!idx.emplace(std::string(f[0]), detail::parse_index(f[1], "true_class", line_no)).second) {
            throw ConsistencyError("line " + std::to_string(line_no) + ": duplicate item '" + std::string(f[0]) + "'",
                                   line_no);
        }
    }
    return idx;
}

} // namespace advlab
