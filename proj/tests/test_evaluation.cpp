#include <cmath>
#include <map>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "advlab/fuzz.hpp"
#include "advlab/metrics.hpp"
#include "advlab/report.hpp"
#include "advlab/synthetic.hpp"
#include "advlab/transfer.hpp"
#include "support/oracles.hpp"

using namespace advlab;

namespace {

const std::string data_dir = ADVLAB_DATA_DIR;

struct Zoo {
    LabeledDataset eval;
    std::vector<TrainedModel> models;
};

const Zoo& zoo() {
    static const Zoo z = [] {
        HierarchicalGaussianSpec spec;
        spec.train_per_class = 25;
        spec.eval_per_class = 4;
        const SyntheticData data = generate_hierarchical_gaussian(spec, 5);
        Zoo out{data.eval, {}};
        const std::vector<std::pair<std::string, std::vector<std::size_t>>> arch{
            {"narrow", {8}}, {"wide", {24}}, {"deep", {12, 8}}};
        std::uint64_t seed = 40;
        for (const auto& [name, hidden] : arch) {
            out.models.push_back(train({name, data.train.input_dim(), hidden, data.train.num_classes(), ++seed},
                                       data.train, {25, 0.1, 16}));
        }
        return out;
    }();
    return z;
}

std::vector<AttackConfig> quick_attacks() {
    PgdConfig pgd;
    pgd.epsilon = 0.06;
    pgd.max_iters = 20;
    CwConfig cw;
    cw.max_iters = 150;
    cw.step_size = 0.02;
    return {AttackConfig::pgd(pgd), AttackConfig::cw(cw)};
}

TransferRecord record(std::string id, std::size_t k, std::vector<std::size_t> top, std::size_t adv,
                      std::optional<std::size_t> target = std::nullopt) {
    return {std::move(id), k, "a", "PGD", "b", std::move(top), adv, target};
}

oracle::LogShape fixture_shape() {
    oracle::LogShape s;
    s.items = 150;
    s.targeted_attacks = {"CW"};
    return s;
}

} // namespace

TEST(Study, FilterKeepsOnlyCommonlyCorrectItems) {
    const Zoo& z = zoo();
    const LabeledDataset kept = filter_commonly_correct(z.eval, z.models);
    std::size_t expected = 0;
    for (const auto& item : z.eval.items()) {
        bool all = true;
        for (const auto& m : z.models) all = all && kernels::argmax(m.logits(item.input).data()) == item.label;
        expected += all;
    }
    EXPECT_EQ(kept.size(), expected);
    EXPECT_GT(kept.size(), 0u);
    EXPECT_FALSE(kept.warning());
}

TEST(Study, EmptyFilterCarriesAWarning) {
    const Zoo& z = zoo();
    // Relabel everything to a class no model predicts for it.
    std::vector<LabeledItem> wrong;
    for (const auto& item : z.eval.items()) {
        LabeledItem w = item;
        w.label = (z.models[0].predicted_class(item.input) + 1) % z.eval.num_classes();
        wrong.push_back(std::move(w));
    }
    const LabeledDataset kept = filter_commonly_correct(LabeledDataset(z.eval.num_classes(), wrong), z.models);
    EXPECT_TRUE(kept.empty());
    ASSERT_TRUE(kept.warning());
    EXPECT_NE(kept.warning()->find("3 models"), std::string::npos);
}

TEST(Study, RecordsMatchADirectRecount) {
    const Zoo& z = zoo();
    const LabeledDataset sources = filter_commonly_correct(z.eval, z.models);
    const auto attacks = quick_attacks();
    const StudyResult study = run_transfer_study(sources, z.models, attacks, {5, 1});

    std::vector<TransferRecord> expected;
    for (const auto& item : sources.items()) {
        for (const auto& source : z.models) {
            for (const auto& attack : attacks) {
                const AttackOutcome out = run_attack(source, item.input, item.label, attack);
                if (!out.success) continue;
                for (const auto& target : z.models) {
                    TransferRecord r{item.id, item.label, source.name(), attack.name, target.name(), {}, 0, {}};
                    for (const auto& s : rank_classes(target.logits(item.input), 5)) r.clean_top_k.push_back(s.class_index);
                    r.adv_pred = kernels::argmax(target.logits(out.adversarial).data());
                    expected.push_back(std::move(r));
                }
            }
        }
    }
    EXPECT_EQ(format_prediction_log(study.records), format_prediction_log(expected));
    EXPECT_EQ(study.source_count, sources.size());

    std::size_t white_box = 0;
    for (const auto& w : study.white_box) white_box += w.successes;
    EXPECT_EQ(white_box * z.models.size(), study.records.size());
    for (const auto& r : study.records)
        if (r.source_model == r.target_model) {
            EXPECT_NE(r.adv_pred, r.true_class) << r.item_id;
        }
}

TEST(Study, ParallelRunIsIdenticalToSerial) {
    const Zoo& z = zoo();
    const LabeledDataset sources = filter_commonly_correct(z.eval, z.models);
    const auto serial = run_transfer_study(sources, z.models, quick_attacks(), {5, 1});
    const auto parallel = run_transfer_study(sources, z.models, quick_attacks(), {5, 3});
    EXPECT_EQ(format_prediction_log(serial.records), format_prediction_log(parallel.records));
}

TEST(Study, TargetedAnyUsesTheNextClass) {
    const Zoo& z = zoo();
    const LabeledDataset sources = filter_commonly_correct(z.eval, z.models);
    PgdConfig pgd;
    pgd.epsilon = 0.1;
    pgd.max_iters = 30;
    pgd.mode = AttackMode::targeted_any();
    const auto study = run_transfer_study(sources, z.models, {AttackConfig::pgd(pgd)});
    ASSERT_FALSE(study.records.empty());
    for (const auto& r : study.records) EXPECT_EQ(r.target_class, (r.true_class + 1) % 8);
}

TEST(Study, NeedsTwoDistinctModels) {
    const Zoo& z = zoo();
    EXPECT_THROW(run_transfer_study(z.eval, {z.models[0]}, quick_attacks()), ContractError);
    EXPECT_THROW(run_transfer_study(z.eval, {z.models[0], z.models[0]}, quick_attacks()), ContractError);
}

TEST(PredictionLog, RoundTripIsByteStable) {
    SplitMix64 rng(51);
    const auto records = oracle::random_log(rng, fixture_shape());
    const std::string text = format_prediction_log(records);
    const auto back = parse_prediction_log(text);
    ASSERT_EQ(back.size(), records.size());
    EXPECT_EQ(format_prediction_log(back), text);
    EXPECT_EQ(text.substr(0, text.find('\n')), prediction_log_header);
}

TEST(PredictionLog, ErrorsCarryTheLineNumber) {
    const std::string header = std::string(prediction_log_header) + "\n";
    const std::string good = "i1,0,a,PGD,b,0;1;2,1,\n";
    try {
        parse_prediction_log(header + good + "i2,0,a,PGD,b,0;x;2,1,\n");
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.position(), 3u);
    }
    try {
        parse_prediction_log(header + good + good + "i3,1,a,PGD,b,0;1;2,1,\n");  // clean_top_k[0] != true class
        FAIL() << "expected ConsistencyError";
    } catch (const ConsistencyError& e) {
        EXPECT_EQ(e.line(), 4u);
    }
    EXPECT_THROW(parse_prediction_log(header + "i1,0,a,PGD,b,0;1,1\n"), ParseError);
    EXPECT_THROW(parse_prediction_log("id,class\n"), ParseError);
    EXPECT_THROW(parse_prediction_log(header + "i1,0,a,PGD,b,0;0,1,\n"), ConsistencyError);
    EXPECT_THROW(parse_prediction_log(header + "i1,0,a,PGD,b,0;1,1,0\n"), ConsistencyError);
}

TEST(PredictionLog, OptionalFlagColumnsAreChecked) {
    const std::string header = std::string(prediction_log_header) + std::string(prediction_log_flag_columns) + "\n";
    const auto ok = parse_prediction_log(header + "i1,0,a,CW,b,0;1;2,2,2,1,1\n");
    ASSERT_EQ(ok.size(), 1u);
    EXPECT_TRUE(ok[0].targeted_success());
    try {
        parse_prediction_log(header + "i1,0,a,CW,b,0;1;2,0,2,1,0\n");
        FAIL() << "expected ConsistencyError";
    } catch (const ConsistencyError& e) {
        EXPECT_EQ(e.line(), 2u);
    }
    EXPECT_THROW(parse_prediction_log(header + "i1,0,a,CW,b,0;1;2,2,2,1,yes\n"), ParseError);
}

TEST(PredictionLog, UnwritableFieldsAreRejected) {
    auto r = record("has,comma", 0, {0, 1}, 1);
    EXPECT_THROW(format_prediction_log({r}), ValidationError);
    r.item_id = "ok";
    r.clean_top_k = {1, 0};
    EXPECT_THROW(format_prediction_log({r}), ValidationError);
}

TEST(Sources, RoundTripAndDuplicates) {
    const auto idx = parse_sources("item_id,true_class\na,3\nb,0\n");
    EXPECT_EQ(idx, (SourceIndex{{"a", 3}, {"b", 0}}));
    EXPECT_THROW(parse_sources("item_id,true_class\na,3\na,1\n"), ConsistencyError);
    EXPECT_THROW(parse_sources("id\n"), ParseError);
}

TEST(Metrics, TransferDefinitionExcludesTargetHits) {
    EXPECT_TRUE(record("x", 0, {0, 1}, 1).untargeted_transfer());
    EXPECT_FALSE(record("x", 0, {0, 1}, 0).untargeted_transfer());
    EXPECT_FALSE(record("x", 0, {0, 1}, 2, 2).untargeted_transfer());
    EXPECT_TRUE(record("x", 0, {0, 1}, 1, 2).untargeted_transfer());
}

TEST(Metrics, MatricesMatchTheOracle) {
    SplitMix64 rng(52);
    SourceIndex sources;
    const auto records = oracle::random_log(rng, fixture_shape(), &sources);
    for (const std::string attack : {"PGD", "CW"}) {
        for (const bool targeted : {false, true}) {
            const auto m = transfer_matrix(records, attack, targeted ? MatrixMode::Targeted : MatrixMode::Untargeted,
                                           sources.size());
            const auto want = oracle::matrix_counts(records, attack, targeted);
            for (std::size_t s = 0; s < m.models.size(); ++s) {
                for (std::size_t t = 0; t < m.models.size(); ++t) {
                    const auto it = want.find({m.models[s], m.models[t]});
                    EXPECT_EQ(m.cell(s, t).count, it == want.end() ? 0u : it->second);
                    EXPECT_EQ(m.cell(s, t).attempted, sources.size());
                }
            }
        }
    }
    EXPECT_THROW(transfer_matrix(records, "FGSM", MatrixMode::Untargeted), LookupError);
}

TEST(Metrics, TopKMatchesTheOracleAndGrowsWithK) {
    SplitMix64 rng(53);
    const auto records = oracle::random_log(rng, fixture_shape());
    std::size_t previous = 0;
    for (std::size_t k = 2; k <= 5; ++k) {
        const auto got = topk_misclassification(records, k);
        const auto want = oracle::topk(records, k);
        EXPECT_EQ(got.overall.in_top_k, want.hits);
        EXPECT_EQ(got.overall.total, want.total);
        ASSERT_EQ(got.per_class.size(), want.per_class.size());
        for (const auto& [cls, pair] : want.per_class) {
            EXPECT_EQ(got.per_class.at(cls).in_top_k, pair.first);
            EXPECT_EQ(got.per_class.at(cls).total, pair.second);
        }
        EXPECT_GE(got.overall.in_top_k, previous);
        previous = got.overall.in_top_k;
    }
    EXPECT_THROW(topk_misclassification(records, 1), ContractError);
    EXPECT_THROW(topk_misclassification(records, 6), ContractError);
}

TEST(Metrics, CollectionReportMatchesTheOracle) {
    const auto doc = nlohmann::json::parse(read_text_file(data_dir + "/fixture_hierarchy.json"));
    const HierarchyTree tree = HierarchyTree::from_json(doc);
    const auto expected_tree = oracle::collections(doc, tree.num_classes());
    SplitMix64 rng(54);
    SourceIndex sources;
    const auto records = oracle::random_log(rng, fixture_shape(), &sources);

    CollectionReportOptions opt;
    opt.sources = sources;
    const auto rows = collection_report(records, tree, {}, opt);
    const auto want = oracle::collection_rows(records, expected_tree, sources, {3, 5});
    ASSERT_EQ(rows.size(), want.size());
    for (const auto& w : want) {
        const auto it = std::find_if(rows.begin(), rows.end(), [&](const auto& r) { return r.path == w.path; });
        ASSERT_NE(it, rows.end()) << w.path;
        EXPECT_EQ(it->classes_in_collection, w.classes);
        EXPECT_EQ(it->source_images_in_collection, w.sources);
        EXPECT_EQ(it->adv_examples_from_collection, w.adversarial);
        EXPECT_EQ(it->intra_count, w.intra);
        EXPECT_EQ(it->topk[0].count, w.topk.at(3));
        EXPECT_EQ(it->topk[1].count, w.topk.at(5));
    }
    // Root first, and every adversarial example stays inside the root.
    ASSERT_EQ(rows.front().path, "");
    EXPECT_EQ(rows.front().name, "All");
    EXPECT_EQ(rows.front().intra_count, rows.front().adv_examples_from_collection);
    EXPECT_EQ(format_pct(rows.front().intra_pct), "100.0");
}

TEST(Metrics, CollectionCountsAreConservedAndMonotone) {
    SplitMix64 rng(55);
    for (int round = 0; round < 20; ++round) {
        const std::size_t m = 6 + rng.below(20);
        const HierarchyTree tree = HierarchyTree::from_json(random_hierarchy_json(rng, m));
        oracle::LogShape shape;
        shape.num_classes = m;
        shape.items = 60;
        shape.depth = 5;
        const auto records = oracle::random_log(rng, shape);
        const auto rows = collection_report(records, tree);
        std::map<std::size_t, const CollectionReportRow*> by_node;
        for (const auto& r : rows) by_node[r.node] = &r;

        std::size_t transfers = 0;
        for (const auto& r : records) transfers += r.untargeted_transfer();
        EXPECT_EQ(by_node.at(HierarchyTree::root)->adv_examples_from_collection, transfers);

        for (std::size_t id = 0; id < tree.size(); ++id) {
            const auto& n = tree.node(id);
            const auto* row = by_node.at(id);
            // Children plus the node's own classes partition its examples.
            std::set<std::size_t> own(n.class_set.begin(), n.class_set.end());
            std::size_t from_children = 0;
            for (std::size_t c : n.children) {
                from_children += by_node.at(c)->adv_examples_from_collection;
                for (std::size_t cls : tree.node(c).class_set) own.erase(cls);
                // Parents contain their children, so counts can only grow upward.
                EXPECT_GE(row->adv_examples_from_collection, by_node.at(c)->adv_examples_from_collection);
                EXPECT_GE(row->intra_count, by_node.at(c)->intra_count);
            }
            std::size_t from_own = 0;
            for (const auto& r : records) from_own += r.untargeted_transfer() && own.count(r.true_class);
            EXPECT_EQ(row->adv_examples_from_collection, from_children + from_own);
            EXPECT_LE(row->topk[0].count, row->topk[1].count);
            EXPECT_LE(row->intra_count, row->adv_examples_from_collection);
        }
    }
}

TEST(Report, PrintedPercentagesAreWithinRounding) {
    const auto doc = nlohmann::json::parse(read_text_file(data_dir + "/fixture_hierarchy.json"));
    const HierarchyTree tree = HierarchyTree::from_json(doc);
    SplitMix64 rng(56);
    const auto records = oracle::random_log(rng, fixture_shape());
    const auto rows = collection_report(records, tree);
    const auto csv = oracle::parse_csv(collection_csv(rows));
    ASSERT_EQ(csv.size(), rows.size() + 1);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& line = csv[i + 1];
        const double den = static_cast<double>(rows[i].adv_examples_from_collection);
        ASSERT_GT(den, 0.0);
        EXPECT_NEAR(*oracle::parse_pct(line[6]), 100.0 * rows[i].intra_count / den, 0.05 + 1e-9);
        EXPECT_NEAR(*oracle::parse_pct(line[7]), 100.0 * rows[i].topk[0].count / den, 0.05 + 1e-9);
        EXPECT_NEAR(*oracle::parse_pct(line[8]), 100.0 * rows[i].topk[1].count / den, 0.05 + 1e-9);
        EXPECT_EQ(line[6].back(), '%');
    }
}

TEST(Report, EmptyDenominatorPrintsADash) {
    EXPECT_EQ(format_pct(percentage(0, 0)), "\xE2\x80\x94");
    EXPECT_EQ(format_pct(percentage(1, 3)), "33.3");
    EXPECT_EQ(format_pct(percentage(2, 3)), "66.7");
}

TEST(Report, PathsSortNumerically) {
    std::vector<std::string> paths{"2", "1.10", "1.2", "", "1", "10", "1.2.1"};
    std::sort(paths.begin(), paths.end(), path_less);
    EXPECT_EQ(paths, (std::vector<std::string>{"", "1", "1.2", "1.2.1", "1.10", "2", "10"}));
}
