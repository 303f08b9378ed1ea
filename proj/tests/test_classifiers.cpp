#include <cstring>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "advlab/checkpoint.hpp"
#include "advlab/classifier.hpp"
#include "advlab/fuzz.hpp"
#include "advlab/synthetic.hpp"

using namespace advlab;

namespace {

LabeledDataset small_fixture() {
    HierarchicalGaussianSpec spec;
    spec.train_per_class = 20;
    spec.eval_per_class = 5;
    return generate_hierarchical_gaussian(spec, 9).train;
}

TrainedModel trained_model(std::uint64_t seed = 4) {
    const LabeledDataset data = small_fixture();
    return train({"m", data.input_dim(), {12}, data.num_classes(), seed}, data, {5, 0.1, 16});
}

} // namespace

TEST(ModelSpec, RejectsDegenerateArchitectures) {
    EXPECT_THROW((ModelSpec{"", 4, {}, 3, 0}.validate()), ContractError);
    EXPECT_THROW((ModelSpec{"m", 0, {}, 3, 0}.validate()), ContractError);
    EXPECT_THROW((ModelSpec{"m", 4, {}, 1, 0}.validate()), ContractError);
    EXPECT_THROW((ModelSpec{"m", 4, {0}, 3, 0}.validate()), ContractError);
}

TEST(Predict, TopKIsOrderedAndTiesGoToLowerIndex) {
    const Tensor logits = Tensor::vector({1.0, 3.0, 3.0, -2.0, 1.0});
    const auto ranked = rank_classes(logits, 5);
    std::vector<std::size_t> order;
    for (const auto& s : ranked) order.push_back(s.class_index);
    EXPECT_EQ(order, (std::vector<std::size_t>{1, 2, 0, 4, 3}));
}

TEST(Predict, KMustLieWithinClassCount) {
    const TrainedModel m = initialize_model({"m", 3, {}, 4, 1});
    const Tensor x = Tensor::vector({0.1, 0.2, 0.3});
    EXPECT_THROW(predict(m, x, 0), ContractError);
    EXPECT_THROW(predict(m, x, 5), ContractError);
    EXPECT_EQ(predict(m, x, 4).top_k.size(), 4u);
    EXPECT_EQ(predict(m, x, 1).top(), m.predicted_class(x));
}

TEST(Predict, WrongInputWidthIsADimensionError) {
    const TrainedModel m = initialize_model({"m", 3, {}, 4, 1});
    EXPECT_THROW(m.logits(Tensor::vector({0.1, 0.2})), DimensionError);
}

TEST(Predict, TapedForwardMatchesPlainForward) {
    SplitMix64 rng(21);
    for (int i = 0; i < 20; ++i) {
        const TrainedModel m = random_model(rng, 5, {7, 4}, 6);
        const Tensor x = random_unit_input(rng, 5);
        Tape tape;
        const Tensor taped = tape.value(m.forward(tape, tape.leaf(x)));
        const Tensor plain = m.logits(x);
        ASSERT_EQ(taped.size(), plain.size());
        for (std::size_t j = 0; j < plain.size(); ++j) EXPECT_EQ(taped[j], plain[j]);
    }
}

TEST(Train, ReachesHighAccuracyOnSeparableFixture) {
    const LabeledDataset data = generate_hierarchical_gaussian({}, 1).train;
    const TrainedModel m = train({"m", data.input_dim(), {32}, data.num_classes(), 7}, data, {60, 0.1, 16});
    EXPECT_GE(m.info().final_accuracy, 0.95);
    EXPECT_DOUBLE_EQ(m.info().final_accuracy, accuracy(m, data));
}

TEST(Train, ZeroEpochsGivesTheInitialization) {
    const LabeledDataset data = small_fixture();
    const ModelSpec spec{"m", data.input_dim(), {8}, data.num_classes(), 3};
    const TrainedModel m = train(spec, data, {0, 0.1, 16});
    const TrainedModel init = initialize_model(spec);
    for (std::size_t i = 0; i < m.layers().size(); ++i) {
        EXPECT_EQ(m.layers()[i].weight, init.layers()[i].weight);
        EXPECT_EQ(m.layers()[i].bias, init.layers()[i].bias);
    }
}

TEST(Train, IsDeterministicForEqualSeeds) {
    EXPECT_EQ(serialize_model(trained_model(4)), serialize_model(trained_model(4)));
    EXPECT_NE(serialize_model(trained_model(4)), serialize_model(trained_model(5)));
}

TEST(Train, EmptyDatasetIsRejected) {
    EXPECT_THROW(train({"m", 4, {}, 3, 0}, LabeledDataset(3, {}), {}), ContractError);
}

TEST(Train, DivergenceReportsTheEpoch) {
    const LabeledDataset data = small_fixture();
    try {
        train({"m", data.input_dim(), {16}, data.num_classes(), 1}, data, {20, 1e300, 16});
        FAIL() << "expected TrainingDivergedError";
    } catch (const TrainingDivergedError& e) {
        EXPECT_GE(e.epoch(), 1u);
        EXPECT_NE(std::string(e.what()).find("'m'"), std::string::npos);
    }
}

TEST(Dataset, LabelsOutsideTheClassRangeAreRejected) {
    std::vector<LabeledItem> items{{"a", Tensor::vector({0.0}), 3}};
    EXPECT_THROW(LabeledDataset(3, items), RangeError);
}

TEST(Dataset, DuplicateIdsAreRejected) {
    std::vector<LabeledItem> items{{"a", Tensor::vector({0.0}), 0}, {"a", Tensor::vector({1.0}), 1}};
    EXPECT_THROW(LabeledDataset(2, items), ValidationError);
}

TEST(Checkpoint, RoundTripIsExact) {
    const TrainedModel m = trained_model();
    const std::string bytes = serialize_model(m);
    const TrainedModel back = parse_model(bytes);
    EXPECT_EQ(back.spec(), m.spec());
    ASSERT_EQ(back.layers().size(), m.layers().size());
    for (std::size_t i = 0; i < m.layers().size(); ++i) {
        EXPECT_EQ(back.layers()[i].weight, m.layers()[i].weight);
        EXPECT_EQ(back.layers()[i].bias, m.layers()[i].bias);
    }
    EXPECT_EQ(back.info().epochs, m.info().epochs);
    EXPECT_EQ(back.info().final_accuracy, m.info().final_accuracy);
    EXPECT_EQ(serialize_model(back), bytes);
}

TEST(Checkpoint, LayoutStartsWithMagicVersionAndHeaderLength) {
    const std::string bytes = serialize_model(trained_model());
    ASSERT_GT(bytes.size(), 20u);
    EXPECT_EQ(bytes.substr(0, 8), "ADVLABCK");
    EXPECT_EQ(static_cast<unsigned char>(bytes[8]), 1u);
    EXPECT_EQ(bytes[9], 0);
    std::uint64_t len = 0;
    for (int i = 0; i < 8; ++i) len |= std::uint64_t(static_cast<unsigned char>(bytes[12 + i])) << (8 * i);
    const auto header = nlohmann::json::parse(bytes.substr(20, len));
    EXPECT_EQ(header["name"], "m");
    EXPECT_EQ(header["hidden_dims"], nlohmann::json::array({12}));
}

TEST(Checkpoint, EveryTruncationIsAParseErrorWithOffset) {
    const std::string bytes = serialize_model(initialize_model({"t", 3, {2}, 2, 1}));
    for (std::size_t n = 0; n < bytes.size(); ++n) {
        try {
            parse_model(std::string_view(bytes).substr(0, n));
            FAIL() << "truncation at " << n << " parsed";
        } catch (const ParseError& e) {
            EXPECT_LE(e.position(), bytes.size());
        } catch (const std::exception& e) {
            FAIL() << "truncation at " << n << " threw " << e.what();
        }
    }
}

TEST(Checkpoint, WrongMagicOrVersionIsAVersionError) {
    std::string bytes = serialize_model(trained_model());
    std::string bad_magic = bytes;
    bad_magic[0] = 'X';
    EXPECT_THROW(parse_model(bad_magic), VersionError);
    std::string bad_version = bytes;
    bad_version[8] = 2;
    EXPECT_THROW(parse_model(bad_version), VersionError);
}

TEST(Checkpoint, TrailingBytesAreRejected) {
    EXPECT_THROW(parse_model(serialize_model(trained_model()) + "x"), ParseError);
}

TEST(Checkpoint, HeaderDisagreeingWithWeightsIsRejected) {
    // Claim a wider hidden layer than the stored weights provide.
    std::string bytes = serialize_model(initialize_model({"t", 3, {2}, 2, 1}));
    const std::size_t pos = bytes.find("\"hidden_dims\":[2]");
    ASSERT_NE(pos, std::string::npos);
    bytes[pos + std::strlen("\"hidden_dims\":[")] = '3';
    EXPECT_THROW(parse_model(bytes), ParseError);
}
