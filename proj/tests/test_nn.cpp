#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numeric>

#include "bnapprox/checkpoint.hpp"
#include "bnapprox/nn.hpp"
#include "checks.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace bnapprox;

namespace {

ModelConfig config_for(const EncodingLayout& layout, std::vector<std::size_t> hidden) {
    ModelConfig c;
    c.layer_sizes = ModelConfig::layers_for(layout.total_dim, hidden);
    return c;
}

double block_sum(const std::vector<double>& v, std::size_t off, std::size_t len) {
    return std::accumulate(v.begin() + off, v.begin() + off + len, 0.0);
}

}  // namespace

TEST(Forward, ZeroModelGivesZeroLogits) {
    const EncodingLayout layout = EncodingLayout::of(testutil::network("asia"));
    const Model m = make_model(layout, config_for(layout, {32, 64, 32}));
    Rng rng(RngSeed{1});
    const auto ex = checks::random_example(layout, rng);
    for (double z : forward(m, ex.input)) EXPECT_EQ(z, 0.0);
}

TEST(Forward, ReluClipsNegativeHiddenUnits) {
    const EncodingLayout layout = checks::synthetic_layout({2});
    ModelConfig c = config_for(layout, {2});
    Model m = make_model(layout, c);
    m.params.weights[0] = Eigen::MatrixXd::Identity(2, 2);
    m.params.weights[1] = Eigen::MatrixXd::Identity(2, 2);
    const std::vector<double> x{-1.0, 2.0};
    EXPECT_EQ(forward(m, x), (std::vector<double>{0.0, 2.0}));
}

TEST(Forward, MatchesLoopOracle) {
    Rng rng(RngSeed{2});
    for (int trial = 0; trial < 10; ++trial) {
        const auto d = checks::random_gradient_draw(rng);
        std::vector<oracle::Mat> ws;
        std::vector<std::vector<double>> bs;
        for (std::size_t l = 0; l < d.model.params.layers(); ++l) {
            const auto& w = d.model.params.weights[l];
            oracle::Mat m{static_cast<std::size_t>(w.rows()), static_cast<std::size_t>(w.cols()), {}};
            m.a.resize(m.rows * m.cols);
            for (std::size_t r = 0; r < m.rows; ++r)
                for (std::size_t c = 0; c < m.cols; ++c) m.at(r, c) = w(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
            ws.push_back(m);
            const auto& b = d.model.params.biases[l];
            bs.emplace_back(b.data(), b.data() + b.size());
        }
        for (const auto& ex : d.batch) {
            const auto want = oracle::mlp_forward(ws, bs, ex.input);
            const auto got = forward(d.model, ex.input);
            ASSERT_EQ(got.size(), want.size());
            for (std::size_t k = 0; k < got.size(); ++k) EXPECT_NEAR(got[k], want[k], 1e-12);
        }
    }
}

TEST(Forward, RejectsWrongDimension) {
    const EncodingLayout layout = checks::synthetic_layout({2, 3});
    const Model m = make_model(layout, config_for(layout, {4}));
    EXPECT_THROW(forward(m, std::vector<double>(4, 0.0)), std::invalid_argument);
}

TEST(MultiSoftmax, UniformForZeroLogits) {
    const EncodingLayout layout = checks::synthetic_layout({4});
    const auto p = multi_softmax(layout, std::vector<double>(4, 0.0));
    for (double v : p) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(MultiSoftmax, ShiftInvariantPerBlock) {
    const EncodingLayout layout = checks::synthetic_layout({3, 2});
    const std::vector<double> z{0.3, -1.2, 2.0, 0.5, 0.1};
    std::vector<double> shifted = z;
    for (std::size_t k = 0; k < 3; ++k) shifted[k] += 17.5;
    const auto a = multi_softmax(layout, z);
    const auto b = multi_softmax(layout, shifted);
    for (std::size_t k = 0; k < a.size(); ++k) EXPECT_NEAR(a[k], b[k], 1e-12);
    EXPECT_NEAR(block_sum(a, 0, 3), 1.0, 1e-12);
    EXPECT_NEAR(block_sum(a, 3, 2), 1.0, 1e-12);
}

TEST(MultiSoftmax, LargeLogitsDoNotOverflow) {
    const EncodingLayout layout = checks::synthetic_layout({2});
    const auto p = multi_softmax(layout, std::vector<double>{1000.0, 0.0});
    EXPECT_EQ(p[0], 1.0);
    EXPECT_EQ(p[1], 0.0);
}

TEST(Loss, PerfectPredictionHasZeroDataTerm) {
    // One-hot output equal to a one-hot target: make the logit gap huge.
    const EncodingLayout layout = checks::synthetic_layout({2});
    ModelConfig c = config_for(layout, {2});
    c.l2_lambda = 0.0;
    Model m = make_model(layout, c);
    m.params.biases[1] << 800.0, 0.0;
    Example ex;
    ex.input = {0.0, 0.0};
    ex.target = {1.0, 0.0};
    const std::vector<Example> batch{ex};
    EXPECT_EQ(loss(m, batch).data_loss, 0.0);
}

TEST(Loss, UniformPredictionGivesLogJ) {
    const EncodingLayout layout = checks::synthetic_layout({5, 3});
    ModelConfig c = config_for(layout, {4});
    const Model m = make_model(layout, c);
    Example ex;
    ex.input.assign(8, 0.0);
    ex.target = {0, 0, 1, 0, 0, 1, 0, 0};
    const std::vector<Example> batch{ex};
    const auto r = loss(m, batch);
    EXPECT_NEAR(r.data_loss, std::log(5.0) + std::log(3.0), 1e-12);
    EXPECT_EQ(r.loss, r.data_loss);  // zero weights: no L2 term
}

TEST(Loss, L2CountsWeightsOnly) {
    const EncodingLayout layout = checks::synthetic_layout({2});
    ModelConfig c = config_for(layout, {2});
    c.l2_lambda = 0.5;
    Model m = make_model(layout, c);
    m.params.weights[0](0, 0) = 2.0;
    m.params.biases[0](0) = 100.0;
    Example ex;
    ex.input = {0, 0};
    ex.target = {0.5, 0.5};
    const std::vector<Example> batch{ex};
    const auto r = loss(m, batch);
    EXPECT_NEAR(r.loss - r.data_loss, 0.5 * 4.0, 1e-12);
}

TEST(Loss, GradientMatchesFiniteDifferences) {
    EXPECT_LE(checks::gradient_check(20, RngSeed{3}), 1e-4);
}

TEST(Momentum, ZeroMomentumIsGradientDescent) {
    const EncodingLayout layout = checks::synthetic_layout({2});
    ModelConfig c = config_for(layout, {3});
    Rng rng(RngSeed{4});
    Model m = init_model(layout, c, rng);
    const Parameters before = m.params;
    Parameters grad = Parameters::zeros_like(m.params);
    grad.for_each([&](double& g) { g = rng.uniform() - 0.5; });
    Parameters v = Parameters::zeros_like(m.params);
    momentum_step(m.params, v, grad, 0.1, 0.0);
    for (std::size_t l = 0; l < m.params.layers(); ++l) {
        EXPECT_TRUE(m.params.weights[l].isApprox(before.weights[l] - 0.1 * grad.weights[l], 1e-15));
        EXPECT_TRUE(m.params.biases[l].isApprox(before.biases[l] - 0.1 * grad.biases[l], 1e-15));
    }
}

TEST(Momentum, CoastsOnVelocity) {
    const EncodingLayout layout = checks::synthetic_layout({2});
    ModelConfig c = config_for(layout, {3});
    Rng rng(RngSeed{5});
    Model m = init_model(layout, c, rng);
    const Parameters before = m.params;
    Parameters v = Parameters::zeros_like(m.params);
    v.for_each([&](double& x) { x = rng.uniform(); });
    const Parameters v0 = v;
    momentum_step(m.params, v, Parameters::zeros_like(m.params), 0.1, 0.9);
    for (std::size_t l = 0; l < m.params.layers(); ++l)
        EXPECT_TRUE(m.params.weights[l].isApprox(before.weights[l] + 0.9 * v0.weights[l], 1e-15));
    Parameters wrong = Parameters::zeros(config_for(layout, {4}));
    EXPECT_THROW(momentum_step(m.params, v, wrong, 0.1, 0.9), std::invalid_argument);
}

TEST(Momentum, L2StepShrinksEveryWeight) {
    // Zero targets make the data gradient vanish, leaving only the L2 term.
    const EncodingLayout layout = checks::synthetic_layout({3, 2});
    ModelConfig c = config_for(layout, {4});
    c.l2_lambda = 0.1;
    Rng rng(RngSeed{6});
    Model m = init_model(layout, c, rng);
    Example ex;
    ex.input.assign(layout.total_dim, 0.0);
    ex.target.assign(layout.total_dim, 0.0);
    const std::vector<Example> batch{ex};
    const auto r = loss(m, batch);
    const Parameters before = m.params;
    Parameters v = Parameters::zeros_like(m.params);
    momentum_step(m.params, v, r.gradient, 0.5, 0.9);
    for (std::size_t l = 0; l < m.params.layers(); ++l)
        for (Eigen::Index k = 0; k < m.params.weights[l].size(); ++k)
            if (before.weights[l].data()[k] != 0.0) {
                EXPECT_LT(std::abs(m.params.weights[l].data()[k]), std::abs(before.weights[l].data()[k]));
            }
}

TEST(Config, AlarmWeightCount) {
    const EncodingLayout layout = EncodingLayout::of(testutil::network("alarm"));
    ModelConfig c = config_for(layout, {100, 150, 100, 50});
    EXPECT_EQ(c.layer_sizes, (std::vector<std::size_t>{105, 100, 150, 100, 50, 105}));
    EXPECT_EQ(c.weight_count(), 50750u);
    c.use_bias = false;
    EXPECT_EQ(make_model(layout, c).params.size(), 50750u);
    c.use_bias = true;
    EXPECT_EQ(make_model(layout, c).params.size(), 50750u + 100 + 150 + 100 + 50 + 105);
}

TEST(Config, AsiaLayers) {
    const EncodingLayout layout = EncodingLayout::of(testutil::network("asia"));
    EXPECT_EQ(config_for(layout, {32, 64, 32}).layer_sizes, (std::vector<std::size_t>{16, 32, 64, 32, 16}));
}

TEST(Config, ValidationRejectsBadValues) {
    const EncodingLayout layout = checks::synthetic_layout({2, 2});
    ModelConfig c = config_for(layout, {3});
    EXPECT_NO_THROW(c.validate(layout));
    ModelConfig bad = c;
    bad.layer_sizes.front() = 5;
    EXPECT_THROW(bad.validate(layout), std::invalid_argument);
    bad = c;
    bad.momentum = 1.5;
    EXPECT_THROW(bad.validate(layout), std::invalid_argument);
    bad = c;
    bad.learning_rate = 0.0;
    EXPECT_THROW(bad.validate(layout), std::invalid_argument);
}

TEST(Init, GlorotRange) {
    const EncodingLayout layout = EncodingLayout::of(testutil::network("alarm"));
    Rng rng(RngSeed{7});
    const Model m = init_model(layout, config_for(layout, {100, 150, 100, 50}), rng);
    for (const auto& w : m.params.weights) {
        const double limit = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
        EXPECT_LE(w.cwiseAbs().maxCoeff(), limit);
        EXPECT_GT(w.cwiseAbs().maxCoeff(), 0.9 * limit);
    }
    for (const auto& b : m.params.biases) EXPECT_EQ(b.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Predict, ZeroModelIsUniformAndObservedSlotsNormalize) {
    const Network& net = testutil::network("survey");
    const EncodingLayout layout = EncodingLayout::of(net);
    const Model m = make_model(layout, config_for(layout, {8}));
    Evidence ev;
    ev.set(0, 1);
    const PosteriorSet p = predict(m, ev);
    for (std::size_t i = 0; i < net.size(); ++i)
        for (double v : p[i]) EXPECT_DOUBLE_EQ(v, 1.0 / static_cast<double>(net.cardinality(i)));
    Evidence bad;
    bad.set(50, 0);
    EXPECT_THROW(predict(m, bad), std::invalid_argument);
}

TEST(Predict, BlocksSumToOne) {
    const Network& net = testutil::network("alarm");
    const EncodingLayout layout = EncodingLayout::of(net);
    Rng rng(RngSeed{8});
    const Model m = init_model(layout, config_for(layout, {100, 150, 100, 50}), rng);
    for (int trial = 0; trial < 20; ++trial) {
        const PosteriorSet p = predict(m, sample_evidence(net, 0.3, EvidenceMode::uniform, rng));
        for (const auto& block : p.marginals) EXPECT_NEAR(std::accumulate(block.begin(), block.end(), 0.0), 1.0, 1e-9);
    }
}

TEST(Train, OverfitsASingleExample) {
    const EncodingLayout layout = checks::synthetic_layout({3, 2, 4});
    ModelConfig c = config_for(layout, {16});
    c.l2_lambda = 0.0;
    c.learning_rate = 0.05;
    c.batch_size = 1;
    c.max_epochs = 3000;
    c.early_stop_patience = 3000;
    Example ex;
    ex.evidence.set(0, 2);
    ex.input = encode_evidence(layout, ex.evidence);
    ex.target = {0, 0, 1, 1, 0, 0, 0, 1, 0};
    const std::vector<Example> set{ex};
    Rng rng(RngSeed{9});
    const Model m = train(layout, c, set, set, rng);
    EXPECT_LT(data_loss(m, set), 1e-3);
    EXPECT_EQ(m.info.best_validation_loss, data_loss(m, set));
}

TEST(Train, KeepsBestSnapshotAndStopsEarly) {
    const Network& net = testutil::network("asia");
    const EncodingLayout layout = EncodingLayout::of(net);
    GenerationConfig g;
    g.n = 200;
    g.seed = RngSeed{10};
    const DatasetSplit split = generate_dataset(net, g);
    const auto [fit, val] = holdout_validation(split.train);
    EXPECT_EQ(val.size(), 10u);
    EXPECT_EQ(fit.size(), 90u);
    ModelConfig c = config_for(layout, {8});
    c.learning_rate = 0.05;
    c.max_epochs = 400;
    c.early_stop_patience = 5;
    Rng rng(RngSeed{11});
    std::vector<EpochStats> log;
    const Model m = train(layout, c, fit, val, rng, [&](const EpochStats& s) { log.push_back(s); });
    ASSERT_FALSE(log.empty());
    double best = std::numeric_limits<double>::infinity();
    for (const auto& s : log) best = std::min(best, s.validation_loss);
    EXPECT_EQ(m.info.best_validation_loss, best);
    EXPECT_NEAR(data_loss(m, val), best, 1e-12);
    EXPECT_EQ(m.info.epochs_run, log.size());
    if (log.size() < c.max_epochs) {
        EXPECT_EQ(log.size() - m.info.best_epoch, c.early_stop_patience);
    }
}

TEST(Train, DeterministicUnderSeed) {
    const Network& net = testutil::network("survey");
    const EncodingLayout layout = EncodingLayout::of(net);
    GenerationConfig g;
    g.n = 100;
    const DatasetSplit split = generate_dataset(net, g);
    ModelConfig c = config_for(layout, {8, 8});
    c.max_epochs = 5;
    Rng a(RngSeed{12}), b(RngSeed{12});
    const Model ma = train(layout, c, split.train, split.test, a);
    const Model mb = train(layout, c, split.train, split.test, b);
    EXPECT_EQ(serialize_checkpoint(ma), serialize_checkpoint(mb));
}

TEST(Train, NonFiniteLossAborts) {
    const EncodingLayout layout = checks::synthetic_layout({2, 2});
    ModelConfig c = config_for(layout, {4});
    c.learning_rate = 1e200;
    c.l2_lambda = 1.0;
    c.max_epochs = 50;
    Rng rng(RngSeed{13});
    std::vector<Example> set;
    for (int k = 0; k < 4; ++k) set.push_back(checks::random_example(layout, rng));
    EXPECT_THROW(train(layout, c, set, set, rng), NonFiniteLoss);
    EXPECT_THROW(train(layout, c, {}, set, rng), std::invalid_argument);
}

TEST(Checkpoint, RoundTripIsExact) {
    const Network& net = testutil::network("alarm");
    const EncodingLayout layout = EncodingLayout::of(net);
    Rng rng(RngSeed{14});
    Model m = init_model(layout, config_for(layout, {100, 150, 100, 50}), rng);
    for (auto& b : m.params.biases) b.setRandom();
    m.info = TrainingInfo{42, 17, 12, 3.25};
    const std::string bytes = serialize_checkpoint(m);
    EXPECT_EQ(bytes.rfind("BNAPPROX-CHECKPOINT 1\n", 0), 0u);
    const Model back = deserialize_checkpoint(bytes);
    EXPECT_EQ(serialize_checkpoint(back), bytes);
    for (std::size_t l = 0; l < m.params.layers(); ++l) {
        EXPECT_EQ(back.params.weights[l], m.params.weights[l]);
        EXPECT_EQ(back.params.biases[l], m.params.biases[l]);
    }
    EXPECT_EQ(back.info.best_epoch, 12u);
    EXPECT_EQ(back.config.layer_sizes, m.config.layer_sizes);
    EXPECT_NO_THROW(check_model_matches(back, net));
    EXPECT_THROW(check_model_matches(back, testutil::network("insurance")), std::runtime_error);
}

TEST(Checkpoint, UntrainedModelAndNoBias) {
    const EncodingLayout layout = checks::synthetic_layout({2, 3});
    ModelConfig c = config_for(layout, {4});
    c.use_bias = false;
    const Model m = make_model(layout, c);
    const Model back = deserialize_checkpoint(serialize_checkpoint(m));
    EXPECT_FALSE(back.config.use_bias);
    EXPECT_TRUE(std::isinf(back.info.best_validation_loss));
}

TEST(Checkpoint, CorruptionIsDetected) {
    const EncodingLayout layout = checks::synthetic_layout({2, 3});
    Rng rng(RngSeed{15});
    const std::string bytes = serialize_checkpoint(init_model(layout, config_for(layout, {4}), rng));
    EXPECT_THROW(deserialize_checkpoint("not a checkpoint"), std::runtime_error);
    std::string flipped = bytes;
    flipped[flipped.size() - 3] ^= 0x10;
    EXPECT_THROW(deserialize_checkpoint(flipped), std::runtime_error);
    EXPECT_THROW(deserialize_checkpoint(bytes.substr(0, bytes.size() - 8)), std::runtime_error);
}
