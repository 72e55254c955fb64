#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "skicl/errors.hpp"
#include "skicl/tensor/checkpoint.hpp"
#include "skicl/tensor/ops.hpp"
#include "skicl/tensor/optim.hpp"
#include "support/gradcheck.hpp"

using namespace skicl;
using skicl::testing::check_gradients;
using skicl::testing::random_tensor;

namespace {

std::vector<double> vals(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

constexpr double kGradTol = 1e-4;
constexpr int kInstances = 10;

}  // namespace

TEST(TensorOps, ReluSigmoidMatmulBasics) {
    EXPECT_EQ(vals(relu(Tensor({3}, {-1.0, 0.0, 2.0}))), (std::vector<double>{0, 0, 2}));
    EXPECT_DOUBLE_EQ(sigmoid(Tensor::scalar(0.0)).item(), 0.5);
    Tensor a({2, 2}, {1, 2, 3, 4});
    Tensor eye({2, 2}, {1, 0, 0, 1});
    EXPECT_EQ(vals(matmul(a, eye)), (std::vector<double>{1, 2, 3, 4}));
}

TEST(TensorOps, ShapeMismatchNamesOpAndShapes) {
    Tensor a({2, 3}, 1.0);
    Tensor b({4}, 1.0);
    try {
        add(a, b);
        FAIL() << "expected throw";
    } catch (const std::invalid_argument& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("add"), std::string::npos);
        EXPECT_NE(msg.find("[2, 3]"), std::string::npos);
        EXPECT_NE(msg.find("[4]"), std::string::npos);
    }
    EXPECT_THROW(matmul(Tensor({2, 3}, 1.0), Tensor({2, 3}, 1.0)), std::invalid_argument);
    EXPECT_THROW(concat({Tensor({2, 3}, 1.0), Tensor({3, 3}, 1.0)}, 1), std::invalid_argument);
}

TEST(TensorOps, BroadcastOverLeadingExtents) {
    Tensor a({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor b({3}, {10, 20, 30});
    EXPECT_EQ(vals(add(a, b)), (std::vector<double>{11, 22, 33, 14, 25, 36}));
    EXPECT_EQ(vals(mul(a, Tensor::scalar(2.0))), (std::vector<double>{2, 4, 6, 8, 10, 12}));
}

TEST(TensorOps, ConcatAlongAxis) {
    Tensor a({2, 1}, {1, 2});
    Tensor b({2, 2}, {3, 4, 5, 6});
    Tensor c = concat({a, b}, 1);
    EXPECT_EQ(c.shape(), (Shape{2, 3}));
    EXPECT_EQ(vals(c), (std::vector<double>{1, 3, 4, 2, 5, 6}));
}

TEST(DilatedCausalConv, Examples) {
    Tensor h({3}, {3, 1, 4});
    for (std::size_t d : {1u, 2u, 5u}) {
        EXPECT_EQ(vals(dilated_causal_conv1d(h, Tensor({1}, {1.0}), d)), (std::vector<double>{3, 1, 4}));
    }
    EXPECT_EQ(vals(dilated_causal_conv1d(Tensor({4}, {1, 2, 3, 4}), Tensor({2}, {1, 1}), 2)),
              (std::vector<double>{1, 2, 4, 6}));
    EXPECT_EQ(vals(dilated_causal_conv1d(Tensor({4}, {1, 2, 3, 4}), Tensor({3}, 0.0), 1)),
              (std::vector<double>{0, 0, 0, 0}));
}

TEST(DilatedCausalConv, ZeroDilationIsConfigError) {
    EXPECT_THROW(dilated_causal_conv1d(Tensor({4}, 1.0), Tensor({2}, 1.0), 0), ConfigError);
    EXPECT_THROW(dilated_causal_conv1d(Tensor({4}, 1.0), Tensor{}, 1), std::invalid_argument);
}

TEST(DilatedCausalConv, PerturbationOnlyAffectsLaterSteps) {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t steps = 12, taps = 1 + trial % 4, dilation = 1 + trial % 3;
        Tensor h = random_tensor({steps}, rng, -1, 1, false);
        Tensor f = random_tensor({taps}, rng, -1, 1, false);
        const auto base = vals(dilated_causal_conv1d(h, f, dilation));
        const std::size_t t = static_cast<std::size_t>(trial) % steps;
        Tensor h2 = h.clone();
        h2.mutable_values()[t] += 1.0;
        const auto moved = vals(dilated_causal_conv1d(h2, f, dilation));
        for (std::size_t s = 0; s < t; ++s) EXPECT_EQ(base[s], moved[s]) << "step " << s << " before " << t;
    }
}

TEST(Backward, ScalarExamples) {
    Tensor x({3}, {1, 2, 3}, true);
    backward(sum(x));
    EXPECT_EQ(vals(Tensor({3}, std::vector<double>(x.grad().begin(), x.grad().end()))),
              (std::vector<double>{1, 1, 1}));

    Tensor y({1}, {3.0}, true);
    backward(sum(mul(y, y)));
    EXPECT_DOUBLE_EQ(y.grad()[0], 6.0);
}

TEST(Backward, NonScalarLossRejected) {
    Tensor x({3}, 1.0, true);
    EXPECT_THROW(backward(relu(x)), std::invalid_argument);
}

TEST(Backward, UnreachableGradsUntouched) {
    Tensor x({2}, {1, 2}, true);
    Tensor unused({2}, {3, 4}, true);
    backward(sum(x));
    EXPECT_FALSE(unused.has_grad());
}

TEST(Backward, GradientsAccumulateUntilZeroed) {
    Tensor x({2}, {1, 2}, true);
    backward(sum(x));
    backward(sum(x));
    EXPECT_DOUBLE_EQ(x.grad()[0], 2.0);
    x.zero_grad();
    EXPECT_DOUBLE_EQ(x.grad()[0], 0.0);
}

TEST(Backward, TapeVisitsEachOpOnce) {
    Tensor x({2}, {1, 2}, true);
    Tensor shared = mul(x, x);
    Tensor loss = sum(add(shared, shared));
    ComputationTape tape(loss);
    EXPECT_EQ(tape.op_count(), 3u);
    // inputs precede consumers
    const auto& order = tape.order();
    EXPECT_EQ(order.front().get(), x.impl().get());
    EXPECT_EQ(order.back().get(), loss.impl().get());
    backward(loss);
    EXPECT_DOUBLE_EQ(x.grad()[1], 8.0);
}

TEST(GradCheck, ElementwiseAndReductions) {
    std::mt19937_64 rng(11);
    for (int i = 0; i < kInstances; ++i) {
        Tensor a = random_tensor({3, 4}, rng);
        Tensor b = random_tensor({3, 4}, rng);
        Tensor row = random_tensor({4}, rng);
        EXPECT_LT(check_gradients([&] { return sum(mul(add(a, b), sub(a, row))); }, {a, b, row}).worst_relative_error,
                  kGradTol);
        EXPECT_LT(check_gradients([&] { return mean(mul(sigmoid(a), relu(b))); }, {a, b}).worst_relative_error,
                  kGradTol);
        EXPECT_LT(check_gradients([&] { return scale(squared_error_sum(a, b), 0.3); }, {a, b}).worst_relative_error,
                  kGradTol);
    }
}

TEST(GradCheck, MatmulConcatReshape) {
    std::mt19937_64 rng(12);
    for (int i = 0; i < kInstances; ++i) {
        Tensor a = random_tensor({2, 3, 4}, rng);
        Tensor shared = random_tensor({4, 5}, rng);
        Tensor batched = random_tensor({2, 4, 2}, rng);
        Tensor c = random_tensor({2, 3, 1}, rng);
        Tensor w = random_tensor({5}, rng);
        auto loss = [&] {
            Tensor x = concat({matmul(a, shared), c}, 2);
            Tensor y = matmul(reshape(x, {2, 3, 6}), reshape(concat({batched, batched, batched}, 1), {2, 6, 4}));
            return sum(mul(sigmoid(y), y));
        };
        EXPECT_LT(check_gradients(loss, {a, shared, batched, c}).worst_relative_error, kGradTol);
        const std::vector<std::size_t> pick{1, 0, 1};
        EXPECT_LT(check_gradients([&] { return sum(mul(select_rows(a, pick), select_rows(a, pick))); }, {a})
                      .worst_relative_error,
                  kGradTol);
        EXPECT_LT(check_gradients([&] { return sum(mul(matmul(a, shared), w)); }, {a, shared, w}).worst_relative_error,
                  kGradTol);
    }
}

TEST(GradCheck, Convolutions) {
    std::mt19937_64 rng(13);
    for (int i = 0; i < kInstances; ++i) {
        const std::size_t dilation = 1 + static_cast<std::size_t>(i % 3);
        Tensor x = random_tensor({2, 3, 9, 2}, rng);
        Tensor w = random_tensor({3, 2, 4}, rng);
        Tensor b = random_tensor({4}, rng);
        Tensor probe = random_tensor({4}, rng, -1, 1, false);
        for (auto pad : {ConvPadding::causal, ConvPadding::valid}) {
            auto loss = [&] { return sum(mul(sigmoid(conv1d(x, w, b, dilation, pad)), probe)); };
            EXPECT_LT(check_gradients(loss, {x, w, b}).worst_relative_error, kGradTol);
        }
        Tensor h = random_tensor({7}, rng);
        Tensor f = random_tensor({3}, rng);
        EXPECT_LT(check_gradients([&] { return sum(mul(dilated_causal_conv1d(h, f, dilation), h)); }, {h, f})
                      .worst_relative_error,
                  kGradTol);
    }
}

TEST(GradCheck, BatchNormTrainAndEval) {
    std::mt19937_64 rng(14);
    for (int i = 0; i < kInstances; ++i) {
        Tensor x = random_tensor({5, 3}, rng);
        Tensor gamma = random_tensor({3}, rng, 0.5, 1.5);
        Tensor beta = random_tensor({3}, rng);
        Tensor probe = random_tensor({5, 3}, rng, -1, 1, false);
        BatchNormState state{Tensor({3}, 0.0), Tensor({3}, 1.0)};
        for (bool training : {true, false}) {
            auto loss = [&] { return sum(mul(batch_norm(x, gamma, beta, state, training), probe)); };
            EXPECT_LT(check_gradients(loss, {x, gamma, beta}).worst_relative_error, kGradTol);
        }
    }
}

TEST(GradCheck, GraphOps) {
    std::mt19937_64 rng(15);
    for (int i = 0; i < kInstances; ++i) {
        Tensor u = random_tensor({2, 3, 4}, rng);
        Tensor v = random_tensor({2, 3, 4}, rng);
        Tensor probe = random_tensor({4}, rng, -1, 1, false);
        EXPECT_LT(check_gradients([&] { return sum(mul(sigmoid(pairwise_add(u, v)), probe)); }, {u, v})
                      .worst_relative_error,
                  kGradTol);
        Tensor adj = random_tensor({2, 3, 3}, rng, 0, 1);
        Tensor feats = random_tensor({2, 3, 5, 2}, rng);
        EXPECT_LT(check_gradients([&] { return sum(mul(graph_aggregate(adj, feats), feats)); }, {adj, feats})
                      .worst_relative_error,
                  kGradTol);
    }
}

TEST(GradCheck, MaskedLosses) {
    std::mt19937_64 rng(16);
    std::bernoulli_distribution coin(0.5);
    for (int i = 0; i < kInstances; ++i) {
        Tensor prob = random_tensor({3, 4, 4}, rng, 0.05, 0.95);
        std::vector<double> target(16), mask(16);
        for (std::size_t e = 0; e < 16; ++e) {
            target[e] = coin(rng) ? 1.0 : 0.0;
            mask[e] = coin(rng) || e == 0 ? 1.0 : 0.0;
        }
        Tensor t({4, 4}, target), m({4, 4}, mask);
        EXPECT_LT(check_gradients([&] { return masked_bce(prob, t, m); }, {prob}).worst_relative_error, kGradTol);
        EXPECT_LT(check_gradients([&] { return masked_mse(prob, t, m); }, {prob}).worst_relative_error, kGradTol);
    }
}

TEST(MaskedLosses, HandValues) {
    Tensor prob({1, 1, 1}, {0.5});
    EXPECT_NEAR(masked_bce(prob, Tensor({1, 1}, {1.0}), Tensor({1, 1}, {1.0})).item(), std::log(2.0), 1e-12);
    // saturated probability is clamped before the log
    Tensor sat({1, 1, 1}, {0.0});
    EXPECT_NEAR(masked_bce(sat, Tensor({1, 1}, {1.0}), Tensor({1, 1}, {1.0})).item(), -std::log(kBceClamp), 1e-9);
    EXPECT_TRUE(std::isfinite(masked_bce(sat, Tensor({1, 1}, {1.0}), Tensor({1, 1}, {1.0})).item()));
}

TEST(Adam, ZeroGradientLeavesParamsUnchanged) {
    Tensor p({3}, {0.5, -1.0, 2.0}, true);
    Adam opt({{"p", p}}, AdamOptions{1e-3});
    for (int s = 0; s < 5; ++s) {
        zero_grads({{"p", p}});
        backward(scale(sum(p), 0.0));
        opt.step();
    }
    EXPECT_EQ(vals(p), (std::vector<double>{0.5, -1.0, 2.0}));
    EXPECT_EQ(opt.steps_taken(), 5u);
}

TEST(Adam, FirstStepMagnitude) {
    Tensor p({1}, {0.0}, true);
    Adam opt({{"p", p}}, AdamOptions{1e-3});
    backward(sum(p));
    opt.step();
    EXPECT_NEAR(p.values()[0], -1e-3 / (1.0 + 1e-8), 1e-15);
    EXPECT_NEAR(p.values()[0], -9.99999e-4, 1e-9);
}

TEST(Adam, MissingGradientNamesParameter) {
    Tensor p({1}, {0.0}, true);
    Adam opt({{"encoder.proj.weight", p}});
    try {
        opt.step();
        FAIL();
    } catch (const std::logic_error& e) {
        EXPECT_NE(std::string(e.what()).find("encoder.proj.weight"), std::string::npos);
    }
}

TEST(Adam, StepDecaySchedule) {
    StepDecaySchedule schedule;
    EXPECT_DOUBLE_EQ(schedule.at(0), 1e-4);
    EXPECT_DOUBLE_EQ(schedule.at(19), 1e-4);
    EXPECT_NEAR(schedule.at(20), 0.8e-4, 1e-18);
    EXPECT_NEAR(schedule.at(40), 0.64e-4, 1e-18);
}

TEST(Determinism, RepeatedComputationIsBitwiseIdentical) {
    auto run = [] {
        std::mt19937_64 rng(3);
        Tensor x = random_tensor({4, 6, 2}, rng);
        Tensor w = random_tensor({2, 2, 3}, rng);
        Tensor loss = sum(sigmoid(conv1d(x, w, Tensor{}, 2, ConvPadding::causal)));
        backward(loss);
        std::vector<double> out = vals(loss);
        out.insert(out.end(), w.grad().begin(), w.grad().end());
        return out;
    };
    EXPECT_EQ(run(), run());
}

TEST(Checkpoint, RoundTripAndShapeValidation) {
    Tensor a({2, 2}, {1.0 / 3.0, 2, 3, 4e-300}, true);
    Tensor b({1}, {-7.25}, true);
    auto doc = checkpoint_to_json({{"a", a}, {"b", b}});
    EXPECT_EQ(doc.at("format_version").get<int>(), kCheckpointFormatVersion);

    Tensor a2({2, 2}, 0.0, true), b2({1}, 0.0, true);
    load_checkpoint_json(nlohmann::json::parse(doc.dump()), {{"a", a2}, {"b", b2}});
    EXPECT_EQ(vals(a2), vals(a));
    EXPECT_EQ(vals(b2), vals(b));

    Tensor wrong({3}, 0.0, true);
    EXPECT_THROW(load_checkpoint_json(doc, {{"a", wrong}, {"b", b2}}), std::runtime_error);
}
