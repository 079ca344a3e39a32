#include "hrgroup/neuralnet.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace hrgroup;

namespace {

NetConfig config(int window, int hc) {
    NetConfig c;
    c.window_size = window;
    c.hc_dim = hc;
    return c;
}

std::vector<double> random_vec(Rng& rng, std::size_t n, double scale = 1.0) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.normal(0.0, scale);
    return v;
}

NetExample random_example(Rng& rng, const NetModel& m) {
    return {random_vec(rng, static_cast<std::size_t>(m.cfg.window_size)),
            random_vec(rng, static_cast<std::size_t>(m.cfg.hc_dim)), static_cast<int>(rng.index(5))};
}

// Class c shifts the window level by c and tilts it; the HC vector carries a
// noisy copy of the level.
std::vector<NetExample> smoke_task(std::uint64_t seed, int window, int hc) {
    Rng rng(seed);
    std::vector<NetExample> data;
    for (int i = 0; i < 200; ++i) {
        const int c = i % 5;
        NetExample ex;
        ex.label = c;
        for (int t = 0; t < window; ++t) ex.window.push_back(c - 2.0 + 0.02 * c * t + rng.normal(0, 0.3));
        for (int j = 0; j < hc; ++j) ex.hc.push_back(c - 2.0 + rng.normal(0, 0.5));
        data.push_back(std::move(ex));
    }
    return data;
}

double accuracy(const NetModel& m, const std::vector<NetExample>& data) {
    int ok = 0;
    for (const auto& ex : data) ok += predict_class(m, ex.window, ex.hc) == ex.label;
    return static_cast<double>(ok) / static_cast<double>(data.size());
}

} // namespace

TEST(Build, Dimensions) {
    const auto base = build(ArchitectureId::Baseline, config(50, 0));
    EXPECT_EQ(base.flatten_dim(), 368u);
    const auto m2 = build(ArchitectureId::Model2, config(80, 22));
    EXPECT_EQ(m2.input_length(), 102u);
    EXPECT_EQ(m2.flatten_dim(), 784u);
    EXPECT_EQ(build(ArchitectureId::Model1, config(80, 22)).mid_concat_dim(), 86u);
    EXPECT_EQ(build(ArchitectureId::Model3, config(80, 22)).mid_concat_dim(), 96u);
}

TEST(Build, ParameterCounts) {
    // conv 16*5+16, fc1 flat*64+64, out 64*5+5
    EXPECT_EQ(build(ArchitectureId::Baseline, config(50, 0)).parameter_count(), 96u + 368 * 64 + 64 + 325);
    EXPECT_EQ(build(ArchitectureId::Model1, config(80, 22)).parameter_count(),
              96u + 608 * 64 + 64 + 86 * 64 + 64 + 325);
    EXPECT_EQ(build(ArchitectureId::Model2, config(80, 22)).parameter_count(), 96u + 784 * 64 + 64 + 325);
    EXPECT_EQ(build(ArchitectureId::Model3, config(80, 22)).parameter_count(),
              96u + 608 * 64 + 64 + 22 * 32 + 32 + 96 * 64 + 64 + 325);
    for (auto arch : {ArchitectureId::Baseline, ArchitectureId::Model1, ArchitectureId::Model2, ArchitectureId::Model3})
        for (int w : {6, 7, 33, 80})
            for (int f : {1, 7, 22}) {
                const int hc = arch == ArchitectureId::Baseline ? 0 : f;
                EXPECT_EQ(build(arch, config(w, hc)).parameter_count(), expected_parameter_count(arch, config(w, hc)));
            }
}

TEST(Build, InvalidConfigs) {
    auto expect_invalid = [](ArchitectureId arch, NetConfig c) {
        try {
            build(arch, c);
            FAIL();
        } catch (const Error& e) {
            EXPECT_EQ(e.code(), ErrorCode::InvalidConfig);
        }
    };
    expect_invalid(ArchitectureId::Baseline, config(4, 0));
    expect_invalid(ArchitectureId::Model1, config(80, 0));
    expect_invalid(ArchitectureId::Model3, config(80, 0));
    auto c = config(80, 0);
    c.out_channels = 0;
    expect_invalid(ArchitectureId::Baseline, c);
    c = config(80, 0);
    c.dropout_p = 1.0;
    expect_invalid(ArchitectureId::Baseline, c);
}

TEST(Forward, ZeroWeightsGiveUniformScores) {
    for (auto arch : {ArchitectureId::Baseline, ArchitectureId::Model1, ArchitectureId::Model3}) {
        auto m = build(arch, config(30, arch == ArchitectureId::Baseline ? 0 : 4));
        for (auto& p : m.params) std::fill(p.value.begin(), p.value.end(), 0.0);
        Rng rng(1);
        const auto ex = random_example(rng, m);
        const std::vector<std::vector<double>> hc{ex.hc};
        const auto s = forward(m, std::vector<std::vector<double>>{ex.window}, hc, false);
        for (double p : softmax_row(s.row(0))) EXPECT_NEAR(p, 0.2, 1e-15);
    }
}

TEST(Forward, BatchIndependenceAndPurity) {
    for (auto arch : {ArchitectureId::Baseline, ArchitectureId::Model1, ArchitectureId::Model2, ArchitectureId::Model3}) {
        const auto m = build(arch, config(40, arch == ArchitectureId::Baseline ? 0 : 6));
        const auto before = save_net(m);
        Rng rng(2);
        std::vector<std::vector<double>> windows, hc;
        for (int i = 0; i < 32; ++i) {
            const auto ex = random_example(rng, m);
            windows.push_back(ex.window);
            hc.push_back(ex.hc);
        }
        const auto full = forward(m, windows, hc, false);
        const auto again = forward(m, windows, hc, false);
        EXPECT_EQ(full.data, again.data);
        EXPECT_EQ(save_net(m), before);
        ASSERT_EQ(full.rows, 32u);
        ASSERT_EQ(full.cols, 5u);
        for (std::size_t i = 0; i < 32; i += 7) {
            const auto one = forward(m, std::span(windows).subspan(i, 1), std::span(hc).subspan(i, 1), false);
            for (std::size_t c = 0; c < 5; ++c) EXPECT_NEAR(one.row(0)[c], full.row(i)[c], 1e-9);
        }
        EXPECT_THROW(forward(m, windows, std::span(hc).subspan(0, 3), false), Error);
    }
}

TEST(Forward, SoftmaxRowsSumToOne) {
    Rng rng(3);
    const auto m = build(ArchitectureId::Model3, config(50, 10));
    for (int i = 0; i < 200; ++i) {
        const auto ex = random_example(rng, m);
        std::vector<double> window = ex.window;
        for (auto& v : window) v *= rng.uniform(0.1, 50.0);
        const auto s = forward(m, std::vector<std::vector<double>>{window}, std::vector<std::vector<double>>{ex.hc},
                               i % 2 == 0, static_cast<std::uint64_t>(i));
        double sum = 0;
        for (double p : softmax_row(s.row(0))) sum += p;
        EXPECT_NEAR(sum, 1.0, 1e-9);
    }
}

TEST(Forward, DropoutOnlyInTrainMode) {
    const auto m = build(ArchitectureId::Baseline, config(40, 0));
    Rng rng(4);
    const std::vector<std::vector<double>> w{random_vec(rng, 40)};
    const auto eval = forward(m, w, {}, false);
    const auto train_a = forward(m, w, {}, true, 1);
    const auto train_b = forward(m, w, {}, true, 1);
    const auto train_c = forward(m, w, {}, true, 2);
    EXPECT_EQ(train_a.data, train_b.data);
    EXPECT_NE(train_a.data, eval.data);
    EXPECT_NE(train_a.data, train_c.data);
}

TEST(Model2, ZeroHcMatchesBaseline) {
    for (std::uint64_t seed : {1u, 9u}) {
        auto c = config(30, 0);
        c.seed = seed;
        c.epochs = 2;
        const auto base = build(ArchitectureId::Baseline, c);
        const auto m2 = build(ArchitectureId::Model2, c);
        ASSERT_EQ(base.params.size(), m2.params.size());
        for (std::size_t p = 0; p < base.params.size(); ++p) EXPECT_EQ(base.params[p].value, m2.params[p].value);
        const auto data = smoke_task(seed, 30, 0);
        const auto tb = train(base, data), t2 = train(m2, data);
        for (std::size_t p = 0; p < tb.params.size(); ++p) EXPECT_EQ(tb.params[p].value, t2.params[p].value);
    }
}

TEST(Train, SmokeTaskIsLearned) {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        for (auto arch : {ArchitectureId::Baseline, ArchitectureId::Model1, ArchitectureId::Model2, ArchitectureId::Model3}) {
            const int hc = arch == ArchitectureId::Baseline ? 0 : 4;
            auto c = config(30, hc);
            c.seed = seed;
            const auto data = smoke_task(seed, 30, hc);
            const auto m = train(build(arch, c), data);
            ASSERT_EQ(m.log.epoch_loss.size(), 50u);
            EXPECT_LT(m.log.epoch_loss.front(), m.log.initial_loss) << architecture_name(arch);
            EXPECT_GE(accuracy(m, data), 0.95) << architecture_name(arch) << " seed " << seed;
        }
    }
}

TEST(Train, DeterministicAndRejectsEmpty) {
    auto c = config(30, 4);
    c.epochs = 3;
    const auto data = smoke_task(5, 30, 4);
    const auto a = train(build(ArchitectureId::Model3, c), data);
    const auto b = train(build(ArchitectureId::Model3, c), data);
    EXPECT_EQ(save_net(a), save_net(b));
    EXPECT_EQ(a.log.epoch_loss, b.log.epoch_loss);
    try {
        train(build(ArchitectureId::Model3, c), std::vector<NetExample>{});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::EmptyDataset);
    }
}

TEST(GradientCheck, AllArchitectures) {
    for (auto arch : {ArchitectureId::Baseline, ArchitectureId::Model1, ArchitectureId::Model2, ArchitectureId::Model3}) {
        for (std::uint64_t seed = 1; seed <= 3; ++seed) {
            auto c = config(50, arch == ArchitectureId::Baseline ? 0 : 22);
            c.seed = seed;
            const auto m = build(arch, c);
            Rng rng(seed);
            const auto ex = random_example(rng, m);
            EXPECT_LT(gradient_check(m, ex, 400, seed), 1e-4) << architecture_name(arch);
        }
    }
}

TEST(GradientCheck, Model3BothBranches) {
    const auto m = build(ArchitectureId::Model3, config(50, 22));
    Rng rng(12);
    const auto ex = random_example(rng, m);
    // All parameters, so both the window trunk and the HC branch are covered.
    EXPECT_LT(gradient_check(m, ex, m.parameter_count()), 1e-4);
}

TEST(GradientCheck, ZeroInputStaysFinite) {
    for (auto arch : {ArchitectureId::Baseline, ArchitectureId::Model3}) {
        const auto m = build(arch, config(50, arch == ArchitectureId::Baseline ? 0 : 5));
        const NetExample ex{std::vector<double>(50, 0.0), std::vector<double>(m.cfg.hc_dim, 0.0), 2};
        for (double g : loss_gradient(m, ex)) ASSERT_TRUE(std::isfinite(g));
        EXPECT_LT(gradient_check(m, ex), 1e-4);
    }
}

TEST(SaveLoad, BitExact) {
    auto c = config(40, 6);
    c.epochs = 2;
    for (auto arch : {ArchitectureId::Baseline, ArchitectureId::Model1, ArchitectureId::Model2, ArchitectureId::Model3}) {
        auto cc = c;
        if (arch == ArchitectureId::Baseline) cc.hc_dim = 0;
        const auto m = train(build(arch, cc), smoke_task(3, 40, cc.hc_dim));
        const auto text = save_net(m);
        const auto back = load_net(text);
        EXPECT_EQ(save_net(back), text);
        EXPECT_EQ(back.arch, arch);
        Rng rng(8);
        std::vector<std::vector<double>> w, h;
        for (int i = 0; i < 10; ++i) {
            const auto ex = random_example(rng, m);
            w.push_back(ex.window);
            h.push_back(ex.hc);
        }
        EXPECT_EQ(forward(m, w, h, false).data, forward(back, w, h, false).data);
    }
    EXPECT_THROW(load_net("hrgroup-net 7\n"), Error);
}
