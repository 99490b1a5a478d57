#include <catch2/catch_amalgamated.hpp>

#include "flowrecon/autodiff.hpp"
#include "test_helpers.hpp"

using namespace flowrecon;

namespace {

// Reference forward pass written independently: nested vectors, explicit
// loops, no shared code with Mlp.
std::vector<double> reference_forward(const std::vector<int>& sizes,
                                      std::span<const double> params, Vec2 x) {
    std::vector<double> cur{x.x, x.y};
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        const int in = sizes[l], out = sizes[l + 1];
        std::vector<double> nxt(out, 0.0);
        for (int i = 0; i < out; ++i)
            for (int j = 0; j < in; ++j) nxt[i] += params[off + i * in + j] * cur[j];
        off += static_cast<std::size_t>(in) * out;
        for (int i = 0; i < out; ++i) nxt[i] += params[off + i];
        off += out;
        if (l + 2 < sizes.size())
            for (double& v : nxt) v = std::tanh(v);
        cur = nxt;
    }
    return cur;
}

}  // namespace

TEST_CASE("forward basics") {
    SECTION("all-zero parameters give zero output") {
        Mlp net(Mlp::default_sizes(2));
        auto y = net.forward({1.3, -0.4});
        REQUIRE(y.size() == 2);
        CHECK(y[0] == 0.0);
        CHECK(y[1] == 0.0);
    }
    SECTION("single linear layer is Wx + b") {
        Mlp net(std::vector<int>{2, 2});
        auto p = net.params();
        // W = [[1,2],[3,4]], b = [5,6]
        p[0] = 1; p[1] = 2; p[2] = 3; p[3] = 4; p[4] = 5; p[5] = 6;
        auto y = net.forward({10.0, 100.0});
        CHECK(y[0] == Catch::Approx(1 * 10 + 2 * 100 + 5));
        CHECK(y[1] == Catch::Approx(3 * 10 + 4 * 100 + 6));
    }
    SECTION("random two-layer net matches reference forward") {
        auto net = Mlp::init_random({2, 5, 3}, 99);
        Rng rng(1);
        for (int trial = 0; trial < 5; ++trial) {
            Vec2 x{uniform(rng, -2, 2), uniform(rng, -2, 2)};
            auto got = net.forward(x);
            auto want = reference_forward(net.layer_sizes(), net.params(), x);
            REQUIRE(got.size() == want.size());
            for (std::size_t i = 0; i < got.size(); ++i)
                CHECK(got[i] == Catch::Approx(want[i]).margin(1e-14));
        }
    }
}

TEST_CASE("forward_with_derivs on crafted nets") {
    SECTION("linear net: jacobian = W, laplacian = 0") {
        Mlp net(std::vector<int>{2, 2});
        auto p = net.params();
        p[0] = 1.5; p[1] = -2.0; p[2] = 0.25; p[3] = 4.0; p[4] = 0.7; p[5] = -0.1;
        auto e = net.forward_with_derivs({0.3, 0.9});
        CHECK(e.jacobian[0][0] == Catch::Approx(1.5));
        CHECK(e.jacobian[0][1] == Catch::Approx(-2.0));
        CHECK(e.jacobian[1][0] == Catch::Approx(0.25));
        CHECK(e.jacobian[1][1] == Catch::Approx(4.0));
        CHECK(e.laplacian[0] == 0.0);
        CHECK(e.laplacian[1] == 0.0);
    }
    SECTION("net computing tanh(x1) has the closed-form second derivative") {
        Mlp net(std::vector<int>{2, 1, 1});
        auto p = net.params();
        // hidden: W=[[1,0]], b=0; output: W=[[1]], b=0
        p[0] = 1.0; p[1] = 0.0; p[2] = 0.0; p[3] = 1.0; p[4] = 0.0;
        for (double x1 : {-1.2, -0.3, 0.0, 0.8, 2.1}) {
            auto e = net.forward_with_derivs({x1, 0.55});
            const double t = std::tanh(x1);
            CHECK(e.value[0] == Catch::Approx(t).margin(1e-15));
            CHECK(e.jacobian[0][0] == Catch::Approx(1 - t * t).margin(1e-14));
            CHECK(e.jacobian[0][1] == Catch::Approx(0.0).margin(1e-15));
            CHECK(e.laplacian[0] == Catch::Approx(-2 * t * (1 - t * t)).margin(1e-13));
        }
    }
}

TEST_CASE("forward_with_derivs matches central finite differences") {
    auto net = Mlp::init_random({2, 8, 8, 2}, 31);
    Rng rng(5);
    const double h = 1e-4;
    for (int trial = 0; trial < 4; ++trial) {
        Vec2 x{uniform(rng, -1, 1), uniform(rng, -1, 1)};
        auto e = net.forward_with_derivs(x);
        for (int i = 0; i < 2; ++i) {
            const double fx = (net.forward({x.x + h, x.y})[i] - net.forward({x.x - h, x.y})[i]) / (2 * h);
            const double fy = (net.forward({x.x, x.y + h})[i] - net.forward({x.x, x.y - h})[i]) / (2 * h);
            const double fxx = (net.forward({x.x + h, x.y})[i] - 2 * net.forward(x)[i] +
                                net.forward({x.x - h, x.y})[i]) / (h * h);
            const double fyy = (net.forward({x.x, x.y + h})[i] - 2 * net.forward(x)[i] +
                                net.forward({x.x, x.y - h})[i]) / (h * h);
            CHECK(testutil::rel_diff(e.jacobian[i][0], fx) < 1e-6);
            CHECK(testutil::rel_diff(e.jacobian[i][1], fy) < 1e-6);
            CHECK(testutil::rel_diff(e.laplacian[i], fxx + fyy) < 1e-6);
        }
    }
}

TEST_CASE("forward_with_derivs value equals forward bit-exactly") {
    auto net = Mlp::init_random(Mlp::default_sizes(2), 1234);
    Rng rng(9);
    for (int trial = 0; trial < 10; ++trial) {
        Vec2 x{uniform(rng, -3, 3), uniform(rng, -3, 3)};
        auto plain = net.forward(x);
        auto ext = net.forward_with_derivs(x);
        for (std::size_t i = 0; i < plain.size(); ++i) REQUIRE(ext.value[i] == plain[i]);
    }
}

namespace {

// A deliberately derivative-heavy loss: mean over points of
// |value|^2 + |jacobian|^2 + |laplacian|^2. Adjoints are the hand
// differentials of that expression.
double heavy_loss(std::span<const EvalWithDerivs> evals, std::span<OutputAdjoint> adj) {
    double total = 0.0;
    const double inv = 1.0 / static_cast<double>(evals.size());
    for (std::size_t m = 0; m < evals.size(); ++m) {
        const auto& e = evals[m];
        for (std::size_t i = 0; i < e.value.size(); ++i) {
            total += inv * (e.value[i] * e.value[i] + e.laplacian[i] * e.laplacian[i] +
                            e.jacobian[i][0] * e.jacobian[i][0] + e.jacobian[i][1] * e.jacobian[i][1]);
            adj[m].value[i] = 2 * inv * e.value[i];
            adj[m].laplacian[i] = 2 * inv * e.laplacian[i];
            adj[m].jacobian[i][0] = 2 * inv * e.jacobian[i][0];
            adj[m].jacobian[i][1] = 2 * inv * e.jacobian[i][1];
        }
    }
    return total;
}

}  // namespace

TEST_CASE("loss_gradients: stationary zero net") {
    Mlp net(std::vector<int>{2, 4, 2});
    std::vector<Vec2> pts{{0.2, -0.6}};
    auto grad = loss_gradients(net, pts, [](auto evals, auto adj) {
        double total = 0.0;
        for (std::size_t m = 0; m < evals.size(); ++m)
            for (std::size_t i = 0; i < evals[m].value.size(); ++i) {
                total += evals[m].value[i] * evals[m].value[i];
                adj[m].value[i] = 2 * evals[m].value[i];
            }
        return total;
    });
    // output-layer bias gradient is 2*u = 0 for the zero net
    const std::size_t bias_off = net.param_count() - net.output_dim();
    for (std::size_t i = bias_off; i < net.param_count(); ++i) CHECK(grad[i] == 0.0);
}

TEST_CASE("loss_gradients master directional check") {
    Rng seed_rng(2024);
    for (int draw = 0; draw < 20; ++draw) {
        const std::uint64_t seed = seed_rng();
        auto net = Mlp::init_random({2, 8, 8, 8, 2}, seed);
        Rng rng(seed ^ 0x5bd1e995u);
        std::vector<Vec2> pts(6);
        for (auto& p : pts) p = {uniform(rng, -1, 1), uniform(rng, -1, 1)};

        double loss0 = 0.0;
        auto grad = loss_gradients(net, pts, heavy_loss, &loss0);
        auto dir = testutil::random_unit_direction(net.param_count(), rng);
        double dot = 0.0;
        for (std::size_t i = 0; i < grad.size(); ++i) dot += grad[i] * dir[i];

        const double fd = testutil::directional_fd(net, dir, 1e-5, [&] {
            double value = 0.0;
            std::vector<OutputAdjoint> scratch(pts.size());
            for (auto& a : scratch) a.reset(net.output_dim());
            std::vector<EvalWithDerivs> evals;
            evals.reserve(pts.size());
            for (const auto& p : pts) evals.push_back(net.forward_with_derivs(p));
            value = heavy_loss(evals, scratch);
            return value;
        });
        INFO("seed " << seed << " fd " << fd << " dot " << dot);
        CHECK(testutil::rel_diff(fd, dot) < 1e-5);
    }
}

TEST_CASE("loss_gradients on a default-architecture net") {
    auto net = Mlp::init_random(Mlp::default_sizes(1), 777);
    Rng rng(14);
    std::vector<Vec2> pts(4);
    for (auto& p : pts) p = {uniform(rng, -1, 1), uniform(rng, -1, 1)};
    double loss0 = 0.0;
    auto grad = loss_gradients(net, pts, heavy_loss, &loss0);
    auto dir = testutil::random_unit_direction(net.param_count(), rng);
    double dot = 0.0;
    for (std::size_t i = 0; i < grad.size(); ++i) dot += grad[i] * dir[i];
    const double fd = testutil::directional_fd(net, dir, 1e-5, [&] {
        std::vector<OutputAdjoint> scratch(pts.size());
        for (auto& a : scratch) a.reset(net.output_dim());
        std::vector<EvalWithDerivs> evals;
        for (const auto& p : pts) evals.push_back(net.forward_with_derivs(p));
        return heavy_loss(evals, scratch);
    });
    CHECK(testutil::rel_diff(fd, dot) < 1e-5);
}

TEST_CASE("finite inputs give finite extended outputs") {
    auto net = Mlp::init_random(Mlp::default_sizes(2), 55);
    Rng rng(8);
    for (int trial = 0; trial < 50; ++trial) {
        Vec2 x{uniform(rng, -100, 100), uniform(rng, -100, 100)};
        auto e = net.forward_with_derivs(x);
        for (double v : e.value) REQUIRE(std::isfinite(v));
        for (auto& j : e.jacobian) {
            REQUIRE(std::isfinite(j[0]));
            REQUIRE(std::isfinite(j[1]));
        }
        for (double v : e.laplacian) REQUIRE(std::isfinite(v));
    }
}

TEST_CASE("adam_step behavior") {
    SECTION("zero gradient leaves parameters unchanged") {
        std::vector<double> params{1.0, -2.0, 3.0};
        std::vector<double> grads{0.0, 0.0, 0.0};
        AdamState st;
        adam_step(params, grads, st);
        CHECK(params[0] == 1.0);
        CHECK(params[1] == -2.0);
        CHECK(params[2] == 3.0);
    }
    SECTION("first step from fresh state is a sign-like step of size ~tau") {
        // Hand evaluation at t=1: m_hat = g, v_hat = g^2,
        // update = -tau * g / (|g| + eps).
        std::vector<double> params{0.0, 0.0};
        std::vector<double> grads{2.5, -0.3};
        AdamState st;
        st.step_size = 1e-3;
        adam_step(params, grads, st);
        CHECK(params[0] == Catch::Approx(-1e-3 * 2.5 / (2.5 + 1e-8)));
        CHECK(params[1] == Catch::Approx(1e-3 * 0.3 / (0.3 + 1e-8)));
    }
    SECTION("identical runs are bit-identical") {
        auto run = [] {
            std::vector<double> params{0.1, 0.2, 0.3};
            AdamState st;
            Rng rng(77);
            for (int i = 0; i < 100; ++i) {
                std::vector<double> g{normal(rng, 0, 1), normal(rng, 0, 1), normal(rng, 0, 1)};
                adam_step(params, g, st);
            }
            return params;
        };
        auto a = run();
        auto b = run();
        REQUIRE(a == b);
    }
    SECTION("never produces NaN with finite inputs") {
        std::vector<double> params{1.0};
        AdamState st;
        for (int i = 0; i < 1000; ++i) {
            std::vector<double> g{(i % 2 == 0) ? 1e30 : 0.0};
            adam_step(params, g, st);
            REQUIRE(std::isfinite(params[0]));
        }
    }
    SECTION("shape mismatch is an error") {
        std::vector<double> params{1.0, 2.0};
        std::vector<double> grads{1.0};
        AdamState st;
        CHECK_THROWS_AS(adam_step(params, grads, st), FlowError);
    }
}
