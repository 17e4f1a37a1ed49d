#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "updet/gradcheck.hpp"
#include "updet/mixer.hpp"

using namespace updet;

namespace {

MixerConfig vdn_cfg(int n) {
    MixerConfig c;
    c.kind = MixerKind::vdn;
    c.n_agents = n;
    return c;
}

MixerConfig qmix_cfg(int n, int s) {
    MixerConfig c;
    c.kind = MixerKind::qmix;
    c.n_agents = n;
    c.state_dim = s;
    return c;
}

Tensor randt(Shape shape, Rng& rng, bool rg = false) {
    Tensor t = Tensor::zeros(shape, rg);
    for (double& v : t.values()) v = rng.range(-1.0, 1.0);
    return t;
}

void zero_params(Mixer& m) {
    for (const auto& [name, t] : m.params().entries()) {
        Tensor h = t;
        for (double& v : h.values()) v = 0.0;
    }
}

}  // namespace

TEST_CASE("vdn sums exactly") {
    Mixer vdn(vdn_cfg(3), 0);
    Tensor q = Tensor::from({1, 3}, {1.0, 2.0, -0.5});
    CHECK(vdn.mix(q, Tensor(), nullptr).item() == 2.5);
    CHECK(vdn.mix(Tensor::zeros({1, 3}), Tensor(), nullptr).item() == 0.0);
    Mixer solo(vdn_cfg(1), 0);
    CHECK(solo.mix(Tensor::from({1, 1}, {3.7}), Tensor(), nullptr).item() == 3.7);
}

TEST_CASE("vdn gradient is exactly one per agent") {
    Mixer vdn(vdn_cfg(4), 0);
    Tensor q = Tensor::from({2, 4}, {1, 2, 3, 4, -1, 0, 1, 2}, true);
    Tape tape;
    Tensor tot = vdn.mix(q, Tensor(), &tape);
    Tensor loss = sum(tot, &tape);
    tape.backward(loss);
    for (double g : q.grad()) CHECK(g == 1.0);
}

TEST_CASE("vdn is permutation-invariant (exactly, on dyadic rationals)") {
    Rng rng(5);
    Mixer vdn(vdn_cfg(5), 0);
    for (int it = 0; it < 200; ++it) {
        std::vector<double> v(5);
        for (double& x : v) x = static_cast<double>(rng.below(4097) - 2048) / 1024.0;
        Tensor q = Tensor::from({1, 5}, std::vector<double>(v));
        const double base = vdn.mix(q, Tensor(), nullptr).item();
        for (int k = 0; k < 5; ++k) {
            std::vector<double> p = v;
            std::swap(p[static_cast<std::size_t>(k)], p[static_cast<std::size_t>((k + 2) % 5)]);
            Tensor qp = Tensor::from({1, 5}, std::move(p));
            CHECK(vdn.mix(qp, Tensor(), nullptr).item() == base);
        }
    }
}

TEST_CASE("qmix with forced unit weights collapses to a sum") {
    Mixer qmix(qmix_cfg(3, 6), 7);
    zero_params(qmix);
    // hyper_w1 output bias 1 everywhere: w1 = |1|; first-layer bias stays 0.
    {
        Tensor b = qmix.params().get("hyper_w1.l1.b");
        for (double& v : b.values()) v = 1.0;
    }
    // hyper_w2 output bias selects exactly one mixing unit.
    {
        Tensor b = qmix.params().get("hyper_w2.l1.b");
        b.values()[0] = 1.0;
    }
    Rng rng(3);
    for (int it = 0; it < 50; ++it) {
        Tensor q = Tensor::zeros({1, 3});
        double s = 0;
        for (double& v : q.values()) {
            v = rng.range(0.0, 2.0);  // nonnegative keeps the relu transparent
            s += v;
        }
        Tensor state = randt({1, 6}, rng);
        CHECK(qmix.mix(q, state, nullptr).item() == doctest::Approx(s).epsilon(1e-12));
    }
}

TEST_CASE("qmix at q=0 equals the state-only bias path") {
    Rng rng(11);
    Mixer qmix(qmix_cfg(3, 8), 23);
    for (int it = 0; it < 20; ++it) {
        Tensor state = randt({1, 8}, rng);
        const double got = qmix.mix(Tensor::zeros({1, 3}), state, nullptr).item();

        // Independent naive evaluation of the bias path:
        // w2(s)^T relu(b1(s)) + V(s).
        auto matvec = [&](const char* w, const char* b, const std::vector<double>& x) {
            Tensor W = qmix.params().get(w);
            Tensor B = qmix.params().get(b);
            std::vector<double> out(static_cast<std::size_t>(W.dim(1)), 0.0);
            for (int i = 0; i < W.dim(0); ++i)
                for (int j = 0; j < W.dim(1); ++j)
                    out[static_cast<std::size_t>(j)] +=
                        x[static_cast<std::size_t>(i)] *
                        W.values()[static_cast<std::size_t>(i * W.dim(1) + j)];
            for (int j = 0; j < W.dim(1); ++j) out[static_cast<std::size_t>(j)] += B.values()[static_cast<std::size_t>(j)];
            return out;
        };
        const std::vector<double>& sv = state.values();
        std::vector<double> h2 = matvec("hyper_w2.l0.w", "hyper_w2.l0.b", sv);
        for (double& v : h2) v = std::max(0.0, v);
        std::vector<double> w2 = matvec("hyper_w2.l1.w", "hyper_w2.l1.b", h2);
        for (double& v : w2) v = std::fabs(v);
        std::vector<double> b1 = matvec("hyper_b1.w", "hyper_b1.b", sv);
        std::vector<double> v1 = matvec("v.l0.w", "v.l0.b", sv);
        for (double& v : v1) v = std::max(0.0, v);
        std::vector<double> v2 = matvec("v.l1.w", "v.l1.b", v1);
        double want = v2[0];
        for (std::size_t k = 0; k < w2.size(); ++k) want += w2[k] * std::max(0.0, b1[k]);
        CHECK(got == doctest::Approx(want).epsilon(1e-10));
    }
}

TEST_CASE("qmix monotonicity: finite differences never go negative") {
    Rng rng(2025);
    Mixer qmix(qmix_cfg(4, 10), 77);
    const double h = 1e-4;
    for (int it = 0; it < 250; ++it) {
        Tensor q = randt({1, 4}, rng);
        Tensor state = randt({1, 10}, rng);
        const double base = qmix.mix(q, state, nullptr).item();
        for (int i = 0; i < 4; ++i) {
            Tensor qp = Tensor::from({1, 4}, q.values());
            qp.values()[static_cast<std::size_t>(i)] += h;
            const double up = qmix.mix(qp, state, nullptr).item();
            CHECK((up - base) / h >= -1e-8);
        }
    }
}

TEST_CASE("qmix depends on agent order, vdn does not") {
    Rng rng(6);
    Mixer qmix(qmix_cfg(3, 6), 5);
    Tensor state = randt({1, 6}, rng);
    Tensor q = Tensor::from({1, 3}, {0.3, -0.7, 1.1});
    Tensor qp = Tensor::from({1, 3}, {1.1, -0.7, 0.3});
    CHECK(std::fabs(qmix.mix(q, state, nullptr).item() - qmix.mix(qp, state, nullptr).item()) >
          1e-12);
}

TEST_CASE("qmix validates state width and config") {
    Mixer qmix(qmix_cfg(3, 6), 1);
    CHECK_THROWS_AS(qmix.mix(Tensor::zeros({1, 3}), Tensor::zeros({1, 5}), nullptr), ShapeError);
    CHECK_THROWS_AS(qmix.mix(Tensor::zeros({1, 4}), Tensor::zeros({1, 6}), nullptr), ShapeError);
    MixerConfig bad = qmix_cfg(3, 0);
    CHECK_THROWS_AS(Mixer(bad, 1), ConfigError);
}

TEST_CASE("qmix gradients match finite differences") {
    Rng rng(8);
    Mixer qmix(qmix_cfg(3, 5), 9);
    Tensor q = randt({4, 3}, rng, true);
    Tensor state = randt({4, 5}, rng, true);
    std::vector<Tensor> params = qmix.params().tensors();
    params.push_back(q);
    params.push_back(state);
    auto f = [&](Tape* t) {
        Tensor tot = qmix.mix(q, state, t);
        return sum(mul(tot, tot, t), t);
    };
    Rng coord(55);
    CHECK(finite_diff_check(f, params, 1e-5, 80, coord) < 1e-4);
}
