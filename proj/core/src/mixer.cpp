#include "updet/mixer.hpp"

namespace updet {

std::string to_string(MixerKind k) { return k == MixerKind::vdn ? "vdn" : "qmix"; }

MixerKind mixer_kind_from(const std::string& s) {
    if (s == "vdn") return MixerKind::vdn;
    if (s == "qmix") return MixerKind::qmix;
    throw ConfigError("unknown mixer kind: " + s);
}

void MixerConfig::validate() const {
    if (n_agents < 1) throw ConfigError("mixer needs n_agents >= 1");
    if (kind == MixerKind::qmix) {
        if (state_dim < 1) throw ConfigError("qmix requires a global state vector");
        if (mixing_dim < 1 || hypernet_dim < 1) throw ConfigError("qmix dims must be positive");
        if (hypernet_layers != 1 && hypernet_layers != 2)
            throw ConfigError("qmix hypernet_layers must be 1 or 2");
    }
}

Mixer::Mixer(MixerConfig cfg, uint64_t init_seed) : cfg_(cfg) {
    cfg_.validate();
    if (cfg_.kind == MixerKind::vdn) return;
    Rng rng(init_seed);
    const int s = cfg_.state_dim, e = cfg_.mixing_dim, h = cfg_.hypernet_dim;
    const int w1_out = cfg_.n_agents * e;
    if (cfg_.hypernet_layers == 2) {
        w1_a_ = params_.add_linear_weight("hyper_w1.l0.w", s, h, rng);
        w1_b_ = params_.add_zeros("hyper_w1.l0.b", {h});
        w1_ow_ = params_.add_linear_weight("hyper_w1.l1.w", h, w1_out, rng);
        w1_ob_ = params_.add_zeros("hyper_w1.l1.b", {w1_out});
        w2_a_ = params_.add_linear_weight("hyper_w2.l0.w", s, h, rng);
        w2_b_ = params_.add_zeros("hyper_w2.l0.b", {h});
        w2_ow_ = params_.add_linear_weight("hyper_w2.l1.w", h, e, rng);
        w2_ob_ = params_.add_zeros("hyper_w2.l1.b", {e});
    } else {
        w1_ow_ = params_.add_linear_weight("hyper_w1.w", s, w1_out, rng);
        w1_ob_ = params_.add_zeros("hyper_w1.b", {w1_out});
        w2_ow_ = params_.add_linear_weight("hyper_w2.w", s, e, rng);
        w2_ob_ = params_.add_zeros("hyper_w2.b", {e});
    }
    b1_w_ = params_.add_linear_weight("hyper_b1.w", s, e, rng);
    b1_b_ = params_.add_zeros("hyper_b1.b", {e});
    v1_w_ = params_.add_linear_weight("v.l0.w", s, e, rng);
    v1_b_ = params_.add_zeros("v.l0.b", {e});
    v2_w_ = params_.add_linear_weight("v.l1.w", e, 1, rng);
    v2_b_ = params_.add_zeros("v.l1.b", {1});
}

Tensor Mixer::mix(const Tensor& q, const Tensor& state, Tape* tape) const {
    if (q.rank() != 2 || q.dim(1) != cfg_.n_agents)
        throw ShapeError("mix: expected q [B, " + std::to_string(cfg_.n_agents) + "], got " +
                         shape_str(q.shape()));
    const int batch = q.dim(0);
    if (cfg_.kind == MixerKind::vdn) return sum_axis(q, 1, tape);

    if (!state.defined() || state.rank() != 2 || state.dim(0) != batch ||
        state.dim(1) != cfg_.state_dim)
        throw ShapeError("mix: expected state [B, " + std::to_string(cfg_.state_dim) + "]");

    auto hyper = [&](const Tensor& aw, const Tensor& ab, const Tensor& ow,
                     const Tensor& ob) -> Tensor {
        if (cfg_.hypernet_layers == 2) {
            Tensor hsig = relu(add(matmul(state, aw, tape), ab, tape), tape);
            return add(matmul(hsig, ow, tape), ob, tape);
        }
        return add(matmul(state, ow, tape), ob, tape);
    };

    const int e = cfg_.mixing_dim;
    Tensor w1 = reshape(abs_op(hyper(w1_a_, w1_b_, w1_ow_, w1_ob_), tape),
                        {batch, cfg_.n_agents, e}, tape);
    Tensor b1 = add(matmul(state, b1_w_, tape), b1_b_, tape);
    Tensor q3 = reshape(q, {batch, 1, cfg_.n_agents}, tape);
    Tensor h1 = relu(add(reshape(bmm(q3, w1, false, tape), {batch, e}, tape), b1, tape), tape);

    Tensor w2 = reshape(abs_op(hyper(w2_a_, w2_b_, w2_ow_, w2_ob_), tape), {batch, e, 1}, tape);
    Tensor y = reshape(bmm(reshape(h1, {batch, 1, e}, tape), w2, false, tape), {batch}, tape);
    Tensor v = relu(add(matmul(state, v1_w_, tape), v1_b_, tape), tape);
    Tensor bias = reshape(add(matmul(v, v2_w_, tape), v2_b_, tape), {batch}, tape);
    return add(y, bias, tape);
}

}  // namespace updet
