#pragma once

#include <cstdint>
#include <string>

#include "updet/ops.hpp"
#include "updet/params.hpp"

namespace updet {

enum class MixerKind { vdn, qmix };

std::string to_string(MixerKind k);
MixerKind mixer_kind_from(const std::string& s);

struct MixerConfig {
    MixerKind kind = MixerKind::vdn;
    int mixing_dim = 32;
    int hypernet_layers = 2;
    int hypernet_dim = 64;
    int n_agents = 0;
    int state_dim = 0;  // required by qmix, ignored by vdn
    void validate() const;
};

// Credit assignment combining per-agent chosen Q-values into one team value.
// vdn sums them. qmix feeds them through a two-layer mixing network whose
// weights come from hypernetworks of the global state, with |.| applied to
// the weight outputs so the team value is nondecreasing in every agent value.
class Mixer {
public:
    Mixer(MixerConfig cfg, uint64_t init_seed);

    // q [B, n_agents], state [B, state_dim] -> [B]. vdn accepts an undefined
    // state tensor.
    Tensor mix(const Tensor& q, const Tensor& state, Tape* tape) const;

    const MixerConfig& config() const { return cfg_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }

private:
    MixerConfig cfg_;
    ParamStore params_;
    Tensor w1_a_, w1_b_, w1_ow_, w1_ob_;  // hypernet for first-layer weights
    Tensor b1_w_, b1_b_;                  // first-layer bias hypernet (single linear)
    Tensor w2_a_, w2_b_, w2_ow_, w2_ob_;  // hypernet for second-layer weights
    Tensor v1_w_, v1_b_, v2_w_, v2_b_;    // state-dependent final bias
};

}  // namespace updet
