#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "updet/mixer.hpp"
#include "updet/model.hpp"

namespace updet {

struct CheckpointEntry {
    std::string name;  // "model.*" or "mixer.*"
    Shape shape;
    std::vector<float> values;  // parameters persist as f32
};

// Custom little-endian binary with a text magic line and a trailing FNV-1a
// checksum; save(load(f)) is byte-identical to f.
struct Checkpoint {
    ModelConfig model_cfg;
    MixerConfig mixer_cfg;
    int n_ally = 0;   // scenario at save time (informational for size-free heads)
    int n_enemy = 0;
    long long env_step = 0;
    long long train_step = 0;
    uint64_t seed_state = 0;
    std::vector<CheckpointEntry> entries;
};

Checkpoint make_checkpoint(const Model& model, const Mixer* mixer, int n_ally, int n_enemy,
                           long long env_step, long long train_step, uint64_t seed_state);

// Atomic: writes to <path>.tmp, then renames.
void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

// Strict load: every model entry must match the target's parameter layout
// exactly. Scenario-sized heads (gru/aggregation/vanilla) therefore refuse to
// load into a different team configuration; the size-free head always loads.
void load_model_params(const Checkpoint& ck, Model& model);

bool mixer_layout_matches(const Checkpoint& ck, const Mixer& mixer);
void load_mixer_params(const Checkpoint& ck, Mixer& mixer);

// Transfer load: copies every entry whose name and shape match the freshly
// initialized target; anything scenario-bound (encoders, action heads, state
// hypernetworks) stays at its fresh initialization. Returns entries copied.
int load_params_lenient(const Checkpoint& ck, Model& model, Mixer* mixer);

}  // namespace updet
