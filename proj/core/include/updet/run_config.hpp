#pragma once

#include <string>

#include "updet/battlesim.hpp"
#include "updet/mixer.hpp"
#include "updet/model.hpp"
#include "updet/trainer.hpp"

namespace updet {

// Everything a run needs; defaults are the reference hyperparameters. Any
// field can come from a config file ([section] + key = value lines) or a
// --set section.key=value override.
struct RunConfig {
    ScenarioSpec scenario;
    ModelConfig model;
    MixerKind mixer_kind = MixerKind::vdn;
    int mixer_mixing_dim = 32;
    int mixer_hypernet_layers = 2;
    int mixer_hypernet_dim = 64;
    TrainerConfig trainer;
    uint64_t seed = 1;
    std::string out_dir = "run_out";
    std::string checkpoint;  // resume / transfer source

    MixerConfig mixer_config() const {
        MixerConfig m;
        m.kind = mixer_kind;
        m.mixing_dim = mixer_mixing_dim;
        m.hypernet_layers = mixer_hypernet_layers;
        m.hypernet_dim = mixer_hypernet_dim;
        m.n_agents = scenario.n_ally;
        m.state_dim = scenario.state_dim();
        return m;
    }
    ActionGroupSpec groups() const { return {scenario.n_ally - 1, scenario.n_enemy}; }
};

// "section.key" -> value; unknown keys raise ConfigError.
void apply_override(RunConfig& cfg, const std::string& key, const std::string& value);

// "3x5" sets n_ally=3, n_enemy=5.
void apply_scenario_size(RunConfig& cfg, const std::string& spec);

RunConfig load_config_file(const std::string& path, RunConfig base = RunConfig{});

std::string config_to_string(const RunConfig& cfg);

}  // namespace updet
