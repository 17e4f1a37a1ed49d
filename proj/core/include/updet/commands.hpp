#pragma once

#include <string>

#include "updet/run_config.hpp"
#include "updet/trainer.hpp"

namespace updet {

// Operator entry points behind the CLI. All of them throw: ConfigError for
// bad settings, CheckpointError for load/save problems, anything else is a
// runtime fault. File writes go through write-to-temp-then-rename.

// Trains to the step budget; writes metrics.csv, a rolling
// checkpoint_latest.bin at every test interval, and checkpoint_final.bin.
// With cfg.checkpoint set, resumes from it (env_step continues).
TrainResult cmd_train(const RunConfig& cfg);

struct EvalReport {
    EvalStats stats;
    int episodes = 0;
};

// Greedy evaluation of a checkpoint on cfg.scenario; prints one line and
// writes eval.csv under cfg.out_dir.
EvalReport cmd_eval(const RunConfig& cfg, const std::string& checkpoint_path, int episodes);

// Fine-tunes from a source checkpoint on cfg.scenario. Architecture comes
// from the checkpoint; parameters whose shapes survive the scenario change
// are copied, scenario-sized ones restart fresh. metrics.csv additionally
// records the zero-shot evaluation as its env_step=0 row.
TrainResult cmd_transfer(const RunConfig& cfg, const std::string& source_checkpoint);

// Replays greedy episodes and writes agent 0's grouped attention matrix per
// tick (attention.csv) plus one PGM heatmap per tick.
void cmd_attention(const RunConfig& cfg, const std::string& checkpoint_path, int episodes);

}  // namespace updet
