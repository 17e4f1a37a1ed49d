#pragma once

#include <functional>
#include <vector>

#include "updet/battlesim.hpp"
#include "updet/mixer.hpp"
#include "updet/model.hpp"
#include "updet/optim.hpp"
#include "updet/replay.hpp"

namespace updet {

struct TrainerConfig {
    int batch_size = 32;
    double gamma = 0.99;
    int buffer_capacity = 5000;
    double epsilon_start = 1.0;
    double epsilon_end = 0.05;
    long long epsilon_anneal_steps = 50000;
    int target_update_interval = 200;  // training steps
    long long test_interval = 2000;    // environment steps
    int eval_episodes = 32;
    long long step_budget = 200000;    // environment steps
    double lr = 5e-4;
    double rms_alpha = 0.99;
    double rms_eps = 1e-5;
    void validate() const;
};

// Linear anneal from epsilon_start to epsilon_end, then constant.
double epsilon_at(long long env_step, const TrainerConfig& cfg);

struct EpisodeStats {
    int length = 0;
    double ret = 0.0;
    bool win = false;
};

// Plays one episode: every tick each agent evaluates its Q-values with the
// carried hidden state, masks unavailable actions, and acts epsilon-greedily
// (ties to the lowest index). Hidden state never crosses episodes.
Episode rollout_episode(BattleEnv& env, const Model& model, double eps, Rng& action_rng,
                        EpisodeStats* stats = nullptr);

struct EvalStats {
    double win_rate = 0.0;
    double mean_return = 0.0;
    double mean_length = 0.0;
};

// Greedy evaluation over fresh environments seeded from (seed_base, episode
// index); deterministic for any thread count. Writes nothing anywhere.
EvalStats evaluate(const ScenarioSpec& scenario, const Model& model, int episodes,
                   uint64_t seed_base, int n_threads = 1);

// Per-frame target-network Q-values for a batch of episodes, hidden state
// carried along each sequence; frames index 0..T inclusive. Expects episodes
// sorted by length descending: frame t only holds rows for the leading
// episodes with len >= t. Layout: frames[t][(e * n_agents + a) * n_actions + j].
std::vector<std::vector<double>> target_q_frames(const std::vector<const Episode*>& eps,
                                                 const Model& target_model, int T);

struct TdTargets {
    std::vector<double> y;      // [episode * T + t]
    std::vector<uint8_t> valid; // 1 where t < len(episode)
    int T = 0;
};

// Pure TD assembly from precomputed target q tables: per-agent max over the
// stored availability mask, mixed by the target mixer, then
// y_t = r_t + gamma * (1 - terminal_t) * Q_tot(t+1). Frame t+1 must hold a
// row for every episode with len > t (always true for full tables and for
// length-sorted shrunk ones).
TdTargets td_targets_from_q(const std::vector<const Episode*>& eps,
                            const std::vector<std::vector<double>>& tq_frames,
                            const Mixer& target_mixer, double gamma, int T);

// Targets in the caller's episode order (evaluation itself runs length-sorted).
TdTargets td_targets(const std::vector<const Episode*>& eps, const Model& target_model,
                     const Mixer& target_mixer, double gamma);

// One gradient step on a sampled batch: recomputes online Q along each
// sequence, gathers chosen-action values, mixes, and regresses onto the TD
// targets with padding masked out of the mean. Returns the loss, or 0.0
// without touching parameters when the batch holds no valid timestep.
double train_batch(const std::vector<const Episode*>& eps, Model& model, Mixer& mixer,
                   const Model& target_model, const Mixer& target_mixer, double gamma,
                   OptimState& opt);

// Hard copy online -> target.
void update_target(const Model& model, const Mixer& mixer, Model& target_model,
                   Mixer& target_mixer);

struct MetricsRow {
    long long env_step = 0;
    double loss = 0.0;  // mean training loss since the previous row (nan if none)
    double epsilon = 0.0;
    double win_rate = 0.0;
    double mean_return = 0.0;
    double ep_len = 0.0;
};

struct TrainHooks {
    // Called after each periodic evaluation. Return false to stop training.
    std::function<bool(const MetricsRow&)> on_metrics;
};

struct TrainResult {
    long long env_steps = 0;
    long long train_steps = 0;
    std::vector<MetricsRow> rows;
};

// DRQN-style loop: one training step per collected episode once the buffer
// holds a full batch, hard target refresh every target_update_interval
// training steps, greedy evaluation every test_interval environment steps.
// UPDET_THREADS (or `threads`) > 1 collects that many episodes per wave in
// parallel with per-wave epsilon; 1 reproduces the serial schedule.
TrainResult run_training(Model& model, Mixer& mixer, const ScenarioSpec& scenario,
                         const TrainerConfig& cfg, uint64_t seed, const TrainHooks& hooks,
                         long long start_env_step = 0, int threads = 1);

// Reads UPDET_THREADS; falls back to `fallback`, clamped to [1, 64].
int env_thread_cap(int fallback = 1);

}  // namespace updet
