#include "updet/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <thread>

namespace updet {

void TrainerConfig::validate() const {
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (gamma < 0.0 || gamma >= 1.0) throw ConfigError("gamma must be in [0, 1)");
    if (epsilon_end < 0.0 || epsilon_start > 1.0 || epsilon_end > epsilon_start)
        throw ConfigError("need 0 <= epsilon_end <= epsilon_start <= 1");
    if (epsilon_anneal_steps < 1) throw ConfigError("epsilon_anneal_steps must be >= 1");
    if (buffer_capacity < batch_size) throw ConfigError("buffer smaller than one batch");
    if (target_update_interval < 1 || test_interval < 1 || eval_episodes < 1)
        throw ConfigError("intervals and eval_episodes must be >= 1");
    if (step_budget < 0) throw ConfigError("step_budget must be >= 0");
    if (lr <= 0.0 || rms_alpha < 0.0 || rms_alpha >= 1.0 || rms_eps <= 0.0)
        throw ConfigError("bad optimizer settings");
}

double epsilon_at(long long env_step, const TrainerConfig& cfg) {
    if (env_step < 0) throw InvalidArgument("epsilon_at: negative step");
    if (env_step >= cfg.epsilon_anneal_steps) return cfg.epsilon_end;
    const double frac = static_cast<double>(env_step) / static_cast<double>(cfg.epsilon_anneal_steps);
    return cfg.epsilon_start + frac * (cfg.epsilon_end - cfg.epsilon_start);
}

Episode rollout_episode(BattleEnv& env, const Model& model, double eps, Rng& action_rng,
                        EpisodeStats* stats) {
    StepResult sr = env.reset();
    const ScenarioSpec& spec = env.spec();
    const int n_agents = spec.n_ally;

    Episode ep;
    ep.n_agents = n_agents;
    ep.n_actions = spec.n_actions();
    ep.n_entities = n_agents - 1 + 1 + spec.n_enemy;
    ep.state_dim = spec.state_dim();

    auto push_frame = [&ep](const StepResult& s) {
        for (const ObservationSet& o : s.obs)
            for (double v : o.features) ep.obs.push_back(static_cast<float>(v));
        for (const std::vector<uint8_t>& m : s.avail) ep.avail.insert(ep.avail.end(), m.begin(), m.end());
        for (double v : s.state) ep.state.push_back(static_cast<float>(v));
    };
    push_frame(sr);

    HiddenState hidden = model.initial_hidden(n_agents);
    std::vector<int> acts(static_cast<std::size_t>(n_agents));
    while (!sr.terminal) {
        Tensor obs_t = obs_batch_tensor(std::span<const ObservationSet>(sr.obs));
        Model::Result res = model.forward(obs_t, hidden, nullptr);
        hidden = res.hidden;
        const int n_act = ep.n_actions;
        for (int a = 0; a < n_agents; ++a) {
            const std::vector<uint8_t>& mask = sr.avail[static_cast<std::size_t>(a)];
            if (action_rng.unif() < eps) {
                int n_avail = 0;
                for (uint8_t m : mask) n_avail += m;
                int pick = action_rng.below(n_avail);
                int chosen = -1;
                for (std::size_t i = 0; i < mask.size(); ++i)
                    if (mask[i] && pick-- == 0) {
                        chosen = static_cast<int>(i);
                        break;
                    }
                acts[static_cast<std::size_t>(a)] = chosen;
            } else {
                std::vector<double> q(res.q.values().begin() + a * n_act,
                                      res.q.values().begin() + (a + 1) * n_act);
                acts[static_cast<std::size_t>(a)] = greedy_action(q, mask);
            }
        }
        sr = env.step(acts);
        for (int a = 0; a < n_agents; ++a) ep.actions.push_back(static_cast<uint8_t>(acts[static_cast<std::size_t>(a)]));
        ep.rewards.push_back(sr.reward);
        ep.terminals.push_back(sr.terminal ? 1 : 0);
        ep.ret += sr.reward;
        ++ep.len;
        push_frame(sr);
    }
    ep.win = env.win();
    if (stats) {
        stats->length = ep.len;
        stats->ret = ep.ret;
        stats->win = ep.win;
    }
    return ep;
}

EvalStats evaluate(const ScenarioSpec& scenario, const Model& model, int episodes,
                   uint64_t seed_base, int n_threads) {
    if (episodes < 1) throw InvalidArgument("evaluate: episodes must be >= 1");
    std::vector<EpisodeStats> stats(static_cast<std::size_t>(episodes));
    auto run_range = [&](int begin, int end) {
        for (int i = begin; i < end; ++i) {
            ScenarioSpec s = scenario;
            s.seed = mix_seed(seed_base, static_cast<uint64_t>(i));
            BattleEnv env(s);
            Rng greedy_rng(0);  // never consumed at eps = 0
            rollout_episode(env, model, 0.0, greedy_rng, &stats[static_cast<std::size_t>(i)]);
        }
    };
    const int workers = std::max(1, std::min(n_threads, episodes));
    if (workers == 1) {
        run_range(0, episodes);
    } else {
        std::vector<std::thread> pool;
        const int chunk = (episodes + workers - 1) / workers;
        for (int w = 0; w < workers; ++w)
            pool.emplace_back(run_range, w * chunk, std::min(episodes, (w + 1) * chunk));
        for (std::thread& t : pool) t.join();
    }
    EvalStats out;
    for (const EpisodeStats& s : stats) {
        out.win_rate += s.win ? 1.0 : 0.0;
        out.mean_return += s.ret;
        out.mean_length += s.length;
    }
    out.win_rate /= episodes;
    out.mean_return /= episodes;
    out.mean_length /= episodes;
    return out;
}

namespace {

// Builds the frame-t observation batch for the first `active` episodes.
Tensor frame_obs_tensor(const std::vector<const Episode*>& eps, int t, int active) {
    const int A = eps[0]->n_agents;
    const int n_ent = eps[0]->n_entities;
    std::vector<double> data(static_cast<std::size_t>(active) * A * n_ent * kFeatWidth, 0.0);
    const std::size_t frame = eps[0]->obs_frame_size();
    for (int e = 0; e < active; ++e) {
        if (t > eps[static_cast<std::size_t>(e)]->len) continue;  // padding stays zero
        const float* src = eps[static_cast<std::size_t>(e)]->obs_at(t);
        double* dst = data.data() + static_cast<std::size_t>(e) * frame;
        for (std::size_t i = 0; i < frame; ++i) dst[i] = static_cast<double>(src[i]);
    }
    return Tensor::from({active * A, n_ent, kFeatWidth}, std::move(data));
}

Tensor frame_state_tensor(const std::vector<const Episode*>& eps, int t, int active) {
    const int S = eps[0]->state_dim;
    std::vector<double> data(static_cast<std::size_t>(active) * S, 0.0);
    for (int e = 0; e < active; ++e) {
        if (t > eps[static_cast<std::size_t>(e)]->len) continue;
        const float* src = eps[static_cast<std::size_t>(e)]->state_at(t);
        for (int i = 0; i < S; ++i) data[static_cast<std::size_t>(e * S + i)] = static_cast<double>(src[i]);
    }
    return Tensor::from({active, S}, std::move(data));
}

int max_len(const std::vector<const Episode*>& eps) {
    int T = 0;
    for (const Episode* e : eps) T = std::max(T, e->len);
    return T;
}

// Episodes sorted by length (descending, stable) keep the still-running part
// of a batch a prefix, so finished episodes drop out of the math entirely
// instead of being carried as padding.
std::vector<const Episode*> by_length_desc(std::vector<const Episode*> eps) {
    std::stable_sort(eps.begin(), eps.end(),
                     [](const Episode* a, const Episode* b) { return a->len > b->len; });
    return eps;
}

// Number of leading episodes with len >= t.
int active_at(const std::vector<const Episode*>& sorted, int t) {
    int n = 0;
    while (n < static_cast<int>(sorted.size()) && sorted[static_cast<std::size_t>(n)]->len >= t)
        ++n;
    return n;
}

HiddenState shrink_hidden(const HiddenState& h, int rows, Tape* tape) {
    HiddenState out;
    out.mode = h.mode;
    if (h.tokens.defined() && h.tokens.dim(0) != rows)
        out.tokens = slice(h.tokens, 0, 0, rows, tape);
    else
        out.tokens = h.tokens;
    return out;
}

}  // namespace

std::vector<std::vector<double>> target_q_frames(const std::vector<const Episode*>& eps,
                                                 const Model& target_model, int T) {
    const int A = eps[0]->n_agents;
    std::vector<std::vector<double>> frames;
    frames.reserve(static_cast<std::size_t>(T) + 1);
    HiddenState hidden = target_model.initial_hidden(active_at(eps, 0) * A);
    for (int t = 0; t <= T; ++t) {
        const int active = active_at(eps, t);
        if (active == 0) {
            frames.emplace_back();
            continue;
        }
        hidden = shrink_hidden(hidden, active * A, nullptr);
        Model::Result res =
            target_model.forward(frame_obs_tensor(eps, t, active), hidden, nullptr);
        hidden = res.hidden;
        frames.push_back(res.q.values());
    }
    return frames;
}

TdTargets td_targets_from_q(const std::vector<const Episode*>& eps,
                            const std::vector<std::vector<double>>& tq_frames,
                            const Mixer& target_mixer, double gamma, int T) {
    const int b = static_cast<int>(eps.size());
    const int A = eps[0]->n_agents;
    const int n_act = eps[0]->n_actions;

    // Per-agent max over available actions at t+1, for every (episode, t) row.
    std::vector<double> maxq(static_cast<std::size_t>(b) * T * A, 0.0);
    std::vector<double> state_next(static_cast<std::size_t>(b) * T * eps[0]->state_dim, 0.0);
    const int S = eps[0]->state_dim;
    for (int e = 0; e < b; ++e) {
        const Episode* ep = eps[static_cast<std::size_t>(e)];
        for (int t = 0; t < ep->len; ++t) {
            const std::vector<double>& q_next = tq_frames[static_cast<std::size_t>(t) + 1];
            for (int a = 0; a < A; ++a) {
                const uint8_t* mask = ep->avail_at(t + 1, a);
                const double* row = q_next.data() + (static_cast<std::size_t>(e) * A + a) * n_act;
                double best = -std::numeric_limits<double>::infinity();
                for (int j = 0; j < n_act; ++j)
                    if (mask[j]) best = std::max(best, row[j]);
                maxq[(static_cast<std::size_t>(e) * T + t) * A + a] = best;
            }
            const float* st = ep->state_at(t + 1);
            for (int i = 0; i < S; ++i)
                state_next[(static_cast<std::size_t>(e) * T + t) * S + i] = static_cast<double>(st[i]);
        }
    }

    Tensor qtot = target_mixer.mix(Tensor::from({b * T, A}, std::move(maxq)),
                                   Tensor::from({b * T, S}, std::move(state_next)), nullptr);

    TdTargets out;
    out.T = T;
    out.y.assign(static_cast<std::size_t>(b) * T, 0.0);
    out.valid.assign(static_cast<std::size_t>(b) * T, 0);
    for (int e = 0; e < b; ++e) {
        const Episode* ep = eps[static_cast<std::size_t>(e)];
        for (int t = 0; t < ep->len; ++t) {
            const std::size_t i = static_cast<std::size_t>(e) * T + t;
            const double bootstrap =
                ep->terminals[static_cast<std::size_t>(t)] ? 0.0 : gamma * qtot.values()[i];
            out.y[i] = ep->rewards[static_cast<std::size_t>(t)] + bootstrap;
            out.valid[i] = 1;
        }
    }
    return out;
}

TdTargets td_targets(const std::vector<const Episode*>& eps, const Model& target_model,
                     const Mixer& target_mixer, double gamma) {
    const int T = max_len(eps);
    if (T == 0) {
        TdTargets empty;
        empty.T = 0;
        return empty;
    }
    // Length-sorted evaluation (so finished episodes cost nothing), remapped
    // back to the caller's episode order.
    const int b = static_cast<int>(eps.size());
    std::vector<int> order(static_cast<std::size_t>(b));
    for (int i = 0; i < b; ++i) order[static_cast<std::size_t>(i)] = i;
    std::stable_sort(order.begin(), order.end(), [&](int a, int c) {
        return eps[static_cast<std::size_t>(a)]->len > eps[static_cast<std::size_t>(c)]->len;
    });
    std::vector<const Episode*> sorted;
    sorted.reserve(eps.size());
    for (int i : order) sorted.push_back(eps[static_cast<std::size_t>(i)]);

    const TdTargets inner =
        td_targets_from_q(sorted, target_q_frames(sorted, target_model, T), target_mixer, gamma, T);
    TdTargets out;
    out.T = T;
    out.y.assign(inner.y.size(), 0.0);
    out.valid.assign(inner.valid.size(), 0);
    for (int s = 0; s < b; ++s) {
        const int o = order[static_cast<std::size_t>(s)];
        for (int t = 0; t < T; ++t) {
            out.y[static_cast<std::size_t>(o) * T + t] = inner.y[static_cast<std::size_t>(s) * T + t];
            out.valid[static_cast<std::size_t>(o) * T + t] =
                inner.valid[static_cast<std::size_t>(s) * T + t];
        }
    }
    return out;
}

double train_batch(const std::vector<const Episode*>& eps_in, Model& model, Mixer& mixer,
                   const Model& target_model, const Mixer& target_mixer, double gamma,
                   OptimState& opt) {
    if (eps_in.empty()) throw InvalidArgument("train_batch: empty batch");
    const std::vector<const Episode*> eps = by_length_desc(eps_in);
    const int A = eps[0]->n_agents;
    const int T = max_len(eps);
    if (T == 0) return 0.0;  // nothing valid: zero loss, zero gradients

    TdTargets td = td_targets(eps, target_model, target_mixer, gamma);

    Tape tape;
    HiddenState hidden = model.initial_hidden(active_at(eps, 0) * A);
    Tensor loss_sum;
    double count = 0.0;
    for (int t = 0; t < T; ++t) {
        // Episodes are length-sorted, so the ones still running at t form a
        // prefix; everything behind it drops out of the computation.
        const int active = active_at(eps, t + 1);
        if (active == 0) break;
        hidden = shrink_hidden(hidden, active * A, &tape);
        Model::Result res = model.forward(frame_obs_tensor(eps, t, active), hidden, &tape);
        hidden = res.hidden;

        std::vector<int> idx(static_cast<std::size_t>(active) * A);
        std::vector<double> y_t(static_cast<std::size_t>(active), 0.0);
        std::vector<double> valid_t(static_cast<std::size_t>(active), 0.0);
        for (int e = 0; e < active; ++e) {
            for (int a = 0; a < A; ++a)
                idx[static_cast<std::size_t>(e) * A + a] = eps[static_cast<std::size_t>(e)]->action_at(t, a);
            const std::size_t i = static_cast<std::size_t>(e) * T + t;
            y_t[static_cast<std::size_t>(e)] = td.y[i];
            valid_t[static_cast<std::size_t>(e)] = td.valid[i];
            count += td.valid[i];
        }
        Tensor chosen = reshape(gather(res.q, idx, &tape), {active, A}, &tape);
        Tensor qtot = mixer.mix(chosen, frame_state_tensor(eps, t, active), &tape);
        Tensor err = squared_error(qtot, Tensor::from({active}, std::move(y_t)), &tape);
        Tensor masked = mul(err, Tensor::from({active}, std::move(valid_t)), &tape);
        Tensor s = sum(masked, &tape);
        loss_sum = loss_sum.defined() ? add(loss_sum, s, &tape) : s;
    }
    if (count == 0.0) return 0.0;

    Tensor loss = affine(loss_sum, 1.0 / count, 0.0, &tape);
    const double loss_val = loss.item();
    tape.backward(loss);

    std::vector<Tensor> params = model.params().tensors();
    for (Tensor& t : mixer.params().tensors()) params.push_back(t);
    optim_step(params, opt);
    return loss_val;
}

void update_target(const Model& model, const Mixer& mixer, Model& target_model,
                   Mixer& target_mixer) {
    target_model.params().copy_values_from(model.params());
    target_mixer.params().copy_values_from(mixer.params());
}

int env_thread_cap(int fallback) {
    int v = fallback;
    if (const char* s = std::getenv("UPDET_THREADS")) {
        char* end = nullptr;
        const long parsed = std::strtol(s, &end, 10);
        if (end && *end == '\0' && parsed > 0) v = static_cast<int>(parsed);
    }
    return std::clamp(v, 1, 64);
}

TrainResult run_training(Model& model, Mixer& mixer, const ScenarioSpec& scenario,
                         const TrainerConfig& cfg, uint64_t seed, const TrainHooks& hooks,
                         long long start_env_step, int threads) {
    cfg.validate();
    scenario.validate();

    Model target_model(model.config(), model.groups(), 0);
    Mixer target_mixer(mixer.config(), 0);
    update_target(model, mixer, target_model, target_mixer);

    ReplayBuffer buffer(cfg.buffer_capacity);
    OptimState opt;
    opt.lr = cfg.lr;
    opt.alpha = cfg.rms_alpha;
    opt.eps = cfg.rms_eps;

    const int waves = std::max(1, threads);
    std::vector<BattleEnv> envs;
    std::vector<Rng> action_rngs;
    envs.reserve(static_cast<std::size_t>(waves));
    for (int w = 0; w < waves; ++w) {
        ScenarioSpec s = scenario;
        s.seed = mix_seed(seed, 1000 + static_cast<uint64_t>(w));
        envs.emplace_back(s);
        action_rngs.emplace_back(mix_seed(seed, 2000 + static_cast<uint64_t>(w)));
    }
    Rng sample_rng(mix_seed(seed, 3000));

    TrainResult result;
    long long env_step = start_env_step;
    long long next_eval = (env_step / cfg.test_interval + 1) * cfg.test_interval;
    double loss_acc = 0.0;
    long long loss_n = 0;
    bool stop = false;

    while (!stop && env_step < cfg.step_budget) {
        const double eps_now = epsilon_at(env_step, cfg);
        std::vector<Episode> wave(static_cast<std::size_t>(waves));
        if (waves == 1) {
            wave[0] = rollout_episode(envs[0], model, eps_now, action_rngs[0]);
        } else {
            std::vector<std::thread> pool;
            for (int w = 0; w < waves; ++w)
                pool.emplace_back([&, w]() {
                    wave[static_cast<std::size_t>(w)] =
                        rollout_episode(envs[static_cast<std::size_t>(w)], model, eps_now,
                                        action_rngs[static_cast<std::size_t>(w)]);
                });
            for (std::thread& t : pool) t.join();
        }
        for (Episode& ep : wave) {
            env_step += ep.len;
            buffer.add(std::move(ep));
            if (buffer.size() >= cfg.batch_size) {
                const double loss = train_batch(buffer.sample(cfg.batch_size, sample_rng), model,
                                                mixer, target_model, target_mixer, cfg.gamma, opt);
                loss_acc += loss;
                ++loss_n;
                ++result.train_steps;
                if (result.train_steps % cfg.target_update_interval == 0)
                    update_target(model, mixer, target_model, target_mixer);
            }
        }
        if (env_step >= next_eval) {
            const EvalStats es = evaluate(scenario, model, cfg.eval_episodes,
                                          mix_seed(seed, 40000 + static_cast<uint64_t>(env_step)),
                                          waves);
            MetricsRow row;
            row.env_step = env_step;
            row.loss = loss_n > 0 ? loss_acc / static_cast<double>(loss_n)
                                  : std::numeric_limits<double>::quiet_NaN();
            row.epsilon = epsilon_at(env_step, cfg);
            row.win_rate = es.win_rate;
            row.mean_return = es.mean_return;
            row.ep_len = es.mean_length;
            result.rows.push_back(row);
            loss_acc = 0.0;
            loss_n = 0;
            if (hooks.on_metrics && !hooks.on_metrics(row)) stop = true;
            next_eval = (env_step / cfg.test_interval + 1) * cfg.test_interval;
        }
    }
    result.env_steps = env_step;
    return result;
}

}  // namespace updet
