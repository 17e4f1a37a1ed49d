#include "updet/commands.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "updet/checkpoint.hpp"

namespace updet {

namespace {

constexpr const char* kMetricsHeader = "env_step,loss,epsilon,win_rate,mean_return,ep_len";

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void write_text_atomic(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw ConfigError("cannot write " + tmp);
        f << content;
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw ConfigError("cannot rename " + tmp + " to " + path);
}

void ensure_out_dir(const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw ConfigError("cannot create output directory " + dir + ": " + ec.message());
}

std::string metrics_csv(const std::vector<MetricsRow>& rows) {
    std::string out = kMetricsHeader;
    out += '\n';
    for (const MetricsRow& r : rows) {
        out += std::to_string(r.env_step) + "," + fmt(r.loss) + "," + fmt(r.epsilon) + "," +
               fmt(r.win_rate) + "," + fmt(r.mean_return) + "," + fmt(r.ep_len) + "\n";
    }
    return out;
}

void require_same_model_config(const ModelConfig& a, const ModelConfig& b) {
    if (a.d_emb != b.d_emb || a.n_heads != b.n_heads || a.n_layers != b.n_layers ||
        a.d_channel != b.d_channel || a.block_mode != b.block_mode ||
        a.head_mode != b.head_mode || a.temporal_mode != b.temporal_mode ||
        a.rnn_hidden != b.rnn_hidden)
        throw CheckpointError("checkpoint model configuration does not match the run's");
}

TrainResult train_run(const RunConfig& cfg, Model& model, Mixer& mixer,
                      long long start_env_step, const std::vector<MetricsRow>& seed_rows) {
    ensure_out_dir(cfg.out_dir);
    const std::string metrics_path = cfg.out_dir + "/metrics.csv";
    const std::string latest_path = cfg.out_dir + "/checkpoint_latest.bin";
    const std::string final_path = cfg.out_dir + "/checkpoint_final.bin";

    std::vector<MetricsRow> rows = seed_rows;
    write_text_atomic(metrics_path, metrics_csv(rows));

    long long train_steps = 0;
    TrainHooks hooks;
    hooks.on_metrics = [&](const MetricsRow& row) {
        rows.push_back(row);
        write_text_atomic(metrics_path, metrics_csv(rows));
        save_checkpoint(latest_path,
                        make_checkpoint(model, &mixer, cfg.scenario.n_ally, cfg.scenario.n_enemy,
                                        row.env_step, train_steps, cfg.seed));
        return true;
    };

    TrainResult res = run_training(model, mixer, cfg.scenario, cfg.trainer, cfg.seed, hooks,
                                   start_env_step, env_thread_cap());
    res.rows = rows;
    save_checkpoint(final_path,
                    make_checkpoint(model, &mixer, cfg.scenario.n_ally, cfg.scenario.n_enemy,
                                    res.env_steps, res.train_steps, cfg.seed));
    return res;
}

}  // namespace

TrainResult cmd_train(const RunConfig& cfg) {
    cfg.scenario.validate();
    cfg.trainer.validate();
    Model model(cfg.model, cfg.groups(), mix_seed(cfg.seed, 7));
    Mixer mixer(cfg.mixer_config(), mix_seed(cfg.seed, 8));

    long long start = 0;
    if (!cfg.checkpoint.empty()) {
        const Checkpoint ck = load_checkpoint(cfg.checkpoint);
        require_same_model_config(ck.model_cfg, cfg.model);
        load_model_params(ck, model);
        load_mixer_params(ck, mixer);
        start = ck.env_step;
    }
    return train_run(cfg, model, mixer, start, {});
}

EvalReport cmd_eval(const RunConfig& cfg, const std::string& checkpoint_path, int episodes) {
    cfg.scenario.validate();
    const Checkpoint ck = load_checkpoint(checkpoint_path);
    Model model(ck.model_cfg, cfg.groups(), 0);
    load_model_params(ck, model);

    EvalReport rep;
    rep.episodes = episodes;
    // Same seed derivation as a training run's env_step=0 evaluation, so a
    // transfer's zero-shot row reproduces cmd_eval of its source exactly.
    rep.stats = evaluate(cfg.scenario, model, episodes, mix_seed(cfg.seed, 40000),
                         env_thread_cap());
    ensure_out_dir(cfg.out_dir);
    {
        // Debugging artifact: replay the first evaluated episode with the
        // tick-by-tick trace enabled.
        ScenarioSpec s = cfg.scenario;
        s.seed = mix_seed(mix_seed(cfg.seed, 40000), 0);
        BattleEnv env(s);
        std::ostringstream trace;
        env.set_trace(&trace);
        Rng greedy_rng(0);
        rollout_episode(env, model, 0.0, greedy_rng);
        write_text_atomic(cfg.out_dir + "/trace.jsonl", trace.str());
    }
    std::cout << "eval scenario=" << cfg.scenario.n_ally << "x" << cfg.scenario.n_enemy
              << " episodes=" << episodes << " win_rate=" << rep.stats.win_rate
              << " mean_return=" << rep.stats.mean_return
              << " mean_ep_len=" << rep.stats.mean_length << "\n";
    std::string csv = "win_rate,mean_return,ep_len,episodes\n";
    csv += fmt(rep.stats.win_rate) + "," + fmt(rep.stats.mean_return) + "," +
           fmt(rep.stats.mean_length) + "," + std::to_string(episodes) + "\n";
    write_text_atomic(cfg.out_dir + "/eval.csv", csv);
    return rep;
}

TrainResult cmd_transfer(const RunConfig& cfg, const std::string& source_checkpoint) {
    cfg.scenario.validate();
    cfg.trainer.validate();
    const Checkpoint ck = load_checkpoint(source_checkpoint);

    // The architecture travels with the checkpoint; scenario-sized pieces
    // reinitialize for the target team sizes.
    Model model(ck.model_cfg, cfg.groups(), mix_seed(cfg.seed, 7));
    Mixer mixer(cfg.mixer_config(), mix_seed(cfg.seed, 8));
    load_params_lenient(ck, model, &mixer);

    const EvalStats zero_shot = evaluate(cfg.scenario, model, cfg.trainer.eval_episodes,
                                         mix_seed(cfg.seed, 40000), env_thread_cap());
    MetricsRow row0;
    row0.env_step = 0;
    row0.loss = std::numeric_limits<double>::quiet_NaN();
    row0.epsilon = epsilon_at(0, cfg.trainer);
    row0.win_rate = zero_shot.win_rate;
    row0.mean_return = zero_shot.mean_return;
    row0.ep_len = zero_shot.mean_length;

    return train_run(cfg, model, mixer, 0, {row0});
}

void cmd_attention(const RunConfig& cfg, const std::string& checkpoint_path, int episodes) {
    cfg.scenario.validate();
    const Checkpoint ck = load_checkpoint(checkpoint_path);
    if (ck.model_cfg.head_mode != HeadMode::updet)
        throw CheckpointError("attention export needs a updet checkpoint, this one is " +
                              to_string(ck.model_cfg.head_mode));
    Model model(ck.model_cfg, cfg.groups(), 0);
    load_model_params(ck, model);
    ensure_out_dir(cfg.out_dir);

    const int n_agents = cfg.scenario.n_ally;
    std::ostringstream csv;
    csv << "episode,tick,record,values...\n";

    for (int e = 0; e < episodes; ++e) {
        ScenarioSpec s = cfg.scenario;
        s.seed = mix_seed(cfg.seed, static_cast<uint64_t>(e));
        BattleEnv env(s);
        StepResult sr = env.reset();
        HiddenState hidden = model.initial_hidden(n_agents);
        int tick = 0;
        while (!sr.terminal) {
            // Agent 0's attention under its current hidden token.
            HiddenState h0;
            h0.mode = hidden.mode;
            if (hidden.tokens.defined()) {
                const int per = static_cast<int>(hidden.tokens.numel()) / n_agents;
                std::vector<double> v(hidden.tokens.values().begin(),
                                      hidden.tokens.values().begin() + per);
                Shape shp = hidden.tokens.shape();
                shp[0] = 1;
                h0.tokens = Tensor::from(shp, std::move(v));
            }
            const AttentionMaps maps = model.export_attention(sr.obs[0], h0);

            Tensor obs_t = obs_batch_tensor(std::span<const ObservationSet>(sr.obs));
            Model::Result res = model.forward(obs_t, hidden, nullptr);
            hidden = res.hidden;
            std::vector<int> acts(static_cast<std::size_t>(n_agents));
            const int n_act = cfg.scenario.n_actions();
            for (int a = 0; a < n_agents; ++a) {
                std::vector<double> q(res.q.values().begin() + a * n_act,
                                      res.q.values().begin() + (a + 1) * n_act);
                acts[static_cast<std::size_t>(a)] = greedy_action(q, sr.avail[static_cast<std::size_t>(a)]);
            }

            // Labels flag dead enemies from the true simulator state.
            std::vector<std::string> labels;
            labels.push_back("self");
            for (int j = 1; j < n_agents; ++j) labels.push_back("ally" + std::to_string(j));
            for (int j = 0; j < cfg.scenario.n_enemy; ++j) {
                std::string l = "enemy" + std::to_string(j + 1);
                if (!env.units()[static_cast<std::size_t>(cfg.scenario.n_ally + j)].alive)
                    l += "(dead)";
                labels.push_back(l);
            }

            csv << e << "," << tick << ",action," << acts[0] << "\n";
            csv << e << "," << tick << ",labels";
            for (const std::string& l : labels) csv << "," << l;
            csv << "\n";
            const int n_ent = maps.entities;
            for (int r = 0; r < n_ent; ++r) {
                csv << e << "," << tick << "," << labels[static_cast<std::size_t>(r)];
                for (int c = 0; c < n_ent; ++c)
                    csv << "," << fmt(maps.grouped[static_cast<std::size_t>(r * n_ent + c)]);
                csv << "\n";
            }

            // P2 greymap of the grouped matrix.
            std::ostringstream pgm;
            pgm << "P2\n" << n_ent << " " << n_ent << "\n255\n";
            for (int r = 0; r < n_ent; ++r) {
                for (int c = 0; c < n_ent; ++c) {
                    const double v = maps.grouped[static_cast<std::size_t>(r * n_ent + c)];
                    pgm << static_cast<int>(std::lround(255.0 * std::min(1.0, std::max(0.0, v))));
                    pgm << (c + 1 == n_ent ? "\n" : " ");
                }
            }
            char name[64];
            std::snprintf(name, sizeof(name), "/heatmap_e%02d_t%03d.pgm", e, tick);
            write_text_atomic(cfg.out_dir + name, pgm.str());

            sr = env.step(acts);
            ++tick;
        }
    }
    write_text_atomic(cfg.out_dir + "/attention.csv", csv.str());
}

}  // namespace updet
