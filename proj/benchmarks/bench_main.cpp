#include <benchmark/benchmark.h>

#include "updet/battlesim.hpp"
#include "updet/mixer.hpp"
#include "updet/model.hpp"
#include "updet/trainer.hpp"

namespace {

using namespace updet;

ScenarioSpec scenario(int n) {
    ScenarioSpec s;
    s.n_ally = n;
    s.n_enemy = n;
    s.seed = 7;
    return s;
}

void BM_SoftmaxScaled(benchmark::State& state) {
    Rng rng(1);
    Tensor logits = Tensor::zeros({96, static_cast<int>(state.range(0)), 8});
    for (double& v : logits.values()) v = rng.range(-3, 3);
    for (auto _ : state) {
        Tensor y = softmax_scaled(logits, 11, nullptr);
        benchmark::DoNotOptimize(y.values().data());
    }
}
BENCHMARK(BM_SoftmaxScaled)->Arg(7)->Arg(15);

void BM_ModelForward(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    Model model(ModelConfig{}, ActionGroupSpec{n - 1, n}, 3);
    BattleEnv env(scenario(n));
    StepResult sr = env.reset();
    Tensor obs = obs_batch_tensor(std::span<const ObservationSet>(sr.obs));
    HiddenState h = model.initial_hidden(n);
    for (auto _ : state) {
        Model::Result r = model.forward(obs, h, nullptr);
        benchmark::DoNotOptimize(r.q.values().data());
    }
}
BENCHMARK(BM_ModelForward)->Arg(3)->Arg(7);

void BM_SimStep(benchmark::State& state) {
    BattleEnv env(scenario(3));
    Rng rng(5);
    env.reset();
    for (auto _ : state) {
        if (env.terminal()) env.reset();
        std::vector<int> acts;
        for (int a = 0; a < 3; ++a) {
            const std::vector<uint8_t> mask = env.available_actions(a);
            int n_avail = 0;
            for (uint8_t m : mask) n_avail += m;
            int pick = rng.below(n_avail);
            for (std::size_t i = 0; i < mask.size(); ++i)
                if (mask[i] && pick-- == 0) {
                    acts.push_back(static_cast<int>(i));
                    break;
                }
        }
        StepResult sr = env.step(acts);
        benchmark::DoNotOptimize(sr.reward);
    }
}
BENCHMARK(BM_SimStep);

void BM_TrainBatch(benchmark::State& state) {
    const ScenarioSpec spec = scenario(3);
    Model model(ModelConfig{}, ActionGroupSpec{2, 3}, 3);
    Model target(ModelConfig{}, ActionGroupSpec{2, 3}, 3);
    MixerConfig mc;
    mc.n_agents = 3;
    mc.state_dim = spec.state_dim();
    Mixer mixer(mc, 4), target_mixer(mc, 4);
    BattleEnv env(spec);
    Rng rng(11);
    ReplayBuffer buffer(64);
    for (int i = 0; i < 8; ++i) buffer.add(rollout_episode(env, model, 1.0, rng));
    OptimState opt;
    Rng srng(2);
    for (auto _ : state) {
        const double loss =
            train_batch(buffer.sample(8, srng), model, mixer, target, target_mixer, 0.99, opt);
        benchmark::DoNotOptimize(loss);
    }
}
BENCHMARK(BM_TrainBatch)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
