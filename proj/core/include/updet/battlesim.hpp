#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "updet/obs.hpp"
#include "updet/rng.hpp"

namespace updet {

struct ScenarioSpec {
    int n_ally = 3;
    int n_enemy = 3;
    int grid_w = 12;
    int grid_h = 12;
    int unit_hp = 10;
    int attack_damage = 2;
    double attack_range = 2.5;
    double view_radius = 6.0;
    int max_cooldown = 2;
    int max_steps = 60;
    double win_bonus = 2.0;
    int spawn_band = 3;  // columns per team spawn band (allies left, enemies right)
    uint64_t seed = 0;

    int n_actions() const { return kBasicActions + n_enemy; }
    int state_dim() const { return 6 * (n_ally + n_enemy); }
    void validate() const;
};

enum class Team : int { ally = 0, enemy = 1 };

struct UnitState {
    Team team = Team::ally;
    int x = 0, y = 0;
    int hp = 0;
    int cooldown = 0;
    bool alive = false;
    int last_action = kActNoop;
};

struct StepResult {
    std::vector<ObservationSet> obs;           // one per ally agent
    std::vector<std::vector<uint8_t>> avail;   // one mask per ally agent
    double reward = 0.0;                       // shared team reward
    bool terminal = false;
    bool win = false;                          // all enemies dead
    std::vector<double> state;                 // global state vector (mixer input)
    int damage_dealt = 0;                      // integer bookkeeping for audits
    int damage_received = 0;
};

// Deterministic seeded micro-battle on a grid. Two teams of identical ranged
// units; allies are the learning agents, enemies follow a scripted chase-and-
// attack policy with full state visibility. Per-tick resolution order:
// scripted decisions, simultaneous moves (clamped to the grid), simultaneous
// attacks against tick-start hp with range measured after moves, cooldown
// decrement, terminal check. The shared reward is
// (damage dealt - damage received) / unit_hp, plus win_bonus when the last
// enemy dies. Damage credited to a victim is capped at its remaining hp, in
// attacker index order, so reward bookkeeping is exactly conserved.
class BattleEnv {
public:
    explicit BattleEnv(ScenarioSpec spec);

    StepResult reset();
    StepResult step(const std::vector<int>& ally_actions);

    ObservationSet observe(int agent) const;
    std::vector<uint8_t> available_actions(int agent) const;

    // Scripted enemy policy: attack the nearest alive ally in range when the
    // weapon is ready, otherwise step to reduce Chebyshev distance to it
    // (ties: smaller resulting x, then y), otherwise stop. Enemies see the
    // whole grid.
    int scripted_action(int enemy_idx) const;

    std::vector<double> global_state() const;

    const ScenarioSpec& spec() const { return spec_; }
    const std::vector<UnitState>& units() const { return units_; }
    bool terminal() const { return terminal_; }
    bool win() const { return win_; }
    int tick() const { return tick_; }

    // When set, writes one JSON record per tick (see README for the schema).
    void set_trace(std::ostream* os) { trace_ = os; }

    // Debug/test hook: overwrite one unit's state (position must be in grid;
    // alive flag is derived from hp).
    void set_unit(int idx, UnitState u);

private:
    StepResult snapshot(double reward, int dealt, int received) const;
    void write_trace(const std::vector<int>& ally_actions, const std::vector<int>& enemy_actions,
                     double reward) const;
    const UnitState& unit(Team team, int idx) const;

    ScenarioSpec spec_;
    Rng rng_;
    std::vector<UnitState> units_;  // allies [0, n_ally), enemies [n_ally, n_ally+n_enemy)
    int tick_ = 0;
    bool started_ = false;
    bool terminal_ = true;
    bool win_ = false;
    std::ostream* trace_ = nullptr;
};

}  // namespace updet
