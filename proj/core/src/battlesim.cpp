#include "updet/battlesim.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "json.hpp"

namespace updet {

namespace {

double dist2(const UnitState& a, const UnitState& b) {
    const double dx = a.x - b.x, dy = a.y - b.y;
    return dx * dx + dy * dy;
}

int cheb(int ax, int ay, int bx, int by) {
    return std::max(std::abs(ax - bx), std::abs(ay - by));
}

void apply_move(int action, int& x, int& y, const ScenarioSpec& s) {
    switch (action) {
        case kActUp: y = std::max(0, y - 1); break;
        case kActDown: y = std::min(s.grid_h - 1, y + 1); break;
        case kActLeft: x = std::max(0, x - 1); break;
        case kActRight: x = std::min(s.grid_w - 1, x + 1); break;
        default: break;
    }
}

}  // namespace

namespace {

// Spawn bands sit two columns in from each edge and cover the middle rows,
// so the teams meet within a few ticks and start mostly inside view range.
int band_row0(const ScenarioSpec& s) { return s.grid_h / 4; }
int band_rows(const ScenarioSpec& s) { return s.grid_h - 2 * (s.grid_h / 4); }

}  // namespace

void ScenarioSpec::validate() const {
    if (n_ally < 1 || n_enemy < 1) throw ConfigError("scenario needs at least one unit per team");
    if (n_enemy > kMaxEnemySlots)
        throw ConfigError("n_enemy " + std::to_string(n_enemy) + " exceeds the action inventory cap " +
                          std::to_string(kMaxEnemySlots));
    if (grid_w < 2 * spawn_band + 4 || grid_h < 1)
        throw ConfigError("grid too small for the spawn bands");
    if (attack_range > view_radius)
        throw ConfigError("attack_range must not exceed view_radius");
    if (max_steps < 1) throw ConfigError("max_steps must be >= 1");
    if (unit_hp < 1 || attack_damage < 1) throw ConfigError("unit_hp and attack_damage must be >= 1");
    const int capacity = spawn_band * band_rows(*this);
    if (n_ally > capacity || n_enemy > capacity)
        throw ConfigError("team of " + std::to_string(std::max(n_ally, n_enemy)) +
                          " exceeds spawn band capacity " + std::to_string(capacity));
}

BattleEnv::BattleEnv(ScenarioSpec spec) : spec_(spec), rng_(spec.seed) { spec_.validate(); }

StepResult BattleEnv::reset() {
    units_.assign(static_cast<std::size_t>(spec_.n_ally + spec_.n_enemy), UnitState{});

    auto spawn = [&](Team team, int count, int x0) {
        const int rows = band_rows(spec_);
        std::vector<int> cells(static_cast<std::size_t>(spec_.spawn_band * rows));
        for (std::size_t i = 0; i < cells.size(); ++i) cells[i] = static_cast<int>(i);
        for (int i = 0; i < count; ++i) {  // partial Fisher-Yates
            const int j = i + rng_.below(static_cast<int>(cells.size()) - i);
            std::swap(cells[static_cast<std::size_t>(i)], cells[static_cast<std::size_t>(j)]);
        }
        for (int i = 0; i < count; ++i) {
            UnitState u;
            u.team = team;
            u.x = x0 + cells[static_cast<std::size_t>(i)] % spec_.spawn_band;
            u.y = band_row0(spec_) + cells[static_cast<std::size_t>(i)] / spec_.spawn_band;
            u.hp = spec_.unit_hp;
            u.cooldown = 0;
            u.alive = true;
            u.last_action = kActNoop;
            const int base = team == Team::ally ? 0 : spec_.n_ally;
            units_[static_cast<std::size_t>(base + i)] = u;
        }
    };
    spawn(Team::ally, spec_.n_ally, 2);
    spawn(Team::enemy, spec_.n_enemy, spec_.grid_w - 2 - spec_.spawn_band);

    tick_ = 0;
    started_ = true;
    terminal_ = false;
    win_ = false;
    return snapshot(0.0, 0, 0);
}

void BattleEnv::set_unit(int idx, UnitState u) {
    if (!started_) throw InvalidState("set_unit before reset");
    if (idx < 0 || idx >= static_cast<int>(units_.size()))
        throw InvalidArgument("set_unit: no unit " + std::to_string(idx));
    if (u.x < 0 || u.x >= spec_.grid_w || u.y < 0 || u.y >= spec_.grid_h)
        throw InvalidArgument("set_unit: position off the grid");
    u.alive = u.hp > 0;
    units_[static_cast<std::size_t>(idx)] = u;
}

const UnitState& BattleEnv::unit(Team team, int idx) const {
    const int base = team == Team::ally ? 0 : spec_.n_ally;
    return units_[static_cast<std::size_t>(base + idx)];
}

StepResult BattleEnv::step(const std::vector<int>& ally_actions) {
    if (!started_ || terminal_)
        throw InvalidState("step on a terminal or unreset environment");
    if (static_cast<int>(ally_actions.size()) != spec_.n_ally)
        throw ProtocolError("expected " + std::to_string(spec_.n_ally) + " actions, got " +
                            std::to_string(ally_actions.size()));
    for (int i = 0; i < spec_.n_ally; ++i) {
        const std::vector<uint8_t> mask = available_actions(i);
        const int a = ally_actions[static_cast<std::size_t>(i)];
        if (a < 0 || a >= spec_.n_actions() || !mask[static_cast<std::size_t>(a)])
            throw ProtocolError("agent " + std::to_string(i) + " submitted unavailable action " +
                                std::to_string(a));
    }

    // Phase 1: scripted enemy decisions from the tick-start state.
    std::vector<int> enemy_actions(static_cast<std::size_t>(spec_.n_enemy), kActNoop);
    for (int e = 0; e < spec_.n_enemy; ++e)
        if (unit(Team::enemy, e).alive) enemy_actions[static_cast<std::size_t>(e)] = scripted_action(e);

    // Tick-start snapshot; attacks resolve against these.
    const std::vector<UnitState> before = units_;

    // Phase 2: simultaneous moves.
    for (int i = 0; i < spec_.n_ally; ++i) {
        UnitState& u = units_[static_cast<std::size_t>(i)];
        if (u.alive) apply_move(ally_actions[static_cast<std::size_t>(i)], u.x, u.y, spec_);
    }
    for (int e = 0; e < spec_.n_enemy; ++e) {
        UnitState& u = units_[static_cast<std::size_t>(spec_.n_ally + e)];
        if (u.alive) apply_move(enemy_actions[static_cast<std::size_t>(e)], u.x, u.y, spec_);
    }

    // Phase 3: simultaneous attacks. Effective iff the attacker's weapon was
    // ready at tick start, the target was alive at tick start, and the
    // post-move distance is within range. Damage credited to a victim is
    // capped at its remaining hp, processed in attacker index order.
    std::vector<int> remaining(units_.size());
    for (std::size_t i = 0; i < units_.size(); ++i) remaining[i] = before[i].hp;
    int dealt = 0, received = 0;
    const int n_units = spec_.n_ally + spec_.n_enemy;
    for (int a = 0; a < n_units; ++a) {
        const bool is_ally = a < spec_.n_ally;
        const int action = is_ally ? ally_actions[static_cast<std::size_t>(a)]
                                   : enemy_actions[static_cast<std::size_t>(a - spec_.n_ally)];
        if (action < kActAttackFirst) continue;
        if (!before[static_cast<std::size_t>(a)].alive) continue;
        if (before[static_cast<std::size_t>(a)].cooldown != 0) continue;
        const int t = (is_ally ? spec_.n_ally : 0) + (action - kActAttackFirst);
        if (!before[static_cast<std::size_t>(t)].alive) continue;
        const double dx = units_[static_cast<std::size_t>(a)].x - units_[static_cast<std::size_t>(t)].x;
        const double dy = units_[static_cast<std::size_t>(a)].y - units_[static_cast<std::size_t>(t)].y;
        if (dx * dx + dy * dy > spec_.attack_range * spec_.attack_range) continue;
        const int counted = std::min(spec_.attack_damage, remaining[static_cast<std::size_t>(t)]);
        remaining[static_cast<std::size_t>(t)] -= counted;
        units_[static_cast<std::size_t>(a)].cooldown = spec_.max_cooldown;
        if (is_ally)
            dealt += counted;
        else
            received += counted;
    }
    for (std::size_t i = 0; i < units_.size(); ++i) units_[i].hp = remaining[i];

    // Phase 4: cooldowns decay; phase 5: alive flags.
    for (UnitState& u : units_) {
        u.cooldown = std::max(0, u.cooldown - 1);
        u.alive = u.hp > 0;
    }
    for (int i = 0; i < spec_.n_ally; ++i)
        units_[static_cast<std::size_t>(i)].last_action = ally_actions[static_cast<std::size_t>(i)];
    for (int e = 0; e < spec_.n_enemy; ++e)
        units_[static_cast<std::size_t>(spec_.n_ally + e)].last_action =
            enemy_actions[static_cast<std::size_t>(e)];

    ++tick_;
    const bool allies_alive = std::any_of(units_.begin(), units_.begin() + spec_.n_ally,
                                          [](const UnitState& u) { return u.alive; });
    const bool enemies_alive = std::any_of(units_.begin() + spec_.n_ally, units_.end(),
                                           [](const UnitState& u) { return u.alive; });
    win_ = !enemies_alive;
    terminal_ = win_ || !allies_alive || tick_ >= spec_.max_steps;

    double reward = static_cast<double>(dealt - received) / static_cast<double>(spec_.unit_hp);
    if (win_) reward += spec_.win_bonus;

    if (trace_) write_trace(ally_actions, enemy_actions, reward);
    return snapshot(reward, dealt, received);
}

StepResult BattleEnv::snapshot(double reward, int dealt, int received) const {
    StepResult r;
    r.obs.reserve(static_cast<std::size_t>(spec_.n_ally));
    r.avail.reserve(static_cast<std::size_t>(spec_.n_ally));
    for (int i = 0; i < spec_.n_ally; ++i) {
        r.obs.push_back(observe(i));
        r.avail.push_back(available_actions(i));
    }
    r.reward = reward;
    r.terminal = terminal_;
    r.win = win_;
    r.state = global_state();
    r.damage_dealt = dealt;
    r.damage_received = received;
    return r;
}

ObservationSet BattleEnv::observe(int agent) const {
    ObservationSet obs = ObservationSet::zeros(spec_.n_ally - 1, spec_.n_enemy);
    const UnitState& self = unit(Team::ally, agent);
    if (!self.alive) return obs;  // dead agents observe nothing

    auto fill = [&](double* row, const UnitState& u, int kind, bool expose_cd,
                    bool expose_last) {
        row[kFeatKind + kind] = 1.0;
        row[kFeatHp] = static_cast<double>(u.hp) / spec_.unit_hp;
        if (expose_cd && spec_.max_cooldown > 0)
            row[kFeatCooldown] = static_cast<double>(u.cooldown) / spec_.max_cooldown;
        if (expose_last) row[kFeatLastAction + u.last_action] = 1.0;
        row[kFeatDx] = (u.x - self.x) / spec_.view_radius;
        row[kFeatDy] = (u.y - self.y) / spec_.view_radius;
        row[kFeatDist] = std::sqrt(dist2(u, self)) / spec_.view_radius;
        row[kFeatAlive] = 1.0;
    };

    fill(obs.entity(0), self, 0, true, true);

    int slot = 1;
    for (int j = 0; j < spec_.n_ally; ++j) {
        if (j == agent) continue;
        const UnitState& u = unit(Team::ally, j);
        if (u.alive && dist2(u, self) <= spec_.view_radius * spec_.view_radius)
            fill(obs.entity(slot), u, 1, true, true);
        ++slot;
    }
    for (int j = 0; j < spec_.n_enemy; ++j) {
        const UnitState& u = unit(Team::enemy, j);
        // Enemy cooldown and action are hidden; only the observable fields fill in.
        if (u.alive && dist2(u, self) <= spec_.view_radius * spec_.view_radius)
            fill(obs.entity(slot), u, 2, false, false);
        ++slot;
    }
    return obs;
}

std::vector<uint8_t> BattleEnv::available_actions(int agent) const {
    std::vector<uint8_t> mask(static_cast<std::size_t>(spec_.n_actions()), 0);
    mask[kActNoop] = 1;
    const UnitState& self = unit(Team::ally, agent);
    if (!self.alive) return mask;
    mask[kActStop] = 1;
    if (self.y > 0) mask[kActUp] = 1;
    if (self.y < spec_.grid_h - 1) mask[kActDown] = 1;
    if (self.x > 0) mask[kActLeft] = 1;
    if (self.x < spec_.grid_w - 1) mask[kActRight] = 1;
    if (self.cooldown == 0) {
        for (int j = 0; j < spec_.n_enemy; ++j) {
            const UnitState& u = unit(Team::enemy, j);
            if (u.alive && dist2(u, self) <= spec_.attack_range * spec_.attack_range)
                mask[static_cast<std::size_t>(kActAttackFirst + j)] = 1;
        }
    }
    return mask;
}

int BattleEnv::scripted_action(int enemy_idx) const {
    const UnitState& self = unit(Team::enemy, enemy_idx);
    if (!self.alive) return kActNoop;

    // Nearest alive ally; ties by smaller x, then smaller y.
    int target = -1;
    double best_d2 = 0.0;
    for (int j = 0; j < spec_.n_ally; ++j) {
        const UnitState& u = unit(Team::ally, j);
        if (!u.alive) continue;
        const double d2 = dist2(u, self);
        if (target < 0 || d2 < best_d2 ||
            (d2 == best_d2 && (u.x < unit(Team::ally, target).x ||
                               (u.x == unit(Team::ally, target).x &&
                                u.y < unit(Team::ally, target).y)))) {
            target = j;
            best_d2 = d2;
        }
    }
    if (target < 0) return kActStop;  // cannot happen while the episode runs

    if (self.cooldown == 0 && best_d2 <= spec_.attack_range * spec_.attack_range)
        return kActAttackFirst + target;

    // Close in: prefer the move minimizing (Chebyshev, squared Euclidean),
    // ties by smaller resulting x then y. The Euclidean term keeps the chase
    // moving along exact diagonals, where no single axis step can lower the
    // Chebyshev distance.
    const UnitState& t = unit(Team::ally, target);
    const int cur_cheb = cheb(self.x, self.y, t.x, t.y);
    const double cur_d2 = dist2(self, t);
    int best_action = -1, bx = 0, by = 0, bcheb = 0;
    double bd2 = 0.0;
    for (int a : {kActUp, kActDown, kActLeft, kActRight}) {
        int nx = self.x, ny = self.y;
        apply_move(a, nx, ny, spec_);
        const int c = cheb(nx, ny, t.x, t.y);
        const double dx = nx - t.x, dy = ny - t.y;
        const double d2 = dx * dx + dy * dy;
        const bool better =
            best_action < 0 || c < bcheb || (c == bcheb && d2 < bd2) ||
            (c == bcheb && d2 == bd2 && (nx < bx || (nx == bx && ny < by)));
        if (better) {
            best_action = a;
            bcheb = c;
            bd2 = d2;
            bx = nx;
            by = ny;
        }
    }
    if (best_action >= 0 && (bcheb < cur_cheb || (bcheb == cur_cheb && bd2 < cur_d2)))
        return best_action;
    return kActStop;
}

std::vector<double> BattleEnv::global_state() const {
    std::vector<double> s;
    s.reserve(units_.size() * 6);
    for (const UnitState& u : units_) {
        s.push_back(static_cast<double>(u.x) / (spec_.grid_w - 1));
        s.push_back(static_cast<double>(u.y) / (spec_.grid_h - 1));
        s.push_back(static_cast<double>(u.hp) / spec_.unit_hp);
        s.push_back(spec_.max_cooldown > 0
                        ? static_cast<double>(u.cooldown) / spec_.max_cooldown
                        : 0.0);
        s.push_back(u.alive ? 1.0 : 0.0);
        s.push_back(static_cast<double>(u.last_action) / (kMaxActions - 1));
    }
    return s;
}

void BattleEnv::write_trace(const std::vector<int>& ally_actions,
                            const std::vector<int>& enemy_actions, double reward) const {
    nlohmann::json rec;
    rec["tick"] = tick_;
    rec["reward"] = reward;
    rec["terminal"] = terminal_;
    rec["win"] = win_;
    rec["actions"] = ally_actions;
    rec["enemy_actions"] = enemy_actions;
    auto& arr = rec["units"] = nlohmann::json::array();
    for (const UnitState& u : units_) {
        arr.push_back({{"team", u.team == Team::ally ? "ally" : "enemy"},
                       {"x", u.x},
                       {"y", u.y},
                       {"hp", u.hp},
                       {"cd", u.cooldown},
                       {"alive", u.alive},
                       {"last_action", u.last_action}});
    }
    *trace_ << rec.dump() << '\n';
}

}  // namespace updet
