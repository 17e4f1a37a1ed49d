#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <sstream>

#include "json.hpp"
#include "updet/battlesim.hpp"

using namespace updet;

namespace {

ScenarioSpec spec3v3(uint64_t seed = 1) {
    ScenarioSpec s;
    s.seed = seed;
    return s;
}

// Stations the two teams at hand-picked positions.
void place(BattleEnv& env, const std::vector<std::tuple<int, int, int>>& ally_xyh,
           const std::vector<std::tuple<int, int, int>>& enemy_xyh) {
    const ScenarioSpec& s = env.spec();
    REQUIRE(static_cast<int>(ally_xyh.size()) == s.n_ally);
    REQUIRE(static_cast<int>(enemy_xyh.size()) == s.n_enemy);
    for (int i = 0; i < s.n_ally; ++i) {
        UnitState u;
        u.team = Team::ally;
        std::tie(u.x, u.y, u.hp) = ally_xyh[static_cast<std::size_t>(i)];
        env.set_unit(i, u);
    }
    for (int j = 0; j < s.n_enemy; ++j) {
        UnitState u;
        u.team = Team::enemy;
        std::tie(u.x, u.y, u.hp) = enemy_xyh[static_cast<std::size_t>(j)];
        env.set_unit(s.n_ally + j, u);
    }
}

std::vector<int> all_noop(int n) { return std::vector<int>(static_cast<std::size_t>(n), kActNoop); }

bool same_units(const std::vector<UnitState>& a, const std::vector<UnitState>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].team != b[i].team || a[i].x != b[i].x || a[i].y != b[i].y ||
            a[i].hp != b[i].hp || a[i].cooldown != b[i].cooldown || a[i].alive != b[i].alive ||
            a[i].last_action != b[i].last_action)
            return false;
    }
    return true;
}

}  // namespace

TEST_CASE("reset: spawn bands, fresh units, determinism") {
    BattleEnv env(spec3v3(42));
    StepResult r = env.reset();
    CHECK(r.reward == 0.0);
    CHECK_FALSE(r.terminal);
    CHECK_FALSE(r.win);
    CHECK(env.units().size() == 6);
    for (const UnitState& u : env.units()) {
        CHECK(u.alive);
        CHECK(u.hp == 10);
        CHECK(u.cooldown == 0);
    }
    for (int i = 0; i < 3; ++i) {
        CHECK(env.units()[static_cast<std::size_t>(i)].x >= 2);
        CHECK(env.units()[static_cast<std::size_t>(i)].x <= 4);
        CHECK(env.units()[static_cast<std::size_t>(3 + i)].x >= 7);
        CHECK(env.units()[static_cast<std::size_t>(3 + i)].x <= 9);
    }
    for (const UnitState& u : env.units()) {  // spawn rows cluster mid-grid
        CHECK(u.y >= 3);
        CHECK(u.y <= 8);
    }

    BattleEnv env2(spec3v3(42));
    env2.reset();
    CHECK(same_units(env.units(), env2.units()));

    ScenarioSpec tiny = spec3v3(1);
    tiny.n_ally = 1;
    tiny.n_enemy = 1;
    BattleEnv small(tiny);
    small.reset();
    CHECK(small.units().size() == 2);
}

TEST_CASE("same seed and actions give bit-identical traces") {
    auto run = [](uint64_t seed) {
        BattleEnv env(spec3v3(seed));
        env.reset();
        Rng rng(99);
        std::vector<std::vector<UnitState>> trace;
        std::vector<double> rewards;
        while (!env.terminal()) {
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
            trace.push_back(env.units());
            rewards.push_back(sr.reward);
        }
        return std::pair(trace, rewards);
    };
    auto [t1, r1] = run(7);
    auto [t2, r2] = run(7);
    REQUIRE(t1.size() == t2.size());
    for (std::size_t i = 0; i < t1.size(); ++i) CHECK(same_units(t1[i], t2[i]));
    CHECK(r1 == r2);
}

TEST_CASE("availability: borders, cooldown, death, always-noop") {
    BattleEnv env(spec3v3());
    env.reset();
    place(env, {{0, 0, 10}, {2, 5, 10}, {3, 5, 10}}, {{9, 5, 10}, {10, 5, 10}, {10, 7, 10}});

    // Corner agent: left and up blocked.
    std::vector<uint8_t> m0 = env.available_actions(0);
    CHECK(m0[kActNoop] == 1);
    CHECK(m0[kActStop] == 1);
    CHECK(m0[kActUp] == 0);
    CHECK(m0[kActLeft] == 0);
    CHECK(m0[kActDown] == 1);
    CHECK(m0[kActRight] == 1);
    for (int j = 0; j < 3; ++j) CHECK(m0[static_cast<std::size_t>(kActAttackFirst + j)] == 0);

    // Dead agent: only noop.
    UnitState dead;
    dead.team = Team::ally;
    dead.x = 2;
    dead.y = 2;
    dead.hp = 0;
    env.set_unit(1, dead);
    std::vector<uint8_t> m1 = env.available_actions(1);
    CHECK(m1[kActNoop] == 1);
    int sum1 = 0;
    for (uint8_t v : m1) sum1 += v;
    CHECK(sum1 == 1);

    // Cooldown shuts off attacks even in range.
    UnitState hot;
    hot.team = Team::ally;
    hot.x = 8;
    hot.y = 5;
    hot.hp = 10;
    hot.cooldown = 2;
    env.set_unit(2, hot);
    std::vector<uint8_t> m2 = env.available_actions(2);
    for (int j = 0; j < 3; ++j) CHECK(m2[static_cast<std::size_t>(kActAttackFirst + j)] == 0);
    hot.cooldown = 0;
    env.set_unit(2, hot);
    m2 = env.available_actions(2);
    CHECK(m2[kActAttackFirst + 0] == 1);     // enemy 0 at distance 1
    CHECK(m2[kActAttackFirst + 1] == 1);     // enemy 1 at distance 2
    CHECK(m2[kActAttackFirst + 2] == 0);     // enemy 2 at sqrt(8) > 2.5
    int sum2 = 0;
    for (uint8_t v : m2) sum2 += v;
    CHECK(sum2 == 8);  // noop, stop, 4 moves, 2 attacks
}

TEST_CASE("all-alive mid-grid agent with every enemy in range has 9 actions") {
    BattleEnv env(spec3v3());
    env.reset();
    place(env, {{5, 5, 10}, {1, 1, 10}, {1, 9, 10}}, {{6, 5, 10}, {5, 6, 10}, {6, 6, 10}});
    std::vector<uint8_t> m = env.available_actions(0);
    int total = 0;
    for (uint8_t v : m) total += v;
    CHECK(total == 9);
}

TEST_CASE("attack misses when the target steps out of range") {
    ScenarioSpec s = spec3v3();
    s.n_ally = 2;
    s.n_enemy = 1;
    BattleEnv env(s);
    env.reset();
    // The enemy's weapon is hot, its nearest ally is agent 1 two cells north,
    // so it steps up; agent 0 fires from sqrt(5) ~ 2.24 away and the move
    // leaves the target at sqrt(8) ~ 2.83 > 2.5.
    place(env, {{4, 7, 10}, {6, 4, 10}}, {{6, 6, 10}});
    UnitState e0 = env.units()[2];
    e0.cooldown = 1;
    env.set_unit(2, e0);
    REQUIRE(env.available_actions(0)[kActAttackFirst + 0] == 1);
    CHECK(env.scripted_action(0) == kActUp);
    StepResult sr = env.step({kActAttackFirst + 0, kActNoop});
    CHECK(env.units()[2].hp == 10);  // no damage
    CHECK(sr.damage_dealt == 0);
    CHECK(sr.reward == 0.0);
    CHECK(env.units()[0].cooldown == 0);  // a miss does not spend the weapon
}

TEST_CASE("simultaneous attacks against pre-step hp, capped reward") {
    ScenarioSpec s = spec3v3();
    s.n_ally = 2;
    s.n_enemy = 2;
    BattleEnv env(s);
    env.reset();
    // Both allies finish a 1-hp enemy in the same tick. The far enemy keeps
    // walking; reward counts 1 hp of damage, not 4.
    place(env, {{4, 5, 10}, {5, 6, 10}}, {{5, 5, 1}, {11, 11, 10}});
    StepResult sr = env.step({kActAttackFirst + 0, kActAttackFirst + 0});
    CHECK(env.units()[2].hp == 0);
    CHECK_FALSE(env.units()[2].alive);
    CHECK(sr.damage_dealt == 1);  // capped at remaining hp
    // Both attacks were effective: both weapons went on cooldown.
    CHECK(env.units()[0].cooldown == 1);  // max_cooldown 2, decayed once this tick
    CHECK(env.units()[1].cooldown == 1);
}

TEST_CASE("mutual kill counts as a win with bonus") {
    ScenarioSpec s = spec3v3();
    s.n_ally = 1;
    s.n_enemy = 1;
    BattleEnv env(s);
    env.reset();
    place(env, {{5, 5, 2}, /*enemy*/}, {{6, 5, 2}});
    StepResult sr = env.step({kActAttackFirst + 0});
    CHECK(sr.terminal);
    CHECK(sr.win);  // all enemies dead, even though the ally died too
    CHECK(sr.damage_dealt == 2);
    CHECK(sr.damage_received == 2);
    CHECK(sr.reward == doctest::Approx(2.0).epsilon(1e-12));  // damage cancels, bonus stays
    CHECK_THROWS_AS(env.step({kActNoop}), InvalidState);
}

TEST_CASE("protocol errors name the agent and action") {
    BattleEnv env(spec3v3());
    env.reset();
    place(env, {{5, 5, 10}, {1, 1, 10}, {1, 9, 10}}, {{11, 11, 10}, {11, 9, 10}, {11, 7, 10}});
    try {
        env.step({kActAttackFirst + 0, kActNoop, kActNoop});  // nothing in range
        FAIL("expected ProtocolError");
    } catch (const ProtocolError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("agent 0") != std::string::npos);
        CHECK(msg.find(std::to_string(kActAttackFirst)) != std::string::npos);
    }
    CHECK_THROWS_AS(env.step({kActNoop, kActNoop}), ProtocolError);  // wrong arity
}

TEST_CASE("observation layout, visibility boundary, dead observers") {
    ScenarioSpec s = spec3v3();
    BattleEnv env(s);
    env.reset();
    // Agent 0 alone in the corner: everyone else out of the view radius.
    place(env, {{0, 0, 10}, {11, 11, 10}, {10, 11, 10}}, {{11, 9, 10}, {11, 10, 10}, {9, 11, 10}});
    ObservationSet o = env.observe(0);
    CHECK(o.n_entities() == 6);
    CHECK(o.entity(0)[kFeatKind + 0] == 1.0);  // self one-hot
    CHECK(o.entity(0)[kFeatAlive] == 1.0);
    CHECK(o.entity(0)[kFeatDist] == 0.0);
    for (int slot = 1; slot < 6; ++slot)
        for (int f = 0; f < kFeatWidth; ++f) CHECK(o.entity(slot)[f] == 0.0);

    // Exactly at the view radius: visible (closed ball).
    place(env, {{0, 5, 10}, {6, 5, 10}, {11, 11, 10}}, {{11, 0, 10}, {11, 1, 10}, {11, 2, 10}});
    o = env.observe(0);
    CHECK(o.entity(1)[kFeatAlive] == 1.0);
    CHECK(o.entity(1)[kFeatKind + 1] == 1.0);  // ally one-hot
    CHECK(o.entity(1)[kFeatDist] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(o.entity(1)[kFeatDx] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(o.entity(1)[kFeatDy] == 0.0);

    // Stacked units: distance zero, both visible.
    place(env, {{5, 5, 10}, {5, 5, 10}, {5, 5, 10}}, {{5, 5, 10}, {5, 5, 4}, {5, 5, 10}});
    o = env.observe(0);
    for (int slot = 1; slot < 6; ++slot) {
        CHECK(o.entity(slot)[kFeatAlive] == 1.0);
        CHECK(o.entity(slot)[kFeatDist] == 0.0);
    }
    CHECK(o.entity(3)[kFeatKind + 2] == 1.0);             // enemy one-hot
    CHECK(o.entity(4)[kFeatHp] == doctest::Approx(0.4));  // normalized health
    CHECK(o.entity(3)[kFeatCooldown] == 0.0);             // enemy cooldown hidden

    // A dead agent observes nothing.
    UnitState dead;
    dead.team = Team::ally;
    dead.x = 5;
    dead.y = 5;
    dead.hp = 0;
    env.set_unit(0, dead);
    o = env.observe(0);
    for (int slot = 0; slot < 6; ++slot)
        for (int f = 0; f < kFeatWidth; ++f) CHECK(o.entity(slot)[f] == 0.0);
}

TEST_CASE("scripted opponent: attack, chase, tie-breaks") {
    ScenarioSpec s = spec3v3();
    s.n_ally = 2;
    s.n_enemy = 1;
    BattleEnv env(s);
    env.reset();

    // Adjacent ally, ready weapon: attack it.
    place(env, {{5, 5, 10}, {0, 0, 10}}, {{6, 5, 10}});
    CHECK(env.scripted_action(0) == kActAttackFirst + 0);

    // Weapon hot: keeps closing (stepping onto the target cell is allowed).
    UnitState e0 = env.units()[2];
    e0.cooldown = 1;
    env.set_unit(2, e0);
    CHECK(env.scripted_action(0) == kActLeft);

    // Weapon hot and already on top of the target: nothing reduces distance.
    place(env, {{6, 5, 10}, {0, 0, 10}}, {{6, 5, 10}});
    e0 = env.units()[2];
    e0.cooldown = 2;
    env.set_unit(2, e0);
    CHECK(env.scripted_action(0) == kActStop);

    // Far away: walks toward the nearest ally even if unseen by any ally.
    place(env, {{1, 1, 10}, {0, 0, 10}}, {{11, 10, 10}});
    CHECK(env.scripted_action(0) == kActLeft);

    // On an exact diagonal no axis step lowers the Chebyshev distance; the
    // chase continues via the Euclidean tiebreak (smaller x wins the tie).
    place(env, {{0, 0, 10}, {9, 9, 10}}, {{3, 3, 10}});
    CHECK(env.scripted_action(0) == kActLeft);

    // Equidistant allies: smaller x wins the tie.
    place(env, {{4, 3, 10}, {8, 3, 10}}, {{6, 3, 10}});
    CHECK(env.scripted_action(0) == kActAttackFirst + 0);
    place(env, {{8, 3, 10}, {4, 3, 10}}, {{6, 3, 10}});
    CHECK(env.scripted_action(0) == kActAttackFirst + 1);
}

TEST_CASE("global state layout") {
    ScenarioSpec s = spec3v3();
    BattleEnv env(s);
    StepResult r = env.reset();
    CHECK(static_cast<int>(r.state.size()) == s.state_dim());
    CHECK(s.state_dim() == 36);
    for (double v : r.state) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("trace export is line-delimited json") {
    BattleEnv env(spec3v3(5));
    std::ostringstream os;
    env.set_trace(&os);
    env.reset();
    env.step(all_noop(3));
    env.step(all_noop(3));
    std::istringstream is(os.str());
    std::string line;
    int lines = 0;
    while (std::getline(is, line)) {
        const nlohmann::json rec = nlohmann::json::parse(line);
        CHECK(rec.contains("tick"));
        CHECK(rec.contains("reward"));
        CHECK(rec.contains("units"));
        CHECK(rec["units"].size() == 6);
        CHECK(rec.contains("actions"));
        ++lines;
    }
    CHECK(lines == 2);
}

TEST_CASE("config validation") {
    ScenarioSpec s = spec3v3();
    s.attack_range = 9.0;  // beyond view radius
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s = spec3v3();
    s.n_enemy = 9;  // over the action inventory cap
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s = spec3v3();
    s.n_ally = 37;  // over band capacity
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s = spec3v3();
    s.max_steps = 0;
    CHECK_THROWS_AS(s.validate(), ConfigError);
}

TEST_CASE("fuzz audit: hp floor, alive flag, reward conservation, length cap") {
    Rng rng(2024);
    for (int episode = 0; episode < 500; ++episode) {
        ScenarioSpec s = spec3v3(rng.next());
        s.n_ally = 1 + rng.below(4);
        s.n_enemy = 1 + rng.below(4);
        BattleEnv env(s);
        env.reset();
        int ticks = 0;
        int total_dealt = 0, total_received = 0;
        double reward_sum = 0.0;
        bool saw_win = false;
        while (!env.terminal()) {
            std::vector<int> acts;
            for (int a = 0; a < s.n_ally; ++a) {
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
            const std::vector<UnitState> before = env.units();
            StepResult sr = env.step(acts);
            ++ticks;

            int enemy_loss = 0, ally_loss = 0;
            for (int u = 0; u < s.n_ally; ++u)
                ally_loss += before[static_cast<std::size_t>(u)].hp -
                             env.units()[static_cast<std::size_t>(u)].hp;
            for (int u = s.n_ally; u < s.n_ally + s.n_enemy; ++u)
                enemy_loss += before[static_cast<std::size_t>(u)].hp -
                              env.units()[static_cast<std::size_t>(u)].hp;

            for (const UnitState& u : env.units()) {
                CHECK(u.hp >= 0);
                CHECK(u.alive == (u.hp > 0));
            }
            CHECK(sr.damage_dealt == enemy_loss);
            CHECK(sr.damage_received == ally_loss);
            const double expect =
                static_cast<double>(sr.damage_dealt - sr.damage_received) / s.unit_hp +
                (sr.win ? s.win_bonus : 0.0);
            CHECK(sr.reward == expect);

            total_dealt += sr.damage_dealt;
            total_received += sr.damage_received;
            reward_sum += sr.reward;
            saw_win = sr.win;
        }
        CHECK(ticks <= s.max_steps);
        // Bookkeeping identity over the whole episode.
        const double recon = static_cast<double>(total_dealt - total_received) / s.unit_hp;
        CHECK(std::fabs(reward_sum - (saw_win ? s.win_bonus : 0.0) - recon) <= 1e-9);
    }
}
