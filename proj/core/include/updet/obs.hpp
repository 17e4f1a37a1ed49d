#pragma once

#include <vector>

#include "updet/errors.hpp"

namespace updet {

// Action inventory: 6 basic actions plus one attack per enemy slot.
enum Action : int {
    kActNoop = 0,
    kActStop = 1,
    kActUp = 2,
    kActDown = 3,
    kActLeft = 4,
    kActRight = 5,
    kActAttackFirst = 6,
};

constexpr int kBasicActions = 6;
// Hard cap on enemy slots so the last-action one-hot (and with it the entity
// feature width) is identical across scenarios of any size.
constexpr int kMaxEnemySlots = 8;
constexpr int kMaxActions = kBasicActions + kMaxEnemySlots;

// Entity feature vector layout, one fixed width for every entity in every
// scenario: kind one-hot (self/ally/enemy), health, cooldown, last-action
// one-hot, relative position, relative distance, alive flag.
constexpr int kFeatKind = 0;
constexpr int kFeatHp = 3;
constexpr int kFeatCooldown = 4;
constexpr int kFeatLastAction = 5;
constexpr int kFeatDx = kFeatLastAction + kMaxActions;
constexpr int kFeatDy = kFeatDx + 1;
constexpr int kFeatDist = kFeatDx + 2;
constexpr int kFeatAlive = kFeatDx + 3;
constexpr int kFeatWidth = kFeatAlive + 1;

// One agent's view: entity slot 0 is the agent itself, slots 1..n_allies are
// the other allies in fixed scenario order, then n_enemies enemy slots.
// Dead or out-of-view entities are all-zero rows (alive flag 0).
struct ObservationSet {
    int n_allies = 0;  // allies other than self
    int n_enemies = 0;
    std::vector<double> features;  // n_entities() * kFeatWidth, row-major

    int n_entities() const { return 1 + n_allies + n_enemies; }

    double* entity(int slot) { return features.data() + static_cast<std::size_t>(slot) * kFeatWidth; }
    const double* entity(int slot) const {
        return features.data() + static_cast<std::size_t>(slot) * kFeatWidth;
    }

    static ObservationSet zeros(int n_allies, int n_enemies) {
        ObservationSet o;
        o.n_allies = n_allies;
        o.n_enemies = n_enemies;
        o.features.assign(static_cast<std::size_t>(o.n_entities()) * kFeatWidth, 0.0);
        return o;
    }
};

// Pairing of entity slots to action groups: the 6 basic actions pair with the
// self entity (slot 0), attack j pairs with enemy slot j; ally slots pair
// with no action.
struct ActionGroupSpec {
    int n_allies = 0;
    int n_enemies = 0;

    int n_actions() const { return kBasicActions + n_enemies; }
    int self_slot() const { return 0; }
    int enemy_slot(int attack_idx) const { return 1 + n_allies + attack_idx; }
    int n_entities() const { return 1 + n_allies + n_enemies; }

    void validate() const {
        if (n_allies < 0 || n_enemies < 1)
            throw ConfigError("action groups need >= 1 enemy slot and >= 0 ally slots");
        if (n_enemies > kMaxEnemySlots)
            throw ConfigError("scenario has " + std::to_string(n_enemies) +
                              " enemies; the fixed action inventory supports at most " +
                              std::to_string(kMaxEnemySlots));
    }
};

}  // namespace updet
