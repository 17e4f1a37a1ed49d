#pragma once

#include <cstdint>
#include <vector>

#include "updet/obs.hpp"
#include "updet/rng.hpp"

namespace updet {

// One stored episode. Frame t holds the observation/availability/state
// BEFORE action t; there are len+1 frames so the final frame feeds the
// bootstrap target. Observations are stored as f32 to keep the buffer small.
struct Episode {
    int n_agents = 0;
    int n_actions = 0;
    int n_entities = 0;
    int state_dim = 0;
    int len = 0;

    std::vector<float> obs;        // (len+1) * n_agents * n_entities * kFeatWidth
    std::vector<uint8_t> avail;    // (len+1) * n_agents * n_actions
    std::vector<uint8_t> actions;  // len * n_agents
    std::vector<double> rewards;   // len
    std::vector<uint8_t> terminals;  // len
    std::vector<float> state;      // (len+1) * state_dim

    bool win = false;
    double ret = 0.0;

    std::size_t obs_frame_size() const {
        return static_cast<std::size_t>(n_agents) * n_entities * kFeatWidth;
    }
    const float* obs_at(int t) const { return obs.data() + static_cast<std::size_t>(t) * obs_frame_size(); }
    const uint8_t* avail_at(int t, int agent) const {
        return avail.data() +
               (static_cast<std::size_t>(t) * n_agents + static_cast<std::size_t>(agent)) * n_actions;
    }
    int action_at(int t, int agent) const {
        return actions[static_cast<std::size_t>(t) * n_agents + static_cast<std::size_t>(agent)];
    }
    const float* state_at(int t) const {
        return state.data() + static_cast<std::size_t>(t) * state_dim;
    }
};

// Fixed-capacity ring of episodes with uniform sampling (without replacement
// inside one batch). Every insert is audited: a stored action must have been
// available at its timestep.
class ReplayBuffer {
public:
    explicit ReplayBuffer(int capacity);

    void add(Episode ep);
    std::vector<const Episode*> sample(int batch, Rng& rng) const;

    int size() const { return static_cast<int>(items_.size()); }
    int capacity() const { return capacity_; }

private:
    int capacity_;
    std::vector<Episode> items_;
    std::size_t next_ = 0;
};

}  // namespace updet
