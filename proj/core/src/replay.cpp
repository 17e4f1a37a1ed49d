#include "updet/replay.hpp"

#include <utility>

namespace updet {

ReplayBuffer::ReplayBuffer(int capacity) : capacity_(capacity) {
    if (capacity < 1) throw InvalidArgument("replay capacity must be >= 1");
    items_.reserve(static_cast<std::size_t>(capacity));
}

void ReplayBuffer::add(Episode ep) {
    for (int t = 0; t < ep.len; ++t)
        for (int a = 0; a < ep.n_agents; ++a) {
            const int act = ep.action_at(t, a);
            if (act < 0 || act >= ep.n_actions || !ep.avail_at(t, a)[act])
                throw InvalidState("replay integrity: agent " + std::to_string(a) +
                                   " stored unavailable action " + std::to_string(act) +
                                   " at t=" + std::to_string(t));
        }
    if (static_cast<int>(items_.size()) < capacity_) {
        items_.push_back(std::move(ep));
    } else {
        items_[next_] = std::move(ep);
        next_ = (next_ + 1) % static_cast<std::size_t>(capacity_);
    }
}

std::vector<const Episode*> ReplayBuffer::sample(int batch, Rng& rng) const {
    if (batch < 1 || batch > size())
        throw InvalidState("sample of " + std::to_string(batch) + " from buffer of " +
                           std::to_string(size()));
    // Partial Fisher-Yates over indices.
    std::vector<int> idx(items_.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
    std::vector<const Episode*> out;
    out.reserve(static_cast<std::size_t>(batch));
    for (int i = 0; i < batch; ++i) {
        const int j = i + rng.below(static_cast<int>(idx.size()) - i);
        std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
        out.push_back(&items_[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])]);
    }
    return out;
}

}  // namespace updet
