#include "updet/optim.hpp"

#include <cmath>

namespace updet {

void optim_step(std::vector<Tensor>& params, OptimState& state) {
    if (state.sq_avg.empty()) {
        state.sq_avg.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i)
            state.sq_avg[i].assign(params[i].numel(), 0.0);
    }
    if (state.sq_avg.size() != params.size())
        throw InvalidState("optim_step: state tracks " + std::to_string(state.sq_avg.size()) +
                           " params, got " + std::to_string(params.size()));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = params[i];
        if (!p.requires_grad() || !p.has_grad())
            throw InvalidState("optim_step: parameter " + std::to_string(i) +
                               " has no gradient");
        if (state.sq_avg[i].size() != p.numel())
            throw InvalidState("optim_step: state size mismatch on parameter " +
                               std::to_string(i));
        double* s = state.sq_avg[i].data();
        double* v = p.values().data();
        double* g = p.grad().data();
        const std::size_t n = p.numel();
        for (std::size_t j = 0; j < n; ++j) {
            s[j] = state.alpha * s[j] + (1.0 - state.alpha) * g[j] * g[j];
            v[j] -= state.lr * g[j] / std::sqrt(s[j] + state.eps);
            g[j] = 0.0;
        }
    }
    ++state.step;
}

}  // namespace updet
