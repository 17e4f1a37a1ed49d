#pragma once

#include <vector>

#include "updet/tensor.hpp"

namespace updet {

// RMSprop state: per-parameter running mean of squared gradients.
struct OptimState {
    double lr = 5e-4;
    double alpha = 0.99;
    double eps = 1e-5;
    long step = 0;
    std::vector<std::vector<double>> sq_avg;  // lazily sized to match params
};

// s <- alpha*s + (1-alpha)*g^2 ; p <- p - lr*g/sqrt(s+eps) ; grads zeroed.
void optim_step(std::vector<Tensor>& params, OptimState& state);

}  // namespace updet
