#pragma once

#include <functional>
#include <vector>

#include "updet/rng.hpp"
#include "updet/tensor.hpp"

namespace updet {

// Central-difference gradient check. `f` rebuilds the scalar loss from the
// current parameter values; it runs once with a recording tape to obtain
// analytic gradients, then per sampled coordinate evaluates f at p +/- h and
// p +/- h/2. Coordinates where the two step sizes disagree are crossing a
// non-smooth point (a relu/abs kink inside the h-window, where no derivative
// exists to check) and are resampled. Returns max over accepted coordinates
// of |analytic - central| / max(1, |central|).
double finite_diff_check(const std::function<Tensor(Tape*)>& f, std::vector<Tensor> params,
                         double h, int n_coords, Rng& rng);

}  // namespace updet
