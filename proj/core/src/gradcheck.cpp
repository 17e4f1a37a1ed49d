#include "updet/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace updet {

double finite_diff_check(const std::function<Tensor(Tape*)>& f, std::vector<Tensor> params,
                         double h, int n_coords, Rng& rng) {
    if (h < 1e-7 || h > 1e-3)
        throw InvalidArgument("finite_diff_check: h must be in [1e-7, 1e-3]");
    if (params.empty() || n_coords < 1)
        throw InvalidArgument("finite_diff_check: nothing to check");

    for (Tensor& p : params) p.zero_grad();
    Tape tape;
    Tensor loss = f(&tape);
    tape.backward(loss);
    std::vector<std::vector<double>> analytic;
    analytic.reserve(params.size());
    for (Tensor& p : params) analytic.push_back(p.grad());

    double worst = 0.0;
    for (int s = 0; s < n_coords; ++s) {
        for (int attempt = 0; attempt < 16; ++attempt) {
            const int pi = rng.below(static_cast<int>(params.size()));
            Tensor& p = params[static_cast<std::size_t>(pi)];
            const std::size_t ci = static_cast<std::size_t>(rng.below(static_cast<int>(p.numel())));
            const double saved = p.values()[ci];
            auto eval_at = [&](double v) {
                p.values()[ci] = v;
                return f(nullptr).item();
            };
            const double central = (eval_at(saved + h) - eval_at(saved - h)) / (2.0 * h);
            const double central_half =
                (eval_at(saved + h / 2) - eval_at(saved - h / 2)) / h;
            p.values()[ci] = saved;
            // For a locally smooth f the two step sizes agree to O(h^2); a
            // large gap means the window straddles a kink.
            if (std::fabs(central - central_half) > 1e-6 * std::max(1.0, std::fabs(central)) &&
                attempt + 1 < 16)
                continue;
            const double err = std::fabs(analytic[static_cast<std::size_t>(pi)][ci] - central) /
                               std::max(1.0, std::fabs(central));
            worst = std::max(worst, err);
            break;
        }
    }
    return worst;
}

}  // namespace updet
