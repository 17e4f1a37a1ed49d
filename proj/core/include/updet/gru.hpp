#pragma once

#include "updet/ops.hpp"
#include "updet/params.hpp"

namespace updet {

// Gated-recurrent-unit cell parameters (input width I, hidden width H).
struct GruParams {
    Tensor wz, uz, bz;  // update gate:    [I,H], [H,H], [H]
    Tensor wr, ur, br;  // reset gate
    Tensor wh, uh, bh;  // candidate state
};

GruParams make_gru_params(ParamStore& store, const std::string& prefix, int dim_in, int dim_h,
                          Rng& rng);

// x [B, I], h [B, H] -> [B, H].
// z = sigmoid(x wz + h uz + bz); r = sigmoid(x wr + h ur + br);
// cand = tanh(x wh + (r*h) uh + bh); out = (1-z)*h + z*cand.
Tensor gru_cell(const Tensor& x, const Tensor& h, const GruParams& p, Tape* tape);

}  // namespace updet
