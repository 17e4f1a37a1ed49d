#include "updet/gru.hpp"

namespace updet {

GruParams make_gru_params(ParamStore& store, const std::string& prefix, int dim_in, int dim_h,
                          Rng& rng) {
    GruParams p;
    p.wz = store.add_linear_weight(prefix + ".wz", dim_in, dim_h, rng);
    p.uz = store.add_linear_weight(prefix + ".uz", dim_h, dim_h, rng);
    p.bz = store.add_zeros(prefix + ".bz", {dim_h});
    p.wr = store.add_linear_weight(prefix + ".wr", dim_in, dim_h, rng);
    p.ur = store.add_linear_weight(prefix + ".ur", dim_h, dim_h, rng);
    p.br = store.add_zeros(prefix + ".br", {dim_h});
    p.wh = store.add_linear_weight(prefix + ".wh", dim_in, dim_h, rng);
    p.uh = store.add_linear_weight(prefix + ".uh", dim_h, dim_h, rng);
    p.bh = store.add_zeros(prefix + ".bh", {dim_h});
    return p;
}

Tensor gru_cell(const Tensor& x, const Tensor& h, const GruParams& p, Tape* tape) {
    if (x.rank() != 2 || h.rank() != 2 || x.dim(0) != h.dim(0))
        throw ShapeError("gru_cell: x " + shape_str(x.shape()) + " vs h " +
                         shape_str(h.shape()));
    if (x.dim(1) != p.wz.dim(0) || h.dim(1) != p.uz.dim(0))
        throw ShapeError("gru_cell: input widths " + shape_str(x.shape()) + "/" +
                         shape_str(h.shape()) + " do not match weights " +
                         shape_str(p.wz.shape()) + "/" + shape_str(p.uz.shape()));
    Tensor z = sigmoid(add(add(matmul(x, p.wz, tape), matmul(h, p.uz, tape), tape), p.bz, tape),
                       tape);
    Tensor r = sigmoid(add(add(matmul(x, p.wr, tape), matmul(h, p.ur, tape), tape), p.br, tape),
                       tape);
    Tensor cand = tanh_op(
        add(add(matmul(x, p.wh, tape), matmul(mul(r, h, tape), p.uh, tape), tape), p.bh, tape),
        tape);
    Tensor keep = mul(affine(z, -1.0, 1.0, tape), h, tape);
    return add(keep, mul(z, cand, tape), tape);
}

}  // namespace updet
