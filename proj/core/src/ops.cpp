#include "updet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <utility>

namespace updet {

namespace {

using std::size_t;

bool tracked(Tape* tape, std::initializer_list<const Tensor*> ins) {
    if (!tape) return false;
    for (const Tensor* t : ins)
        if (t->requires_grad()) return true;
    return false;
}

// out[m, :] += a[m, k] * b[k, :]
void mm_nn(const double* a, const double* b, double* out, size_t M, size_t K, size_t N) {
    for (size_t m = 0; m < M; ++m) {
        double* orow = out + m * N;
        const double* arow = a + m * K;
        for (size_t k = 0; k < K; ++k) {
            const double amk = arow[k];
            const double* brow = b + k * N;
            for (size_t n = 0; n < N; ++n) orow[n] += amk * brow[n];
        }
    }
}

// out[m, n] += dot(a[m, :], b[n, :]); a is MxK, b is NxK.
void mm_nt(const double* a, const double* b, double* out, size_t M, size_t K, size_t N) {
    for (size_t m = 0; m < M; ++m) {
        const double* arow = a + m * K;
        double* orow = out + m * N;
        for (size_t n = 0; n < N; ++n) {
            const double* brow = b + n * K;
            double acc = 0.0;
            for (size_t k = 0; k < K; ++k) acc += arow[k] * brow[k];
            orow[n] += acc;
        }
    }
}

// out[r, c] += sum_m a[m, r] * b[m, c]; a is MxR, b is MxC.
void mm_tn(const double* a, const double* b, double* out, size_t M, size_t R, size_t C) {
    for (size_t m = 0; m < M; ++m) {
        const double* arow = a + m * R;
        const double* brow = b + m * C;
        for (size_t r = 0; r < R; ++r) {
            const double amr = arow[r];
            double* orow = out + r * C;
            for (size_t c = 0; c < C; ++c) orow[c] += amr * brow[c];
        }
    }
}

// Splits a shape at `axis` into (outer, len, inner) extents.
void axis_extents(const Shape& s, int axis, size_t& outer, size_t& len, size_t& inner) {
    outer = 1;
    inner = 1;
    for (int i = 0; i < axis; ++i) outer *= static_cast<size_t>(s[static_cast<size_t>(i)]);
    len = static_cast<size_t>(s[static_cast<size_t>(axis)]);
    for (size_t i = static_cast<size_t>(axis) + 1; i < s.size(); ++i)
        inner *= static_cast<size_t>(s[i]);
}

Tensor unary_op(const Tensor& a, Tape* tape, const char* name, double (*fwd)(double),
                double (*dydx_from)(double x, double y)) {
    Tensor out = Tensor::zeros(a.shape());
    const size_t n = a.numel();
    const double* av = a.values().data();
    double* ov = out.values().data();
    for (size_t i = 0; i < n; ++i) ov[i] = fwd(av[i]);
    check_finite(out, name);
    if (tracked(tape, {&a})) {
        out.set_requires_grad(true);
        long ia = tape->ensure_node(const_cast<Tensor&>(a));
        long io = tape->ensure_node(out);
        Tensor ac = a, oc = out;
        tape->record({ia}, io, [ac, oc, dydx_from]() mutable {
            const size_t m = ac.numel();
            const double* x = ac.values().data();
            const double* y = oc.values().data();
            const double* gy = oc.grad().data();
            double* gx = ac.grad().data();
            for (size_t i = 0; i < m; ++i) gx[i] += gy[i] * dydx_from(x[i], y[i]);
        });
    }
    return out;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& w, Tape* tape) {
    if (a.rank() < 2 || w.rank() != 2 || a.dim(a.rank() - 1) != w.dim(0))
        throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " x " +
                         shape_str(w.shape()));
    const size_t K = static_cast<size_t>(w.dim(0));
    const size_t N = static_cast<size_t>(w.dim(1));
    const size_t M = a.numel() / K;
    Shape out_shape(a.shape().begin(), a.shape().end() - 1);
    out_shape.push_back(w.dim(1));
    Tensor out = Tensor::zeros(out_shape);
    mm_nn(a.values().data(), w.values().data(), out.values().data(), M, K, N);
    check_finite(out, "matmul");
    if (tracked(tape, {&a, &w})) {
        out.set_requires_grad(true);
        long ia = tape->ensure_node(const_cast<Tensor&>(a));
        long iw = tape->ensure_node(const_cast<Tensor&>(w));
        long io = tape->ensure_node(out);
        Tensor ac = a, wc = w, oc = out;
        tape->record({ia, iw}, io, [ac, wc, oc, M, K, N]() mutable {
            const double* g = oc.grad().data();
            if (ac.requires_grad())
                mm_nt(g, wc.values().data(), ac.grad().data(), M, N, K);
            if (wc.requires_grad())
                mm_tn(ac.values().data(), g, wc.grad().data(), M, K, N);
        });
    }
    return out;
}

Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b, Tape* tape) {
    if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0))
        throw ShapeError("bmm: incompatible shapes " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
    const size_t B = static_cast<size_t>(a.dim(0));
    const size_t M = static_cast<size_t>(a.dim(1));
    const size_t K = static_cast<size_t>(a.dim(2));
    const size_t N = static_cast<size_t>(transpose_b ? b.dim(1) : b.dim(2));
    if ((transpose_b ? b.dim(2) : b.dim(1)) != a.dim(2))
        throw ShapeError("bmm: inner dims of " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()) + (transpose_b ? " (b transposed)" : ""));
    Tensor out = Tensor::zeros({a.dim(0), a.dim(1), static_cast<int>(N)});
    {
        const double* av = a.values().data();
        const double* bv = b.values().data();
        double* ov = out.values().data();
        for (size_t i = 0; i < B; ++i) {
            const double* ai = av + i * M * K;
            const double* bi = bv + i * K * N;
            double* oi = ov + i * M * N;
            if (transpose_b)
                mm_nt(ai, bi, oi, M, K, N);
            else
                mm_nn(ai, bi, oi, M, K, N);
        }
    }
    check_finite(out, "bmm");
    if (tracked(tape, {&a, &b})) {
        out.set_requires_grad(true);
        long ia = tape->ensure_node(const_cast<Tensor&>(a));
        long ib = tape->ensure_node(const_cast<Tensor&>(b));
        long io = tape->ensure_node(out);
        Tensor ac = a, bc = b, oc = out;
        tape->record({ia, ib}, io, [ac, bc, oc, transpose_b, B, M, K, N]() mutable {
            const double* g = oc.grad().data();
            for (size_t i = 0; i < B; ++i) {
                const double* gi = g + i * M * N;
                const double* ai = ac.values().data() + i * M * K;
                const double* bi = bc.values().data() + i * K * N;
                if (ac.requires_grad()) {
                    double* gai = ac.grad().data() + i * M * K;
                    if (transpose_b)
                        mm_nn(gi, bi, gai, M, N, K);  // dA += dC * B  (B is NxK)
                    else
                        mm_nt(gi, bi, gai, M, N, K);  // dA += dC * B^T
                }
                if (bc.requires_grad()) {
                    double* gbi = bc.grad().data() + i * K * N;
                    if (transpose_b)
                        mm_tn(gi, ai, gbi, M, N, K);  // dB += dC^T * A (B is NxK)
                    else
                        mm_tn(ai, gi, gbi, M, K, N);  // dB += A^T * dC
                }
            }
        });
    }
    return out;
}

namespace {

bool is_suffix(const Shape& small, const Shape& big) {
    if (small.size() > big.size()) return false;
    for (size_t i = 0; i < small.size(); ++i)
        if (small[small.size() - 1 - i] != big[big.size() - 1 - i]) return false;
    return true;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b, Tape* tape) {
    if (!is_suffix(b.shape(), a.shape()))
        throw ShapeError("add: " + shape_str(b.shape()) + " does not broadcast onto " +
                         shape_str(a.shape()));
    Tensor out = Tensor::zeros(a.shape());
    const size_t n = a.numel(), m = b.numel();
    const double* av = a.values().data();
    const double* bv = b.values().data();
    double* ov = out.values().data();
    for (size_t i = 0; i < n; ++i) ov[i] = av[i] + bv[i % m];
    check_finite(out, "add");
    if (tracked(tape, {&a, &b})) {
        out.set_requires_grad(true);
        long ia = tape->ensure_node(const_cast<Tensor&>(a));
        long ib = tape->ensure_node(const_cast<Tensor&>(b));
        long io = tape->ensure_node(out);
        Tensor ac = a, bc = b, oc = out;
        tape->record({ia, ib}, io, [ac, bc, oc]() mutable {
            const size_t n2 = oc.numel(), m2 = bc.numel();
            const double* g = oc.grad().data();
            if (ac.requires_grad()) {
                double* ga = ac.grad().data();
                for (size_t i = 0; i < n2; ++i) ga[i] += g[i];
            }
            if (bc.requires_grad()) {
                double* gb = bc.grad().data();
                for (size_t i = 0; i < n2; ++i) gb[i % m2] += g[i];
            }
        });
    }
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b, Tape* tape) {
    if (a.shape() != b.shape())
        throw ShapeError("sub: shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    Tensor out = Tensor::zeros(a.shape());
    const size_t n = a.numel();
    for (size_t i = 0; i < n; ++i) out.values()[i] = a.values()[i] - b.values()[i];
    check_finite(out, "sub");
    if (tracked(tape, {&a, &b})) {
        out.set_requires_grad(true);
        long ia = tape->ensure_node(const_cast<Tensor&>(a));
        long ib = tape->ensure_node(const_cast<Tensor&>(b));
        long io = tape->ensure_node(out);
        Tensor ac = a, bc = b, oc = out;
        tape->record({ia, ib}, io, [ac, bc, oc]() mutable {
            const size_t n2 = oc.numel();
            const double* g = oc.grad().data();
            if (ac.requires_grad()) {
                double* ga = ac.grad().data();
                for (size_t i = 0; i < n2; ++i) ga[i] += g[i];
            }
            if (bc.requires_grad()) {
                double* gb = bc.grad().data();
                for (size_t i = 0; i < n2; ++i) gb[i] -= g[i];
            }
        });
    }
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b, Tape* tape) {
    if (a.shape() != b.shape())
        throw ShapeError("mul: shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    Tensor out = Tensor::zeros(a.shape());
    const size_t n = a.numel();
    for (size_t i = 0; i < n; ++i) out.values()[i] = a.values()[i] * b.values()[i];
    check_finite(out, "mul");
    if (tracked(tape, {&a, &b})) {
        out.set_requires_grad(true);
        long ia = tape->ensure_node(const_cast<Tensor&>(a));
        long ib = tape->ensure_node(const_cast<Tensor&>(b));
        long io = tape->ensure_node(out);
        Tensor ac = a, bc = b, oc = out;
        tape->record({ia, ib}, io, [ac, bc, oc]() mutable {
            const size_t n2 = oc.numel();
            const double* g = oc.grad().data();
            if (ac.requires_grad()) {
                double* ga = ac.grad().data();
                const double* bv = bc.values().data();
                for (size_t i = 0; i < n2; ++i) ga[i] += g[i] * bv[i];
            }
            if (bc.requires_grad()) {
                double* gb = bc.grad().data();
                const double* av = ac.values().data();
                for (size_t i = 0; i < n2; ++i) gb[i] += g[i] * av[i];
            }
        });
    }
    return out;
}

Tensor affine(const Tensor& a, double scale, double shift, Tape* tape) {
    Tensor out = Tensor::zeros(a.shape());
    const size_t n = a.numel();
    for (size_t i = 0; i < n; ++i) out.values()[i] = scale * a.values()[i] + shift;
    check_finite(out, "affine");
    if (tracked(tape, {&a})) {
        out.set_requires_grad(true);
        long ia = tape->ensure_node(const_cast<Tensor&>(a));
        long io = tape->ensure_node(out);
        Tensor ac = a, oc = out;
        tape->record({ia}, io, [ac, oc, scale]() mutable {
            const size_t n2 = oc.numel();
            const double* g = oc.grad().data();
            double* ga = ac.grad().data();
            for (size_t i = 0; i < n2; ++i) ga[i] += g[i] * scale;
        });
    }
    return out;
}

Tensor relu(const Tensor& a, Tape* tape) {
    return unary_op(
        a, tape, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
        [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor tanh_op(const Tensor& a, Tape* tape) {
    return unary_op(
        a, tape, "tanh", [](double x) { return std::tanh(x); },
        [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& a, Tape* tape) {
    return unary_op(
        a, tape, "sigmoid", [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
        [](double, double y) { return y * (1.0 - y); });
}

Tensor abs_op(const Tensor& a, Tape* tape) {
    return unary_op(
        a, tape, "abs", [](double x) { return std::fabs(x); },
        [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Tensor concat(const std::vector<Tensor>& xs, int axis, Tape* tape) {
    if (xs.empty()) throw InvalidArgument("concat: no inputs");
    const Tensor& first = xs.front();
    if (axis < 0 || axis >= first.rank())
        throw ShapeError("concat: axis " + std::to_string(axis) + " out of range for " +
                         shape_str(first.shape()));
    int axis_total = 0;
    for (const Tensor& x : xs) {
        if (x.rank() != first.rank())
            throw ShapeError("concat: rank mismatch " + shape_str(x.shape()) + " vs " +
                             shape_str(first.shape()));
        for (int i = 0; i < first.rank(); ++i)
            if (i != axis && x.dim(i) != first.dim(i))
                throw ShapeError("concat: dim mismatch " + shape_str(x.shape()) + " vs " +
                                 shape_str(first.shape()));
        axis_total += x.dim(axis);
    }
    Shape out_shape = first.shape();
    out_shape[static_cast<size_t>(axis)] = axis_total;
    Tensor out = Tensor::zeros(out_shape);

    size_t outer, out_len, inner;
    axis_extents(out_shape, axis, outer, out_len, inner);
    {
        double* ov = out.values().data();
        size_t axis_off = 0;
        for (const Tensor& x : xs) {
            const size_t len = static_cast<size_t>(x.dim(axis));
            const double* xv = x.values().data();
            for (size_t o = 0; o < outer; ++o)
                std::copy(xv + o * len * inner, xv + (o + 1) * len * inner,
                          ov + (o * out_len + axis_off) * inner);
            axis_off += len;
        }
    }
    check_finite(out, "concat");

    bool any = false;
    if (tape)
        for (const Tensor& x : xs) any = any || x.requires_grad();
    if (any) {
        out.set_requires_grad(true);
        std::vector<long> ids;
        for (const Tensor& x : xs) ids.push_back(tape->ensure_node(const_cast<Tensor&>(x)));
        long io = tape->ensure_node(out);
        std::vector<Tensor> xc(xs.begin(), xs.end());
        Tensor oc = out;
        tape->record(ids, io, [xc, oc, axis, outer, out_len, inner]() mutable {
            const double* g = oc.grad().data();
            size_t axis_off = 0;
            for (Tensor& x : xc) {
                const size_t len = static_cast<size_t>(x.dim(axis));
                if (x.requires_grad()) {
                    double* gx = x.grad().data();
                    for (size_t o = 0; o < outer; ++o) {
                        const double* src = g + (o * out_len + axis_off) * inner;
                        double* dst = gx + o * len * inner;
                        for (size_t i = 0; i < len * inner; ++i) dst[i] += src[i];
                    }
                }
                axis_off += len;
            }
        });
    }
    return out;
}

Tensor slice(const Tensor& a, int axis, int start, int len, Tape* tape) {
    if (axis < 0 || axis >= a.rank() || start < 0 || len <= 0 || start + len > a.dim(axis))
        throw ShapeError("slice: [" + std::to_string(start) + "," + std::to_string(start + len) +
                         ") on axis " + std::to_string(axis) + " of " + shape_str(a.shape()));
    Shape out_shape = a.shape();
    out_shape[static_cast<size_t>(axis)] = len;
    Tensor out = Tensor::zeros(out_shape);
    size_t outer, in_len, inner;
    axis_extents(a.shape(), axis, outer, in_len, inner);
    const size_t slen = static_cast<size_t>(len), soff = static_cast<size_t>(start);
    {
        const double* av = a.values().data();
        double* ov = out.values().data();
        for (size_t o = 0; o < outer; ++o)
            std::copy(av + (o * in_len + soff) * inner, av + (o * in_len + soff + slen) * inner,
                      ov + o * slen * inner);
    }
    if (tracked(tape, {&a})) {
        out.set_requires_grad(true);
        long ia = tape->ensure_node(const_cast<Tensor&>(a));
        long io = tape->ensure_node(out);
        Tensor ac = a, oc = out;
        tape->record({ia}, io, [ac, oc, outer, in_len, inner, slen, soff]() mutable {
            const double* g = oc.grad().data();
            double* ga = ac.grad().data();
            for (size_t o = 0; o < outer; ++o) {
                const double* src = g + o * slen * inner;
                double* dst = ga + (o * in_len + soff) * inner;
                for (size_t i = 0; i < slen * inner; ++i) dst[i] += src[i];
            }
        });
    }
    return out;
}

Tensor sum(const Tensor& a, Tape* tape) {
    double acc = 0.0;
    for (double v : a.values()) acc += v;
    Tensor out = Tensor::scalar(acc);
    check_finite(out, "sum");
    if (tracked(tape, {&a})) {
        out.set_requires_grad(true);
        long ia = tape->ensure_node(const_cast<Tensor&>(a));
        long io = tape->ensure_node(out);
        Tensor ac = a, oc = out;
        tape->record({ia}, io, [ac, oc]() mutable {
            const double g = oc.grad()[0];
            double* ga = ac.grad().data();
            const size_t n = ac.numel();
            for (size_t i = 0; i < n; ++i) ga[i] += g;
        });
    }
    return out;
}

Tensor mean(const Tensor& a, Tape* tape) {
    const double inv = 1.0 / static_cast<double>(a.numel());
    double acc = 0.0;
    for (double v : a.values()) acc += v;
    Tensor out = Tensor::scalar(acc * inv);
    check_finite(out, "mean");
    if (tracked(tape, {&a})) {
        out.set_requires_grad(true);
        long ia = tape->ensure_node(const_cast<Tensor&>(a));
        long io = tape->ensure_node(out);
        Tensor ac = a, oc = out;
        tape->record({ia}, io, [ac, oc, inv]() mutable {
            const double g = oc.grad()[0] * inv;
            double* ga = ac.grad().data();
            const size_t n = ac.numel();
            for (size_t i = 0; i < n; ++i) ga[i] += g;
        });
    }
    return out;
}

namespace {

// Shared sum/mean reduction over one axis; left-to-right accumulation.
Tensor reduce_axis(const Tensor& a, int axis, Tape* tape, const char* name, bool is_mean) {
    if (axis < 0 || axis >= a.rank())
        throw ShapeError(std::string(name) + ": axis " + std::to_string(axis) + " of " +
                         shape_str(a.shape()));
    size_t outer, len, inner;
    axis_extents(a.shape(), axis, outer, len, inner);
    Shape out_shape;
    for (int i = 0; i < a.rank(); ++i)
        if (i != axis) out_shape.push_back(a.dim(i));
    if (out_shape.empty()) out_shape = {1};
    Tensor out = Tensor::zeros(out_shape);
    const double inv = is_mean ? 1.0 / static_cast<double>(len) : 1.0;
    {
        const double* av = a.values().data();
        double* ov = out.values().data();
        for (size_t o = 0; o < outer; ++o)
            for (size_t l = 0; l < len; ++l) {
                const double* src = av + (o * len + l) * inner;
                double* dst = ov + o * inner;
                for (size_t i = 0; i < inner; ++i) dst[i] += src[i] * inv;
            }
    }
    check_finite(out, name);
    if (tracked(tape, {&a})) {
        out.set_requires_grad(true);
        long ia = tape->ensure_node(const_cast<Tensor&>(a));
        long io = tape->ensure_node(out);
        Tensor ac = a, oc = out;
        tape->record({ia}, io, [ac, oc, outer, len, inner, inv]() mutable {
            const double* g = oc.grad().data();
            double* ga = ac.grad().data();
            for (size_t o = 0; o < outer; ++o)
                for (size_t l = 0; l < len; ++l) {
                    double* dst = ga + (o * len + l) * inner;
                    const double* src = g + o * inner;
                    for (size_t i = 0; i < inner; ++i) dst[i] += src[i] * inv;
                }
        });
    }
    return out;
}

}  // namespace

Tensor sum_axis(const Tensor& a, int axis, Tape* tape) {
    return reduce_axis(a, axis, tape, "sum_axis", false);
}

Tensor mean_axis(const Tensor& a, int axis, Tape* tape) {
    return reduce_axis(a, axis, tape, "mean_axis", true);
}

Tensor squared_error(const Tensor& a, const Tensor& b, Tape* tape) {
    if (a.shape() != b.shape())
        throw ShapeError("squared_error: shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    Tensor out = Tensor::zeros(a.shape());
    const size_t n = a.numel();
    for (size_t i = 0; i < n; ++i) {
        const double d = a.values()[i] - b.values()[i];
        out.values()[i] = d * d;
    }
    check_finite(out, "squared_error");
    if (tracked(tape, {&a, &b})) {
        out.set_requires_grad(true);
        long ia = tape->ensure_node(const_cast<Tensor&>(a));
        long ib = tape->ensure_node(const_cast<Tensor&>(b));
        long io = tape->ensure_node(out);
        Tensor ac = a, bc = b, oc = out;
        tape->record({ia, ib}, io, [ac, bc, oc]() mutable {
            const size_t n2 = oc.numel();
            const double* g = oc.grad().data();
            const double* av = ac.values().data();
            const double* bv = bc.values().data();
            if (ac.requires_grad()) {
                double* ga = ac.grad().data();
                for (size_t i = 0; i < n2; ++i) ga[i] += 2.0 * g[i] * (av[i] - bv[i]);
            }
            if (bc.requires_grad()) {
                double* gb = bc.grad().data();
                for (size_t i = 0; i < n2; ++i) gb[i] -= 2.0 * g[i] * (av[i] - bv[i]);
            }
        });
    }
    return out;
}

Tensor softmax_scaled(const Tensor& logits, int scale_dim, Tape* tape) {
    if (scale_dim < 1)
        throw InvalidArgument("softmax_scaled: scale_dim must be >= 1, got " +
                              std::to_string(scale_dim));
    if (logits.rank() < 1) throw ShapeError("softmax_scaled: scalar input");
    const size_t cols = static_cast<size_t>(logits.dim(logits.rank() - 1));
    const size_t rows = logits.numel() / cols;
    const double inv_scale = 1.0 / std::sqrt(static_cast<double>(scale_dim));
    Tensor out = Tensor::zeros(logits.shape());
    {
        const double* lv = logits.values().data();
        double* ov = out.values().data();
        std::vector<double> scaled(cols);
        for (size_t r = 0; r < rows; ++r) {
            const double* row = lv + r * cols;
            double mx = -std::numeric_limits<double>::infinity();
            for (size_t c = 0; c < cols; ++c) {
                scaled[c] = row[c] * inv_scale;
                mx = std::max(mx, scaled[c]);
            }
            double z = 0.0;
            double* orow = ov + r * cols;
            for (size_t c = 0; c < cols; ++c) {
                orow[c] = std::exp(scaled[c] - mx);
                z += orow[c];
            }
            for (size_t c = 0; c < cols; ++c) orow[c] /= z;
        }
    }
    check_finite(out, "softmax_scaled");
    if (tracked(tape, {&logits})) {
        out.set_requires_grad(true);
        long ia = tape->ensure_node(const_cast<Tensor&>(logits));
        long io = tape->ensure_node(out);
        Tensor ac = logits, oc = out;
        tape->record({ia}, io, [ac, oc, rows, cols, inv_scale]() mutable {
            const double* y = oc.values().data();
            const double* gy = oc.grad().data();
            double* gx = ac.grad().data();
            for (size_t r = 0; r < rows; ++r) {
                const double* yr = y + r * cols;
                const double* gr = gy + r * cols;
                double dot = 0.0;
                for (size_t c = 0; c < cols; ++c) dot += gr[c] * yr[c];
                double* gxr = gx + r * cols;
                for (size_t c = 0; c < cols; ++c)
                    gxr[c] += inv_scale * yr[c] * (gr[c] - dot);
            }
        });
    }
    return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps,
                  Tape* tape) {
    const int d = x.dim(x.rank() - 1);
    if (gain.shape() != Shape{d} || bias.shape() != Shape{d})
        throw ShapeError("layer_norm: gain/bias " + shape_str(gain.shape()) + "/" +
                         shape_str(bias.shape()) + " for feature dim " + std::to_string(d));
    if (eps < 0.0) throw InvalidArgument("layer_norm: eps must be >= 0");
    const size_t cols = static_cast<size_t>(d);
    const size_t rows = x.numel() / cols;
    Tensor out = Tensor::zeros(x.shape());
    std::vector<double> xhat(x.numel());
    std::vector<double> invstd(rows);
    {
        const double* xv = x.values().data();
        const double* gv = gain.values().data();
        const double* bv = bias.values().data();
        double* ov = out.values().data();
        for (size_t r = 0; r < rows; ++r) {
            const double* row = xv + r * cols;
            double mu = 0.0;
            for (size_t c = 0; c < cols; ++c) mu += row[c];
            mu /= static_cast<double>(cols);
            double var = 0.0;
            for (size_t c = 0; c < cols; ++c) {
                const double dlt = row[c] - mu;
                var += dlt * dlt;
            }
            var /= static_cast<double>(cols);
            const double is = 1.0 / std::sqrt(var + eps);
            invstd[r] = is;
            double* xh = xhat.data() + r * cols;
            double* orow = ov + r * cols;
            for (size_t c = 0; c < cols; ++c) {
                xh[c] = (row[c] - mu) * is;
                orow[c] = gv[c] * xh[c] + bv[c];
            }
        }
    }
    check_finite(out, "layer_norm");
    if (tracked(tape, {&x, &gain, &bias})) {
        out.set_requires_grad(true);
        long ix = tape->ensure_node(const_cast<Tensor&>(x));
        long ig = tape->ensure_node(const_cast<Tensor&>(gain));
        long ib = tape->ensure_node(const_cast<Tensor&>(bias));
        long io = tape->ensure_node(out);
        Tensor xc = x, gc = gain, bc = bias, oc = out;
        auto xh = std::make_shared<std::vector<double>>(std::move(xhat));
        auto is = std::make_shared<std::vector<double>>(std::move(invstd));
        tape->record({ix, ig, ib}, io, [xc, gc, bc, oc, xh, is, rows, cols]() mutable {
            const double* gy = oc.grad().data();
            const double* gv = gc.values().data();
            for (size_t r = 0; r < rows; ++r) {
                const double* gyr = gy + r * cols;
                const double* xhr = xh->data() + r * cols;
                if (xc.requires_grad()) {
                    double* gx = xc.grad().data() + r * cols;
                    double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
                    for (size_t c = 0; c < cols; ++c) {
                        const double dxh = gyr[c] * gv[c];
                        mean_dxhat += dxh;
                        mean_dxhat_xhat += dxh * xhr[c];
                    }
                    mean_dxhat /= static_cast<double>(cols);
                    mean_dxhat_xhat /= static_cast<double>(cols);
                    const double isr = (*is)[r];
                    for (size_t c = 0; c < cols; ++c) {
                        const double dxh = gyr[c] * gv[c];
                        gx[c] += isr * (dxh - mean_dxhat - xhr[c] * mean_dxhat_xhat);
                    }
                }
                if (gc.requires_grad()) {
                    double* gg = gc.grad().data();
                    for (size_t c = 0; c < cols; ++c) gg[c] += gyr[c] * xhr[c];
                }
                if (bc.requires_grad()) {
                    double* gb = bc.grad().data();
                    for (size_t c = 0; c < cols; ++c) gb[c] += gyr[c];
                }
            }
        });
    }
    return out;
}

Tensor gather(const Tensor& a, const std::vector<int>& idx, Tape* tape) {
    const size_t cols = static_cast<size_t>(a.dim(a.rank() - 1));
    const size_t rows = a.numel() / cols;
    if (idx.size() != rows)
        throw ShapeError("gather: " + std::to_string(idx.size()) + " indices for " +
                         std::to_string(rows) + " rows of " + shape_str(a.shape()));
    for (int i : idx)
        if (i < 0 || static_cast<size_t>(i) >= cols)
            throw InvalidArgument("gather: index " + std::to_string(i) + " out of [0," +
                                  std::to_string(cols) + ")");
    Tensor out = Tensor::zeros({static_cast<int>(rows)});
    for (size_t r = 0; r < rows; ++r)
        out.values()[r] = a.values()[r * cols + static_cast<size_t>(idx[r])];
    if (tracked(tape, {&a})) {
        out.set_requires_grad(true);
        long ia = tape->ensure_node(const_cast<Tensor&>(a));
        long io = tape->ensure_node(out);
        Tensor ac = a, oc = out;
        auto ic = std::make_shared<std::vector<int>>(idx);
        tape->record({ia}, io, [ac, oc, ic, rows, cols]() mutable {
            const double* g = oc.grad().data();
            double* ga = ac.grad().data();
            for (size_t r = 0; r < rows; ++r)
                ga[r * cols + static_cast<size_t>((*ic)[r])] += g[r];
        });
    }
    return out;
}

Tensor reshape(const Tensor& a, Shape shape, Tape* tape) {
    if (shape_numel(shape) != a.numel())
        throw ShapeError("reshape: " + shape_str(a.shape()) + " to " + shape_str(shape));
    Tensor out = Tensor::from(std::move(shape), a.values());
    if (tracked(tape, {&a})) {
        out.set_requires_grad(true);
        long ia = tape->ensure_node(const_cast<Tensor&>(a));
        long io = tape->ensure_node(out);
        Tensor ac = a, oc = out;
        tape->record({ia}, io, [ac, oc]() mutable {
            const size_t n = oc.numel();
            const double* g = oc.grad().data();
            double* ga = ac.grad().data();
            for (size_t i = 0; i < n; ++i) ga[i] += g[i];
        });
    }
    return out;
}

}  // namespace updet
