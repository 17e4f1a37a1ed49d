#include "updet/tensor.hpp"

#include <cmath>
#include <utility>

namespace updet {

std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (int d : s) {
        if (d <= 0) throw ShapeError("tensor shape has non-positive dim " + shape_str(s));
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    return from(std::move(shape), {}, requires_grad);
}

Tensor Tensor::full(Shape shape, double v, bool requires_grad) {
    std::size_t n = shape_numel(shape);
    return from(std::move(shape), std::vector<double>(n, v), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
    std::size_t n = shape_numel(shape);
    if (values.empty()) values.assign(n, 0.0);
    if (values.size() != n)
        throw ShapeError("tensor init: " + std::to_string(values.size()) +
                         " values for shape " + shape_str(shape));
    Tensor t;
    t.d_ = std::make_shared<detail::TensorData>();
    t.d_->shape = std::move(shape);
    t.d_->values = std::move(values);
    t.d_->requires_grad = requires_grad;
    if (requires_grad) t.d_->grad.assign(n, 0.0);
    return t;
}

Tensor Tensor::scalar(double v) { return from({1}, {v}); }

double Tensor::item() const {
    if (numel() != 1) throw InvalidArgument("item() on tensor of shape " + shape_str(shape()));
    return d_->values[0];
}

void Tensor::set_requires_grad(bool rg) {
    d_->requires_grad = rg;
    if (rg && d_->grad.empty()) d_->grad.assign(d_->values.size(), 0.0);
}

std::vector<double>& Tensor::grad() {
    if (d_->grad.empty()) d_->grad.assign(d_->values.size(), 0.0);
    return d_->grad;
}

void Tensor::zero_grad() {
    if (!d_->grad.empty()) d_->grad.assign(d_->values.size(), 0.0);
}

long Tape::ensure_node(Tensor& t) {
    if (t.node() < 0) t.set_node(next_node_++);
    return t.node();
}

void Tape::record(std::vector<long> inputs, long output, std::function<void()> backward) {
    records_.push_back({std::move(inputs), output, std::move(backward)});
}

void Tape::backward(Tensor& loss) {
    if (loss.numel() != 1)
        throw InvalidArgument("backward: loss must be scalar, got shape " +
                              shape_str(loss.shape()));
    loss.grad()[0] = 1.0;
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) it->backward();
    reset();
}

void Tape::reset() {
    records_.clear();
    next_node_ = 0;
}

void check_finite(const Tensor& t, const char* op) {
    for (double v : t.values()) {
        if (!std::isfinite(v))
            throw NumericFault(std::string(op) + " produced a non-finite value");
    }
}

}  // namespace updet
