#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "updet/errors.hpp"

namespace updet {

using Shape = std::vector<int>;

std::string shape_str(const Shape& s);
std::size_t shape_numel(const Shape& s);

namespace detail {
struct TensorData {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;  // empty until first accumulation; zeros-sized for parameters
    bool requires_grad = false;
    long node = -1;  // id on the tape that recorded this tensor, -1 if none
};
}  // namespace detail

// Dense row-major f64 tensor. Cheap to copy (shared storage handle).
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double v, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor scalar(double v);

    bool defined() const { return d_ != nullptr; }
    const Shape& shape() const { return d_->shape; }
    int rank() const { return static_cast<int>(d_->shape.size()); }
    int dim(int i) const { return d_->shape[static_cast<std::size_t>(i)]; }
    std::size_t numel() const { return d_->values.size(); }

    std::vector<double>& values() { return d_->values; }
    const std::vector<double>& values() const { return d_->values; }
    double item() const;

    bool requires_grad() const { return d_ && d_->requires_grad; }
    void set_requires_grad(bool rg);

    // Gradient, allocated as zeros on first access.
    std::vector<double>& grad();
    bool has_grad() const { return d_ && !d_->grad.empty(); }
    void zero_grad();

    long node() const { return d_ ? d_->node : -1; }
    void set_node(long id) { d_->node = id; }

    std::shared_ptr<detail::TensorData> storage() const { return d_; }

private:
    std::shared_ptr<detail::TensorData> d_;
};

// Records ops in execution order. Input node ids always precede the output id,
// so one reverse sweep is a valid backward schedule.
class Tape {
public:
    struct Record {
        std::vector<long> inputs;
        long output = -1;
        std::function<void()> backward;
    };

    // Assigns a node id to `t` if it has none, and returns it.
    long ensure_node(Tensor& t);

    void record(std::vector<long> inputs, long output, std::function<void()> backward);

    // Seeds d(loss)/d(loss) = 1, replays records in reverse, then resets the
    // tape. Gradients land in every reachable requires_grad tensor.
    void backward(Tensor& loss);

    std::size_t size() const { return records_.size(); }
    const std::vector<Record>& records() const { return records_; }
    void reset();

private:
    std::vector<Record> records_;
    long next_node_ = 0;
};

// Throws NumericFault if any value is NaN/Inf; `op` names the offender.
void check_finite(const Tensor& t, const char* op);

}  // namespace updet
