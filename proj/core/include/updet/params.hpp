#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "updet/rng.hpp"
#include "updet/tensor.hpp"

namespace updet {

// Ordered table of named trainable tensors. Registration order defines the
// serialized layout, so two stores built the same way are layout-compatible.
class ParamStore {
public:
    // uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) init.
    Tensor add_linear_weight(const std::string& name, int fan_in, int fan_out, Rng& rng);
    Tensor add_zeros(const std::string& name, Shape shape);
    Tensor add_ones(const std::string& name, Shape shape);

    Tensor get(const std::string& name) const;
    bool has(const std::string& name) const { return index_.count(name) > 0; }

    const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
    std::vector<Tensor> tensors() const;
    std::size_t total_values() const;

    void zero_grads();
    // Overwrites values from a layout-identical store (target-network refresh).
    void copy_values_from(const ParamStore& other);

    // FNV-1a over (name, shape) pairs; invariant under parameter values.
    uint64_t layout_checksum() const;
    // FNV-1a over the parameter values' bytes (plus layout).
    uint64_t value_checksum() const;

private:
    Tensor add(const std::string& name, Tensor t);
    std::vector<std::pair<std::string, Tensor>> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace updet
