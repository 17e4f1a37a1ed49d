#include "updet/params.hpp"

#include <cmath>
#include <cstring>

namespace updet {

namespace {

constexpr uint64_t kFnvOffset = 0xCBF29CE484222325ull;
constexpr uint64_t kFnvPrime = 0x100000001B3ull;

void fnv_bytes(uint64_t& h, const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= kFnvPrime;
    }
}

}  // namespace

Tensor ParamStore::add(const std::string& name, Tensor t) {
    if (index_.count(name)) throw InvalidState("parameter registered twice: " + name);
    index_[name] = entries_.size();
    entries_.emplace_back(name, t);
    return t;
}

Tensor ParamStore::add_linear_weight(const std::string& name, int fan_in, int fan_out,
                                     Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Tensor t = Tensor::zeros({fan_in, fan_out}, true);
    for (double& v : t.values()) v = rng.range(-bound, bound);
    return add(name, t);
}

Tensor ParamStore::add_zeros(const std::string& name, Shape shape) {
    return add(name, Tensor::zeros(std::move(shape), true));
}

Tensor ParamStore::add_ones(const std::string& name, Shape shape) {
    return add(name, Tensor::full(std::move(shape), 1.0, true));
}

Tensor ParamStore::get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw InvalidState("unknown parameter: " + name);
    return entries_[it->second].second;
}

std::vector<Tensor> ParamStore::tensors() const {
    std::vector<Tensor> out;
    out.reserve(entries_.size());
    for (const auto& [name, t] : entries_) out.push_back(t);
    return out;
}

std::size_t ParamStore::total_values() const {
    std::size_t n = 0;
    for (const auto& [name, t] : entries_) n += t.numel();
    return n;
}

void ParamStore::zero_grads() {
    for (auto& [name, t] : entries_) t.zero_grad();
}

void ParamStore::copy_values_from(const ParamStore& other) {
    if (layout_checksum() != other.layout_checksum())
        throw InvalidState("copy_values_from: parameter layouts differ");
    for (std::size_t i = 0; i < entries_.size(); ++i)
        entries_[i].second.values() = other.entries_[i].second.values();
}

uint64_t ParamStore::layout_checksum() const {
    uint64_t h = kFnvOffset;
    for (const auto& [name, t] : entries_) {
        fnv_bytes(h, name.data(), name.size());
        for (int d : t.shape()) {
            int32_t d32 = d;
            fnv_bytes(h, &d32, sizeof(d32));
        }
    }
    return h;
}

uint64_t ParamStore::value_checksum() const {
    uint64_t h = layout_checksum();
    for (const auto& [name, t] : entries_)
        fnv_bytes(h, t.values().data(), t.numel() * sizeof(double));
    return h;
}

}  // namespace updet
