#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "seedlab/numerics/tensor.hpp"

namespace seedlab::num {

using ParamId = std::size_t;

// Ordered collection of named parameter tensors. Insertion order is the
// serialization order.
class ParamStore {
public:
    ParamId add(std::string name, Tensor value);

    std::size_t size() const { return values_.size(); }
    const std::string& name(ParamId id) const { return names_.at(id); }
    const Tensor& value(ParamId id) const { return values_.at(id); }
    Tensor& value(ParamId id) { return values_.at(id); }
    std::optional<ParamId> find(const std::string& name) const;
    ParamId at(const std::string& name) const;
    bool contains(const std::string& name) const { return index_.count(name) != 0; }

    std::size_t total_elements() const;

private:
    std::vector<std::string> names_;
    std::vector<Tensor> values_;
    std::map<std::string, ParamId> index_;
};

bool bitwise_equal(const ParamStore& a, const ParamStore& b);

// FNV-1a over names, shapes and raw bytes; used as a freeze checksum.
std::uint64_t checksum(const ParamStore& params);

// One gradient tensor per parameter, zeros for parameters the loss never touched.
struct Gradients {
    std::vector<Tensor> by_param;

    double squared_norm() const;
};

Gradients zero_gradients(const ParamStore& params);

}  // namespace seedlab::num
