#include "seedlab/numerics/params.hpp"

#include <cstdint>
#include <cstring>

#include "seedlab/error.hpp"

namespace seedlab::num {

ParamId ParamStore::add(std::string name, Tensor value) {
    if (index_.count(name)) throw ContractError("duplicate parameter name " + name);
    const ParamId id = values_.size();
    index_.emplace(name, id);
    names_.push_back(std::move(name));
    values_.push_back(std::move(value));
    return id;
}

std::optional<ParamId> ParamStore::find(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

ParamId ParamStore::at(const std::string& name) const {
    auto id = find(name);
    if (!id) throw ContractError("unknown parameter " + name);
    return *id;
}

std::size_t ParamStore::total_elements() const {
    std::size_t n = 0;
    for (const auto& v : values_) n += v.numel();
    return n;
}

bool bitwise_equal(const ParamStore& a, const ParamStore& b) {
    if (a.size() != b.size()) return false;
    for (ParamId i = 0; i < a.size(); ++i) {
        if (a.name(i) != b.name(i) || !bitwise_equal(a.value(i), b.value(i))) return false;
    }
    return true;
}

std::uint64_t checksum(const ParamStore& params) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto feed = [&h](const void* p, std::size_t n) {
        const auto* bytes = static_cast<const unsigned char*>(p);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= bytes[i];
            h *= 0x100000001b3ULL;
        }
    };
    for (ParamId i = 0; i < params.size(); ++i) {
        feed(params.name(i).data(), params.name(i).size());
        for (std::size_t d : params.value(i).shape()) {
            const std::uint64_t d64 = d;
            feed(&d64, sizeof d64);
        }
        feed(params.value(i).ptr(), params.value(i).numel() * sizeof(double));
    }
    return h;
}

double Gradients::squared_norm() const {
    double s = 0.0;
    for (const auto& g : by_param)
        for (double v : g.data()) s += v * v;
    return s;
}

Gradients zero_gradients(const ParamStore& params) {
    Gradients g;
    g.by_param.reserve(params.size());
    for (ParamId i = 0; i < params.size(); ++i) g.by_param.emplace_back(params.value(i).shape());
    return g;
}

}  // namespace seedlab::num
