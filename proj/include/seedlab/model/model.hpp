#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "seedlab/numerics/graph.hpp"
#include "seedlab/numerics/params.hpp"
#include "seedlab/numerics/tensor.hpp"
#include "seedlab/toydata/types.hpp"

namespace seedlab::model {

inline constexpr std::size_t kInstructionWidth = toy::kOpKindCount + 4;
inline constexpr std::size_t kTimeFeatures = 64;
inline constexpr std::size_t kGuidanceFeatures = 16;

struct ModelConfig {
    std::vector<std::size_t> dims{8};
    std::size_t width = 256;
    std::size_t depth = 3;
    std::size_t label_dim = 32;
    std::size_t tag_dim = 32;
    std::size_t time_dim = 32;
    std::size_t guidance_dim = 16;
    bool guidance = false;

    // label + tags + instruction
    std::size_t text_dim() const { return label_dim + tag_dim + kInstructionWidth; }
    std::size_t cond_dim() const { return text_dim() + time_dim + (guidance ? 2 * guidance_dim : 0); }
    std::size_t input_dim(std::size_t dim) const { return 2 * dim + cond_dim(); }
};

// Everything the network sees besides x_t and x0.
struct Condition {
    toy::TaskLabel label = toy::TaskLabel::default_edit;
    toy::TagSet tags;
    toy::OpKind op = toy::OpKind::identity_noop;
    std::array<double, 4> op_params{};
    double t = 1.0;
    bool drop_image = false;
    bool drop_text = false;
    std::optional<double> w_image;
    std::optional<double> w_text;
};

Condition condition_for(const toy::EditPair& pair, double t);

// Offsets of each segment inside the condition vector.
struct ConditionLayout {
    std::size_t label = 0, tags = 0, instruction = 0, time = 0, guidance_image = 0, guidance_text = 0, end = 0;
};
ConditionLayout condition_layout(const ModelConfig& cfg);

// Fixed (unlearned) feature maps feeding the learned projections.
std::vector<double> timestep_features(double t);
std::vector<double> guidance_features(double w);

// Conditional velocity network. Embedding tables are shared across dim
// classes; each dim class owns a trunk.
class VelocityModel {
public:
    static VelocityModel init(const ModelConfig& cfg, std::uint64_t seed);
    // Reconstructs the config from parameter names and shapes. Parameters
    // outside the model's namespace (e.g. "noise_ref.") are kept but ignored.
    static VelocityModel from_params(num::ParamStore params);

    const ModelConfig& config() const { return cfg_; }
    const num::ParamStore& params() const { return params_; }
    num::ParamStore& params() { return params_; }
    bool has_guidance() const { return cfg_.guidance; }
    bool supports_dim(std::size_t dim) const;

    // Student initialization: same function as the fully-conditioned model at
    // start, because guidance inputs enter through zero weight rows.
    VelocityModel with_guidance(std::uint64_t seed) const;

    // Names of the dense layers, in evaluation order, for a dim class.
    std::vector<std::string> linear_layers(std::size_t dim) const;

private:
    ModelConfig cfg_;
    num::ParamStore params_;
};

// Intercepts dense layers (y = x W + b) during value-level forward passes.
class LinearHook {
public:
    virtual ~LinearHook() = default;
    virtual num::Tensor linear(std::string_view layer, const num::Tensor& x, const num::Tensor& w,
                               const num::Tensor& b) = 0;
};

// Condition vector for one record as a 1 x cond_dim row.
num::Tensor encode_condition(const VelocityModel& m, const Condition& c);

// x_t: [B, dim]; x0: [B, dim] or null for "absent"; conds: B entries.
num::Tensor forward(const VelocityModel& m, const num::Tensor& x_t, const num::Tensor* x0,
                    std::span<const Condition> conds, LinearHook* hook = nullptr);

num::NodeId forward(num::Graph& g, const VelocityModel& m, const num::Tensor& x_t, const num::Tensor* x0,
                    std::span<const Condition> conds);

// Multiply-accumulate count of one forward pass for a single record.
std::size_t forward_macs(const VelocityModel& m, std::size_t dim);

}  // namespace seedlab::model
