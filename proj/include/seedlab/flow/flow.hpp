#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "seedlab/model/model.hpp"
#include "seedlab/numerics/graph.hpp"
#include "seedlab/numerics/rng.hpp"
#include "seedlab/numerics/tensor.hpp"
#include "seedlab/toydata/types.hpp"

namespace seedlab::flow {

using num::Tensor;

// x_t = (1 - t) x1 + t eps, so d x_t / dt = eps - x1.
struct FlowPoint {
    Tensor x_t;
    double t = 0.0;
    Tensor eps;
};

FlowPoint interpolate(const Tensor& x1, const Tensor& eps, double t);
Tensor target_velocity(const Tensor& x1, const Tensor& eps);
Tensor estimate_x1(const Tensor& x_t, double t, const Tensor& v_hat);

// Block-preservation reward, active iff the record carries the matching
// preserve tag and t <= t_reward.
struct RewardSpec {
    toy::Tag id = toy::Tag::identity_preserve;
    double weight = 0.1;
    double t_reward = 0.5;

    bool active(toy::TagSet tags, double t) const;
};

std::vector<RewardSpec> default_rewards(double lambda = 0.1, double t_reward = 0.5);
toy::Block preserved_block(toy::Tag tag);

struct RewardTerm {
    toy::Tag id;
    double value = 0.0;
    bool active = false;
};

struct RewardBreakdown {
    double total = 0.0;
    std::vector<RewardTerm> terms;
};

// Single record: x0 and x_hat1 are one sample each (any shape with dim entries).
RewardBreakdown reward_loss(const Tensor& x0, const Tensor& x_hat1, toy::TagSet tags, double t,
                            std::span<const RewardSpec> specs);

// Condition dropout used for classifier-free guidance. Probabilities are for
// the three disjoint outcomes; the marginal drop rate of each input is
// only + both.
struct DropoutSpec {
    double image_only = 0.05;
    double text_only = 0.05;
    double both = 0.05;
};

// One dimension-homogeneous batch with all random draws already made.
struct LossBatch {
    Tensor x1;   // targets
    Tensor x0;   // sources (zeros when absent)
    Tensor eps;
    Tensor x_t;
    bool x0_absent = false;
    std::vector<double> t;
    std::vector<model::Condition> conds;
    // Per-record loss multiplier: record importance times timestep weight.
    std::vector<double> weights;

    std::size_t size() const { return t.size(); }
    std::size_t dim() const { return x1.cols(); }
};

struct BatchOptions {
    bool x0_absent = false;
    bool dropout = true;
    DropoutSpec drop{};
};

// Draws eps and dropout flags from rng; t and timestep weights come from the caller.
LossBatch make_batch(const toy::Dataset& data, std::span<const std::size_t> indices, std::span<const double> t,
                     std::span<const double> t_weights, num::Rng& rng, const BatchOptions& opts = {});

// Stacks sources (or targets) of the given records into [B, dim].
Tensor stack_sources(const toy::Dataset& data, std::span<const std::size_t> indices);
Tensor stack_targets(const toy::Dataset& data, std::span<const std::size_t> indices);

struct LossNodes {
    num::NodeId loss = 0;
    num::NodeId fm = 0;
    num::NodeId velocity = 0;
    // One entry per reward spec; empty when the reward is inactive for the whole batch.
    std::vector<std::optional<num::NodeId>> rewards;
};

// Velocity predicted by the model for a batch, as a graph node.
num::NodeId model_velocity(num::Graph& g, const model::VelocityModel& m, const LossBatch& b);

// Weighted flow-matching term plus gated rewards evaluated at
// x_hat1 = x_t - t v. Rewards are skipped for x0-absent batches.
LossNodes joint_loss(num::Graph& g, num::NodeId velocity, const LossBatch& b, std::span<const RewardSpec> specs);
LossNodes fm_loss(num::Graph& g, num::NodeId velocity, const LossBatch& b);

struct LossEval {
    double loss = 0.0;
    double fm = 0.0;
    std::vector<double> rewards;
    num::Gradients grads;
    Tensor velocity_grad;  // dL/dv, [B, dim]
};

// Builds the graph over m.params(), evaluates and differentiates.
LossEval evaluate_joint_loss(const model::VelocityModel& m, const LossBatch& b, std::span<const RewardSpec> specs);

// Source of velocities for the samplers.
class VelocityField {
public:
    virtual ~VelocityField() = default;
    virtual Tensor velocity(const Tensor& x_t, const Tensor* x0, std::span<const model::Condition> conds) const = 0;
    virtual bool has_guidance() const = 0;
};

class ModelField : public VelocityField {
public:
    explicit ModelField(const model::VelocityModel& m, model::LinearHook* hook = nullptr) : m_(m), hook_(hook) {}
    Tensor velocity(const Tensor& x_t, const Tensor* x0, std::span<const model::Condition> conds) const override;
    bool has_guidance() const override { return m_.has_guidance(); }

private:
    const model::VelocityModel& m_;
    model::LinearHook* hook_;
};

enum class SamplerMode { teacher_cfg, student_distilled };
enum class NoiseSource { fresh, unified_reference };

struct SamplerConfig {
    std::size_t steps = 75;
    double w_image = 1.0;
    double w_text = 1.0;
    SamplerMode mode = SamplerMode::teacher_cfg;
    NoiseSource noise = NoiseSource::fresh;
    // Guidance range the student was trained on (w_I lo/hi, w_T lo/hi); a
    // warning is logged when sampling outside it.
    std::optional<std::array<float, 4>> trained_range;
};

// Network evaluations per sample for a config.
std::size_t evals_per_step(SamplerMode mode);

// Combined teacher velocity from the (uncond, image-only, full) evaluations.
Tensor guided_velocity(const Tensor& v_uu, const Tensor& v_cu, const Tensor& v_cc, double w_image, double w_text);

// Teacher guided velocity at (x_t, t) for base conditions; 3 evaluations.
Tensor teacher_velocity(const VelocityField& f, const Tensor& x_t, const Tensor& x0,
                        std::span<const model::Condition> base, double w_image, double w_text);
// Per-row guidance scales.
Tensor teacher_velocity(const VelocityField& f, const Tensor& x_t, const Tensor& x0,
                        std::span<const model::Condition> base, std::span<const double> w_image,
                        std::span<const double> w_text);

struct SampleResult {
    Tensor x;
    std::size_t eval_count = 0;  // network evaluations per sample
};

// Euler integration from t = 1 to t = 0 on a uniform grid. `base` supplies
// label, tags and instruction for each row; its t, dropout and guidance
// fields are overwritten. eps_ref is required for unified_reference.
SampleResult sample(const VelocityField& f, const Tensor& x0, std::span<const model::Condition> base,
                    const SamplerConfig& cfg, num::Rng& rng, const Tensor* eps_ref = nullptr);

// Same, starting from the given noise and integrating only from t_start to t_end.
Tensor integrate(const VelocityField& f, const Tensor& x_start, const Tensor& x0,
                 std::span<const model::Condition> base, const SamplerConfig& cfg, double t_start, double t_end,
                 std::size_t steps, std::size_t* eval_count = nullptr);

// Per-row RMS distance between samples and targets.
std::vector<double> endpoint_errors(const Tensor& x, const Tensor& target);
double mean_endpoint_error(const Tensor& x, const Tensor& target);

}  // namespace seedlab::flow
