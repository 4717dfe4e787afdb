#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "seedlab/flow/flow.hpp"
#include "seedlab/model/model.hpp"
#include "seedlab/numerics/params.hpp"
#include "seedlab/numerics/rng.hpp"
#include "seedlab/toydata/types.hpp"

namespace seedlab::train {

// Categorical over B equal bins of [0, 1]. Bin probabilities follow an EMA of
// a per-bin impact score, with a floor so every bin keeps being visited.
class TimestepDistribution {
public:
    explicit TimestepDistribution(std::size_t bins = 32, double decay = 0.99, double floor_fraction = 0.25);

    struct Draw {
        double t = 0.0;
        double weight = 1.0;  // (1/B) / probs[bin]
        std::size_t bin = 0;
    };

    Draw sample(num::Rng& rng) const;
    void update(std::size_t bin, double grad_norm_sq);
    // Replaces the probabilities directly (normalized, floor not enforced).
    void set_probs(std::vector<double> probs);

    std::size_t bins() const { return probs_.size(); }
    double floor() const { return floor_; }
    double weight(std::size_t bin) const;
    std::size_t bin_of(double t) const;
    const std::vector<double>& probs() const { return probs_; }
    const std::vector<double>& impact() const { return impact_; }
    bool is_uniform() const;

    nlohmann::ordered_json to_json() const;
    static TimestepDistribution from_json(const nlohmann::json& j);

private:
    void renormalize();

    double decay_;
    double floor_;
    std::vector<double> impact_;
    std::vector<double> probs_;
};

// Cosine decay from lr at step 0 to lr * final_fraction at step `steps`.
double cosine_lr(double lr, double final_fraction, std::size_t step, std::size_t steps);

class Adam {
public:
    explicit Adam(const num::ParamStore& params, double lr, double beta1 = 0.9, double beta2 = 0.999,
                  double eps = 1e-8);
    void step(num::ParamStore& params, const num::Gradients& grads);
    void set_lr(double lr) { lr_ = lr; }

private:
    double lr_, b1_, b2_, eps_;
    std::uint64_t t_ = 0;
    std::vector<num::Tensor> m_, v_;
};

enum class Stage { pretrain, finetune };
std::string_view to_string(Stage s);

struct StageConfig {
    Stage stage = Stage::pretrain;
    std::size_t steps = 20000;
    double lr = 1e-3;
    // Cosine decay to lr * lr_final_fraction over the stage; 1 keeps lr constant.
    double lr_final_fraction = 1.0;
    std::size_t token_budget = 256;
    double t2i_mix_fraction = 0.0;
    double quality_floor = 0.0;
    std::array<double, 3> lambdas{0.1, 0.1, 0.1};  // identity, structure, style
    double t_reward = 0.5;
    std::uint64_t seed = 0;
    bool adaptive_timesteps = true;
    std::size_t warmup_steps = 1000;
    flow::DropoutSpec dropout{};

    std::vector<flow::RewardSpec> rewards() const;
};

// Strict parsing: unknown keys and out-of-range values raise ConfigError.
StageConfig stage_config_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const StageConfig& c);
// A finetune stage may not lower the pretrain quality floor.
void check_stage_order(const StageConfig& pretrain, const StageConfig& finetune);

struct StepRecord {
    std::size_t step = 0;
    Stage stage = Stage::pretrain;
    std::size_t dim = 0;
    double loss = 0.0;
    double fm = 0.0;
    std::array<double, 3> rewards{};
    std::vector<std::size_t> bins;
    std::vector<double> weights;
    bool t2i = false;
};

std::string to_json_line(const StepRecord& r);

struct TrainReport {
    std::size_t steps = 0;
    std::size_t t2i_batches = 0;
    std::size_t records_used = 0;
    std::vector<std::size_t> batch_dims;  // per step, for curriculum checks
    double final_loss = 0.0;
};

// Runs one stage in place on `m`. Each step is one dimension-homogeneous
// batch; dims are visited in nondecreasing order with steps shared in
// proportion to record counts. `metrics`, when given, receives one JSON line
// per step.
TrainReport train_stage(model::VelocityModel& m, const toy::Dataset& data, const StageConfig& cfg,
                        TimestepDistribution& dist, std::ostream* metrics = nullptr);

// Records surviving the stage's quality filter.
toy::Dataset stage_dataset(const toy::Dataset& data, const StageConfig& cfg);

struct UnbiasednessReport {
    double weighted_mean = 0.0;
    double weighted_se = 0.0;
    double uniform_mean = 0.0;
    double uniform_se = 0.0;
    std::size_t draws = 0;
    // |weighted - uniform| / sqrt(se_w^2 + se_u^2)
    double z = 0.0;
    // Variance of the per-draw loss estimator, weighted over uniform.
    double loss_variance_ratio = 0.0;
    // Trace of the per-draw parameter-gradient covariance, weighted over uniform.
    double grad_variance_ratio = 0.0;
    std::size_t grad_draws = 0;
};

// Importance-weighted loss under `dist` against plain loss under uniform
// timesteps, on a frozen model. No condition dropout.
UnbiasednessReport unbiasedness_check(const model::VelocityModel& m, const toy::Dataset& data,
                                      const TimestepDistribution& dist, std::size_t n_draws, num::Rng& rng,
                                      std::span<const flow::RewardSpec> rewards, std::size_t grad_draws = 0);

}  // namespace seedlab::train
