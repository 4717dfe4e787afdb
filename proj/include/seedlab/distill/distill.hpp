#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "json.hpp"
#include "seedlab/flow/flow.hpp"
#include "seedlab/model/model.hpp"
#include "seedlab/numerics/checkpoint.hpp"
#include "seedlab/numerics/params.hpp"
#include "seedlab/toydata/types.hpp"

namespace seedlab::distill {

using num::Tensor;

// Width of the condition summary fed to the noise reference net:
// label one-hot, tag bits, op one-hot, op params.
inline constexpr std::size_t kSummaryWidth = toy::kTaskLabelCount + toy::kTagCount + model::kInstructionWidth;

std::vector<double> condition_summary(const model::Condition& c);

// Two dense layers: (x0, summary) -> gelu(hidden) -> eps_ref.
class NoiseRefNet {
public:
    static inline const std::string kPrefix = "noise_ref.";

    static NoiseRefNet init(std::span<const std::size_t> dims, std::size_t hidden, std::uint64_t seed);
    // Picks out "noise_ref." parameters; other names are ignored.
    static NoiseRefNet from_params(const num::ParamStore& params);

    Tensor predict(const Tensor& x0, std::span<const model::Condition> conds) const;
    num::NodeId predict(num::Graph& g, const Tensor& x0, std::span<const model::Condition> conds) const;

    const num::ParamStore& params() const { return params_; }
    num::ParamStore& params() { return params_; }
    bool supports_dim(std::size_t dim) const;

private:
    num::ParamStore params_;
};

struct NoiseRefConfig {
    std::size_t hidden = 64;
    std::size_t candidates = 8;
    std::size_t teacher_steps = 75;
    double w_image = 1.0;
    double w_text = 1.0;
    std::size_t epochs = 40;
    std::size_t batch = 32;
    double lr = 1e-3;
    std::uint64_t seed = 0;
    // Fit on the first `records` records only; 0 uses all of them.
    std::size_t records = 0;
};

struct NoiseRefResult {
    NoiseRefNet net;
    std::vector<double> epoch_mse;  // train MSE after each epoch
    // Per record, in dataset order.
    std::vector<std::vector<double>> best_noise;
    std::vector<std::vector<double>> worst_noise;
};

// Candidate noises for a record are a pure function of (seed, record id).
Tensor candidate_noises(std::uint64_t seed, std::uint64_t record_id, std::size_t count, std::size_t dim);

// Fits the predictor to the best of `candidates` noise draws per record,
// where "best" minimizes the teacher sampler's endpoint error.
NoiseRefResult train_noise_ref(const model::VelocityModel& teacher, const toy::Dataset& data,
                               const NoiseRefConfig& cfg);

struct DistillConfig {
    std::array<double, 2> w_image_range{1.0, 4.0};
    std::array<double, 2> w_text_range{1.0, 6.0};
    std::size_t student_steps = 8;
    std::size_t teacher_steps = 75;
    std::size_t cfg_iters = 3000;
    std::size_t fewstep_iters = 3000;
    // Teacher trajectories cached per record for the few-step objective.
    std::size_t trajectories_per_record = 2;
    double lr = 5e-4;
    // Cosine decay to lr * lr_final_fraction within each stage.
    double lr_final_fraction = 1.0;
    std::size_t batch = 32;
    std::uint64_t seed = 0;
    NoiseRefConfig noise{};

    void validate() const;
    std::array<float, 4> guidance_range() const;
};

DistillConfig distill_config_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const DistillConfig& c);

// log-uniform on [lo, hi]
double draw_log_uniform(num::Rng& rng, std::array<double, 2> range);

struct DistillReport {
    std::vector<double> losses;  // per iteration
    std::uint64_t teacher_checksum_before = 0;
    std::uint64_t teacher_checksum_after = 0;
};

// Regresses the student's single evaluation onto the teacher's 3-evaluation
// guided velocity at random (pair, t, w_I, w_T).
DistillReport distill_cfg(const model::VelocityModel& teacher, model::VelocityModel& student,
                          const toy::Dataset& data, const DistillConfig& cfg);

// Segment consistency on the student's step grid: from teacher trajectory
// states started at eps_ref, one student Euler step over each segment is
// regressed onto the teacher's finer sub-steps over that segment.
DistillReport distill_fewstep(const model::VelocityModel& teacher, model::VelocityModel& student,
                              const NoiseRefNet& noise_ref, const toy::Dataset& data, const DistillConfig& cfg);

struct CfgFidelity {
    double mse = 0.0;              // per element, student vs teacher
    double teacher_mean_sq = 0.0;  // per element mean of teacher velocity squared
    std::size_t samples = 0;
};

// Held-out agreement at random (pair, t, w) draws, w over the configured ranges.
CfgFidelity cfg_fidelity(const model::VelocityModel& teacher, const model::VelocityModel& student,
                         const toy::Dataset& data, const DistillConfig& cfg, std::size_t draws, std::uint64_t seed);

// Student checkpoint: model parameters plus "noise_ref." parameters.
num::ParamStore bundle_student(const model::VelocityModel& student, const NoiseRefNet& noise_ref);
num::CheckpointHeader student_header(const DistillConfig& cfg);

struct StudentBundle {
    model::VelocityModel student;
    NoiseRefNet noise_ref;
};
StudentBundle split_student(const num::ParamStore& params);

// eps_ref rows for a batch.
Tensor noise_reference(const NoiseRefNet& net, const Tensor& x0, std::span<const model::Condition> conds);

}  // namespace seedlab::distill
