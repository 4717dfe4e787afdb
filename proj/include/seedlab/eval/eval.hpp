#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "seedlab/distill/distill.hpp"
#include "seedlab/model/model.hpp"
#include "seedlab/toydata/types.hpp"

namespace seedlab::eval {

struct Metric {
    double value = 0.0;
    bool degenerate = false;
};

// Feature cosine restricted to the blocks named by preserve tags (all blocks
// when no preserve tag is set). Zero projections give 0, degenerate.
Metric consistency_score(std::span<const double> x0, std::span<const double> x_out, toy::TagSet tags);

// Cosine between the feature displacement and the instruction direction.
// A zero displacement, or an instruction without a direction, is degenerate.
Metric direction_score(std::span<const double> x0, std::span<const double> x_out, const toy::Instruction& instr);

// RMS distance to the analytic target.
double oracle_error(std::span<const double> x_out, std::span<const double> target);

// Piecewise-linear map through (raw, score) knots sorted by raw value;
// constant beyond the end knots.
double piecewise_linear(std::span<const std::array<double, 2>> knots, double raw);

// Knots: oracle error (0, 5) (0.05, 4.5) (0.25, 3) (1, 0).
double instruction_response_score(double oracle_error);
// Knots: consistency (0, 0) (0.9, 3) (0.99, 4.5) (1, 5).
double image_consistency_score(double consistency);
// Knots: direction score (0, 0) (0.5, 3) (0.95, 4.5) (1, 5).
double quality_score(double direction);

struct Scores {
    double instruction_response = 0.0;
    double image_consistency = 0.0;
    double quality = 0.0;
    double min() const;
};

struct EvalRecord {
    std::uint64_t id = 0;
    double consistency = 0.0;
    double direction_score = 0.0;
    double oracle_error = 0.0;
    bool consistency_degenerate = false;
    bool direction_degenerate = false;
    Scores scores;

    bool degenerate() const { return consistency_degenerate || direction_degenerate; }
};

EvalRecord evaluate_record(const toy::EditPair& pair, std::span<const double> x_out);
// outputs[i] is the sample for data[i].
std::vector<EvalRecord> evaluate(const toy::Dataset& data, const std::vector<std::vector<double>>& outputs);

struct Rates {
    double usability = 0.0;     // percent with min score >= usable
    double satisfaction = 0.0;  // percent with min score >= satisfied
};

Rates rates(std::span<const EvalRecord> records, double usable = 3.0, double satisfied = 4.5);

// Means and rates over non-degenerate records; degenerate ones are only counted.
struct Summary {
    std::size_t n_records = 0;
    std::size_t n_degenerate = 0;
    double mean_consistency = 0.0;
    double mean_direction = 0.0;
    double mean_oracle_error = 0.0;
    std::optional<Rates> rates;
};

Summary summarize(std::span<const EvalRecord> records);
nlohmann::ordered_json to_json(const Summary& s);

// Columns: id,consistency,direction_score,oracle_error,instruction_response,
// image_consistency,quality,degenerate. Numbers use 6 significant digits.
std::string records_csv(std::span<const EvalRecord> records);

// Fixed numeric format for reports.
std::string format_number(double v);

struct SampleSpec {
    std::size_t steps = 75;
    std::uint64_t seed = 0;
    // Students sample from eps_ref when this is set, from fresh noise otherwise.
    const distill::NoiseRefNet* noise_ref = nullptr;
    model::LinearHook* hook = nullptr;
    std::optional<std::array<float, 4>> trained_range;
};

struct Samples {
    std::vector<std::vector<double>> outputs;  // one per record
    std::size_t eval_count = 0;                // network evaluations per sample
};

// Samples every record. Records are grouped by dim and each dim draws its
// noise from Rng(seed).fork(dim), so repeated calls share the same noise.
// Students use one evaluation per step, teachers three.
Samples sample_dataset(const model::VelocityModel& m, const toy::Dataset& data, double w_image, double w_text,
                       const SampleSpec& spec);

struct SweepRow {
    double w_image = 0.0;
    double w_text = 0.0;
    Summary summary;
    std::size_t nfe = 0;
};

// One row per (w_I, w_T), w_I outer. Every grid point reuses the same noise.
std::vector<SweepRow> sweep_cfg(const model::VelocityModel& m, const toy::Dataset& testset,
                                std::span<const double> w_image_grid, std::span<const double> w_text_grid,
                                const SampleSpec& spec);

// Header: w_I,w_T,mean_consistency,mean_direction,mean_oracle_error,nfe,n_eval,n_degenerate
std::string sweep_csv(std::span<const SweepRow> rows);

// Steps along w_T (fixed w_I) where the mean direction score does not drop,
// and where the mean consistency does not rise.
struct TrendCount {
    std::size_t steps = 0;
    std::size_t direction_nondecreasing = 0;
    std::size_t consistency_nonincreasing = 0;
};
TrendCount trend_along_w_text(std::span<const SweepRow> rows, double w_image);

}  // namespace seedlab::eval
