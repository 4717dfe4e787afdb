#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "seedlab/model/model.hpp"
#include "seedlab/numerics/tensor.hpp"
#include "seedlab/toydata/types.hpp"

namespace seedlab::quant {

using num::Tensor;

// Weight layout is [in, out] (y = x W + b). A "channel" is an output column;
// a group is kGroupSize consecutive input rows of one column.
enum class Granularity { per_tensor, per_channel, per_group };
inline constexpr std::size_t kGroupSize = 32;

std::string_view to_string(Granularity g);
Granularity granularity_from_string(std::string_view s);

// Largest representable magnitude: 127 for 8 bits, 7 for 4 bits.
int qmax(int bits);
void check_bits(int bits);

// Cost-model weight of one MAC relative to an f32 MAC.
double mac_weight(int bits);

std::size_t scale_count(std::size_t rows, std::size_t cols, Granularity g);
// Index of the scale governing element (r, c).
std::size_t scale_index(std::size_t r, std::size_t c, std::size_t cols, Granularity g);

struct QuantizedTensor {
    std::size_t rows = 0, cols = 0;
    int bits = 8;
    Granularity granularity = Granularity::per_tensor;
    std::vector<std::int8_t> q;   // row-major, |q| <= qmax
    std::vector<double> scales;   // scale_count entries
};

// scale = clip_ratio * max|unit| / qmax; all-zero units get scale 1.
std::vector<double> compute_scales(const Tensor& x, Granularity g, int bits, double clip_ratio = 1.0);
// Round half to even, saturating at +-qmax.
QuantizedTensor quantize(const Tensor& x, Granularity g, int bits, double clip_ratio = 1.0);
QuantizedTensor quantize_with_scales(const Tensor& x, Granularity g, int bits, std::vector<double> scales);
Tensor dequantize(const QuantizedTensor& q);

// Per input channel (column of x) absolute maxima.
std::vector<double> column_absmax(const Tensor& x);
// Per input channel (row of w) absolute maxima.
std::vector<double> row_absmax(const Tensor& w);

struct SmoothingVector {
    std::vector<double> s;  // one factor per input channel
    double alpha = 0.5;
};

// s_j = max|X_j|^alpha / max|W_j|^(1 - alpha); channels with a zero maximum get 1.
SmoothingVector smoothing_factors(const Tensor& w, std::span<const double> act_absmax, double alpha);
// W' = diag(s) W and X' = X diag(1/s), so X' W' = X W.
Tensor smooth_weights(const Tensor& w, std::span<const double> s);
Tensor smooth_activations(const Tensor& x, std::span<const double> s);

// Recorded inputs of one dense layer.
struct LayerCalib {
    Tensor inputs;                // [N, in]
    std::vector<double> absmax;   // per input channel
};

struct CalibSet {
    std::map<std::string, LayerCalib> layers;
};

struct CalibConfig {
    std::size_t samples = 256;
    std::uint64_t seed = 0;
    // Guidance draws for students (log-uniform): w_I lo/hi, w_T lo/hi.
    std::array<double, 4> guidance_range{1.0, 4.0, 1.0, 6.0};
};

// Records every dense layer's input over `samples` draws of (pair, t, noise)
// per dim present in `data`. Teacher draws cycle through the three guidance
// condition patterns; student draws carry log-uniform guidance scales.
CalibSet calibrate(const model::VelocityModel& m, const toy::Dataset& data, const CalibConfig& cfg);

struct LayerScheme {
    int bits = 8;
    Granularity granularity = Granularity::per_tensor;
    double clip_ratio = 1.0;           // applied to the calibrated activation maximum
    std::optional<double> alpha;       // smoothing exponent; none means unsmoothed
    std::vector<double> smooth;        // per input channel, empty when unsmoothed
    std::vector<double> weight_scales; // per granularity unit of the smoothed weight
    double act_scale = 1.0;            // per tensor, for smoothed activations
};

// Builds scales from the weight and calibration maxima. Scales are rounded to
// f32 so the JSON form round-trips exactly.
LayerScheme make_scheme(const Tensor& w, const LayerCalib& calib, int bits, Granularity g, double clip_ratio,
                        std::optional<double> alpha);

// Simulated integer layer: both operands quantized, int32 accumulation per
// scale unit, dequantized at the output, then bias.
Tensor quantized_linear(const Tensor& x, const Tensor& w, const Tensor& b, const LayerScheme& s);

// Mean squared output error against the float layer on the given inputs.
double layer_mse(const Tensor& x, const Tensor& w, const Tensor& b, const LayerScheme& s);
// Same, divided by the mean square of the float output.
double relative_layer_mse(const Tensor& x, const Tensor& w, const Tensor& b, const LayerScheme& s);

struct Candidate {
    Granularity granularity = Granularity::per_tensor;
    double clip_ratio = 1.0;
    std::optional<double> alpha;
};

// Granularities x clip ratios {1, 0.9, 0.8, 0.7} x alpha {0, 0.25, 0.5, 0.75, 1},
// enumerated in that nesting order.
std::vector<Candidate> default_candidates();

struct SearchResult {
    LayerScheme scheme;
    std::size_t index = 0;
    std::vector<double> mse;  // per candidate, in enumeration order
};

// Exhaustive: the first candidate with the smallest calibration MSE wins.
SearchResult search_scheme(const Tensor& w, const Tensor& b, const LayerCalib& calib, int bits,
                           std::span<const Candidate> candidates);

// Relative output MSE of plain per-tensor 8-bit quantization above `threshold`.
bool is_sensitive(const Tensor& w, const Tensor& b, const LayerCalib& calib, double threshold = 1e-3);

struct PtqConfig {
    std::size_t iters = 100;
    double lr = 1e-2;
    // Stop after this many iterations without a new best.
    std::size_t patience = 20;
};

struct PtqResult {
    LayerScheme scheme;  // best scheme seen
    std::vector<double> mse;  // best calibration MSE after each iteration, starting with the input scheme
};

// Adam on log weight scales and the log activation scale with a
// straight-through rounding gradient. The returned scheme is the best one
// visited, so its calibration MSE never exceeds the input's.
PtqResult ptq_finetune(const Tensor& w, const Tensor& b, const Tensor& x, const LayerScheme& start,
                       const PtqConfig& cfg = {});

using SchemeTable = std::map<std::string, LayerScheme>;

struct QuantConfig {
    int bits = 8;
    double sensitivity_threshold = 1e-3;
    bool finetune = true;
    PtqConfig ptq{};
    CalibConfig calib{};
};

struct LayerReport {
    std::string layer;
    bool sensitive = false;
    double mse_default = 0.0;  // per-tensor, clip 1, unsmoothed
    double mse_searched = 0.0;
    double mse_final = 0.0;
    double float_mean_sq = 0.0;
};

struct QuantizeResult {
    SchemeTable table;
    std::vector<LayerReport> layers;
};

// Sensitive layers get the full search; the rest keep per-tensor, clip 1,
// unsmoothed. Every layer is then fine-tuned when cfg.finetune is set.
QuantizeResult quantize_model(const model::VelocityModel& m, const CalibSet& calib, const QuantConfig& cfg);

// Strict: unknown keys and out-of-range values raise ConfigError. The calib
// guidance range is not configurable here; it follows the model.
QuantConfig quant_config_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const QuantConfig& c);

nlohmann::ordered_json to_json(const SchemeTable& table);
SchemeTable scheme_table_from_json(const nlohmann::json& j);

// Little-endian f32 packing used for scale vectors.
std::string encode_f32_base64(std::span<const double> values);
std::vector<double> decode_f32_base64(std::string_view text);

// Routes the model's dense layers through quantized_linear and counts MACs.
class QuantHook : public model::LinearHook {
public:
    explicit QuantHook(const SchemeTable& table) : table_(table) {}
    Tensor linear(std::string_view layer, const Tensor& x, const Tensor& w, const Tensor& b) override;

    double float_macs() const { return float_macs_; }
    double weighted_macs() const { return weighted_macs_; }
    void reset_counts() { float_macs_ = weighted_macs_ = 0.0; }

private:
    const SchemeTable& table_;
    double float_macs_ = 0.0;
    double weighted_macs_ = 0.0;
};

struct CostReport {
    double float_macs = 0.0;
    double weighted_macs = 0.0;
    std::size_t eval_counts = 0;  // network evaluations per sample
    double wall_clock_ms = 0.0;   // indicative only
};

nlohmann::ordered_json to_json(const CostReport& c);

// Cost of sampling one record: evals x per-evaluation MACs, weighted by the
// scheme bit width when a table is given (float otherwise).
CostReport sampling_cost(const model::VelocityModel& m, std::size_t dim, std::size_t evals,
                         const SchemeTable* table = nullptr);

struct QForwardResult {
    Tensor output;
    CostReport cost;
};

// One quantized forward pass; every dense layer needs a scheme.
QForwardResult qforward(const model::VelocityModel& m, const SchemeTable& table, const Tensor& x_t,
                        const Tensor* x0, std::span<const model::Condition> conds);

}  // namespace seedlab::quant
