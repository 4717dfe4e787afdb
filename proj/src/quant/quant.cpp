#include "seedlab/quant/quant.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <limits>

#include "seedlab/error.hpp"
#include "seedlab/log.hpp"
#include "seedlab/numerics/kernels.hpp"
#include "seedlab/numerics/ops.hpp"
#include "seedlab/numerics/rng.hpp"

namespace seedlab::quant {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

double to_f32(double v) {
    const float f = static_cast<float>(v);
    if (v > 0.0 && !(f >= std::numeric_limits<float>::min())) return std::numeric_limits<float>::min();
    return static_cast<double>(f);
}

void round_all_f32(std::vector<double>& v) {
    for (double& x : v) x = to_f32(x);
}

double mean_sq_diff(const Tensor& a, const Tensor& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s / static_cast<double>(a.numel());
}

double mean_sq(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data()) s += v * v;
    return s / static_cast<double>(a.numel());
}

Tensor float_linear(const Tensor& x, const Tensor& w, const Tensor& b) { return num::add(num::matmul(x, w), b); }

// Records each dense layer's input and evaluates it in float.
class RecordHook : public model::LinearHook {
public:
    std::map<std::string, std::vector<Tensor>> seen;
    Tensor linear(std::string_view layer, const Tensor& x, const Tensor& w, const Tensor& b) override {
        seen[std::string(layer)].push_back(x);
        return float_linear(x, w, b);
    }
};

Tensor stack_rows(const std::vector<Tensor>& parts) {
    std::size_t rows = 0;
    for (const auto& p : parts) rows += p.rows();
    Tensor out = Tensor::zeros(rows, parts.front().cols());
    std::size_t r0 = 0;
    for (const auto& p : parts) {
        std::copy(p.data().begin(), p.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(r0 * p.cols()));
        r0 += p.rows();
    }
    return out;
}

constexpr char kB64[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

}  // namespace

std::string_view to_string(Granularity g) {
    switch (g) {
        case Granularity::per_tensor: return "per_tensor";
        case Granularity::per_channel: return "per_channel";
        case Granularity::per_group: return "per_group";
    }
    return "?";
}

Granularity granularity_from_string(std::string_view s) {
    for (auto g : {Granularity::per_tensor, Granularity::per_channel, Granularity::per_group})
        if (to_string(g) == s) return g;
    throw ConfigError("unknown granularity '" + std::string(s) + "'");
}

void check_bits(int bits) {
    if (bits != 4 && bits != 8) throw ContractError("bits must be 4 or 8");
}

int qmax(int bits) {
    check_bits(bits);
    return bits == 8 ? 127 : 7;
}

double mac_weight(int bits) {
    check_bits(bits);
    return bits == 8 ? 0.25 : 0.125;
}

std::size_t scale_count(std::size_t rows, std::size_t cols, Granularity g) {
    switch (g) {
        case Granularity::per_tensor: return 1;
        case Granularity::per_channel: return cols;
        case Granularity::per_group: return (rows + kGroupSize - 1) / kGroupSize * cols;
    }
    return 1;
}

std::size_t scale_index(std::size_t r, std::size_t c, std::size_t cols, Granularity g) {
    switch (g) {
        case Granularity::per_tensor: return 0;
        case Granularity::per_channel: return c;
        case Granularity::per_group: return (r / kGroupSize) * cols + c;
    }
    return 0;
}

std::vector<double> compute_scales(const Tensor& x, Granularity g, int bits, double clip_ratio) {
    if (!(clip_ratio > 0.0 && clip_ratio <= 1.0)) throw ContractError("clip_ratio must lie in (0, 1]");
    const std::size_t rows = x.rows(), cols = x.cols();
    std::vector<double> mx(scale_count(rows, cols, g), 0.0);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) {
            double& m = mx[scale_index(r, c, cols, g)];
            m = std::max(m, std::abs(x(r, c)));
        }
    const double q = qmax(bits);
    for (double& m : mx) m = m > 0.0 ? clip_ratio * m / q : 1.0;
    return mx;
}

QuantizedTensor quantize_with_scales(const Tensor& x, Granularity g, int bits, std::vector<double> scales) {
    QuantizedTensor out;
    out.rows = x.rows();
    out.cols = x.cols();
    out.bits = bits;
    out.granularity = g;
    if (scales.size() != scale_count(out.rows, out.cols, g)) throw ShapeError("scale count does not match granularity");
    for (double s : scales)
        if (!(s > 0.0) || !std::isfinite(s)) throw ContractError("scales must be positive and finite");
    const double q = qmax(bits);
    out.q.resize(x.numel());
    for (std::size_t r = 0; r < out.rows; ++r)
        for (std::size_t c = 0; c < out.cols; ++c) {
            const double v = std::nearbyint(x(r, c) / scales[scale_index(r, c, out.cols, g)]);
            out.q[r * out.cols + c] = static_cast<std::int8_t>(std::clamp(v, -q, q));
        }
    out.scales = std::move(scales);
    return out;
}

QuantizedTensor quantize(const Tensor& x, Granularity g, int bits, double clip_ratio) {
    return quantize_with_scales(x, g, bits, compute_scales(x, g, bits, clip_ratio));
}

Tensor dequantize(const QuantizedTensor& q) {
    Tensor out = Tensor::zeros(q.rows, q.cols);
    for (std::size_t r = 0; r < q.rows; ++r)
        for (std::size_t c = 0; c < q.cols; ++c)
            out(r, c) = q.q[r * q.cols + c] * q.scales[scale_index(r, c, q.cols, q.granularity)];
    return out;
}

std::vector<double> column_absmax(const Tensor& x) {
    std::vector<double> m(x.cols(), 0.0);
    for (std::size_t r = 0; r < x.rows(); ++r)
        for (std::size_t c = 0; c < x.cols(); ++c) m[c] = std::max(m[c], std::abs(x(r, c)));
    return m;
}

std::vector<double> row_absmax(const Tensor& w) {
    std::vector<double> m(w.rows(), 0.0);
    for (std::size_t r = 0; r < w.rows(); ++r)
        for (std::size_t c = 0; c < w.cols(); ++c) m[r] = std::max(m[r], std::abs(w(r, c)));
    return m;
}

SmoothingVector smoothing_factors(const Tensor& w, std::span<const double> act_absmax, double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ContractError("alpha must lie in [0, 1]");
    if (act_absmax.size() != w.rows()) throw ShapeError("one activation maximum per weight row required");
    const auto wmax = row_absmax(w);
    SmoothingVector sv{std::vector<double>(w.rows(), 1.0), alpha};
    for (std::size_t j = 0; j < w.rows(); ++j)
        if (act_absmax[j] > 0.0 && wmax[j] > 0.0)
            sv.s[j] = std::pow(act_absmax[j], alpha) / std::pow(wmax[j], 1.0 - alpha);
    return sv;
}

Tensor smooth_weights(const Tensor& w, std::span<const double> s) {
    if (s.size() != w.rows()) throw ShapeError("one smoothing factor per weight row required");
    Tensor out = w;
    for (std::size_t r = 0; r < w.rows(); ++r)
        for (double& v : out.row_span(r)) v *= s[r];
    return out;
}

Tensor smooth_activations(const Tensor& x, std::span<const double> s) {
    if (s.size() != x.cols()) throw ShapeError("one smoothing factor per activation column required");
    Tensor out = x;
    for (std::size_t r = 0; r < x.rows(); ++r)
        for (std::size_t c = 0; c < x.cols(); ++c) out(r, c) /= s[c];
    return out;
}

CalibSet calibrate(const model::VelocityModel& m, const toy::Dataset& data, const CalibConfig& cfg) {
    if (data.empty() || cfg.samples == 0) throw ContractError("calibration needs records and samples");
    std::map<std::size_t, std::vector<std::size_t>> by_dim;
    for (std::size_t i = 0; i < data.size(); ++i) by_dim[data[i].source.dim()].push_back(i);
    RecordHook hook;
    const num::Rng root(cfg.seed);
    const auto& gr = cfg.guidance_range;
    for (const auto& [dim, members] : by_dim) {
        if (!m.supports_dim(dim)) continue;
        num::Rng rng = root.fork(dim);
        Tensor x_t = Tensor::zeros(cfg.samples, dim), x0 = Tensor::zeros(cfg.samples, dim);
        std::vector<model::Condition> conds;
        for (std::size_t r = 0; r < cfg.samples; ++r) {
            const auto& p = data[members[rng.below(members.size())]];
            const double t = rng.uniform();
            for (std::size_t j = 0; j < dim; ++j) {
                x_t(r, j) = (1.0 - t) * p.target.values[j] + t * rng.normal();
                x0(r, j) = p.source.values[j];
            }
            model::Condition c = model::condition_for(p, t);
            if (m.has_guidance()) {
                c.w_image = std::exp(rng.uniform(std::log(gr[0]), std::log(gr[1])));
                c.w_text = std::exp(rng.uniform(std::log(gr[2]), std::log(gr[3])));
            } else {
                c.drop_image = r % 3 == 0;
                c.drop_text = r % 3 != 2;
            }
            conds.push_back(c);
        }
        model::forward(m, x_t, &x0, conds, &hook);
    }
    CalibSet out;
    for (auto& [name, parts] : hook.seen) {
        LayerCalib lc{stack_rows(parts), {}};
        lc.absmax = column_absmax(lc.inputs);
        for (double v : lc.absmax)
            if (!std::isfinite(v)) throw ContractError("non-finite activation recorded for layer " + name);
        out.layers.emplace(name, std::move(lc));
    }
    return out;
}

LayerScheme make_scheme(const Tensor& w, const LayerCalib& calib, int bits, Granularity g, double clip_ratio,
                        std::optional<double> alpha) {
    if (calib.absmax.size() != w.rows()) throw ShapeError("calibration width does not match the layer");
    LayerScheme s;
    s.bits = bits;
    s.granularity = g;
    s.clip_ratio = clip_ratio;
    s.alpha = alpha;
    Tensor ws = w;
    double amax = 0.0;
    if (alpha) {
        s.smooth = smoothing_factors(w, calib.absmax, *alpha).s;
        round_all_f32(s.smooth);
        ws = smooth_weights(w, s.smooth);
        for (std::size_t j = 0; j < w.rows(); ++j) amax = std::max(amax, calib.absmax[j] / s.smooth[j]);
    } else {
        for (double v : calib.absmax) amax = std::max(amax, v);
    }
    s.weight_scales = compute_scales(ws, g, bits, 1.0);
    round_all_f32(s.weight_scales);
    if (!(clip_ratio > 0.0 && clip_ratio <= 1.0)) throw ContractError("clip_ratio must lie in (0, 1]");
    s.act_scale = to_f32(amax > 0.0 ? clip_ratio * amax / qmax(bits) : 1.0);
    return s;
}

Tensor quantized_linear(const Tensor& x, const Tensor& w, const Tensor& b, const LayerScheme& s) {
    if (x.cols() != w.rows()) throw ShapeError("linear input width mismatch");
    const bool smoothed = !s.smooth.empty();
    const auto xq = quantize_with_scales(smoothed ? smooth_activations(x, s.smooth) : x, Granularity::per_tensor,
                                         s.bits, {s.act_scale});
    const auto wq = quantize_with_scales(smoothed ? smooth_weights(w, s.smooth) : w, s.granularity, s.bits,
                                         s.weight_scales);
    const std::size_t n = x.rows(), in = w.rows(), out = w.cols();
    Tensor y = Tensor::zeros(n, out);
    std::vector<std::int32_t> acc(n * out);
    const std::size_t group = s.granularity == Granularity::per_group ? kGroupSize : in;
    for (std::size_t k0 = 0, gi = 0; k0 < in; k0 += group, ++gi) {
        const std::size_t k = std::min(group, in - k0);
        kernels::gemm_s8s32(n, out, k, xq.q.data() + k0, in, wq.q.data() + k0 * out, out, acc.data(), out);
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < out; ++c) {
                const double ws = s.weight_scales[scale_index(k0, c, out, s.granularity)];
                y(r, c) += static_cast<double>(acc[r * out + c]) * (s.act_scale * ws);
            }
    }
    return num::add(y, b);
}

double layer_mse(const Tensor& x, const Tensor& w, const Tensor& b, const LayerScheme& s) {
    return mean_sq_diff(quantized_linear(x, w, b, s), float_linear(x, w, b));
}

double relative_layer_mse(const Tensor& x, const Tensor& w, const Tensor& b, const LayerScheme& s) {
    const Tensor ref = float_linear(x, w, b);
    const double denom = mean_sq(ref);
    const double err = mean_sq_diff(quantized_linear(x, w, b, s), ref);
    return denom > 0.0 ? err / denom : err;
}

std::vector<Candidate> default_candidates() {
    std::vector<Candidate> out;
    for (auto g : {Granularity::per_tensor, Granularity::per_channel, Granularity::per_group})
        for (double clip : {1.0, 0.9, 0.8, 0.7})
            for (double a : {0.0, 0.25, 0.5, 0.75, 1.0}) out.push_back({g, clip, a});
    return out;
}

SearchResult search_scheme(const Tensor& w, const Tensor& b, const LayerCalib& calib, int bits,
                           std::span<const Candidate> candidates) {
    if (candidates.empty()) throw ContractError("empty candidate set");
    SearchResult res;
    const Tensor ref = float_linear(calib.inputs, w, b);
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        const auto& c = candidates[i];
        LayerScheme s = make_scheme(w, calib, bits, c.granularity, c.clip_ratio, c.alpha);
        const double e = mean_sq_diff(quantized_linear(calib.inputs, w, b, s), ref);
        res.mse.push_back(e);
        if (i == 0 || e < res.mse[res.index]) {
            res.index = i;
            res.scheme = std::move(s);
        }
    }
    return res;
}

bool is_sensitive(const Tensor& w, const Tensor& b, const LayerCalib& calib, double threshold) {
    const auto s = make_scheme(w, calib, 8, Granularity::per_tensor, 1.0, std::nullopt);
    return relative_layer_mse(calib.inputs, w, b, s) > threshold;
}

PtqResult ptq_finetune(const Tensor& w, const Tensor& b, const Tensor& x, const LayerScheme& start,
                       const PtqConfig& cfg) {
    PtqResult res{start, {}};
    const Tensor ref = float_linear(x, w, b);
    const bool smoothed = !start.smooth.empty();
    const Tensor xs = smoothed ? smooth_activations(x, start.smooth) : x;
    const Tensor wsm = smoothed ? smooth_weights(w, start.smooth) : w;
    const double q = qmax(start.bits);
    const std::size_t nw = start.weight_scales.size();
    const std::size_t in = w.rows(), out = w.cols();

    double best = mean_sq_diff(quantized_linear(x, w, b, res.scheme), ref);
    res.mse.push_back(best);

    // The iterate follows Adam freely; the result is the best scheme seen.
    LayerScheme cur = start;
    std::vector<double> m(nw + 1, 0.0), v(nw + 1, 0.0);
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    std::size_t since_best = 0;
    for (std::size_t it = 0; it < cfg.iters && since_best < cfg.patience && best > 0.0; ++it) {
        // Fake-quantized operands and d(dequantized)/d(scale) under the straight-through rule.
        Tensor xh(xs.shape()), dxa(xs.shape());
        for (std::size_t i = 0; i < xs.numel(); ++i) {
            const double u = xs[i] / cur.act_scale;
            const double qi = std::clamp(std::nearbyint(u), -q, q);
            xh[i] = qi * cur.act_scale;
            dxa[i] = std::abs(u) <= q ? qi - u : qi;
        }
        Tensor wh(wsm.shape()), dws(wsm.shape());
        for (std::size_t r = 0; r < in; ++r)
            for (std::size_t c = 0; c < out; ++c) {
                const double sc = cur.weight_scales[scale_index(r, c, out, cur.granularity)];
                const double u = wsm(r, c) / sc;
                const double qi = std::clamp(std::nearbyint(u), -q, q);
                wh(r, c) = qi * sc;
                dws(r, c) = std::abs(u) <= q ? qi - u : qi;
            }
        Tensor g = num::sub(float_linear(xh, wh, b), ref);
        for (double& e : g.data()) e *= 2.0 / static_cast<double>(g.numel());
        const Tensor gw = num::matmul(num::transpose(xh), g);
        const Tensor gx = num::matmul(g, num::transpose(wh));
        std::vector<double> grad(nw + 1, 0.0);
        for (std::size_t r = 0; r < in; ++r)
            for (std::size_t c = 0; c < out; ++c) grad[scale_index(r, c, out, cur.granularity)] += gw(r, c) * dws(r, c);
        for (std::size_t u = 0; u < nw; ++u) grad[u] *= cur.weight_scales[u];
        for (std::size_t i = 0; i < xs.numel(); ++i) grad[nw] += gx[i] * dxa[i];
        grad[nw] *= cur.act_scale;

        const double t = static_cast<double>(it + 1);
        for (std::size_t k = 0; k <= nw; ++k) {
            m[k] = b1 * m[k] + (1 - b1) * grad[k];
            v[k] = b2 * v[k] + (1 - b2) * grad[k] * grad[k];
            const double mh = m[k] / (1 - std::pow(b1, t));
            const double vh = v[k] / (1 - std::pow(b2, t));
            double& target = k < nw ? cur.weight_scales[k] : cur.act_scale;
            target = to_f32(target * std::exp(-cfg.lr * mh / (std::sqrt(vh) + eps)));
        }
        const double e = mean_sq_diff(quantized_linear(x, w, b, cur), ref);
        if (e < best) {
            best = e;
            res.scheme = cur;
            since_best = 0;
        } else {
            ++since_best;
        }
        res.mse.push_back(best);
    }
    return res;
}

QuantizeResult quantize_model(const model::VelocityModel& m, const CalibSet& calib, const QuantConfig& cfg) {
    check_bits(cfg.bits);
    QuantizeResult res;
    const auto& p = m.params();
    const auto candidates = default_candidates();
    for (const auto& [layer, lc] : calib.layers) {
        const Tensor& w = p.value(p.at(layer + ".w"));
        const Tensor& b = p.value(p.at(layer + ".b"));
        LayerReport rep;
        rep.layer = layer;
        rep.float_mean_sq = mean_sq(float_linear(lc.inputs, w, b));
        LayerScheme s = make_scheme(w, lc, cfg.bits, Granularity::per_tensor, 1.0, std::nullopt);
        rep.mse_default = layer_mse(lc.inputs, w, b, s);
        const double rel = rep.float_mean_sq > 0.0 ? rep.mse_default / rep.float_mean_sq : rep.mse_default;
        rep.sensitive = rel > cfg.sensitivity_threshold;
        if (rep.sensitive) s = search_scheme(w, b, lc, cfg.bits, candidates).scheme;
        rep.mse_searched = layer_mse(lc.inputs, w, b, s);
        if (cfg.finetune) {
            auto ft = ptq_finetune(w, b, lc.inputs, s, cfg.ptq);
            s = std::move(ft.scheme);
            rep.mse_final = ft.mse.back();
        } else {
            rep.mse_final = rep.mse_searched;
        }
        log::debug("quant " + layer + (rep.sensitive ? " sensitive" : "") + " mse " + std::to_string(rep.mse_final));
        res.table.emplace(layer, std::move(s));
        res.layers.push_back(std::move(rep));
    }
    return res;
}

std::string encode_f32_base64(std::span<const double> values) {
    std::vector<std::uint8_t> bytes;
    for (double d : values) {
        const float f = static_cast<float>(d);
        std::uint32_t u;
        std::memcpy(&u, &f, 4);
        for (int k = 0; k < 4; ++k) bytes.push_back(static_cast<std::uint8_t>(u >> (8 * k)));
    }
    std::string out;
    for (std::size_t i = 0; i < bytes.size(); i += 3) {
        const std::size_t n = std::min<std::size_t>(3, bytes.size() - i);
        std::uint32_t chunk = 0;
        for (std::size_t k = 0; k < n; ++k) chunk |= static_cast<std::uint32_t>(bytes[i + k]) << (16 - 8 * k);
        for (std::size_t k = 0; k < 4; ++k) out += k <= n ? kB64[(chunk >> (18 - 6 * k)) & 63] : '=';
    }
    return out;
}

std::vector<double> decode_f32_base64(std::string_view text) {
    if (text.size() % 4 != 0) throw ConfigError("base64 length must be a multiple of 4");
    std::vector<std::uint8_t> bytes;
    for (std::size_t i = 0; i < text.size(); i += 4) {
        std::uint32_t chunk = 0;
        std::size_t pad = 0;
        for (std::size_t k = 0; k < 4; ++k) {
            const char ch = text[i + k];
            std::uint32_t v = 0;
            if (ch == '=') {
                ++pad;
            } else {
                const char* pos = std::strchr(kB64, ch);
                if (ch == '\0' || pos == nullptr || pad > 0) throw ConfigError("invalid base64 text");
                v = static_cast<std::uint32_t>(pos - kB64);
            }
            chunk |= v << (18 - 6 * k);
        }
        if (pad > 2 || (pad > 0 && i + 4 != text.size())) throw ConfigError("invalid base64 padding");
        for (std::size_t k = 0; k < 3 - pad; ++k) bytes.push_back(static_cast<std::uint8_t>(chunk >> (16 - 8 * k)));
    }
    if (bytes.size() % 4 != 0) throw ConfigError("base64 payload is not a whole number of f32 values");
    std::vector<double> out;
    for (std::size_t i = 0; i < bytes.size(); i += 4) {
        std::uint32_t u = 0;
        for (int k = 0; k < 4; ++k) u |= static_cast<std::uint32_t>(bytes[i + k]) << (8 * k);
        float f;
        std::memcpy(&f, &u, 4);
        out.push_back(f);
    }
    return out;
}

ordered_json to_json(const SchemeTable& table) {
    ordered_json j = ordered_json::object();
    for (const auto& [layer, s] : table) {
        ordered_json e;
        e["bits"] = s.bits;
        e["granularity"] = std::string(to_string(s.granularity));
        if (s.granularity == Granularity::per_group) e["group_size"] = kGroupSize;
        e["clip_ratio"] = s.clip_ratio;
        e["alpha"] = s.alpha ? ordered_json(*s.alpha) : ordered_json(nullptr);
        e["scales"] = encode_f32_base64(s.weight_scales);
        e["act_scale"] = s.act_scale;
        e["smooth"] = encode_f32_base64(s.smooth);
        j[layer] = std::move(e);
    }
    return j;
}

SchemeTable scheme_table_from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("scheme table must be an object");
    SchemeTable table;
    try {
        for (const auto& [layer, e] : j.items()) {
            LayerScheme s;
            s.bits = e.at("bits").get<int>();
            if (s.bits != 4 && s.bits != 8) throw ConfigError("bits must be 4 or 8");
            s.granularity = granularity_from_string(e.at("granularity").get<std::string>());
            if (s.granularity == Granularity::per_group && e.at("group_size").get<std::size_t>() != kGroupSize)
                throw ConfigError("unsupported group size");
            s.clip_ratio = e.at("clip_ratio").get<double>();
            if (!e.at("alpha").is_null()) s.alpha = e.at("alpha").get<double>();
            s.weight_scales = decode_f32_base64(e.at("scales").get<std::string>());
            s.act_scale = e.at("act_scale").get<double>();
            s.smooth = decode_f32_base64(e.at("smooth").get<std::string>());
            if (s.alpha.has_value() == s.smooth.empty()) throw ConfigError("alpha and smooth must appear together");
            for (double v : s.weight_scales)
                if (!(v > 0.0)) throw ConfigError("scales must be positive");
            if (!(s.act_scale > 0.0)) throw ConfigError("act_scale must be positive");
            table.emplace(layer, std::move(s));
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("scheme table: ") + e.what());
    }
    return table;
}

QuantConfig quant_config_from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("quant config must be an object");
    auto reject_unknown = [](const json& obj, std::initializer_list<const char*> keys, const char* where) {
        for (const auto& [k, _] : obj.items())
            if (std::find_if(keys.begin(), keys.end(), [&](const char* s) { return k == s; }) == keys.end())
                throw ConfigError(std::string(where) + ": unknown key " + k);
    };
    auto get = [](const json& o, const char* k, auto fallback) {
        return o.contains(k) ? o.at(k).get<decltype(fallback)>() : fallback;
    };
    QuantConfig c;
    try {
        reject_unknown(j, {"bits", "sensitivity_threshold", "finetune", "ptq", "calib"}, "quant config");
        c.bits = get(j, "bits", c.bits);
        c.sensitivity_threshold = get(j, "sensitivity_threshold", c.sensitivity_threshold);
        c.finetune = get(j, "finetune", c.finetune);
        if (j.contains("ptq")) {
            const auto& p = j.at("ptq");
            reject_unknown(p, {"iters", "lr", "patience"}, "quant ptq");
            c.ptq.iters = get(p, "iters", c.ptq.iters);
            c.ptq.lr = get(p, "lr", c.ptq.lr);
            c.ptq.patience = get(p, "patience", c.ptq.patience);
        }
        if (j.contains("calib")) {
            const auto& p = j.at("calib");
            reject_unknown(p, {"samples", "seed"}, "quant calib");
            c.calib.samples = get(p, "samples", c.calib.samples);
            c.calib.seed = get(p, "seed", c.calib.seed);
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("quant config: ") + e.what());
    }
    if (c.bits != 4 && c.bits != 8) throw ConfigError("quant config: bits must be 4 or 8");
    if (!(c.sensitivity_threshold >= 0.0)) throw ConfigError("quant config: sensitivity_threshold must be >= 0");
    if (!(c.ptq.lr > 0.0)) throw ConfigError("quant config: ptq.lr must be positive");
    if (c.calib.samples == 0) throw ConfigError("quant config: calib.samples must be positive");
    return c;
}

ordered_json to_json(const QuantConfig& c) {
    ordered_json j;
    j["bits"] = c.bits;
    j["sensitivity_threshold"] = c.sensitivity_threshold;
    j["finetune"] = c.finetune;
    j["ptq"] = {{"iters", c.ptq.iters}, {"lr", c.ptq.lr}, {"patience", c.ptq.patience}};
    j["calib"] = {{"samples", c.calib.samples}, {"seed", c.calib.seed}};
    return j;
}

Tensor QuantHook::linear(std::string_view layer, const Tensor& x, const Tensor& w, const Tensor& b) {
    const auto it = table_.find(std::string(layer));
    if (it == table_.end()) throw ContractError("no quantization scheme for layer " + std::string(layer));
    const double macs = static_cast<double>(x.rows() * w.rows() * w.cols());
    float_macs_ += macs;
    weighted_macs_ += macs * mac_weight(it->second.bits);
    return quantized_linear(x, w, b, it->second);
}

ordered_json to_json(const CostReport& c) {
    ordered_json j;
    j["float_macs"] = c.float_macs;
    j["weighted_macs"] = c.weighted_macs;
    j["eval_counts"] = c.eval_counts;
    j["wall_clock_ms"] = c.wall_clock_ms;
    return j;
}

CostReport sampling_cost(const model::VelocityModel& m, std::size_t dim, std::size_t evals,
                         const SchemeTable* table) {
    CostReport c;
    c.eval_counts = evals;
    const auto& p = m.params();
    for (const auto& layer : m.linear_layers(dim)) {
        const auto& w = p.value(p.at(layer + ".w"));
        const double macs = static_cast<double>(w.rows() * w.cols() * evals);
        c.float_macs += macs;
        if (table) {
            const auto it = table->find(layer);
            if (it == table->end()) throw ContractError("no quantization scheme for layer " + layer);
            c.weighted_macs += macs * mac_weight(it->second.bits);
        } else {
            c.weighted_macs += macs;
        }
    }
    return c;
}

QForwardResult qforward(const model::VelocityModel& m, const SchemeTable& table, const Tensor& x_t,
                        const Tensor* x0, std::span<const model::Condition> conds) {
    QuantHook hook(table);
    const auto t0 = std::chrono::steady_clock::now();
    QForwardResult r{model::forward(m, x_t, x0, conds, &hook), {}};
    r.cost.wall_clock_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    const double rows = static_cast<double>(std::max<std::size_t>(1, x_t.rows()));
    r.cost.float_macs = hook.float_macs() / rows;
    r.cost.weighted_macs = hook.weighted_macs() / rows;
    r.cost.eval_counts = 1;
    return r;
}

}  // namespace seedlab::quant
