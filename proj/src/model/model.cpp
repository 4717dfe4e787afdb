#include "seedlab/model/model.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <regex>

#include "seedlab/error.hpp"
#include "seedlab/numerics/ops.hpp"
#include "seedlab/numerics/rng.hpp"

namespace seedlab::model {

using num::NodeId;
using num::ParamId;
using num::ParamStore;
using num::Tensor;

namespace {

constexpr double kEmbedStd = 0.02;

std::string trunk_layer(std::size_t dim, std::size_t l) {
    return "trunk.d" + std::to_string(dim) + "." + std::to_string(l);
}
std::string trunk_out(std::size_t dim) { return "trunk.d" + std::to_string(dim) + ".out"; }

Tensor normal_tensor(std::size_t rows, std::size_t cols, double sd, num::Rng& rng) {
    Tensor t = Tensor::zeros(rows, cols);
    for (double& v : t.data()) v = rng.normal(0.0, sd);
    return t;
}

// Value-level evaluation; parameters are read in place.
struct ValueBackend {
    using H = Tensor;
    const ParamStore& p;
    LinearHook* hook;

    H constant(Tensor t) { return t; }
    H linear(std::string_view layer, const H& x, ParamId w, ParamId b) {
        if (hook) return hook->linear(layer, x, p.value(w), p.value(b));
        return num::add(num::matmul(x, p.value(w)), p.value(b));
    }
    H layer_norm(const H& x, ParamId g, ParamId b) { return num::layer_norm(x, p.value(g), p.value(b)); }
    H gelu(const H& x) { return num::gelu_tanh(x); }
    H lookup(ParamId table, std::vector<std::size_t> idx) { return num::embedding(p.value(table), idx); }
    H mix(const Tensor& weights, ParamId table) { return num::matmul(weights, p.value(table)); }
    H blend(const H& x, const Tensor& keep, ParamId null_row, const Tensor& drop) {
        return num::add(num::mul(x, keep), num::mul(p.value(null_row), drop));
    }
    H concat(const std::vector<H>& parts) {
        std::vector<const Tensor*> ptrs;
        for (const auto& t : parts) ptrs.push_back(&t);
        return num::concat_cols(ptrs);
    }
};

struct GraphBackend {
    using H = NodeId;
    num::Graph& g;
    std::map<ParamId, NodeId> cache{};

    NodeId param(ParamId id) {
        auto it = cache.find(id);
        if (it != cache.end()) return it->second;
        return cache[id] = g.param(id);
    }
    H constant(Tensor t) { return g.constant(std::move(t)); }
    H linear(std::string_view, H x, ParamId w, ParamId b) { return g.add(g.matmul(x, param(w)), param(b)); }
    H layer_norm(H x, ParamId gain, ParamId bias) { return g.layer_norm(x, param(gain), param(bias)); }
    H gelu(H x) { return g.gelu(x); }
    H lookup(ParamId table, std::vector<std::size_t> idx) { return g.embedding(param(table), std::move(idx)); }
    H mix(const Tensor& weights, ParamId table) { return g.matmul(g.constant(weights), param(table)); }
    H blend(H x, const Tensor& keep, ParamId null_row, const Tensor& drop) {
        return g.add(g.mul(x, g.constant(keep)), g.mul(param(null_row), g.constant(drop)));
    }
    H concat(const std::vector<H>& parts) { return g.concat(parts); }
};

void check_condition(const ModelConfig& cfg, const Condition& c) {
    if (!(c.t >= 0.0 && c.t <= 1.0)) throw ContractError("timestep must lie in [0, 1]");
    const bool has_w = c.w_image.has_value() || c.w_text.has_value();
    if (cfg.guidance && !(c.w_image && c.w_text))
        throw ContractError("guidance-embedding model needs both guidance scales");
    if (!cfg.guidance && has_w) throw ContractError("guidance scales given to a model without guidance embeddings");
}

template <class B>
typename B::H condition_segment(B& be, const VelocityModel& m, std::span<const Condition> conds) {
    const ModelConfig& cfg = m.config();
    const ParamStore& p = m.params();
    const std::size_t n = conds.size();

    std::vector<std::size_t> labels(n);
    Tensor tag_hot = Tensor::zeros(n, toy::kTagCount);
    Tensor instr = Tensor::zeros(n, kInstructionWidth);
    Tensor tfeat = Tensor::zeros(n, kTimeFeatures);
    Tensor keep = Tensor::zeros(n, 1), drop = Tensor::zeros(n, 1);
    bool any_drop = false;
    for (std::size_t r = 0; r < n; ++r) {
        const Condition& c = conds[r];
        check_condition(cfg, c);
        labels[r] = static_cast<std::size_t>(c.label);
        for (std::size_t k = 0; k < toy::kTagCount; ++k)
            tag_hot(r, k) = c.tags.has(static_cast<toy::Tag>(k)) ? 1.0 : 0.0;
        instr(r, static_cast<std::size_t>(c.op)) = 1.0;
        for (std::size_t k = 0; k < 4; ++k) instr(r, toy::kOpKindCount + k) = c.op_params[k];
        const auto tf = timestep_features(c.t);
        std::copy(tf.begin(), tf.end(), tfeat.row_span(r).begin());
        keep(r, 0) = c.drop_text ? 0.0 : 1.0;
        drop(r, 0) = c.drop_text ? 1.0 : 0.0;
        any_drop = any_drop || c.drop_text;
    }

    typename B::H text = be.concat({be.lookup(p.at("embed.task_label"), labels),
                                    be.mix(tag_hot, p.at("embed.tags")), be.constant(std::move(instr))});
    if (any_drop) text = be.blend(text, keep, p.at("embed.null_text"), drop);

    std::vector<typename B::H> parts{text, be.linear("time", be.constant(std::move(tfeat)), p.at("time.w"),
                                                     p.at("time.b"))};
    if (cfg.guidance) {
        for (const char* which : {"guidance_image", "guidance_text"}) {
            const bool image = which[9] == 'i';
            Tensor gf = Tensor::zeros(n, kGuidanceFeatures);
            for (std::size_t r = 0; r < n; ++r) {
                const auto f = guidance_features(image ? *conds[r].w_image : *conds[r].w_text);
                std::copy(f.begin(), f.end(), gf.row_span(r).begin());
            }
            const std::string name(which);
            parts.push_back(be.linear(name, be.constant(std::move(gf)), p.at(name + ".w"), p.at(name + ".b")));
        }
    }
    return be.concat(parts);
}

template <class B>
typename B::H forward_impl(B& be, const VelocityModel& m, const Tensor& x_t, const Tensor* x0,
                           std::span<const Condition> conds) {
    const ModelConfig& cfg = m.config();
    const ParamStore& p = m.params();
    if (x_t.rank() != 2) throw ShapeError("x_t must be [batch, dim]");
    const std::size_t n = x_t.rows(), dim = x_t.cols();
    if (!m.supports_dim(dim)) throw ShapeError("model has no trunk for dim " + std::to_string(dim));
    if (conds.size() != n) throw ShapeError("one condition per row required");
    if (x0 && x0->shape() != x_t.shape()) throw ShapeError("x0 " + num::shape_str(x0->shape()) + " vs x_t " +
                                                           num::shape_str(x_t.shape()));

    Tensor image = Tensor::zeros(n, dim);
    if (x0) {
        for (std::size_t r = 0; r < n; ++r)
            if (!conds[r].drop_image) std::copy_n(x0->row_span(r).begin(), dim, image.row_span(r).begin());
    }
    typename B::H h = be.concat({be.constant(x_t), be.constant(std::move(image)), condition_segment(be, m, conds)});
    for (std::size_t l = 0; l < cfg.depth; ++l) {
        const std::string name = trunk_layer(dim, l);
        h = be.linear(name, h, p.at(name + ".w"), p.at(name + ".b"));
        h = be.gelu(be.layer_norm(h, p.at(name + ".ln_g"), p.at(name + ".ln_b")));
    }
    const std::string out = trunk_out(dim);
    return be.linear(out, h, p.at(out + ".w"), p.at(out + ".b"));
}

void add_trunk(ParamStore& p, const ModelConfig& cfg, std::size_t dim, num::Rng& rng) {
    std::size_t in = cfg.input_dim(dim);
    for (std::size_t l = 0; l < cfg.depth; ++l) {
        const std::string name = trunk_layer(dim, l);
        p.add(name + ".w", normal_tensor(in, cfg.width, 1.0 / std::sqrt(static_cast<double>(in)), rng));
        p.add(name + ".b", Tensor::zeros(1, cfg.width));
        p.add(name + ".ln_g", Tensor({1, cfg.width}, 1.0));
        p.add(name + ".ln_b", Tensor::zeros(1, cfg.width));
        in = cfg.width;
    }
    p.add(trunk_out(dim) + ".w", Tensor::zeros(cfg.width, dim));
    p.add(trunk_out(dim) + ".b", Tensor::zeros(1, dim));
}

void add_guidance(ParamStore& p, const ModelConfig& cfg, num::Rng& rng) {
    const double sd = 1.0 / std::sqrt(static_cast<double>(kGuidanceFeatures));
    for (const char* name : {"guidance_image", "guidance_text"}) {
        p.add(std::string(name) + ".w", normal_tensor(kGuidanceFeatures, cfg.guidance_dim, sd, rng));
        p.add(std::string(name) + ".b", Tensor::zeros(1, cfg.guidance_dim));
    }
}

}  // namespace

Condition condition_for(const toy::EditPair& pair, double t) {
    Condition c;
    c.label = pair.meta.task_label;
    c.tags = pair.meta.tags;
    c.op = pair.instruction.op;
    c.op_params = pair.instruction.params;
    c.t = t;
    return c;
}

ConditionLayout condition_layout(const ModelConfig& cfg) {
    ConditionLayout l;
    l.label = 0;
    l.tags = cfg.label_dim;
    l.instruction = l.tags + cfg.tag_dim;
    l.time = l.instruction + kInstructionWidth;
    l.guidance_image = l.time + cfg.time_dim;
    l.guidance_text = l.guidance_image + (cfg.guidance ? cfg.guidance_dim : 0);
    l.end = l.guidance_text + (cfg.guidance ? cfg.guidance_dim : 0);
    return l;
}

std::vector<double> timestep_features(double t) {
    std::vector<double> f(kTimeFeatures);
    const std::size_t half = kTimeFeatures / 2;
    for (std::size_t k = 0; k < half; ++k) {
        const double freq = std::exp(-std::log(10000.0) * static_cast<double>(k) / static_cast<double>(half));
        const double a = 1000.0 * t * freq;
        f[k] = std::sin(a);
        f[half + k] = std::cos(a);
    }
    return f;
}

std::vector<double> guidance_features(double w) {
    if (!(w > 0.0)) throw ContractError("guidance scale must be positive");
    std::vector<double> f(kGuidanceFeatures);
    f[0] = w - 1.0;
    f[1] = std::log(w);
    for (std::size_t k = 0; k < (kGuidanceFeatures - 2) / 2; ++k) {
        const double a = 0.25 * std::ldexp(1.0, static_cast<int>(k)) * w;
        f[2 + 2 * k] = std::sin(a);
        f[3 + 2 * k] = std::cos(a);
    }
    return f;
}

VelocityModel VelocityModel::init(const ModelConfig& cfg, std::uint64_t seed) {
    if (cfg.dims.empty()) throw ContractError("model needs at least one dim class");
    for (std::size_t d : cfg.dims)
        if (!toy::is_supported_dim(d)) throw ContractError("unsupported dim class " + std::to_string(d));
    if (cfg.depth == 0 || cfg.width == 0) throw ContractError("trunk depth and width must be positive");

    VelocityModel m;
    m.cfg_ = cfg;
    std::sort(m.cfg_.dims.begin(), m.cfg_.dims.end());
    m.cfg_.dims.erase(std::unique(m.cfg_.dims.begin(), m.cfg_.dims.end()), m.cfg_.dims.end());
    num::Rng rng(seed);
    ParamStore& p = m.params_;
    p.add("embed.task_label", normal_tensor(toy::kTaskLabelCount, cfg.label_dim, kEmbedStd, rng));
    p.add("embed.tags", normal_tensor(toy::kTagCount, cfg.tag_dim, kEmbedStd, rng));
    p.add("embed.null_text", normal_tensor(1, cfg.text_dim(), kEmbedStd, rng));
    p.add("time.w", normal_tensor(kTimeFeatures, cfg.time_dim, 1.0 / std::sqrt(double(kTimeFeatures)), rng));
    p.add("time.b", Tensor::zeros(1, cfg.time_dim));
    if (cfg.guidance) add_guidance(p, cfg, rng);
    for (std::size_t d : m.cfg_.dims) add_trunk(p, m.cfg_, d, rng);
    return m;
}

VelocityModel VelocityModel::from_params(ParamStore params) {
    auto cols_of = [&](const char* name) {
        const auto id = params.find(name);
        if (!id) throw ContractError(std::string("checkpoint lacks parameter ") + name);
        return params.value(*id).cols();
    };
    ModelConfig cfg;
    cfg.label_dim = cols_of("embed.task_label");
    cfg.tag_dim = cols_of("embed.tags");
    cfg.time_dim = cols_of("time.w");
    cfg.guidance = params.contains("guidance_image.w");
    if (cfg.guidance) cfg.guidance_dim = cols_of("guidance_image.w");
    cfg.dims.clear();
    const std::regex first(R"(trunk\.d(\d+)\.0\.w)");
    for (std::size_t i = 0; i < params.size(); ++i) {
        std::smatch sm;
        if (std::regex_match(params.name(i), sm, first)) cfg.dims.push_back(std::stoul(sm[1].str()));
    }
    if (cfg.dims.empty()) throw ContractError("checkpoint has no trunk");
    std::sort(cfg.dims.begin(), cfg.dims.end());
    const std::size_t d0 = cfg.dims.front();
    cfg.width = params.value(params.at(trunk_layer(d0, 0) + ".w")).cols();
    cfg.depth = 0;
    while (params.contains(trunk_layer(d0, cfg.depth) + ".w")) ++cfg.depth;

    for (std::size_t d : cfg.dims) {
        if (!toy::is_supported_dim(d)) throw ContractError("unsupported dim class in checkpoint");
        const auto& w0 = params.value(params.at(trunk_layer(d, 0) + ".w"));
        if (w0.rows() != cfg.input_dim(d)) throw ContractError("trunk input width disagrees with embeddings");
        const auto& wo = params.value(params.at(trunk_out(d) + ".w"));
        if (wo.rows() != cfg.width || wo.cols() != d) throw ContractError("trunk output layer has wrong shape");
    }
    if (params.value(params.at("embed.null_text")).cols() != cfg.text_dim())
        throw ContractError("null text embedding has wrong width");

    VelocityModel m;
    m.cfg_ = cfg;
    m.params_ = std::move(params);
    return m;
}

bool VelocityModel::supports_dim(std::size_t dim) const {
    return std::find(cfg_.dims.begin(), cfg_.dims.end(), dim) != cfg_.dims.end();
}

VelocityModel VelocityModel::with_guidance(std::uint64_t seed) const {
    if (cfg_.guidance) throw ContractError("model already has guidance embeddings");
    ModelConfig cfg = cfg_;
    cfg.guidance = true;
    num::Rng rng(seed);
    ParamStore p;
    for (std::size_t i = 0; i < params_.size(); ++i) {
        const std::string& name = params_.name(i);
        Tensor v = params_.value(i);
        if (name.starts_with("trunk.d") && name.ends_with(".0.w")) {
            // Append zero rows for the guidance inputs at the end of the condition.
            Tensor grown = Tensor::zeros(v.rows() + 2 * cfg.guidance_dim, v.cols());
            std::copy(v.data().begin(), v.data().end(), grown.data().begin());
            v = std::move(grown);
        }
        p.add(name, std::move(v));
        if (name == "time.b") add_guidance(p, cfg, rng);
    }
    return from_params(std::move(p));
}

std::vector<std::string> VelocityModel::linear_layers(std::size_t dim) const {
    std::vector<std::string> out{"time"};
    if (cfg_.guidance) {
        out.emplace_back("guidance_image");
        out.emplace_back("guidance_text");
    }
    for (std::size_t l = 0; l < cfg_.depth; ++l) out.push_back(trunk_layer(dim, l));
    out.push_back(trunk_out(dim));
    return out;
}

Tensor encode_condition(const VelocityModel& m, const Condition& c) {
    ValueBackend be{m.params(), nullptr};
    return condition_segment(be, m, std::span<const Condition>(&c, 1));
}

Tensor forward(const VelocityModel& m, const Tensor& x_t, const Tensor* x0, std::span<const Condition> conds,
               LinearHook* hook) {
    ValueBackend be{m.params(), hook};
    return forward_impl(be, m, x_t, x0, conds);
}

NodeId forward(num::Graph& g, const VelocityModel& m, const Tensor& x_t, const Tensor* x0,
               std::span<const Condition> conds) {
    GraphBackend be{g};
    return forward_impl(be, m, x_t, x0, conds);
}

std::size_t forward_macs(const VelocityModel& m, std::size_t dim) {
    std::size_t macs = 0;
    for (const auto& layer : m.linear_layers(dim)) {
        const auto& w = m.params().value(m.params().at(layer + ".w"));
        macs += w.rows() * w.cols();
    }
    return macs;
}

}  // namespace seedlab::model
