#include "seedlab/distill/distill.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "seedlab/error.hpp"
#include "seedlab/log.hpp"
#include "seedlab/numerics/ops.hpp"
#include "seedlab/trainer/trainer.hpp"

namespace seedlab::distill {

using nlohmann::json;
using nlohmann::ordered_json;
using num::NodeId;

namespace {

std::string layer_name(std::size_t dim, std::size_t l) {
    return NoiseRefNet::kPrefix + "d" + std::to_string(dim) + "." + std::to_string(l);
}

Tensor summary_input(const Tensor& x0, std::span<const model::Condition> conds) {
    if (x0.rows() != conds.size()) throw ShapeError("one condition per row required");
    const std::size_t d = x0.cols();
    Tensor in = Tensor::zeros(x0.rows(), d + kSummaryWidth);
    for (std::size_t r = 0; r < x0.rows(); ++r) {
        auto row = in.row_span(r);
        std::copy_n(x0.row_span(r).begin(), d, row.begin());
        const auto s = condition_summary(conds[r]);
        std::copy(s.begin(), s.end(), row.begin() + static_cast<std::ptrdiff_t>(d));
    }
    return in;
}

// Records grouped by dim, in dataset order.
std::map<std::size_t, std::vector<std::size_t>> group_by_dim(const toy::Dataset& data) {
    std::map<std::size_t, std::vector<std::size_t>> out;
    for (std::size_t i = 0; i < data.size(); ++i) out[data[i].source.dim()].push_back(i);
    return out;
}

// A random same-dim batch: the first record is uniform over the dataset.
std::vector<std::size_t> draw_batch(const toy::Dataset& data,
                                    const std::map<std::size_t, std::vector<std::size_t>>& groups,
                                    std::size_t batch, num::Rng& rng) {
    const auto& pool = groups.at(data[rng.below(data.size())].source.dim());
    std::vector<std::size_t> idx;
    for (std::size_t k = 0; k < batch; ++k) idx.push_back(pool[rng.below(pool.size())]);
    return idx;
}

std::vector<model::Condition> base_conditions(const toy::Dataset& data, std::span<const std::size_t> idx,
                                              double t = 1.0) {
    std::vector<model::Condition> out;
    for (std::size_t i : idx) out.push_back(model::condition_for(data[i], t));
    return out;
}

void check_student(const model::VelocityModel& teacher, const model::VelocityModel& student) {
    if (teacher.has_guidance()) throw ContractError("teacher must not have guidance embeddings");
    if (!student.has_guidance()) throw ContractError("student needs guidance embeddings");
}

double student_step(model::VelocityModel& student, train::Adam& opt, const Tensor& x, const Tensor& x0, std::span<const model::Condition> conds, const Tensor& target) {
    num::Graph g(&student.params());
    const NodeId v = model::forward(g, student, x, &x0, conds);
    const NodeId loss = g.squared_error(v, g.constant(target));
    auto back = g.backward(loss);
    opt.step(student.params(), back.params);
    return g.value(loss).item();
}

}  // namespace

std::vector<double> condition_summary(const model::Condition& c) {
    std::vector<double> s(kSummaryWidth, 0.0);
    s[static_cast<std::size_t>(c.label)] = 1.0;
    for (std::size_t k = 0; k < toy::kTagCount; ++k)
        s[toy::kTaskLabelCount + k] = c.tags.has(static_cast<toy::Tag>(k)) ? 1.0 : 0.0;
    const std::size_t op0 = toy::kTaskLabelCount + toy::kTagCount;
    s[op0 + static_cast<std::size_t>(c.op)] = 1.0;
    for (std::size_t k = 0; k < 4; ++k) s[op0 + toy::kOpKindCount + k] = c.op_params[k];
    return s;
}

NoiseRefNet NoiseRefNet::init(std::span<const std::size_t> dims, std::size_t hidden, std::uint64_t seed) {
    if (dims.empty() || hidden == 0) throw ContractError("noise reference net needs dims and a hidden width");
    NoiseRefNet net;
    num::Rng rng(seed);
    std::vector<std::size_t> sorted(dims.begin(), dims.end());
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    for (std::size_t d : sorted) {
        const std::size_t in = d + kSummaryWidth;
        Tensor w = Tensor::zeros(in, hidden);
        for (double& v : w.data()) v = rng.normal(0.0, 1.0 / std::sqrt(static_cast<double>(in)));
        net.params_.add(layer_name(d, 0) + ".w", std::move(w));
        net.params_.add(layer_name(d, 0) + ".b", Tensor::zeros(1, hidden));
        net.params_.add(layer_name(d, 1) + ".w", Tensor::zeros(hidden, d));
        net.params_.add(layer_name(d, 1) + ".b", Tensor::zeros(1, d));
    }
    return net;
}

NoiseRefNet NoiseRefNet::from_params(const num::ParamStore& params) {
    NoiseRefNet net;
    for (std::size_t i = 0; i < params.size(); ++i)
        if (params.name(i).starts_with(kPrefix)) net.params_.add(params.name(i), params.value(i));
    if (net.params_.size() == 0) throw ContractError("no noise reference parameters found");
    return net;
}

bool NoiseRefNet::supports_dim(std::size_t dim) const { return params_.contains(layer_name(dim, 0) + ".w"); }

Tensor NoiseRefNet::predict(const Tensor& x0, std::span<const model::Condition> conds) const {
    const std::size_t d = x0.cols();
    if (!supports_dim(d)) throw ShapeError("noise reference net has no layers for dim " + std::to_string(d));
    const auto& p = params_;
    const std::string l0 = layer_name(d, 0), l1 = layer_name(d, 1);
    Tensor h = num::gelu_tanh(
        num::add(num::matmul(summary_input(x0, conds), p.value(p.at(l0 + ".w"))), p.value(p.at(l0 + ".b"))));
    return num::add(num::matmul(h, p.value(p.at(l1 + ".w"))), p.value(p.at(l1 + ".b")));
}

NodeId NoiseRefNet::predict(num::Graph& g, const Tensor& x0, std::span<const model::Condition> conds) const {
    const std::size_t d = x0.cols();
    if (!supports_dim(d)) throw ShapeError("noise reference net has no layers for dim " + std::to_string(d));
    const auto& p = params_;
    const std::string l0 = layer_name(d, 0), l1 = layer_name(d, 1);
    const NodeId in = g.constant(summary_input(x0, conds));
    const NodeId h = g.gelu(g.add(g.matmul(in, g.param(p.at(l0 + ".w"))), g.param(p.at(l0 + ".b"))));
    return g.add(g.matmul(h, g.param(p.at(l1 + ".w"))), g.param(p.at(l1 + ".b")));
}

Tensor candidate_noises(std::uint64_t seed, std::uint64_t record_id, std::size_t count, std::size_t dim) {
    num::Rng rng = num::Rng(seed).fork(record_id);
    Tensor out = Tensor::zeros(count, dim);
    for (double& v : out.data()) v = rng.normal();
    return out;
}

NoiseRefResult train_noise_ref(const model::VelocityModel& teacher, const toy::Dataset& data,
                               const NoiseRefConfig& cfg) {
    if (data.empty()) throw ContractError("noise reference training needs records");
    if (cfg.records > 0 && cfg.records < data.size()) {
        const toy::Dataset head(data.begin(), data.begin() + static_cast<std::ptrdiff_t>(cfg.records));
        NoiseRefConfig all = cfg;
        all.records = 0;
        return train_noise_ref(teacher, head, all);
    }
    if (cfg.candidates == 0 || cfg.teacher_steps == 0 || cfg.batch == 0)
        throw ContractError("candidates, teacher steps and batch must be positive");
    const auto groups = group_by_dim(data);
    std::vector<std::size_t> dims;
    for (const auto& [d, _] : groups) dims.push_back(d);

    NoiseRefResult res{NoiseRefNet::init(dims, cfg.hidden, cfg.seed), {}, {}, {}};
    res.best_noise.resize(data.size());
    res.worst_noise.resize(data.size());

    // Pick the best and worst candidate per record under the teacher sampler.
    flow::ModelField field(teacher);
    flow::SamplerConfig sc;
    sc.steps = cfg.teacher_steps;
    sc.w_image = cfg.w_image;
    sc.w_text = cfg.w_text;
    sc.noise = flow::NoiseSource::unified_reference;
    const std::size_t k = cfg.candidates;
    const std::size_t chunk = std::max<std::size_t>(1, 256 / k);
    for (const auto& [dim, members] : groups) {
        for (std::size_t start = 0; start < members.size(); start += chunk) {
            const std::size_t n = std::min(chunk, members.size() - start);
            Tensor x0 = Tensor::zeros(n * k, dim), tgt = Tensor::zeros(n * k, dim), eps = Tensor::zeros(n * k, dim);
            std::vector<model::Condition> base;
            for (std::size_t r = 0; r < n; ++r) {
                const auto& p = data[members[start + r]];
                const Tensor cand = candidate_noises(cfg.seed, p.id, k, dim);
                for (std::size_t c = 0; c < k; ++c) {
                    const std::size_t row = r * k + c;
                    std::copy(p.source.values.begin(), p.source.values.end(), x0.row_span(row).begin());
                    std::copy(p.target.values.begin(), p.target.values.end(), tgt.row_span(row).begin());
                    std::copy_n(cand.row_span(c).begin(), dim, eps.row_span(row).begin());
                    base.push_back(model::condition_for(p, 1.0));
                }
            }
            num::Rng unused(0);
            const auto out = flow::sample(field, x0, base, sc, unused, &eps);
            const auto err = flow::endpoint_errors(out.x, tgt);
            for (std::size_t r = 0; r < n; ++r) {
                std::size_t best = 0, worst = 0;
                for (std::size_t c = 1; c < k; ++c) {
                    if (err[r * k + c] < err[r * k + best]) best = c;
                    if (err[r * k + c] > err[r * k + worst]) worst = c;
                }
                const auto b = eps.row_span(r * k + best), w = eps.row_span(r * k + worst);
                res.best_noise[members[start + r]].assign(b.begin(), b.end());
                res.worst_noise[members[start + r]].assign(w.begin(), w.end());
            }
        }
    }

    auto stack_best = [&](std::span<const std::size_t> idx) {
        Tensor t = Tensor::zeros(idx.size(), data[idx[0]].source.dim());
        for (std::size_t r = 0; r < idx.size(); ++r)
            std::copy(res.best_noise[idx[r]].begin(), res.best_noise[idx[r]].end(), t.row_span(r).begin());
        return t;
    };
    auto full_mse = [&] {
        double s = 0.0;
        std::size_t n = 0;
        for (const auto& [dim, members] : groups) {
            const Tensor pred = res.net.predict(flow::stack_sources(data, members), base_conditions(data, members));
            const Tensor best = stack_best(members);
            for (std::size_t i = 0; i < pred.numel(); ++i) s += (pred[i] - best[i]) * (pred[i] - best[i]);
            n += pred.numel();
        }
        return s / static_cast<double>(n);
    };

    train::Adam opt(res.net.params(), cfg.lr);
    const num::Rng root(cfg.seed);
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        num::Rng rng = root.fork(epoch);
        for (const auto& [dim, members] : groups) {
            std::vector<std::size_t> order = members;
            for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
            for (std::size_t s = 0; s < order.size(); s += cfg.batch) {
                std::span<const std::size_t> idx(order.data() + s, std::min(cfg.batch, order.size() - s));
                num::Graph g(&res.net.params());
                const NodeId pred = res.net.predict(g, flow::stack_sources(data, idx), base_conditions(data, idx));
                const NodeId loss = g.squared_error(pred, g.constant(stack_best(idx)));
                opt.step(res.net.params(), g.backward(loss).params);
            }
        }
        res.epoch_mse.push_back(full_mse());
    }
    return res;
}

void DistillConfig::validate() const {
    auto check_range = [](std::array<double, 2> r, const char* what) {
        if (!(r[0] >= 1.0 && r[0] <= r[1])) throw ConfigError(std::string(what) + " must satisfy 1 <= lo <= hi");
    };
    check_range(w_image_range, "w_image_range");
    check_range(w_text_range, "w_text_range");
    if (student_steps == 0 || student_steps > teacher_steps)
        throw ConfigError("student_steps must lie in [1, teacher_steps]");
    if (batch == 0 || trajectories_per_record == 0) throw ConfigError("batch and trajectories_per_record must be positive");
    if (!(lr > 0.0)) throw ConfigError("lr must be positive");
    if (!(lr_final_fraction > 0.0 && lr_final_fraction <= 1.0)) throw ConfigError("lr_final_fraction must lie in (0, 1]");
}

std::array<float, 4> DistillConfig::guidance_range() const {
    return {static_cast<float>(w_image_range[0]), static_cast<float>(w_image_range[1]),
            static_cast<float>(w_text_range[0]), static_cast<float>(w_text_range[1])};
}

DistillConfig distill_config_from_json(const json& j) {
    static const char* const kKeys[] = {"w_image_range", "w_text_range", "student_steps", "teacher_steps",
                                        "cfg_iters", "fewstep_iters", "trajectories_per_record", "lr",
                                        "lr_final_fraction", "batch", "seed", "noise_ref"};
    static const char* const kNoiseKeys[] = {"hidden", "candidates", "epochs", "batch",
                                             "lr",     "w_image",    "w_text", "records"};
    auto reject_unknown = [](const json& obj, auto& keys, const char* where) {
        if (!obj.is_object()) throw ConfigError(std::string(where) + " must be an object");
        for (const auto& [k, _] : obj.items())
            if (std::find_if(std::begin(keys), std::end(keys), [&](const char* s) { return k == s; }) == std::end(keys))
                throw ConfigError(std::string("unknown ") + where + " key '" + k + "'");
    };
    reject_unknown(j, kKeys, "distill config");
    DistillConfig c;
    try {
        auto get = [&](const json& o, const char* k, auto fallback) {
            return o.contains(k) ? o.at(k).get<decltype(fallback)>() : fallback;
        };
        c.w_image_range = get(j, "w_image_range", c.w_image_range);
        c.w_text_range = get(j, "w_text_range", c.w_text_range);
        c.student_steps = get(j, "student_steps", c.student_steps);
        c.teacher_steps = get(j, "teacher_steps", c.teacher_steps);
        c.cfg_iters = get(j, "cfg_iters", c.cfg_iters);
        c.fewstep_iters = get(j, "fewstep_iters", c.fewstep_iters);
        c.trajectories_per_record = get(j, "trajectories_per_record", c.trajectories_per_record);
        c.lr = get(j, "lr", c.lr);
        c.lr_final_fraction = get(j, "lr_final_fraction", c.lr_final_fraction);
        c.batch = get(j, "batch", c.batch);
        c.seed = get(j, "seed", c.seed);
        if (j.contains("noise_ref")) {
            const auto& n = j.at("noise_ref");
            reject_unknown(n, kNoiseKeys, "noise_ref");
            c.noise.hidden = get(n, "hidden", c.noise.hidden);
            c.noise.candidates = get(n, "candidates", c.noise.candidates);
            c.noise.epochs = get(n, "epochs", c.noise.epochs);
            c.noise.batch = get(n, "batch", c.noise.batch);
            c.noise.lr = get(n, "lr", c.noise.lr);
            c.noise.w_image = get(n, "w_image", c.noise.w_image);
            c.noise.w_text = get(n, "w_text", c.noise.w_text);
            c.noise.records = get(n, "records", c.noise.records);
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("distill config: ") + e.what());
    }
    if (c.student_steps != 4 && c.student_steps != 8) throw ConfigError("student_steps must be 4 or 8");
    c.noise.teacher_steps = c.teacher_steps;
    c.noise.seed = c.seed;
    c.validate();
    return c;
}

ordered_json to_json(const DistillConfig& c) {
    ordered_json j;
    j["w_image_range"] = c.w_image_range;
    j["w_text_range"] = c.w_text_range;
    j["student_steps"] = c.student_steps;
    j["teacher_steps"] = c.teacher_steps;
    j["cfg_iters"] = c.cfg_iters;
    j["fewstep_iters"] = c.fewstep_iters;
    j["trajectories_per_record"] = c.trajectories_per_record;
    j["lr"] = c.lr;
    j["lr_final_fraction"] = c.lr_final_fraction;
    j["batch"] = c.batch;
    j["seed"] = c.seed;
    j["noise_ref"] = {{"hidden", c.noise.hidden}, {"candidates", c.noise.candidates}, {"epochs", c.noise.epochs},
                      {"batch", c.noise.batch},   {"lr", c.noise.lr},                 {"w_image", c.noise.w_image},
                      {"w_text", c.noise.w_text}, {"records", c.noise.records}};
    return j;
}

double draw_log_uniform(num::Rng& rng, std::array<double, 2> range) {
    return std::exp(rng.uniform(std::log(range[0]), std::log(range[1])));
}

DistillReport distill_cfg(const model::VelocityModel& teacher, model::VelocityModel& student,
                          const toy::Dataset& data, const DistillConfig& cfg) {
    cfg.validate();
    check_student(teacher, student);
    if (data.empty()) throw ContractError("distillation needs records");
    DistillReport rep;
    rep.teacher_checksum_before = num::checksum(teacher.params());
    const auto groups = group_by_dim(data);
    flow::ModelField field(teacher);
    train::Adam opt(student.params(), cfg.lr);
    const num::Rng root(cfg.seed);
    for (std::size_t it = 0; it < cfg.cfg_iters; ++it) {
        opt.set_lr(train::cosine_lr(cfg.lr, cfg.lr_final_fraction, it, cfg.cfg_iters));
        num::Rng rng = root.fork(it);
        const auto idx = draw_batch(data, groups, cfg.batch, rng);
        const Tensor x1 = flow::stack_targets(data, idx), x0 = flow::stack_sources(data, idx);
        Tensor x_t(x1.shape());
        std::vector<model::Condition> conds;
        std::vector<double> wi, wt;
        for (std::size_t r = 0; r < idx.size(); ++r) {
            const double t = rng.uniform();
            for (std::size_t j = 0; j < x1.cols(); ++j) x_t(r, j) = (1.0 - t) * x1(r, j) + t * rng.normal();
            conds.push_back(model::condition_for(data[idx[r]], t));
            wi.push_back(draw_log_uniform(rng, cfg.w_image_range));
            wt.push_back(draw_log_uniform(rng, cfg.w_text_range));
        }
        const Tensor target = flow::teacher_velocity(field, x_t, x0, conds, wi, wt);
        for (std::size_t r = 0; r < conds.size(); ++r) conds[r].w_image = wi[r], conds[r].w_text = wt[r];
        rep.losses.push_back(student_step(student, opt, x_t, x0, conds, target));
    }
    rep.teacher_checksum_after = num::checksum(teacher.params());
    return rep;
}

Tensor noise_reference(const NoiseRefNet& net, const Tensor& x0, std::span<const model::Condition> conds) {
    return net.predict(x0, conds);
}

DistillReport distill_fewstep(const model::VelocityModel& teacher, model::VelocityModel& student,
                              const NoiseRefNet& noise_ref, const toy::Dataset& data, const DistillConfig& cfg) {
    cfg.validate();
    check_student(teacher, student);
    if (data.empty()) throw ContractError("distillation needs records");
    DistillReport rep;
    rep.teacher_checksum_before = num::checksum(teacher.params());
    const std::size_t steps = cfg.student_steps;
    const std::size_t sub = (cfg.teacher_steps + steps - 1) / steps;
    const double dt = 1.0 / static_cast<double>(steps);
    flow::ModelField field(teacher);
    const num::Rng root(cfg.seed);

    // Teacher trajectory states at the student grid points, started from eps_ref.
    struct Cache {
        std::vector<std::size_t> record;
        std::vector<double> wi, wt;
        std::vector<Tensor> states;  // steps + 1 tensors of [M, dim]
    };
    std::map<std::size_t, Cache> caches;
    const auto groups = group_by_dim(data);
    for (const auto& [dim, members] : groups) {
        Cache& c = caches[dim];
        for (std::size_t i : members)
            for (std::size_t k = 0; k < cfg.trajectories_per_record; ++k) {
                num::Rng rng = root.fork(data[i].id).fork(k);
                c.record.push_back(i);
                c.wi.push_back(draw_log_uniform(rng, cfg.w_image_range));
                c.wt.push_back(draw_log_uniform(rng, cfg.w_text_range));
            }
        const Tensor x0 = flow::stack_sources(data, c.record);
        const auto base = base_conditions(data, c.record);
        Tensor x = noise_ref.predict(x0, base);
        c.states.push_back(x);
        for (std::size_t s = 0; s < steps; ++s) {
            const double t0 = 1.0 - static_cast<double>(s) * dt;
            for (std::size_t q = 0; q < sub; ++q) {
                const double t = t0 - dt * static_cast<double>(q) / static_cast<double>(sub);
                auto conds = base;
                for (auto& cd : conds) cd.t = t;
                const Tensor v = flow::teacher_velocity(field, x, x0, conds, c.wi, c.wt);
                for (std::size_t e = 0; e < x.numel(); ++e) x[e] -= (dt / static_cast<double>(sub)) * v[e];
            }
            c.states.push_back(x);
        }
    }

    train::Adam opt(student.params(), cfg.lr);
    for (std::size_t it = 0; it < cfg.fewstep_iters; ++it) {
        opt.set_lr(train::cosine_lr(cfg.lr, cfg.lr_final_fraction, it, cfg.fewstep_iters));
        num::Rng rng = root.fork((1ull << 40) + it);
        const Cache& c = caches.at(data[rng.below(data.size())].source.dim());
        const std::size_t dim = c.states[0].cols();
        const std::size_t n = cfg.batch;
        Tensor x = Tensor::zeros(n, dim), x0 = Tensor::zeros(n, dim), target = Tensor::zeros(n, dim);
        std::vector<model::Condition> conds;
        for (std::size_t r = 0; r < n; ++r) {
            const std::size_t m = rng.below(c.record.size());
            const std::size_t s = rng.below(steps);
            const auto& p = data[c.record[m]];
            const auto a = c.states[s].row_span(m), b = c.states[s + 1].row_span(m);
            for (std::size_t j = 0; j < dim; ++j) {
                x(r, j) = a[j];
                target(r, j) = (a[j] - b[j]) / dt;
            }
            std::copy(p.source.values.begin(), p.source.values.end(), x0.row_span(r).begin());
            model::Condition cd = model::condition_for(p, 1.0 - static_cast<double>(s) * dt);
            cd.w_image = c.wi[m];
            cd.w_text = c.wt[m];
            conds.push_back(cd);
        }
        rep.losses.push_back(student_step(student, opt, x, x0, conds, target));
    }
    rep.teacher_checksum_after = num::checksum(teacher.params());
    return rep;
}

CfgFidelity cfg_fidelity(const model::VelocityModel& teacher, const model::VelocityModel& student,
                         const toy::Dataset& data, const DistillConfig& cfg, std::size_t draws, std::uint64_t seed) {
    check_student(teacher, student);
    if (data.empty() || draws == 0) throw ContractError("fidelity check needs records and draws");
    const auto groups = group_by_dim(data);
    flow::ModelField field(teacher);
    num::Rng rng(seed);
    CfgFidelity out;
    double err = 0.0, mag = 0.0;
    std::size_t elems = 0;
    while (out.samples < draws) {
        const auto idx = draw_batch(data, groups, std::min<std::size_t>(64, draws - out.samples), rng);
        const Tensor x1 = flow::stack_targets(data, idx), x0 = flow::stack_sources(data, idx);
        Tensor x_t(x1.shape());
        std::vector<model::Condition> conds;
        std::vector<double> wi, wt;
        for (std::size_t r = 0; r < idx.size(); ++r) {
            const double t = rng.uniform();
            for (std::size_t j = 0; j < x1.cols(); ++j) x_t(r, j) = (1.0 - t) * x1(r, j) + t * rng.normal();
            conds.push_back(model::condition_for(data[idx[r]], t));
            wi.push_back(draw_log_uniform(rng, cfg.w_image_range));
            wt.push_back(draw_log_uniform(rng, cfg.w_text_range));
        }
        const Tensor tv = flow::teacher_velocity(field, x_t, x0, conds, wi, wt);
        for (std::size_t r = 0; r < conds.size(); ++r) conds[r].w_image = wi[r], conds[r].w_text = wt[r];
        const Tensor sv = model::forward(student, x_t, &x0, conds);
        for (std::size_t i = 0; i < tv.numel(); ++i) {
            err += (sv[i] - tv[i]) * (sv[i] - tv[i]);
            mag += tv[i] * tv[i];
        }
        elems += tv.numel();
        out.samples += idx.size();
    }
    out.mse = err / static_cast<double>(elems);
    out.teacher_mean_sq = mag / static_cast<double>(elems);
    return out;
}

num::ParamStore bundle_student(const model::VelocityModel& student, const NoiseRefNet& noise_ref) {
    num::ParamStore p;
    for (std::size_t i = 0; i < student.params().size(); ++i)
        if (!student.params().name(i).starts_with(NoiseRefNet::kPrefix))
            p.add(student.params().name(i), student.params().value(i));
    for (std::size_t i = 0; i < noise_ref.params().size(); ++i)
        p.add(noise_ref.params().name(i), noise_ref.params().value(i));
    return p;
}

num::CheckpointHeader student_header(const DistillConfig& cfg) {
    num::CheckpointHeader h;
    h.student = true;
    h.guidance_range = cfg.guidance_range();
    return h;
}

StudentBundle split_student(const num::ParamStore& params) {
    num::ParamStore model_params;
    for (std::size_t i = 0; i < params.size(); ++i)
        if (!params.name(i).starts_with(NoiseRefNet::kPrefix)) model_params.add(params.name(i), params.value(i));
    auto student = model::VelocityModel::from_params(std::move(model_params));
    if (!student.has_guidance()) throw ContractError("student checkpoint lacks guidance embeddings");
    return {std::move(student), NoiseRefNet::from_params(params)};
}

}  // namespace seedlab::distill
