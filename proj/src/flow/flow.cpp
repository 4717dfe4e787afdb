#include "seedlab/flow/flow.hpp"

#include <cmath>
#include <sstream>

#include "seedlab/error.hpp"
#include "seedlab/log.hpp"
#include "seedlab/numerics/ops.hpp"

namespace seedlab::flow {

using num::NodeId;

namespace {

void check_t(double t) {
    if (!(t >= 0.0 && t <= 1.0)) throw ContractError("timestep must lie in [0, 1]");
}

Tensor column(std::span<const double> v) { return Tensor::column(std::vector<double>(v.begin(), v.end())); }

// Column vector averaging a block's squared entries.
Tensor block_mask(std::size_t dim, toy::Block block) {
    const auto r = toy::block_range(dim, block);
    Tensor m = Tensor::zeros(dim, 1);
    for (std::size_t i = r.begin; i < r.begin + r.size; ++i) m[i] = 1.0 / static_cast<double>(r.size);
    return m;
}

std::vector<model::Condition> with_t(std::span<const model::Condition> base, double t) {
    std::vector<model::Condition> out(base.begin(), base.end());
    for (auto& c : out) {
        c.t = t;
        c.drop_image = c.drop_text = false;
        c.w_image.reset();
        c.w_text.reset();
    }
    return out;
}

Tensor step_velocity(const VelocityField& f, const Tensor& x, const Tensor& x0,
                     std::span<const model::Condition> base, const SamplerConfig& cfg, double t,
                     std::size_t& evals) {
    if (cfg.mode == SamplerMode::teacher_cfg) {
        evals += 3;
        return teacher_velocity(f, x, x0, base, cfg.w_image, cfg.w_text);
    }
    auto conds = with_t(base, t);
    for (auto& c : conds) c.w_image = cfg.w_image, c.w_text = cfg.w_text;
    evals += 1;
    return f.velocity(x, &x0, conds);
}

void validate(const VelocityField& f, const SamplerConfig& cfg) {
    if (cfg.steps == 0) throw ContractError("sampler needs at least one step");
    if (!(cfg.w_image >= 1.0 && cfg.w_text >= 1.0)) throw ContractError("guidance scales must be >= 1");
    if (cfg.mode == SamplerMode::student_distilled && !f.has_guidance())
        throw ContractError("student sampling requires a model with guidance embeddings");
    if (cfg.mode == SamplerMode::teacher_cfg && f.has_guidance())
        throw ContractError("teacher sampling requires a model without guidance embeddings");
    if (cfg.mode == SamplerMode::student_distilled && cfg.trained_range) {
        const auto& r = *cfg.trained_range;
        if (cfg.w_image < r[0] || cfg.w_image > r[1] || cfg.w_text < r[2] || cfg.w_text > r[3]) {
            std::ostringstream os;
            os << "guidance (" << cfg.w_image << ", " << cfg.w_text << ") outside the trained range; extrapolating";
            log::warn(os.str());
        }
    }
}

}  // namespace

FlowPoint interpolate(const Tensor& x1, const Tensor& eps, double t) {
    if (x1.shape() != eps.shape()) throw ShapeError("interpolate: x1 and eps differ in shape");
    check_t(t);
    FlowPoint p{Tensor(x1.shape()), t, eps};
    for (std::size_t i = 0; i < x1.numel(); ++i) p.x_t[i] = (1.0 - t) * x1[i] + t * eps[i];
    return p;
}

Tensor target_velocity(const Tensor& x1, const Tensor& eps) { return num::sub(eps, x1); }

Tensor estimate_x1(const Tensor& x_t, double t, const Tensor& v_hat) {
    check_t(t);
    if (x_t.shape() != v_hat.shape()) throw ShapeError("estimate_x1: x_t and v_hat differ in shape");
    Tensor out(x_t.shape());
    for (std::size_t i = 0; i < x_t.numel(); ++i) out[i] = x_t[i] - t * v_hat[i];
    return out;
}

bool RewardSpec::active(toy::TagSet tags, double t) const { return tags.has(id) && t <= t_reward; }

std::vector<RewardSpec> default_rewards(double lambda, double t_reward) {
    return {{toy::Tag::identity_preserve, lambda, t_reward},
            {toy::Tag::structure_preserve, lambda, t_reward},
            {toy::Tag::style_preserve, lambda, t_reward}};
}

toy::Block preserved_block(toy::Tag tag) {
    switch (tag) {
        case toy::Tag::identity_preserve: return toy::Block::identity;
        case toy::Tag::structure_preserve: return toy::Block::structure;
        case toy::Tag::style_preserve: return toy::Block::style;
        case toy::Tag::local_edit: break;
    }
    throw ContractError("local_edit has no preserved block");
}

RewardBreakdown reward_loss(const Tensor& x0, const Tensor& x_hat1, toy::TagSet tags, double t,
                            std::span<const RewardSpec> specs) {
    if (x0.shape() != x_hat1.shape()) throw ShapeError("reward_loss: x0 and x_hat1 differ in shape");
    RewardBreakdown out;
    for (const auto& s : specs) {
        if (s.weight < 0.0) throw ContractError("reward weight must be nonnegative");
        RewardTerm term{s.id, 0.0, s.active(tags, t)};
        if (term.active) {
            const auto r = toy::block_range(x0.numel(), preserved_block(s.id));
            double acc = 0.0;
            for (std::size_t i = r.begin; i < r.begin + r.size; ++i) {
                const double d = x_hat1[i] - x0[i];
                acc += d * d;
            }
            term.value = s.weight * (acc / static_cast<double>(r.size));
            out.total += term.value;
        }
        out.terms.push_back(term);
    }
    return out;
}

Tensor stack_sources(const toy::Dataset& data, std::span<const std::size_t> indices) {
    if (indices.empty()) throw ContractError("empty batch");
    const std::size_t dim = data.at(indices[0]).source.dim();
    Tensor out = Tensor::zeros(indices.size(), dim);
    for (std::size_t r = 0; r < indices.size(); ++r) {
        const auto& v = data.at(indices[r]).source.values;
        if (v.size() != dim) throw ShapeError("batch mixes dimensions");
        std::copy(v.begin(), v.end(), out.row_span(r).begin());
    }
    return out;
}

Tensor stack_targets(const toy::Dataset& data, std::span<const std::size_t> indices) {
    if (indices.empty()) throw ContractError("empty batch");
    const std::size_t dim = data.at(indices[0]).target.dim();
    Tensor out = Tensor::zeros(indices.size(), dim);
    for (std::size_t r = 0; r < indices.size(); ++r) {
        const auto& v = data.at(indices[r]).target.values;
        if (v.size() != dim) throw ShapeError("batch mixes dimensions");
        std::copy(v.begin(), v.end(), out.row_span(r).begin());
    }
    return out;
}

LossBatch make_batch(const toy::Dataset& data, std::span<const std::size_t> indices, std::span<const double> t,
                     std::span<const double> t_weights, num::Rng& rng, const BatchOptions& opts) {
    const std::size_t n = indices.size();
    if (t.size() != n || t_weights.size() != n) throw ContractError("one timestep and weight per record");
    LossBatch b;
    b.x1 = stack_targets(data, indices);
    b.x0 = opts.x0_absent ? Tensor::zeros(n, b.x1.cols()) : stack_sources(data, indices);
    b.x0_absent = opts.x0_absent;
    b.eps = Tensor(b.x1.shape());
    for (double& e : b.eps.data()) e = rng.normal();
    b.x_t = Tensor(b.x1.shape());
    const std::size_t d = b.x1.cols();
    for (std::size_t r = 0; r < n; ++r) {
        check_t(t[r]);
        for (std::size_t j = 0; j < d; ++j) b.x_t(r, j) = (1.0 - t[r]) * b.x1(r, j) + t[r] * b.eps(r, j);
        model::Condition c = model::condition_for(data[indices[r]], t[r]);
        if (opts.dropout) {
            const double u = rng.uniform();
            const auto& p = opts.drop;
            if (u < p.image_only) {
                c.drop_image = true;
            } else if (u < p.image_only + p.text_only) {
                c.drop_text = true;
            } else if (u < p.image_only + p.text_only + p.both) {
                c.drop_image = c.drop_text = true;
            }
        }
        b.conds.push_back(c);
        b.t.push_back(t[r]);
        b.weights.push_back(data[indices[r]].importance * t_weights[r]);
    }
    return b;
}

NodeId model_velocity(num::Graph& g, const model::VelocityModel& m, const LossBatch& b) {
    return model::forward(g, m, b.x_t, b.x0_absent ? nullptr : &b.x0, b.conds);
}

LossNodes joint_loss(num::Graph& g, NodeId velocity, const LossBatch& b, std::span<const RewardSpec> specs) {
    const std::size_t n = b.size(), d = b.dim();
    if (g.value(velocity).shape() != b.x1.shape()) throw ShapeError("velocity shape differs from batch");
    const double inv_n = 1.0 / static_cast<double>(n);

    std::vector<double> coef(n);
    for (std::size_t r = 0; r < n; ++r) coef[r] = b.weights[r] * inv_n;
    Tensor row_mean = Tensor({d, 1}, 1.0 / static_cast<double>(d));

    LossNodes out;
    out.velocity = velocity;
    const NodeId diff = g.sub(velocity, g.constant(target_velocity(b.x1, b.eps)));
    const NodeId per_row = g.matmul(g.mul(diff, diff), g.constant(row_mean));
    out.fm = g.sum(g.mul(per_row, g.constant(column(coef))));
    out.loss = out.fm;

    std::optional<NodeId> x_hat;
    for (const auto& s : specs) {
        if (s.weight < 0.0) throw ContractError("reward weight must be nonnegative");
        std::vector<double> rc(n, 0.0);
        bool any = false;
        for (std::size_t r = 0; r < n; ++r) {
            if (!b.x0_absent && s.weight > 0.0 && s.active(b.conds[r].tags, b.t[r])) {
                rc[r] = s.weight * coef[r];
                any = true;
            }
        }
        if (!any) {
            out.rewards.emplace_back();
            continue;
        }
        if (!x_hat) x_hat = g.sub(g.constant(b.x_t), g.mul(velocity, g.constant(column(b.t))));
        const NodeId dx = g.sub(*x_hat, g.constant(b.x0));
        const NodeId blk = g.matmul(g.mul(dx, dx), g.constant(block_mask(d, preserved_block(s.id))));
        const NodeId term = g.sum(g.mul(blk, g.constant(column(rc))));
        out.rewards.emplace_back(term);
        out.loss = g.add(out.loss, term);
    }
    return out;
}

LossNodes fm_loss(num::Graph& g, NodeId velocity, const LossBatch& b) { return joint_loss(g, velocity, b, {}); }

LossEval evaluate_joint_loss(const model::VelocityModel& m, const LossBatch& b, std::span<const RewardSpec> specs) {
    num::Graph g(&m.params());
    const NodeId v = model_velocity(g, m, b);
    const LossNodes nodes = joint_loss(g, v, b, specs);
    const NodeId watch[] = {v};
    auto back = g.backward(nodes.loss, watch);
    LossEval e;
    e.loss = g.value(nodes.loss).item();
    e.fm = g.value(nodes.fm).item();
    for (const auto& r : nodes.rewards) e.rewards.push_back(r ? g.value(*r).item() : 0.0);
    e.grads = std::move(back.params);
    e.velocity_grad = std::move(back.watched[0]);
    return e;
}

Tensor ModelField::velocity(const Tensor& x_t, const Tensor* x0, std::span<const model::Condition> conds) const {
    return model::forward(m_, x_t, x0, conds, hook_);
}

std::size_t evals_per_step(SamplerMode mode) { return mode == SamplerMode::teacher_cfg ? 3 : 1; }

Tensor guided_velocity(const Tensor& v_uu, const Tensor& v_cu, const Tensor& v_cc, double w_image, double w_text) {
    Tensor v(v_uu.shape());
    for (std::size_t i = 0; i < v.numel(); ++i)
        v[i] = v_uu[i] + w_image * (v_cu[i] - v_uu[i]) + w_text * (v_cc[i] - v_cu[i]);
    return v;
}

Tensor teacher_velocity(const VelocityField& f, const Tensor& x_t, const Tensor& x0,
                        std::span<const model::Condition> base, double w_image, double w_text) {
    const std::vector<double> wi(base.size(), w_image), wt(base.size(), w_text);
    return teacher_velocity(f, x_t, x0, base, wi, wt);
}

Tensor teacher_velocity(const VelocityField& f, const Tensor& x_t, const Tensor& x0,
                        std::span<const model::Condition> base, std::span<const double> w_image,
                        std::span<const double> w_text) {
    if (w_image.size() != base.size() || w_text.size() != base.size())
        throw ShapeError("one guidance pair per row required");
    std::vector<model::Condition> cc(base.begin(), base.end());
    for (auto& c : cc) {
        c.drop_image = c.drop_text = false;
        c.w_image.reset();
        c.w_text.reset();
    }
    auto cu = cc, uu = cc;
    for (auto& c : cu) c.drop_text = true;
    for (auto& c : uu) c.drop_text = c.drop_image = true;
    const Tensor v_uu = f.velocity(x_t, &x0, uu);
    const Tensor v_cu = f.velocity(x_t, &x0, cu);
    const Tensor v_cc = f.velocity(x_t, &x0, cc);
    Tensor v(v_uu.shape());
    const std::size_t d = v.cols();
    for (std::size_t r = 0; r < v.rows(); ++r) {
        for (std::size_t j = 0; j < d; ++j) {
            const std::size_t i = r * d + j;
            v[i] = v_uu[i] + w_image[r] * (v_cu[i] - v_uu[i]) + w_text[r] * (v_cc[i] - v_cu[i]);
        }
    }
    return v;
}

Tensor integrate(const VelocityField& f, const Tensor& x_start, const Tensor& x0,
                 std::span<const model::Condition> base, const SamplerConfig& cfg, double t_start, double t_end,
                 std::size_t steps, std::size_t* eval_count) {
    validate(f, cfg);
    if (steps == 0) throw ContractError("integration needs at least one step");
    check_t(t_start);
    check_t(t_end);
    if (x_start.shape() != x0.shape()) throw ShapeError("noise and x0 differ in shape");
    if (base.size() != x0.rows()) throw ShapeError("one condition per row required");
    Tensor x = x_start;
    std::size_t evals = 0;
    const double span = t_start - t_end;
    for (std::size_t k = 0; k < steps; ++k) {
        const double t = t_start - span * static_cast<double>(k) / static_cast<double>(steps);
        const double t_next = t_start - span * static_cast<double>(k + 1) / static_cast<double>(steps);
        auto conds = with_t(base, t);
        const Tensor v = step_velocity(f, x, x0, conds, cfg, t, evals);
        const double dt = t - t_next;
        for (std::size_t i = 0; i < x.numel(); ++i) x[i] -= dt * v[i];
    }
    if (eval_count) *eval_count = evals;
    return x;
}

SampleResult sample(const VelocityField& f, const Tensor& x0, std::span<const model::Condition> base,
                    const SamplerConfig& cfg, num::Rng& rng, const Tensor* eps_ref) {
    Tensor start;
    if (cfg.noise == NoiseSource::unified_reference) {
        if (!eps_ref) throw ContractError("unified_reference sampling needs a noise reference");
        if (eps_ref->shape() != x0.shape()) throw ShapeError("noise reference and x0 differ in shape");
        start = *eps_ref;
    } else {
        start = Tensor(x0.shape());
        for (double& e : start.data()) e = rng.normal();
    }
    SampleResult res;
    res.x = integrate(f, start, x0, base, cfg, 1.0, 0.0, cfg.steps, &res.eval_count);
    return res;
}

std::vector<double> endpoint_errors(const Tensor& x, const Tensor& target) {
    if (x.shape() != target.shape()) throw ShapeError("endpoint_errors: shapes differ");
    std::vector<double> out(x.rows());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        double acc = 0.0;
        for (std::size_t j = 0; j < x.cols(); ++j) {
            const double d = x(r, j) - target(r, j);
            acc += d * d;
        }
        out[r] = std::sqrt(acc / static_cast<double>(x.cols()));
    }
    return out;
}

double mean_endpoint_error(const Tensor& x, const Tensor& target) {
    const auto e = endpoint_errors(x, target);
    double s = 0.0;
    for (double v : e) s += v;
    return s / static_cast<double>(e.size());
}

}  // namespace seedlab::flow
