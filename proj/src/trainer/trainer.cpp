#include "seedlab/trainer/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>

#include "seedlab/error.hpp"
#include "seedlab/log.hpp"
#include "seedlab/toydata/pipeline.hpp"

namespace seedlab::train {

using num::Tensor;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr double kNumericFloor = 1e-12;
constexpr std::uint64_t kShuffleStream = 1ull << 40;

double mean_of(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / double(v.size()); }

double variance_of(const std::vector<double>& v, double mean) {
    double s = 0.0;
    for (double x : v) s += (x - mean) * (x - mean);
    return s / static_cast<double>(v.size() - 1);
}

void shuffle(std::vector<std::size_t>& v, num::Rng rng) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

}  // namespace

TimestepDistribution::TimestepDistribution(std::size_t bins, double decay, double floor_fraction)
    : decay_(decay), floor_(floor_fraction / static_cast<double>(bins)), impact_(bins, 0.0), probs_(bins) {
    if (bins == 0) throw ContractError("timestep distribution needs at least one bin");
    if (!(decay >= 0.0 && decay < 1.0)) throw ContractError("EMA decay must lie in [0, 1)");
    if (!(floor_fraction >= 0.0 && floor_fraction <= 1.0)) throw ContractError("floor fraction must lie in [0, 1]");
    renormalize();
}

TimestepDistribution::Draw TimestepDistribution::sample(num::Rng& rng) const {
    const double u = rng.uniform();
    double acc = 0.0;
    std::size_t bin = probs_.size() - 1;
    for (std::size_t b = 0; b < probs_.size(); ++b) {
        acc += probs_[b];
        if (u < acc) {
            bin = b;
            break;
        }
    }
    const double t = (static_cast<double>(bin) + rng.uniform()) / static_cast<double>(probs_.size());
    return {t, weight(bin), bin};
}

double TimestepDistribution::weight(std::size_t bin) const {
    return (1.0 / static_cast<double>(probs_.size())) / probs_.at(bin);
}

std::size_t TimestepDistribution::bin_of(double t) const {
    const auto b = static_cast<std::size_t>(t * static_cast<double>(probs_.size()));
    return std::min(b, probs_.size() - 1);
}

void TimestepDistribution::update(std::size_t bin, double grad_norm_sq) {
    if (!(grad_norm_sq >= 0.0)) throw ContractError("squared gradient norm must be nonnegative");
    impact_.at(bin) = decay_ * impact_[bin] + (1.0 - decay_) * grad_norm_sq;
    renormalize();
}

// Water-filling: p_b = max(floor, c * q_b) with the p summing to one.
void TimestepDistribution::renormalize() {
    const std::size_t n = impact_.size();
    std::vector<double> q(n);
    for (std::size_t b = 0; b < n; ++b) q[b] = std::max(impact_[b], kNumericFloor);
    std::vector<bool> clamped(n, false);
    for (;;) {
        double free_mass = 1.0, q_sum = 0.0;
        for (std::size_t b = 0; b < n; ++b) {
            if (clamped[b]) free_mass -= floor_;
            else q_sum += q[b];
        }
        // Equal scores share the free mass exactly, so a uniform state has unit weights.
        std::size_t free_count = 0;
        bool equal = true;
        double first = -1.0;
        for (std::size_t b = 0; b < n; ++b) {
            if (clamped[b]) continue;
            ++free_count;
            if (first < 0.0) first = q[b];
            equal = equal && q[b] == first;
        }
        bool changed = false;
        for (std::size_t b = 0; b < n; ++b) {
            if (clamped[b]) {
                probs_[b] = floor_;
                continue;
            }
            probs_[b] = equal ? free_mass / static_cast<double>(free_count) : free_mass * q[b] / q_sum;
            if (probs_[b] < floor_) {
                clamped[b] = true;
                changed = true;
            }
        }
        if (!changed) break;
    }
}

void TimestepDistribution::set_probs(std::vector<double> probs) {
    if (probs.size() != probs_.size()) throw ContractError("probability vector has the wrong bin count");
    double s = 0.0;
    for (double p : probs) {
        if (!(p > 0.0)) throw ContractError("bin probabilities must be positive");
        s += p;
    }
    for (double& p : probs) p /= s;
    probs_ = std::move(probs);
}

bool TimestepDistribution::is_uniform() const {
    return std::all_of(probs_.begin(), probs_.end(), [&](double p) { return p == probs_[0]; });
}

ordered_json TimestepDistribution::to_json() const {
    ordered_json j;
    j["bins"] = probs_.size();
    j["decay"] = decay_;
    j["floor"] = floor_;
    j["impact"] = impact_;
    j["probs"] = probs_;
    return j;
}

TimestepDistribution TimestepDistribution::from_json(const json& j) {
    try {
        const std::size_t bins = j.at("bins").get<std::size_t>();
        const double floor = j.at("floor").get<double>();
        TimestepDistribution d(bins, j.at("decay").get<double>(), floor * static_cast<double>(bins));
        d.floor_ = floor;
        d.impact_ = j.at("impact").get<std::vector<double>>();
        d.probs_ = j.at("probs").get<std::vector<double>>();
        if (d.impact_.size() != bins || d.probs_.size() != bins) throw ConfigError("timestep distribution arrays");
        return d;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("timestep distribution: ") + e.what());
    }
}

double cosine_lr(double lr, double final_fraction, std::size_t step, std::size_t steps) {
    const double prog = steps == 0 ? 1.0 : static_cast<double>(step) / static_cast<double>(steps);
    return lr * (final_fraction + (1.0 - final_fraction) * 0.5 * (1.0 + std::cos(std::numbers::pi * prog)));
}

Adam::Adam(const num::ParamStore& params, double lr, double beta1, double beta2, double eps)
    : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {
    for (std::size_t i = 0; i < params.size(); ++i) {
        m_.emplace_back(params.value(i).shape());
        v_.emplace_back(params.value(i).shape());
    }
}

void Adam::step(num::ParamStore& params, const num::Gradients& grads) {
    if (grads.by_param.size() != params.size()) throw ContractError("gradient count differs from parameter count");
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    for (std::size_t p = 0; p < params.size(); ++p) {
        auto w = params.value(p).data();
        const auto g = grads.by_param[p].data();
        auto m = m_[p].data();
        auto v = v_[p].data();
        for (std::size_t i = 0; i < w.size(); ++i) {
            m[i] = b1_ * m[i] + (1.0 - b1_) * g[i];
            v[i] = b2_ * v[i] + (1.0 - b2_) * g[i] * g[i];
            w[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
        }
    }
}

std::string_view to_string(Stage s) { return s == Stage::pretrain ? "pretrain" : "finetune"; }

std::vector<flow::RewardSpec> StageConfig::rewards() const {
    const toy::Tag ids[] = {toy::Tag::identity_preserve, toy::Tag::structure_preserve, toy::Tag::style_preserve};
    std::vector<flow::RewardSpec> out;
    for (std::size_t i = 0; i < 3; ++i) out.push_back({ids[i], lambdas[i], t_reward});
    return out;
}

namespace {

template <class T>
T take(const json& j, const char* key, T fallback) {
    return j.contains(key) ? j.at(key).get<T>() : fallback;
}

void in_unit(double v, const char* what) {
    if (!(v >= 0.0 && v <= 1.0)) throw ConfigError(std::string(what) + " must lie in [0, 1]");
}

}  // namespace

StageConfig stage_config_from_json(const json& j) {
    static const char* const kKeys[] = {"stage", "steps", "lr", "lr_final_fraction", "token_budget",
                                        "t2i_mix_fraction", "quality_floor", "lambdas", "t_reward", "seed",
                                        "adaptive_timesteps", "warmup_steps", "dropout"};
    if (!j.is_object()) throw ConfigError("stage config must be an object");
    for (const auto& [k, _] : j.items())
        if (std::find_if(std::begin(kKeys), std::end(kKeys), [&](const char* s) { return k == s; }) == std::end(kKeys))
            throw ConfigError("unknown stage config key '" + k + "'");
    StageConfig c;
    try {
        const std::string stage = take<std::string>(j, "stage", "pretrain");
        if (stage == "pretrain") c.stage = Stage::pretrain;
        else if (stage == "finetune") c.stage = Stage::finetune;
        else throw ConfigError("stage must be pretrain or finetune");
        c.steps = take(j, "steps", c.steps);
        c.lr = take(j, "lr", c.lr);
        c.lr_final_fraction = take(j, "lr_final_fraction", c.lr_final_fraction);
        c.token_budget = take(j, "token_budget", c.token_budget);
        c.t2i_mix_fraction = take(j, "t2i_mix_fraction", c.t2i_mix_fraction);
        c.quality_floor = take(j, "quality_floor", c.quality_floor);
        if (j.contains("lambdas")) {
            const auto l = j.at("lambdas").get<std::vector<double>>();
            if (l.size() != 3) throw ConfigError("lambdas needs three entries (identity, structure, style)");
            std::copy(l.begin(), l.end(), c.lambdas.begin());
        }
        c.t_reward = take(j, "t_reward", c.t_reward);
        c.seed = take(j, "seed", c.seed);
        c.adaptive_timesteps = take(j, "adaptive_timesteps", c.adaptive_timesteps);
        c.warmup_steps = take(j, "warmup_steps", c.warmup_steps);
        if (j.contains("dropout")) {
            const auto& d = j.at("dropout");
            for (const auto& [k, _] : d.items())
                if (k != "image_only" && k != "text_only" && k != "both")
                    throw ConfigError("unknown dropout key '" + k + "'");
            c.dropout.image_only = take(d, "image_only", c.dropout.image_only);
            c.dropout.text_only = take(d, "text_only", c.dropout.text_only);
            c.dropout.both = take(d, "both", c.dropout.both);
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("stage config: ") + e.what());
    }
    if (!(c.lr > 0.0)) throw ConfigError("lr must be positive");
    in_unit(c.lr_final_fraction, "lr_final_fraction");
    in_unit(c.t2i_mix_fraction, "t2i_mix_fraction");
    in_unit(c.quality_floor, "quality_floor");
    in_unit(c.t_reward, "t_reward");
    for (double l : c.lambdas)
        if (!(l >= 0.0)) throw ConfigError("reward weights must be nonnegative");
    if (c.dropout.image_only < 0 || c.dropout.text_only < 0 || c.dropout.both < 0 ||
        c.dropout.image_only + c.dropout.text_only + c.dropout.both > 1.0)
        throw ConfigError("dropout probabilities must be nonnegative and sum to at most 1");
    if (c.token_budget < toy::kSupportedDims.front()) throw ConfigError("token_budget below the smallest dim");
    return c;
}

ordered_json to_json(const StageConfig& c) {
    ordered_json j;
    j["stage"] = to_string(c.stage);
    j["steps"] = c.steps;
    j["lr"] = c.lr;
    j["lr_final_fraction"] = c.lr_final_fraction;
    j["token_budget"] = c.token_budget;
    j["t2i_mix_fraction"] = c.t2i_mix_fraction;
    j["quality_floor"] = c.quality_floor;
    j["lambdas"] = c.lambdas;
    j["t_reward"] = c.t_reward;
    j["seed"] = c.seed;
    j["adaptive_timesteps"] = c.adaptive_timesteps;
    j["warmup_steps"] = c.warmup_steps;
    j["dropout"] = {{"image_only", c.dropout.image_only}, {"text_only", c.dropout.text_only}, {"both", c.dropout.both}};
    return j;
}

void check_stage_order(const StageConfig& pretrain, const StageConfig& finetune) {
    if (finetune.quality_floor < pretrain.quality_floor)
        throw ConfigError("finetune quality_floor must be >= the pretrain quality_floor");
}

std::string to_json_line(const StepRecord& r) {
    ordered_json j;
    j["step"] = r.step;
    j["stage"] = to_string(r.stage);
    j["dim"] = r.dim;
    j["loss"] = r.loss;
    j["fm_term"] = r.fm;
    j["reward_terms"] = r.rewards;
    j["bin"] = r.bins;
    j["weight"] = r.weights;
    j["t2i"] = r.t2i;
    return j.dump();
}

toy::Dataset stage_dataset(const toy::Dataset& data, const StageConfig& cfg) {
    if (cfg.stage == Stage::pretrain) return data;
    toy::Dataset out;
    for (const auto& p : data)
        if (p.quality >= cfg.quality_floor) out.push_back(p);
    return out;
}

TrainReport train_stage(model::VelocityModel& m, const toy::Dataset& data, const StageConfig& cfg,
                        TimestepDistribution& dist, std::ostream* metrics) {
    const toy::Dataset filtered = stage_dataset(data, cfg);
    if (filtered.empty()) throw ContractError("no training records left after the quality filter");
    for (const auto& p : filtered)
        if (!m.supports_dim(p.source.dim()))
            throw ContractError("dataset contains dim " + std::to_string(p.source.dim()) + " the model lacks");
    TrainReport rep;
    rep.records_used = filtered.size();
    if (cfg.steps == 0) return rep;

    // Group by dim (plan order is nondecreasing in dim) and fix batch capacity.
    std::map<std::size_t, std::vector<std::size_t>> by_dim;
    for (const auto& b : toy::plan_buckets(filtered, cfg.token_budget))
        by_dim[b.dim].insert(by_dim[b.dim].end(), b.indices.begin(), b.indices.end());

    // Step share per dim, proportional to record count, remainder to the smallest dims.
    std::vector<std::pair<std::size_t, std::size_t>> plan;
    std::size_t assigned = 0;
    for (const auto& [dim, idx] : by_dim) {
        const std::size_t s = cfg.steps * idx.size() / filtered.size();
        plan.emplace_back(dim, s);
        assigned += s;
    }
    for (std::size_t i = 0; assigned < cfg.steps; i = (i + 1) % plan.size(), ++assigned) ++plan[i].second;

    const num::Rng root(cfg.seed);
    const auto rewards = cfg.rewards();
    Adam opt(m.params(), cfg.lr);
    std::size_t step = 0;
    std::uint64_t epoch = 0;
    for (const auto& [dim, dim_steps] : plan) {
        std::vector<std::size_t> order = by_dim[dim];
        const std::size_t cap = std::max<std::size_t>(1, cfg.token_budget / dim);
        std::size_t cursor = order.size();
        for (std::size_t k = 0; k < dim_steps; ++k, ++step) {
            if (cursor >= order.size()) {
                shuffle(order, root.fork(kShuffleStream + epoch++));
                cursor = 0;
            }
            const std::size_t n = std::min(cap, order.size() - cursor);
            std::vector<std::size_t> batch(order.begin() + cursor, order.begin() + cursor + n);
            cursor += n;

            num::Rng rng = root.fork(step);
            const bool adaptive = cfg.adaptive_timesteps && step >= cfg.warmup_steps;
            std::vector<double> ts(n), ws(n);
            std::vector<std::size_t> bins(n);
            for (std::size_t r = 0; r < n; ++r) {
                if (adaptive) {
                    const auto d = dist.sample(rng);
                    ts[r] = d.t, ws[r] = d.weight, bins[r] = d.bin;
                } else {
                    ts[r] = rng.uniform();
                    ws[r] = 1.0;
                    bins[r] = dist.bin_of(ts[r]);
                }
            }
            flow::BatchOptions bo;
            bo.x0_absent = rng.uniform() < cfg.t2i_mix_fraction;
            bo.drop = cfg.dropout;
            const flow::LossBatch batch_data = flow::make_batch(filtered, batch, ts, ws, rng, bo);
            const flow::LossEval ev = flow::evaluate_joint_loss(m, batch_data, rewards);

            if (cfg.lr_final_fraction < 1.0) opt.set_lr(cosine_lr(cfg.lr, cfg.lr_final_fraction, step, cfg.steps));
            opt.step(m.params(), ev.grads);

            // Impact proxy: squared norm of the unweighted per-record loss
            // gradient with respect to the predicted velocity.
            for (std::size_t r = 0; r < n; ++r) {
                if (!(batch_data.weights[r] > 0.0)) continue;
                const double undo = static_cast<double>(n) / batch_data.weights[r];
                double g2 = 0.0;
                for (double g : ev.velocity_grad.row_span(r)) g2 += (g * undo) * (g * undo);
                dist.update(bins[r], g2);
            }

            rep.t2i_batches += bo.x0_absent;
            rep.batch_dims.push_back(dim);
            rep.final_loss = ev.loss;
            if (metrics) {
                StepRecord rec{step, cfg.stage, dim, ev.loss, ev.fm, {}, bins, batch_data.weights, bo.x0_absent};
                for (std::size_t i = 0; i < 3 && i < ev.rewards.size(); ++i) rec.rewards[i] = ev.rewards[i];
                *metrics << to_json_line(rec) << '\n';
            }
            if (!std::isfinite(ev.loss)) throw ContractError("training loss became non-finite");
        }
    }
    rep.steps = step;
    return rep;
}

UnbiasednessReport unbiasedness_check(const model::VelocityModel& m, const toy::Dataset& data,
                                      const TimestepDistribution& dist, std::size_t n_draws, num::Rng& rng,
                                      std::span<const flow::RewardSpec> rewards, std::size_t grad_draws) {
    if (data.empty()) throw ContractError("unbiasedness check needs records");
    if (n_draws < 2) throw ContractError("unbiasedness check needs at least two draws");
    std::map<std::size_t, std::vector<std::size_t>> by_dim;
    for (std::size_t i = 0; i < data.size(); ++i) by_dim[data[i].source.dim()].push_back(i);

    flow::BatchOptions no_drop;
    no_drop.dropout = false;

    // Per-draw loss of one record, importance and timestep weight included.
    auto draw_losses = [&](bool weighted, std::size_t count) {
        std::vector<double> out;
        out.reserve(count);
        while (out.size() < count) {
            const std::size_t first = rng.below(data.size());
            const auto& pool = by_dim[data[first].source.dim()];
            const std::size_t n = std::min<std::size_t>(256, count - out.size());
            std::vector<std::size_t> idx{first};
            while (idx.size() < n) idx.push_back(pool[rng.below(pool.size())]);
            std::vector<double> ts(n), ws(n);
            for (std::size_t r = 0; r < n; ++r) {
                if (weighted) {
                    const auto d = dist.sample(rng);
                    ts[r] = d.t, ws[r] = d.weight;
                } else {
                    ts[r] = rng.uniform(), ws[r] = 1.0;
                }
            }
            const auto b = flow::make_batch(data, idx, ts, ws, rng, no_drop);
            const Tensor v = model::forward(m, b.x_t, &b.x0, b.conds);
            for (std::size_t r = 0; r < n; ++r) {
                double fm = 0.0;
                for (std::size_t j = 0; j < b.dim(); ++j) {
                    const double d = v(r, j) - (b.eps(r, j) - b.x1(r, j));
                    fm += d * d;
                }
                fm /= static_cast<double>(b.dim());
                const Tensor xh = flow::estimate_x1(b.x_t.row_copy(r), ts[r], v.row_copy(r));
                const double rw = flow::reward_loss(b.x0.row_copy(r), xh, b.conds[r].tags, ts[r], rewards).total;
                out.push_back(b.weights[r] * (fm + rw));
            }
        }
        return out;
    };

    UnbiasednessReport rep;
    rep.draws = n_draws;
    const auto w = draw_losses(true, n_draws);
    const auto u = draw_losses(false, n_draws);
    rep.weighted_mean = mean_of(w);
    rep.uniform_mean = mean_of(u);
    const double vw = variance_of(w, rep.weighted_mean), vu = variance_of(u, rep.uniform_mean);
    rep.weighted_se = std::sqrt(vw / static_cast<double>(n_draws));
    rep.uniform_se = std::sqrt(vu / static_cast<double>(n_draws));
    rep.z = std::abs(rep.weighted_mean - rep.uniform_mean) /
            std::sqrt(rep.weighted_se * rep.weighted_se + rep.uniform_se * rep.uniform_se);
    rep.loss_variance_ratio = vw / vu;

    if (grad_draws >= 2) {
        auto grad_trace = [&](bool weighted) {
            std::vector<Tensor> sum;
            double sq = 0.0;
            for (std::size_t k = 0; k < grad_draws; ++k) {
                const std::size_t idx[] = {static_cast<std::size_t>(rng.below(data.size()))};
                double t[1], wt[1];
                if (weighted) {
                    const auto d = dist.sample(rng);
                    t[0] = d.t, wt[0] = d.weight;
                } else {
                    t[0] = rng.uniform(), wt[0] = 1.0;
                }
                const auto b = flow::make_batch(data, idx, t, wt, rng, no_drop);
                const auto ev = flow::evaluate_joint_loss(m, b, rewards);
                if (sum.empty()) sum = ev.grads.by_param;
                else
                    for (std::size_t p = 0; p < sum.size(); ++p)
                        for (std::size_t i = 0; i < sum[p].numel(); ++i) sum[p][i] += ev.grads.by_param[p][i];
                sq += ev.grads.squared_norm();
            }
            const double n = static_cast<double>(grad_draws);
            double mean_sq = 0.0;
            for (const auto& s : sum)
                for (double x : s.data()) mean_sq += (x / n) * (x / n);
            return (sq / n - mean_sq) * n / (n - 1.0);
        };
        const double tw = grad_trace(true);
        const double tu = grad_trace(false);
        rep.grad_variance_ratio = tw / tu;
        rep.grad_draws = grad_draws;
    }
    return rep;
}

}  // namespace seedlab::train
