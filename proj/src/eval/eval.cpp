#include "seedlab/eval/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "seedlab/error.hpp"
#include "seedlab/flow/flow.hpp"
#include "seedlab/toydata/features.hpp"

namespace seedlab::eval {

using num::Tensor;

namespace {

constexpr std::array<std::array<double, 2>, 4> kResponseKnots{{{0.0, 5.0}, {0.05, 4.5}, {0.25, 3.0}, {1.0, 0.0}}};
constexpr std::array<std::array<double, 2>, 4> kConsistencyKnots{{{0.0, 0.0}, {0.9, 3.0}, {0.99, 4.5}, {1.0, 5.0}}};
constexpr std::array<std::array<double, 2>, 4> kQualityKnots{{{0.0, 0.0}, {0.5, 3.0}, {0.95, 4.5}, {1.0, 5.0}}};

void check_same_size(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw ShapeError("input and output sizes differ");
}

}  // namespace

Metric consistency_score(std::span<const double> x0, std::span<const double> x_out, toy::TagSet tags) {
    check_same_size(x0, x_out);
    const auto& fm = toy::FeatureMap::for_dim(x0.size());
    std::vector<toy::Block> blocks;
    for (toy::Tag t : {toy::Tag::identity_preserve, toy::Tag::structure_preserve, toy::Tag::style_preserve})
        if (tags.has(t)) blocks.push_back(flow::preserved_block(t));
    std::optional<double> c;
    if (blocks.empty())
        c = toy::cosine(fm.project(x0), fm.project(x_out));
    else
        c = toy::cosine(fm.project_blocks(x0, blocks), fm.project_blocks(x_out, blocks));
    if (!c) return {0.0, true};
    return {*c, false};
}

Metric direction_score(std::span<const double> x0, std::span<const double> x_out, const toy::Instruction& instr) {
    check_same_size(x0, x_out);
    const auto& fm = toy::FeatureMap::for_dim(x0.size());
    auto d = fm.project(x_out);
    const auto p0 = fm.project(x0);
    for (std::size_t k = 0; k < d.size(); ++k) d[k] -= p0[k];
    if (instr.direction.empty()) return {0.0, true};
    if (instr.direction.size() != d.size()) throw ShapeError("instruction direction is not a feature vector");
    const auto c = toy::cosine(d, instr.direction);
    if (!c) return {0.0, true};
    return {*c, false};
}

double oracle_error(std::span<const double> x_out, std::span<const double> target) {
    check_same_size(x_out, target);
    if (x_out.empty()) throw ShapeError("empty sample");
    double s = 0.0;
    for (std::size_t i = 0; i < x_out.size(); ++i) s += (x_out[i] - target[i]) * (x_out[i] - target[i]);
    return std::sqrt(s / static_cast<double>(x_out.size()));
}

double piecewise_linear(std::span<const std::array<double, 2>> knots, double raw) {
    if (knots.empty()) throw ContractError("calibration needs at least one knot");
    if (raw <= knots.front()[0]) return knots.front()[1];
    for (std::size_t k = 1; k < knots.size(); ++k) {
        if (raw <= knots[k][0]) {
            const auto& a = knots[k - 1];
            const auto& b = knots[k];
            return a[1] + (b[1] - a[1]) * (raw - a[0]) / (b[0] - a[0]);
        }
    }
    return knots.back()[1];
}

double instruction_response_score(double err) { return piecewise_linear(kResponseKnots, err); }
double image_consistency_score(double c) { return piecewise_linear(kConsistencyKnots, c); }
double quality_score(double d) { return piecewise_linear(kQualityKnots, d); }

double Scores::min() const { return std::min({instruction_response, image_consistency, quality}); }

EvalRecord evaluate_record(const toy::EditPair& pair, std::span<const double> x_out) {
    EvalRecord r;
    r.id = pair.id;
    const auto c = consistency_score(pair.source.values, x_out, pair.meta.tags);
    const auto d = direction_score(pair.source.values, x_out, pair.instruction);
    r.consistency = c.value;
    r.consistency_degenerate = c.degenerate;
    r.direction_score = d.value;
    r.direction_degenerate = d.degenerate;
    r.oracle_error = oracle_error(x_out, pair.target.values);
    r.scores = {instruction_response_score(r.oracle_error), image_consistency_score(r.consistency),
                quality_score(r.direction_score)};
    return r;
}

std::vector<EvalRecord> evaluate(const toy::Dataset& data, const std::vector<std::vector<double>>& outputs) {
    if (outputs.size() != data.size()) throw ShapeError("one output per record required");
    std::vector<EvalRecord> out;
    out.reserve(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) out.push_back(evaluate_record(data[i], outputs[i]));
    return out;
}

Rates rates(std::span<const EvalRecord> records, double usable, double satisfied) {
    if (records.empty()) throw ContractError("rates need at least one record");
    std::size_t u = 0, s = 0;
    for (const auto& r : records) {
        const double m = r.scores.min();
        if (m >= usable) ++u;
        if (m >= satisfied) ++s;
    }
    const double n = static_cast<double>(records.size());
    return {100.0 * static_cast<double>(u) / n, 100.0 * static_cast<double>(s) / n};
}

Summary summarize(std::span<const EvalRecord> records) {
    Summary s;
    s.n_records = records.size();
    std::vector<EvalRecord> kept;
    for (const auto& r : records) {
        if (r.degenerate()) {
            ++s.n_degenerate;
            continue;
        }
        kept.push_back(r);
        s.mean_consistency += r.consistency;
        s.mean_direction += r.direction_score;
        s.mean_oracle_error += r.oracle_error;
    }
    if (!kept.empty()) {
        const double n = static_cast<double>(kept.size());
        s.mean_consistency /= n;
        s.mean_direction /= n;
        s.mean_oracle_error /= n;
        s.rates = rates(kept);
    }
    return s;
}

std::string format_number(double v) {
    if (v == 0.0) v = 0.0;  // drop the sign of negative zero
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

nlohmann::ordered_json to_json(const Summary& s) {
    nlohmann::ordered_json j;
    j["n_records"] = s.n_records;
    j["n_degenerate"] = s.n_degenerate;
    j["mean_consistency"] = s.mean_consistency;
    j["mean_direction"] = s.mean_direction;
    j["mean_oracle_error"] = s.mean_oracle_error;
    if (s.rates) {
        j["usability_rate"] = s.rates->usability;
        j["satisfaction_rate"] = s.rates->satisfaction;
    } else {
        j["usability_rate"] = nullptr;
        j["satisfaction_rate"] = nullptr;
    }
    return j;
}

std::string records_csv(std::span<const EvalRecord> records) {
    std::ostringstream os;
    os << "id,consistency,direction_score,oracle_error,instruction_response,image_consistency,quality,degenerate\n";
    for (const auto& r : records) {
        os << r.id << ',' << format_number(r.consistency) << ',' << format_number(r.direction_score) << ','
           << format_number(r.oracle_error) << ',' << format_number(r.scores.instruction_response) << ','
           << format_number(r.scores.image_consistency) << ',' << format_number(r.scores.quality) << ','
           << (r.degenerate() ? 1 : 0) << '\n';
    }
    return os.str();
}

Samples sample_dataset(const model::VelocityModel& m, const toy::Dataset& data, double w_image, double w_text,
                       const SampleSpec& spec) {
    std::map<std::size_t, std::vector<std::size_t>> by_dim;
    for (std::size_t i = 0; i < data.size(); ++i) by_dim[data[i].source.dim()].push_back(i);

    flow::SamplerConfig cfg;
    cfg.steps = spec.steps;
    cfg.w_image = w_image;
    cfg.w_text = w_text;
    cfg.mode = m.has_guidance() ? flow::SamplerMode::student_distilled : flow::SamplerMode::teacher_cfg;
    cfg.noise = spec.noise_ref ? flow::NoiseSource::unified_reference : flow::NoiseSource::fresh;
    cfg.trained_range = spec.trained_range;
    if (spec.noise_ref && !m.has_guidance()) throw ContractError("a noise reference needs a student model");

    flow::ModelField field(m, spec.hook);
    Samples out;
    out.outputs.resize(data.size());
    out.eval_count = cfg.steps * flow::evals_per_step(cfg.mode);
    const num::Rng root(spec.seed);
    for (const auto& [dim, idx] : by_dim) {
        if (!m.supports_dim(dim)) throw ContractError("model has no trunk for dim " + std::to_string(dim));
        const Tensor x0 = flow::stack_sources(data, idx);
        std::vector<model::Condition> base;
        base.reserve(idx.size());
        for (std::size_t i : idx) base.push_back(model::condition_for(data[i], 1.0));
        num::Rng rng = root.fork(dim);
        flow::SampleResult s;
        if (spec.noise_ref) {
            const Tensor eps = distill::noise_reference(*spec.noise_ref, x0, base);
            s = flow::sample(field, x0, base, cfg, rng, &eps);
        } else {
            s = flow::sample(field, x0, base, cfg, rng);
        }
        for (std::size_t k = 0; k < idx.size(); ++k) {
            const auto row = s.x.row_span(k);
            out.outputs[idx[k]].assign(row.begin(), row.end());
        }
    }
    return out;
}

std::vector<SweepRow> sweep_cfg(const model::VelocityModel& m, const toy::Dataset& testset,
                                std::span<const double> w_image_grid, std::span<const double> w_text_grid,
                                const SampleSpec& spec) {
    if (w_image_grid.empty() || w_text_grid.empty()) throw ContractError("sweep grids must be nonempty");
    if (testset.empty()) throw ContractError("sweep needs a nonempty test set");
    std::vector<SweepRow> rows;
    for (double wi : w_image_grid) {
        for (double wt : w_text_grid) {
            const auto s = sample_dataset(m, testset, wi, wt, spec);
            const auto recs = evaluate(testset, s.outputs);
            rows.push_back({wi, wt, summarize(recs), s.eval_count});
        }
    }
    return rows;
}

std::string sweep_csv(std::span<const SweepRow> rows) {
    std::ostringstream os;
    os << "w_I,w_T,mean_consistency,mean_direction,mean_oracle_error,nfe,n_eval,n_degenerate\n";
    for (const auto& r : rows) {
        const auto& s = r.summary;
        os << format_number(r.w_image) << ',' << format_number(r.w_text) << ',' << format_number(s.mean_consistency)
           << ',' << format_number(s.mean_direction) << ',' << format_number(s.mean_oracle_error) << ',' << r.nfe
           << ',' << (s.n_records - s.n_degenerate) << ',' << s.n_degenerate << '\n';
    }
    return os.str();
}

TrendCount trend_along_w_text(std::span<const SweepRow> rows, double w_image) {
    std::vector<const SweepRow*> line;
    for (const auto& r : rows)
        if (r.w_image == w_image) line.push_back(&r);
    std::stable_sort(line.begin(), line.end(), [](auto* a, auto* b) { return a->w_text < b->w_text; });
    TrendCount t;
    for (std::size_t k = 1; k < line.size(); ++k) {
        ++t.steps;
        if (line[k]->summary.mean_direction >= line[k - 1]->summary.mean_direction) ++t.direction_nondecreasing;
        if (line[k]->summary.mean_consistency <= line[k - 1]->summary.mean_consistency) ++t.consistency_nonincreasing;
    }
    return t;
}

}  // namespace seedlab::eval
