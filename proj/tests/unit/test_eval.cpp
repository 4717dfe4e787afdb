#include <cmath>

#include "doctest.h"
#include "seedlab/error.hpp"
#include "seedlab/eval/eval.hpp"
#include "seedlab/toydata/edits.hpp"
#include "seedlab/toydata/features.hpp"
#include "seedlab/toydata/pipeline.hpp"

using namespace seedlab;

namespace {

std::vector<double> random_vec(num::Rng& rng, std::size_t n) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.normal();
    return v;
}

toy::Dataset held_out(toy::OpKind op, std::size_t n, std::size_t dim, std::uint64_t seed) {
    const std::size_t dims[] = {dim};
    toy::GenOptions o;
    o.ops = {op};
    o.id_offset = 500000;
    return toy::gen_pairs(toy::SourceKind::traditional_op, n, dims, num::Rng(seed), o);
}

eval::EvalRecord with_scores(double a, double b, double c) {
    eval::EvalRecord r;
    r.scores = {a, b, c};
    return r;
}

}  // namespace

TEST_CASE("consistency: identity, antipodal and zero inputs") {
    num::Rng rng(1);
    for (std::size_t dim : {8u, 16u, 32u}) {
        const auto x = random_vec(rng, dim);
        auto c = eval::consistency_score(x, x, {});
        CHECK_FALSE(c.degenerate);
        CHECK(c.value == doctest::Approx(1.0).epsilon(1e-12));
        std::vector<double> neg(x);
        for (double& v : neg) v = -v;
        CHECK(eval::consistency_score(x, neg, {}).value == doctest::Approx(-1.0).epsilon(1e-12));
        const std::vector<double> zero(dim, 0.0);
        c = eval::consistency_score(x, zero, {});
        CHECK(c.degenerate);
        CHECK(c.value == 0.0);
    }
    const std::vector<double> a(8, 1.0), b(16, 1.0);
    CHECK_THROWS_AS(eval::consistency_score(a, b, {}), ShapeError);
}

TEST_CASE("consistency with identity_preserve equals a block-restricted recomputation") {
    num::Rng rng(2);
    const std::size_t dim = 16;
    const auto& fm = toy::FeatureMap::for_dim(dim);
    const auto id = toy::block_range(dim, toy::Block::identity);
    const auto content = toy::block_range(dim, toy::Block::content);
    toy::TagSet tags;
    tags.set(toy::Tag::identity_preserve);
    for (int trial = 0; trial < 20; ++trial) {
        const auto x0 = random_vec(rng, dim);
        auto x1 = x0;
        for (std::size_t i = content.begin; i < content.begin + content.size; ++i) x1[i] += rng.normal(0.0, 2.0);
        // Identity block perturbed slightly so the cosine is not trivially 1.
        for (std::size_t i = id.begin; i < id.begin + id.size; ++i) x1[i] += rng.normal(0.0, 0.3);

        double dot = 0.0, n0 = 0.0, n1 = 0.0;
        for (std::size_t r = 0; r < toy::FeatureMap::kRows; ++r) {
            double p0 = 0.0, p1 = 0.0;
            for (std::size_t i = id.begin; i < id.begin + id.size; ++i) {
                p0 += fm.row(r)[i] * x0[i];
                p1 += fm.row(r)[i] * x1[i];
            }
            dot += p0 * p1;
            n0 += p0 * p0;
            n1 += p1 * p1;
        }
        const double oracle = dot / std::sqrt(n0 * n1);
        CHECK(eval::consistency_score(x0, x1, tags).value == doctest::Approx(oracle).epsilon(1e-12));
    }
    // Content-only change leaves tagged consistency at exactly the identity value.
    const auto x0 = random_vec(rng, dim);
    auto x1 = x0;
    for (std::size_t i = content.begin; i < content.begin + content.size; ++i) x1[i] += 5.0;
    CHECK(eval::consistency_score(x0, x1, tags).value == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(eval::consistency_score(x0, x1, {}).value < 0.999);
}

TEST_CASE("direction score of exact edits reaches the corpus maximum per op kind") {
    for (auto op : {toy::OpKind::shift_content, toy::OpKind::rotate_structure, toy::OpKind::swap_style,
                    toy::OpKind::change_identity, toy::OpKind::global_restyle}) {
        const auto data = held_out(op, 64, 16, 3);
        std::vector<double> scores;
        double corpus_max = -1.0;
        for (const auto& p : data) {
            const auto edited = toy::apply_edit(p.source, p.instruction);
            const auto m = eval::direction_score(p.source.values, edited.values, p.instruction);
            if (m.degenerate) continue;
            scores.push_back(m.value);
            corpus_max = std::max(corpus_max, m.value);
        }
        REQUIRE_FALSE(scores.empty());
        for (double s : scores) CHECK(s >= corpus_max - 0.05);
    }
}

TEST_CASE("direction score: opposite edits are negative, null edits degenerate") {
    const auto data = held_out(toy::OpKind::shift_content, 32, 8, 4);
    for (const auto& p : data) {
        std::vector<double> back(p.source.values);
        for (std::size_t i = 0; i < back.size(); ++i) back[i] -= p.target.values[i] - p.source.values[i];
        const auto m = eval::direction_score(p.source.values, back, p.instruction);
        CHECK_FALSE(m.degenerate);
        CHECK(m.value < 0.0);
        // Feature projection is linear, so the reversal is exactly antipodal.
        CHECK(m.value == doctest::Approx(-1.0).epsilon(1e-9));
    }
    const std::size_t dims[] = {8};
    toy::GenOptions o;
    o.ops = {toy::OpKind::identity_noop};
    const auto noops = toy::gen_pairs(toy::SourceKind::synthesized, 8, dims, num::Rng(5), o);
    for (const auto& p : noops) {
        REQUIRE(p.instruction.op == toy::OpKind::identity_noop);
        const auto m = eval::direction_score(p.source.values, p.source.values, p.instruction);
        CHECK(m.degenerate);
        CHECK(m.value == 0.0);
    }
    // A zero displacement is degenerate even when a direction exists.
    const auto& p = data.front();
    CHECK(eval::direction_score(p.source.values, p.source.values, p.instruction).degenerate);
}

TEST_CASE("calibrations are monotone, bounded and anchored") {
    double prev_r = 6.0, prev_c = -1.0, prev_q = -1.0;
    for (int k = 0; k <= 3000; ++k) {
        const double raw = -1.0 + k * 0.001;
        const double r = eval::instruction_response_score(raw + 1.0);
        const double c = eval::image_consistency_score(raw);
        const double q = eval::quality_score(raw);
        for (double s : {r, c, q}) {
            CHECK(s >= 0.0);
            CHECK(s <= 5.0);
        }
        CHECK(r <= prev_r);
        CHECK(c >= prev_c);
        CHECK(q >= prev_q);
        prev_r = r;
        prev_c = c;
        prev_q = q;
    }
    CHECK(eval::instruction_response_score(0.0) == 5.0);
    CHECK(eval::image_consistency_score(1.0) == 5.0);
    CHECK(eval::quality_score(1.0) == 5.0);
    CHECK(eval::instruction_response_score(0.25) == doctest::Approx(3.0));
    CHECK(eval::quality_score(0.5) == doctest::Approx(3.0));
    CHECK(eval::image_consistency_score(0.9) == doctest::Approx(3.0));
}

TEST_CASE("exact edits score 5 on every axis") {
    const auto data = held_out(toy::OpKind::shift_content, 16, 8, 6);
    for (const auto& p : data) {
        const auto r = eval::evaluate_record(p, p.target.values);
        CHECK(r.oracle_error == 0.0);
        CHECK(r.scores.instruction_response == 5.0);
        CHECK(r.scores.min() >= 4.99);
    }
}

TEST_CASE("rates: saturated, zero and a hand-counted fixture") {
    std::vector<eval::EvalRecord> all5(4, with_scores(5, 5, 5)), all0(4, with_scores(0, 0, 0));
    auto r = eval::rates(all5);
    CHECK(r.usability == 100.0);
    CHECK(r.satisfaction == 100.0);
    r = eval::rates(all0);
    CHECK(r.usability == 0.0);
    CHECK(r.satisfaction == 0.0);

    // min scores: 5, 4.5, 4.49, 3, 2.99, 0, 4.8, 3.5, 1, 4.6
    const std::vector<eval::EvalRecord> mixed{
        with_scores(5, 5, 5),      with_scores(4.5, 5, 4.7), with_scores(5, 4.49, 5), with_scores(3, 4, 5),
        with_scores(2.99, 5, 5),   with_scores(0, 5, 5),     with_scores(4.8, 4.9, 5), with_scores(5, 3.5, 4),
        with_scores(5, 5, 1),      with_scores(4.6, 4.6, 4.6)};
    // >= 3: 5, 4.5, 4.49, 3, 4.8, 3.5, 4.6 -> 7; >= 4.5: 5, 4.5, 4.8, 4.6 -> 4
    r = eval::rates(mixed);
    CHECK(r.usability == 70.0);
    CHECK(r.satisfaction == 40.0);
    CHECK_THROWS_AS(eval::rates(std::vector<eval::EvalRecord>{}), ContractError);
}

TEST_CASE("summaries exclude degenerate records from means and rates") {
    std::vector<eval::EvalRecord> recs(3);
    recs[0].consistency = 0.9;
    recs[0].direction_score = 0.8;
    recs[0].oracle_error = 0.1;
    recs[0].scores = {5, 5, 5};
    recs[1].consistency = 0.5;
    recs[1].direction_score = 0.2;
    recs[1].oracle_error = 0.3;
    recs[1].scores = {0, 0, 0};
    recs[2].consistency = -1.0;
    recs[2].direction_degenerate = true;
    const auto s = eval::summarize(recs);
    CHECK(s.n_records == 3);
    CHECK(s.n_degenerate == 1);
    CHECK(s.mean_consistency == doctest::Approx(0.7));
    CHECK(s.mean_direction == doctest::Approx(0.5));
    CHECK(s.mean_oracle_error == doctest::Approx(0.2));
    REQUIRE(s.rates);
    CHECK(s.rates->usability == 50.0);
    const auto none = eval::summarize(std::vector<eval::EvalRecord>{recs[2]});
    CHECK_FALSE(none.rates);
    CHECK(eval::to_json(none)["usability_rate"].is_null());
}

TEST_CASE("number format uses 6 significant digits") {
    CHECK(eval::format_number(0.123456789) == "0.123457");
    CHECK(eval::format_number(1234567.0) == "1.23457e+06");
    CHECK(eval::format_number(-0.0) == "0");
    CHECK(eval::format_number(2.0) == "2");
}

TEST_CASE("sweep: row counts, schema and shared noise") {
    const std::size_t dims[] = {8};
    toy::GenOptions o;
    o.ops = {toy::OpKind::shift_content};
    const auto data = toy::gen_pairs(toy::SourceKind::traditional_op, 12, dims, num::Rng(7), o);
    const auto m = model::VelocityModel::init(model::ModelConfig{}, 3);
    eval::SampleSpec spec;
    spec.steps = 4;
    spec.seed = 9;

    const double one[] = {1.0};
    auto rows = eval::sweep_cfg(m, data, one, one, spec);
    CHECK(rows.size() == 1);
    CHECK(rows[0].nfe == 12);

    const double wi[] = {1.0, 2.0}, wt[] = {1.0, 1.5, 3.0};
    rows = eval::sweep_cfg(m, data, wi, wt, spec);
    REQUIRE(rows.size() == 6);
    CHECK(rows[1].w_image == 1.0);
    CHECK(rows[1].w_text == 1.5);
    CHECK(rows[3].w_image == 2.0);
    const auto csv = eval::sweep_csv(rows);
    CHECK(csv.rfind("w_I,w_T,mean_consistency,mean_direction,mean_oracle_error,nfe,n_eval,n_degenerate\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 7);
    CHECK(eval::trend_along_w_text(rows, 1.0).steps == 2);

    const auto a = eval::sample_dataset(m, data, 1.0, 2.0, spec);
    const auto b = eval::sample_dataset(m, data, 1.0, 2.0, spec);
    CHECK(a.outputs == b.outputs);
    CHECK(a.eval_count == 12);

    const double empty[] = {1.0};
    CHECK_THROWS_AS(eval::sweep_cfg(m, data, std::span<const double>(empty, 0), one, spec), ContractError);
    CHECK_THROWS_AS(eval::sweep_cfg(m, toy::Dataset{}, one, one, spec), ContractError);
}

TEST_CASE("student sampling uses one evaluation per step") {
    const std::size_t dims[] = {8};
    const auto data = toy::gen_pairs(toy::SourceKind::traditional_op, 6, dims, num::Rng(8));
    const auto teacher = model::VelocityModel::init(model::ModelConfig{}, 3);
    const auto student = teacher.with_guidance(4);
    eval::SampleSpec spec;
    spec.steps = 8;
    CHECK(eval::sample_dataset(student, data, 2.0, 3.0, spec).eval_count == 8);
    CHECK(eval::sample_dataset(teacher, data, 2.0, 3.0, spec).eval_count == 24);
    // Identical functions at w = 1 give identical samples from the same noise.
    CHECK(eval::sample_dataset(student, data, 1.0, 1.0, spec).outputs ==
          eval::sample_dataset(teacher, data, 1.0, 1.0, spec).outputs);
}
