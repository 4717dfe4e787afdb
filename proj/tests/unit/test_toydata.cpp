#include <cmath>
#include <filesystem>
#include <map>

#include "doctest.h"
#include "seedlab/error.hpp"
#include "seedlab/toydata/edits.hpp"
#include "seedlab/toydata/features.hpp"
#include "seedlab/toydata/io.hpp"
#include "seedlab/toydata/pipeline.hpp"

using namespace seedlab;
using namespace seedlab::toy;

namespace {

const std::size_t kDim8[] = {8};
const std::size_t kAllDims[] = {8, 16, 32, 64};

EditPair single(SourceKind kind, OpKind op, std::uint64_t seed, std::span<const std::size_t> dims = kDim8) {
    GenOptions o;
    o.ops = {op};
    return gen_pairs(kind, 1, dims, num::Rng(seed), o).front();
}

bool blocks_bit_equal(const ToySample& a, const ToySample& b, Block blk) {
    auto x = a.block(blk), y = b.block(blk);
    return std::equal(x.begin(), x.end(), y.begin());
}

}  // namespace

TEST_CASE("gen_pairs: traditional shift is exact") {
    GenOptions o;
    o.ops = {OpKind::shift_content};
    auto data = gen_pairs(SourceKind::traditional_op, 50, kAllDims, num::Rng(1), o);
    for (const auto& p : data) {
        const double delta = p.instruction.params[0];
        auto s = p.source.block(Block::content), t = p.target.block(Block::content);
        for (std::size_t i = 0; i < s.size(); ++i) CHECK(t[i] == s[i] + delta);
        CHECK(blocks_bit_equal(p.source, p.target, Block::identity));
        CHECK(blocks_bit_equal(p.source, p.target, Block::structure));
        CHECK(blocks_bit_equal(p.source, p.target, Block::style));
        CHECK(p.quality == 1.0);
        CHECK(p.meta.task_label == TaskLabel::traditional_op);
        for (double v : p.target.values) CHECK(std::abs(v) <= kValueBound);
    }
}

TEST_CASE("gen_pairs: synthesized leakage hits exactly one uninstructed block with sigma 0.1") {
    GenOptions o;
    o.ops = {OpKind::shift_content};
    auto data = gen_pairs(SourceKind::synthesized, 1000, kAllDims, num::Rng(2), o);
    double sq = 0.0;
    std::size_t n = 0;
    for (const auto& p : data) {
        const ToySample clean = apply_edit(p.source, p.instruction);
        int leaking = 0;
        for (Block b : {Block::identity, Block::structure, Block::style, Block::content}) {
            auto c = clean.block(b), t = p.target.block(b);
            double block_sq = 0.0;
            for (std::size_t i = 0; i < c.size(); ++i) block_sq += (t[i] - c[i]) * (t[i] - c[i]);
            if (block_sq > 0.0) {
                CHECK(b != Block::content);
                ++leaking;
                sq += block_sq;
                n += c.size();
            }
        }
        CHECK(leaking == 1);
    }
    const double rms = std::sqrt(sq / static_cast<double>(n));
    CHECK(rms == doctest::Approx(0.1).epsilon(0.3));
}

TEST_CASE("gen_pairs: video pairs carry a placeholder instruction; errors") {
    auto data = gen_pairs(SourceKind::video_frames, 20, kDim8, num::Rng(3));
    for (const auto& p : data) {
        CHECK(p.instruction.op == OpKind::identity_noop);
        CHECK(p.meta.task_label == TaskLabel::video_pair);
    }
    CHECK_THROWS_AS(gen_pairs(SourceKind::synthesized, 3, std::span<const std::size_t>{}, num::Rng(1)), ContractError);
    const std::size_t bad[] = {12};
    CHECK_THROWS_AS(gen_pairs(SourceKind::synthesized, 3, bad, num::Rng(1)), ContractError);
}

TEST_CASE("gen_pairs: record content does not depend on batch position") {
    GenOptions a;
    a.id_offset = 0;
    auto big = gen_pairs(SourceKind::specialist, 10, kAllDims, num::Rng(4), a);
    GenOptions b;
    b.id_offset = 7;
    auto tail = gen_pairs(SourceKind::specialist, 3, kAllDims, num::Rng(4), b);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(tail[i].source == big[7 + i].source);
        CHECK(tail[i].target == big[7 + i].target);
    }
}

TEST_CASE("recaption: exact recovery on traditional pairs") {
    EditPair p = single(SourceKind::traditional_op, OpKind::rotate_structure, 5);
    p.instruction.params = {0.5, 0, 0, 0};
    p.target = apply_edit(p.source, p.instruction);
    Instruction r = recaption(p);
    CHECK(r.op == OpKind::rotate_structure);
    CHECK(std::abs(r.params[0] - 0.5) < 1e-6);

    auto data = gen_pairs(SourceKind::traditional_op, 1000, kAllDims, num::Rng(6));
    for (const auto& q : data) {
        Instruction got = recaption(q);
        REQUIRE(got.op == q.instruction.op);
        for (std::size_t k = 0; k < 4; ++k) CHECK(std::abs(got.params[k] - q.instruction.params[k]) < 1e-6);
    }
}

TEST_CASE("recaption: unchanged pair is a noop; synthesized pairs mostly recovered") {
    EditPair p = single(SourceKind::specialist, OpKind::swap_style, 7);
    p.target = p.source;
    CHECK(recaption(p).op == OpKind::identity_noop);

    GenOptions o;
    o.ops = {OpKind::shift_content};
    auto data = gen_pairs(SourceKind::synthesized, 1000, kAllDims, num::Rng(8), o);
    int correct = 0;
    for (const auto& q : data) correct += recaption(q).op == OpKind::shift_content;
    CHECK(correct >= 990);
}

TEST_CASE("recaption: video pairs get a real instruction") {
    auto data = gen_pairs(SourceKind::video_frames, 200, kDim8, num::Rng(9));
    int edits = 0;
    for (auto& p : data) {
        p.instruction = recaption(p);
        edits += p.instruction.op != OpKind::identity_noop;
    }
    CHECK(edits == 200);
}

TEST_CASE("compute_tags examples and idempotence") {
    EditPair shift = single(SourceKind::traditional_op, OpKind::shift_content, 10);
    TagSet t = compute_tags(shift.source, shift.target);
    CHECK(t.has(Tag::identity_preserve));
    CHECK(t.has(Tag::structure_preserve));
    CHECK(t.has(Tag::style_preserve));
    CHECK(t.has(Tag::local_edit));
    CHECK(t == compute_tags(shift.source, shift.target));

    EditPair restyle = single(SourceKind::traditional_op, OpKind::global_restyle, 11);
    TagSet r = compute_tags(restyle.source, restyle.target);
    CHECK((r.bits() & ~TagSet().bits()) == (r.bits() & (1u << static_cast<int>(Tag::identity_preserve))));
    CHECK_FALSE(r.has(Tag::style_preserve));
    CHECK_FALSE(r.has(Tag::structure_preserve));

    EditPair face = single(SourceKind::specialist, OpKind::change_identity, 12);
    CHECK_FALSE(compute_tags(face.source, face.target).has(Tag::identity_preserve));
    CHECK(face.meta.tags == compute_tags(face.source, face.target));
}

TEST_CASE("filter_pair examples") {
    EditPair p = single(SourceKind::specialist, OpKind::shift_content, 13);
    p.target = p.source;
    auto keep = filter_pair(p, 0.8, 2.0);
    CHECK(keep.keep);
    CHECK(keep.similarity == doctest::Approx(1.0));
    CHECK(keep.max_displacement == 0.0);

    EditPair anti = p;
    for (double& v : anti.target.values) v = -v;
    auto drop = filter_pair(anti, 0.5, 100.0);
    CHECK_FALSE(drop.keep);
    CHECK(drop.reason == FilterReason::similarity);
    CHECK(drop.similarity == doctest::Approx(-1.0));
}

TEST_CASE("filter_pair keep-rate on video corpus equals a brute-force recheck") {
    auto data = gen_pairs(SourceKind::video_frames, 1000, kAllDims, num::Rng(14));
    std::size_t kept = 0, oracle_kept = 0;
    for (const auto& p : data) {
        kept += filter_pair(p, 0.8, 2.0).keep;
        // Independent recomputation from the raw projection rows.
        const auto& fm = FeatureMap::for_dim(p.source.dim());
        double dot = 0.0, ns = 0.0, nt = 0.0;
        for (std::size_t r = 0; r < FeatureMap::kRows; ++r) {
            double fs = 0.0, ft = 0.0;
            for (std::size_t c = 0; c < p.source.dim(); ++c) {
                fs += fm.row(r)[c] * p.source.values[c];
                ft += fm.row(r)[c] * p.target.values[c];
            }
            dot += fs * ft;
            ns += fs * fs;
            nt += ft * ft;
        }
        const double sim = dot / std::sqrt(ns * nt);
        double worst = 0.0;
        const std::size_t bs = p.source.dim() / 4;
        for (std::size_t b = 0; b < 4; ++b) {
            double s = 0.0;
            for (std::size_t i = b * bs; i < (b + 1) * bs; ++i)
                s += (p.target.values[i] - p.source.values[i]) * (p.target.values[i] - p.source.values[i]);
            worst = std::max(worst, std::sqrt(s));
        }
        oracle_kept += (sim >= 0.8 && worst <= 2.0);
    }
    CHECK(kept == oracle_kept);
    CHECK(kept < 1000);  // scene cuts are dropped
    CHECK(kept > 500);
}

TEST_CASE("augment_reverse") {
    EditPair p = single(SourceKind::traditional_op, OpKind::shift_content, 15);
    Dataset d{p};
    Dataset out = augment_reverse(d);
    REQUIRE(out.size() == 2);
    CHECK(out[1].instruction.op == OpKind::shift_content);
    CHECK(out[1].instruction.params[0] == -p.instruction.params[0]);
    CHECK(out[1].source == p.target);
    CHECK(out[1].reverse_of == p.id);
    CHECK(out[1].meta == p.meta);

    GenOptions o;
    o.ops = {OpKind::change_identity};
    Dataset faces = gen_pairs(SourceKind::specialist, 10, kDim8, num::Rng(16), o);
    Dataset faces_out = augment_reverse(faces);
    REQUIRE(faces_out.size() == faces.size());
    for (std::size_t i = 0; i < faces.size(); ++i) CHECK(faces_out[i].id == faces[i].id);

    Dataset mixed = gen_pairs(SourceKind::traditional_op, 60, kAllDims, num::Rng(17));
    Dataset synth = gen_pairs(SourceKind::synthesized, 40, kAllDims, num::Rng(18), GenOptions{{}, 1000, 0.1});
    mixed.insert(mixed.end(), synth.begin(), synth.end());
    Dataset aug = augment_reverse(mixed);
    CHECK(aug.size() <= 2 * mixed.size());
    for (const auto& r : aug) {
        if (!r.reverse_of || r.meta.source_kind != SourceKind::traditional_op) continue;
        // Reverse of a traditional pair maps its source back to the original source.
        const ToySample back = apply_edit(r.source, r.instruction);
        for (std::size_t i = 0; i < back.dim(); ++i) CHECK(std::abs(back.values[i] - r.target.values[i]) < 1e-9);
        const ToySample fwd = apply_edit(back, inverse_instruction(r.instruction));
        for (std::size_t i = 0; i < fwd.dim(); ++i) CHECK(std::abs(fwd.values[i] - r.source.values[i]) < 1e-9);
    }
    Dataset twice = augment_reverse(aug);
    CHECK(twice.size() == aug.size());
}

TEST_CASE("importance_resample frequencies and weights") {
    GenOptions o;
    o.ops = {OpKind::shift_content, OpKind::rotate_structure};
    Dataset base = gen_pairs(SourceKind::traditional_op, 2000, kDim8, num::Rng(19), o);
    std::array<std::size_t, kOpKindCount> base_count{};
    for (const auto& p : base) ++base_count[static_cast<std::size_t>(p.instruction.op)];

    std::array<double, kOpKindCount> uniform;
    uniform.fill(1.0);
    num::Rng rng(20);
    auto res = importance_resample(base, uniform, rng, 10000);
    std::array<std::size_t, kOpKindCount> cnt{};
    for (const auto& p : res.dataset) ++cnt[static_cast<std::size_t>(p.instruction.op)];
    CHECK(std::abs(cnt[0] / 10000.0 - 0.5) < 0.02);
    CHECK(res.warnings.size() == 4);  // four op kinds absent from this dataset

    std::array<double, kOpKindCount> skew;
    skew.fill(1.0);
    skew[0] = 9.0;
    auto res9 = importance_resample(base, skew, rng, 10000);
    std::array<std::size_t, kOpKindCount> c9{};
    for (const auto& p : res9.dataset) ++c9[static_cast<std::size_t>(p.instruction.op)];
    const double ratio = static_cast<double>(c9[0]) / static_cast<double>(c9[1]);
    CHECK(std::abs(ratio - 9.0) <= 0.45);
    // Weighted class mass reproduces the original class frequencies.
    double w0 = 0.0, wsum = 0.0;
    for (const auto& p : res9.dataset) {
        wsum += p.importance;
        if (p.instruction.op == OpKind::shift_content) w0 += p.importance;
    }
    CHECK(w0 / wsum == doctest::Approx(static_cast<double>(base_count[0]) / 2000.0).epsilon(0.03));

    o.ops = {OpKind::swap_style};
    Dataset one = gen_pairs(SourceKind::traditional_op, 50, kDim8, num::Rng(21), o);
    auto res1 = importance_resample(one, skew, rng);
    for (const auto& p : res1.dataset) CHECK(p.importance == 1.0);

    skew[2] = 0.0;
    CHECK_THROWS_AS(importance_resample(one, skew, rng), ContractError);
}

TEST_CASE("plan_buckets") {
    Dataset d8 = gen_pairs(SourceKind::traditional_op, 20, kDim8, num::Rng(22));
    const std::size_t d16dims[] = {16};
    Dataset d16 = gen_pairs(SourceKind::traditional_op, 12, d16dims, num::Rng(23), GenOptions{{}, 100, 0.1});
    Dataset mixed = d16;
    mixed.insert(mixed.end(), d8.begin(), d8.end());
    auto plan = plan_buckets(mixed, 64);
    bool seen16 = false;
    for (const auto& b : plan) {
        if (b.dim == 16) seen16 = true;
        if (b.dim == 8) CHECK_FALSE(seen16);
        CHECK(b.indices.size() <= 64 / b.dim);
    }
    CHECK(plan.front().indices.size() == 8);
    CHECK(plan.back().dim == 16);
    CHECK(plan.back().indices.size() == 4);

    const std::size_t d64dims[] = {64};
    Dataset one = gen_pairs(SourceKind::traditional_op, 1, d64dims, num::Rng(24));
    auto p1 = plan_buckets(one, 64);
    REQUIRE(p1.size() == 1);
    CHECK(p1[0].indices.size() == 1);
    CHECK_THROWS_AS(plan_buckets(one, 32), ContractError);

    Dataset big = gen_pairs(SourceKind::synthesized, 1000, kAllDims, num::Rng(25));
    auto pb = plan_buckets(big, 128);
    std::vector<int> seen(big.size(), 0);
    for (const auto& b : pb) {
        CHECK(b.indices.size() * b.dim <= 128);
        for (std::size_t i : b.indices) {
            ++seen[i];
            CHECK(big[i].source.dim() == b.dim);
        }
    }
    for (int s : seen) CHECK(s == 1);
}

TEST_CASE("dataset file round trip and manifest") {
    Dataset d = gen_pairs(SourceKind::synthesized, 30, kAllDims, num::Rng(26));
    Dataset rev = augment_reverse(d);
    const auto dir = std::filesystem::temp_directory_path() / "seedlab_toy_io";
    std::filesystem::create_directories(dir);
    const auto path = dir / "d.jsonl";
    write_dataset(path, rev);
    write_manifest(path, summarize(rev, 26));
    Dataset back = read_dataset(path);
    REQUIRE(back.size() == rev.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
        CHECK(back[i].id == rev[i].id);
        CHECK(back[i].source == rev[i].source);
        CHECK(back[i].target == rev[i].target);
        CHECK(back[i].instruction.same_edit(rev[i].instruction));
        CHECK(back[i].meta == rev[i].meta);
        CHECK(back[i].quality == rev[i].quality);
        CHECK(back[i].reverse_of == rev[i].reverse_of);
        CHECK(to_json_line(back[i]) == to_json_line(rev[i]));
    }
    auto m = read_manifest(path);
    CHECK(m.records == rev.size());
    CHECK(m.per_source_kind[0] == rev.size());
    CHECK(m.seed == 26);
    CHECK_THROWS_AS(from_json_line("{\"id\":1}"), ContractError);
    std::filesystem::remove_all(dir);
}
