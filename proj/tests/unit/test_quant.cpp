#include <cfloat>
#include <cmath>

#include "doctest.h"
#include "quant_oracle.hpp"
#include "seedlab/error.hpp"
#include "seedlab/flow/flow.hpp"
#include "seedlab/numerics/kernels.hpp"
#include "seedlab/quant/quant.hpp"
#include "seedlab/toydata/pipeline.hpp"

using namespace seedlab;
using namespace seedlab::quant;
using num::Tensor;
using testing::fake_quant;
using testing::reference_linear;

namespace {

Tensor random_tensor(std::size_t r, std::size_t c, num::Rng& rng, double sd = 1.0) {
    Tensor t = Tensor::zeros(r, c);
    for (double& v : t.data()) v = rng.normal(0.0, sd);
    return t;
}

// Weight columns with very different magnitudes.
Tensor spread_weight(std::size_t in, std::size_t out, num::Rng& rng) {
    Tensor w = random_tensor(in, out, rng);
    for (std::size_t r = 0; r < in; ++r)
        for (std::size_t c = 0; c < out; ++c) w(r, c) *= std::pow(10.0, -3.0 * static_cast<double>(c) / out);
    return w;
}

LayerCalib calib_of(const Tensor& x) { return {x, column_absmax(x)}; }

model::VelocityModel small_model(std::uint64_t seed, bool guidance = false) {
    model::ModelConfig cfg;
    cfg.width = 16;
    cfg.label_dim = 5;
    cfg.tag_dim = 5;
    cfg.time_dim = 6;
    auto m = model::VelocityModel::init(cfg, seed);
    num::Rng rng(seed + 1);
    for (std::size_t i = 0; i < m.params().size(); ++i)
        if (m.params().name(i).find(".out.") != std::string::npos)
            for (double& v : m.params().value(i).data()) v = rng.normal(0.0, 0.2);
    return guidance ? m.with_guidance(seed + 2) : m;
}

toy::Dataset pairs(std::size_t n, std::uint64_t seed) {
    const std::size_t dims[] = {8};
    return toy::gen_pairs(toy::SourceKind::traditional_op, n, dims, num::Rng(seed));
}

const Granularity kAll[] = {Granularity::per_tensor, Granularity::per_channel, Granularity::per_group};

}  // namespace

TEST_CASE("scale layout per granularity") {
    CHECK(scale_count(70, 5, Granularity::per_tensor) == 1);
    CHECK(scale_count(70, 5, Granularity::per_channel) == 5);
    CHECK(scale_count(70, 5, Granularity::per_group) == 15);
    CHECK(scale_index(33, 4, 5, Granularity::per_group) == 9);
    CHECK(scale_index(33, 4, 5, Granularity::per_channel) == 4);
    CHECK(qmax(8) == 127);
    CHECK(qmax(4) == 7);
    CHECK_THROWS_AS(qmax(6), ContractError);
    CHECK(mac_weight(8) == 0.25);
    CHECK(mac_weight(4) == 0.125);
}

TEST_CASE("quantize: zeros, half-even rounding, saturation") {
    const auto z = quantize(Tensor::zeros(3, 4), Granularity::per_channel, 8);
    for (auto q : z.q) CHECK(q == 0);
    const Tensor zb = dequantize(z);
    for (double v : zb.data()) CHECK(v == 0.0);

    const Tensor x = Tensor::row({2.5, 3.5, -2.5, -0.5, 0.5, 1000.0, -1000.0});
    const auto q = quantize_with_scales(x, Granularity::per_tensor, 8, {1.0});
    CHECK(q.q == std::vector<std::int8_t>{2, 4, -2, 0, 0, 127, -127});
    const auto q4 = quantize_with_scales(x, Granularity::per_tensor, 4, {1.0});
    CHECK(q4.q == std::vector<std::int8_t>{2, 4, -2, 0, 0, 7, -7});
    CHECK_THROWS_AS(quantize_with_scales(x, Granularity::per_tensor, 8, {0.0}), ContractError);
    CHECK_THROWS_AS(quantize_with_scales(x, Granularity::per_channel, 8, {1.0}), ShapeError);
}

TEST_CASE("round-trip error is at most scale / 2 over the full grid") {
    num::Rng rng(3);
    const Tensor x = [] {
        // Every grid point and every midpoint for a unit scale, +-max included.
        std::vector<double> v;
        for (int k = -127; k <= 127; ++k) {
            v.push_back(k);
            if (k < 127) v.push_back(k + 0.5);
        }
        return Tensor::row(v);
    }();
    const auto q = quantize(x, Granularity::per_tensor, 8);
    CHECK(q.scales[0] == 1.0);
    const Tensor back = dequantize(q);
    for (std::size_t i = 0; i < x.numel(); ++i) CHECK(std::abs(back[i] - x[i]) <= 0.5);

    // Spanning +-max: bound max / 254.
    Tensor y = random_tensor(16, 16, rng, 3.0);
    double mx = 0.0;
    for (double v : y.data()) mx = std::max(mx, std::abs(v));
    const Tensor yb = dequantize(quantize(y, Granularity::per_tensor, 8));
    for (std::size_t i = 0; i < y.numel(); ++i) CHECK(std::abs(yb[i] - y[i]) <= mx / 254 * (1 + 4 * DBL_EPSILON));

    for (int bits : {4, 8})
        for (auto g : kAll)
            for (double clip : {1.0, 0.9, 0.7}) {
                const Tensor t = random_tensor(70, 9, rng, 2.0);
                const auto qt = quantize(t, g, bits, clip);
                const Tensor tb = dequantize(qt);
                for (std::size_t r = 0; r < t.rows(); ++r)
                    for (std::size_t c = 0; c < t.cols(); ++c) {
                        const double s = qt.scales[scale_index(r, c, t.cols(), g)];
                        const double v = t(r, c);
                        if (std::abs(v) <= qmax(bits) * s)
                            CHECK(std::abs(tb(r, c) - v) <= s / 2 * (1 + 4 * DBL_EPSILON));
                        else
                            CHECK(std::abs(tb(r, c)) == doctest::Approx(qmax(bits) * s));
                    }
            }
}

TEST_CASE("per-channel round trip is no worse than per-tensor on spread weights") {
    num::Rng rng(5);
    for (int trial = 0; trial < 5; ++trial) {
        const Tensor w = spread_weight(64, 32, rng);
        const double pt = testing::mse(dequantize(quantize(w, Granularity::per_tensor, 8)), w);
        const double pc = testing::mse(dequantize(quantize(w, Granularity::per_channel, 8)), w);
        CHECK(pc <= pt);
    }
}

TEST_CASE("smoothing factors: formula boundaries and float equivalence") {
    num::Rng rng(7);
    const Tensor w = random_tensor(12, 5, rng);
    const Tensor x = random_tensor(40, 12, rng, 2.0);
    const auto amax = column_absmax(x);
    const auto wmax = row_absmax(w);

    const auto s0 = smoothing_factors(w, amax, 0.0);
    for (std::size_t j = 0; j < 12; ++j) CHECK(s0.s[j] == doctest::Approx(1.0 / wmax[j]).epsilon(1e-14));
    for (double m : row_absmax(smooth_weights(w, s0.s))) CHECK(m == doctest::Approx(1.0).epsilon(1e-14));

    const auto s1 = smoothing_factors(w, amax, 1.0);
    for (std::size_t j = 0; j < 12; ++j) CHECK(s1.s[j] == doctest::Approx(amax[j]).epsilon(1e-14));

    for (double a : {0.0, 0.25, 0.5, 0.75, 1.0}) {
        const auto s = smoothing_factors(w, amax, a);
        const Tensor ref = num::matmul(x, w);
        const Tensor got = num::matmul(smooth_activations(x, s.s), smooth_weights(w, s.s));
        double worst = 0.0;
        for (std::size_t i = 0; i < ref.numel(); ++i)
            worst = std::max(worst, std::abs(got[i] - ref[i]) / std::max(1e-12, std::abs(ref[i])));
        CHECK(worst <= 1e-6);
    }

    // Equal maxima everywhere give a uniform factor and leave the error unchanged.
    Tensor wu = Tensor::zeros(4, 3);
    for (std::size_t r = 0; r < 4; ++r) wu(r, r % 3) = 0.8;
    const std::vector<double> flat(4, 2.0);
    const auto su = smoothing_factors(wu, flat, 0.5);
    for (double s : su.s) CHECK(s == su.s[0]);
    Tensor xu = random_tensor(20, 4, rng);
    for (std::size_t r = 0; r < 20; ++r) xu(r, r % 4) = (r % 2 ? 2.0 : -2.0);
    CHECK(testing::activation_quant_mse(xu, wu, su.s, 8) ==
          doctest::Approx(testing::activation_quant_mse(xu, wu, {}, 8)).epsilon(1e-9));

    // Zero channel maxima fall back to 1.
    std::vector<double> with_zero = amax;
    with_zero[3] = 0.0;
    CHECK(smoothing_factors(w, with_zero, 0.5).s[3] == 1.0);
    Tensor wz = w;
    for (double& v : wz.row_span(4)) v = 0.0;
    CHECK(smoothing_factors(wz, amax, 0.5).s[4] == 1.0);
    CHECK_THROWS_AS(smoothing_factors(w, amax, 1.5), ContractError);
}

TEST_CASE("smoothing halves activation-quant error on the outlier fixture") {
    for (std::uint64_t seed : {1, 2, 3}) {
        const auto f = testing::outlier_fixture(seed);
        const auto s = smoothing_factors(f.w, column_absmax(f.x), 0.5);
        const double plain = testing::activation_quant_mse(f.x, f.w, {}, 8);
        const double smoothed = testing::activation_quant_mse(f.x, f.w, s.s, 8);
        CHECK(plain >= 2.0 * smoothed);
    }
}

TEST_CASE("quantized_linear agrees with the dequantized float product; kernels agree bitwise") {
    num::Rng rng(9);
    const Tensor x = random_tensor(33, 70, rng);
    const Tensor w = spread_weight(70, 20, rng);
    const Tensor b = random_tensor(1, 20, rng);
    const auto calib = calib_of(x);
    for (int bits : {4, 8})
        for (auto g : kAll)
            for (std::optional<double> a : {std::optional<double>{}, std::optional<double>{0.5}}) {
                const auto s = make_scheme(w, calib, bits, g, 0.9, a);
                CHECK(s.weight_scales.size() == scale_count(70, 20, g));
                const Tensor got = quantized_linear(x, w, b, s);
                const Tensor ref = reference_linear(x, w, b, s);
                CHECK(num::max_abs_diff(got, ref) < 1e-9);

                const auto saved = kernels::active_isa();
                kernels::set_active_isa(kernels::Isa::scalar);
                const Tensor scalar = quantized_linear(x, w, b, s);
                kernels::set_active_isa(saved);
                CHECK(num::bitwise_equal(scalar, got));
            }
}

TEST_CASE("make_scheme: scales are f32 values and the activation scale follows the clip") {
    num::Rng rng(10);
    const Tensor x = random_tensor(50, 8, rng);
    const Tensor w = random_tensor(8, 6, rng);
    const auto calib = calib_of(x);
    double amax = 0.0;
    for (double v : calib.absmax) amax = std::max(amax, v);
    const auto s = make_scheme(w, calib, 8, Granularity::per_channel, 0.8, std::nullopt);
    CHECK(s.act_scale == static_cast<double>(static_cast<float>(0.8 * amax / 127)));
    for (double v : s.weight_scales) CHECK(v == static_cast<double>(static_cast<float>(v)));
    CHECK(s.smooth.empty());
    const auto sm = make_scheme(w, calib, 8, Granularity::per_channel, 1.0, 0.5);
    CHECK(sm.smooth.size() == 8);
}

TEST_CASE("search_scheme is an exhaustive argmin") {
    num::Rng rng(11);
    const Tensor x = random_tensor(64, 40, rng);
    const Tensor w = spread_weight(40, 24, rng);
    const Tensor b = random_tensor(1, 24, rng);
    const auto calib = calib_of(x);
    const Tensor ref = num::add(num::matmul(x, w), b);

    CHECK_THROWS_AS(search_scheme(w, b, calib, 8, {}), ContractError);

    const Candidate one[] = {{Granularity::per_group, 0.7, 0.25}};
    const auto single = search_scheme(w, b, calib, 8, one);
    CHECK(single.index == 0);
    const auto direct = make_scheme(w, calib, 8, Granularity::per_group, 0.7, 0.25);
    CHECK(single.scheme.weight_scales == direct.weight_scales);
    CHECK(single.scheme.act_scale == direct.act_scale);

    const Candidate three[] = {{Granularity::per_tensor, 1.0, std::nullopt},
                               {Granularity::per_channel, 0.9, 0.5},
                               {Granularity::per_group, 0.8, 0.0}};
    const auto got = search_scheme(w, b, calib, 8, three);
    std::size_t best = 0;
    std::vector<double> brute;
    for (const auto& c : three) {
        brute.push_back(
            testing::mse(reference_linear(x, w, b, make_scheme(w, calib, 8, c.granularity, c.clip_ratio, c.alpha)), ref));
        if (brute.back() < brute[best]) best = brute.size() - 1;
    }
    CHECK(got.index == best);
    for (std::size_t i = 0; i < 3; ++i) CHECK(got.mse[i] == doctest::Approx(brute[i]).epsilon(1e-9));

    const auto full = default_candidates();
    CHECK(full.size() == 60);
    CHECK(full[0].granularity == Granularity::per_tensor);
    CHECK(full[59].granularity == Granularity::per_group);
    CHECK(*full[59].alpha == 1.0);
    CHECK(full[59].clip_ratio == 0.7);

    // Heavy column spread: per-channel beats per-tensor.
    const Candidate pair[] = {{Granularity::per_tensor, 1.0, std::nullopt}, {Granularity::per_channel, 1.0, std::nullopt}};
    const auto pick = search_scheme(w, b, calib, 8, pair);
    CHECK(pick.index == 1);
    CHECK(pick.mse[1] < pick.mse[0]);
}

TEST_CASE("sensitivity flags layers above the relative threshold") {
    num::Rng rng(12);
    const Tensor x = random_tensor(64, 16, rng);
    const Tensor w = spread_weight(16, 8, rng);
    const Tensor b = Tensor::zeros(1, 8);
    const auto calib = calib_of(x);
    const double rel = relative_layer_mse(x, w, b, make_scheme(w, calib, 8, Granularity::per_tensor, 1.0, std::nullopt));
    CHECK(is_sensitive(w, b, calib, rel * 0.5));
    CHECK_FALSE(is_sensitive(w, b, calib, rel * 2.0));
}

TEST_CASE("ptq_finetune: monotone curve, stationary at an exact grid, recovers perturbed scales") {
    // Weights and activations already on the quantization grid: zero error stays zero.
    Tensor wg = Tensor::zeros(4, 3), xg = Tensor::zeros(6, 4);
    num::Rng rng(13);
    for (double& v : wg.data()) v = static_cast<double>(static_cast<int>(rng.below(255)) - 127) / 64;
    wg(0, 0) = 127.0 / 64;
    for (double& v : xg.data()) v = 0.5 * static_cast<double>(static_cast<int>(rng.below(255)) - 127);
    xg(0, 0) = 63.5;
    const Tensor bg = Tensor::zeros(1, 3);
    const auto sg = make_scheme(wg, calib_of(xg), 8, Granularity::per_tensor, 1.0, std::nullopt);
    const auto stay = ptq_finetune(wg, bg, xg, sg);
    CHECK(stay.mse.front() < 1e-20);
    CHECK(std::abs(stay.mse.back() - stay.mse.front()) <= 1e-10);

    for (auto g : kAll) {
        const Tensor x = random_tensor(128, 40, rng);
        const Tensor w = spread_weight(40, 16, rng);
        const Tensor b = random_tensor(1, 16, rng);
        const auto base = make_scheme(w, calib_of(x), 4, g, 1.0, std::nullopt);
        const double e0 = layer_mse(x, w, b, base);
        LayerScheme bad = base;
        for (double& s : bad.weight_scales) s *= 2.0;
        bad.act_scale *= 2.0;
        const double e1 = layer_mse(x, w, b, bad);
        REQUIRE(e1 > e0);
        PtqConfig cfg;
        cfg.iters = 300;
        const auto res = ptq_finetune(w, b, x, bad, cfg);
        for (std::size_t i = 1; i < res.mse.size(); ++i) CHECK(res.mse[i] <= res.mse[i - 1]);
        CHECK(res.mse.front() == doctest::Approx(e1).epsilon(1e-12));
        CHECK(res.mse.back() == doctest::Approx(layer_mse(x, w, b, res.scheme)).epsilon(1e-12));
        CHECK(e1 - res.mse.back() >= 0.9 * (e1 - e0));
    }
}

TEST_CASE("base64 f32 packing") {
    const std::vector<double> one{1.0};
    CHECK(encode_f32_base64(one) == "AACAPw==");
    CHECK(encode_f32_base64(std::vector<double>{}) == "");
    const std::vector<double> v{1.0, -2.5, 3.0e-5, 1e10};
    const auto back = decode_f32_base64(encode_f32_base64(v));
    REQUIRE(back.size() == v.size());
    for (std::size_t i = 0; i < v.size(); ++i) CHECK(back[i] == static_cast<double>(static_cast<float>(v[i])));
    CHECK_THROWS_AS(decode_f32_base64("AAC"), ConfigError);
    CHECK_THROWS_AS(decode_f32_base64("AA*APw=="), ConfigError);
    CHECK_THROWS_AS(decode_f32_base64("AACA"), ConfigError);
}

TEST_CASE("scheme table json round trip and validation") {
    num::Rng rng(14);
    const Tensor x = random_tensor(40, 33, rng);
    const Tensor w = random_tensor(33, 7, rng);
    SchemeTable t;
    t["a"] = make_scheme(w, calib_of(x), 8, Granularity::per_group, 0.9, 0.25);
    t["b"] = make_scheme(w, calib_of(x), 4, Granularity::per_tensor, 1.0, std::nullopt);
    const auto back = scheme_table_from_json(nlohmann::json::parse(to_json(t).dump()));
    REQUIRE(back.size() == 2);
    for (const auto& [k, s] : t) {
        const auto& r = back.at(k);
        CHECK(r.bits == s.bits);
        CHECK(r.granularity == s.granularity);
        CHECK(r.clip_ratio == s.clip_ratio);
        CHECK(r.alpha == s.alpha);
        CHECK(r.weight_scales == s.weight_scales);
        CHECK(r.smooth == s.smooth);
        CHECK(r.act_scale == s.act_scale);
    }
    CHECK(to_json(back).dump() == to_json(t).dump());
    auto j = nlohmann::json::parse(to_json(t).dump());
    j["a"]["granularity"] = "per_row";
    CHECK_THROWS_AS(scheme_table_from_json(j), ConfigError);
    j = nlohmann::json::parse(to_json(t).dump());
    j["b"].erase("scales");
    CHECK_THROWS_AS(scheme_table_from_json(j), ConfigError);
}

TEST_CASE("calibration covers every dense layer and is reproducible") {
    for (bool guided : {false, true}) {
        const auto m = small_model(21, guided);
        const auto data = pairs(40, 2);
        CalibConfig cfg;
        cfg.samples = 48;
        cfg.seed = 5;
        const auto a = calibrate(m, data, cfg);
        const auto b = calibrate(m, data, cfg);
        const auto layers = m.linear_layers(8);
        CHECK(a.layers.size() == layers.size());
        for (const auto& l : layers) {
            REQUIRE(a.layers.count(l) == 1);
            CHECK(a.layers.at(l).inputs.rows() == 48);
            CHECK(num::bitwise_equal(a.layers.at(l).inputs, b.layers.at(l).inputs));
            for (double v : a.layers.at(l).absmax) CHECK(std::isfinite(v));
        }
    }
}

TEST_CASE("quantized model: cost accounting, missing schemes, output fidelity") {
    const auto m = small_model(31);
    const auto data = pairs(64, 3);
    QuantConfig qc;
    qc.calib.samples = 64;
    qc.ptq.iters = 20;
    const auto calib = calibrate(m, data, qc.calib);
    const auto q = quantize_model(m, calib, qc);
    CHECK(q.table.size() == m.linear_layers(8).size());
    for (const auto& rep : q.layers) {
        CHECK(rep.mse_final <= rep.mse_searched);
        if (!rep.sensitive) CHECK(rep.mse_searched == rep.mse_default);
    }

    std::vector<std::size_t> idx(data.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    const Tensor x0 = flow::stack_sources(data, idx);
    std::vector<model::Condition> conds;
    for (const auto& p : data) conds.push_back(model::condition_for(p, 0.5));
    num::Rng rng(1);
    Tensor xt = Tensor::zeros(data.size(), 8);
    for (double& v : xt.data()) v = rng.normal();
    const auto qr = qforward(m, q.table, xt, &x0, conds);
    const Tensor ref = model::forward(m, xt, &x0, conds);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < ref.numel(); ++i) {
        num += (qr.output[i] - ref[i]) * (qr.output[i] - ref[i]);
        den += ref[i] * ref[i];
    }
    CHECK(num / den < 1e-2);
    CHECK(qr.cost.float_macs == static_cast<double>(model::forward_macs(m, 8)));
    CHECK(qr.cost.weighted_macs == 0.25 * qr.cost.float_macs);
    CHECK(qr.cost.eval_counts == 1);

    SchemeTable four = q.table;
    for (auto& [layer, s] : four) {
        s = make_scheme(m.params().value(m.params().at(layer + ".w")), calib.layers.at(layer), 4, Granularity::per_channel, 1.0,
                        std::nullopt);
    }
    const auto c4 = sampling_cost(m, 8, 8, &four);
    CHECK(c4.weighted_macs == 0.125 * c4.float_macs);

    const auto teacher = sampling_cost(m, 8, 225);
    const auto student = sampling_cost(m, 8, 8, &q.table);
    CHECK(teacher.weighted_macs == teacher.float_macs);
    CHECK(teacher.eval_counts == 225);
    CHECK(teacher.weighted_macs / student.weighted_macs == doctest::Approx(225.0 / 8 * 4).epsilon(1e-12));

    SchemeTable partial = q.table;
    partial.erase("trunk.d8.1");
    CHECK_THROWS_AS(qforward(m, partial, xt, &x0, conds), ContractError);
    CHECK_THROWS_AS(sampling_cost(m, 8, 8, &partial), ContractError);
    const auto j = to_json(student);
    CHECK(j.contains("float_macs"));
    CHECK(j.contains("wall_clock_ms"));
}
