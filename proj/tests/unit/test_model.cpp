#include <cmath>

#include "doctest.h"
#include "fd_oracle.hpp"
#include "seedlab/error.hpp"
#include "seedlab/model/model.hpp"
#include "seedlab/numerics/checkpoint.hpp"
#include "seedlab/numerics/ops.hpp"

using namespace seedlab;
using namespace seedlab::model;
using num::Tensor;

namespace {

Tensor random_tensor(std::size_t r, std::size_t c, num::Rng& rng, double sd = 1.0) {
    Tensor t = Tensor::zeros(r, c);
    for (double& v : t.data()) v = rng.normal(0.0, sd);
    return t;
}

Condition sample_condition(num::Rng& rng) {
    Condition c;
    c.label = static_cast<toy::TaskLabel>(rng.below(4));
    c.tags = toy::TagSet::from_bits(static_cast<std::uint8_t>(rng.below(16)));
    c.op = static_cast<toy::OpKind>(rng.below(6));
    for (double& p : c.op_params) p = rng.uniform(-2, 2);
    c.t = rng.uniform();
    return c;
}

// Gives the zero-initialized output layer random weights so outputs depend on everything.
void randomize_output(VelocityModel& m, num::Rng& rng) {
    for (std::size_t i = 0; i < m.params().size(); ++i) {
        const auto& name = m.params().name(i);
        if (name.find(".out.") != std::string::npos)
            for (double& v : m.params().value(i).data()) v = rng.normal(0.0, 0.1);
    }
}

ModelConfig small_config(bool guidance = false) {
    ModelConfig cfg;
    cfg.dims = {8};
    cfg.width = 16;
    cfg.label_dim = 6;
    cfg.tag_dim = 5;
    cfg.time_dim = 7;
    cfg.guidance_dim = 4;
    cfg.guidance = guidance;
    return cfg;
}

}  // namespace

TEST_CASE("init is deterministic and follows the scaled-normal rule") {
    ModelConfig cfg;
    cfg.dims = {8, 16};
    auto a = VelocityModel::init(cfg, 42);
    auto b = VelocityModel::init(cfg, 42);
    CHECK(num::bitwise_equal(a.params(), b.params()));
    CHECK_FALSE(num::bitwise_equal(a.params(), VelocityModel::init(cfg, 43).params()));

    const Tensor& w = a.params().value(a.params().at("trunk.d8.1.w"));
    REQUIRE(w.numel() >= 10000);
    double sq = 0.0;
    for (double v : w.data()) sq += v * v;
    const double sd = std::sqrt(sq / static_cast<double>(w.numel()));
    CHECK(std::abs(sd - 1.0 / std::sqrt(256.0)) < 0.1 / std::sqrt(256.0));

    const Tensor& e = a.params().value(a.params().at("embed.task_label"));
    double esq = 0.0;
    for (double v : e.data()) esq += v * v;
    CHECK(std::sqrt(esq / e.numel()) == doctest::Approx(0.02).epsilon(0.3));

    CHECK_THROWS_AS(VelocityModel::init(ModelConfig{{12}}, 1), ContractError);
}

TEST_CASE("fresh model outputs exactly zero") {
    auto m = VelocityModel::init(ModelConfig{}, 1);
    num::Rng rng(2);
    Tensor x = random_tensor(3, 8, rng), x0 = random_tensor(3, 8, rng);
    std::vector<Condition> c{sample_condition(rng), sample_condition(rng), sample_condition(rng)};
    Tensor v = forward(m, x, &x0, c);
    CHECK(v.shape() == x.shape());
    for (double e : v.data()) CHECK(e == 0.0);
}

TEST_CASE("encode_condition segments") {
    ModelConfig cfg;
    cfg.guidance = true;
    auto m = VelocityModel::init(cfg, 3);
    num::Rng rng(4);
    Condition c = sample_condition(rng);
    c.w_image = 1.5;
    c.w_text = 2.0;
    CHECK(num::bitwise_equal(encode_condition(m, c), encode_condition(m, c)));

    Condition c2 = c;
    c2.w_image = 3.0;
    const Tensor a = encode_condition(m, c), b = encode_condition(m, c2);
    const auto lay = condition_layout(cfg);
    CHECK(a.cols() == cfg.cond_dim());
    CHECK(lay.end == cfg.cond_dim());
    for (std::size_t j = 0; j < a.cols(); ++j) {
        const bool in_image = j >= lay.guidance_image && j < lay.guidance_text;
        if (!in_image) CHECK(a[j] == b[j]);
    }
    bool differs = false;
    for (std::size_t j = lay.guidance_image; j < lay.guidance_text; ++j) differs = differs || a[j] != b[j];
    CHECK(differs);

    Condition d1 = sample_condition(rng), d2 = sample_condition(rng);
    d1.drop_text = d2.drop_text = true;
    d2.t = d1.t;
    d1.w_image = d2.w_image = 2.0;
    d1.w_text = d2.w_text = 2.0;
    CHECK(num::bitwise_equal(encode_condition(m, d1), encode_condition(m, d2)));
    const Tensor nul = m.params().value(m.params().at("embed.null_text"));
    const Tensor e1 = encode_condition(m, d1);
    for (std::size_t j = 0; j < cfg.text_dim(); ++j) CHECK(e1[j] == nul[j]);

    Condition bad = c;
    bad.w_text.reset();
    CHECK_THROWS_AS(encode_condition(m, bad), ContractError);
    auto teacher = VelocityModel::init(ModelConfig{}, 3);
    CHECK_THROWS_AS(encode_condition(teacher, c), ContractError);
}

TEST_CASE("forward: batching, null-text collapse, image dropout, shape errors") {
    auto m = VelocityModel::init(ModelConfig{}, 5);
    num::Rng rng(6);
    randomize_output(m, rng);
    Tensor x = random_tensor(2, 8, rng), x0 = random_tensor(2, 8, rng);
    std::vector<Condition> c{sample_condition(rng), sample_condition(rng)};
    Tensor both = forward(m, x, &x0, c);
    for (std::size_t r = 0; r < 2; ++r) {
        Tensor xr = x.row_copy(r).reshaped({1, 8}), x0r = x0.row_copy(r).reshaped({1, 8});
        Tensor single = forward(m, xr, &x0r, std::span<const Condition>(&c[r], 1));
        for (std::size_t j = 0; j < 8; ++j) CHECK(single[j] == both(r, j));
    }

    // Drop text: different instructions, labels and tags collapse bitwise.
    std::vector<Condition> d{sample_condition(rng), sample_condition(rng)};
    d[1].t = d[0].t;
    d[0].drop_text = d[1].drop_text = true;
    Tensor same_x = Tensor::zeros(2, 8), same_x0 = Tensor::zeros(2, 8);
    for (std::size_t j = 0; j < 8; ++j) same_x(0, j) = same_x(1, j) = x(0, j), same_x0(0, j) = same_x0(1, j) = x0(0, j);
    Tensor vd = forward(m, same_x, &same_x0, d);
    for (std::size_t j = 0; j < 8; ++j) CHECK(vd(0, j) == vd(1, j));

    // Drop image equals an absent x0.
    std::vector<Condition> di = c;
    di[0].drop_image = di[1].drop_image = true;
    CHECK(num::bitwise_equal(forward(m, x, &x0, di), forward(m, x, nullptr, c)));

    Tensor wrong = random_tensor(2, 12, rng);
    CHECK_THROWS_AS(forward(m, wrong, nullptr, c), ShapeError);
    Tensor x0_wrong = random_tensor(1, 8, rng);
    CHECK_THROWS_AS(forward(m, x, &x0_wrong, c), ShapeError);
}

TEST_CASE("graph forward matches value forward; gradient of mean output matches finite differences") {
    for (bool guidance : {false, true}) {
        auto m = VelocityModel::init(small_config(guidance), 7);
        num::Rng rng(8);
        randomize_output(m, rng);
        Tensor x = random_tensor(3, 8, rng), x0 = random_tensor(3, 8, rng);
        std::vector<Condition> c{sample_condition(rng), sample_condition(rng), sample_condition(rng)};
        c[1].drop_text = true;
        c[2].drop_image = true;
        if (guidance)
            for (auto& ci : c) ci.w_image = rng.uniform(1, 4), ci.w_text = rng.uniform(1, 6);

        num::Graph g(&m.params());
        auto out = forward(g, m, x, &x0, c);
        CHECK(num::bitwise_equal(g.value(out), forward(m, x, &x0, c)));
        auto loss = g.mean(out);
        auto grads = g.backward(loss).params;

        auto loss_fn = [&](const num::ParamStore& p) {
            VelocityModel probe = VelocityModel::from_params(p);
            return num::mean_all(forward(probe, x, &x0, c)).item();
        };
        num::ParamStore params = m.params();
        auto rep = testing::finite_difference_check(params, grads, loss_fn, rng);
        CHECK(rep.checked > 50);
        CHECK(rep.max_rel_error < 1e-4);
    }
}

TEST_CASE("student initialization reproduces the conditional teacher") {
    auto teacher = VelocityModel::init(ModelConfig{}, 9);
    num::Rng rng(10);
    randomize_output(teacher, rng);
    auto student = teacher.with_guidance(11);
    CHECK(student.has_guidance());
    CHECK(student.config().cond_dim() == teacher.config().cond_dim() + 32);
    Tensor x = random_tensor(2, 8, rng), x0 = random_tensor(2, 8, rng);
    std::vector<Condition> c{sample_condition(rng), sample_condition(rng)};
    std::vector<Condition> cs = c;
    for (auto& ci : cs) ci.w_image = 2.5, ci.w_text = 4.0;
    CHECK(num::max_abs_diff(forward(teacher, x, &x0, c), forward(student, x, &x0, cs)) < 1e-12);
    CHECK_THROWS_AS(student.with_guidance(1), ContractError);
}

TEST_CASE("model survives a checkpoint round trip") {
    ModelConfig cfg = small_config(true);
    cfg.dims = {8, 32};
    auto m = VelocityModel::init(cfg, 12);
    num::round_to_f32(m.params());
    num::CheckpointHeader header;
    header.student = true;
    auto back = VelocityModel::from_params(num::decode_checkpoint(num::encode_checkpoint(m.params(), header)).params);
    CHECK(num::bitwise_equal(back.params(), m.params()));
    CHECK(back.config().dims == cfg.dims);
    CHECK(back.config().width == cfg.width);
    CHECK(back.config().depth == cfg.depth);
    CHECK(back.config().label_dim == cfg.label_dim);
    CHECK(back.config().guidance);
    CHECK(back.config().guidance_dim == cfg.guidance_dim);
    CHECK(forward_macs(m, 8) == 64 * 7 + 2 * 16 * 4 + cfg.input_dim(8) * 16 + 2 * 16 * 16 + 16 * 8);
}
