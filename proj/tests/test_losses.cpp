#include <catch_amalgamated.hpp>

#include "sanet/losses.hpp"
#include "sanet/random.hpp"

using namespace sanet;
using Catch::Approx;

namespace {

SuperpixelTargets random_targets(int regions, std::uint64_t seed, double pos_rate = 0.4) {
    Rng rng(seed);
    SuperpixelTargets t(regions);
    for (auto& p : t.p) p = uniform(rng, 0.05, 0.95);
    for (auto& q : t.q) q = uniform(rng, 0, 1) < pos_rate ? 1 : 0;
    return t;
}

}  // namespace

TEST_CASE("jal: perfect binary prediction sits near one half") {
    std::vector<double> p{1, 0, 1, 1, 0, 0};
    std::vector<std::uint8_t> q{1, 0, 1, 1, 0, 0};
    LossValue v = jal(p, q, 1e-6);
    // num = 3 + eps, den = 6 + eps: the squared denominator keeps a floor of 1/2
    CHECK(v.value == Approx(0.5).margin(1e-6));
}

TEST_CASE("jal: all-wrong prediction approaches one") {
    std::vector<double> p{1, 1, 1};
    std::vector<std::uint8_t> q{0, 0, 0};
    LossValue v = jal(p, q, 1e-6);
    CHECK(v.value == Approx(1.0).margin(1e-5));
}

TEST_CASE("jal: hand-computed value and gradient") {
    std::vector<double> p{0.5};
    std::vector<std::uint8_t> q{1};
    const double eps = 1e-6;
    LossValue v = jal(p, q, eps);
    double num = eps + 0.5, den = eps + 0.25 + 1.0;
    CHECK(v.value == Approx(1.0 - num / den));
    CHECK(v.grad[0] == Approx((2 * 0.5 * num - 1.0 * den) / (den * den)));
}

TEST_CASE("jal gradient matches finite differences") {
    SuperpixelTargets t = random_targets(8, 17);
    LossValue v = jal(t.p, t.q, 1e-6);
    const double h = 1e-6;
    for (std::size_t i = 0; i < t.p.size(); ++i) {
        double saved = t.p[i];
        t.p[i] = saved + h;
        double up = jal(t.p, t.q, 1e-6).value;
        t.p[i] = saved - h;
        double down = jal(t.p, t.q, 1e-6).value;
        t.p[i] = saved;
        CHECK(v.grad[i] == Approx((up - down) / (2 * h)).margin(1e-6));
    }
}

TEST_CASE("macro averages per-class values, micro pools all terms") {
    SuperpixelTargets t = random_targets(10, 23);
    LossValue macro = jal_macro(t, 1e-6);
    double sum = 0;
    for (int k = 0; k < kAttributeCount; ++k) {
        std::vector<double> pc;
        std::vector<std::uint8_t> qc;
        for (int i = 0; i < t.region_count; ++i) {
            pc.push_back(t.p[static_cast<std::size_t>(i) * kAttributeCount + k]);
            qc.push_back(t.q[static_cast<std::size_t>(i) * kAttributeCount + k]);
        }
        sum += jal(pc, qc, 1e-6).value;
    }
    CHECK(macro.value == Approx(sum / kAttributeCount));

    LossValue micro = jal_micro(t, 1e-6);
    CHECK(micro.value == Approx(jal(t.p, t.q, 1e-6).value));

    LossConfig cfg;
    LossValue combined = gbjal(t, cfg);
    CHECK(combined.value == Approx(0.5 * micro.value + 0.5 * macro.value));
}

TEST_CASE("focal frozen values") {
    CHECK(focal(0.9, 2.0) == Approx(0.0010536052).epsilon(1e-6));
    CHECK(focal(0.5, 0.0) == Approx(std::log(2.0)));
    CHECK(focal(1.0, 2.0) == 0.0);
    // gamma = 0 reduces to plain cross entropy
    for (double p : {0.1, 0.35, 0.8}) CHECK(focal(p, 0.0) == Approx(-std::log(p)));
    // larger gamma suppresses easy examples
    CHECK(focal(0.9, 2.0) < focal(0.9, 0.5));
    CHECK(focal(0.9, 0.5) < focal(0.9, 0.0));
}

TEST_CASE("gbcel pointwise frozen value below the truncation boundary") {
    LossConfig cfg;
    cfg.gamma = 0.0;
    cfg.theta = 0.2;
    auto [value, grad] = gbcel_pointwise(0.1, cfg);
    CHECK(value == Approx(1.984438).epsilon(1e-6));
    CHECK(grad == Approx(-0.1 / 0.04));
}

TEST_CASE("gbcel pointwise is continuous at theta and flat at zero") {
    for (double gamma : {0.0, 0.5, 1.0, 2.0}) {
        LossConfig cfg;
        cfg.gamma = gamma;
        cfg.theta = 0.2;
        auto below = gbcel_pointwise(0.2 - 1e-9, cfg);
        auto above = gbcel_pointwise(0.2 + 1e-9, cfg);
        CHECK(below.first == Approx(above.first).margin(1e-6));
        // plateau: bounded gradient near zero instead of the CE blowup
        auto near_zero = gbcel_pointwise(1e-6, cfg);
        CHECK(std::abs(near_zero.second) < 1.0);
    }
    // without truncation the gradient does blow up near zero
    LossConfig plain;
    plain.gamma = 0.0;
    plain.theta = 0.0;
    CHECK(std::abs(gbcel_pointwise(1e-6, plain).second) > 1e5);
}

TEST_CASE("gbcel with theta=0 gamma=0 equals mean cross entropy") {
    SuperpixelTargets t = random_targets(6, 31);
    LossConfig cfg;
    cfg.gamma = 0.0;
    cfg.theta = 0.0;
    LossValue v = gbcel(t, cfg);
    double expect = 0;
    for (std::size_t i = 0; i < t.terms(); ++i) {
        double p_t = t.q[i] ? t.p[i] : 1.0 - t.p[i];
        expect += -std::log(p_t) / static_cast<double>(t.terms());
    }
    CHECK(v.value == Approx(expect));
}

TEST_CASE("class weights scale gbcel terms") {
    SuperpixelTargets t = random_targets(6, 37);
    LossConfig cfg;
    cfg.gamma = 1.0;
    cfg.theta = 0.2;
    LossValue base = gbcel(t, cfg);
    cfg.class_weights = {2, 2, 2, 2, 2};
    LossValue doubled = gbcel(t, cfg);
    CHECK(doubled.value == Approx(2.0 * base.value));
}

TEST_CASE("total loss is the advertised half-half blend") {
    SuperpixelTargets t = random_targets(9, 41);
    LossConfig cfg;
    cfg.gamma = 2.0;
    cfg.theta = 0.2;
    TotalLossValue v = total_loss(t, cfg);
    CHECK(v.value == Approx(0.5 * v.gbcel_part + 0.5 * v.gbjal_part));
    CHECK(v.gbcel_part == Approx(gbcel(t, cfg).value));
    CHECK(v.gbjal_part == Approx(gbjal(t, cfg).value));
}

TEST_CASE("total loss gradient matches finite differences") {
    SuperpixelTargets t = random_targets(5, 43);
    // stay away from the truncation seam for two-sided differences
    for (auto& p : t.p)
        for (double b : {0.2, 0.8})
            if (std::abs(p - b) < 0.01) p = b + 0.02;
    LossConfig cfg;
    cfg.gamma = 1.0;
    cfg.theta = 0.2;
    TotalLossValue v = total_loss(t, cfg);
    const double h = 1e-6;
    for (std::size_t i = 0; i < t.p.size(); ++i) {
        double saved = t.p[i];
        t.p[i] = saved + h;
        double up = total_loss(t, cfg).value;
        t.p[i] = saved - h;
        double down = total_loss(t, cfg).value;
        t.p[i] = saved;
        CHECK(v.grad[i] == Approx((up - down) / (2 * h)).margin(1e-5));
    }
}

TEST_CASE("baseline blend equals half CE plus half macro jaccard") {
    SuperpixelTargets t = random_targets(7, 47);
    LossConfig cfg;
    LossValue v = baseline_ce_jal(t, cfg);
    double ce = 0;
    for (std::size_t i = 0; i < t.terms(); ++i) {
        double p_t = t.q[i] ? t.p[i] : 1.0 - t.p[i];
        ce += -std::log(p_t) / static_cast<double>(t.terms());
    }
    CHECK(v.value == Approx(0.5 * ce + 0.5 * jal_macro(t, 1e-6).value));
}

TEST_CASE("total_loss_op matches the plain function and backpropagates its gradient") {
    SuperpixelTargets t = random_targets(6, 53);
    LossConfig cfg;
    cfg.gamma = 1.0;
    cfg.theta = 0.2;
    TotalLossValue expect = total_loss(t, cfg);

    Tensor<double> pt({1, kAttributeCount, t.region_count, 1});
    for (int i = 0; i < t.region_count; ++i)
        for (int k = 0; k < kAttributeCount; ++k) pt.at(0, k, i, 0) = t.prob(i, k);
    auto probs = make_var(pt, true);
    Tape<double> tape;
    TotalLossValue detail;
    auto loss = total_loss_op(&tape, probs, t.q, cfg, &detail);
    CHECK(loss->value.data[0] == Approx(expect.value));
    CHECK(detail.gbcel_part == Approx(expect.gbcel_part));
    tape.backward(loss);
    for (int i = 0; i < t.region_count; ++i)
        for (int k = 0; k < kAttributeCount; ++k)
            CHECK(probs->grad.at(0, k, i, 0) ==
                  Approx(expect.grad[static_cast<std::size_t>(i) * kAttributeCount + k]));
}

TEST_CASE("config validation rejects out-of-range settings") {
    LossConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.gamma = -0.5;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = LossConfig{};
    cfg.theta = 1.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = LossConfig{};
    cfg.class_weights[2] = 0.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}
