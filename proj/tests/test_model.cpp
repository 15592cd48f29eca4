#include <catch_amalgamated.hpp>

#include <cstdio>

#include "sanet/model.hpp"
#include "sanet/random.hpp"

using namespace sanet;
using Catch::Approx;

namespace {

SuperpixelMap quadrant_map(int side) {
    SuperpixelMap map(side, side, 4);
    for (int y = 0; y < side; ++y)
        for (int x = 0; x < side; ++x) map.at(y, x) = (y / (side / 2)) * 2 + (x / (side / 2));
    return map;
}

Tensor<double> random_image(int side, std::uint64_t seed) {
    Rng rng(seed);
    Tensor<double> img({1, 3, side, side});
    for (auto& v : img.data) v = uniform(rng, 0, 1);
    return img;
}

ModelConfig small_config() {
    ModelConfig cfg;
    cfg.height = cfg.width = 28;
    cfg.base_channels = 4;
    cfg.seed = 5;
    return cfg;
}

}  // namespace

TEST_CASE("superpixel ground truth uses majority coverage with >= half tie-break") {
    SuperpixelMap map = quadrant_map(4);
    std::vector<Mask> masks(kAttributeCount, Mask(4, 4));
    // class 0: fully cover region 0, half cover region 1, quarter cover region 2
    masks[0].at(0, 0) = masks[0].at(0, 1) = masks[0].at(1, 0) = masks[0].at(1, 1) = 1;  // region 0
    masks[0].at(0, 2) = masks[0].at(0, 3) = 1;                                           // region 1
    masks[0].at(2, 0) = 1;                                                               // region 2
    auto q = superpixel_ground_truth(masks, map);
    REQUIRE(q.size() == 4 * kAttributeCount);
    CHECK(q[0 * kAttributeCount + 0] == 1);  // full
    CHECK(q[1 * kAttributeCount + 0] == 1);  // exactly half: positive
    CHECK(q[2 * kAttributeCount + 0] == 0);  // quarter
    CHECK(q[3 * kAttributeCount + 0] == 0);
    for (int i = 0; i < 4; ++i)
        for (int k = 1; k < kAttributeCount; ++k) CHECK(q[i * kAttributeCount + k] == 0);

    Mask wrong(3, 3);
    CHECK_THROWS_AS(superpixel_ground_truth({masks[0], wrong, masks[2], masks[3], masks[4]}, map),
                    std::invalid_argument);
}

TEST_CASE("sam with identity weight and flat features is the doubling map") {
    // constant features: pooling returns the same constant, unpool + add doubles it
    SuperpixelMap map = quadrant_map(8);
    auto f = make_var(Tensor<double>({1, 2, 8, 8}, 1.5), false);
    Tensor<double> wt({2, 2, 1, 1});
    wt.at(0, 0, 0, 0) = 1.0;
    wt.at(1, 1, 0, 0) = 1.0;
    auto w = make_var(wt);
    auto b = make_var(Tensor<double>({1, 2, 1, 1}));
    auto out = sam_forward<double>(nullptr, f, map, w, b);
    for (double v : out->value.data) CHECK(v == Approx(3.0));
}

TEST_CASE("sam output is shaped like its input in the additive variant") {
    Rng rng(3);
    SuperpixelMap map = quadrant_map(8);
    Tensor<double> ft({1, 3, 8, 8});
    for (auto& v : ft.data) v = normal(rng, 0, 1);
    auto f = make_var(ft);
    Tensor<double> wt({3, 3, 1, 1});
    for (auto& v : wt.data) v = normal(rng, 0, 1);
    auto out = sam_forward<double>(nullptr, f, map, make_var(wt), make_var(Tensor<double>({1, 3, 1, 1})));
    CHECK(out->value.shape == ft.shape);

    // concat variant needs a (C, 2C, 1, 1) weight
    Tensor<double> wc({3, 6, 1, 1});
    for (auto& v : wc.data) v = normal(rng, 0, 1);
    auto out2 = sam_forward<double>(nullptr, f, map, make_var(wc),
                                    make_var(Tensor<double>({1, 3, 1, 1})), true);
    CHECK(out2->value.shape == ft.shape);
}

TEST_CASE("forward produces probabilities and region-constant paintings") {
    ModelConfig cfg = small_config();
    ToySanet<double> model(cfg);
    SuperpixelMap map = quadrant_map(28);
    Tensor<double> img = random_image(28, 9);
    SanetOutput<double> out = model.forward(nullptr, img, map, Mode::train);

    REQUIRE(out.sp_probs->value.shape == Shape4{1, kAttributeCount, 4, 1});
    for (double v : out.sp_probs->value.data) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    REQUIRE(out.pixel_probs.size() == kAttributeCount);
    for (int k = 0; k < kAttributeCount; ++k)
        for (int y = 0; y < 28; ++y)
            for (int x = 0; x < 28; ++x)
                CHECK(out.pixel_probs[k].at(0, 0, y, x) ==
                      Approx(out.sp_probs->value.at(0, k, map.at(y, x), 0)));
}

TEST_CASE("forward is deterministic and rejects mismatched inputs") {
    ModelConfig cfg = small_config();
    ToySanet<double> model(cfg);
    SuperpixelMap map = quadrant_map(28);
    Tensor<double> img = random_image(28, 13);
    auto a = model.forward(nullptr, img, map, Mode::train);
    auto b = model.forward(nullptr, img, map, Mode::train);
    CHECK(a.sp_probs->value.data == b.sp_probs->value.data);

    Tensor<double> wrong({1, 3, 27, 28});
    CHECK_THROWS_AS(model.forward(nullptr, wrong, map, Mode::train), std::invalid_argument);
    SuperpixelMap wrong_map = quadrant_map(32);
    CHECK_THROWS_AS(model.forward(nullptr, img, wrong_map, Mode::train), std::invalid_argument);
}

TEST_CASE("parameter registry has unique names and marks non-decayed groups") {
    ToySanet<double> model(small_config());
    std::set<std::string> names;
    for (const auto& p : model.parameters()) {
        CHECK(names.insert(p.name).second);
        bool is_bias = p.name.ends_with(".b");
        bool is_bn = p.name.find(".bn") != std::string::npos || p.name.ends_with(".scale") ||
                     p.name.ends_with(".shift");
        CHECK(p.no_decay == (is_bias || is_bn));
    }
    CHECK(model.find_parameter("stem.w") != nullptr);
    CHECK(model.find_parameter("head.b") != nullptr);
    CHECK(model.find_parameter("nope") == nullptr);
}

TEST_CASE("gradients reach every parameter") {
    ModelConfig cfg = small_config();
    ToySanet<double> model(cfg);
    SuperpixelMap map = quadrant_map(28);
    Tensor<double> img = random_image(28, 17);
    std::vector<std::uint8_t> q(4 * kAttributeCount, 0);
    for (std::size_t i = 0; i < q.size(); i += 3) q[i] = 1;
    LossConfig loss_cfg;
    loss_cfg.gamma = 1.0;
    loss_cfg.theta = 0.2;

    model.zero_grad();
    Tape<double> tape;
    auto out = model.forward(&tape, img, map, Mode::train);
    auto loss = total_loss_op(&tape, out.sp_probs, q, loss_cfg);
    tape.backward(loss);

    for (const auto& p : model.parameters()) {
        REQUIRE_FALSE(p.value->grad.empty());
        double norm = 0;
        for (double g : p.value->grad.data) norm += g * g;
        INFO(p.name);
        CHECK(norm > 0.0);
    }
}

TEST_CASE("checkpoint round trip restores values and moments exactly") {
    ModelConfig cfg = small_config();
    ToySanet<double> model(cfg);
    Rng rng(23);
    for (auto& p : model.parameters()) {
        for (auto& v : p.m1.data) v = normal(rng, 0, 1);
        for (auto& v : p.m2.data) v = uniform(rng, 0, 1);
    }
    const std::string path = "model_roundtrip.sanc";
    model.save_checkpoint(path);

    ToySanet<double> other(cfg);
    bool differed = false;
    for (std::size_t i = 0; i < model.parameters().size(); ++i)
        if (other.parameters()[i].value->value.data != model.parameters()[i].value->value.data)
            differed = true;
    // same seed, so freshly built weights match; perturb to prove the load works
    for (auto& p : other.parameters())
        for (auto& v : p.value->value.data) v += 1.0;
    (void)differed;

    other.load_checkpoint(path);
    for (std::size_t i = 0; i < model.parameters().size(); ++i) {
        const auto& a = model.parameters()[i];
        const auto& b = other.parameters()[i];
        CHECK(a.value->value.data == b.value->value.data);
        CHECK(a.m1.data == b.m1.data);
        CHECK(a.m2.data == b.m2.data);
    }
    std::remove(path.c_str());
}

TEST_CASE("checkpoint loader rejects corruption and dtype mismatch") {
    ModelConfig cfg = small_config();
    ToySanet<double> model(cfg);
    const std::string path = "model_bad.sanc";
    model.save_checkpoint(path);
    {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(0);
        f.write("NOPE", 4);
    }
    CHECK_THROWS_AS(model.load_checkpoint(path), FormatError);

    model.save_checkpoint(path);
    ToySanet<float> narrow(cfg);
    CHECK_THROWS_AS(narrow.load_checkpoint(path), FormatError);
    std::remove(path.c_str());
}

TEST_CASE("config validation") {
    ModelConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.height = 30;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = ModelConfig{};
    cfg.base_channels = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}
