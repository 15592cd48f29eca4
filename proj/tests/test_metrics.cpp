#include <catch_amalgamated.hpp>

#include <sstream>

#include "sanet/metrics.hpp"

using namespace sanet;
using Catch::Approx;

namespace {

Mask from_bits(int h, int w, std::initializer_list<int> bits) {
    Mask m(h, w);
    auto it = bits.begin();
    for (auto& v : m.data) v = static_cast<std::uint8_t>(*it++);
    return m;
}

}  // namespace

TEST_CASE("binary counts and jaccard/dice on a hand example") {
    Mask pred = from_bits(2, 3, {1, 1, 0, 0, 1, 0});
    Mask gt = from_bits(2, 3, {1, 0, 0, 1, 1, 0});
    BinaryCounts c = binary_counts(pred, gt);
    CHECK(c.intersection == 2);
    CHECK(c.union_ == 4);
    CHECK(c.pred_pos == 3);
    CHECK(c.gt_pos == 3);
    auto [ja, dice] = jaccard_dice(c);
    CHECK(ja == Approx(0.5));
    CHECK(dice == Approx(2.0 * 2 / 6));

    Mask wrong(3, 3);
    CHECK_THROWS_AS(binary_counts(pred, wrong), std::invalid_argument);
}

TEST_CASE("perfect and disjoint masks") {
    Mask a = from_bits(1, 4, {1, 0, 1, 0});
    auto [ja, dice] = jaccard_dice(binary_counts(a, a));
    CHECK(ja == 1.0);
    CHECK(dice == 1.0);

    Mask b = from_bits(1, 4, {0, 1, 0, 1});
    auto [ja2, dice2] = jaccard_dice(binary_counts(a, b));
    CHECK(ja2 == 0.0);
    CHECK(dice2 == 0.0);
}

TEST_CASE("empty union follows the chosen convention") {
    Mask empty(2, 2);
    BinaryCounts c = binary_counts(empty, empty);
    CHECK(jaccard_dice(c, EmptyConvention::one).first == 1.0);
    CHECK(jaccard_dice(c, EmptyConvention::zero).first == 0.0);
}

TEST_CASE("aggregation pools counts before taking ratios") {
    std::array<BinaryCounts, kAttributeCount> img1{}, img2{};
    img1[0] = {9, 10, 9, 10};  // per-image ja 0.9
    img2[0] = {0, 1, 1, 0};    // per-image ja 0.0
    MetricReport r = aggregate({img1, img2});
    // pooled counts give 9/11, not the per-image mean 0.45
    CHECK(r.jaccard[0] == Approx(9.0 / 11.0));
}

TEST_CASE("macro, micro and challenge averages") {
    std::array<BinaryCounts, kAttributeCount> img{};
    img[0] = {1, 2, 1, 2};   // ja 0.5
    img[1] = {1, 4, 2, 3};   // ja 0.25
    img[2] = {0, 0, 0, 0};   // empty -> 1.0 under the default convention
    img[3] = {3, 4, 3, 4};   // ja 0.75
    img[4] = {0, 5, 5, 0};   // ja 0
    MetricReport r = aggregate({img});
    CHECK(r.macro_jaccard == Approx((0.5 + 0.25 + 1.0 + 0.75 + 0.0) / 5));
    BinaryCounts micro{5, 15, 11, 9};
    CHECK(r.micro_jaccard == Approx(5.0 / 15.0));
    CHECK(r.challenge_avg_jaccard ==
          Approx((0.5 + 0.25 + 1.0 + 0.75 + 0.0 + 5.0 / 15.0) / 6));
}

TEST_CASE("published per-class rows reduce to the expected macro mean") {
    std::array<double, kAttributeCount> row{57.6, 34.6, 25.1, 28.6, 24.8};
    CHECK(macro_average(row) == Approx(34.14).margin(0.005));
}

TEST_CASE("csv writer emits percentages with two decimals") {
    std::array<BinaryCounts, kAttributeCount> img{};
    for (int k = 0; k < kAttributeCount; ++k) img[k] = {1, 2, 1, 2};
    std::ostringstream out;
    write_metrics_csv(aggregate({img}), out);
    std::string csv = out.str();
    CHECK(csv.find("class,jaccard,dice") == 0);
    CHECK(csv.find("pigment_network,50.00,66.67") != std::string::npos);
    CHECK(csv.find("macro,50.00,66.67") != std::string::npos);
    CHECK(csv.find("micro,50.00,66.67") != std::string::npos);
    CHECK(csv.find("challenge_avg,50.00,") != std::string::npos);
}

TEST_CASE("aggregate requires at least one image") {
    CHECK_THROWS_AS(aggregate({}), std::invalid_argument);
}
