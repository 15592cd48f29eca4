#include <catch_amalgamated.hpp>

#include <set>

#include "sanet/rsm.hpp"

using namespace sanet;

namespace {

Sample checker_sample(int side, int regions_per_side, std::uint64_t seed) {
    Sample s;
    s.id = "s" + std::to_string(seed);
    s.image = ImageU8(side, side, 3);
    Rng rng(seed);
    for (auto& v : s.image.data) v = static_cast<std::uint8_t>(uniform(rng, 0, 256));
    for (int k = 0; k < kAttributeCount; ++k) {
        Mask m(side, side);
        for (auto& v : m.data) v = uniform(rng, 0, 1) < 0.2 ? 1 : 0;
        s.masks.push_back(m);
    }
    s.map = SuperpixelMap(side, side, regions_per_side * regions_per_side);
    int block = side / regions_per_side;
    for (int y = 0; y < side; ++y)
        for (int x = 0; x < side; ++x)
            s.map.at(y, x) = (y / block) * regions_per_side + (x / block);
    return s;
}

}  // namespace

TEST_CASE("shuffle plan is a bijection with bounded displacement") {
    for (std::uint64_t seed : {0ull, 1ull, 17ull, 123456ull}) {
        ShufflePlan plan = make_shuffle_plan(7, 2, seed);
        std::set<int> dests(plan.dest.begin(), plan.dest.end());
        CHECK(dests.size() == 49);
        for (int r = 0; r < 7; ++r)
            for (int c = 0; c < 7; ++c) {
                int d = plan.dest_of(r, c);
                int dr = d / 7, dc = d % 7;
                CHECK(std::abs(dr - r) < 4);  // strictly below 2k
                CHECK(std::abs(dc - c) < 4);
            }
    }
}

TEST_CASE("zero neighborhood is the identity permutation") {
    ShufflePlan plan = make_shuffle_plan(7, 0, 99);
    for (int s = 0; s < 49; ++s) CHECK(plan.dest[s] == s);
}

TEST_CASE("plans are deterministic in the seed and vary across seeds") {
    ShufflePlan a = make_shuffle_plan(7, 2, 5);
    ShufflePlan b = make_shuffle_plan(7, 2, 5);
    CHECK(a.dest == b.dest);
    int distinct = 0;
    for (std::uint64_t s = 0; s < 20; ++s)
        if (make_shuffle_plan(7, 2, s).dest != a.dest) ++distinct;
    CHECK(distinct >= 15);
}

TEST_CASE("invert_plan composes to the identity") {
    ShufflePlan plan = make_shuffle_plan(7, 2, 42);
    ShufflePlan inv = invert_plan(plan);
    for (int s = 0; s < 49; ++s) CHECK(inv.dest[plan.dest[s]] == s);
}

TEST_CASE("shuffling an image moves whole blocks and keeps every pixel") {
    Sample s = checker_sample(28, 4, 7);
    ShufflePlan plan = make_shuffle_plan(7, 2, 3);
    ImageU8 out = shuffle_image(s.image, plan);

    // each destination 4x4 block matches the source block verbatim
    for (int r = 0; r < 7; ++r)
        for (int c = 0; c < 7; ++c) {
            int d = plan.dest_of(r, c);
            int dr = d / 7, dc = d % 7;
            for (int y = 0; y < 4; ++y)
                for (int x = 0; x < 4; ++x)
                    for (int ch = 0; ch < 3; ++ch)
                        CHECK(out.at(dr * 4 + y, dc * 4 + x, ch) ==
                              s.image.at(r * 4 + y, c * 4 + x, ch));
        }

    // inverse shuffle restores the original
    ImageU8 restored = shuffle_image(out, invert_plan(plan));
    CHECK(restored.data == s.image.data);
}

TEST_CASE("masks and labels ride along with the image") {
    Sample s = checker_sample(28, 4, 11);
    ShufflePlan plan = make_shuffle_plan(7, 2, 13);
    Sample out = apply_shuffle(s, plan);
    REQUIRE(out.masks.size() == s.masks.size());
    for (std::size_t k = 0; k < s.masks.size(); ++k)
        CHECK(out.masks[k].foreground_count() == s.masks[k].foreground_count());
    CHECK(out.id == s.id);
    auto violations = validate_map(out.map, true);
    for (const auto& v : violations) INFO(v);
    CHECK(violations.empty());
    CHECK(out.map.labels.size() == s.map.labels.size());
}

TEST_CASE("shuffled map stays aligned with the shuffled mask") {
    Sample s = checker_sample(28, 4, 19);
    ShufflePlan plan = make_shuffle_plan(7, 2, 23);
    Sample out = apply_shuffle(s, plan);
    // pixel-level agreement: a pixel pair in the same source block keeps its
    // relative mask/map relationship after the move
    ImageU8 tag(28, 28, 1);
    for (int y = 0; y < 28; ++y)
        for (int x = 0; x < 28; ++x) tag.at(y, x) = static_cast<std::uint8_t>(s.masks[0].at(y, x));
    Mask moved = shuffle_mask(s.masks[0], plan);
    CHECK(moved.data == out.masks[0].data);
}

TEST_CASE("indivisible extents are rejected") {
    ImageU8 img(30, 28, 3);
    ShufflePlan plan = make_shuffle_plan(7, 2, 1);
    CHECK_THROWS_AS(shuffle_image(img, plan), std::invalid_argument);
}

TEST_CASE("mix_batch replaces exactly floor(B/2) samples") {
    for (std::size_t B : {1u, 4u, 5u}) {
        std::vector<Sample> batch;
        for (std::size_t i = 0; i < B; ++i) batch.push_back(checker_sample(28, 4, 100 + i));
        std::vector<Sample> mixed = mix_batch(batch, 31);
        REQUIRE(mixed.size() == B);
        std::size_t changed = 0;
        for (std::size_t i = 0; i < B; ++i)
            if (mixed[i].image.data != batch[i].image.data) ++changed;
        CHECK(changed == B / 2);
        // deterministic in the seed
        std::vector<Sample> again = mix_batch(batch, 31);
        for (std::size_t i = 0; i < B; ++i) CHECK(again[i].image.data == mixed[i].image.data);
    }
    CHECK_THROWS_AS(mix_batch({}, 1), std::invalid_argument);
}

TEST_CASE("invalid plan parameters are rejected") {
    CHECK_THROWS_AS(make_shuffle_plan(0, 2, 1), std::invalid_argument);
    CHECK_THROWS_AS(make_shuffle_plan(7, -1, 1), std::invalid_argument);
}
