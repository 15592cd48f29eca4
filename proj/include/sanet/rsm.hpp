#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "sanet/random.hpp"
#include "sanet/sample.hpp"

namespace sanet {

/// Neighborhood-constrained permutation of a G x G cell grid.
struct ShufflePlan {
    int grid = 7;
    int neighborhood = 2;
    std::uint64_t seed = 0;
    // destination cell of source cell (r, c), flattened r * grid + c
    std::vector<int> dest;

    int dest_of(int r, int c) const { return dest[r * grid + c]; }
};

/// Jittered-sort shuffle: within each row, column j gets sort key j + U(-k, k)
/// and columns reorder by ascending key; then the same within each column.
/// Both passes keep displacements below 2k per axis.
inline ShufflePlan make_shuffle_plan(int grid, int neighborhood, std::uint64_t seed) {
    if (grid < 1) throw std::invalid_argument("make_shuffle_plan: grid must be >= 1");
    if (neighborhood < 0) throw std::invalid_argument("make_shuffle_plan: neighborhood must be >= 0");
    ShufflePlan plan{grid, neighborhood, seed, std::vector<int>(grid * grid)};
    Rng rng(seed);
    const double k = neighborhood;

    auto jitter_order = [&](std::vector<double>& keys) {
        std::vector<int> order(keys.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](int a, int b) { return keys[a] < keys[b]; });
        // order[newpos] = oldpos; invert to newpos_of[oldpos]
        std::vector<int> newpos(keys.size());
        for (std::size_t p = 0; p < order.size(); ++p) newpos[order[p]] = static_cast<int>(p);
        return newpos;
    };

    // pass 1: columns within each row, keys drawn in row-major order
    std::vector<std::vector<int>> newcol(grid);
    for (int r = 0; r < grid; ++r) {
        std::vector<double> keys(grid);
        for (int j = 0; j < grid; ++j) keys[j] = j + uniform(rng, -k, k);
        newcol[r] = jitter_order(keys);
    }
    // pass 2: rows within each destination column
    std::vector<std::vector<int>> newrow(grid);
    for (int c = 0; c < grid; ++c) {
        std::vector<double> keys(grid);
        for (int i = 0; i < grid; ++i) keys[i] = i + uniform(rng, -k, k);
        newrow[c] = jitter_order(keys);
    }

    for (int r = 0; r < grid; ++r)
        for (int c = 0; c < grid; ++c) {
            int dc = newcol[r][c];
            int dr = newrow[dc][r];
            plan.dest[r * grid + c] = dr * grid + dc;
        }
    return plan;
}

inline ShufflePlan invert_plan(const ShufflePlan& plan) {
    ShufflePlan inv = plan;
    for (int s = 0; s < plan.grid * plan.grid; ++s) inv.dest[plan.dest[s]] = s;
    return inv;
}

namespace detail {

template <typename Grid>
void check_divisible(const Grid& g, int grid) {
    if (g.height % grid != 0 || g.width % grid != 0)
        throw std::invalid_argument("apply_shuffle: extents " + std::to_string(g.height) + "x" +
                                    std::to_string(g.width) + " not divisible by grid " +
                                    std::to_string(grid));
}

// moves whole (H/G) x (W/G) blocks
template <typename CopyCell>
void shuffle_blocks(int height, int width, const ShufflePlan& plan, CopyCell&& copy_cell) {
    const int bh = height / plan.grid, bw = width / plan.grid;
    for (int r = 0; r < plan.grid; ++r)
        for (int c = 0; c < plan.grid; ++c) {
            int d = plan.dest_of(r, c);
            int dr = d / plan.grid, dc = d % plan.grid;
            copy_cell(r * bh, c * bw, dr * bh, dc * bw, bh, bw);
        }
}

}  // namespace detail

inline ImageU8 shuffle_image(const ImageU8& img, const ShufflePlan& plan) {
    detail::check_divisible(img, plan.grid);
    ImageU8 out(img.height, img.width, img.channels);
    detail::shuffle_blocks(img.height, img.width, plan,
                                    [&](int sy, int sx, int dy, int dx, int bh, int bw) {
                                        for (int y = 0; y < bh; ++y)
                                            for (int x = 0; x < bw; ++x)
                                                for (int ch = 0; ch < img.channels; ++ch)
                                                    out.at(dy + y, dx + x, ch) = img.at(sy + y, sx + x, ch);
                                    });
    return out;
}

inline Mask shuffle_mask(const Mask& mask, const ShufflePlan& plan) {
    detail::check_divisible(mask, plan.grid);
    Mask out(mask.height, mask.width);
    detail::shuffle_blocks(mask.height, mask.width, plan,
                                 [&](int sy, int sx, int dy, int dx, int bh, int bw) {
                                     for (int y = 0; y < bh; ++y)
                                         for (int x = 0; x < bw; ++x)
                                             out.at(dy + y, dx + x) = mask.at(sy + y, sx + x);
                                 });
    return out;
}

/// Permutes the label grid, then recompacts so the result is contiguous
/// 0..K'-1; regions split along grid lines become distinct regions.
inline SuperpixelMap shuffle_map(const SuperpixelMap& map, const ShufflePlan& plan) {
    detail::check_divisible(map, plan.grid);
    SuperpixelMap out(map.height, map.width, map.region_count);
    detail::shuffle_blocks(map.height, map.width, plan,
                                          [&](int sy, int sx, int dy, int dx, int bh, int bw) {
                                              for (int y = 0; y < bh; ++y)
                                                  for (int x = 0; x < bw; ++x)
                                                      out.at(dy + y, dx + x) = map.at(sy + y, sx + x);
                                          });
    relabel_connected_components(out);
    return out;
}

inline Sample apply_shuffle(const Sample& sample, const ShufflePlan& plan) {
    Sample out;
    out.id = sample.id;
    out.image = shuffle_image(sample.image, plan);
    out.masks.reserve(sample.masks.size());
    for (const Mask& m : sample.masks) out.masks.push_back(shuffle_mask(m, plan));
    out.map = shuffle_map(sample.map, plan);
    return out;
}

/// Replaces floor(B/2) samples, chosen uniformly without replacement, by their
/// shuffled versions (fresh plan per sample).
inline std::vector<Sample> mix_batch(std::vector<Sample> batch, std::uint64_t seed, int grid = 7,
                                     int neighborhood = 2) {
    if (batch.empty()) throw std::invalid_argument("mix_batch: batch must be non-empty");
    const std::size_t B = batch.size();
    std::vector<std::size_t> indices(B);
    std::iota(indices.begin(), indices.end(), 0);
    Rng rng(mix_seed(seed, 0));
    std::shuffle(indices.begin(), indices.end(), rng);
    for (std::size_t i = 0; i < B / 2; ++i) {
        std::size_t s = indices[i];
        ShufflePlan plan = make_shuffle_plan(grid, neighborhood, mix_seed(seed, s + 1));
        batch[s] = apply_shuffle(batch[s], plan);
    }
    return batch;
}

}  // namespace sanet
