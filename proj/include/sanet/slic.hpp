#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "sanet/image.hpp"
#include "sanet/superpixel.hpp"

namespace sanet {

/// sRGB (D65) -> CIELAB.
inline std::array<double, 3> rgb_to_lab(std::uint8_t r8, std::uint8_t g8, std::uint8_t b8) {
    auto linearize = [](double c) {
        return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
    };
    double r = linearize(r8 / 255.0), g = linearize(g8 / 255.0), b = linearize(b8 / 255.0);

    double x = 0.4124564 * r + 0.3575761 * g + 0.1804375 * b;
    double y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
    double z = 0.0193339 * r + 0.1191920 * g + 0.9503041 * b;

    // D65 reference white
    x /= 0.95047;
    z /= 1.08883;

    auto f = [](double t) {
        return t > 0.008856 ? std::cbrt(t) : 7.787 * t + 16.0 / 116.0;
    };
    double fx = f(x), fy = f(y), fz = f(z);
    return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

namespace detail {

struct SlicCenter {
    double l, a, b, x, y;
};

inline void merge_small_fragments(SuperpixelMap& map, std::size_t min_size) {
    const int H = map.height, W = map.width;
    std::vector<std::size_t> sizes = map.region_sizes();
    std::vector<std::vector<std::size_t>> pixels(map.region_count);
    for (std::size_t i = 0; i < map.labels.size(); ++i) pixels[map.labels[i]].push_back(i);

    for (int comp = 0; comp < map.region_count; ++comp) {
        if (sizes[comp] == 0 || sizes[comp] >= min_size) continue;
        // largest 4-connected adjacent region
        std::vector<std::size_t> neighbor_size(map.region_count, 0);
        for (std::size_t idx : pixels[comp]) {
            int y = static_cast<int>(idx) / W, x = static_cast<int>(idx) % W;
            const int dy[4] = {-1, 1, 0, 0}, dx[4] = {0, 0, -1, 1};
            for (int d = 0; d < 4; ++d) {
                int ny = y + dy[d], nx = x + dx[d];
                if (ny < 0 || ny >= H || nx < 0 || nx >= W) continue;
                std::int32_t nl = map.at(ny, nx);
                if (nl != comp) neighbor_size[nl] = sizes[nl];
            }
        }
        int best = -1;
        for (int k = 0; k < map.region_count; ++k)
            if (neighbor_size[k] > 0 && (best < 0 || neighbor_size[k] > neighbor_size[best]))
                best = k;
        if (best < 0) continue;  // isolated (single-region map)
        for (std::size_t idx : pixels[comp]) map.labels[idx] = best;
        pixels[best].insert(pixels[best].end(), pixels[comp].begin(), pixels[comp].end());
        sizes[best] += sizes[comp];
        sizes[comp] = 0;
        pixels[comp].clear();
    }

    // compact surviving labels
    std::vector<std::int32_t> remap(map.region_count, -1);
    int next = 0;
    for (std::int32_t& l : map.labels) {
        if (remap[l] < 0) remap[l] = next++;
        l = remap[l];
    }
    map.region_count = next;
}

}  // namespace detail

/// SLIC superpixels: localized k-means in CIELAB + xy with distance
/// d = d_color + (m/S) * d_spatial, followed by 4-connectivity enforcement.
inline SuperpixelMap slic_segment(const ImageU8& image, int target_regions, double compactness,
                                  int iterations) {
    if (image.channels != 3) throw std::invalid_argument("slic_segment: RGB image required");
    const int H = image.height, W = image.width;
    const std::size_t pixel_count = static_cast<std::size_t>(H) * W;
    if (target_regions < 1 || static_cast<std::size_t>(target_regions) > pixel_count)
        throw std::invalid_argument("slic_segment: target_regions must be in [1, pixel count]");
    if (compactness <= 0) throw std::invalid_argument("slic_segment: compactness must be positive");

    std::vector<std::array<double, 3>> lab(pixel_count);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
            lab[static_cast<std::size_t>(y) * W + x] =
                rgb_to_lab(image.at(y, x, 0), image.at(y, x, 1), image.at(y, x, 2));

    // grid initialization; actual K = nx * ny may differ from the target
    int nx = std::max(1, static_cast<int>(std::ceil(
                             std::sqrt(static_cast<double>(target_regions) * W / H))));
    nx = std::min(nx, W);
    int ny = std::max(1, static_cast<int>(std::ceil(static_cast<double>(target_regions) / nx)));
    ny = std::min(ny, H);
    const int K = nx * ny;

    SuperpixelMap map(H, W, 1);
    if (K == 1) return map;  // degenerate: single region

    auto gradient = [&](int y, int x) {
        int xl = std::max(0, x - 1), xr = std::min(W - 1, x + 1);
        int yu = std::max(0, y - 1), yd = std::min(H - 1, y + 1);
        const auto &ch = lab[static_cast<std::size_t>(y) * W + xr],
                   &cl = lab[static_cast<std::size_t>(y) * W + xl],
                   &cd = lab[static_cast<std::size_t>(yd) * W + x],
                   &cu = lab[static_cast<std::size_t>(yu) * W + x];
        double g = 0;
        for (int i = 0; i < 3; ++i) {
            double dh = ch[i] - cl[i], dv = cd[i] - cu[i];
            g += dh * dh + dv * dv;
        }
        return g;
    };

    std::vector<detail::SlicCenter> centers;
    centers.reserve(K);
    for (int i = 0; i < ny; ++i) {
        for (int j = 0; j < nx; ++j) {
            int cx = std::min(W - 1, static_cast<int>((j + 0.5) * W / nx));
            int cy = std::min(H - 1, static_cast<int>((i + 0.5) * H / ny));
            // perturb to the lowest-gradient position in the 3x3 neighborhood
            double best_g = gradient(cy, cx);
            int bx = cx, by = cy;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    int y = cy + dy, x = cx + dx;
                    if (y < 0 || y >= H || x < 0 || x >= W) continue;
                    double g = gradient(y, x);
                    if (g < best_g) {
                        best_g = g;
                        by = y;
                        bx = x;
                    }
                }
            const auto& c = lab[static_cast<std::size_t>(by) * W + bx];
            centers.push_back({c[0], c[1], c[2], static_cast<double>(bx), static_cast<double>(by)});
        }
    }

    const double S = std::sqrt(static_cast<double>(pixel_count) / K);
    const double spatial_weight = compactness / S;
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<std::int32_t> assignment(pixel_count, -1);
    std::vector<double> best_dist(pixel_count);

    auto distance = [&](const detail::SlicCenter& c, std::size_t idx, int y, int x) {
        const auto& p = lab[idx];
        double dl = p[0] - c.l, da = p[1] - c.a, db = p[2] - c.b;
        double dxp = x - c.x, dyp = y - c.y;
        return std::sqrt(dl * dl + da * da + db * db) +
               spatial_weight * std::sqrt(dxp * dxp + dyp * dyp);
    };

    for (int iter = 0; iter < iterations; ++iter) {
        std::fill(best_dist.begin(), best_dist.end(), inf);
        std::fill(assignment.begin(), assignment.end(), -1);
        const int window = static_cast<int>(std::ceil(2.0 * S));
        for (int k = 0; k < K; ++k) {
            const auto& c = centers[k];
            int y0 = std::max(0, static_cast<int>(c.y) - window);
            int y1 = std::min(H - 1, static_cast<int>(c.y) + window);
            int x0 = std::max(0, static_cast<int>(c.x) - window);
            int x1 = std::min(W - 1, static_cast<int>(c.x) + window);
            for (int y = y0; y <= y1; ++y)
                for (int x = x0; x <= x1; ++x) {
                    std::size_t idx = static_cast<std::size_t>(y) * W + x;
                    double d = distance(c, idx, y, x);
                    if (d <= best_dist[idx]) {  // ties go to the later center
                        best_dist[idx] = d;
                        assignment[idx] = k;
                    }
                }
        }
        // pixels outside every search window: nearest center, unwindowed
        for (std::size_t idx = 0; idx < pixel_count; ++idx) {
            if (assignment[idx] >= 0) continue;
            int y = static_cast<int>(idx) / W, x = static_cast<int>(idx) % W;
            for (int k = 0; k < K; ++k) {
                double d = distance(centers[k], idx, y, x);
                if (d <= best_dist[idx]) {
                    best_dist[idx] = d;
                    assignment[idx] = k;
                }
            }
        }
        // recompute centers as cluster means
        std::vector<detail::SlicCenter> acc(K, {0, 0, 0, 0, 0});
        std::vector<std::size_t> counts(K, 0);
        for (std::size_t idx = 0; idx < pixel_count; ++idx) {
            int k = assignment[idx];
            const auto& p = lab[idx];
            acc[k].l += p[0];
            acc[k].a += p[1];
            acc[k].b += p[2];
            acc[k].x += static_cast<double>(idx % W);
            acc[k].y += static_cast<double>(idx / W);
            ++counts[k];
        }
        for (int k = 0; k < K; ++k) {
            if (counts[k] == 0) continue;  // keep stale center
            double n = static_cast<double>(counts[k]);
            centers[k] = {acc[k].l / n, acc[k].a / n, acc[k].b / n, acc[k].x / n, acc[k].y / n};
        }
    }

    map.region_count = K;
    for (std::size_t i = 0; i < pixel_count; ++i) map.labels[i] = assignment[i];

    relabel_connected_components(map);
    std::size_t min_size = std::max<std::size_t>(1, pixel_count / K / 4);
    detail::merge_small_fragments(map, min_size);
    return map;
}

}  // namespace sanet
