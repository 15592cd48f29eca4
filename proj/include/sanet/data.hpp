#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "sanet/image.hpp"
#include "sanet/random.hpp"
#include "sanet/sample.hpp"
#include "sanet/slic.hpp"

namespace sanet {

/// Synthetic dermoscopy-like dataset generator. Class statistics default to
/// the ISIC 2018 Task 2 imbalance profile: blank-image probability and
/// foreground pixel ratio (percent of total pixels) per attribute.
struct SynthConfig {
    int count = 64;
    int height = 140;
    int width = 140;
    std::uint64_t seed = 1;
    std::array<double, kAttributeCount> blank_prob{0.41, 0.93, 0.74, 0.77, 0.96};
    std::array<double, kAttributeCount> pixel_ratio_pct{13.70, 0.67, 1.27, 3.09, 0.42};
    int slic_regions = 196;
    double slic_compactness = 10.0;
    int slic_iterations = 10;

    void validate() const {
        if (count < 1) throw std::invalid_argument("SynthConfig: count must be >= 1");
        for (double b : blank_prob)
            if (b < 0 || b > 1) throw std::invalid_argument("SynthConfig: blank probability outside [0,1]");
        for (double r : pixel_ratio_pct)
            if (r <= 0 || r >= 100) throw std::invalid_argument("SynthConfig: ratio target outside (0,100)");
    }
};

namespace detail {

struct Ellipse {
    double cx, cy, rx, ry;
    bool contains(double x, double y) const {
        double dx = (x - cx) / rx, dy = (y - cy) / ry;
        return dx * dx + dy * dy <= 1.0;
    }
};

inline std::uint8_t clamp_u8(double v) {
    return static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
}

// `occupied` tracks pixels already claimed by any attribute so textures never
// overlap: a later stamp overwriting an earlier one would leave the earlier
// class's mask pointing at pixels that no longer show its colour
inline void stamp_pixel(ImageU8& img, Mask& mask, Mask& occupied, int y, int x,
                        const std::array<double, 3>& color) {
    if (y < 0 || y >= img.height || x < 0 || x >= img.width) return;
    if (occupied.at(y, x)) return;
    occupied.at(y, x) = 1;
    for (int c = 0; c < 3; ++c) img.at(y, x, c) = clamp_u8(color[c]);
    mask.at(y, x) = 1;
}

inline void stamp_disk(ImageU8& img, Mask& mask, Mask& occupied, const Ellipse& lesion,
                       double cy, double cx, double r, const std::array<double, 3>& color) {
    for (int y = static_cast<int>(cy - r); y <= static_cast<int>(cy + r) + 1; ++y)
        for (int x = static_cast<int>(cx - r); x <= static_cast<int>(cx + r) + 1; ++x) {
            double dy = y - cy, dx = x - cx;
            if (dy * dy + dx * dx <= r * r && lesion.contains(x, y))
                stamp_pixel(img, mask, occupied, y, x, color);
        }
}

// thick grid lines (vertical or horizontal) across the lesion until the
// pixel budget is met; wide strokes keep superpixel-level labels unambiguous
inline void stamp_grid(ImageU8& img, Mask& mask, Mask& occupied, const Ellipse& lesion, Rng& rng,
                       std::size_t budget, const std::array<double, 3>& color,
                       int thickness = 3) {
    std::vector<int> xs, ys;
    for (int x = static_cast<int>(lesion.cx - lesion.rx); x <= static_cast<int>(lesion.cx + lesion.rx); x += thickness)
        xs.push_back(x);
    for (int y = static_cast<int>(lesion.cy - lesion.ry); y <= static_cast<int>(lesion.cy + lesion.ry); y += thickness)
        ys.push_back(y);
    std::shuffle(xs.begin(), xs.end(), rng);
    std::shuffle(ys.begin(), ys.end(), rng);
    std::size_t vi = 0, hi = 0;
    bool vertical = true;
    int guard = static_cast<int>(xs.size() + ys.size());
    while (mask.foreground_count() < budget && guard-- > 0) {
        if (vertical && vi < xs.size()) {
            int x0 = xs[vi++];
            for (int x = x0; x < x0 + thickness; ++x)
                for (int y = 0; y < img.height; ++y)
                    if (lesion.contains(x, y)) stamp_pixel(img, mask, occupied, y, x, color);
        } else if (hi < ys.size()) {
            int y0 = ys[hi++];
            for (int y = y0; y < y0 + thickness; ++y)
                for (int x = 0; x < img.width; ++x)
                    if (lesion.contains(x, y)) stamp_pixel(img, mask, occupied, y, x, color);
        }
        vertical = !vertical;
    }
}

// one or more solid elliptical patches sized to the remaining budget
inline void stamp_patch(ImageU8& img, Mask& mask, Mask& occupied, const Ellipse& lesion, Rng& rng,
                        std::size_t budget, const std::array<double, 3>& color) {
    int guard = 16;
    while (mask.foreground_count() < budget && guard-- > 0) {
        double remaining = static_cast<double>(budget - mask.foreground_count());
        double r = std::sqrt(remaining / M_PI);
        double squash = uniform(rng, 0.8, 1.25);
        double ang = uniform(rng, 0, 2 * M_PI);
        double rad = std::sqrt(uniform(rng, 0, 1)) * 0.5;
        Ellipse patch{lesion.cx + rad * lesion.rx * std::cos(ang),
                      lesion.cy + rad * lesion.ry * std::sin(ang), r * squash, r / squash};
        for (int y = static_cast<int>(patch.cy - patch.ry); y <= static_cast<int>(patch.cy + patch.ry) + 1; ++y)
            for (int x = static_cast<int>(patch.cx - patch.rx); x <= static_cast<int>(patch.cx + patch.rx) + 1; ++x)
                if (patch.contains(x, y) && lesion.contains(x, y)) stamp_pixel(img, mask, occupied, y, x, color);
    }
}

inline void stamp_disks(ImageU8& img, Mask& mask, Mask& occupied, const Ellipse& lesion, Rng& rng,
                        std::size_t budget, double rmin, double rmax,
                        const std::array<double, 3>& color) {
    int guard = 4000;
    while (mask.foreground_count() < budget && guard-- > 0) {
        double ang = uniform(rng, 0, 2 * M_PI);
        double rad = std::sqrt(uniform(rng, 0, 1));
        double cx = lesion.cx + rad * lesion.rx * std::cos(ang) * 0.9;
        double cy = lesion.cy + rad * lesion.ry * std::sin(ang) * 0.9;
        stamp_disk(img, mask, occupied, lesion, cy, cx, uniform(rng, rmin, rmax), color);
    }
}

// radial segments growing inward from the lesion inner boundary
inline void stamp_streaks(ImageU8& img, Mask& mask, Mask& occupied, const Ellipse& lesion, Rng& rng,
                          std::size_t budget, const std::array<double, 3>& color,
                          int width = 4) {
    int guard = 4000;
    while (mask.foreground_count() < budget && guard-- > 0) {
        double ang = uniform(rng, 0, 2 * M_PI);
        double len = uniform(rng, 2.0 * width, 3.5 * width);
        double bx = lesion.cx + 0.95 * lesion.rx * std::cos(ang);
        double by = lesion.cy + 0.95 * lesion.ry * std::sin(ang);
        for (double s = 0; s <= len; s += 0.5) {
            double x = bx - s * std::cos(ang), y = by - s * std::sin(ang);
            for (int dy = 0; dy < width; ++dy)
                for (int dx = 0; dx < width; ++dx) {
                    int px = static_cast<int>(x) + dx, py = static_cast<int>(y) + dy;
                    if (lesion.contains(px, py)) stamp_pixel(img, mask, occupied, py, px, color);
                }
        }
    }
}

}  // namespace detail

/// Generates one sample, fully determined by (config.seed, index). The SLIC
/// map is computed only when requested (it is by far the dominant cost).
inline Sample synth_sample(const SynthConfig& cfg, int index, bool compute_map = true) {
    cfg.validate();
    Rng rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(index)));
    const int H = cfg.height, W = cfg.width;

    Sample sample;
    sample.id = "sample_" + std::to_string(index);
    sample.image = ImageU8(H, W, 3);
    for (int k = 0; k < kAttributeCount; ++k) sample.masks.emplace_back(H, W);

    // skin background with mild texture noise
    std::array<double, 3> skin{225 + uniform(rng, -12, 12), 195 + uniform(rng, -12, 12),
                               175 + uniform(rng, -12, 12)};
    detail::Ellipse lesion{W / 2.0 + uniform(rng, -0.08 * W, 0.08 * W),
                           H / 2.0 + uniform(rng, -0.08 * H, 0.08 * H),
                           uniform(rng, 0.30, 0.42) * W, uniform(rng, 0.30, 0.42) * H};
    std::array<double, 3> lesion_color{135 + uniform(rng, -18, 18), 95 + uniform(rng, -18, 18),
                                       70 + uniform(rng, -18, 18)};
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            const auto& base = lesion.contains(x, y) ? lesion_color : skin;
            for (int c = 0; c < 3; ++c)
                sample.image.at(y, x, c) = detail::clamp_u8(base[c] + uniform(rng, -4, 4));
        }

    // per-class textures, color-coded, clipped to the lesion
    const std::array<std::array<double, 3>, kAttributeCount> texture_color{{
        {40, 25, 15},     // pigment network: dark reticular grid
        {235, 215, 40},   // negative network: saturated yellow patches
        {60, 200, 220},   // milia like cyst: small cyan disks
        {120, 40, 190},   // globules: purple blobs
        {210, 20, 25},    // streaks: red radial segments
    }};
    const double total_px = static_cast<double>(H) * W;
    const double lesion_px = M_PI * lesion.rx * lesion.ry;
    Mask occupied(H, W);
    for (int k = 0; k < kAttributeCount; ++k) {
        bool stamped = uniform(rng, 0, 1) >= cfg.blank_prob[k];
        if (!stamped) continue;
        // conditional budget so the unconditional mean tracks the ratio target
        double budget = cfg.pixel_ratio_pct[k] / 100.0 * total_px / (1.0 - cfg.blank_prob[k]);
        budget = std::min(budget, 0.8 * lesion_px);
        auto b = static_cast<std::size_t>(budget);
        Mask& mask = sample.masks[k];
        Mask& occ = occupied;
        // stroke sizes track the expected superpixel side so that stamped
        // shapes clear the 0.5 coverage rule instead of being erased by it
        const double step = std::sqrt(total_px / cfg.slic_regions);
        const int bar = std::max(3, static_cast<int>(std::lround(0.9 * step)));
        switch (k) {
            case 0: detail::stamp_grid(sample.image, mask, occ, lesion, rng, b, texture_color[k], bar); break;
            case 1: detail::stamp_patch(sample.image, mask, occ, lesion, rng, b, texture_color[k]); break;
            case 2: detail::stamp_disks(sample.image, mask, occ, lesion, rng, b, 0.55 * step, 0.80 * step,
                                        texture_color[k]); break;
            case 3: detail::stamp_disks(sample.image, mask, occ, lesion, rng, b, 1.0 * step, 1.4 * step,
                                        texture_color[k]); break;
            case 4: detail::stamp_streaks(sample.image, mask, occ, lesion, rng, b, texture_color[k],
                                          std::max(3, static_cast<int>(std::lround(0.6 * step)))); break;
        }
    }

    if (compute_map)
        sample.map = slic_segment(sample.image, cfg.slic_regions, cfg.slic_compactness,
                                  cfg.slic_iterations);
    return sample;
}

// ---------------------------------------------------------------------------
// dataset on disk: <id>.ppm, <id>.attr<k>.pgm, <id>.spx, manifest.txt

inline void save_sample(const Sample& sample, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    save_ppm(sample.image, dir + "/" + sample.id + ".ppm");
    for (int k = 0; k < kAttributeCount; ++k)
        save_pgm(sample.masks[k], dir + "/" + sample.id + ".attr" + std::to_string(k) + ".pgm");
    save_map(sample.map, dir + "/" + sample.id + ".spx");
}

inline Sample load_sample(const std::string& dir, const std::string& id) {
    Sample sample;
    sample.id = id;
    sample.image = load_ppm(dir + "/" + id + ".ppm");
    for (int k = 0; k < kAttributeCount; ++k)
        sample.masks.push_back(load_pgm(dir + "/" + id + ".attr" + std::to_string(k) + ".pgm"));
    sample.map = load_map(dir + "/" + id + ".spx");
    return sample;
}

inline std::vector<std::string> load_manifest(const std::string& dir) {
    std::ifstream in(dir + "/manifest.txt");
    if (!in) throw std::runtime_error("load_manifest: cannot open " + dir + "/manifest.txt");
    std::vector<std::string> ids;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) ids.push_back(line);
    return ids;
}

inline void synth_generate(const SynthConfig& cfg, const std::string& dir) {
    namespace fs = std::filesystem;
    cfg.validate();
    fs::create_directories(dir);
    std::ofstream manifest(dir + "/manifest.txt");
    if (!manifest) throw std::runtime_error("synth_generate: cannot write manifest in " + dir);
    for (int i = 0; i < cfg.count; ++i) {
        Sample sample = synth_sample(cfg, i);
        save_sample(sample, dir);
        manifest << sample.id << "\n";
    }
}

// ---------------------------------------------------------------------------
// photometric augmentation; masks and map are untouched

namespace detail {

inline std::vector<double> gaussian_blur(const std::vector<double>& src, int H, int W, int C,
                                         double sigma) {
    int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> kernel(2 * radius + 1);
    double sum = 0;
    for (int i = -radius; i <= radius; ++i) {
        kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
        sum += kernel[i + radius];
    }
    for (double& k : kernel) k /= sum;

    std::vector<double> tmp(src.size()), out(src.size());
    auto idx = [&](int y, int x, int c) { return (static_cast<std::size_t>(y) * W + x) * C + c; };
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
            for (int c = 0; c < C; ++c) {
                double acc = 0;
                for (int i = -radius; i <= radius; ++i)
                    acc += kernel[i + radius] * src[idx(y, std::clamp(x + i, 0, W - 1), c)];
                tmp[idx(y, x, c)] = acc;
            }
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
            for (int c = 0; c < C; ++c) {
                double acc = 0;
                for (int i = -radius; i <= radius; ++i)
                    acc += kernel[i + radius] * tmp[idx(std::clamp(y + i, 0, H - 1), x, c)];
                out[idx(y, x, c)] = acc;
            }
    return out;
}

}  // namespace detail

/// Applies, each with probability 0.5: additive Gaussian noise, contrast
/// scaling about the image mean, and Gaussian blur or unsharp masking.
inline Sample augment(Sample sample, std::uint64_t seed) {
    Rng rng(seed);
    const int H = sample.image.height, W = sample.image.width, C = sample.image.channels;
    std::vector<double> px(sample.image.data.begin(), sample.image.data.end());

    if (uniform(rng, 0, 1) < 0.5) {
        double sigma = uniform(rng, 2.0, 12.0);
        for (double& v : px) v += normal(rng, 0.0, sigma);
    }
    if (uniform(rng, 0, 1) < 0.5) {
        double factor = uniform(rng, 0.7, 1.3);
        double mean = 0;
        for (double v : px) mean += v;
        mean /= static_cast<double>(px.size());
        for (double& v : px) v = mean + factor * (v - mean);
    }
    if (uniform(rng, 0, 1) < 0.5) {
        if (uniform(rng, 0, 1) < 0.5) {
            double sigma = uniform(rng, 0.5, 1.5);
            px = detail::gaussian_blur(px, H, W, C, sigma);
        } else {
            double amount = uniform(rng, 0.3, 1.0);
            std::vector<double> blurred = detail::gaussian_blur(px, H, W, C, 1.0);
            for (std::size_t i = 0; i < px.size(); ++i) px[i] += amount * (px[i] - blurred[i]);
        }
    }

    for (std::size_t i = 0; i < px.size(); ++i) sample.image.data[i] = detail::clamp_u8(px[i]);
    return sample;
}

}  // namespace sanet
