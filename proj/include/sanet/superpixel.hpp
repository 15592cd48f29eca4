#pragma once

#include <cstdint>
#include <fstream>
#include <queue>
#include <stdexcept>
#include <string>
#include <vector>

#include "sanet/autodiff.hpp"
#include "sanet/image.hpp"
#include "sanet/tensor.hpp"

namespace sanet {

/// Per-pixel region label grid with contiguous labels 0..K-1.
struct SuperpixelMap {
    int height = 0, width = 0;
    int region_count = 0;  // K
    std::vector<std::int32_t> labels;

    SuperpixelMap() = default;
    SuperpixelMap(int h, int w, int k)
        : height(h), width(w), region_count(k), labels(static_cast<std::size_t>(h) * w, 0) {}

    std::int32_t& at(int y, int x) { return labels[static_cast<std::size_t>(y) * width + x]; }
    std::int32_t at(int y, int x) const { return labels[static_cast<std::size_t>(y) * width + x]; }

    std::vector<std::size_t> region_sizes() const {
        std::vector<std::size_t> sizes(region_count, 0);
        for (std::int32_t l : labels)
            if (l >= 0 && l < region_count) ++sizes[l];
        return sizes;
    }
};

/// K x C matrix of per-region channel means.
struct SuperpixelRegionalFeatures {
    int region_count = 0;  // K
    int channels = 0;      // C
    std::vector<double> values;  // row-major K x C

    SuperpixelRegionalFeatures() = default;
    SuperpixelRegionalFeatures(int k, int c)
        : region_count(k), channels(c), values(static_cast<std::size_t>(k) * c, 0.0) {}

    double& at(int region, int channel) {
        return values[static_cast<std::size_t>(region) * channels + channel];
    }
    double at(int region, int channel) const {
        return values[static_cast<std::size_t>(region) * channels + channel];
    }
};

// ---------------------------------------------------------------------------
// validation

inline std::vector<std::string> validate_map(const SuperpixelMap& map, bool check_connectivity = false) {
    std::vector<std::string> violations;
    if (map.region_count <= 0) {
        violations.push_back("region count must be positive");
        return violations;
    }
    if (map.labels.size() != static_cast<std::size_t>(map.height) * map.width)
        violations.push_back("label grid size does not match extents");

    std::vector<std::size_t> counts(map.region_count, 0);
    bool out_of_range = false;
    for (std::int32_t l : map.labels) {
        if (l < 0 || l >= map.region_count)
            out_of_range = true;
        else
            ++counts[l];
    }
    if (out_of_range) violations.push_back("label out of range");
    for (int k = 0; k < map.region_count; ++k)
        if (counts[k] == 0) violations.push_back("label " + std::to_string(k) + " empty");

    if (check_connectivity && violations.empty()) {
        // one 4-connected component per label
        std::vector<char> seen(map.labels.size(), 0);
        std::vector<char> label_seen(map.region_count, 0);
        for (int y = 0; y < map.height; ++y) {
            for (int x = 0; x < map.width; ++x) {
                std::size_t idx = static_cast<std::size_t>(y) * map.width + x;
                if (seen[idx]) continue;
                std::int32_t l = map.labels[idx];
                if (label_seen[l]) {
                    violations.push_back("label " + std::to_string(l) + " is disconnected");
                    continue;
                }
                label_seen[l] = 1;
                std::queue<std::pair<int, int>> q;
                q.push({y, x});
                seen[idx] = 1;
                while (!q.empty()) {
                    auto [cy, cx] = q.front();
                    q.pop();
                    const int dy[4] = {-1, 1, 0, 0}, dx[4] = {0, 0, -1, 1};
                    for (int d = 0; d < 4; ++d) {
                        int ny = cy + dy[d], nx = cx + dx[d];
                        if (ny < 0 || ny >= map.height || nx < 0 || nx >= map.width) continue;
                        std::size_t nidx = static_cast<std::size_t>(ny) * map.width + nx;
                        if (!seen[nidx] && map.labels[nidx] == l) {
                            seen[nidx] = 1;
                            q.push({ny, nx});
                        }
                    }
                }
            }
        }
    }
    return violations;
}

/// Relabel an arbitrary label grid into contiguous 4-connected components
/// 0..K'-1 in scan order. Used after shuffling and by SLIC post-processing.
inline void relabel_connected_components(SuperpixelMap& map) {
    std::vector<std::int32_t> out(map.labels.size(), -1);
    int next = 0;
    for (int y = 0; y < map.height; ++y) {
        for (int x = 0; x < map.width; ++x) {
            std::size_t idx = static_cast<std::size_t>(y) * map.width + x;
            if (out[idx] >= 0) continue;
            std::int32_t l = map.labels[idx];
            std::queue<std::pair<int, int>> q;
            q.push({y, x});
            out[idx] = next;
            while (!q.empty()) {
                auto [cy, cx] = q.front();
                q.pop();
                const int dy[4] = {-1, 1, 0, 0}, dx[4] = {0, 0, -1, 1};
                for (int d = 0; d < 4; ++d) {
                    int ny = cy + dy[d], nx = cx + dx[d];
                    if (ny < 0 || ny >= map.height || nx < 0 || nx >= map.width) continue;
                    std::size_t nidx = static_cast<std::size_t>(ny) * map.width + nx;
                    if (out[nidx] < 0 && map.labels[nidx] == l) {
                        out[nidx] = next;
                        q.push({ny, nx});
                    }
                }
            }
            ++next;
        }
    }
    map.labels = std::move(out);
    map.region_count = next;
}

// ---------------------------------------------------------------------------
// pooling / unpooling / painting (non-differentiating forms)

namespace detail {

template <typename T>
void check_pool_extents(const Tensor<T>& features, const SuperpixelMap& map) {
    if (features.shape.n != 1)
        throw std::invalid_argument("superpixel pooling: one sample per map (batch size 1)");
    if (features.shape.h != map.height || features.shape.w != map.width)
        throw std::invalid_argument("superpixel pooling: feature extents " + features.shape.str() +
                                    " do not match map " + std::to_string(map.height) + "x" +
                                    std::to_string(map.width));
}

}  // namespace detail

template <typename T>
SuperpixelRegionalFeatures sp_avg_pool(const Tensor<T>& features, const SuperpixelMap& map) {
    detail::check_pool_extents(features, map);
    const int C = features.shape.c, K = map.region_count;
    SuperpixelRegionalFeatures regional(K, C);
    std::vector<std::size_t> sizes = map.region_sizes();
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < map.height; ++y)
            for (int x = 0; x < map.width; ++x)
                regional.at(map.at(y, x), c) += features.at(0, c, y, x);
    for (int i = 0; i < K; ++i) {
        if (sizes[i] == 0) throw std::invalid_argument("sp_avg_pool: empty region " + std::to_string(i));
        for (int c = 0; c < C; ++c) regional.at(i, c) /= static_cast<double>(sizes[i]);
    }
    return regional;
}

template <typename T>
Tensor<T> sp_unpool(const SuperpixelRegionalFeatures& regional, const SuperpixelMap& map) {
    if (regional.region_count != map.region_count)
        throw std::invalid_argument("sp_unpool: K mismatch (" + std::to_string(regional.region_count) +
                                    " vs " + std::to_string(map.region_count) + ")");
    Tensor<T> out({1, regional.channels, map.height, map.width});
    for (int c = 0; c < regional.channels; ++c)
        for (int y = 0; y < map.height; ++y)
            for (int x = 0; x < map.width; ++x)
                out.at(0, c, y, x) = static_cast<T>(regional.at(map.at(y, x), c));
    return out;
}

/// Broadcast per-region per-class scalars back onto the pixel grid.
template <typename T>
std::vector<Tensor<T>> sp_paint(const std::vector<std::vector<T>>& region_values,
                                const SuperpixelMap& map) {
    std::vector<Tensor<T>> grids;
    for (const auto& values : region_values) {
        if (static_cast<int>(values.size()) != map.region_count)
            throw std::invalid_argument("sp_paint: K mismatch");
        Tensor<T> grid({1, 1, map.height, map.width});
        for (int y = 0; y < map.height; ++y)
            for (int x = 0; x < map.width; ++x) grid.at(0, 0, y, x) = values[map.at(y, x)];
        grids.push_back(std::move(grid));
    }
    return grids;
}

// ---------------------------------------------------------------------------
// differentiable pooling: regional features carried as a (1,C,K,1) tensor

template <typename T>
Var<T> sp_avg_pool_op(Tape<T>* tape, const Var<T>& features, const SuperpixelMap& map) {
    detail::check_pool_extents(features->value, map);
    const int C = features->value.shape.c, K = map.region_count;
    std::vector<std::size_t> sizes = map.region_sizes();
    auto out = make_var(Tensor<T>({1, C, K, 1}));
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < map.height; ++y)
            for (int x = 0; x < map.width; ++x)
                out->value.at(0, c, map.at(y, x), 0) += features->value.at(0, c, y, x);
    for (int c = 0; c < C; ++c)
        for (int i = 0; i < K; ++i) out->value.at(0, c, i, 0) /= static_cast<T>(sizes[i]);
    require_finite(out->value, "sp_avg_pool forward");

    if (detail::track(tape, {&features})) {
        out->requires_grad = true;
        SuperpixelMap m = map;
        tape->record([features, out, m, sizes]() {
            if (!features->requires_grad) return;
            features->ensure_grad();
            const int C = features->value.shape.c;
            for (int c = 0; c < C; ++c)
                for (int y = 0; y < m.height; ++y)
                    for (int x = 0; x < m.width; ++x) {
                        std::int32_t l = m.at(y, x);
                        features->grad.at(0, c, y, x) +=
                            out->grad.at(0, c, l, 0) / static_cast<T>(sizes[l]);
                    }
        });
    }
    return out;
}

template <typename T>
Var<T> sp_unpool_op(Tape<T>* tape, const Var<T>& regional, const SuperpixelMap& map) {
    if (regional->value.shape.h != map.region_count)
        throw std::invalid_argument("sp_unpool: K mismatch");
    const int C = regional->value.shape.c;
    auto out = make_var(Tensor<T>({1, C, map.height, map.width}));
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < map.height; ++y)
            for (int x = 0; x < map.width; ++x)
                out->value.at(0, c, y, x) = regional->value.at(0, c, map.at(y, x), 0);

    if (detail::track(tape, {&regional})) {
        out->requires_grad = true;
        SuperpixelMap m = map;
        tape->record([regional, out, m]() {
            if (!regional->requires_grad) return;
            regional->ensure_grad();
            const int C = regional->value.shape.c;
            for (int c = 0; c < C; ++c)
                for (int y = 0; y < m.height; ++y)
                    for (int x = 0; x < m.width; ++x)
                        regional->grad.at(0, c, m.at(y, x), 0) += out->grad.at(0, c, y, x);
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// .spx serialization: "SPXM", u32 version=1, height, width, region_count,
// then height*width u32 labels, all little-endian.

namespace detail {

inline void put_u32(std::ostream& out, std::uint32_t v) {
    char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                 static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    out.write(b, 4);
}

inline std::uint32_t get_u32(std::istream& in, std::size_t offset, const char* what) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (in.gcount() != 4) throw FormatError(std::string("spx: truncated ") + what, offset);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace detail

inline void save_map(const SuperpixelMap& map, const std::string& path) {
    auto violations = validate_map(map);
    if (!violations.empty())
        throw std::invalid_argument("save_map: invalid map: " + violations.front());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_map: cannot open " + path);
    out.write("SPXM", 4);
    detail::put_u32(out, 1);
    detail::put_u32(out, static_cast<std::uint32_t>(map.height));
    detail::put_u32(out, static_cast<std::uint32_t>(map.width));
    detail::put_u32(out, static_cast<std::uint32_t>(map.region_count));
    for (std::int32_t l : map.labels) detail::put_u32(out, static_cast<std::uint32_t>(l));
    if (!out) throw std::runtime_error("save_map: write failed for " + path);
}

inline SuperpixelMap load_map(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_map: cannot open " + path);
    char magic[4];
    in.read(magic, 4);
    if (in.gcount() != 4 || std::string(magic, 4) != "SPXM")
        throw FormatError("spx: bad magic", 0);
    std::uint32_t version = detail::get_u32(in, 4, "version");
    if (version != 1) throw FormatError("spx: unsupported version " + std::to_string(version), 4);
    std::uint32_t h = detail::get_u32(in, 8, "height");
    std::uint32_t w = detail::get_u32(in, 12, "width");
    std::uint32_t k = detail::get_u32(in, 16, "region_count");
    SuperpixelMap map(static_cast<int>(h), static_cast<int>(w), static_cast<int>(k));
    for (std::size_t i = 0; i < map.labels.size(); ++i)
        map.labels[i] = static_cast<std::int32_t>(detail::get_u32(in, 20 + i * 4, "labels"));
    return map;
}

}  // namespace sanet
