#pragma once

#include <cstdint>
#include <deque>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "sanet/autodiff.hpp"
#include "sanet/losses.hpp"
#include "sanet/random.hpp"
#include "sanet/sample.hpp"
#include "sanet/superpixel.hpp"

namespace sanet {

/// Named trainable tensor with optimizer moment buffers.
template <typename T>
struct Parameter {
    std::string name;
    Var<T> value;
    Tensor<T> m1, m2;  // first/second moments, same shape as value
    bool no_decay = false;

    Parameter(std::string n, Var<T> v, bool nd)
        : name(std::move(n)), value(std::move(v)), m1(value->value.shape), m2(value->value.shape),
          no_decay(nd) {}
};

struct ModelConfig {
    int height = 140;
    int width = 140;
    int base_channels = 24;
    int class_count = kAttributeCount;
    std::uint64_t seed = 7;
    bool sam_concat = false;  // prose variant: concat instead of add
    double bn_momentum = 0.1;
    double bn_epsilon = 1e-5;
    // fixed multiplier on the head logits; the head starts near zero (p ~ 0.5
    // everywhere) and the gain lets the short low-lr schedule reach confident
    // probabilities
    double head_gain = 400.0;
    // shrink factor on the init of convolutions that feed a batch norm; the
    // normalization makes those layers scale-invariant, so a smaller weight
    // norm raises their effective rotation rate under the fixed learning rate
    double norm_conv_init_scale = 1.0;

    void validate() const {
        if (height % 28 != 0 || width % 28 != 0)
            throw std::invalid_argument("ModelConfig: extents must be divisible by 28 (grid 7 x stride 4)");
        if (base_channels < 1) throw std::invalid_argument("ModelConfig: base_channels must be >= 1");
        if (head_gain <= 0) throw std::invalid_argument("ModelConfig: head_gain must be positive");
        if (norm_conv_init_scale <= 0)
            throw std::invalid_argument("ModelConfig: norm_conv_init_scale must be positive");
    }
};

template <typename T>
struct SanetOutput {
    Var<T> sp_logits;              // (1, 5, K, 1) pre-sigmoid
    Var<T> sp_probs;               // (1, 5, K, 1) in [0,1]
    std::vector<Tensor<T>> pixel_probs;  // 5 painted (1,1,H,W) grids
};

/// q_{i,k} = 1 iff >= half of region s_i lies inside mask k.
inline std::vector<std::uint8_t> superpixel_ground_truth(const std::vector<Mask>& masks,
                                                         const SuperpixelMap& map) {
    if (static_cast<int>(masks.size()) != kAttributeCount)
        throw std::invalid_argument("superpixel_ground_truth: expected 5 masks");
    for (const Mask& m : masks)
        if (m.height != map.height || m.width != map.width)
            throw std::invalid_argument("superpixel_ground_truth: extent mismatch");
    const int K = map.region_count;
    std::vector<std::size_t> sizes = map.region_sizes();
    std::vector<std::size_t> covered(static_cast<std::size_t>(K) * kAttributeCount, 0);
    for (int k = 0; k < kAttributeCount; ++k)
        for (int y = 0; y < map.height; ++y)
            for (int x = 0; x < map.width; ++x)
                if (masks[k].at(y, x))
                    ++covered[static_cast<std::size_t>(map.at(y, x)) * kAttributeCount + k];
    std::vector<std::uint8_t> q(static_cast<std::size_t>(K) * kAttributeCount, 0);
    for (int i = 0; i < K; ++i)
        for (int k = 0; k < kAttributeCount; ++k)
            q[static_cast<std::size_t>(i) * kAttributeCount + k] =
                2 * covered[static_cast<std::size_t>(i) * kAttributeCount + k] >= sizes[i] ? 1 : 0;
    return q;
}

/// P = w * (Unpooling(R) + F) with R = sp_avg_pool(F); w is a learned 1x1
/// convolution. The concat variant replaces the sum by channel concatenation.
template <typename T>
Var<T> sam_forward(Tape<T>* tape, const Var<T>& features, const SuperpixelMap& map,
                   const Var<T>& w, const Var<T>& w_bias, bool concat = false) {
    if (features->value.shape.h != map.height || features->value.shape.w != map.width)
        throw std::invalid_argument("sam_forward: feature extents do not match map");
    Var<T> regional = sp_avg_pool_op(tape, features, map);
    Var<T> unpooled = sp_unpool_op(tape, regional, map);
    Var<T> mixed = concat ? concat_channels(tape, unpooled, features)
                          : add(tape, unpooled, features);
    return conv2d(tape, mixed, w, w_bias, 1, 0);
}

/// Toy residual encoder-decoder with skip connections, SAM on the
/// full-resolution decoder features, and a superpixel-level sigmoid head.
template <typename T>
class ToySanet {
public:
    explicit ToySanet(const ModelConfig& config) : cfg_(config) {
        cfg_.validate();
        Rng rng(cfg_.seed);
        const int c1 = cfg_.base_channels;       // stem / decoder top
        const int c2 = c1 * 2;                   // stage A
        const int c3 = c1 * 4;                   // stage B

        stem_w_ = conv_param(rng, "stem.w", c1, 3, 3, cfg_.norm_conv_init_scale);
        stem_b_ = bias_param("stem.b", c1);
        stem_bn_ = make_bn("stem.bn", c1);

        block_a_ = make_block(rng, "block_a", c1, c2);
        block_b_ = make_block(rng, "block_b", c2, c3);

        dec1_w_ = conv_param(rng, "dec1.w", c2, c3 + c2, 3, cfg_.norm_conv_init_scale);
        dec1_b_ = bias_param("dec1.b", c2);
        dec1_bn_ = make_bn("dec1.bn", c2);
        dec2_w_ = conv_param(rng, "dec2.w", c1, c2 + c1, 3, cfg_.norm_conv_init_scale);
        dec2_b_ = bias_param("dec2.b", c1);
        dec2_bn_ = make_bn("dec2.bn", c1);

        sam_w_ = conv_param(rng, "sam.w", c1, cfg_.sam_concat ? 2 * c1 : c1, 1);
        sam_zero_bias_ = make_var(Tensor<T>({1, c1, 1, 1}), false);

        head_w_ = conv_param(rng, "head.w", cfg_.class_count, c1, 1);
        // shrink so initial logits stay near zero despite the gain
        for (auto& v : head_w_->value->value.data) v = static_cast<T>(v * 0.02);
        head_b_ = bias_param("head.b", cfg_.class_count);
    }

    const ModelConfig& config() const { return cfg_; }
    std::deque<Parameter<T>>& parameters() { return params_; }
    const std::deque<Parameter<T>>& parameters() const { return params_; }

    Parameter<T>* find_parameter(const std::string& name) {
        for (auto& p : params_)
            if (p.name == name) return &p;
        return nullptr;
    }

    void zero_grad() {
        for (auto& p : params_) p.value->zero_grad();
    }

    SanetOutput<T> forward(Tape<T>* tape, const Tensor<T>& image, const SuperpixelMap& map,
                           Mode mode) {
        if (image.shape.n != 1 || image.shape.c != 3 || image.shape.h != cfg_.height ||
            image.shape.w != cfg_.width)
            throw std::invalid_argument("forward: image shape " + image.shape.str() +
                                        " does not match config");
        if (map.height != cfg_.height || map.width != cfg_.width)
            throw std::invalid_argument("forward: map extents do not match config");

        Var<T> x = make_var(image, false);
        Var<T> stem = relu(tape, stem_bn_->forward(tape, conv2d(tape, x, stem_w_->value, stem_b_->value, 1, 1), mode));
        Var<T> a = run_block(tape, block_a_, stem, mode);
        Var<T> b = run_block(tape, block_b_, a, mode);

        Var<T> d1 = concat_channels(tape, upsample_nearest2x(tape, b), a);
        d1 = relu(tape, dec1_bn_->forward(tape, conv2d(tape, d1, dec1_w_->value, dec1_b_->value, 1, 1), mode));
        Var<T> d2 = concat_channels(tape, upsample_nearest2x(tape, d1), stem);
        d2 = relu(tape, dec2_bn_->forward(tape, conv2d(tape, d2, dec2_w_->value, dec2_b_->value, 1, 1), mode));

        Var<T> attended = sam_forward(tape, d2, map, sam_w_->value, sam_zero_bias_, cfg_.sam_concat);
        Var<T> logits = scale_const(tape, conv2d(tape, attended, head_w_->value, head_b_->value, 1, 0),
                                    static_cast<T>(cfg_.head_gain));

        SanetOutput<T> out;
        out.sp_logits = sp_avg_pool_op(tape, logits, map);
        out.sp_probs = sigmoid(tape, out.sp_logits);

        const int K = map.region_count;
        std::vector<std::vector<T>> region_values(cfg_.class_count, std::vector<T>(K));
        for (int k = 0; k < cfg_.class_count; ++k)
            for (int i = 0; i < K; ++i) region_values[k][i] = out.sp_probs->value.at(0, k, i, 0);
        out.pixel_probs = sp_paint(region_values, map);
        return out;
    }

    // ------------------------------------------------------------------
    // checkpoint: "SANC", u32 version=1, u32 parameter count, then per
    // parameter: u16 name length + name, u8 dtype, u8 rank, rank x u32
    // extents, raw little-endian values.

    void save_checkpoint(const std::string& path, bool include_moments = true) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
        std::vector<std::pair<std::string, const Tensor<T>*>> entries;
        for (const auto& p : params_) {
            entries.push_back({p.name, &p.value->value});
            if (include_moments) {
                entries.push_back({p.name + ".m1", &p.m1});
                entries.push_back({p.name + ".m2", &p.m2});
            }
        }
        out.write("SANC", 4);
        write_u32(out, 1);
        write_u32(out, static_cast<std::uint32_t>(entries.size()));
        for (const auto& [name, tensor] : entries) {
            write_u16(out, static_cast<std::uint16_t>(name.size()));
            out.write(name.data(), static_cast<std::streamsize>(name.size()));
            out.put(static_cast<char>(dtype_code()));
            out.put(static_cast<char>(4));
            write_u32(out, static_cast<std::uint32_t>(tensor->shape.n));
            write_u32(out, static_cast<std::uint32_t>(tensor->shape.c));
            write_u32(out, static_cast<std::uint32_t>(tensor->shape.h));
            write_u32(out, static_cast<std::uint32_t>(tensor->shape.w));
            out.write(reinterpret_cast<const char*>(tensor->data.data()),
                      static_cast<std::streamsize>(tensor->data.size() * sizeof(T)));
        }
        if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path);
    }

    void load_checkpoint(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
        char magic[4];
        in.read(magic, 4);
        if (in.gcount() != 4 || std::string(magic, 4) != "SANC")
            throw FormatError("checkpoint: bad magic", 0);
        std::uint32_t version = read_u32(in, "version");
        if (version != 1) throw FormatError("checkpoint: unsupported version", 4);
        std::uint32_t count = read_u32(in, "parameter count");
        for (std::uint32_t e = 0; e < count; ++e) {
            std::uint16_t name_len = read_u16(in);
            std::string name(name_len, '\0');
            in.read(name.data(), name_len);
            int dtype = in.get();
            int rank = in.get();
            if (dtype != static_cast<int>(dtype_code()))
                throw FormatError("checkpoint: dtype mismatch for " + name, 0);
            if (rank != 4) throw FormatError("checkpoint: unsupported rank for " + name, 0);
            Shape4 shape{static_cast<int>(read_u32(in, "extent")), static_cast<int>(read_u32(in, "extent")),
                         static_cast<int>(read_u32(in, "extent")), static_cast<int>(read_u32(in, "extent"))};
            Tensor<T> tensor(shape);
            in.read(reinterpret_cast<char*>(tensor.data.data()),
                    static_cast<std::streamsize>(tensor.data.size() * sizeof(T)));
            if (!in) throw FormatError("checkpoint: truncated values for " + name, 0);

            std::string base = name;
            int moment = 0;
            if (base.size() > 3 && base.substr(base.size() - 3) == ".m1") {
                moment = 1;
                base = base.substr(0, base.size() - 3);
            } else if (base.size() > 3 && base.substr(base.size() - 3) == ".m2") {
                moment = 2;
                base = base.substr(0, base.size() - 3);
            }
            Parameter<T>* p = find_parameter(base);
            if (!p) throw std::runtime_error("load_checkpoint: unknown parameter " + name);
            Tensor<T>& dst = moment == 0 ? p->value->value : (moment == 1 ? p->m1 : p->m2);
            if (dst.shape != shape)
                throw std::runtime_error("load_checkpoint: shape mismatch for " + name);
            dst = std::move(tensor);
        }
    }

private:
    struct ResidualBlock {
        Parameter<T>*conv1_w, *conv1_b, *conv2_w, *conv2_b, *proj_w, *proj_b;
        std::unique_ptr<BatchNorm2d<T>> bn1, bn2, bn_proj;
        int stride = 2;
    };

    static std::uint8_t dtype_code() { return sizeof(T) == 4 ? 0 : 1; }

    static void write_u32(std::ostream& out, std::uint32_t v) {
        char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                     static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
        out.write(b, 4);
    }
    static void write_u16(std::ostream& out, std::uint16_t v) {
        char b[2] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff)};
        out.write(b, 2);
    }
    static std::uint32_t read_u32(std::istream& in, const char* what) {
        unsigned char b[4];
        in.read(reinterpret_cast<char*>(b), 4);
        if (in.gcount() != 4) throw FormatError(std::string("checkpoint: truncated ") + what, 0);
        return static_cast<std::uint32_t>(b[0]) | (b[1] << 8) | (b[2] << 16) |
               (static_cast<std::uint32_t>(b[3]) << 24);
    }
    static std::uint16_t read_u16(std::istream& in) {
        unsigned char b[2];
        in.read(reinterpret_cast<char*>(b), 2);
        if (in.gcount() != 2) throw FormatError("checkpoint: truncated name length", 0);
        return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
    }

    Parameter<T>* add_param(std::string name, Tensor<T> value, bool no_decay) {
        if (find_parameter(name)) throw std::invalid_argument("duplicate parameter name " + name);
        params_.emplace_back(std::move(name), make_var(std::move(value), true), no_decay);
        return &params_.back();
    }

    // He-uniform: bound sqrt(6 / fan_in), optionally shrunk for layers whose
    // output is immediately re-normalized
    Parameter<T>* conv_param(Rng& rng, std::string name, int cout, int cin, int kernel,
                             double scale = 1.0) {
        Tensor<T> w({cout, cin, kernel, kernel});
        double bound = scale * std::sqrt(6.0 / (static_cast<double>(cin) * kernel * kernel));
        for (auto& v : w.data) v = static_cast<T>(uniform(rng, -bound, bound));
        return add_param(std::move(name), std::move(w), false);
    }

    Parameter<T>* bias_param(std::string name, int channels) {
        return add_param(std::move(name), Tensor<T>({1, channels, 1, 1}), true);
    }

    std::unique_ptr<BatchNorm2d<T>> make_bn(const std::string& name, int channels) {
        Parameter<T>* scale = add_param(name + ".scale", Tensor<T>({1, channels, 1, 1}, T(1)), true);
        Parameter<T>* shift = add_param(name + ".shift", Tensor<T>({1, channels, 1, 1}), true);
        return std::make_unique<BatchNorm2d<T>>(scale->value, shift->value,
                                                static_cast<T>(cfg_.bn_momentum),
                                                static_cast<T>(cfg_.bn_epsilon));
    }

    ResidualBlock make_block(Rng& rng, const std::string& name, int cin, int cout) {
        ResidualBlock b;
        b.conv1_w = conv_param(rng, name + ".conv1.w", cout, cin, 3, cfg_.norm_conv_init_scale);
        b.conv1_b = bias_param(name + ".conv1.b", cout);
        b.bn1 = make_bn(name + ".bn1", cout);
        b.conv2_w = conv_param(rng, name + ".conv2.w", cout, cout, 3, cfg_.norm_conv_init_scale);
        b.conv2_b = bias_param(name + ".conv2.b", cout);
        b.bn2 = make_bn(name + ".bn2", cout);
        b.proj_w = conv_param(rng, name + ".proj.w", cout, cin, 1, cfg_.norm_conv_init_scale);
        b.proj_b = bias_param(name + ".proj.b", cout);
        b.bn_proj = make_bn(name + ".bn_proj", cout);
        return b;
    }

    Var<T> run_block(Tape<T>* tape, ResidualBlock& blk, const Var<T>& x, Mode mode) {
        Var<T> y = relu(tape, blk.bn1->forward(
                                  tape, conv2d(tape, x, blk.conv1_w->value, blk.conv1_b->value, blk.stride, 1), mode));
        y = blk.bn2->forward(tape, conv2d(tape, y, blk.conv2_w->value, blk.conv2_b->value, 1, 1), mode);
        Var<T> identity = blk.bn_proj->forward(
            tape, conv2d(tape, x, blk.proj_w->value, blk.proj_b->value, blk.stride, 0), mode);
        return relu(tape, add(tape, y, identity));
    }

    ModelConfig cfg_;
    std::deque<Parameter<T>> params_;
    Parameter<T>*stem_w_, *stem_b_, *dec1_w_, *dec1_b_, *dec2_w_, *dec2_b_, *sam_w_, *head_w_, *head_b_;
    std::unique_ptr<BatchNorm2d<T>> stem_bn_, dec1_bn_, dec2_bn_;
    ResidualBlock block_a_, block_b_;
    Var<T> sam_zero_bias_;
};

}  // namespace sanet
