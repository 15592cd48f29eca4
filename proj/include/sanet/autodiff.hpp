#pragma once

#include <functional>
#include <memory>
#include <stdexcept>
#include <utility>
#include <vector>

#include "sanet/tensor.hpp"

namespace sanet {

enum class Mode { train, eval };
enum class Activation { relu, sigmoid };
enum class CombineKind { add, concat_channels };

/// A tensor in the differentiable graph. Gradient storage is allocated
/// lazily, only when a backward pass actually reaches the variable.
template <typename T>
struct Variable {
    Tensor<T> value;
    Tensor<T> grad;  // empty until ensure_grad()
    bool requires_grad = false;

    Variable() = default;
    explicit Variable(Tensor<T> v, bool rg = false) : value(std::move(v)), requires_grad(rg) {}

    void ensure_grad() {
        if (grad.empty()) grad = Tensor<T>(value.shape);
    }
    void zero_grad() {
        if (!grad.empty()) grad.fill(T(0));
    }
};

template <typename T>
using Var = std::shared_ptr<Variable<T>>;

template <typename T>
Var<T> make_var(Tensor<T> v, bool requires_grad = false) {
    return std::make_shared<Variable<T>>(std::move(v), requires_grad);
}

/// Record of executed operations in execution order; backward() replays the
/// closures exactly once each, in reverse.
template <typename T>
class Tape {
public:
    void record(std::function<void()> step) { steps_.push_back(std::move(step)); }

    std::size_t size() const { return steps_.size(); }

    /// Backward from `out` seeded with an explicit cotangent.
    void backward(const Var<T>& out, const Tensor<T>& seed) {
        if (seed.shape != out->value.shape)
            throw std::invalid_argument("backward: seed shape " + seed.shape.str() +
                                        " != output shape " + out->value.shape.str());
        out->ensure_grad();
        for (std::size_t i = 0; i < seed.data.size(); ++i) out->grad.data[i] += seed.data[i];
        for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)();
        steps_.clear();
    }

    /// Backward from a scalar-like output, seeded with ones.
    void backward(const Var<T>& out) {
        Tensor<T> seed(out->value.shape, T(1));
        backward(out, seed);
    }

private:
    std::vector<std::function<void()>> steps_;
};

namespace detail {

template <typename T>
bool track(Tape<T>* tape, std::initializer_list<const Var<T>*> inputs) {
    if (!tape) return false;
    for (const Var<T>* v : inputs)
        if ((*v)->requires_grad) return true;
    return false;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// conv2d

inline Shape4 conv2d_output_shape(Shape4 in, Shape4 w, int stride, int padding) {
    if (stride <= 0) throw std::invalid_argument("conv2d: stride must be positive");
    if (padding < 0) throw std::invalid_argument("conv2d: padding must be non-negative");
    if (in.c != w.c)
        throw std::invalid_argument("conv2d: input channels " + std::to_string(in.c) +
                                    " != kernel input channels " + std::to_string(w.c));
    int oh = (in.h + 2 * padding - w.h) / stride + 1;
    int ow = (in.w + 2 * padding - w.w) / stride + 1;
    if (in.h + 2 * padding < w.h || in.w + 2 * padding < w.w || oh <= 0 || ow <= 0)
        throw std::invalid_argument("conv2d: non-positive output extent for input " + in.str());
    return {in.n, w.n, oh, ow};
}

template <typename T>
Var<T> conv2d(Tape<T>* tape, const Var<T>& x, const Var<T>& weight, const Var<T>& bias,
              int stride, int padding) {
    const Tensor<T>& in = x->value;
    const Tensor<T>& w = weight->value;
    const Tensor<T>& b = bias->value;
    Shape4 os = conv2d_output_shape(in.shape, w.shape, stride, padding);
    const int cout = w.shape.n, cin = w.shape.c, kh = w.shape.h, kw = w.shape.w;
    if (static_cast<int>(b.numel()) != cout)
        throw std::invalid_argument("conv2d: bias size must equal output channels");

    auto out = make_var(Tensor<T>(os));
    Tensor<T>& o = out->value;
#pragma omp parallel for collapse(2) schedule(static)
    for (int n = 0; n < os.n; ++n) {
        for (int co = 0; co < cout; ++co) {
            for (int oh = 0; oh < os.h; ++oh) {
                for (int ow = 0; ow < os.w; ++ow) {
                    T acc = b.data[co];
                    const int ih0 = oh * stride - padding;
                    const int iw0 = ow * stride - padding;
                    for (int ci = 0; ci < cin; ++ci) {
                        for (int r = 0; r < kh; ++r) {
                            const int ih = ih0 + r;
                            if (ih < 0 || ih >= in.shape.h) continue;
                            for (int c = 0; c < kw; ++c) {
                                const int iw = iw0 + c;
                                if (iw < 0 || iw >= in.shape.w) continue;
                                acc += in.at(n, ci, ih, iw) * w.at(co, ci, r, c);
                            }
                        }
                    }
                    o.at(n, co, oh, ow) = acc;
                }
            }
        }
    }
    require_finite(o, "conv2d forward");

    if (detail::track(tape, {&x, &weight, &bias})) {
        out->requires_grad = true;
        tape->record([x, weight, bias, out, stride, padding]() {
            const Tensor<T>& in = x->value;
            const Tensor<T>& w = weight->value;
            const Tensor<T>& go = out->grad;
            const Shape4 os = out->value.shape;
            const int cout = w.shape.n, cin = w.shape.c, kh = w.shape.h, kw = w.shape.w;
            if (x->requires_grad) {
                x->ensure_grad();
                Tensor<T>& gi = x->grad;
#pragma omp parallel for collapse(2) schedule(static)
                for (int n = 0; n < in.shape.n; ++n) {
                    for (int ci = 0; ci < cin; ++ci) {
                        for (int ih = 0; ih < in.shape.h; ++ih) {
                            for (int iw = 0; iw < in.shape.w; ++iw) {
                                T acc = T(0);
                                for (int co = 0; co < cout; ++co) {
                                    for (int r = 0; r < kh; ++r) {
                                        const int num_h = ih + padding - r;
                                        if (num_h < 0 || num_h % stride != 0) continue;
                                        const int oh = num_h / stride;
                                        if (oh >= os.h) continue;
                                        for (int c = 0; c < kw; ++c) {
                                            const int num_w = iw + padding - c;
                                            if (num_w < 0 || num_w % stride != 0) continue;
                                            const int ow = num_w / stride;
                                            if (ow >= os.w) continue;
                                            acc += go.at(n, co, oh, ow) * w.at(co, ci, r, c);
                                        }
                                    }
                                }
                                gi.at(n, ci, ih, iw) += acc;
                            }
                        }
                    }
                }
            }
            if (weight->requires_grad) {
                weight->ensure_grad();
                Tensor<T>& gw = weight->grad;
#pragma omp parallel for schedule(static)
                for (int co = 0; co < cout; ++co) {
                    for (int ci = 0; ci < cin; ++ci) {
                        for (int r = 0; r < kh; ++r) {
                            for (int c = 0; c < kw; ++c) {
                                T acc = T(0);
                                for (int n = 0; n < os.n; ++n) {
                                    for (int oh = 0; oh < os.h; ++oh) {
                                        const int ih = oh * stride - padding + r;
                                        if (ih < 0 || ih >= in.shape.h) continue;
                                        for (int ow = 0; ow < os.w; ++ow) {
                                            const int iw = ow * stride - padding + c;
                                            if (iw < 0 || iw >= in.shape.w) continue;
                                            acc += go.at(n, co, oh, ow) * in.at(n, ci, ih, iw);
                                        }
                                    }
                                }
                                gw.at(co, ci, r, c) += acc;
                            }
                        }
                    }
                }
            }
            if (bias->requires_grad) {
                bias->ensure_grad();
                for (int co = 0; co < cout; ++co) {
                    T acc = T(0);
                    for (int n = 0; n < os.n; ++n)
                        for (int oh = 0; oh < os.h; ++oh)
                            for (int ow = 0; ow < os.w; ++ow) acc += go.at(n, co, oh, ow);
                    bias->grad.data[co] += acc;
                }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// activations

template <typename T>
Var<T> activation(Tape<T>* tape, const Var<T>& x, Activation kind) {
    auto out = make_var(Tensor<T>(x->value.shape));
    const std::size_t n = x->value.numel();
    if (kind == Activation::relu) {
        for (std::size_t i = 0; i < n; ++i) {
            T v = x->value.data[i];
            out->value.data[i] = v > T(0) ? v : T(0);
        }
    } else {
        for (std::size_t i = 0; i < n; ++i)
            out->value.data[i] = T(1) / (T(1) + std::exp(-x->value.data[i]));
    }
    require_finite(out->value, "activation forward");

    if (detail::track(tape, {&x})) {
        out->requires_grad = true;
        tape->record([x, out, kind]() {
            if (!x->requires_grad) return;
            x->ensure_grad();
            const std::size_t n = x->value.numel();
            if (kind == Activation::relu) {
                // derivative at exactly 0 is 0
                for (std::size_t i = 0; i < n; ++i)
                    if (x->value.data[i] > T(0)) x->grad.data[i] += out->grad.data[i];
            } else {
                for (std::size_t i = 0; i < n; ++i) {
                    T s = out->value.data[i];
                    x->grad.data[i] += out->grad.data[i] * s * (T(1) - s);
                }
            }
        });
    }
    return out;
}

template <typename T>
Var<T> relu(Tape<T>* tape, const Var<T>& x) { return activation(tape, x, Activation::relu); }

template <typename T>
Var<T> sigmoid(Tape<T>* tape, const Var<T>& x) { return activation(tape, x, Activation::sigmoid); }

/// Multiplication by a fixed (non-trainable) scalar.
template <typename T>
Var<T> scale_const(Tape<T>* tape, const Var<T>& x, T factor) {
    auto out = make_var(Tensor<T>(x->value.shape));
    const std::size_t n = x->value.numel();
    for (std::size_t i = 0; i < n; ++i) out->value.data[i] = x->value.data[i] * factor;
    require_finite(out->value, "scale_const forward");

    if (detail::track(tape, {&x})) {
        out->requires_grad = true;
        tape->record([x, out, factor]() {
            x->ensure_grad();
            const std::size_t n = out->value.numel();
            for (std::size_t i = 0; i < n; ++i) x->grad.data[i] += out->grad.data[i] * factor;
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// combine: add / concat_channels

template <typename T>
Var<T> add(Tape<T>* tape, const Var<T>& a, const Var<T>& b) {
    if (a->value.shape != b->value.shape)
        throw std::invalid_argument("add: shape mismatch " + a->value.shape.str() + " vs " +
                                    b->value.shape.str());
    auto out = make_var(Tensor<T>(a->value.shape));
    const std::size_t n = a->value.numel();
    for (std::size_t i = 0; i < n; ++i)
        out->value.data[i] = a->value.data[i] + b->value.data[i];
    require_finite(out->value, "add forward");

    if (detail::track(tape, {&a, &b})) {
        out->requires_grad = true;
        tape->record([a, b, out]() {
            const std::size_t n = out->value.numel();
            for (auto& v : {a, b}) {
                if (!v->requires_grad) continue;
                v->ensure_grad();
                for (std::size_t i = 0; i < n; ++i) v->grad.data[i] += out->grad.data[i];
            }
        });
    }
    return out;
}

template <typename T>
Var<T> concat_channels(Tape<T>* tape, const Var<T>& a, const Var<T>& b) {
    const Shape4 sa = a->value.shape, sb = b->value.shape;
    if (sa.n != sb.n || sa.h != sb.h || sa.w != sb.w)
        throw std::invalid_argument("concat_channels: extent mismatch " + sa.str() + " vs " + sb.str());
    Shape4 os{sa.n, sa.c + sb.c, sa.h, sa.w};
    auto out = make_var(Tensor<T>(os));
    for (int n = 0; n < os.n; ++n)
        for (int c = 0; c < os.c; ++c)
            for (int h = 0; h < os.h; ++h)
                for (int w = 0; w < os.w; ++w)
                    out->value.at(n, c, h, w) = c < sa.c ? a->value.at(n, c, h, w)
                                                         : b->value.at(n, c - sa.c, h, w);

    if (detail::track(tape, {&a, &b})) {
        out->requires_grad = true;
        tape->record([a, b, out, sa, os]() {
            for (int n = 0; n < os.n; ++n)
                for (int c = 0; c < os.c; ++c)
                    for (int h = 0; h < os.h; ++h)
                        for (int w = 0; w < os.w; ++w) {
                            const T g = out->grad.at(n, c, h, w);
                            if (c < sa.c) {
                                if (!a->requires_grad) continue;
                                a->ensure_grad();
                                a->grad.at(n, c, h, w) += g;
                            } else {
                                if (!b->requires_grad) continue;
                                b->ensure_grad();
                                b->grad.at(n, c - sa.c, h, w) += g;
                            }
                        }
        });
    }
    return out;
}

template <typename T>
Var<T> combine(Tape<T>* tape, const Var<T>& a, const Var<T>& b, CombineKind kind) {
    return kind == CombineKind::add ? add(tape, a, b) : concat_channels(tape, a, b);
}

// ---------------------------------------------------------------------------
// upsample_nearest2x

template <typename T>
Var<T> upsample_nearest2x(Tape<T>* tape, const Var<T>& x) {
    const Shape4 is = x->value.shape;
    Shape4 os{is.n, is.c, is.h * 2, is.w * 2};
    auto out = make_var(Tensor<T>(os));
    for (int n = 0; n < is.n; ++n)
        for (int c = 0; c < is.c; ++c)
            for (int h = 0; h < os.h; ++h)
                for (int w = 0; w < os.w; ++w)
                    out->value.at(n, c, h, w) = x->value.at(n, c, h / 2, w / 2);

    if (detail::track(tape, {&x})) {
        out->requires_grad = true;
        tape->record([x, out, is, os]() {
            if (!x->requires_grad) return;
            x->ensure_grad();
            for (int n = 0; n < is.n; ++n)
                for (int c = 0; c < is.c; ++c)
                    for (int h = 0; h < os.h; ++h)
                        for (int w = 0; w < os.w; ++w)
                            x->grad.at(n, c, h / 2, w / 2) += out->grad.at(n, c, h, w);
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// batchnorm2d

/// Per-channel batch normalization with running statistics.
template <typename T>
struct BatchNorm2d {
    Var<T> scale;  // C elements, stored as (1,C,1,1)
    Var<T> shift;
    Tensor<T> running_mean;
    Tensor<T> running_var;
    bool initialized = false;
    T momentum = T(0.1);
    T epsilon = T(1e-5);

    explicit BatchNorm2d(int channels, T momentum_ = T(0.1), T epsilon_ = T(1e-5))
        : BatchNorm2d(make_var(Tensor<T>({1, channels, 1, 1}, T(1)), true),
                      make_var(Tensor<T>({1, channels, 1, 1}, T(0)), true), momentum_, epsilon_) {}

    BatchNorm2d(Var<T> scale_, Var<T> shift_, T momentum_ = T(0.1), T epsilon_ = T(1e-5))
        : scale(std::move(scale_)),
          shift(std::move(shift_)),
          running_mean(scale->value.shape),
          running_var(scale->value.shape, T(1)),
          momentum(momentum_),
          epsilon(epsilon_) {}

    Var<T> forward(Tape<T>* tape, const Var<T>& x, Mode mode) {
        const Shape4 is = x->value.shape;
        const int C = is.c;
        if (scale->value.shape.c != C)
            throw std::invalid_argument("batchnorm2d: expected " +
                                        std::to_string(scale->value.shape.c) + " channels, got " +
                                        std::to_string(C));
        if (mode == Mode::eval && !initialized)
            throw std::runtime_error("batchnorm2d: eval before any train step");

        const std::size_t per_channel = static_cast<std::size_t>(is.n) * is.h * is.w;
        std::vector<T> mean(C), invstd(C);
        if (mode == Mode::train) {
            for (int c = 0; c < C; ++c) {
                double m = 0;
                for (int n = 0; n < is.n; ++n)
                    for (int h = 0; h < is.h; ++h)
                        for (int w = 0; w < is.w; ++w) m += x->value.at(n, c, h, w);
                m /= static_cast<double>(per_channel);
                double v = 0;
                for (int n = 0; n < is.n; ++n)
                    for (int h = 0; h < is.h; ++h)
                        for (int w = 0; w < is.w; ++w) {
                            double d = x->value.at(n, c, h, w) - m;
                            v += d * d;
                        }
                v /= static_cast<double>(per_channel);
                mean[c] = static_cast<T>(m);
                invstd[c] = static_cast<T>(1.0 / std::sqrt(v + static_cast<double>(epsilon)));
                running_mean.data[c] = (T(1) - momentum) * running_mean.data[c] + momentum * static_cast<T>(m);
                running_var.data[c] = (T(1) - momentum) * running_var.data[c] + momentum * static_cast<T>(v);
            }
            initialized = true;
        } else {
            for (int c = 0; c < C; ++c) {
                mean[c] = running_mean.data[c];
                invstd[c] = static_cast<T>(
                    1.0 / std::sqrt(static_cast<double>(running_var.data[c]) + static_cast<double>(epsilon)));
            }
        }

        auto out = make_var(Tensor<T>(is));
        auto xhat = std::make_shared<Tensor<T>>(is);  // saved for backward
        for (int n = 0; n < is.n; ++n)
            for (int c = 0; c < C; ++c)
                for (int h = 0; h < is.h; ++h)
                    for (int w = 0; w < is.w; ++w) {
                        T xh = (x->value.at(n, c, h, w) - mean[c]) * invstd[c];
                        xhat->at(n, c, h, w) = xh;
                        out->value.at(n, c, h, w) = scale->value.data[c] * xh + shift->value.data[c];
                    }
        require_finite(out->value, "batchnorm2d forward");

        if (detail::track(tape, {&x, &scale, &shift})) {
            out->requires_grad = true;
            auto sc = scale;
            auto sh = shift;
            auto xin = x;
            std::vector<T> saved_invstd = invstd;
            tape->record([xin, sc, sh, out, xhat, saved_invstd, mode, per_channel]() {
                const Shape4 is = xin->value.shape;
                const int C = is.c;
                for (int c = 0; c < C; ++c) {
                    double sum_g = 0, sum_gx = 0;
                    for (int n = 0; n < is.n; ++n)
                        for (int h = 0; h < is.h; ++h)
                            for (int w = 0; w < is.w; ++w) {
                                double g = out->grad.at(n, c, h, w);
                                sum_g += g;
                                sum_gx += g * xhat->at(n, c, h, w);
                            }
                    if (sh->requires_grad) {
                        sh->ensure_grad();
                        sh->grad.data[c] += static_cast<T>(sum_g);
                    }
                    if (sc->requires_grad) {
                        sc->ensure_grad();
                        sc->grad.data[c] += static_cast<T>(sum_gx);
                    }
                    if (xin->requires_grad) {
                        xin->ensure_grad();
                        const double gamma = sc->value.data[c];
                        const double istd = saved_invstd[c];
                        const double m = static_cast<double>(per_channel);
                        for (int n = 0; n < is.n; ++n)
                            for (int h = 0; h < is.h; ++h)
                                for (int w = 0; w < is.w; ++w) {
                                    double g = out->grad.at(n, c, h, w);
                                    double dx;
                                    if (mode == Mode::train) {
                                        dx = gamma * istd *
                                             (g - sum_g / m - xhat->at(n, c, h, w) * sum_gx / m);
                                    } else {
                                        dx = gamma * istd * g;
                                    }
                                    xin->grad.at(n, c, h, w) += static_cast<T>(dx);
                                }
                    }
                }
            });
        }
        return out;
    }
};

}  // namespace sanet
