#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "sanet/autodiff.hpp"
#include "sanet/sample.hpp"

namespace sanet {

struct LossConfig {
    double gamma = 1.0;   // focusing exponent
    double theta = 0.0;   // truncation boundary (0 disables truncation)
    std::array<double, kAttributeCount> class_weights{1, 1, 1, 1, 1};
    double epsilon = 1e-6;  // jaccard smoothing
    double jal_micro_weight = 0.5;
    double jal_macro_weight = 0.5;
    double gbcel_weight = 0.5;
    double gbjal_weight = 0.5;
    double prob_floor = 1e-7;  // clamp before any log

    void validate() const {
        if (gamma < 0) throw std::invalid_argument("LossConfig: gamma must be >= 0");
        if (theta < 0 || theta >= 1) throw std::invalid_argument("LossConfig: theta must be in [0,1)");
        if (epsilon <= 0) throw std::invalid_argument("LossConfig: epsilon must be positive");
        for (double w : class_weights)
            if (w <= 0) throw std::invalid_argument("LossConfig: class weights must be positive");
    }
};

/// Per-superpixel per-class predictions and binary ground truth, K x 5 row-major.
struct SuperpixelTargets {
    int region_count = 0;
    std::vector<double> p;        // probabilities in [0,1]
    std::vector<std::uint8_t> q;  // {0,1}

    SuperpixelTargets() = default;
    explicit SuperpixelTargets(int k)
        : region_count(k),
          p(static_cast<std::size_t>(k) * kAttributeCount, 0.0),
          q(static_cast<std::size_t>(k) * kAttributeCount, 0) {}

    std::size_t terms() const { return p.size(); }
    double& prob(int region, int cls) {
        return p[static_cast<std::size_t>(region) * kAttributeCount + cls];
    }
    std::uint8_t& truth(int region, int cls) {
        return q[static_cast<std::size_t>(region) * kAttributeCount + cls];
    }
};

struct LossValue {
    double value = 0.0;
    std::vector<double> grad;  // d value / d p, same layout as p
};

// ---------------------------------------------------------------------------
// jaccard losses, denominator as printed (sum p^2 + sum q^2)

inline LossValue jal(std::span<const double> p, std::span<const std::uint8_t> q, double epsilon) {
    if (p.size() != q.size()) throw std::invalid_argument("jal: p/q size mismatch");
    double num = epsilon, den = epsilon;
    for (std::size_t i = 0; i < p.size(); ++i) {
        num += p[i] * q[i];
        den += p[i] * p[i] + static_cast<double>(q[i]) * q[i];
    }
    LossValue out;
    out.value = 1.0 - num / den;
    out.grad.resize(p.size());
    for (std::size_t i = 0; i < p.size(); ++i)
        out.grad[i] = (2.0 * p[i] * num - q[i] * den) / (den * den);
    return out;
}

inline LossValue jal_macro(const SuperpixelTargets& t, double epsilon) {
    LossValue out;
    out.grad.assign(t.terms(), 0.0);
    const int K = t.region_count;
    std::vector<double> pc(K);
    std::vector<std::uint8_t> qc(K);
    for (int k = 0; k < kAttributeCount; ++k) {
        for (int i = 0; i < K; ++i) {
            pc[i] = t.p[static_cast<std::size_t>(i) * kAttributeCount + k];
            qc[i] = t.q[static_cast<std::size_t>(i) * kAttributeCount + k];
        }
        LossValue cls = jal(pc, qc, epsilon);
        out.value += cls.value / kAttributeCount;
        for (int i = 0; i < K; ++i)
            out.grad[static_cast<std::size_t>(i) * kAttributeCount + k] = cls.grad[i] / kAttributeCount;
    }
    return out;
}

inline LossValue jal_micro(const SuperpixelTargets& t, double epsilon) {
    return jal(t.p, t.q, epsilon);
}

inline LossValue gbjal(const SuperpixelTargets& t, const LossConfig& cfg) {
    LossValue micro = jal_micro(t, cfg.epsilon);
    LossValue macro = jal_macro(t, cfg.epsilon);
    LossValue out;
    out.value = cfg.jal_micro_weight * micro.value + cfg.jal_macro_weight * macro.value;
    out.grad.resize(t.terms());
    for (std::size_t i = 0; i < t.terms(); ++i)
        out.grad[i] = cfg.jal_micro_weight * micro.grad[i] + cfg.jal_macro_weight * macro.grad[i];
    return out;
}

// ---------------------------------------------------------------------------
// focal and the truncated cross-entropy family, pointwise in p_t

inline double focal(double p_t, double gamma) {
    if (p_t >= 1.0) return 0.0;
    return -std::pow(1.0 - p_t, gamma) * std::log(p_t);
}

inline double focal_grad(double p_t, double gamma) {
    if (p_t >= 1.0) return gamma == 0.0 ? -1.0 : 0.0;
    double g = -std::pow(1.0 - p_t, gamma) / p_t;
    if (gamma > 0.0) g += gamma * std::pow(1.0 - p_t, gamma - 1.0) * std::log(p_t);
    return g;
}

/// One term of the global balancing cross entropy loss: quadratic plateau
/// below theta, focal above, continuous at the boundary.
inline std::pair<double, double> gbcel_pointwise(double p_t, const LossConfig& cfg) {
    if (cfg.theta > 0.0 && p_t < cfg.theta) {
        double value = focal(cfg.theta, cfg.gamma) + 0.5 * (1.0 - p_t * p_t / (cfg.theta * cfg.theta));
        double grad = -p_t / (cfg.theta * cfg.theta);
        return {value, grad};
    }
    return {focal(p_t, cfg.gamma), focal_grad(p_t, cfg.gamma)};
}

inline LossValue gbcel(const SuperpixelTargets& t, const LossConfig& cfg) {
    LossValue out;
    out.grad.assign(t.terms(), 0.0);
    const double n_terms = static_cast<double>(t.terms());
    for (std::size_t i = 0; i < t.terms(); ++i) {
        int cls = static_cast<int>(i % kAttributeCount);
        double w = cfg.class_weights[cls];
        double p = std::clamp(t.p[i], cfg.prob_floor, 1.0);
        double p_t = t.q[i] ? p : 1.0 - p;
        p_t = std::clamp(p_t, cfg.prob_floor, 1.0);
        auto [value, dpt] = gbcel_pointwise(p_t, cfg);
        out.value += w * value / n_terms;
        out.grad[i] = w * dpt * (t.q[i] ? 1.0 : -1.0) / n_terms;
    }
    return out;
}

/// Plain 0.5 * CE + 0.5 * macro jaccard (the ablation baseline).
inline LossValue baseline_ce_jal(const SuperpixelTargets& t, const LossConfig& cfg) {
    LossValue out;
    out.grad.assign(t.terms(), 0.0);
    const double n_terms = static_cast<double>(t.terms());
    double ce = 0.0;
    for (std::size_t i = 0; i < t.terms(); ++i) {
        double p = std::clamp(t.p[i], cfg.prob_floor, 1.0);
        double p_t = std::clamp(t.q[i] ? p : 1.0 - p, cfg.prob_floor, 1.0);
        ce += -std::log(p_t) / n_terms;
        out.grad[i] = 0.5 * (-1.0 / p_t) * (t.q[i] ? 1.0 : -1.0) / n_terms;
    }
    LossValue macro = jal_macro(t, cfg.epsilon);
    out.value = 0.5 * ce + 0.5 * macro.value;
    for (std::size_t i = 0; i < t.terms(); ++i) out.grad[i] += 0.5 * macro.grad[i];
    return out;
}

struct TotalLossValue {
    double value = 0.0;
    double gbcel_part = 0.0;
    double gbjal_part = 0.0;
    std::vector<double> grad;
};

inline TotalLossValue total_loss(const SuperpixelTargets& t, const LossConfig& cfg) {
    LossValue ce = gbcel(t, cfg);
    LossValue ja = gbjal(t, cfg);
    TotalLossValue out;
    out.gbcel_part = ce.value;
    out.gbjal_part = ja.value;
    out.value = cfg.gbcel_weight * ce.value + cfg.gbjal_weight * ja.value;
    out.grad.resize(t.terms());
    for (std::size_t i = 0; i < t.terms(); ++i)
        out.grad[i] = cfg.gbcel_weight * ce.grad[i] + cfg.gbjal_weight * ja.grad[i];
    return out;
}

// ---------------------------------------------------------------------------
// tape hook: scalar loss variable over a (1,5,K,1) probability tensor

template <typename T>
Var<T> total_loss_op(Tape<T>* tape, const Var<T>& probs, const std::vector<std::uint8_t>& q,
                     const LossConfig& cfg, TotalLossValue* detail_out = nullptr) {
    const Shape4 s = probs->value.shape;
    if (s.c != kAttributeCount)
        throw std::invalid_argument("total_loss_op: expected 5 channels, got " + std::to_string(s.c));
    const int K = s.h;
    SuperpixelTargets t(K);
    for (int i = 0; i < K; ++i)
        for (int k = 0; k < kAttributeCount; ++k) {
            t.prob(i, k) = static_cast<double>(probs->value.at(0, k, i, 0));
            t.truth(i, k) = q[static_cast<std::size_t>(i) * kAttributeCount + k];
        }
    TotalLossValue loss = total_loss(t, cfg);
    if (detail_out) *detail_out = loss;

    auto out = make_var(Tensor<T>({1, 1, 1, 1}));
    out->value.data[0] = static_cast<T>(loss.value);
    require_finite(out->value, "total_loss forward");

    if (detail::track(tape, {&probs})) {
        out->requires_grad = true;
        std::vector<double> grad = loss.grad;
        tape->record([probs, out, grad, K]() {
            if (!probs->requires_grad) return;
            probs->ensure_grad();
            const T g0 = out->grad.data[0];
            for (int i = 0; i < K; ++i)
                for (int k = 0; k < kAttributeCount; ++k)
                    probs->grad.at(0, k, i, 0) +=
                        g0 * static_cast<T>(grad[static_cast<std::size_t>(i) * kAttributeCount + k]);
        });
    }
    return out;
}

}  // namespace sanet
