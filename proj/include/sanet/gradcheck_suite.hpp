#pragma once

#include <functional>
#include <iomanip>
#include <ostream>
#include <string>
#include <vector>

#include "sanet/gradcheck.hpp"
#include "sanet/losses.hpp"
#include "sanet/model.hpp"
#include "sanet/superpixel.hpp"
#include "sanet/trainer.hpp"

namespace sanet {

namespace detail {

inline SuperpixelMap random_map(int h, int w, int regions, Rng& rng) {
    // random rectangular seeds grown into a Voronoi partition, then compacted
    SuperpixelMap map(h, w, regions);
    std::vector<std::pair<int, int>> seeds;
    for (int k = 0; k < regions; ++k)
        seeds.push_back({static_cast<int>(uniform(rng, 0, h)), static_cast<int>(uniform(rng, 0, w))});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            int best = 0;
            double best_d = 1e30;
            for (int k = 0; k < regions; ++k) {
                double dy = y - seeds[k].first, dx = x - seeds[k].second;
                double d = dy * dy + dx * dx;
                if (d < best_d) {
                    best_d = d;
                    best = k;
                }
            }
            map.at(y, x) = best;
        }
    // compact in case a seed captured no pixels
    std::vector<std::int32_t> remap(regions, -1);
    int next = 0;
    for (auto& l : map.labels) {
        if (remap[l] < 0) remap[l] = next++;
        l = remap[l];
    }
    map.region_count = next;
    return map;
}

// keeps relu inputs away from the kink so finite differences stay two-sided
template <typename T>
void push_from_zero(Tensor<T>& t, T margin) {
    for (auto& v : t.data)
        if (std::abs(static_cast<double>(v)) < static_cast<double>(margin))
            v = v >= T(0) ? margin : -margin;
}

}  // namespace detail

struct SuiteEntry {
    std::string name;
    double max_rel_err;
    double tolerance;
    bool passed;
};

/// Finite-difference check for a loss given as a pure (value, grad) function.
inline double loss_fd_error(const std::function<LossValue(const SuperpixelTargets&)>& fn,
                            int regions, int trials, double step, std::uint64_t seed) {
    Rng rng(seed);
    double worst = 0;
    for (int t = 0; t < trials; ++t) {
        SuperpixelTargets targets(regions);
        for (auto& p : targets.p) {
            p = uniform(rng, 0.02, 0.98);
            // keep clear of the truncation boundary so two-sided differences
            // never straddle the piecewise seam
            for (double boundary : {0.2, 0.8})
                if (std::abs(p - boundary) < 0.005) p = boundary + 0.01;
        }
        for (auto& q : targets.q) q = uniform(rng, 0, 1) < 0.4 ? 1 : 0;
        // an all-negative class makes the per-class jaccard gradient collapse to
        // the epsilon scale, below what central differences can resolve; keep
        // every class represented so the check probes meaningful gradients
        for (int k = 0; k < kAttributeCount; ++k) {
            bool any = false;
            for (int i = 0; i < regions; ++i) any = any || targets.truth(i, k);
            if (!any) targets.truth(static_cast<int>(uniform(rng, 0, regions)), k) = 1;
        }
        LossValue analytic = fn(targets);
        for (std::size_t i = 0; i < targets.p.size(); ++i) {
            double saved = targets.p[i];
            targets.p[i] = saved + step;
            double up = fn(targets).value;
            targets.p[i] = saved - step;
            double down = fn(targets).value;
            targets.p[i] = saved;
            worst = std::max(worst, relative_error(analytic.grad[i], (up - down) / (2 * step)));
        }
    }
    return worst;
}

/// End-to-end probe: gradient of total_loss w.r.t. randomly chosen parameter
/// elements of a small model, against central finite differences.
template <typename T>
double end_to_end_fd_error(int trials, double step, std::uint64_t seed) {
    ModelConfig mc;
    mc.height = mc.width = 28;
    mc.base_channels = 4;
    mc.seed = seed;
    // probe at unit head gain: the production gain only multiplies the logits
    // by a constant (checked by its own op entry) but inflates the curvature
    // seen by the finite-difference quotient far past the tolerance
    mc.head_gain = 1.0;
    ToySanet<T> model(mc);

    Rng rng(seed + 1);
    SuperpixelMap map = detail::random_map(28, 28, 4, rng);
    Tensor<T> image({1, 3, 28, 28});
    for (auto& v : image.data) v = static_cast<T>(uniform(rng, 0, 1));
    std::vector<std::uint8_t> q(static_cast<std::size_t>(map.region_count) * kAttributeCount);
    for (auto& v : q) v = uniform(rng, 0, 1) < 0.4 ? 1 : 0;
    LossConfig loss_cfg;
    loss_cfg.gamma = 1.0;
    loss_cfg.theta = 0.2;

    auto eval_loss = [&]() {
        Tape<T> tape;
        SanetOutput<T> out = model.forward(&tape, image, map, Mode::train);
        TotalLossValue detail;
        total_loss_op<T>(nullptr, out.sp_probs, q, loss_cfg, &detail);
        return detail.value;
    };

    // one analytic backward, then probe random parameter elements
    model.zero_grad();
    Tape<T> tape;
    SanetOutput<T> out = model.forward(&tape, image, map, Mode::train);
    Var<T> loss = total_loss_op(&tape, out.sp_probs, q, loss_cfg);
    tape.backward(loss);

    auto& params = model.parameters();
    double worst = 0;
    for (int t = 0; t < trials; ++t) {
        std::size_t pi = static_cast<std::size_t>(uniform(rng, 0, static_cast<double>(params.size())));
        pi = std::min(pi, params.size() - 1);
        auto& p = params[pi];
        std::size_t ei = static_cast<std::size_t>(uniform(rng, 0, static_cast<double>(p.value->value.numel())));
        ei = std::min(ei, p.value->value.numel() - 1);

        double analytic = p.value->grad.empty() ? 0.0 : static_cast<double>(p.value->grad.data[ei]);
        T saved = p.value->value.data[ei];
        p.value->value.data[ei] = saved + static_cast<T>(step);
        double up = eval_loss();
        p.value->value.data[ei] = saved - static_cast<T>(step);
        double down = eval_loss();
        p.value->value.data[ei] = saved;
        worst = std::max(worst, relative_error(analytic, (up - down) / (2 * step)));
    }
    return worst;
}

/// Runs the full gradient suite (layer ops, pooling, SAM, the loss family,
/// end-to-end) and prints one line per entry. Returns all-passed.
template <typename T>
bool run_gradcheck_suite(std::ostream& out, const std::string& op_filter = "", int trials = 100,
                         double step = 1e-4, double op_tol = 1e-5, double end_to_end_tol = 1e-3) {
    std::vector<SuiteEntry> entries;
    Rng map_rng(99);
    SuperpixelMap map8 = detail::random_map(8, 8, 5, map_rng);

    auto add_op = [&](const std::string& name,
                      const std::function<Var<T>(Tape<T>*, std::vector<Var<T>>&)>& build,
                      std::vector<Shape4> shapes, double tol,
                      const std::function<void(std::vector<Var<T>>&)>& prepare = {}) {
        if (!op_filter.empty() && name != op_filter) return;
        GradCheckReport r = grad_check<T>(name, build, shapes, trials, step, 1234, prepare);
        entries.push_back({name, r.worst, tol, r.ok(tol)});
    };
    auto add_value = [&](const std::string& name, double err, double tol) {
        if (!op_filter.empty() && name != op_filter) return;
        entries.push_back({name, err, tol, err < tol});
    };

    add_op("conv2d",
           [](Tape<T>* t, std::vector<Var<T>>& in) { return conv2d(t, in[0], in[1], in[2], 1, 1); },
           {{1, 2, 5, 5}, {3, 2, 3, 3}, {1, 3, 1, 1}}, op_tol);
    add_op("conv2d_strided",
           [](Tape<T>* t, std::vector<Var<T>>& in) { return conv2d(t, in[0], in[1], in[2], 2, 1); },
           {{1, 2, 6, 6}, {3, 2, 3, 3}, {1, 3, 1, 1}}, op_tol);
    add_op("relu",
           [](Tape<T>* t, std::vector<Var<T>>& in) { return relu(t, in[0]); },
           {{1, 2, 4, 4}}, op_tol,
           [step](std::vector<Var<T>>& in) {
               detail::push_from_zero(in[0]->value, static_cast<T>(16 * step));
           });
    add_op("sigmoid",
           [](Tape<T>* t, std::vector<Var<T>>& in) { return sigmoid(t, in[0]); }, {{1, 2, 4, 4}},
           op_tol);
    add_op("scale_const",
           [](Tape<T>* t, std::vector<Var<T>>& in) {
               return scale_const(t, in[0], static_cast<T>(7.5));
           },
           {{1, 2, 4, 4}}, op_tol);
    add_op("add",
           [](Tape<T>* t, std::vector<Var<T>>& in) { return add(t, in[0], in[1]); },
           {{1, 2, 3, 3}, {1, 2, 3, 3}}, op_tol);
    add_op("concat_channels",
           [](Tape<T>* t, std::vector<Var<T>>& in) { return concat_channels(t, in[0], in[1]); },
           {{1, 2, 3, 3}, {1, 3, 3, 3}}, op_tol);
    add_op("batchnorm2d",
           [](Tape<T>* t, std::vector<Var<T>>& in) {
               BatchNorm2d<T> bn(in[1], in[2]);
               return bn.forward(t, in[0], Mode::train);
           },
           {{2, 3, 4, 4}, {1, 3, 1, 1}, {1, 3, 1, 1}}, op_tol);
    add_op("upsample_nearest2x",
           [](Tape<T>* t, std::vector<Var<T>>& in) { return upsample_nearest2x(t, in[0]); },
           {{1, 2, 3, 3}}, op_tol);
    add_op("sp_avg_pool",
           [map8](Tape<T>* t, std::vector<Var<T>>& in) { return sp_avg_pool_op(t, in[0], map8); },
           {{1, 3, 8, 8}}, op_tol);
    add_op("sp_unpool",
           [map8](Tape<T>* t, std::vector<Var<T>>& in) { return sp_unpool_op(t, in[0], map8); },
           {{1, 3, map8.region_count, 1}}, op_tol);
    add_op("sam_forward",
           [map8](Tape<T>* t, std::vector<Var<T>>& in) {
               auto zero_bias = make_var(Tensor<T>({1, 3, 1, 1}), false);
               return sam_forward(t, in[0], map8, in[1], zero_bias);
           },
           {{1, 3, 8, 8}, {3, 3, 1, 1}}, op_tol);

    LossConfig plain;
    LossConfig shaped;
    shaped.gamma = 1.0;
    shaped.theta = 0.2;
    const int loss_trials = std::max(1, trials / 10);
    if (op_filter.empty() || op_filter == "jal")
        add_value("jal", loss_fd_error([](const SuperpixelTargets& t) { return jal(t.p, t.q, 1e-6); },
                                       6, loss_trials, step / 10, 11),
                  op_tol);
    if (op_filter.empty() || op_filter == "jal_macro")
        add_value("jal_macro",
                  loss_fd_error([](const SuperpixelTargets& t) { return jal_macro(t, 1e-6); }, 6,
                                loss_trials, step / 10, 12),
                  op_tol);
    if (op_filter.empty() || op_filter == "jal_micro")
        add_value("jal_micro",
                  loss_fd_error([](const SuperpixelTargets& t) { return jal_micro(t, 1e-6); }, 6,
                                loss_trials, step / 10, 13),
                  op_tol);
    if (op_filter.empty() || op_filter == "gbjal")
        add_value("gbjal",
                  loss_fd_error([plain](const SuperpixelTargets& t) { return gbjal(t, plain); }, 6,
                                loss_trials, step / 10, 14),
                  op_tol);
    if (op_filter.empty() || op_filter == "gbcel")
        add_value("gbcel",
                  loss_fd_error([shaped](const SuperpixelTargets& t) { return gbcel(t, shaped); }, 6,
                                loss_trials, step / 10, 15),
                  op_tol);
    if (op_filter.empty() || op_filter == "baseline_ce_jal")
        add_value("baseline_ce_jal",
                  loss_fd_error(
                      [plain](const SuperpixelTargets& t) { return baseline_ce_jal(t, plain); }, 6,
                      loss_trials, step / 10, 16),
                  op_tol);
    if (op_filter.empty() || op_filter == "total_loss")
        add_value("total_loss",
                  loss_fd_error(
                      [shaped](const SuperpixelTargets& t) {
                          TotalLossValue v = total_loss(t, shaped);
                          return LossValue{v.value, v.grad};
                      },
                      6, loss_trials, step / 10, 17),
                  op_tol);
    if (op_filter.empty() || op_filter == "end_to_end")
        add_value("end_to_end", end_to_end_fd_error<T>(trials, step / 10, 21), end_to_end_tol);

    bool all_ok = true;
    for (const auto& e : entries) {
        out << (e.passed ? "[PASS] " : "[FAIL] ") << std::left << std::setw(20) << e.name
            << " max rel err " << std::scientific << std::setprecision(3) << e.max_rel_err
            << " (tol " << e.tolerance << ")\n" << std::defaultfloat;
        all_ok = all_ok && e.passed;
    }
    if (entries.empty()) {
        out << "no operation matched '" << op_filter << "'\n";
        return false;
    }
    return all_ok;
}

}  // namespace sanet
