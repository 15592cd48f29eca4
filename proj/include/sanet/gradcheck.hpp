#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "sanet/autodiff.hpp"
#include "sanet/random.hpp"
#include "sanet/tensor.hpp"

namespace sanet {

struct GradCheckReport {
    std::string op_name;
    std::vector<double> max_rel_err;  // one entry per differentiable argument
    double worst = 0.0;

    bool ok(double tol) const { return worst < tol; }
};

inline double relative_error(double analytic, double numeric) {
    double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    return std::abs(analytic - numeric) / denom;
}

/// Compares analytic gradients of an operation against central finite
/// differences on random N(0,1) inputs.
///
/// `build` runs the operation under a tape: (tape, inputs) -> output variable.
/// The check contracts the output with a random projection so a single
/// backward pass covers all output elements. `prepare` (optional) adjusts the
/// sampled inputs once per trial, before any evaluation — e.g. to keep relu
/// inputs away from the kink without distorting the perturbed evaluations.
template <typename T>
GradCheckReport grad_check(const std::string& op_name,
                           const std::function<Var<T>(Tape<T>*, std::vector<Var<T>>&)>& build,
                           const std::vector<Shape4>& input_shapes, int trials, double step,
                           std::uint64_t seed = 1234,
                           const std::function<void(std::vector<Var<T>>&)>& prepare = {}) {
    GradCheckReport report;
    report.op_name = op_name;
    report.max_rel_err.assign(input_shapes.size(), 0.0);

    Rng rng(seed);
    for (int trial = 0; trial < trials; ++trial) {
        std::vector<Var<T>> inputs;
        inputs.reserve(input_shapes.size());
        for (const Shape4& s : input_shapes) {
            Tensor<T> t(s);
            for (auto& v : t.data) v = static_cast<T>(normal(rng, 0.0, 1.0));
            inputs.push_back(make_var(std::move(t), true));
        }
        if (prepare) prepare(inputs);

        Tape<T> tape;
        Var<T> out = build(&tape, inputs);
        Tensor<T> projection(out->value.shape);
        for (auto& v : projection.data) v = static_cast<T>(normal(rng, 0.0, 1.0));
        tape.backward(out, projection);

        auto project = [&](std::vector<Var<T>>& ins) {
            Var<T> o = build(nullptr, ins);
            double s = 0;
            for (std::size_t i = 0; i < o->value.numel(); ++i)
                s += static_cast<double>(o->value.data[i]) * static_cast<double>(projection.data[i]);
            return s;
        };

        for (std::size_t a = 0; a < inputs.size(); ++a) {
            for (std::size_t i = 0; i < inputs[a]->value.numel(); ++i) {
                const T saved = inputs[a]->value.data[i];
                inputs[a]->value.data[i] = saved + static_cast<T>(step);
                double up = project(inputs);
                inputs[a]->value.data[i] = saved - static_cast<T>(step);
                double down = project(inputs);
                inputs[a]->value.data[i] = saved;

                double numeric = (up - down) / (2.0 * step);
                double analytic = static_cast<double>(inputs[a]->grad.data[i]);
                double err = relative_error(analytic, numeric);
                report.max_rel_err[a] = std::max(report.max_rel_err[a], err);
            }
        }
    }
    report.worst = report.max_rel_err.empty()
                       ? 0.0
                       : *std::max_element(report.max_rel_err.begin(), report.max_rel_err.end());
    return report;
}

}  // namespace sanet
