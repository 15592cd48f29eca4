#include <catch_amalgamated.hpp>

#include "sanet/gradcheck.hpp"
#include "sanet/gradcheck_suite.hpp"

using namespace sanet;

TEST_CASE("relative error helper") {
    CHECK(relative_error(1.0, 1.0) == 0.0);
    CHECK(relative_error(0.0, 0.0) == 0.0);
    CHECK(relative_error(2.0, 1.0) == Catch::Approx(0.5));
}

TEST_CASE("grad_check agrees with finite differences for conv2d (f64)") {
    GradCheckReport r = grad_check<double>(
        "conv2d",
        [](Tape<double>* t, std::vector<Var<double>>& in) {
            return conv2d(t, in[0], in[1], in[2], 1, 1);
        },
        {{1, 2, 5, 5}, {3, 2, 3, 3}, {1, 3, 1, 1}}, 5, 1e-4);
    INFO("worst " << r.worst);
    CHECK(r.ok(1e-5));
}

TEST_CASE("grad_check flags a deliberately wrong gradient") {
    // sigmoid forward with relu backward: must fail the check
    auto broken = [](Tape<double>* tape, std::vector<Var<double>>& in) {
        auto x = in[0];
        auto out = make_var(Tensor<double>(x->value.shape));
        for (std::size_t i = 0; i < x->value.numel(); ++i)
            out->value.data[i] = 1.0 / (1.0 + std::exp(-x->value.data[i]));
        if (tape) {
            out->requires_grad = true;
            tape->record([x, out]() {
                x->ensure_grad();
                for (std::size_t i = 0; i < x->value.numel(); ++i)
                    if (x->value.data[i] > 0) x->grad.data[i] += out->grad.data[i];
            });
        }
        return out;
    };
    GradCheckReport r = grad_check<double>("broken", broken, {{1, 1, 3, 3}}, 3, 1e-4);
    CHECK_FALSE(r.ok(1e-5));
}

TEST_CASE("batchnorm2d gradients (f64)") {
    GradCheckReport r = grad_check<double>(
        "batchnorm2d",
        [](Tape<double>* t, std::vector<Var<double>>& in) {
            BatchNorm2d<double> bn(in[1], in[2]);
            return bn.forward(t, in[0], Mode::train);
        },
        {{2, 3, 4, 4}, {1, 3, 1, 1}, {1, 3, 1, 1}}, 5, 1e-4);
    INFO("worst " << r.worst);
    CHECK(r.ok(1e-5));
}

TEST_CASE("full f64 suite passes at the published tolerances") {
    std::ostringstream log;
    bool ok = run_gradcheck_suite<double>(log, "", 8, 1e-4, 1e-5, 1e-3);
    INFO(log.str());
    CHECK(ok);
}

TEST_CASE("f32 suite passes at relaxed tolerances") {
    std::ostringstream log;
    bool ok = run_gradcheck_suite<float>(log, "", 4, 1e-2, 1e-2, 5e-2);
    INFO(log.str());
    CHECK(ok);
}

TEST_CASE("op filter selects a single entry and unknown names are reported") {
    std::ostringstream log;
    CHECK(run_gradcheck_suite<double>(log, "sigmoid", 3, 1e-4, 1e-5, 1e-3));
    CHECK(log.str().find("sigmoid") != std::string::npos);
    CHECK(log.str().find("conv2d") == std::string::npos);

    std::ostringstream log2;
    CHECK_FALSE(run_gradcheck_suite<double>(log2, "no_such_op", 1, 1e-4, 1e-5, 1e-3));
}
