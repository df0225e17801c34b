#include "doctest.h"
#include "gradient_suite.hpp"

using namespace mdcgan;

TEST_SUITE("gradcheck") {

TEST_CASE("every operation at 64-bit") {
    for (auto& c : test::op_cases<double>()) {
        const auto r = finite_diff_check_params<double>(c.loss, c.inputs, test::kDoubleCheck);
        INFO(c.name << " worst analytic " << r.worst_analytic << " numeric " << r.worst_numeric);
        CHECK(r.max_relative_error <= 1e-4);
    }
}

TEST_CASE("every operation at 32-bit") {
    for (auto& c : test::op_cases<float>()) {
        const auto r = finite_diff_check_params<float>(c.loss, c.inputs, test::kFloatCheck);
        INFO(c.name << " worst analytic " << r.worst_analytic << " numeric " << r.worst_numeric);
        CHECK(r.max_relative_error <= 1e-2);
    }
}

TEST_CASE("checker sees a wrong gradient") {
    // d/dx of x*x computed through a detached copy misses half the gradient
    auto x = test::leaf<double>({4}, 3);
    const auto r = finite_diff_check_params<double>([&] { return sum(mul(x, x.detach())); }, {x},
                                                    test::kDoubleCheck);
    CHECK(r.max_relative_error == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("end-to-end scale-8 losses") {
    const auto d64 = test::discriminator_check_double(8, 5);
    const auto g64 = test::generator_check_double(8, 5);
    const auto d32 = test::discriminator_check_float(8, 5);
    const auto g32 = test::generator_check_float(8, 5);
    INFO("D64 " << d64.max_relative_error << " G64 " << g64.max_relative_error);
    INFO("D32 " << d32.max_relative_error << " G32 " << g32.max_relative_error);
    CHECK(d64.max_relative_error <= 1e-4);
    CHECK(g64.max_relative_error <= 1e-4);
    CHECK(d32.max_relative_error <= 1e-2);
    CHECK(g32.max_relative_error <= 1e-2);
}

TEST_CASE("generator loss gradient with respect to the latent batch") {
    const auto r = test::latent_check_float(8, 5);
    CHECK(r.coordinates_checked == 4 * kLatentDim);
    CHECK(r.max_relative_error <= 1e-2);
}

}  // TEST_SUITE
