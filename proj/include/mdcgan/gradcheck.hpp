#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "mdcgan/tensor.hpp"

namespace mdcgan {

struct GradCheckOptions {
    double eps = 1e-6;
    /// Denominator floor for |a - n| / max(|a|, |n|, floor), so coordinates
    /// whose true gradient is zero do not divide by rounding noise.
    double floor = 1e-8;
    /// 0 checks every coordinate; otherwise a seeded sample per tensor.
    std::size_t coords_per_tensor = 0;
    std::uint64_t seed = 0;
    /// Coordinates whose error exceeds `refine_above` are re-measured with
    /// the step divided by 10, up to this many times; the smallest error
    /// counts. Piecewise-linear activations make a fixed step unreliable
    /// wherever an input lies within eps of a kink.
    std::size_t refinements = 2;
    double refine_above = 1e-5;
};

struct GradCheckReport {
    double max_relative_error = 0.0;
    std::size_t coordinates_checked = 0;
    std::size_t refined = 0;  // extra step evaluations spent on refinement
    // Location of the worst coordinate.
    std::size_t worst_tensor = 0;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
};

/// Compares the analytic gradient of a scalar `fn` at `x` against central
/// differences (fn(x + eps e) - fn(x - eps e)) / (2 eps) and returns the
/// largest relative error. No step refinement.
template <class T>
double finite_diff_check(const std::function<Tensor<T>(const Tensor<T>&)>& fn, const Tensor<T>& x,
                         double eps, double floor = 1e-8);

/// Same check over every tensor in `params`, which `loss` reads through
/// shared state (e.g. model parameters). `loss` must be deterministic.
template <class T>
GradCheckReport finite_diff_check_params(const std::function<Tensor<T>()>& loss, std::vector<Tensor<T>> params,
                                         const GradCheckOptions& options);

/// dLoss/dParam for each tensor via one backward pass.
template <class T>
std::vector<std::vector<double>> analytic_gradients(const std::function<Tensor<T>()>& loss,
                                                    std::vector<Tensor<T>> params);

/// Checks externally supplied gradients (possibly computed at another
/// precision) against central differences of `loss` over `params`.
template <class T>
GradCheckReport compare_gradients(const std::vector<std::vector<double>>& analytic,
                                  const std::function<Tensor<T>()>& loss, std::vector<Tensor<T>> params,
                                  const GradCheckOptions& options);

}  // namespace mdcgan
