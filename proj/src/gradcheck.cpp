#include "mdcgan/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "mdcgan/random.hpp"

namespace mdcgan {

namespace {

double relative_error(double analytic, double numeric, double floor) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
    return std::abs(analytic - numeric) / denom;
}

template <class T>
double central_difference(const std::function<Tensor<T>()>& loss, std::span<T> values, std::size_t index,
                          double eps) {
    const T original = values[index];
    values[index] = static_cast<T>(original + eps);
    const double step_up = static_cast<double>(values[index]) - original;
    const double plus = loss().item();
    values[index] = static_cast<T>(original - eps);
    const double step_down = original - static_cast<double>(values[index]);
    const double minus = loss().item();
    values[index] = original;
    // The representable step differs from eps at 32-bit.
    return (plus - minus) / (step_up + step_down);
}

}  // namespace

template <class T>
GradCheckReport compare_gradients(const std::vector<std::vector<double>>& analytic,
                                  const std::function<Tensor<T>()>& loss, std::vector<Tensor<T>> params,
                                  const GradCheckOptions& options) {
    if (analytic.size() != params.size()) throw std::invalid_argument("compare_gradients: tensor count mismatch");
    GradCheckReport report;
    Rng rng(options.seed);
    NoGradGuard guard;
    for (std::size_t t = 0; t < params.size(); ++t) {
        auto& param = params[t];
        if (!analytic[t].empty() && analytic[t].size() != param.numel())
            throw std::invalid_argument("compare_gradients: gradient size mismatch");
        std::vector<std::size_t> coords(param.numel());
        std::iota(coords.begin(), coords.end(), std::size_t{0});
        if (options.coords_per_tensor > 0 && coords.size() > options.coords_per_tensor) {
            rng.shuffle(coords);
            coords.resize(options.coords_per_tensor);
            std::sort(coords.begin(), coords.end());
        }
        auto values = param.data();
        for (std::size_t index : coords) {
            const double a = analytic[t].empty() ? 0.0 : analytic[t][index];
            double eps = options.eps;
            double numeric = central_difference<T>(loss, values, index, eps);
            double err = relative_error(a, numeric, options.floor);
            // A kink within the step (ReLU at zero) spoils the quotient; a
            // shorter step steps past it, a wrong gradient does not.
            for (std::size_t r = 0; r < options.refinements && err > options.refine_above; ++r) {
                eps /= 10.0;
                const double n = central_difference<T>(loss, values, index, eps);
                const double e = relative_error(a, n, options.floor);
                if (e < err) {
                    err = e;
                    numeric = n;
                }
                ++report.refined;
            }
            ++report.coordinates_checked;
            if (err > report.max_relative_error || report.coordinates_checked == 1) {
                report.max_relative_error = err;
                report.worst_tensor = t;
                report.worst_index = index;
                report.worst_analytic = a;
                report.worst_numeric = numeric;
            }
        }
    }
    return report;
}

template <class T>
std::vector<std::vector<double>> analytic_gradients(const std::function<Tensor<T>()>& loss,
                                                    std::vector<Tensor<T>> params) {
    for (auto& p : params) p.zero_grad();
    loss().backward();
    std::vector<std::vector<double>> out;
    out.reserve(params.size());
    for (const auto& p : params) out.emplace_back(p.grad().begin(), p.grad().end());
    return out;
}

template <class T>
GradCheckReport finite_diff_check_params(const std::function<Tensor<T>()>& loss, std::vector<Tensor<T>> params,
                                         const GradCheckOptions& options) {
    const auto analytic = analytic_gradients<T>(loss, params);
    return compare_gradients<T>(analytic, loss, std::move(params), options);
}

template <class T>
double finite_diff_check(const std::function<Tensor<T>(const Tensor<T>&)>& fn, const Tensor<T>& x, double eps,
                         double floor) {
    Tensor<T> probe = x.detach();
    probe.set_requires_grad(true);
    GradCheckOptions options;
    options.eps = eps;
    options.floor = floor;
    options.refinements = 0;
    return finite_diff_check_params<T>([&] { return fn(probe); }, {probe}, options).max_relative_error;
}

#define MDCGAN_GRADCHECK(T)                                                                                       \
    template double finite_diff_check<T>(const std::function<Tensor<T>(const Tensor<T>&)>&, const Tensor<T>&,   \
                                         double, double);                                                        \
    template GradCheckReport finite_diff_check_params<T>(const std::function<Tensor<T>()>&,                      \
                                                         std::vector<Tensor<T>>, const GradCheckOptions&);      \
    template GradCheckReport compare_gradients<T>(const std::vector<std::vector<double>>&,                       \
                                                  const std::function<Tensor<T>()>&, std::vector<Tensor<T>>,     \
                                                  const GradCheckOptions&);                                      \
    template std::vector<std::vector<double>> analytic_gradients<T>(const std::function<Tensor<T>()>&,           \
                                                                    std::vector<Tensor<T>>);

MDCGAN_GRADCHECK(float)
MDCGAN_GRADCHECK(double)

#undef MDCGAN_GRADCHECK

}  // namespace mdcgan
