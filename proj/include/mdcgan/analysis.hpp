#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mdcgan/image_io.hpp"

namespace mdcgan {

/// Returned by snr_db when the two batches are identical.
inline constexpr double kInfiniteSnr = std::numeric_limits<double>::infinity();

/// 10 log10(P_signal / P_noise); power is the mean squared value and the
/// noise is `noisy - signal`.
double snr_db(std::span<const float> signal, std::span<const float> noisy);
double snr_db(const std::vector<Image>& signal, const std::vector<Image>& noisy);

enum class Norm { l1, l2 };

double distance(std::span<const float> x, std::span<const float> y, Norm norm);
double distance(const std::vector<Image>& x, const std::vector<Image>& y, Norm norm);

struct SampleStats {
    std::size_t n = 0;
    double mean = 0;
    double stddev = 0;  // divisor n - 1
};

/// Mean and sample standard deviation of raw observations (n >= 2).
SampleStats sample_statistics(std::span<const double> observations);
/// One observation per image: its mean intensity in [0, 255].
SampleStats sample_statistics(const std::vector<Image>& images);

/// s1.stddev^2 / s2.stddev^2.
double f_statistic(const SampleStats& s1, const SampleStats& s2);

/// I_x(a, b) by Lentz's continued fraction.
double regularized_incomplete_beta(double x, double a, double b);

double f_cdf(double f, double d1, double d2);

class ConvergenceError : public std::runtime_error {
public:
    ConvergenceError(const std::string& what, std::size_t iterations)
        : std::runtime_error(what + " after " + std::to_string(iterations) + " iterations"), iterations_(iterations) {}
    std::size_t iterations() const { return iterations_; }

private:
    std::size_t iterations_;
};

/// Inverse CDF by bisection to an interval width of 1e-10.
double f_quantile(double p, double d1, double d2);

enum class Tail { upper, two_sided };

struct FTestResult {
    double f = 0;
    std::size_t d1 = 0, d2 = 0;
    double alpha = 0;
    Tail tail = Tail::upper;
    double critical_value = 0;        // upper critical value
    double critical_value_low = 0;    // two-sided only
    bool reject = false;
    std::string note;
};

FTestResult f_test(const SampleStats& s1, const SampleStats& s2, double alpha, Tail tail = Tail::upper);

struct AnalysisReport {
    double snr_db = 0;
    double l1 = 0;
    double l2 = 0;
    SampleStats first;
    SampleStats second;
    FTestResult test;

    /// "key: value" lines.
    std::string to_text() const;
    static std::string csv_header();
    std::string to_csv_row() const;
};

/// Full report comparing two equally sized image batches.
AnalysisReport analyze(const std::vector<Image>& first, const std::vector<Image>& second, double alpha,
                       Tail tail = Tail::upper);

}  // namespace mdcgan
