#include "mdcgan/analysis.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace mdcgan {

namespace {

std::vector<float> flatten(const std::vector<Image>& images) {
    std::vector<float> out;
    for (const auto& img : images) out.insert(out.end(), img.values.begin(), img.values.end());
    return out;
}

void require_same_batch(const std::vector<Image>& a, const std::vector<Image>& b, const char* op) {
    if (a.size() != b.size()) throw std::invalid_argument(std::string(op) + ": batch sizes differ");
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i].height != b[i].height || a[i].width != b[i].width)
            throw std::invalid_argument(std::string(op) + ": image " + std::to_string(i) + " sizes differ");
}

std::string num(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

}  // namespace

double snr_db(std::span<const float> signal, std::span<const float> noisy) {
    if (signal.size() != noisy.size() || signal.empty())
        throw std::invalid_argument("snr_db: inputs must be non-empty and the same size");
    double ps = 0, pn = 0;
    for (std::size_t i = 0; i < signal.size(); ++i) {
        const double s = signal[i];
        const double d = static_cast<double>(noisy[i]) - s;
        ps += s * s;
        pn += d * d;
    }
    if (pn == 0) return kInfiniteSnr;
    // The 1/n of both means cancels.
    return 10.0 * std::log10(ps / pn);
}

double snr_db(const std::vector<Image>& signal, const std::vector<Image>& noisy) {
    require_same_batch(signal, noisy, "snr_db");
    return snr_db(flatten(signal), flatten(noisy));
}

double distance(std::span<const float> x, std::span<const float> y, Norm norm) {
    if (x.size() != y.size())
        throw std::invalid_argument("distance: lengths differ (" + std::to_string(x.size()) + " vs " +
                                    std::to_string(y.size()) + ")");
    double s = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = static_cast<double>(x[i]) - y[i];
        s += norm == Norm::l1 ? std::abs(d) : d * d;
    }
    return norm == Norm::l1 ? s : std::sqrt(s);
}

double distance(const std::vector<Image>& x, const std::vector<Image>& y, Norm norm) {
    require_same_batch(x, y, "distance");
    return distance(flatten(x), flatten(y), norm);
}

SampleStats sample_statistics(std::span<const double> obs) {
    if (obs.size() < 2) throw std::invalid_argument("sample_statistics needs at least 2 observations");
    SampleStats s;
    s.n = obs.size();
    for (double v : obs) s.mean += v;
    s.mean /= static_cast<double>(s.n);
    double ss = 0;
    for (double v : obs) ss += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(ss / static_cast<double>(s.n - 1));
    return s;
}

SampleStats sample_statistics(const std::vector<Image>& images) {
    std::vector<double> obs;
    obs.reserve(images.size());
    for (const auto& img : images) {
        if (img.values.empty()) throw std::invalid_argument("sample_statistics: empty image");
        double s = 0;
        for (float v : img.values) s += v;
        obs.push_back(s / static_cast<double>(img.values.size()));
    }
    return sample_statistics(obs);
}

double f_statistic(const SampleStats& s1, const SampleStats& s2) {
    if (!(s2.stddev > 0)) throw std::invalid_argument("f_statistic: second sample has zero variance");
    return (s1.stddev * s1.stddev) / (s2.stddev * s2.stddev);
}

namespace {

// Continued fraction for I_x(a,b), modified Lentz.
double beta_cf(double x, double a, double b) {
    constexpr int kMaxIter = 10000;
    constexpr double kEps = 1e-15, kTiny = 1e-300;
    const double qab = a + b, qap = a + 1, qam = a - 1;
    double c = 1, d = 1 - qab * x / qap;
    if (std::abs(d) < kTiny) d = kTiny;
    d = 1 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1 / d;
        const double delta = d * c;
        h *= delta;
        if (std::abs(delta - 1) < kEps) return h;
    }
    throw ConvergenceError("incomplete beta continued fraction did not converge", kMaxIter);
}

}  // namespace

double regularized_incomplete_beta(double x, double a, double b) {
    if (!(a > 0) || !(b > 0)) throw std::invalid_argument("incomplete beta needs a, b > 0");
    if (!(x >= 0 && x <= 1)) throw std::invalid_argument("incomplete beta needs 0 <= x <= 1");
    if (x == 0) return 0;
    if (x == 1) return 1;
    const double log_front =
        std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(log_front);
    // The fraction converges fast on the side of the mean; use symmetry otherwise.
    if (x < (a + 1) / (a + b + 2)) return front * beta_cf(x, a, b) / a;
    return 1 - front * beta_cf(1 - x, b, a) / b;
}

double f_cdf(double f, double d1, double d2) {
    if (!(d1 > 0) || !(d2 > 0)) throw std::invalid_argument("F distribution needs positive degrees of freedom");
    if (f <= 0) return 0;
    if (std::isinf(f)) return 1;
    const double x = d1 * f / (d1 * f + d2);
    return regularized_incomplete_beta(x, d1 / 2, d2 / 2);
}

double f_quantile(double p, double d1, double d2) {
    if (!(p > 0 && p < 1)) throw std::invalid_argument("f_quantile needs 0 < p < 1");
    if (!(d1 >= 1) || !(d2 >= 1)) throw std::invalid_argument("f_quantile needs degrees of freedom >= 1");
    double lo = 0, hi = 1;
    std::size_t iterations = 0;
    constexpr std::size_t kMaxIter = 2000;
    while (f_cdf(hi, d1, d2) < p) {
        lo = hi;
        hi *= 2;
        if (++iterations > kMaxIter || std::isinf(hi))
            throw ConvergenceError("f_quantile could not bracket p=" + num(p), iterations);
    }
    while (hi - lo > 1e-10) {
        const double mid = 0.5 * (lo + hi);
        if (f_cdf(mid, d1, d2) < p) lo = mid;
        else hi = mid;
        if (++iterations > kMaxIter) throw ConvergenceError("f_quantile bisection did not converge", iterations);
    }
    return 0.5 * (lo + hi);
}

FTestResult f_test(const SampleStats& s1, const SampleStats& s2, double alpha, Tail tail) {
    if (!(alpha > 0 && alpha < 1)) throw std::invalid_argument("alpha must lie in (0, 1)");
    if (s1.n < 2 || s2.n < 2) throw std::invalid_argument("f_test needs at least 2 observations per sample");
    FTestResult r;
    r.f = f_statistic(s1, s2);
    r.d1 = s1.n - 1;
    r.d2 = s2.n - 1;
    r.alpha = alpha;
    r.tail = tail;
    const auto d1 = static_cast<double>(r.d1), d2 = static_cast<double>(r.d2);
    if (tail == Tail::upper) {
        r.critical_value = f_quantile(1 - alpha, d1, d2);
        r.reject = r.f >= r.critical_value;
        r.note = "upper tail: reject H0 (equal variances) when F >= c";
    } else {
        r.critical_value_low = f_quantile(alpha / 2, d1, d2);
        r.critical_value = f_quantile(1 - alpha / 2, d1, d2);
        r.reject = r.f <= r.critical_value_low || r.f >= r.critical_value;
        r.note = "two-sided: reject H0 (equal variances) when F <= c_low or F >= c_high";
    }
    return r;
}

std::string AnalysisReport::to_text() const {
    std::ostringstream out;
    out << "snr_db: " << num(snr_db) << '\n'
        << "l1: " << num(l1) << '\n'
        << "l2: " << num(l2) << '\n'
        << "n1: " << first.n << '\n'
        << "mean1: " << num(first.mean) << '\n'
        << "std1: " << num(first.stddev) << '\n'
        << "n2: " << second.n << '\n'
        << "mean2: " << num(second.mean) << '\n'
        << "std2: " << num(second.stddev) << '\n'
        << "f: " << num(test.f) << '\n'
        << "dof: " << test.d1 << ',' << test.d2 << '\n'
        << "alpha: " << num(test.alpha) << '\n'
        << "tail: " << (test.tail == Tail::upper ? "upper" : "two-sided") << '\n';
    if (test.tail == Tail::two_sided) out << "critical_value_low: " << num(test.critical_value_low) << '\n';
    out << "critical_value: " << num(test.critical_value) << '\n'
        << "reject_h0: " << (test.reject ? "true" : "false") << '\n'
        << "note: " << test.note << '\n';
    return out.str();
}

std::string AnalysisReport::csv_header() {
    return "snr_db,l1,l2,n1,mean1,std1,n2,mean2,std2,f,d1,d2,alpha,tail,critical_low,critical,reject";
}

std::string AnalysisReport::to_csv_row() const {
    std::ostringstream out;
    out << num(snr_db) << ',' << num(l1) << ',' << num(l2) << ',' << first.n << ',' << num(first.mean) << ','
        << num(first.stddev) << ',' << second.n << ',' << num(second.mean) << ',' << num(second.stddev) << ','
        << num(test.f) << ',' << test.d1 << ',' << test.d2 << ',' << num(test.alpha) << ','
        << (test.tail == Tail::upper ? "upper" : "two-sided") << ','
        << (test.tail == Tail::two_sided ? num(test.critical_value_low) : "") << ',' << num(test.critical_value)
        << ',' << (test.reject ? 1 : 0);
    return out.str();
}

AnalysisReport analyze(const std::vector<Image>& first, const std::vector<Image>& second, double alpha, Tail tail) {
    AnalysisReport r;
    r.snr_db = snr_db(first, second);
    r.l1 = distance(first, second, Norm::l1);
    r.l2 = distance(first, second, Norm::l2);
    r.first = sample_statistics(first);
    r.second = sample_statistics(second);
    r.test = f_test(r.first, r.second, alpha, tail);
    return r;
}

}  // namespace mdcgan
