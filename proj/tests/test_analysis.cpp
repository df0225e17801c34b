#include <boost/math/distributions/fisher_f.hpp>
#include <cmath>
#include <numbers>

#include "doctest.h"
#include "mdcgan/analysis.hpp"
#include "support.hpp"

using namespace mdcgan;

namespace {

// standard deviations of two 101-image batches, and their published F decisions
constexpr double kStd1 = 40.81453, kStd2 = 31.979033;
constexpr std::size_t kN = 101;

SampleStats stats(double sd) { return {kN, 124.0, sd}; }

double boost_quantile(double p, double d1, double d2) {
    return boost::math::quantile(boost::math::fisher_f(d1, d2), p);
}

}  // namespace

TEST_SUITE("analysis") {

TEST_CASE("snr") {
    const std::vector<float> s{1, 2, 3, 4};
    std::vector<float> n = s;
    for (float& v : n) v *= 2;  // noise == signal, equal power
    CHECK(snr_db(s, n) == doctest::Approx(0.0).epsilon(1e-12));
    // signal power 10, noise power 1
    const float r10 = std::sqrt(10.0f);
    const std::vector<float> sig{r10, r10, r10, r10}, noisy{r10 + 1, r10 - 1, r10 + 1, r10 - 1};
    CHECK(snr_db(sig, noisy) == doctest::Approx(10.0).epsilon(1e-6));
    CHECK(snr_db(s, s) == kInfiniteSnr);
    CHECK_THROWS(snr_db(s, std::vector<float>{1, 2}));
}

TEST_CASE("distances") {
    const std::vector<float> o{0, 0}, p{3, 4};
    CHECK(distance(o, p, Norm::l2) == 5.0);
    CHECK(distance(o, p, Norm::l1) == 7.0);
    CHECK(distance(p, p, Norm::l1) == 0.0);
    CHECK(distance(p, p, Norm::l2) == 0.0);
    CHECK(distance(std::vector<float>{1, -1}, std::vector<float>{-1, 1}, Norm::l1) == 4.0);
    CHECK_THROWS(distance(o, std::vector<float>{1}, Norm::l2));

    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const auto x = test::values(test::random_tensor<float>({16}, seed * 3));
        const auto y = test::values(test::random_tensor<float>({16}, seed * 3 + 1));
        const auto z = test::values(test::random_tensor<float>({16}, seed * 3 + 2));
        CHECK(distance(x, z, Norm::l2) <= distance(x, y, Norm::l2) + distance(y, z, Norm::l2) + 1e-9);
        CHECK(distance(x, y, Norm::l1) >= distance(x, y, Norm::l2));
    }
}

TEST_CASE("sample statistics") {
    const std::vector<Image> two{Image(4, 4, 100.0f), Image(4, 4, 200.0f)};
    const auto s = sample_statistics(two);
    CHECK(s.n == 2);
    CHECK(s.mean == doctest::Approx(150.0));
    CHECK(s.stddev == doctest::Approx(100.0 / std::sqrt(2.0)));
    CHECK(s.stddev == doctest::Approx(70.7107).epsilon(1e-6));

    const std::vector<Image> same{Image(2, 2, 9.0f), Image(2, 2, 9.0f), Image(2, 2, 9.0f)};
    CHECK(sample_statistics(same).stddev == 0.0);

    const std::vector<double> obs{3, 9, 1, 7, 4}, perm{7, 1, 4, 9, 3};
    CHECK(sample_statistics(obs).stddev == doctest::Approx(sample_statistics(perm).stddev).epsilon(1e-15));
    CHECK(sample_statistics(obs).mean == doctest::Approx(4.8));
    CHECK_THROWS(sample_statistics(std::vector<double>{1.0}));
    CHECK_THROWS(sample_statistics(std::vector<Image>{Image(2, 2)}));
}

TEST_CASE("F statistic from the published standard deviations") {
    const double f = f_statistic(stats(kStd1), stats(kStd2));
    CHECK(std::abs(f - 1.629) <= 0.0005);
    CHECK(f_statistic(stats(3), stats(3)) == 1.0);
    CHECK(f * f_statistic(stats(kStd2), stats(kStd1)) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK_THROWS(f_statistic(stats(1), stats(0)));
}

TEST_CASE("incomplete beta against closed forms") {
    // I_x(1, b) = 1 - (1 - x)^b ; I_x(a, 1) = x^a
    for (double x : {0.05, 0.3, 0.5, 0.77, 0.99}) {
        CHECK(regularized_incomplete_beta(x, 1, 4.5) == doctest::Approx(1 - std::pow(1 - x, 4.5)).epsilon(1e-12));
        CHECK(regularized_incomplete_beta(x, 2.5, 1) == doctest::Approx(std::pow(x, 2.5)).epsilon(1e-12));
    }
    CHECK(regularized_incomplete_beta(0, 2, 3) == 0.0);
    CHECK(regularized_incomplete_beta(1, 2, 3) == 1.0);
}

TEST_CASE("F quantiles") {
    CHECK(std::abs(f_quantile(0.95, 100, 100) - 1.392) <= 0.01);
    CHECK(std::abs(f_quantile(0.99, 100, 100) - 1.598) <= 0.01);
    for (double d : {1.0, 4.0, 30.0, 100.0}) CHECK(f_quantile(0.5, d, d) == doctest::Approx(1.0).epsilon(1e-9));
    for (double p : {0.5, 0.9})
        CHECK(f_quantile(p, 1, 1) == doctest::Approx(std::pow(std::tan(std::numbers::pi * p / 2), 2)).epsilon(1e-8));
    CHECK_THROWS(f_quantile(0.0, 3, 3));
    CHECK_THROWS(f_quantile(1.0, 3, 3));
    CHECK_THROWS(f_quantile(0.5, 0, 3));
}

TEST_CASE("F distribution against an independent implementation") {
    for (double d1 : {1.0, 2.0, 5.0, 17.0, 100.0})
        for (double d2 : {1.0, 3.0, 12.0, 100.0, 400.0})
            for (double p : {0.01, 0.05, 0.25, 0.5, 0.75, 0.95, 0.99}) {
                CAPTURE(d1);
                CAPTURE(d2);
                CAPTURE(p);
                const double q = f_quantile(p, d1, d2);
                CHECK(q == doctest::Approx(boost_quantile(p, d1, d2)).epsilon(1e-7));
                CHECK(std::abs(f_cdf(q, d1, d2) - p) <= 1e-8);
                CHECK(f_cdf(q, d1, d2) ==
                      doctest::Approx(boost::math::cdf(boost::math::fisher_f(d1, d2), q)).epsilon(1e-8));
            }
}

TEST_CASE("F quantile increases with p") {
    for (double d1 : {2.0, 9.0, 100.0})
        for (double d2 : {3.0, 100.0}) {
            double prev = 0;
            for (int i = 1; i < 100; ++i) {
                const double q = f_quantile(i / 100.0, d1, d2);
                REQUIRE(q > prev);
                prev = q;
            }
        }
}

TEST_CASE("F test reproduces the published decisions") {
    const auto r05 = f_test(stats(kStd1), stats(kStd2), 0.05);
    CHECK(r05.d1 == 100);
    CHECK(r05.d2 == 100);
    CHECK(std::abs(r05.f - 1.629) <= 0.0005);
    CHECK(std::abs(r05.critical_value - 1.392) <= 0.01);
    CHECK(r05.reject);
    CHECK_FALSE(r05.note.empty());

    const auto r01 = f_test(stats(kStd1), stats(kStd2), 0.01);
    CHECK(std::abs(r01.critical_value - 1.598) <= 0.01);
    CHECK(r01.reject);
    CHECK(r01.f == r05.f);

    const auto same = f_test(stats(kStd1), stats(kStd1), 0.05);
    CHECK(same.f == 1.0);
    CHECK_FALSE(same.reject);

    const auto two = f_test(stats(kStd1), stats(kStd2), 0.05, Tail::two_sided);
    CHECK(two.critical_value == doctest::Approx(boost_quantile(0.975, 100, 100)).epsilon(1e-7));
    CHECK(two.critical_value_low == doctest::Approx(boost_quantile(0.025, 100, 100)).epsilon(1e-7));
    CHECK(two.reject);
    CHECK_THROWS(f_test(stats(kStd1), stats(kStd2), 1.5));
}

TEST_CASE("report") {
    std::vector<Image> a;
    for (int i = 0; i < 5; ++i) a.push_back(Image(4, 4, static_cast<float>(20 * i + 40)));
    const auto self = analyze(a, a, 0.05);
    CHECK(self.snr_db == kInfiniteSnr);
    CHECK(self.l1 == 0.0);
    CHECK(self.l2 == 0.0);
    CHECK(self.test.f == 1.0);
    CHECK_FALSE(self.test.reject);
    const auto text = self.to_text();
    CHECK(text.find("snr_db: inf") != std::string::npos);
    CHECK(text.find("reject_h0: false") != std::string::npos);
    const auto header = AnalysisReport::csv_header();
    const auto row = self.to_csv_row();
    CHECK(std::count(header.begin(), header.end(), ',') == std::count(row.begin(), row.end(), ','));
    CHECK_THROWS(analyze(a, std::vector<Image>(a.begin(), a.begin() + 3), 0.05));
}

}  // TEST_SUITE
