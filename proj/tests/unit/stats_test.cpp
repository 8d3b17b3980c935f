#include "ablatron/error.hpp"
#include "ablatron/stats.hpp"

#include "helpers.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

using namespace ablatron;

namespace {

// Exact two-sided p of U for tie-free samples, by enumerating every way of
// assigning n1 of the pooled ranks to the first sample.
double enumerated_p(std::span<const double> a, std::span<const double> b)
{
    std::vector<double> pooled(a.begin(), a.end());
    pooled.insert(pooled.end(), b.begin(), b.end());
    std::sort(pooled.begin(), pooled.end());
    double ra = 0;
    for (double v : a) ra += double(std::lower_bound(pooled.begin(), pooled.end(), v) - pooled.begin()) + 1;
    const std::size_t n1 = a.size(), n = pooled.size();
    const double u = ra - double(n1 * (n1 + 1)) / 2;
    std::vector<int> pick(n, 0);
    std::fill(pick.begin(), pick.begin() + long(n1), 1);
    std::sort(pick.begin(), pick.end());
    std::size_t total = 0, le = 0, ge = 0;
    do {
        double r = 0;
        for (std::size_t i = 0; i < n; ++i) r += pick[i] ? double(i + 1) : 0.0;
        const double uu = r - double(n1 * (n1 + 1)) / 2;
        ++total;
        le += uu <= u;
        ge += uu >= u;
    } while (std::next_permutation(pick.begin(), pick.end()));
    return std::min(1.0, 2.0 * double(std::min(le, ge)) / double(total));
}

}  // namespace

TEST_SUITE("stats") {

TEST_CASE("identical samples give z = 0 and p = 1")
{
    const double a[] = {0.3, 1.7, 2.2, 5.0};
    const UTestResult r = mann_whitney_u(a, a);
    CHECK(r.z_score == 0.0);
    CHECK(r.p_value == 1.0);
    CHECK(r.u_statistic == 8.0);
}

TEST_CASE("[1,2] vs [3,4]")
{
    const double a[] = {1, 2}, b[] = {3, 4};
    const double exact = enumerated_p(a, b);
    CHECK(exact == doctest::Approx(1.0 / 3.0));
    const UTestResult r = mann_whitney_u(a, b);
    CHECK(r.u_statistic == 0.0);
    CHECK(std::abs(r.p_value - exact) <= 0.05);
}

TEST_CASE("[1,3,5] vs [2,4,6]")
{
    const double a[] = {1, 3, 5}, b[] = {2, 4, 6};
    const UTestResult r = mann_whitney_u(a, b);
    CHECK(r.u_statistic == 3.0);
    CHECK(std::abs(r.p_value - enumerated_p(a, b)) <= 0.05);
}

TEST_CASE("small tie-free samples agree with enumeration")
{
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (std::size_t n1 = 2; n1 <= 7; ++n1) {
        for (std::size_t n2 = 2; n2 <= 7; ++n2) {
            for (int rep = 0; rep < 3; ++rep) {
                std::vector<double> a(n1), b(n2);
                for (double& v : a) v = u(rng);
                for (double& v : b) v = u(rng) + 0.3 * rep;
                CAPTURE(n1);
                CAPTURE(n2);
                const UTestResult r = mann_whitney_u(a, b);
                CHECK(std::abs(r.p_value - enumerated_p(a, b)) <= 1e-12);
                CHECK(r.exact);
            }
        }
    }
}

TEST_CASE("normal approximation with ties follows the textbook formula")
{
    const std::vector<double> a{1, 2, 2, 3, 5, 8, 8, 9, 11, 12};
    const std::vector<double> b{2, 4, 4, 6, 7, 8, 10, 13, 14, 15, 15};
    const UTestResult r = mann_whitney_u(a, b, PValueMethod::normal);
    // oracle: rank by counting, tie term sum(t^3 - t)
    std::vector<double> pooled = a;
    pooled.insert(pooled.end(), b.begin(), b.end());
    auto rank = [&](double v) {
        double less = 0, eq = 0;
        for (double p : pooled) {
            less += p < v;
            eq += p == v;
        }
        return less + (eq + 1) / 2;
    };
    double ra = 0;
    for (double v : a) ra += rank(v);
    const double n1 = 10, n2 = 11, n = 21;
    const double u = ra - n1 * (n1 + 1) / 2;
    double ties = 0;
    std::vector<double> s = pooled;
    std::sort(s.begin(), s.end());
    for (std::size_t i = 0; i < s.size();) {
        std::size_t j = i;
        while (j < s.size() && s[j] == s[i]) ++j;
        const double t = double(j - i);
        ties += t * t * t - t;
        i = j;
    }
    const double sigma = std::sqrt(n1 * n2 / 12 * ((n + 1) - ties / (n * (n - 1))));
    const double z = (std::abs(u - n1 * n2 / 2) - 0.5) / sigma;
    CHECK(r.u_statistic == u);
    CHECK(std::abs(r.z_score) == doctest::Approx(z).epsilon(1e-12));
    CHECK(r.p_value == doctest::Approx(std::erfc(z / std::sqrt(2.0))).epsilon(1e-12));
    CHECK_FALSE(r.exact);
}

TEST_CASE("U complement law and symmetry")
{
    std::mt19937_64 rng(6);
    std::uniform_int_distribution<int> d(0, 6);  // plenty of ties
    for (int rep = 0; rep < 50; ++rep) {
        std::vector<double> a(3 + rep % 9), b(2 + rep % 13);
        for (double& v : a) v = d(rng);
        for (double& v : b) v = d(rng);
        if (std::all_of(a.begin(), a.end(), [&](double v) { return v == a[0]; }) &&
            std::all_of(b.begin(), b.end(), [&](double v) { return v == a[0]; })) {
            continue;
        }
        const UTestResult ab = mann_whitney_u(a, b), ba = mann_whitney_u(b, a);
        CHECK(ab.u_statistic + ba.u_statistic == double(a.size() * b.size()));
        CHECK(ab.p_value == ba.p_value);
        CHECK(ab.u_statistic >= 0.0);
        CHECK(ab.p_value > 0.0);
        CHECK(ab.p_value <= 1.0);
    }
}

TEST_CASE("degenerate inputs")
{
    const double same[] = {2, 2, 2}, one[] = {1}, two[] = {1, 2};
    CHECK_THROWS_AS(mann_whitney_u(same, same), StatsError);
    CHECK_THROWS_AS(mann_whitney_u(one, two), StatsError);
    const double tied[] = {1, 2}, other[] = {2, 3};
    CHECK_THROWS_AS(mann_whitney_u(tied, other, PValueMethod::exact), StatsError);
}

TEST_CASE("midranks average ties")
{
    const double v[] = {10, 20, 20, 5, 20};
    CHECK(midranks(v) == std::vector<double>{2, 4, 4, 1, 4});
}

TEST_CASE("unit_change_pvalue")
{
    const std::vector<LayerSpec> arch = mlp_architecture(std::vector<std::uint32_t>{784, 20, 10, 10});
    const Network init = init_network(arch, 1);
    CHECK(unit_change_pvalue(init, init, 0, 3) == 1.0);
    Network shifted = init;
    const double sigma = 1.0 / std::sqrt(784.0);
    for (float& w : shifted.layers[0].unit_weights(3)) w += static_cast<float>(5 * sigma);
    CHECK(unit_change_pvalue(init, shifted, 0, 3) < 1e-6);
    CHECK(unit_change_pvalue(init, shifted, 0, 4) == 1.0);
    CHECK_THROWS_AS(unit_change_pvalue(init, shifted, 0, 20), ConfigError);
}

TEST_CASE("pearson")
{
    const double x[] = {1, 2, 3, 4, 5};
    double y[5], z[5];
    for (int i = 0; i < 5; ++i) {
        y[i] = 2 * x[i] + 1;
        z[i] = -x[i];
    }
    CHECK(std::abs(pearson(x, y) - 1.0) <= 1e-12);
    CHECK(std::abs(pearson(x, z) + 1.0) <= 1e-12);
    const double a[] = {1, 2, 3}, b[] = {1, 3, 2};
    // oracle: cov = 0.5, var = 1 for both (n-1 convention cancels)
    CHECK(pearson(a, b) == doctest::Approx(0.5).epsilon(1e-12));
    const double c[] = {4, 4, 4};
    CHECK_THROWS_AS(pearson(a, c), StatsError);
    const double shortv[] = {1};
    CHECK_THROWS_AS(pearson(shortv, shortv), StatsError);
}

TEST_CASE("pearson affine invariance")
{
    std::mt19937_64 rng(7);
    std::normal_distribution<double> d;
    std::vector<double> x(30), y(30);
    for (std::size_t i = 0; i < 30; ++i) {
        x[i] = d(rng);
        y[i] = x[i] * 0.5 + d(rng);
    }
    const double base = pearson(x, y);
    for (const double a : {3.0, -0.25, 1e3}) {
        std::vector<double> t(30);
        for (std::size_t i = 0; i < 30; ++i) t[i] = a * x[i] - 7.0;
        CHECK(std::abs(pearson(t, y) - std::copysign(1.0, a) * base) <= 1e-12);
    }
}

TEST_CASE("spearman")
{
    const double x[] = {1, 2, 3}, y[] = {1, 3, 2};
    // oracle: 1 - 6 sum d^2 / (n (n^2 - 1)) with d = (0, -1, 1)
    CHECK(spearman(x, y) == doctest::Approx(1.0 - 6.0 * 2.0 / (3.0 * 8.0)).epsilon(1e-12));
    const double inc[] = {0.1, 5, 7, 100}, sq[] = {0.01, 25, 49, 10000}, rev[] = {100, 7, 5, 0.1};
    CHECK(spearman(inc, sq) == doctest::Approx(1.0));
    CHECK(spearman(inc, rev) == doctest::Approx(-1.0));
}

TEST_CASE("spearman is invariant under increasing transforms")
{
    std::mt19937_64 rng(8);
    std::normal_distribution<double> d;
    std::vector<double> x(25), y(25), fx(25);
    for (std::size_t i = 0; i < 25; ++i) {
        x[i] = d(rng);
        y[i] = x[i] + d(rng);
        fx[i] = std::exp(3 * x[i]);
    }
    CHECK(spearman(fx, y) == spearman(x, y));
}

TEST_CASE("selectivity deviation")
{
    const std::vector<std::vector<double>> m{{0, 3, 1}, {10, 3, 2}};
    const SelectivityProfile p = selectivity_deviation(m);
    REQUIRE(p.per_class_stddev.size() == 3);
    CHECK(p.per_class_stddev[0] == doctest::Approx(5.0));
    CHECK(p.per_class_stddev[1] == 0.0);
    CHECK(p.per_class_stddev[2] == doctest::Approx(0.5));
    const SelectivityProfile stack[] = {p, p, p};
    const auto mean = mean_selectivity(stack);
    for (std::size_t c = 0; c < 3; ++c) CHECK(mean[c] == doctest::Approx(p.per_class_stddev[c]));
    CHECK_THROWS_AS(selectivity_deviation({{1, 2}}), StatsError);
    CHECK_THROWS_AS(selectivity_deviation({{1, 2}, {1}}), StatsError);
}

}
