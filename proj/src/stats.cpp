#include "ablatron/stats.hpp"

#include "ablatron/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace ablatron {

std::vector<double> midranks(std::span<const double> values)
{
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(values.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j < order.size() && values[order[j]] == values[order[i]]) ++j;
        const double rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        for (std::size_t t = i; t < j; ++t) ranks[order[t]] = rank;
        i = j;
    }
    return ranks;
}

namespace {

// Number of arrangements of n1 + n2 distinct ranks with U_a = u, u = 0..n1*n2.
std::vector<double> exact_u_counts(std::size_t n1, std::size_t n2)
{
    // f[i][j] over u; f(i, j, u) = f(i - 1, j, u - j) + f(i, j - 1, u)
    const std::size_t umax = n1 * n2;
    std::vector<std::vector<std::vector<double>>> f(n1 + 1, std::vector<std::vector<double>>(n2 + 1));
    for (std::size_t i = 0; i <= n1; ++i) {
        for (std::size_t j = 0; j <= n2; ++j) {
            std::vector<double>& cur = f[i][j];
            cur.assign(i * j + 1, 0.0);
            if (i == 0 || j == 0) {
                cur[0] = 1.0;
                continue;
            }
            const std::vector<double>& drop_a = f[i - 1][j];
            const std::vector<double>& drop_b = f[i][j - 1];
            for (std::size_t u = 0; u < drop_a.size(); ++u) cur[u + j] += drop_a[u];
            for (std::size_t u = 0; u < drop_b.size(); ++u) cur[u] += drop_b[u];
        }
    }
    std::vector<double> counts = std::move(f[n1][n2]);
    counts.resize(umax + 1, 0.0);
    return counts;
}

bool has_ties(std::span<const double> a, std::span<const double> b)
{
    std::vector<double> all(a.begin(), a.end());
    all.insert(all.end(), b.begin(), b.end());
    std::sort(all.begin(), all.end());
    return std::adjacent_find(all.begin(), all.end()) != all.end();
}

}  // namespace

UTestResult mann_whitney_u(std::span<const double> a, std::span<const double> b, PValueMethod method)
{
    if (a.size() < 2 || b.size() < 2) throw StatsError("Mann-Whitney U needs at least 2 values per sample");
    for (std::span<const double> s : {a, b}) {
        for (double v : s) {
            if (!std::isfinite(v)) throw StatsError("Mann-Whitney U received a non-finite value");
        }
    }
    const double n1 = static_cast<double>(a.size());
    const double n2 = static_cast<double>(b.size());
    const double n = n1 + n2;

    std::vector<double> pooled(a.begin(), a.end());
    pooled.insert(pooled.end(), b.begin(), b.end());
    const std::vector<double> ranks = midranks(pooled);
    double rank_sum_a = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) rank_sum_a += ranks[i];

    std::vector<double> sorted = pooled;
    std::sort(sorted.begin(), sorted.end());
    double tie_term = 0.0;
    for (std::size_t i = 0; i < sorted.size();) {
        std::size_t j = i;
        while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
        const double t = static_cast<double>(j - i);
        tie_term += t * t * t - t;
        i = j;
    }
    const double variance = n1 * n2 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if (!(variance > 0.0)) throw StatsError("degenerate Mann-Whitney U test: all values are identical");

    UTestResult r;
    r.u_statistic = rank_sum_a - n1 * (n1 + 1.0) / 2.0;
    const double mean = n1 * n2 / 2.0;
    const double deviation = std::max(0.0, std::abs(r.u_statistic - mean) - 0.5);
    r.z_score = std::copysign(deviation / std::sqrt(variance), r.u_statistic - mean);
    if (r.u_statistic == mean) r.z_score = 0.0;

    const bool ties = has_ties(a, b);
    bool use_exact = method == PValueMethod::exact;
    if (method == PValueMethod::exact && ties) throw StatsError("exact U distribution requires tie-free samples");
    if (method == PValueMethod::automatic) {
        use_exact = !ties && a.size() <= kExactUTestMaxSize && b.size() <= kExactUTestMaxSize;
    }
    if (use_exact) {
        const std::vector<double> counts = exact_u_counts(a.size(), b.size());
        const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
        const auto u = static_cast<std::size_t>(std::llround(r.u_statistic));
        const double lower = std::accumulate(counts.begin(), counts.begin() + static_cast<std::ptrdiff_t>(u + 1), 0.0);
        const double upper = std::accumulate(counts.begin() + static_cast<std::ptrdiff_t>(u), counts.end(), 0.0);
        r.p_value = std::min(1.0, 2.0 * std::min(lower, upper) / total);
        r.exact = true;
    } else {
        r.p_value = std::min(1.0, std::erfc(std::abs(r.z_score) / std::sqrt(2.0)));
    }
    return r;
}

double unit_change_pvalue(const Network& initial, const Network& trained, std::size_t layer_index, std::size_t unit)
{
    if (initial.architecture() != trained.architecture()) throw ConfigError("networks do not share an architecture");
    if (layer_index >= initial.layers.size() || !initial.layers[layer_index].spec.has_weights()) {
        throw ConfigError("layer " + std::to_string(layer_index) + " has no weights");
    }
    if (unit >= initial.layers[layer_index].spec.unit_count()) {
        throw ConfigError("unit " + std::to_string(unit) + " is out of range");
    }
    const auto before = initial.layers[layer_index].unit_weights(unit);
    const auto after = trained.layers[layer_index].unit_weights(unit);
    const std::vector<double> a(before.begin(), before.end());
    const std::vector<double> b(after.begin(), after.end());
    return mann_whitney_u(a, b).p_value;
}

double pearson(std::span<const double> x, std::span<const double> y)
{
    if (x.size() != y.size()) throw StatsError("correlation inputs differ in length");
    if (x.size() < 2) throw StatsError("correlation needs at least 2 points");
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0;
    double sxx = 0.0;
    double syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) throw StatsError("correlation undefined for a constant vector");
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double spearman(std::span<const double> x, std::span<const double> y)
{
    if (x.size() != y.size()) throw StatsError("correlation inputs differ in length");
    const std::vector<double> rx = midranks(x);
    const std::vector<double> ry = midranks(y);
    return pearson(rx, ry);
}

SelectivityProfile selectivity_deviation(const std::vector<std::vector<double>>& drop_matrix)
{
    if (drop_matrix.size() < 2) throw StatsError("selectivity needs at least 2 units");
    const std::size_t classes = drop_matrix.front().size();
    if (classes == 0) throw StatsError("drop matrix has no classes");
    for (const auto& row : drop_matrix) {
        if (row.size() != classes) throw StatsError("drop matrix rows differ in length");
    }
    SelectivityProfile p;
    p.drop_matrix = drop_matrix;
    p.per_class_stddev.resize(classes);
    const double units = static_cast<double>(drop_matrix.size());
    for (std::size_t c = 0; c < classes; ++c) {
        double mean = 0.0;
        for (const auto& row : drop_matrix) mean += row[c];
        mean /= units;
        double ss = 0.0;
        for (const auto& row : drop_matrix) ss += (row[c] - mean) * (row[c] - mean);
        p.per_class_stddev[c] = std::sqrt(ss / units);
    }
    return p;
}

std::vector<double> mean_selectivity(std::span<const SelectivityProfile> profiles)
{
    if (profiles.empty()) throw StatsError("no selectivity profiles to average");
    const std::size_t classes = profiles.front().per_class_stddev.size();
    std::vector<double> mean(classes, 0.0);
    for (const SelectivityProfile& p : profiles) {
        if (p.per_class_stddev.size() != classes) throw StatsError("selectivity profiles differ in class count");
        for (std::size_t c = 0; c < classes; ++c) mean[c] += p.per_class_stddev[c];
    }
    for (double& m : mean) m /= static_cast<double>(profiles.size());
    return mean;
}

}  // namespace ablatron
