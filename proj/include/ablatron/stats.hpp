#pragma once

#include "ablatron/network.hpp"

#include <span>
#include <vector>

namespace ablatron {

enum class PValueMethod {
    automatic,  // exact null distribution for small tie-free samples, normal otherwise
    normal,     // normal approximation, tie-corrected variance, continuity correction 0.5
    exact,      // exact null distribution; requires tie-free samples
};

struct UTestResult {
    double u_statistic = 0.0;  // U of the first sample: R_a - n_a (n_a + 1) / 2
    double z_score = 0.0;      // continuity-corrected normal score
    double p_value = 1.0;      // two-sided
    bool exact = false;
};

/// Largest per-sample size for which `automatic` uses the exact distribution.
inline constexpr std::size_t kExactUTestMaxSize = 8;

/// Two-sided Mann-Whitney U test. Both samples need at least 2 values;
/// throws StatsError when every value in both samples is identical.
UTestResult mann_whitney_u(std::span<const double> a, std::span<const double> b,
                           PValueMethod method = PValueMethod::automatic);

/// Average (mid) ranks, 1-based.
std::vector<double> midranks(std::span<const double> values);

/// U test between a unit's incoming weights before and after training.
double unit_change_pvalue(const Network& initial, const Network& trained, std::size_t layer_index, std::size_t unit);

/// Sample Pearson correlation. Throws StatsError on a constant vector.
double pearson(std::span<const double> x, std::span<const double> y);
/// Pearson correlation of midranks.
double spearman(std::span<const double> x, std::span<const double> y);

struct SelectivityProfile {
    std::vector<std::vector<double>> drop_matrix;  // units x classes, percentage points
    std::vector<double> per_class_stddev;          // population convention
};

SelectivityProfile selectivity_deviation(const std::vector<std::vector<double>>& drop_matrix);

/// Per-class mean of the standard deviations across networks.
std::vector<double> mean_selectivity(std::span<const SelectivityProfile> profiles);

}  // namespace ablatron
