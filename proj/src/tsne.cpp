#include "ablatron/tsne.hpp"

#include "ablatron/csv.hpp"
#include "ablatron/error.hpp"
#include "ablatron/kernels.hpp"
#include "ablatron/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <random>
#include <string>

namespace ablatron {

void TsneConfig::validate(std::size_t points) const
{
    if (points < 3) throw ConfigError("t-SNE needs at least 3 points");
    if (points > max_points) {
        throw ConfigError("exact t-SNE is capped at " + std::to_string(max_points) + " points, got " +
                          std::to_string(points));
    }
    if (!(perplexity > 1.0)) throw ConfigError("perplexity must exceed 1");
    if (!(perplexity < static_cast<double>(points) - 1.0)) {
        throw ConfigError("perplexity must be below the sample count minus one");
    }
    if (iterations <= 0) throw ConfigError("iterations must be positive");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (early_exaggeration < 1.0) throw ConfigError("early exaggeration must be at least 1");
    if (exaggeration_iters < 0 || exaggeration_iters >= iterations) {
        throw ConfigError("exaggeration_iters must lie in [0, iterations)");
    }
    if (kl_every <= 0) throw ConfigError("kl_every must be positive");
}

PerplexityResult perplexity_search(std::span<const double> squared_distances, double target_perplexity,
                                   double tolerance, int max_steps)
{
    const std::size_t n = squared_distances.size();
    if (n < 2) throw ConfigError("perplexity search needs at least 2 neighbours");
    for (double d : squared_distances) {
        if (!std::isfinite(d) || d < 0.0) throw DataError("distance row contains a negative or non-finite entry");
    }
    const double target = std::log(target_perplexity);
    const double nearest = *std::min_element(squared_distances.begin(), squared_distances.end());

    PerplexityResult r;
    r.probabilities.resize(n);
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();
    auto evaluate = [&](double beta) {
        double total = 0.0;
        double weighted = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double shifted = squared_distances[j] - nearest;
            const double w = std::exp(-beta * shifted);
            r.probabilities[j] = w;
            total += w;
            weighted += w * shifted;
        }
        for (double& p : r.probabilities) p /= total;
        return std::log(total) + beta * weighted / total;
    };
    for (r.steps = 1; r.steps <= max_steps; ++r.steps) {
        r.entropy = evaluate(r.beta);
        const double gap = r.entropy - target;
        if (std::abs(gap) < tolerance) {
            r.converged = true;
            break;
        }
        if (gap > 0.0) {
            lo = r.beta;
            r.beta = std::isinf(hi) ? r.beta * 2.0 : (r.beta + hi) / 2.0;
        } else {
            hi = r.beta;
            r.beta = std::isinf(lo) ? r.beta / 2.0 : (r.beta + lo) / 2.0;
        }
    }
    r.steps = std::min(r.steps, max_steps);
    if (!r.converged) {
        // Equal distances pin the entropy at log(n); anything else unreachable
        // within the step budget falls back to uniform.
        const bool flat = std::all_of(squared_distances.begin(), squared_distances.end(),
                                      [&](double d) { return d == nearest; });
        if (flat || std::abs(r.entropy - target) > 1e-2) {
            std::fill(r.probabilities.begin(), r.probabilities.end(), 1.0 / static_cast<double>(n));
            r.entropy = std::log(static_cast<double>(n));
            r.degenerate = true;
        }
    }
    return r;
}

Affinities compute_affinities(const Matrix& data, double perplexity)
{
    const std::size_t n = data.rows;
    for (float v : data.values) {
        if (!std::isfinite(v)) throw DataError("t-SNE input contains a non-finite value");
    }
    std::vector<double> conditional(n * n, 0.0);
    std::vector<char> degenerate(n, 0);
    parallel_for(n, [&](std::size_t i) {
        std::vector<double> row;
        row.reserve(n - 1);
        const float* xi = data.values.data() + i * data.cols;
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) row.push_back(kernels::squared_distance(xi, data.values.data() + j * data.cols, data.cols));
        }
        const PerplexityResult pr = perplexity_search(row, perplexity);
        degenerate[i] = pr.degenerate ? 1 : 0;
        std::size_t t = 0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) conditional[i * n + j] = pr.probabilities[t++];
        }
    });
    Affinities a;
    a.n = n;
    a.p.assign(n * n, 0.0);
    const double norm = 2.0 * static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) a.p[i * n + j] = (conditional[i * n + j] + conditional[j * n + i]) / norm;
        if (degenerate[i]) a.degenerate_rows.push_back(i);
    }
    return a;
}

namespace {

struct GradientWork {
    std::vector<double> xs;
    std::vector<double> ys;
    std::vector<kernels::TsneRowTerms> rows;
};

double p_log_p(const Affinities& a)
{
    double total = 0.0;
    for (double p : a.p) {
        if (p > 0.0) total += p * std::log(p);
    }
    return total;
}

void gradient_into(const Affinities& a, std::span<const double> coords, double exaggeration, bool with_kl,
                   double entropy_term, GradientWork& work, std::vector<double>& grad, double* kl)
{
    const std::size_t n = a.n;
    work.xs.resize(n);
    work.ys.resize(n);
    work.rows.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        work.xs[i] = coords[2 * i];
        work.ys[i] = coords[2 * i + 1];
    }
    parallel_for(n, [&](std::size_t i) {
        kernels::tsne_row(n, i, work.xs.data(), work.ys.data(), a.p.data() + i * n, with_kl, work.rows[i]);
    });
    double z = 0.0;
    double p_log_q = 0.0;
    for (const auto& r : work.rows) {
        z += r.z;
        p_log_q += r.p_log_q;
    }
    grad.resize(2 * n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& r = work.rows[i];
        grad[2 * i] = 4.0 * (exaggeration * r.attr[0] - r.rep[0] / z);
        grad[2 * i + 1] = 4.0 * (exaggeration * r.attr[1] - r.rep[1] / z);
    }
    if (kl != nullptr) *kl = entropy_term - p_log_q + std::log(z);
}

}  // namespace

std::vector<double> tsne_gradient(const Affinities& affinities, std::span<const double> coords, double exaggeration,
                                  double* kl)
{
    if (coords.size() != 2 * affinities.n) throw ConfigError("coordinate count does not match the affinities");
    GradientWork work;
    std::vector<double> grad;
    gradient_into(affinities, coords, exaggeration, kl != nullptr, kl != nullptr ? p_log_p(affinities) : 0.0, work,
                  grad, kl);
    return grad;
}

Embedding tsne(const Matrix& data, const TsneConfig& cfg)
{
    cfg.validate(data.rows);
    const Affinities affinities = compute_affinities(data, cfg.perplexity);
    const std::size_t n = data.rows;
    const double entropy_term = p_log_p(affinities);

    Embedding e;
    e.degenerate_rows = affinities.degenerate_rows;
    e.coordinates.resize(2 * n);
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> normal(0.0, cfg.init_stddev);
    for (double& c : e.coordinates) c = normal(rng);

    std::vector<double> update(2 * n, 0.0);
    std::vector<double> gains(2 * n, 1.0);
    std::vector<double> grad;
    GradientWork work;
    for (int it = 0; it < cfg.iterations; ++it) {
        const bool record = it % cfg.kl_every == 0 || it + 1 == cfg.iterations;
        const double exaggeration = it < cfg.exaggeration_iters ? cfg.early_exaggeration : 1.0;
        const double momentum = it < cfg.momentum_switch ? cfg.momentum_initial : cfg.momentum_final;
        double kl = 0.0;
        gradient_into(affinities, e.coordinates, exaggeration, record, entropy_term, work, grad, record ? &kl : nullptr);
        for (std::size_t k = 0; k < grad.size(); ++k) {
            if (!std::isfinite(grad[k])) throw RunError(it, "non-finite t-SNE gradient");
        }
        if (record) e.kl_history.push_back({it, std::max(kl, 0.0)});

        for (std::size_t k = 0; k < grad.size(); ++k) {
            const bool same_sign = (grad[k] > 0.0) == (update[k] > 0.0);
            gains[k] = same_sign ? std::max(gains[k] * 0.8, 0.01) : gains[k] + 0.2;
            update[k] = momentum * update[k] - cfg.learning_rate * gains[k] * grad[k];
            e.coordinates[k] += update[k];
        }
        double cx = 0.0;
        double cy = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            cx += e.coordinates[2 * i];
            cy += e.coordinates[2 * i + 1];
        }
        cx /= static_cast<double>(n);
        cy /= static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
            e.coordinates[2 * i] -= cx;
            e.coordinates[2 * i + 1] -= cy;
        }
    }
    return e;
}

void write_embedding_csv(const Embedding& e, std::span<const std::uint32_t> labels, std::ostream& out)
{
    if (labels.size() != e.size()) throw DataError("label count does not match the embedding");
    CsvWriter w(out);
    w.row({"sample_index", "x", "y", "label"});
    for (std::size_t i = 0; i < e.size(); ++i) {
        w.row({std::to_string(i), format_real(e.x(i)), format_real(e.y(i)), std::to_string(labels[i])});
    }
}

double knn_label_purity(const Embedding& e, std::span<const std::uint32_t> labels, std::size_t k)
{
    const std::size_t n = e.size();
    if (labels.size() != n) throw DataError("label count does not match the embedding");
    if (k == 0 || k >= n) throw ConfigError("k must lie in [1, n)");
    std::size_t agree = 0;
    std::vector<std::pair<double, std::size_t>> dist(n - 1);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t t = 0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            const double dx = e.x(i) - e.x(j);
            const double dy = e.y(i) - e.y(j);
            dist[t++] = {dx * dx + dy * dy, j};
        }
        std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
        for (std::size_t m = 0; m < k; ++m) agree += labels[dist[m].second] == labels[i] ? 1 : 0;
    }
    return static_cast<double>(agree) / static_cast<double>(n * k);
}

}  // namespace ablatron
