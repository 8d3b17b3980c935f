#pragma once

#include "ablatron/network.hpp"

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

namespace ablatron {

struct TsneConfig {
    double perplexity = 30.0;
    int iterations = 1000;
    double learning_rate = 200.0;
    double early_exaggeration = 12.0;
    int exaggeration_iters = 250;
    double momentum_initial = 0.5;
    double momentum_final = 0.8;
    int momentum_switch = 250;
    std::uint64_t seed = 1;
    double init_stddev = 1e-4;
    int kl_every = 10;  // record KL every this many iterations (and at the end)
    std::size_t max_points = 5000;

    /// Throws ConfigError when unusable for `points` samples.
    void validate(std::size_t points) const;
};

struct PerplexityResult {
    double beta = 1.0;               // precision 1 / (2 sigma^2)
    std::vector<double> probabilities;
    double entropy = 0.0;            // nats
    int steps = 0;
    bool converged = false;
    bool degenerate = false;         // unreachable target, uniform fallback
};

/// Bisection on the Gaussian precision so that the conditional distribution
/// over `squared_distances` (self excluded) has Shannon entropy log(perplexity).
PerplexityResult perplexity_search(std::span<const double> squared_distances, double target_perplexity,
                                   double tolerance = 1e-5, int max_steps = 50);

/// Symmetrised joint affinities P (n x n, zero diagonal, sums to 1).
struct Affinities {
    std::size_t n = 0;
    std::vector<double> p;
    std::vector<std::size_t> degenerate_rows;
};

Affinities compute_affinities(const Matrix& data, double perplexity);

/// Exact KL(P||Q) gradient for 2-D coordinates (x0, y0, x1, y1, ...).
/// When `kl` is given, KL(P||Q) for the unexaggerated P is written there.
std::vector<double> tsne_gradient(const Affinities& affinities, std::span<const double> coords, double exaggeration,
                                  double* kl = nullptr);

struct KlRecord {
    int iteration = 0;
    double kl = 0.0;
};

struct Embedding {
    std::vector<double> coordinates;  // n x 2, row-major
    std::vector<KlRecord> kl_history;
    std::vector<std::size_t> degenerate_rows;

    std::size_t size() const noexcept { return coordinates.size() / 2; }
    double x(std::size_t i) const { return coordinates[2 * i]; }
    double y(std::size_t i) const { return coordinates[2 * i + 1]; }
};

Embedding tsne(const Matrix& data, const TsneConfig& cfg = {});

/// sample_index,x,y,label
void write_embedding_csv(const Embedding& e, std::span<const std::uint32_t> labels, std::ostream& out);

/// Fraction of each point's k nearest embedded neighbours sharing its label.
double knn_label_purity(const Embedding& e, std::span<const std::uint32_t> labels, std::size_t k);

}  // namespace ablatron
