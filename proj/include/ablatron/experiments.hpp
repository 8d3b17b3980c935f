#pragma once

#include "ablatron/ablation.hpp"
#include "ablatron/evaluation.hpp"
#include "ablatron/network.hpp"
#include "ablatron/train.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace ablatron {

/// Evaluates networks that differ from `base` only at or above `layer`,
/// reusing the activations entering that layer.
class CachedEvaluator {
public:
    CachedEvaluator(const Network& base, std::size_t layer, const Samples& data);

    EvalReport evaluate(const Network& modified) const;
    std::size_t layer() const noexcept { return layer_; }

private:
    std::size_t layer_;
    const Samples& data_;
    Matrix activations_;
};

/// Stable 16-hex-digit key for one record of a campaign.
std::string record_key(const std::string& campaign, std::uint64_t seed, const std::string& payload);

struct SweepOptions {
    std::uint64_t seed = 0;  // recorded in keys and rows
    /// Records whose key is reported done are not recomputed.
    std::function<bool(const std::string& key)> skip;
    std::size_t threads = 0;  // 0 = worker_count()
};

struct ExperimentRecord {
    std::string key;
    std::uint64_t seed = 0;
    AblationSpec spec{0, AblationKind::unit, {0}};
    double top1_before = 0.0;
    double top1_after = 0.0;
    double drop_pp = 0.0;  // (before - after) * 100
    double top5_before = 0.0;
    double top5_after = 0.0;
    double drop_top5_pp = 0.0;
    std::vector<double> class_deltas_pp;  // after - before per class
    ChangeAccounting accounting;
};

struct SweepResult {
    EvalReport baseline;
    std::vector<ExperimentRecord> records;

    std::vector<double> drops() const;
};

/// Ablates every unit of a dense layer in turn.
SweepResult single_unit_sweep(const Network& net, std::size_t layer_index, const Samples& data,
                              const SweepOptions& options = {});

struct PairRecord {
    std::string key;
    std::size_t unit_a = 0;
    std::size_t unit_b = 0;
    double drop_a_pp = 0.0;
    double drop_b_pp = 0.0;
    double pair_drop_pp = 0.0;
    double gap_pp = 0.0;  // pair_drop - (drop_a + drop_b)
    ChangeAccounting accounting;  // pairwise categories
};

struct PairSweepResult {
    EvalReport baseline;
    std::vector<EvalReport> singles;  // indexed by unit
    std::vector<PairRecord> pairs;
};

/// All unordered unit pairs of a dense layer; the single-unit reports are
/// computed once and shared by the gap and the accounting.
PairSweepResult pairwise_unit_sweep(const Network& net, std::size_t layer_index, const Samples& data,
                                    const SweepOptions& options = {});

struct SeedOutcome {
    std::uint64_t seed = 0;
    bool ok = false;
    std::string failure;
    double test_accuracy = 0.0;
    std::vector<double> p_values;  // per unit
    std::vector<double> drops_pp;  // per unit
    std::optional<double> pearson;
    std::optional<double> spearman;
};

struct PopulationOptions {
    std::size_t layer_index = 0;
    /// Trained networks are cached here (and reused) when set.
    std::optional<std::filesystem::path> checkpoint_dir;
    std::size_t threads = 0;
    std::function<void(const SeedOutcome&)> on_seed_done;
};

/// Trains one network per seed (seed drives initialisation and shuffling) and
/// correlates each unit's weight-change p-value with its ablation drop.
std::vector<SeedOutcome> population_study(std::span<const std::uint64_t> seeds, std::span<const LayerSpec> arch,
                                          const Samples& train_data, const Samples& test_data, const TrainConfig& cfg,
                                          const PopulationOptions& options = {});

struct LayerGroupRecord {
    std::string key;
    std::size_t layer = 0;
    double proportion = 0.0;
    std::size_t reference = 0;
    std::vector<std::size_t> targets;
    double top1_before = 0.0;
    double top1_after = 0.0;
    double drop_top1_pp = 0.0;
    double top5_before = 0.0;
    double top5_after = 0.0;
    double drop_top5_pp = 0.0;
};

struct LayerCurvePoint {
    std::size_t layer = 0;
    double proportion = 0.0;
    std::size_t records = 0;
    double mean_drop_top1_pp = 0.0;
    double std_drop_top1_pp = 0.0;  // population convention; curves are mean +/- std
    double mean_drop_top5_pp = 0.0;
    double std_drop_top5_pp = 0.0;
};

struct LayerSweepResult {
    EvalReport baseline;
    std::vector<LayerGroupRecord> records;
    std::vector<LayerCurvePoint> curves;
    std::vector<std::string> warnings;

    const LayerCurvePoint& curve(std::size_t layer, double proportion) const;
};

std::vector<LayerCurvePoint> summarize_layer_records(const std::vector<LayerGroupRecord>& records);

/// For every conv layer and every nonzero filter as reference, ablates its
/// similarity group at each proportion.
LayerSweepResult layer_group_sweep(const Network& cnn, std::span<const double> proportions, const Samples& data,
                                   const SweepOptions& options = {});

/// Conv layer with the highest mean top-1 drop at `proportion`.
std::size_t most_damaging_layer(const LayerSweepResult& sweep, double proportion);

/// k distinct filters of n, uniformly, from the stream seeded by
/// (seed, layer, iteration).
std::vector<std::size_t> sample_group(std::size_t n, std::size_t k, std::uint64_t seed, std::size_t layer,
                                      std::size_t iteration);

/// 1 - (1 - k/n)^iterations
double expected_distinct_fraction(std::size_t n, std::size_t k, std::size_t iterations);

struct StopRule {
    int min_epochs = 5;
    int window = 2;
    double min_improvement_pp = 0.05;
    int max_epochs = 30;

    /// True when retraining should end after the last entry of `top5_history`
    /// (fractions, one per completed epoch).
    bool should_stop(std::span<const double> top5_history) const;
};

struct RecoveryTrace {
    std::size_t instance = 0;
    std::size_t iteration = 0;
    std::vector<std::size_t> ablated;  // this iteration's sample
    std::size_t cumulative_distinct = 0;
    double cumulative_fraction = 0.0;
    double top1_original = 0.0;
    double top5_original = 0.0;
    double top1_ablated = 0.0;
    double top5_ablated = 0.0;
    std::vector<EpochStats> epochs;
    int epochs_used = 0;
};

struct RecoveryOptions {
    std::uint64_t seed = 1;
    TrainConfig train;  // epochs ignored; seed mixed per instance/iteration
    std::size_t threads = 1;
    /// recovery_run only: ends an instance's retraining early once this
    /// returns true for the epoch just completed.
    std::function<bool(const EpochStats&)> stop_early;
};

/// Independent instances: random group ablation, freeze every layer below
/// `layer_index`, retrain for `epochs` epochs.
std::vector<RecoveryTrace> recovery_run(const Network& cnn, std::size_t layer_index, double proportion,
                                        std::size_t instances, int epochs, const Samples& train_data,
                                        const Samples& test_data, const RecoveryOptions& options);

/// Repeated ablation (selection with replacement across iterations) and
/// stop-rule retraining on one network.
std::vector<RecoveryTrace> iterative_recovery(const Network& cnn, std::size_t layer_index, double proportion,
                                              std::size_t iteration_count, const Samples& train_data,
                                              const Samples& test_data, const RecoveryOptions& options,
                                              const StopRule& rule = {}, Network* final_network = nullptr);

// Result-file writers; schemas are published in csv.hpp.
void write_units_csv(const SweepResult& r, const std::string& timestamp, std::ostream& out, bool header = true);
void write_pairs_csv(const PairSweepResult& r, std::uint64_t seed, std::size_t layer, const std::string& timestamp,
                     std::ostream& out, bool header = true);
void write_correlation_csvs(const std::vector<SeedOutcome>& outcomes, const std::string& timestamp,
                            std::ostream& units_out, std::ostream& summary_out, bool header = true);
void write_layers_csv(const LayerSweepResult& r, std::uint64_t seed, const std::string& timestamp, std::ostream& out,
                      bool header = true);
void write_layer_summary_csv(const std::vector<LayerCurvePoint>& curves, std::ostream& out);
void write_recovery_csv(const std::vector<RecoveryTrace>& traces, std::uint64_t seed, std::size_t layer,
                        double proportion, const std::string& timestamp, std::ostream& out, bool header = true);
void write_history_csv(const std::vector<EpochStats>& history, std::ostream& out);

}  // namespace ablatron
