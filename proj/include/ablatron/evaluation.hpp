#pragma once

#include "ablatron/network.hpp"

#include <cstdint>
#include <iosfwd>
#include <vector>

namespace ablatron {

/// Per-sample predictions and accuracy summaries of one network on one dataset.
struct EvalReport {
    std::size_t class_count = 0;
    std::vector<std::uint32_t> labels;
    std::vector<std::uint32_t> predictions;
    std::vector<std::size_t> k_list;
    std::vector<std::vector<std::uint8_t>> topk_hits;  // [k index][sample]
    std::vector<std::size_t> per_class_counts;
    std::vector<std::size_t> per_class_correct;
    std::vector<double> per_class_accuracy;
    double overall_accuracy = 0.0;

    std::size_t size() const noexcept { return labels.size(); }
    bool correct(std::size_t sample) const { return predictions[sample] == labels[sample]; }
    std::size_t correct_count() const noexcept;
    /// Fraction of samples whose label is among the k most probable classes.
    double topk_accuracy(std::size_t k) const;
};

/// Builds a report from class probabilities (one row per sample).
EvalReport make_report(const Matrix& probs, std::span<const std::uint32_t> labels, std::size_t class_count,
                       std::vector<std::size_t> k_list = {1, 5});

EvalReport evaluate(const Network& net, const Samples& data, std::vector<std::size_t> k_list = {1, 5});

enum class Transition : std::uint8_t {
    stayed_correct = 0,  // black
    newly_wrong = 1,     // red
    newly_correct = 2,   // green
    stayed_wrong = 3,
    pair_only_wrong = 4,  // blue
};

const char* to_string(Transition t) noexcept;

struct ClassChange {
    std::size_t count = 0;
    std::size_t stayed_correct = 0;
    std::size_t newly_wrong = 0;
    std::size_t newly_correct = 0;
    std::size_t stayed_wrong = 0;
    std::size_t pair_only_wrong = 0;
    double acc_before = 0.0;
    double acc_after = 0.0;
    double delta_pp = 0.0;  // signed, percentage points
};

struct ChangeAccounting {
    bool pairwise = false;
    std::vector<ClassChange> classes;
    ClassChange overall;
    std::vector<Transition> transitions;  // per sample
};

/// Per-sample transition categories between an undamaged and a damaged run.
ChangeAccounting diff_reports(const EvalReport& before, const EvalReport& after);

/// Pairwise accounting. A sample correct under `base` and wrong under `pair`
/// is pair_only_wrong when both single ablations kept it correct and
/// newly_wrong otherwise. Samples already wrong under `base` are never red or
/// blue.
ChangeAccounting pairwise_diff(const EvalReport& base, const EvalReport& single_a, const EvalReport& single_b,
                               const EvalReport& pair);

/// class,count,acc_before,acc_after,delta_pp,black,red,green,blue with one
/// row per class followed by an "overall" row.
void write_accounting_csv(const ChangeAccounting& acc, std::ostream& out);

/// sample_index,label,category
void write_transitions_csv(const ChangeAccounting& acc, std::span<const std::uint32_t> labels, std::ostream& out);

}  // namespace ablatron
