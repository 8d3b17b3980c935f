#pragma once

#include "ablatron/network.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace ablatron {

enum class AblationKind { unit, filter };

/// Units of a dense layer or filters of a conv layer to disable.
/// Targets are kept sorted and unique; an empty target set is rejected.
class AblationSpec {
public:
    AblationSpec(std::size_t layer_index, AblationKind kind, std::vector<std::size_t> targets);

    std::size_t layer_index() const noexcept { return layer_; }
    AblationKind kind() const noexcept { return kind_; }
    const std::vector<std::size_t>& targets() const noexcept { return targets_; }

    /// Throws SpecError when the spec does not address `net`.
    void validate(const Network& net) const;

    /// Targets joined with ';' (e.g. "5;10").
    std::string targets_label() const;

    nlohmann::json to_json() const;
    static AblationSpec from_json(const nlohmann::json& j);

    friend bool operator==(const AblationSpec&, const AblationSpec&) = default;

private:
    std::size_t layer_;
    AblationKind kind_;
    std::vector<std::size_t> targets_;
};

std::string to_string(AblationKind kind);

/// Copy of `net` with every incoming weight (and bias, if present) of the
/// targeted units or filters set to zero. Nothing else changes.
Network ablate(const Network& net, const AblationSpec& spec);
void ablate_in_place(Network& net, const AblationSpec& spec);

/// Euclidean distance between the unit-L2-normalised flattened filters.
/// Result lies in [0, 2]. Throws SpecError on an all-zero filter.
double filter_distance(std::span<const float> a, std::span<const float> b);

struct FilterDistanceMatrix {
    std::size_t layer_index = 0;
    std::size_t filter_count = 0;
    std::vector<double> distances;  // filter_count x filter_count

    double operator()(std::size_t i, std::size_t j) const { return distances[i * filter_count + j]; }
};

FilterDistanceMatrix filter_distance_matrix(const Network& net, std::size_t layer_index);

/// max(1, round(proportion * count)), rounding half away from zero.
std::size_t group_size(std::size_t count, double proportion);

/// The reference filter plus its group_size - 1 nearest filters by
/// filter_distance, ties broken by lower index. Returned sorted ascending.
std::vector<std::size_t> similarity_group(const Network& net, std::size_t layer_index, std::size_t reference,
                                          double proportion);
std::vector<std::size_t> similarity_group(const FilterDistanceMatrix& distances, std::size_t reference,
                                          double proportion);

/// The reference plus its k - 1 nearest filters (ties to the lower index), sorted.
std::vector<std::size_t> nearest_filters(const FilterDistanceMatrix& distances, std::size_t reference, std::size_t k);

}  // namespace ablatron
