#include "ablatron/ablation.hpp"

#include "ablatron/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ablatron {

std::string to_string(AblationKind kind) { return kind == AblationKind::unit ? "unit" : "filter"; }

AblationSpec::AblationSpec(std::size_t layer_index, AblationKind kind, std::vector<std::size_t> targets)
    : layer_(layer_index), kind_(kind), targets_(std::move(targets))
{
    if (targets_.empty()) throw SpecError("ablation spec needs at least one target");
    std::sort(targets_.begin(), targets_.end());
    targets_.erase(std::unique(targets_.begin(), targets_.end()), targets_.end());
}

void AblationSpec::validate(const Network& net) const
{
    if (layer_ >= net.layers.size()) {
        throw SpecError("layer " + std::to_string(layer_) + " is out of range (network has " +
                        std::to_string(net.layers.size()) + " layers)");
    }
    const LayerSpec& s = net.layers[layer_].spec;
    const LayerKind expected = kind_ == AblationKind::unit ? LayerKind::dense : LayerKind::conv2d;
    if (s.kind != expected) {
        throw SpecError(to_string(kind_) + " ablation requires a " +
                        (kind_ == AblationKind::unit ? std::string("dense") : std::string("conv2d")) + " layer; layer " +
                        std::to_string(layer_) + " is not");
    }
    if (targets_.back() >= s.unit_count()) {
        throw SpecError("target " + std::to_string(targets_.back()) + " is out of range for layer " +
                        std::to_string(layer_) + " with " + std::to_string(s.unit_count()) + " units");
    }
}

std::string AblationSpec::targets_label() const
{
    std::string out;
    for (std::size_t i = 0; i < targets_.size(); ++i) {
        if (i > 0) out += ';';
        out += std::to_string(targets_[i]);
    }
    return out;
}

nlohmann::json AblationSpec::to_json() const
{
    return {{"layer", layer_}, {"kind", to_string(kind_)}, {"targets", targets_}};
}

AblationSpec AblationSpec::from_json(const nlohmann::json& j)
{
    try {
        const std::string kind = j.at("kind").get<std::string>();
        if (kind != "unit" && kind != "filter") throw SpecError("ablation kind must be \"unit\" or \"filter\"");
        return AblationSpec(j.at("layer").get<std::size_t>(), kind == "unit" ? AblationKind::unit : AblationKind::filter,
                            j.at("targets").get<std::vector<std::size_t>>());
    } catch (const nlohmann::json::exception& e) {
        throw SpecError(std::string("malformed ablation spec: ") + e.what());
    }
}

void ablate_in_place(Network& net, const AblationSpec& spec)
{
    spec.validate(net);
    Layer& layer = net.layers[spec.layer_index()];
    for (std::size_t t : spec.targets()) {
        const auto w = layer.unit_weights(t);
        std::fill(w.begin(), w.end(), 0.0f);
        if (layer.spec.has_bias) layer.bias[t] = 0.0f;
    }
}

Network ablate(const Network& net, const AblationSpec& spec)
{
    Network copy = net;
    ablate_in_place(copy, spec);
    return copy;
}

namespace {

std::vector<double> normalized(std::span<const float> f)
{
    double norm = 0.0;
    for (float v : f) norm += static_cast<double>(v) * v;
    norm = std::sqrt(norm);
    if (norm == 0.0) throw SpecError("filter normalization undefined for an all-zero (ablated) filter");
    std::vector<double> out(f.size());
    for (std::size_t i = 0; i < f.size(); ++i) out[i] = f[i] / norm;
    return out;
}

double distance_between(const std::vector<double>& a, const std::vector<double>& b)
{
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return std::sqrt(acc);
}

}  // namespace

double filter_distance(std::span<const float> a, std::span<const float> b)
{
    if (a.size() != b.size()) throw SpecError("filters differ in shape");
    return distance_between(normalized(a), normalized(b));
}

FilterDistanceMatrix filter_distance_matrix(const Network& net, std::size_t layer_index)
{
    if (layer_index >= net.layers.size() || net.layers[layer_index].spec.kind != LayerKind::conv2d) {
        throw SpecError("layer " + std::to_string(layer_index) + " is not a conv2d layer");
    }
    const Layer& layer = net.layers[layer_index];
    const std::size_t n = layer.spec.filter_count;
    std::vector<std::vector<double>> unit(n);
    for (std::size_t f = 0; f < n; ++f) unit[f] = normalized(layer.unit_weights(f));
    FilterDistanceMatrix m{layer_index, n, std::vector<double>(n * n, 0.0)};
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double d = distance_between(unit[i], unit[j]);
            m.distances[i * n + j] = d;
            m.distances[j * n + i] = d;
        }
    }
    return m;
}

std::size_t group_size(std::size_t count, double proportion)
{
    if (!(proportion > 0.0 && proportion <= 1.0)) throw SpecError("proportion must lie in (0, 1]");
    const long rounded = std::lround(proportion * static_cast<double>(count));
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::max(rounded, 0L)));
}

std::vector<std::size_t> nearest_filters(const FilterDistanceMatrix& distances, std::size_t reference, std::size_t k)
{
    const std::size_t n = distances.filter_count;
    if (reference >= n) throw SpecError("reference filter " + std::to_string(reference) + " is out of range");
    if (k == 0 || k > n) throw SpecError("group size " + std::to_string(k) + " is outside [1, " + std::to_string(n) + "]");
    std::vector<std::size_t> others;
    for (std::size_t f = 0; f < n; ++f) {
        if (f != reference) others.push_back(f);
    }
    std::stable_sort(others.begin(), others.end(), [&](std::size_t a, std::size_t b) {
        return distances(reference, a) < distances(reference, b);
    });
    std::vector<std::size_t> group{reference};
    group.insert(group.end(), others.begin(), others.begin() + static_cast<std::ptrdiff_t>(k - 1));
    std::sort(group.begin(), group.end());
    return group;
}

std::vector<std::size_t> similarity_group(const FilterDistanceMatrix& distances, std::size_t reference,
                                          double proportion)
{
    return nearest_filters(distances, reference, group_size(distances.filter_count, proportion));
}

std::vector<std::size_t> similarity_group(const Network& net, std::size_t layer_index, std::size_t reference,
                                          double proportion)
{
    group_size(1, proportion);
    return similarity_group(filter_distance_matrix(net, layer_index), reference, proportion);
}

}  // namespace ablatron
