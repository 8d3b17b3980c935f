#pragma once

// Campaign configuration, run manifests and result-directory bookkeeping.

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace ablatron {

/// Contents of a campaign JSON file. Every key is optional on disk; absent
/// keys keep these defaults. docs/campaign-config.schema.json mirrors this.
struct CampaignConfig {
    std::filesystem::path data_dir = "data";
    std::string architecture = "mlp";  // "mlp" | "cnn"
    std::vector<std::uint64_t> seeds{1};
    int epochs = 100;
    std::size_t batch_size = 64;
    double learning_rate = 0.1;
    std::vector<std::size_t> layers;
    std::vector<double> proportions{0.01, 0.05, 0.10, 0.25};
    std::size_t instances = 5;
    std::size_t iterations = 6;
    int retrain_epochs = 1;
    std::size_t train_samples = 0;  // 0 = all
    std::size_t test_samples = 0;   // 0 = all
    double perplexity = 30.0;
    std::size_t embed_points = 2000;
    std::filesystem::path output = "results";

    nlohmann::json to_json() const;
    /// Rejects unknown keys, wrong types and out-of-range values with ConfigError.
    static CampaignConfig from_json(const nlohmann::json& j);
    void validate() const;
};

CampaignConfig load_campaign_config(const std::filesystem::path& path);

/// e.g. 2024-05-01T12:00:00Z
std::string utc_timestamp();

std::string version_string();

struct RunManifest {
    std::string command;
    nlohmann::json config;
    std::uint64_t seed = 0;
    std::string started;
    double wall_seconds = 0.0;
    std::vector<std::string> artifacts;

    nlohmann::json to_json() const;
};

void write_manifest(const RunManifest& m, const std::filesystem::path& path);

/// spec_hash values already present in a result file (empty if the file does
/// not exist). The file must pass its schema check.
std::set<std::string> completed_keys(const std::filesystem::path& csv_path, const std::string& schema);

/// Schema a result file name maps to: the longest schema name that equals
/// the stem or prefixes it followed by '_' or '-'.
std::optional<std::string> schema_for_file(const std::filesystem::path& path);

struct CheckedFile {
    std::filesystem::path path;
    std::string schema;  // empty: no schema known, not checked
    std::size_t rows = 0;
};

/// Checks every *.csv under `dir` against its schema; throws SchemaError on
/// the first violation.
std::vector<CheckedFile> check_result_dir(const std::filesystem::path& dir);

}  // namespace ablatron
