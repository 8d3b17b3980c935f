#include "ablatron/campaign.hpp"

#include "ablatron/csv.hpp"
#include "ablatron/error.hpp"

#include <algorithm>
#include <cmath>
#include <ctime>
#include <fstream>

#ifndef ABLATRON_VERSION
#define ABLATRON_VERSION "unknown"
#endif

namespace ablatron {

namespace {

using nlohmann::json;

const std::vector<std::string>& known_keys()
{
    static const std::vector<std::string> keys{
        "data_dir",    "architecture",  "seeds",        "epochs",     "batch_size",    "learning_rate",
        "layers",      "proportions",   "instances",    "iterations", "retrain_epochs", "train_samples",
        "test_samples", "perplexity",   "embed_points", "output"};
    return keys;
}

[[noreturn]] void bad(const std::string& key, const std::string& what)
{
    throw ConfigError("config key \"" + key + "\": " + what);
}

template <typename T>
T get_unsigned(const json& j, const std::string& key)
{
    if (!j.is_number_integer() || j.get<std::int64_t>() < 0) bad(key, "expected a nonnegative integer");
    return static_cast<T>(j.get<std::uint64_t>());
}

double get_real(const json& j, const std::string& key)
{
    if (!j.is_number()) bad(key, "expected a number");
    return j.get<double>();
}

std::string get_string(const json& j, const std::string& key)
{
    if (!j.is_string()) bad(key, "expected a string");
    return j.get<std::string>();
}

}  // namespace

json CampaignConfig::to_json() const
{
    return json{{"data_dir", data_dir.string()},
                {"architecture", architecture},
                {"seeds", seeds},
                {"epochs", epochs},
                {"batch_size", batch_size},
                {"learning_rate", learning_rate},
                {"layers", layers},
                {"proportions", proportions},
                {"instances", instances},
                {"iterations", iterations},
                {"retrain_epochs", retrain_epochs},
                {"train_samples", train_samples},
                {"test_samples", test_samples},
                {"perplexity", perplexity},
                {"embed_points", embed_points},
                {"output", output.string()}};
}

CampaignConfig CampaignConfig::from_json(const json& j)
{
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        const auto& keys = known_keys();
        if (std::find(keys.begin(), keys.end(), key) == keys.end()) throw ConfigError("unknown config key \"" + key + "\"");
    }
    CampaignConfig c;
    const auto has = [&](const char* k) { return j.contains(k); };
    if (has("data_dir")) c.data_dir = get_string(j["data_dir"], "data_dir");
    if (has("architecture")) c.architecture = get_string(j["architecture"], "architecture");
    if (has("seeds")) {
        if (!j["seeds"].is_array()) bad("seeds", "expected an array");
        c.seeds.clear();
        for (const json& s : j["seeds"]) c.seeds.push_back(get_unsigned<std::uint64_t>(s, "seeds"));
    }
    if (has("epochs")) c.epochs = get_unsigned<int>(j["epochs"], "epochs");
    if (has("batch_size")) c.batch_size = get_unsigned<std::size_t>(j["batch_size"], "batch_size");
    if (has("learning_rate")) c.learning_rate = get_real(j["learning_rate"], "learning_rate");
    if (has("layers")) {
        if (!j["layers"].is_array()) bad("layers", "expected an array");
        for (const json& l : j["layers"]) c.layers.push_back(get_unsigned<std::size_t>(l, "layers"));
    }
    if (has("proportions")) {
        if (!j["proportions"].is_array()) bad("proportions", "expected an array");
        c.proportions.clear();
        for (const json& p : j["proportions"]) c.proportions.push_back(get_real(p, "proportions"));
    }
    if (has("instances")) c.instances = get_unsigned<std::size_t>(j["instances"], "instances");
    if (has("iterations")) c.iterations = get_unsigned<std::size_t>(j["iterations"], "iterations");
    if (has("retrain_epochs")) c.retrain_epochs = get_unsigned<int>(j["retrain_epochs"], "retrain_epochs");
    if (has("train_samples")) c.train_samples = get_unsigned<std::size_t>(j["train_samples"], "train_samples");
    if (has("test_samples")) c.test_samples = get_unsigned<std::size_t>(j["test_samples"], "test_samples");
    if (has("perplexity")) c.perplexity = get_real(j["perplexity"], "perplexity");
    if (has("embed_points")) c.embed_points = get_unsigned<std::size_t>(j["embed_points"], "embed_points");
    if (has("output")) c.output = get_string(j["output"], "output");
    c.validate();
    return c;
}

void CampaignConfig::validate() const
{
    if (architecture != "mlp" && architecture != "cnn") bad("architecture", "expected \"mlp\" or \"cnn\"");
    if (seeds.empty()) bad("seeds", "at least one seed is required");
    if (batch_size == 0) bad("batch_size", "must be positive");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) bad("learning_rate", "must be positive");
    for (const double p : proportions) {
        if (!(p > 0.0 && p <= 1.0)) bad("proportions", "each proportion must lie in (0, 1]");
    }
    if (!(perplexity > 0.0) || !std::isfinite(perplexity)) bad("perplexity", "must be positive");
    if (output.empty()) bad("output", "must not be empty");
}

CampaignConfig load_campaign_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
    }
    return CampaignConfig::from_json(j);
}

std::string utc_timestamp()
{
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string version_string() { return ABLATRON_VERSION; }

nlohmann::json RunManifest::to_json() const
{
    return json{{"command", command},     {"config", config},
                {"seed", seed},           {"version", version_string()},
                {"started", started},     {"wall_seconds", wall_seconds},
                {"artifacts", artifacts}};
}

void write_manifest(const RunManifest& m, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ReportError("cannot write " + path.string());
    out << m.to_json().dump(2) << '\n';
    if (!out) throw ReportError("failed writing " + path.string());
}

std::set<std::string> completed_keys(const std::filesystem::path& csv_path, const std::string& schema)
{
    std::set<std::string> keys;
    if (!std::filesystem::exists(csv_path)) return keys;
    const CsvTable table = read_csv(csv_path);
    check_csv(table, csv_schema(schema));
    const std::size_t col = table.column("spec_hash");
    for (const auto& row : table.rows) keys.insert(row[col]);
    return keys;
}

std::optional<std::string> schema_for_file(const std::filesystem::path& path)
{
    if (path.extension() != ".csv") return std::nullopt;
    const std::string stem = path.stem().string();
    std::optional<std::string> best;
    for (const CsvSchema& s : csv_schemas()) {
        const bool match = stem == s.name || (stem.size() > s.name.size() && stem.compare(0, s.name.size(), s.name) == 0 &&
                                              (stem[s.name.size()] == '_' || stem[s.name.size()] == '-'));
        if (match && (!best || s.name.size() > best->size())) best = s.name;
    }
    return best;
}

std::vector<CheckedFile> check_result_dir(const std::filesystem::path& dir)
{
    if (!std::filesystem::is_directory(dir)) throw ReportError(dir.string() + " is not a directory");
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::recursive_directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".csv") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<CheckedFile> checked;
    for (const auto& f : files) {
        CheckedFile c;
        c.path = f;
        if (const auto schema = schema_for_file(f)) {
            c.schema = *schema;
            const CsvTable table = read_csv(f);
            try {
                check_csv(table, csv_schema(*schema));
            } catch (const SchemaError& e) {
                throw SchemaError(f.string() + ": " + e.what());
            }
            c.rows = table.rows.size();
        }
        checked.push_back(std::move(c));
    }
    return checked;
}

}  // namespace ablatron
