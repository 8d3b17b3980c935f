// ablatron command-line driver.

#include "ablatron/ablation.hpp"
#include "ablatron/campaign.hpp"
#include "ablatron/checkpoint.hpp"
#include "ablatron/csv.hpp"
#include "ablatron/error.hpp"
#include "ablatron/evaluation.hpp"
#include "ablatron/experiments.hpp"
#include "ablatron/mnist.hpp"
#include "ablatron/tsne.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace ablatron;

namespace {

constexpr const char* kFetchInstructions = R"(ablatron never downloads data. It expects the four MNIST IDX files,
uncompressed and with their canonical names, in one directory:

  train-images-idx3-ubyte   train-labels-idx1-ubyte
  t10k-images-idx3-ubyte    t10k-labels-idx1-ubyte

Sources:
  http://yann.lecun.com/exdb/mnist/ (gzip; run gunzip on each file)
  any mirror of the same files, e.g. the "mnist-data" npm package
  (npm pack mnist-data && tar xzf mnist-data-*.tgz; files under package/data/)

Point --data (or "data_dir" in a campaign config) at that directory.
)";

// Flags shared by all subcommands; a campaign config supplies defaults.
struct Options {
    std::string config_path;
    std::string data_dir;
    std::string out_dir;
    std::string arch;
    std::string ckpt;
    std::vector<std::uint64_t> seeds;
    std::string seed_range;
    int epochs = -1;
    std::size_t layer = 0;  // 1-based on the command line; 0 = unset
    std::vector<std::size_t> units;
    std::string kind;
    std::vector<double> proportions;
    std::size_t instances = 0;
    std::size_t iterations = 0;
    std::size_t train_samples = 0;
    std::size_t test_samples = 0;
    std::size_t points = 0;
    double perplexity = 0.0;
    int tsne_iterations = 1000;
    bool check = false;
    std::string in_dir;
};

struct Run {
    std::string command;
    CampaignConfig cfg;
    Options opt;
    fs::path out;
    std::string timestamp;
    std::chrono::steady_clock::time_point start;
    nlohmann::json extra = nlohmann::json::object();
    std::vector<std::string> artifacts;
};

CampaignConfig effective_config(const CLI::App& sub, const Options& o)
{
    CampaignConfig c = o.config_path.empty() ? CampaignConfig{} : load_campaign_config(o.config_path);
    const auto given = [&](const char* flag) {
        const CLI::Option* opt = sub.get_option_no_throw(flag);
        return opt != nullptr && opt->count() > 0;
    };
    if (given("--data")) c.data_dir = o.data_dir;
    if (given("--out")) c.output = o.out_dir;
    if (given("--arch")) c.architecture = o.arch;
    if (given("--seed")) c.seeds = o.seeds;
    if (given("--seeds")) {
        c.seeds.clear();
        std::stringstream ss(o.seed_range);
        std::string part;
        while (std::getline(ss, part, ',')) {
            const auto dash = part.find('-');
            try {
                if (dash == std::string::npos) {
                    c.seeds.push_back(std::stoull(part));
                } else {
                    const std::uint64_t lo = std::stoull(part.substr(0, dash));
                    const std::uint64_t hi = std::stoull(part.substr(dash + 1));
                    if (hi < lo) throw ConfigError("empty seed range " + part);
                    for (std::uint64_t s = lo; s <= hi; ++s) c.seeds.push_back(s);
                }
            } catch (const std::logic_error&) {
                throw ConfigError("bad --seeds entry \"" + part + "\"");
            }
        }
    }
    if (given("--epochs")) c.epochs = o.epochs;
    if (given("--proportions") || given("--proportion")) c.proportions = o.proportions;
    if (given("--instances")) c.instances = o.instances;
    if (given("--iterations")) c.iterations = o.iterations;
    if (given("--train-samples")) c.train_samples = o.train_samples;
    if (given("--test-samples")) c.test_samples = o.test_samples;
    if (given("--points")) c.embed_points = o.points;
    if (given("--perplexity")) c.perplexity = o.perplexity;
    if (given("--layer")) c.layers = {o.layer - 1};
    c.validate();
    return c;
}

Samples load_split(const CampaignConfig& c, Split split)
{
    const Samples s = load_mnist_dir(c.data_dir, split).present();
    const std::size_t limit = split == Split::train ? c.train_samples : c.test_samples;
    return limit == 0 ? s : s.head(limit);
}

std::vector<LayerSpec> architecture(const std::string& name)
{
    if (name == "mlp") {
        const std::uint32_t widths[] = {784, 20, 10, 10};
        return mlp_architecture(widths);
    }
    if (name == "cnn") return desk_cnn_architecture();
    throw ConfigError("unknown architecture \"" + name + "\"");
}

std::size_t layer_of(const Run& r)
{
    if (r.cfg.layers.empty()) throw ConfigError("--layer is required");
    return r.cfg.layers.front();
}

Network load_model(const Run& r)
{
    if (r.opt.ckpt.empty()) throw ConfigError("--ckpt is required");
    return load_checkpoint(r.opt.ckpt);
}

std::ofstream create(Run& r, const std::string& name)
{
    const fs::path p = r.out / name;
    std::ofstream f(p, std::ios::binary);
    if (!f) throw ReportError("cannot write " + p.string());
    r.artifacts.push_back(name);
    return f;
}

// Result file that keeps its completed records across runs.
struct Resumable {
    std::set<std::string> done;
    std::ofstream stream;
    bool header = true;
};

Resumable open_resumable(Run& r, const std::string& name, const std::string& schema)
{
    const fs::path p = r.out / name;
    Resumable res;
    res.done = completed_keys(p, schema);
    res.header = !fs::exists(p) || fs::file_size(p) == 0;
    res.stream.open(p, std::ios::binary | std::ios::app);
    if (!res.stream) throw ReportError("cannot write " + p.string());
    r.artifacts.push_back(name);
    return res;
}

SweepOptions sweep_options(const Run& r, const Resumable& res)
{
    SweepOptions o;
    o.seed = r.cfg.seeds.front();
    o.skip = [&res](const std::string& key) { return res.done.count(key) > 0; };
    return o;
}

void cmd_train(Run& r)
{
    const Samples train_set = load_split(r.cfg, Split::train);
    const Samples test_set = load_split(r.cfg, Split::test);
    TrainConfig tc;
    tc.epochs = r.cfg.epochs;
    tc.batch_size = r.cfg.batch_size;
    tc.learning_rate = static_cast<float>(r.cfg.learning_rate);
    tc.seed = r.cfg.seeds.front();
    const auto arch = architecture(r.cfg.architecture);
    TrainResult res = train(init_network(arch, tc.seed), train_set, tc, &test_set);
    save_checkpoint(res.network, r.out / "model.ablt");
    r.artifacts.push_back("model.ablt");
    auto hist = create(r, "history.csv");
    write_history_csv(res.history, hist);
    if (!res.history.empty()) {
        std::cout << "test top-1 " << format_real(*res.history.back().test_top1) << ", top-5 "
                  << format_real(*res.history.back().test_top5) << '\n';
    }
}

void cmd_ablate(Run& r)
{
    const Network net = load_model(r);
    const Samples test_set = load_split(r.cfg, Split::test);
    const std::size_t layer = layer_of(r);
    if (layer >= net.layers.size()) throw SpecError("layer " + std::to_string(layer + 1) + " does not exist");
    AblationKind kind = net.layers[layer].spec.kind == LayerKind::conv2d ? AblationKind::filter : AblationKind::unit;
    if (r.opt.kind == "unit") kind = AblationKind::unit;
    if (r.opt.kind == "filter") kind = AblationKind::filter;
    if (r.opt.units.empty()) throw ConfigError("--units is required");
    const AblationSpec spec(layer, kind, r.opt.units);
    const EvalReport before = evaluate(net, test_set);
    const EvalReport after = evaluate(ablate(net, spec), test_set);
    const ChangeAccounting acc = diff_reports(before, after);
    auto a = create(r, "accounting.csv");
    write_accounting_csv(acc, a);
    auto t = create(r, "transitions.csv");
    write_transitions_csv(acc, test_set.labels, t);
    r.extra["ablation"] = spec.to_json();
    std::cout << "top-1 " << format_real(before.topk_accuracy(1)) << " -> " << format_real(after.topk_accuracy(1))
              << " (drop " << format_real((before.topk_accuracy(1) - after.topk_accuracy(1)) * 100.0) << " pp)\n";
}

void cmd_sweep_units(Run& r)
{
    const Network net = load_model(r);
    const Samples test_set = load_split(r.cfg, Split::test);
    Resumable res = open_resumable(r, "units.csv", "units");
    const SweepResult sweep = single_unit_sweep(net, layer_of(r), test_set, sweep_options(r, res));
    write_units_csv(sweep, r.timestamp, res.stream, res.header);
    std::cout << sweep.records.size() << " new records, " << res.done.size() << " already present\n";
}

void cmd_sweep_pairs(Run& r)
{
    const Network net = load_model(r);
    const Samples test_set = load_split(r.cfg, Split::test);
    Resumable res = open_resumable(r, "pairs.csv", "pairs");
    const PairSweepResult sweep = pairwise_unit_sweep(net, layer_of(r), test_set, sweep_options(r, res));
    write_pairs_csv(sweep, r.cfg.seeds.front(), layer_of(r), r.timestamp, res.stream, res.header);
    std::cout << sweep.pairs.size() << " new records, " << res.done.size() << " already present\n";
}

void cmd_population(Run& r)
{
    const Samples train_set = load_split(r.cfg, Split::train);
    const Samples test_set = load_split(r.cfg, Split::test);
    const auto arch = architecture(r.cfg.architecture);
    TrainConfig tc;
    tc.epochs = r.cfg.epochs;
    tc.batch_size = r.cfg.batch_size;
    tc.learning_rate = static_cast<float>(r.cfg.learning_rate);

    const fs::path summary_path = r.out / "correlation_summary.csv";
    const std::set<std::string> done = completed_keys(summary_path, "correlation_summary");
    std::vector<std::uint64_t> todo;
    for (const std::uint64_t s : r.cfg.seeds) {
        if (done.count(record_key("population", s, "summary")) == 0) todo.push_back(s);
    }
    PopulationOptions po;
    po.layer_index = r.cfg.layers.empty() ? 0 : r.cfg.layers.front();
    po.checkpoint_dir = r.out / "checkpoints";
    po.on_seed_done = [](const SeedOutcome& o) {
        std::cerr << "seed " << o.seed << ": " << (o.ok ? "ok" : "failed: " + o.failure) << '\n';
    };
    const std::vector<SeedOutcome> outcomes = population_study(todo, arch, train_set, test_set, tc, po);
    const bool header = !fs::exists(summary_path) || fs::file_size(summary_path) == 0;
    std::ofstream units(r.out / "correlation_units.csv", std::ios::binary | std::ios::app);
    std::ofstream summary(summary_path, std::ios::binary | std::ios::app);
    if (!units || !summary) throw ReportError("cannot write correlation files under " + r.out.string());
    write_correlation_csvs(outcomes, r.timestamp, units, summary, header);
    r.artifacts.insert(r.artifacts.end(), {"correlation_units.csv", "correlation_summary.csv", "checkpoints/"});
}

void cmd_sweep_layers(Run& r)
{
    const Network net = load_model(r);
    const Samples test_set = load_split(r.cfg, Split::test);
    {
        Resumable res = open_resumable(r, "layers.csv", "layers");
        const LayerSweepResult sweep = layer_group_sweep(net, r.cfg.proportions, test_set, sweep_options(r, res));
        write_layers_csv(sweep, r.cfg.seeds.front(), r.timestamp, res.stream, res.header);
        for (const std::string& w : sweep.warnings) std::cerr << "warning: " << w << '\n';
    }
    // The summary covers every record on disk, including earlier runs.
    const CsvTable table = read_csv(r.out / "layers.csv");
    std::vector<LayerGroupRecord> all;
    for (const auto& row : table.rows) {
        LayerGroupRecord g;
        g.layer = std::stoul(row[table.column("layer")]);
        g.proportion = *parse_real(row[table.column("proportion")]);
        g.drop_top1_pp = *parse_real(row[table.column("drop_top1_pp")]);
        g.drop_top5_pp = *parse_real(row[table.column("drop_top5_pp")]);
        all.push_back(g);
    }
    const auto curves = summarize_layer_records(all);
    auto s = create(r, "layer_summary.csv");
    write_layer_summary_csv(curves, s);
    for (const LayerCurvePoint& p : curves) {
        std::cout << "layer " << p.layer << " p=" << format_real(p.proportion) << ": mean drop "
                  << format_real(p.mean_drop_top1_pp) << " pp\n";
    }
}

RecoveryOptions recovery_options(const Run& r)
{
    RecoveryOptions o;
    o.seed = r.cfg.seeds.front();
    o.train.batch_size = r.cfg.batch_size;
    o.train.learning_rate = static_cast<float>(r.cfg.learning_rate);
    o.threads = 0;
    return o;
}

double single_proportion(const Run& r)
{
    if (r.cfg.proportions.size() != 1) throw ConfigError("exactly one --proportion is required");
    return r.cfg.proportions.front();
}

void cmd_recover(Run& r)
{
    const Network net = load_model(r);
    const Samples train_set = load_split(r.cfg, Split::train);
    const Samples test_set = load_split(r.cfg, Split::test);
    const double p = single_proportion(r);
    const int epochs = r.opt.epochs >= 0 ? r.opt.epochs : r.cfg.retrain_epochs;
    const auto traces =
        recovery_run(net, layer_of(r), p, r.cfg.instances, epochs, train_set, test_set, recovery_options(r));
    auto f = create(r, "recovery.csv");
    write_recovery_csv(traces, r.cfg.seeds.front(), layer_of(r), p, r.timestamp, f);
}

void cmd_recover_iter(Run& r)
{
    const Network net = load_model(r);
    const Samples train_set = load_split(r.cfg, Split::train);
    const Samples test_set = load_split(r.cfg, Split::test);
    const double p = single_proportion(r);
    Network final_net;
    const auto traces = iterative_recovery(net, layer_of(r), p, r.cfg.iterations, train_set, test_set,
                                           recovery_options(r), StopRule{}, &final_net);
    auto f = create(r, "recovery_iter.csv");
    write_recovery_csv(traces, r.cfg.seeds.front(), layer_of(r), p, r.timestamp, f);
    save_checkpoint(final_net, r.out / "recovered.ablt");
    r.artifacts.push_back("recovered.ablt");
    if (!traces.empty()) {
        std::cout << "distinct filters ablated: " << format_real(traces.back().cumulative_fraction * 100.0) << "%\n";
    }
}

void cmd_embed(Run& r)
{
    const Samples test_set = load_split(r.cfg, Split::test);
    const Samples subset = test_set.head(r.cfg.embed_points);
    Matrix data = subset.batch(0, subset.size());
    if (!r.opt.ckpt.empty()) {
        // Embed the representation entering --layer (default: the output layer).
        const Network net = load_model(r);
        const std::size_t layer = r.cfg.layers.empty() ? net.layers.size() - 1 : layer_of(r);
        data = activations_before(net, layer, data);
    }
    TsneConfig tc;
    tc.perplexity = r.cfg.perplexity;
    tc.iterations = r.opt.tsne_iterations;
    tc.seed = r.cfg.seeds.front();
    const Embedding e = tsne(data, tc);
    auto f = create(r, "embedding.csv");
    write_embedding_csv(e, subset.labels, f);
    if (!e.kl_history.empty()) std::cout << "final KL " << format_real(e.kl_history.back().kl) << '\n';
}

int cmd_report(const Options& o)
{
    const fs::path dir = o.in_dir.empty() ? fs::path(o.out_dir.empty() ? "results" : o.out_dir) : fs::path(o.in_dir);
    if (o.check) {
        const auto files = check_result_dir(dir);
        for (const CheckedFile& f : files) {
            std::cout << f.path.string() << ": " << (f.schema.empty() ? "no schema, skipped" : f.schema + " ok, " + std::to_string(f.rows) + " rows") << '\n';
        }
        return 0;
    }
    if (!fs::is_directory(dir)) throw ReportError(dir.string() + " is not a directory");
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
        const auto schema = schema_for_file(f);
        std::cout << f.string() << ": " << (schema ? *schema : "unknown") << ", " << read_csv(f).rows.size()
                  << " rows\n";
    }
    return 0;
}

void add_common(CLI::App* sub, Options& o)
{
    sub->add_option("--config", o.config_path, "Campaign config JSON (flags override it)")->check(CLI::ExistingFile);
    sub->add_option("--data", o.data_dir, "Directory with the MNIST IDX files");
    sub->add_option("--out", o.out_dir, "Output directory");
    sub->add_option("--train-samples", o.train_samples, "Use only the first N training samples");
    sub->add_option("--test-samples", o.test_samples, "Use only the first N test samples");
}

void add_seed(CLI::App* sub, Options& o)
{
    sub->add_option("--seed", o.seeds, "Run seed")->expected(1);
}

void add_layer(CLI::App* sub, Options& o, bool required)
{
    auto* opt = sub->add_option("--layer", o.layer, "Layer number, 1-based (1 = first layer)")->check(CLI::PositiveNumber);
    if (required) opt->required();
}

void add_ckpt(CLI::App* sub, Options& o, bool required)
{
    auto* opt = sub->add_option("--ckpt", o.ckpt, "Checkpoint file")->check(CLI::ExistingFile);
    if (required) opt->required();
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"ablatron: ablation experiments on small MNIST networks"};
    app.require_subcommand(1);
    Options o;

    auto* train_cmd = app.add_subcommand("train", "Train a network and write model.ablt + history.csv");
    add_common(train_cmd, o);
    add_seed(train_cmd, o);
    train_cmd->add_option("--arch", o.arch, "mlp or cnn")->check(CLI::IsMember({"mlp", "cnn"}));
    train_cmd->add_option("--epochs", o.epochs, "Training epochs")->check(CLI::NonNegativeNumber);

    auto* ablate_cmd = app.add_subcommand("ablate", "Ablate units or filters and write the change accounting");
    add_common(ablate_cmd, o);
    add_ckpt(ablate_cmd, o, true);
    add_layer(ablate_cmd, o, true);
    ablate_cmd->add_option("--units", o.units, "Unit or filter indices (comma separated)")->delimiter(',')->required();
    ablate_cmd->add_option("--kind", o.kind, "unit or filter (default from the layer type)")
        ->check(CLI::IsMember({"unit", "filter"}));

    auto* units_cmd = app.add_subcommand("sweep-units", "Ablate every unit of a dense layer");
    add_common(units_cmd, o);
    add_seed(units_cmd, o);
    add_ckpt(units_cmd, o, true);
    add_layer(units_cmd, o, true);

    auto* pairs_cmd = app.add_subcommand("sweep-pairs", "Ablate every unit pair of a dense layer");
    add_common(pairs_cmd, o);
    add_seed(pairs_cmd, o);
    add_ckpt(pairs_cmd, o, true);
    add_layer(pairs_cmd, o, true);

    auto* pop_cmd = app.add_subcommand("population", "Train one network per seed and correlate p-values with drops");
    add_common(pop_cmd, o);
    add_layer(pop_cmd, o, false);
    pop_cmd->add_option("--arch", o.arch, "mlp or cnn")->check(CLI::IsMember({"mlp", "cnn"}));
    pop_cmd->add_option("--seeds", o.seed_range, "Seeds, e.g. 1-20 or 1,5,9");
    pop_cmd->add_option("--epochs", o.epochs, "Training epochs")->check(CLI::NonNegativeNumber);

    auto* layers_cmd = app.add_subcommand("sweep-layers", "Similarity-group filter ablation over all conv layers");
    add_common(layers_cmd, o);
    add_seed(layers_cmd, o);
    add_ckpt(layers_cmd, o, true);
    layers_cmd->add_option("--proportions", o.proportions, "Group proportions in (0, 1]")->delimiter(',');

    auto* recover_cmd = app.add_subcommand("recover", "Random filter ablation followed by retraining");
    add_common(recover_cmd, o);
    add_seed(recover_cmd, o);
    add_ckpt(recover_cmd, o, true);
    add_layer(recover_cmd, o, true);
    recover_cmd->add_option("--proportion", o.proportions, "Proportion of filters to ablate")->expected(1);
    recover_cmd->add_option("--instances", o.instances, "Independent instances");
    recover_cmd->add_option("--epochs", o.epochs, "Retraining epochs")->check(CLI::NonNegativeNumber);

    auto* iter_cmd = app.add_subcommand("recover-iter", "Repeated ablation with stop-rule retraining");
    add_common(iter_cmd, o);
    add_seed(iter_cmd, o);
    add_ckpt(iter_cmd, o, true);
    add_layer(iter_cmd, o, true);
    iter_cmd->add_option("--proportion", o.proportions, "Proportion of filters per iteration")->expected(1);
    iter_cmd->add_option("--iterations", o.iterations, "Ablation iterations");

    auto* embed_cmd = app.add_subcommand("embed", "t-SNE of test images (or of a layer's input with --ckpt)");
    add_common(embed_cmd, o);
    add_seed(embed_cmd, o);
    add_ckpt(embed_cmd, o, false);
    add_layer(embed_cmd, o, false);
    embed_cmd->add_option("--points", o.points, "Number of test points");
    embed_cmd->add_option("--perplexity", o.perplexity, "Target perplexity");
    embed_cmd->add_option("--tsne-iterations", o.tsne_iterations, "Optimisation iterations")
        ->check(CLI::PositiveNumber);

    auto* report_cmd = app.add_subcommand("report", "List result files; --check validates them against their schemas");
    report_cmd->add_option("--in", o.in_dir, "Result directory");
    report_cmd->add_flag("--check", o.check, "Fail on any schema violation");

    app.add_subcommand("fetch-instructions", "Where to obtain MNIST");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    CLI::App* sub = app.get_subcommands().front();
    const std::string name = sub->get_name();
    try {
        if (name == "fetch-instructions") {
            std::cout << kFetchInstructions;
            return 0;
        }
        if (name == "report") return cmd_report(o);

        Run r;
        r.command = name;
        r.opt = o;
        r.cfg = effective_config(*sub, o);
        r.out = r.cfg.output;
        r.timestamp = utc_timestamp();
        r.start = std::chrono::steady_clock::now();
        fs::create_directories(r.out);

        if (name == "train") cmd_train(r);
        else if (name == "ablate") cmd_ablate(r);
        else if (name == "sweep-units") cmd_sweep_units(r);
        else if (name == "sweep-pairs") cmd_sweep_pairs(r);
        else if (name == "population") cmd_population(r);
        else if (name == "sweep-layers") cmd_sweep_layers(r);
        else if (name == "recover") cmd_recover(r);
        else if (name == "recover-iter") cmd_recover_iter(r);
        else if (name == "embed") cmd_embed(r);

        RunManifest m;
        m.command = name;
        m.config = r.cfg.to_json();
        if (!o.ckpt.empty()) m.config["checkpoint"] = o.ckpt;
        m.config.update(r.extra);
        m.seed = r.cfg.seeds.front();
        m.started = r.timestamp;
        m.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - r.start).count();
        m.artifacts = r.artifacts;
        write_manifest(m, r.out / (name + ".manifest.json"));
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "ablatron " << name << ": error: " << e.what() << '\n';
        return 1;
    }
}
