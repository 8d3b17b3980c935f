// End-to-end acceptance checks on MNIST. One PASS/FAIL line per criterion;
// exits nonzero when any criterion fails.
//
//   ablatron_acceptance [--only A1,A8,...] [--data DIR] [--cache DIR]

#include "ablatron/ablation.hpp"
#include "ablatron/checkpoint.hpp"
#include "ablatron/error.hpp"
#include "ablatron/evaluation.hpp"
#include "ablatron/experiments.hpp"
#include "ablatron/mnist.hpp"
#include "ablatron/stats.hpp"
#include "ablatron/train.hpp"
#include "ablatron/tsne.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace ablatron;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

struct Verdict {
    bool pass = false;
    std::string detail;
};

const std::uint32_t kMlpWidths[] = {784, 20, 10, 10};

TrainConfig mlp_config()
{
    TrainConfig cfg;
    cfg.epochs = 100;
    cfg.batch_size = 64;
    cfg.learning_rate = 0.1f;
    cfg.seed = 1;
    return cfg;
}

TrainConfig cnn_config()
{
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 64;
    cfg.learning_rate = 0.05f;
    cfg.seed = 1;
    return cfg;
}

class Context {
public:
    Context(fs::path data, fs::path cache) : data_dir_(std::move(data)), cache_(std::move(cache)) {}

    const Samples& train_set()
    {
        if (!train_) train_ = load_mnist_dir(data_dir_, Split::train).present();
        return *train_;
    }
    const Samples& test_set()
    {
        if (!test_) test_ = load_mnist_dir(data_dir_, Split::test).present();
        return *test_;
    }

    // A1 network: always trained here, since its runtime is part of A1.
    const Network& mlp()
    {
        if (!mlp_) {
            const auto t0 = Clock::now();
            mlp_ = train(init_network(mlp_architecture(kMlpWidths), 1), train_set(), mlp_config()).network;
            mlp_seconds_ = seconds_since(t0);
        }
        return *mlp_;
    }
    double mlp_seconds() const { return mlp_seconds_; }

    const SweepResult& unit_sweep()
    {
        if (!sweep_) sweep_ = single_unit_sweep(mlp(), 0, test_set());
        return *sweep_;
    }

    // Desk CNN; cached between runs because it is an input to A8-A10, not a criterion.
    const Network& cnn()
    {
        if (!cnn_) {
            const fs::path ckpt = cache_ / "acceptance-cnn-e3-lr0.05-s1.ablt";
            if (fs::exists(ckpt)) {
                cnn_ = load_checkpoint(ckpt);
            } else {
                const auto t0 = Clock::now();
                cnn_ = train(init_network(desk_cnn_architecture(), 1), train_set(), cnn_config()).network;
                std::printf("   (trained desk CNN in %.0f s)\n", seconds_since(t0));
                fs::create_directories(cache_);
                save_checkpoint(*cnn_, ckpt);
            }
        }
        return *cnn_;
    }

    const LayerSweepResult& layer_sweep()
    {
        if (!layers_) {
            const double props[] = {0.01, 0.05, 0.10, 0.25};
            layers_ = layer_group_sweep(cnn(), props, test_set());
        }
        return *layers_;
    }

private:
    fs::path data_dir_;
    fs::path cache_;
    std::optional<Samples> train_;
    std::optional<Samples> test_;
    std::optional<Network> mlp_;
    double mlp_seconds_ = 0.0;
    std::optional<SweepResult> sweep_;
    std::optional<Network> cnn_;
    std::optional<LayerSweepResult> layers_;
};

Verdict a1(Context& ctx)
{
    const Network& net = ctx.mlp();
    const double acc = evaluate(net, ctx.test_set()).overall_accuracy;
    const bool in_band = acc >= 0.93 && acc <= 0.96;
    const bool fast = ctx.mlp_seconds() <= 15 * 60;
    return {in_band && fast, "test accuracy " + fmt("%.4f", acc) + " (band [0.93, 0.96]), 100 epochs in " +
                                 fmt("%.0f", ctx.mlp_seconds()) + " s (limit 900 s)"};
}

Verdict a2(Context& ctx)
{
    const auto drops = ctx.unit_sweep().drops();
    const double max_drop = *std::max_element(drops.begin(), drops.end());
    const double min_drop = *std::min_element(drops.begin(), drops.end());
    const auto small = std::count_if(drops.begin(), drops.end(), [](double d) { return d <= 3.0; });
    return {max_drop >= 20.0 && small >= 3, "drops " + fmt("%.2f", min_drop) + ".." + fmt("%.2f", max_drop) +
                                                " pp; max >= 20 required; " + std::to_string(small) +
                                                " units <= 3 pp (>= 3 required)"};
}

Verdict a3(Context& ctx)
{
    double best = -1e9;
    std::size_t best_unit = 0, best_class = 0;
    for (const ExperimentRecord& r : ctx.unit_sweep().records) {
        for (std::size_t c = 0; c < r.class_deltas_pp.size(); ++c) {
            if (r.class_deltas_pp[c] > best) {
                best = r.class_deltas_pp[c];
                best_unit = r.spec.targets()[0];
                best_class = c;
            }
        }
    }
    return {best >= 1.0, "largest class gain +" + fmt("%.2f", best) + " pp (unit " + std::to_string(best_unit) +
                             ", class " + std::to_string(best_class) + "); >= +1 required"};
}

Verdict a4(Context& ctx)
{
    const PairSweepResult r = pairwise_unit_sweep(ctx.mlp(), 0, ctx.test_set());
    const PairRecord* best = &r.pairs.front();
    std::size_t count = 0;
    for (const PairRecord& p : r.pairs) {
        count += p.gap_pp >= 1.0;
        if (p.gap_pp > best->gap_pp) best = &p;
    }
    return {count >= 1, std::to_string(count) + " of " + std::to_string(r.pairs.size()) +
                            " pairs exceed the single-drop sum by >= 1 pp; largest gap " + fmt("%.2f", best->gap_pp) +
                            " pp (units " + std::to_string(best->unit_a) + "," + std::to_string(best->unit_b) + ")"};
}

Verdict a5(Context& ctx)
{
    std::vector<std::uint64_t> seeds(20);
    std::iota(seeds.begin(), seeds.end(), std::uint64_t{1});
    const auto t0 = Clock::now();
    const auto outcomes = population_study(seeds, mlp_architecture(kMlpWidths), ctx.train_set(), ctx.test_set(),
                                           mlp_config(), PopulationOptions{});
    const double secs = seconds_since(t0);
    std::vector<double> rho;
    std::size_t negative = 0;
    for (const SeedOutcome& o : outcomes) {
        if (!o.ok || !o.spearman) continue;
        rho.push_back(*o.spearman);
        negative += *o.spearman < 0.0;
    }
    std::sort(rho.begin(), rho.end());
    const double median = rho.empty() ? 0.0
                          : rho.size() % 2 ? rho[rho.size() / 2]
                                           : (rho[rho.size() / 2 - 1] + rho[rho.size() / 2]) / 2;
    const bool pass = negative >= 16 && !rho.empty() && median <= -0.3 && secs <= 3 * 3600;
    return {pass, std::to_string(negative) + "/20 seeds with Spearman < 0 (>= 16 required), median " +
                      fmt("%.3f", median) + " (<= -0.3 required), " + std::to_string(rho.size()) + " seeds ok, " +
                      fmt("%.0f", secs) + " s"};
}

// Exact two-sided p over every assignment of ranks, by bitmask.
std::vector<double> u_null_cdf(std::size_t n1, std::size_t n2, std::vector<double>& pmf)
{
    const std::size_t n = n1 + n2;
    const std::size_t umax = n1 * n2;
    std::vector<double> count(umax + 1, 0.0);
    double total = 0;
    for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
        if (std::size_t(__builtin_popcount(mask)) != n1) continue;
        std::size_t rank_sum = 0;
        for (std::size_t i = 0; i < n; ++i) rank_sum += (mask >> i & 1u) ? i + 1 : 0;
        count[rank_sum - n1 * (n1 + 1) / 2] += 1;
        total += 1;
    }
    pmf.resize(umax + 1);
    std::vector<double> cdf(umax + 1);
    double run = 0;
    for (std::size_t u = 0; u <= umax; ++u) {
        pmf[u] = count[u] / total;
        run += pmf[u];
        cdf[u] = run;
    }
    return cdf;
}

Verdict a6(Context&)
{
    // fixed corpus of distinct values; rank patterns cover every tie-free pair
    std::vector<double> corpus(14);
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> d(-50.0, 50.0);
    for (double& v : corpus) v = d(rng);
    std::sort(corpus.begin(), corpus.end());
    std::size_t cases = 0, exceed = 0, complement_broken = 0;
    double worst = 0, worst_normal = 0;
    for (std::size_t n1 = 2; n1 <= 7; ++n1) {
        for (std::size_t n2 = 2; n2 <= 7; ++n2) {
            const std::size_t n = n1 + n2;
            std::vector<double> pmf;
            const std::vector<double> cdf = u_null_cdf(n1, n2, pmf);
            for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
                if (std::size_t(__builtin_popcount(mask)) != n1) continue;
                std::vector<double> a, b;
                std::size_t rank_sum = 0;
                for (std::size_t i = 0; i < n; ++i) {
                    if (mask >> i & 1u) {
                        a.push_back(corpus[i]);
                        rank_sum += i + 1;
                    } else {
                        b.push_back(corpus[i]);
                    }
                }
                std::shuffle(a.begin(), a.end(), rng);
                std::shuffle(b.begin(), b.end(), rng);
                const std::size_t u = rank_sum - n1 * (n1 + 1) / 2;
                const double lower = cdf[u];
                const double upper = 1.0 - (u == 0 ? 0.0 : cdf[u - 1]);
                const double exact = std::min(1.0, 2.0 * std::min(lower, upper));
                const UTestResult ab = mann_whitney_u(a, b), ba = mann_whitney_u(b, a);
                const double err = std::abs(ab.p_value - exact);
                worst = std::max(worst, err);
                exceed += err > 0.05;
                complement_broken += ab.u_statistic + ba.u_statistic != double(n1 * n2);
                worst_normal = std::max(worst_normal, std::abs(mann_whitney_u(a, b, PValueMethod::normal).p_value - exact));
                ++cases;
            }
        }
    }
    return {exceed == 0 && complement_broken == 0,
            std::to_string(cases) + " tie-free pairs (2 <= n1, n2 <= 7): max |p - p_exact| " + fmt("%.2e", worst) +
                " (<= 0.05), complement law broken " + std::to_string(complement_broken) +
                "x; plain normal approximation would deviate up to " + fmt("%.3f", worst_normal)};
}

// Copy of `net` with hidden unit `unit` of dense layer `layer` taken out of the structure.
Network remove_unit(const Network& net, std::size_t layer, std::size_t unit)
{
    std::vector<std::uint32_t> widths{784};
    for (const Layer& l : net.layers) widths.push_back(static_cast<std::uint32_t>(l.spec.unit_count()));
    widths[layer + 1] -= 1;
    Network out = init_network(mlp_architecture(widths), 0);
    for (std::size_t li = 0; li < net.layers.size(); ++li) {
        const Layer& src = net.layers[li];
        Layer& dst = out.layers[li];
        const std::size_t rows = src.spec.unit_count(), cols = src.spec.fan_in();
        dst.weights.clear();
        for (std::size_t r = 0; r < rows; ++r) {
            if (li == layer && r == unit) continue;
            for (std::size_t c = 0; c < cols; ++c) {
                if (li == layer + 1 && c == unit) continue;
                dst.weights.push_back(src.weights[r * cols + c]);
            }
        }
    }
    return out;
}

Verdict a7(Context& ctx)
{
    const Samples& test = ctx.test_set();
    const Matrix x = test.batch(0, test.size());
    TrainConfig cfg = mlp_config();
    cfg.epochs = 1;
    std::mt19937_64 rng(7);
    std::size_t identical = 0;
    for (std::uint64_t s = 1; s <= 100; ++s) {
        cfg.seed = s;
        const Network net = train(init_network(mlp_architecture(kMlpWidths), s), ctx.train_set(), cfg).network;
        const std::size_t layer = rng() % 2;
        const std::size_t unit = rng() % net.layers[layer].spec.unit_count();
        const Network zeroed = ablate(net, AblationSpec(layer, AblationKind::unit, {unit}));
        identical += bit_identical(forward(zeroed, x).values, forward(remove_unit(net, layer, unit), x).values);
    }
    return {identical == 100, std::to_string(identical) + "/100 trained MLPs (1 epoch each) bit-identical over " +
                                  std::to_string(test.size()) + " test images"};
}

Verdict a8(Context& ctx)
{
    const LayerSweepResult& r = ctx.layer_sweep();
    const double props[] = {0.01, 0.05, 0.10, 0.25};
    std::ostringstream detail;
    bool monotone = true;
    for (std::size_t layer : {0u, 2u, 4u}) {
        detail << "L" << layer << ":";
        for (std::size_t i = 0; i < 4; ++i) {
            const LayerCurvePoint& c = r.curve(layer, props[i]);
            detail << " " << fmt("%.2f", c.mean_drop_top1_pp) << "+-" << fmt("%.2f", c.std_drop_top1_pp);
            if (i == 0) continue;
            const LayerCurvePoint& prev = r.curve(layer, props[i - 1]);
            const double pooled = std::sqrt((c.std_drop_top1_pp * c.std_drop_top1_pp +
                                             prev.std_drop_top1_pp * prev.std_drop_top1_pp) / 2);
            monotone = monotone && c.mean_drop_top1_pp >= prev.mean_drop_top1_pp - pooled;
        }
        detail << "; ";
    }
    double hi = -1e9, lo = 1e9;
    for (std::size_t layer : {0u, 2u, 4u}) {
        hi = std::max(hi, r.curve(layer, 0.25).mean_drop_top1_pp);
        lo = std::min(lo, r.curve(layer, 0.25).mean_drop_top1_pp);
    }
    const bool spread = hi >= 2 * lo;
    detail << "monotone within pooled std: " << (monotone ? "yes" : "no") << "; at 25% max " << fmt("%.2f", hi)
           << " vs 2 x min " << fmt("%.2f", 2 * lo) << " pp";
    return {monotone && spread, detail.str()};
}

Verdict a9(Context& ctx)
{
    const std::size_t layer = most_damaging_layer(ctx.layer_sweep(), 0.25);
    const double original = topk_accuracy(ctx.cnn(), ctx.test_set()).top1;
    RecoveryOptions opt;
    opt.seed = 1;
    opt.train = cnn_config();
    opt.stop_early = [&](const EpochStats& e) { return e.test_top1 && *e.test_top1 >= original - 0.01; };
    const auto traces = recovery_run(ctx.cnn(), layer, 0.25, 5, 5, ctx.train_set(), ctx.test_set(), opt);
    std::size_t ok = 0;
    std::ostringstream detail;
    detail << "layer " << layer << ", original " << fmt("%.4f", original) << "; per instance ablated->recovered (epochs):";
    for (const RecoveryTrace& t : traces) {
        const double final_top1 = t.epochs.empty() ? t.top1_ablated : *t.epochs.back().test_top1;
        const bool reached = final_top1 >= original - 0.01;
        ok += reached;
        detail << " " << fmt("%.4f", t.top1_ablated) << "->" << fmt("%.4f", final_top1) << " (" << t.epochs_used << ")";
    }
    detail << "; " << ok << "/5 within 1 pp in <= 5 epochs";
    return {ok == 5, detail.str()};
}

Verdict a10(Context& ctx)
{
    const std::size_t layer = most_damaging_layer(ctx.layer_sweep(), 0.25);
    const double original = topk_accuracy(ctx.cnn(), ctx.test_set()).top1;
    RecoveryOptions opt;
    opt.seed = 1;
    opt.train = cnn_config();
    Network final_net;
    const auto traces = iterative_recovery(ctx.cnn(), layer, 0.25, 6, ctx.train_set(), ctx.test_set(), opt, StopRule{},
                                           &final_net);
    const double final_top1 = topk_accuracy(final_net, ctx.test_set()).top1;
    const double fraction = traces.back().cumulative_fraction;
    const std::size_t n = ctx.cnn().layers[layer].spec.unit_count();
    const std::size_t k = group_size(n, 0.25);
    const double expected = expected_distinct_fraction(n, k, 6);
    // sampler check: Monte-Carlo mean over independent streams
    double mc = 0;
    for (std::uint64_t s = 1; s <= 2000; ++s) {
        std::set<std::size_t> seen;
        for (std::size_t it = 0; it < 6; ++it) {
            const auto g = sample_group(n, k, s, layer, it);
            seen.insert(g.begin(), g.end());
        }
        mc += double(seen.size()) / double(n) / 2000.0;
    }
    const bool close = (original - final_top1) * 100 <= 4.0;
    const bool fraction_ok = std::abs(fraction - expected) * 100 <= 5.0;
    std::ostringstream detail;
    detail << "layer " << layer << ": top-1 " << fmt("%.4f", original) << " -> " << fmt("%.4f", final_top1)
           << " after 6 iterations (gap <= 4 pp required); epochs per iteration:";
    for (const RecoveryTrace& t : traces) detail << " " << t.epochs_used;
    detail << "; distinct ablated " << fmt("%.1f", fraction * 100) << "% vs expected " << fmt("%.1f", expected * 100)
           << "% +-5 (sampler Monte-Carlo mean " << fmt("%.1f", mc * 100) << "%)";
    return {close && fraction_ok, detail.str()};
}

Verdict a11(Context& ctx)
{
    const Samples& test = ctx.test_set();
    const std::size_t n = 2000;
    const Matrix x = test.batch(0, n);
    TsneConfig cfg;
    const auto t0 = Clock::now();
    const Embedding e = tsne(x, cfg);
    const double secs = seconds_since(t0);
    std::map<int, double> kl;
    for (const KlRecord& r : e.kl_history) kl[r.iteration] = r.kl;
    std::size_t windows = 0, violations = 0;
    double worst = -1e9;
    for (const auto& [t, v] : kl) {
        if (t < cfg.exaggeration_iters) continue;
        const auto later = kl.find(t + 50);
        if (later == kl.end()) continue;
        ++windows;
        worst = std::max(worst, later->second - v);
        violations += later->second > v + 1e-3;
    }
    const std::span<const std::uint32_t> labels(test.labels.data(), n);
    const double purity = knn_label_purity(e, labels, 10);
    return {violations == 0 && windows > 0 && purity >= 0.3,
            std::to_string(windows) + " post-exaggeration 50-iteration windows, " + std::to_string(violations) +
                " KL increases beyond 1e-3 (largest change " + fmt("%+.2e", worst) + "); final KL " +
                fmt("%.4f", e.kl_history.back().kl) + "; 10-NN purity " + fmt("%.3f", purity) + " (>= 0.3); " +
                fmt("%.0f", secs) + " s"};
}

Verdict a12(Context&)
{
    std::vector<std::string> failed;
    auto expect = [&](bool ok, const std::string& what) {
        if (!ok) failed.push_back(what);
    };
    const double x5[] = {1, 2, 3, 4, 5};
    double lin[5], neg[5];
    for (int i = 0; i < 5; ++i) {
        lin[i] = 2 * x5[i] + 1;
        neg[i] = -x5[i];
    }
    expect(std::abs(pearson(x5, lin) - 1.0) <= 1e-12, "pearson y=2x+1");
    expect(std::abs(pearson(x5, neg) + 1.0) <= 1e-12, "pearson y=-x");
    const double a[] = {1, 2, 3}, b[] = {1, 3, 2};
    // direct formula: means 2, 2; cov terms (-1)(-1) + 0 + (1)(0) = 1; var terms 2, 2
    expect(std::abs(pearson(a, b) - 1.0 / 2.0) <= 1e-12, "pearson [1,2,3] vs [1,3,2]");
    try {
        const double c[] = {3, 3, 3};
        pearson(a, c);
        failed.push_back("pearson constant vector");
    } catch (const StatsError&) {
    }
    const double sq[] = {1, 8, 27, 64, 125}, rev[] = {5, 4, 3, 2, 1};
    expect(std::abs(spearman(x5, sq) - 1.0) <= 1e-12, "spearman increasing");
    expect(std::abs(spearman(x5, rev) + 1.0) <= 1e-12, "spearman reversal");
    // rank differences d = (0, -1, 1)
    expect(std::abs(spearman(a, b) - (1.0 - 6.0 * 2.0 / (3.0 * (9.0 - 1.0)))) <= 1e-12, "spearman [1,2,3] vs [1,3,2]");

    std::mt19937_64 rng(12);
    std::normal_distribution<double> d;
    std::vector<double> x(40), y(40), fx(40), ax(40);
    for (std::size_t i = 0; i < 40; ++i) {
        x[i] = d(rng);
        y[i] = 0.3 * x[i] + d(rng);
        fx[i] = std::atan(x[i]) + x[i] * x[i] * x[i];
    }
    expect(spearman(fx, y) == spearman(x, y), "spearman monotone invariance");
    for (const double k : {2.5, -0.1, 40.0}) {
        for (std::size_t i = 0; i < 40; ++i) ax[i] = k * x[i] + 3;
        expect(std::abs(pearson(ax, y) - std::copysign(1.0, k) * pearson(x, y)) <= 1e-12, "pearson affine invariance");
    }

    const std::vector<std::vector<double>> m{{0, 4, 2}, {10, 4, -2}};
    const SelectivityProfile p = selectivity_deviation(m);
    expect(std::abs(p.per_class_stddev[0] - 5.0) <= 1e-12, "selectivity column [0,10]");
    expect(p.per_class_stddev[1] == 0.0, "selectivity identical drops");
    const SelectivityProfile stack[] = {p, p, p, p};
    const auto mean = mean_selectivity(stack);
    bool same = true;
    for (std::size_t c = 0; c < 3; ++c) same = same && std::abs(mean[c] - p.per_class_stddev[c]) <= 1e-12;
    expect(same, "selectivity stack mean");

    std::string detail = "pearson, spearman and selectivity examples and invariants";
    if (!failed.empty()) {
        detail += "; failed:";
        for (const auto& f : failed) detail += " [" + f + "]";
    }
    return {failed.empty(), detail};
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"acceptance checks on MNIST"};
    std::vector<std::string> only;
    std::string data_dir = ABLATRON_MNIST_DIR;
    std::string cache_dir = ABLATRON_ACCEPTANCE_CACHE;
    app.add_option("--only", only, "Criteria to run, e.g. A1,A6")->delimiter(',');
    app.add_option("--data", data_dir, "Directory with the MNIST IDX files");
    app.add_option("--cache", cache_dir, "Where the trained desk CNN is cached");
    CLI11_PARSE(app, argc, argv);

    const std::vector<std::pair<std::string, std::function<Verdict(Context&)>>> criteria{
        {"A1", a1}, {"A2", a2}, {"A3", a3}, {"A4", a4},  {"A5", a5},   {"A6", a6},
        {"A7", a7}, {"A8", a8}, {"A9", a9}, {"A10", a10}, {"A11", a11}, {"A12", a12}};

    Context ctx(data_dir, cache_dir);
    int failures = 0;
    for (const auto& [name, check] : criteria) {
        if (!only.empty() && std::find(only.begin(), only.end(), name) == only.end()) continue;
        const auto t0 = Clock::now();
        Verdict v;
        try {
            v = check(ctx);
        } catch (const std::exception& e) {
            v = {false, std::string("error: ") + e.what()};
        }
        failures += !v.pass;
        std::printf("%-3s %s  %s  [%.0f s]\n", name.c_str(), v.pass ? "PASS" : "FAIL", v.detail.c_str(),
                    seconds_since(t0));
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
