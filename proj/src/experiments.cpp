#include "ablatron/experiments.hpp"

#include "ablatron/checkpoint.hpp"
#include "ablatron/csv.hpp"
#include "ablatron/error.hpp"
#include "ablatron/parallel.hpp"
#include "ablatron/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <mutex>
#include <numeric>
#include <ostream>
#include <random>
#include <set>
#include <sstream>

namespace ablatron {

namespace {

std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ull)
{
    for (const unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::uint64_t splitmix(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b)
{
    return splitmix(seed ^ splitmix(a ^ splitmix(b)));
}

std::size_t resolve_threads(std::size_t t) { return t == 0 ? worker_count() : t; }

std::string join(std::span<const std::size_t> v)
{
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i != 0) s += ';';
        s += std::to_string(v[i]);
    }
    return s;
}

std::string join_reals(std::span<const double> v)
{
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i != 0) s += ';';
        s += format_real(v[i]);
    }
    return s;
}

const Layer& dense_layer(const Network& net, std::size_t layer_index)
{
    if (layer_index >= net.layers.size()) throw SpecError("layer " + std::to_string(layer_index) + " does not exist");
    const Layer& layer = net.layers[layer_index];
    if (layer.spec.kind != LayerKind::dense) {
        throw SpecError("layer " + std::to_string(layer_index) + " is not a dense layer");
    }
    return layer;
}

const Layer& conv_layer(const Network& net, std::size_t layer_index)
{
    if (layer_index >= net.layers.size()) throw SpecError("layer " + std::to_string(layer_index) + " does not exist");
    const Layer& layer = net.layers[layer_index];
    if (layer.spec.kind != LayerKind::conv2d) {
        throw SpecError("layer " + std::to_string(layer_index) + " is not a conv layer");
    }
    return layer;
}

ExperimentRecord make_record(std::string key, std::uint64_t seed, AblationSpec spec, const EvalReport& before,
                             const EvalReport& after)
{
    ExperimentRecord r;
    r.key = std::move(key);
    r.seed = seed;
    r.spec = std::move(spec);
    r.top1_before = before.topk_accuracy(1);
    r.top1_after = after.topk_accuracy(1);
    r.drop_pp = (r.top1_before - r.top1_after) * 100.0;
    r.top5_before = before.topk_accuracy(5);
    r.top5_after = after.topk_accuracy(5);
    r.drop_top5_pp = (r.top5_before - r.top5_after) * 100.0;
    r.accounting = diff_reports(before, after);
    r.class_deltas_pp.reserve(before.class_count);
    for (std::size_t c = 0; c < before.class_count; ++c) {
        r.class_deltas_pp.push_back((after.per_class_accuracy[c] - before.per_class_accuracy[c]) * 100.0);
    }
    return r;
}

std::string arch_signature(std::span<const LayerSpec> arch)
{
    std::ostringstream s;
    for (const LayerSpec& l : arch) {
        s << int(l.kind) << ',' << int(l.activation) << ',' << l.in_shape.c << 'x' << l.in_shape.h << 'x'
          << l.in_shape.w << ',' << l.out_shape.c << 'x' << l.out_shape.h << 'x' << l.out_shape.w << ','
          << l.filter_count << ',' << l.kernel_height << ',' << l.kernel_width << ',' << l.stride << ','
          << l.padding << ',' << l.has_bias << '|';
    }
    return s.str();
}

void freeze_below(Network& net, std::size_t layer_index)
{
    for (std::size_t l = 0; l < net.layers.size(); ++l) net.layers[l].frozen = l < layer_index;
}

void unfreeze(Network& net)
{
    for (Layer& l : net.layers) l.frozen = false;
}

}  // namespace

CachedEvaluator::CachedEvaluator(const Network& base, std::size_t layer, const Samples& data)
    : layer_(layer), data_(data)
{
    if (layer >= base.layers.size()) throw SpecError("layer " + std::to_string(layer) + " does not exist");
    if (data.size() == 0) throw DataError("evaluation set is empty");
    activations_ = activations_before(base, layer, data.batch(0, data.size()));
}

EvalReport CachedEvaluator::evaluate(const Network& modified) const
{
    return make_report(forward_from(modified, layer_, activations_), data_.labels, data_.class_count);
}

std::string record_key(const std::string& campaign, std::uint64_t seed, const std::string& payload)
{
    std::uint64_t h = fnv1a(campaign);
    h = fnv1a("\x1f" + std::to_string(seed) + "\x1f", h);
    h = fnv1a(payload, h);
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::vector<double> SweepResult::drops() const
{
    std::vector<double> d;
    d.reserve(records.size());
    for (const ExperimentRecord& r : records) d.push_back(r.drop_pp);
    return d;
}

SweepResult single_unit_sweep(const Network& net, std::size_t layer_index, const Samples& data,
                              const SweepOptions& options)
{
    const std::size_t units = dense_layer(net, layer_index).spec.unit_count();
    const CachedEvaluator eval(net, layer_index, data);
    SweepResult result;
    result.baseline = eval.evaluate(net);

    std::vector<AblationSpec> todo;
    std::vector<std::string> keys;
    for (std::size_t u = 0; u < units; ++u) {
        AblationSpec spec(layer_index, AblationKind::unit, {u});
        std::string key = record_key("units", options.seed, spec.to_json().dump());
        if (options.skip && options.skip(key)) continue;
        todo.push_back(std::move(spec));
        keys.push_back(std::move(key));
    }
    result.records.resize(todo.size());
    parallel_for(
        todo.size(),
        [&](std::size_t i) {
            const EvalReport after = eval.evaluate(ablate(net, todo[i]));
            result.records[i] = make_record(keys[i], options.seed, todo[i], result.baseline, after);
        },
        resolve_threads(options.threads));
    return result;
}

PairSweepResult pairwise_unit_sweep(const Network& net, std::size_t layer_index, const Samples& data,
                                    const SweepOptions& options)
{
    const std::size_t units = dense_layer(net, layer_index).spec.unit_count();
    if (units < 2) throw SpecError("pairwise sweep needs at least two units");
    const CachedEvaluator eval(net, layer_index, data);
    const std::size_t threads = resolve_threads(options.threads);
    PairSweepResult result;
    result.baseline = eval.evaluate(net);
    result.singles.resize(units);
    parallel_for(
        units,
        [&](std::size_t u) {
            result.singles[u] = eval.evaluate(ablate(net, AblationSpec(layer_index, AblationKind::unit, {u})));
        },
        threads);

    const double base = result.baseline.topk_accuracy(1);
    std::vector<std::pair<std::size_t, std::size_t>> todo;
    std::vector<std::string> keys;
    for (std::size_t a = 0; a < units; ++a) {
        for (std::size_t b = a + 1; b < units; ++b) {
            const AblationSpec spec(layer_index, AblationKind::unit, {a, b});
            std::string key = record_key("pairs", options.seed, spec.to_json().dump());
            if (options.skip && options.skip(key)) continue;
            todo.emplace_back(a, b);
            keys.push_back(std::move(key));
        }
    }
    result.pairs.resize(todo.size());
    parallel_for(
        todo.size(),
        [&](std::size_t i) {
            const auto [a, b] = todo[i];
            const EvalReport pair = eval.evaluate(ablate(net, AblationSpec(layer_index, AblationKind::unit, {a, b})));
            PairRecord& r = result.pairs[i];
            r.key = keys[i];
            r.unit_a = a;
            r.unit_b = b;
            r.drop_a_pp = (base - result.singles[a].topk_accuracy(1)) * 100.0;
            r.drop_b_pp = (base - result.singles[b].topk_accuracy(1)) * 100.0;
            r.pair_drop_pp = (base - pair.topk_accuracy(1)) * 100.0;
            r.gap_pp = r.pair_drop_pp - (r.drop_a_pp + r.drop_b_pp);
            r.accounting = pairwise_diff(result.baseline, result.singles[a], result.singles[b], pair);
        },
        threads);
    return result;
}

std::vector<SeedOutcome> population_study(std::span<const std::uint64_t> seeds, std::span<const LayerSpec> arch,
                                          const Samples& train_data, const Samples& test_data, const TrainConfig& cfg,
                                          const PopulationOptions& options)
{
    validate_architecture(arch);
    cfg.validate();
    if (options.layer_index >= arch.size() || arch[options.layer_index].kind != LayerKind::dense) {
        throw SpecError("population layer must be a dense layer");
    }
    std::ostringstream cfg_sig;
    cfg_sig << arch_signature(arch) << "epochs=" << cfg.epochs << ",batch=" << cfg.batch_size
            << ",lr=" << format_real(cfg.learning_rate) << ",shuffle=" << cfg.shuffle;
    if (options.checkpoint_dir) std::filesystem::create_directories(*options.checkpoint_dir);

    std::vector<SeedOutcome> outcomes(seeds.size());
    std::mutex report_mutex;
    parallel_for(
        seeds.size(),
        [&](std::size_t i) {
            SeedOutcome& out = outcomes[i];
            out.seed = seeds[i];
            const Network init = init_network(arch, seeds[i]);
            TrainConfig seed_cfg = cfg;
            seed_cfg.seed = seeds[i];
            std::optional<Network> trained;
            std::filesystem::path ckpt;
            if (options.checkpoint_dir) {
                ckpt = *options.checkpoint_dir / ("pop-" + record_key("population", seeds[i], cfg_sig.str()) + ".ablt");
                if (std::filesystem::exists(ckpt)) {
                    try {
                        trained = load_checkpoint(ckpt);
                    } catch (const CheckpointError&) {
                        trained.reset();  // stale or partial file; retrain
                    }
                }
            }
            if (!trained) {
                try {
                    trained = train(init, train_data, seed_cfg).network;
                } catch (const TrainingError& e) {
                    out.failure = e.what();
                }
                if (trained && options.checkpoint_dir) save_checkpoint(*trained, ckpt);
            }
            if (trained) {
                SweepOptions sweep_opts;
                sweep_opts.seed = seeds[i];
                sweep_opts.threads = 1;
                const SweepResult sweep = single_unit_sweep(*trained, options.layer_index, test_data, sweep_opts);
                out.test_accuracy = sweep.baseline.topk_accuracy(1);
                out.drops_pp = sweep.drops();
                const std::size_t units = arch[options.layer_index].out_shape.size();
                for (std::size_t u = 0; u < units; ++u) {
                    out.p_values.push_back(unit_change_pvalue(init, *trained, options.layer_index, u));
                }
                try {
                    out.pearson = pearson(out.p_values, out.drops_pp);
                    out.spearman = spearman(out.p_values, out.drops_pp);
                    out.ok = true;
                } catch (const StatsError& e) {
                    out.failure = e.what();
                }
            }
            if (options.on_seed_done) {
                const std::lock_guard lock(report_mutex);
                options.on_seed_done(out);
            }
        },
        resolve_threads(options.threads));
    return outcomes;
}

const LayerCurvePoint& LayerSweepResult::curve(std::size_t layer, double proportion) const
{
    for (const LayerCurvePoint& p : curves) {
        if (p.layer == layer && std::abs(p.proportion - proportion) < 1e-12) return p;
    }
    throw SpecError("no curve point for layer " + std::to_string(layer) + " at proportion " + format_real(proportion));
}

std::vector<LayerCurvePoint> summarize_layer_records(const std::vector<LayerGroupRecord>& records)
{
    std::map<std::pair<std::size_t, double>, std::vector<const LayerGroupRecord*>> groups;
    for (const LayerGroupRecord& r : records) groups[{r.layer, r.proportion}].push_back(&r);
    std::vector<LayerCurvePoint> curves;
    for (const auto& [key, members] : groups) {
        LayerCurvePoint p;
        p.layer = key.first;
        p.proportion = key.second;
        p.records = members.size();
        const double n = static_cast<double>(members.size());
        for (const LayerGroupRecord* r : members) {
            p.mean_drop_top1_pp += r->drop_top1_pp / n;
            p.mean_drop_top5_pp += r->drop_top5_pp / n;
        }
        double v1 = 0.0;
        double v5 = 0.0;
        for (const LayerGroupRecord* r : members) {
            v1 += (r->drop_top1_pp - p.mean_drop_top1_pp) * (r->drop_top1_pp - p.mean_drop_top1_pp);
            v5 += (r->drop_top5_pp - p.mean_drop_top5_pp) * (r->drop_top5_pp - p.mean_drop_top5_pp);
        }
        p.std_drop_top1_pp = std::sqrt(v1 / n);
        p.std_drop_top5_pp = std::sqrt(v5 / n);
        curves.push_back(p);
    }
    return curves;
}

LayerSweepResult layer_group_sweep(const Network& cnn, std::span<const double> proportions, const Samples& data,
                                   const SweepOptions& options)
{
    if (proportions.empty()) throw SpecError("no proportions given");
    for (const double p : proportions) group_size(1, p);  // range check

    LayerSweepResult result;
    result.baseline = evaluate(cnn, data);
    const double top1_before = result.baseline.topk_accuracy(1);
    const double top5_before = result.baseline.topk_accuracy(5);
    const std::size_t threads = resolve_threads(options.threads);

    for (std::size_t layer = 0; layer < cnn.layers.size(); ++layer) {
        if (cnn.layers[layer].spec.kind != LayerKind::conv2d) continue;
        const Layer& conv = cnn.layers[layer];
        const std::size_t n = conv.spec.unit_count();

        // Distances among nonzero filters only; all-zero filters have no direction.
        std::vector<std::size_t> live;
        for (std::size_t f = 0; f < n; ++f) {
            const auto w = conv.unit_weights(f);
            if (std::any_of(w.begin(), w.end(), [](float x) { return x != 0.0f; })) {
                live.push_back(f);
            } else {
                result.warnings.push_back("layer " + std::to_string(layer) + " filter " + std::to_string(f) +
                                          " is all zero; skipped as a reference");
            }
        }
        if (live.empty()) continue;
        FilterDistanceMatrix dist;
        dist.layer_index = layer;
        dist.filter_count = live.size();
        dist.distances.assign(live.size() * live.size(), 0.0);
        for (std::size_t i = 0; i < live.size(); ++i) {
            for (std::size_t j = i + 1; j < live.size(); ++j) {
                const double d = filter_distance(conv.unit_weights(live[i]), conv.unit_weights(live[j]));
                dist.distances[i * live.size() + j] = d;
                dist.distances[j * live.size() + i] = d;
            }
        }

        std::vector<LayerGroupRecord> pending;
        for (const double p : proportions) {
            std::size_t k = group_size(n, p);
            if (k > live.size()) {
                result.warnings.push_back("layer " + std::to_string(layer) + " proportion " + format_real(p) +
                                          ": group clamped to " + std::to_string(live.size()) + " nonzero filters");
                k = live.size();
            }
            for (std::size_t r = 0; r < live.size(); ++r) {
                std::vector<std::size_t> group = nearest_filters(dist, r, k);
                for (std::size_t& g : group) g = live[g];
                std::sort(group.begin(), group.end());
                LayerGroupRecord rec;
                rec.layer = layer;
                rec.proportion = p;
                rec.reference = live[r];
                rec.targets = std::move(group);
                rec.key = record_key("layers", options.seed,
                                     std::to_string(layer) + "/" + format_real(p) + "/" + std::to_string(live[r]));
                if (options.skip && options.skip(rec.key)) continue;
                pending.push_back(std::move(rec));
            }
        }

        // Neighbouring references often share a group; evaluate each group once.
        std::map<std::vector<std::size_t>, std::size_t> slot;
        std::vector<std::vector<std::size_t>> unique;
        for (const LayerGroupRecord& rec : pending) {
            if (slot.emplace(rec.targets, unique.size()).second) unique.push_back(rec.targets);
        }
        std::vector<std::pair<double, double>> acc(unique.size());
        const CachedEvaluator eval(cnn, layer, data);
        parallel_for(
            unique.size(),
            [&](std::size_t i) {
                const EvalReport rep = eval.evaluate(ablate(cnn, AblationSpec(layer, AblationKind::filter, unique[i])));
                acc[i] = {rep.topk_accuracy(1), rep.topk_accuracy(5)};
            },
            threads);
        for (LayerGroupRecord& rec : pending) {
            const auto [t1, t5] = acc[slot.at(rec.targets)];
            rec.top1_before = top1_before;
            rec.top1_after = t1;
            rec.drop_top1_pp = (top1_before - t1) * 100.0;
            rec.top5_before = top5_before;
            rec.top5_after = t5;
            rec.drop_top5_pp = (top5_before - t5) * 100.0;
            result.records.push_back(std::move(rec));
        }
    }
    if (result.records.empty() && !options.skip) throw SpecError("network has no conv layer with nonzero filters");
    result.curves = summarize_layer_records(result.records);
    return result;
}

std::size_t most_damaging_layer(const LayerSweepResult& sweep, double proportion)
{
    const LayerCurvePoint* best = nullptr;
    for (const LayerCurvePoint& p : sweep.curves) {
        if (std::abs(p.proportion - proportion) > 1e-12) continue;
        if (best == nullptr || p.mean_drop_top1_pp > best->mean_drop_top1_pp) best = &p;
    }
    if (best == nullptr) throw SpecError("no layer was swept at proportion " + format_real(proportion));
    return best->layer;
}

std::vector<std::size_t> sample_group(std::size_t n, std::size_t k, std::uint64_t seed, std::size_t layer,
                                      std::size_t iteration)
{
    if (k == 0 || k > n) throw SpecError("cannot sample " + std::to_string(k) + " of " + std::to_string(n) + " filters");
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), std::size_t{0});
    std::vector<std::size_t> out;
    out.reserve(k);
    std::mt19937_64 rng(mix_seed(seed, layer, iteration));
    std::sample(all.begin(), all.end(), std::back_inserter(out), static_cast<std::ptrdiff_t>(k), rng);
    return out;
}

double expected_distinct_fraction(std::size_t n, std::size_t k, std::size_t iterations)
{
    if (n == 0 || k > n) throw SpecError("invalid group of " + std::to_string(k) + " out of " + std::to_string(n));
    return 1.0 - std::pow(1.0 - static_cast<double>(k) / static_cast<double>(n), static_cast<double>(iterations));
}

bool StopRule::should_stop(std::span<const double> top5_history) const
{
    const auto e = static_cast<int>(top5_history.size());
    if (e >= max_epochs) return true;
    if (e < min_epochs || e <= window) return false;
    const double gain = (top5_history[e - 1] - top5_history[e - 1 - window]) * 100.0;
    return gain < min_improvement_pp;
}

std::vector<RecoveryTrace> recovery_run(const Network& cnn, std::size_t layer_index, double proportion,
                                        std::size_t instances, int epochs, const Samples& train_data,
                                        const Samples& test_data, const RecoveryOptions& options)
{
    const std::size_t n = conv_layer(cnn, layer_index).spec.unit_count();
    const std::size_t k = group_size(n, proportion);
    if (epochs < 0) throw ConfigError("epochs must be nonnegative");
    const TopKAccuracy original = topk_accuracy(cnn, test_data);

    std::vector<RecoveryTrace> traces(instances);
    parallel_for(
        instances,
        [&](std::size_t i) {
            RecoveryTrace& t = traces[i];
            t.instance = i;
            t.ablated = sample_group(n, k, options.seed, layer_index, i);
            t.cumulative_distinct = t.ablated.size();
            t.cumulative_fraction = static_cast<double>(t.cumulative_distinct) / static_cast<double>(n);
            t.top1_original = original.top1;
            t.top5_original = original.top5;
            Network net = ablate(cnn, AblationSpec(layer_index, AblationKind::filter, t.ablated));
            const TopKAccuracy damaged = topk_accuracy(net, test_data);
            t.top1_ablated = damaged.top1;
            t.top5_ablated = damaged.top5;
            freeze_below(net, layer_index);
            TrainConfig cfg = options.train;
            cfg.seed = mix_seed(options.seed, layer_index, i);
            Trainer trainer(std::move(net), train_data, cfg, &test_data);
            for (int e = 0; e < epochs; ++e) {
                t.epochs.push_back(trainer.run_epoch());
                if (options.stop_early && options.stop_early(t.epochs.back())) break;
            }
            t.epochs_used = static_cast<int>(t.epochs.size());
        },
        resolve_threads(options.threads));
    return traces;
}

std::vector<RecoveryTrace> iterative_recovery(const Network& cnn, std::size_t layer_index, double proportion,
                                              std::size_t iteration_count, const Samples& train_data,
                                              const Samples& test_data, const RecoveryOptions& options,
                                              const StopRule& rule, Network* final_network)
{
    const std::size_t n = conv_layer(cnn, layer_index).spec.unit_count();
    const std::size_t k = group_size(n, proportion);
    if (rule.min_epochs < 1 || rule.max_epochs < rule.min_epochs || rule.window < 1) {
        throw ConfigError("invalid stop rule");
    }
    Network net = cnn;
    freeze_below(net, layer_index);
    std::set<std::size_t> seen;
    std::vector<RecoveryTrace> traces;
    for (std::size_t it = 0; it < iteration_count; ++it) {
        RecoveryTrace t;
        t.iteration = it;
        const TopKAccuracy original = topk_accuracy(net, test_data);
        t.top1_original = original.top1;
        t.top5_original = original.top5;
        t.ablated = sample_group(n, k, options.seed, layer_index, it);
        seen.insert(t.ablated.begin(), t.ablated.end());
        t.cumulative_distinct = seen.size();
        t.cumulative_fraction = static_cast<double>(seen.size()) / static_cast<double>(n);
        ablate_in_place(net, AblationSpec(layer_index, AblationKind::filter, t.ablated));
        const TopKAccuracy damaged = topk_accuracy(net, test_data);
        t.top1_ablated = damaged.top1;
        t.top5_ablated = damaged.top5;

        TrainConfig cfg = options.train;
        cfg.seed = mix_seed(options.seed, layer_index, it);
        Trainer trainer(std::move(net), train_data, cfg, &test_data);
        std::vector<double> top5;
        do {
            t.epochs.push_back(trainer.run_epoch());
            top5.push_back(*t.epochs.back().test_top5);
        } while (!rule.should_stop(top5));
        t.epochs_used = static_cast<int>(t.epochs.size());
        net = std::move(trainer).release();
        traces.push_back(std::move(t));
    }
    if (final_network != nullptr) {
        unfreeze(net);
        *final_network = std::move(net);
    }
    return traces;
}

void write_units_csv(const SweepResult& r, const std::string& timestamp, std::ostream& out, bool header)
{
    CsvWriter w(out);
    if (header) w.row(csv_schema("units").columns);
    for (const ExperimentRecord& e : r.records) {
        w.row({e.key, timestamp, std::to_string(e.seed), std::to_string(e.spec.layer_index()), to_string(e.spec.kind()),
               e.spec.targets_label(), format_real(e.top1_before), format_real(e.top1_after), format_real(e.drop_pp),
               format_real(e.top5_before), format_real(e.top5_after), format_real(e.drop_top5_pp),
               join_reals(e.class_deltas_pp)});
    }
}

void write_pairs_csv(const PairSweepResult& r, std::uint64_t seed, std::size_t layer, const std::string& timestamp,
                     std::ostream& out, bool header)
{
    CsvWriter w(out);
    if (header) w.row(csv_schema("pairs").columns);
    for (const PairRecord& p : r.pairs) {
        const ClassChange& c = p.accounting.overall;
        w.row({p.key, timestamp, std::to_string(seed), std::to_string(layer), std::to_string(p.unit_a),
               std::to_string(p.unit_b), format_real(p.drop_a_pp), format_real(p.drop_b_pp),
               format_real(p.pair_drop_pp), format_real(p.gap_pp), std::to_string(c.stayed_correct),
               std::to_string(c.newly_wrong), std::to_string(c.newly_correct), std::to_string(c.pair_only_wrong)});
    }
}

void write_correlation_csvs(const std::vector<SeedOutcome>& outcomes, const std::string& timestamp,
                            std::ostream& units_out, std::ostream& summary_out, bool header)
{
    CsvWriter units(units_out);
    CsvWriter summary(summary_out);
    if (header) {
        units.row(csv_schema("correlation_units").columns);
        summary.row(csv_schema("correlation_summary").columns);
    }
    const auto opt = [](const std::optional<double>& v) { return v ? format_real(*v) : std::string(); };
    for (const SeedOutcome& o : outcomes) {
        const std::string key = record_key("population", o.seed, "summary");
        for (std::size_t u = 0; u < o.p_values.size(); ++u) {
            units.row({record_key("population", o.seed, "unit/" + std::to_string(u)), timestamp, std::to_string(o.seed),
                       std::to_string(u), format_real(o.p_values[u]), format_real(o.drops_pp[u])});
        }
        const std::string status = o.ok ? "ok" : "failed: " + o.failure;
        summary.row({key, timestamp, std::to_string(o.seed), status,
                     o.p_values.empty() ? std::string() : format_real(o.test_accuracy), opt(o.pearson),
                     opt(o.spearman)});
    }
}

void write_layers_csv(const LayerSweepResult& r, std::uint64_t seed, const std::string& timestamp, std::ostream& out,
                      bool header)
{
    CsvWriter w(out);
    if (header) w.row(csv_schema("layers").columns);
    for (const LayerGroupRecord& g : r.records) {
        w.row({g.key, timestamp, std::to_string(seed), std::to_string(g.layer), format_real(g.proportion),
               std::to_string(g.reference), std::to_string(g.targets.size()), join(g.targets),
               format_real(g.top1_before), format_real(g.top1_after), format_real(g.drop_top1_pp),
               format_real(g.top5_before), format_real(g.top5_after), format_real(g.drop_top5_pp)});
    }
}

void write_layer_summary_csv(const std::vector<LayerCurvePoint>& curves, std::ostream& out)
{
    CsvWriter w(out);
    w.row(csv_schema("layer_summary").columns);
    for (const LayerCurvePoint& p : curves) {
        w.row({std::to_string(p.layer), format_real(p.proportion), std::to_string(p.records),
               format_real(p.mean_drop_top1_pp), format_real(p.std_drop_top1_pp), format_real(p.mean_drop_top5_pp),
               format_real(p.std_drop_top5_pp)});
    }
}

void write_recovery_csv(const std::vector<RecoveryTrace>& traces, std::uint64_t seed, std::size_t layer,
                        double proportion, const std::string& timestamp, std::ostream& out, bool header)
{
    CsvWriter w(out);
    if (header) w.row(csv_schema("recovery").columns);
    for (const RecoveryTrace& t : traces) {
        const std::string stem = std::to_string(layer) + "/" + format_real(proportion) + "/" +
                                 std::to_string(t.instance) + "/" + std::to_string(t.iteration) + "/";
        const auto emit = [&](const std::string& phase, int epoch, double top1, double top5) {
            w.row({record_key("recovery", seed, stem + phase + "/" + std::to_string(epoch)), timestamp,
                   std::to_string(seed), std::to_string(layer), format_real(proportion), std::to_string(t.instance),
                   std::to_string(t.iteration), phase, std::to_string(epoch), std::to_string(t.ablated.size()),
                   format_real(t.cumulative_fraction), format_real(top1), format_real(top5)});
        };
        emit("original", 0, t.top1_original, t.top5_original);
        emit("ablated", 0, t.top1_ablated, t.top5_ablated);
        for (const EpochStats& e : t.epochs) {
            emit("retrain", e.epoch, e.test_top1.value_or(0.0), e.test_top5.value_or(0.0));
        }
    }
}

void write_history_csv(const std::vector<EpochStats>& history, std::ostream& out)
{
    CsvWriter w(out);
    w.row(csv_schema("history").columns);
    const auto opt = [](const std::optional<double>& v) { return v ? format_real(*v) : std::string(); };
    for (const EpochStats& e : history) {
        w.row({std::to_string(e.epoch), format_real(e.train_loss), format_real(e.train_accuracy), opt(e.test_top1),
               opt(e.test_top5)});
    }
}

}  // namespace ablatron
