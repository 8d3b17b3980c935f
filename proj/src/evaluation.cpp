#include "ablatron/evaluation.hpp"

#include "ablatron/csv.hpp"
#include "ablatron/error.hpp"

#include <algorithm>
#include <ostream>
#include <string>

namespace ablatron {

std::size_t EvalReport::correct_count() const noexcept
{
    std::size_t total = 0;
    for (std::size_t c : per_class_correct) total += c;
    return total;
}

double EvalReport::topk_accuracy(std::size_t k) const
{
    const auto it = std::find(k_list.begin(), k_list.end(), k);
    if (it == k_list.end()) throw ReportError("top-" + std::to_string(k) + " was not evaluated");
    const auto& hits = topk_hits[static_cast<std::size_t>(it - k_list.begin())];
    std::size_t total = 0;
    for (std::uint8_t h : hits) total += h;
    return hits.empty() ? 0.0 : static_cast<double>(total) / static_cast<double>(hits.size());
}

EvalReport make_report(const Matrix& probs, std::span<const std::uint32_t> labels, std::size_t class_count,
                       std::vector<std::size_t> k_list)
{
    if (labels.empty()) throw DataError("cannot evaluate an empty dataset");
    if (probs.rows != labels.size() || probs.cols != class_count) {
        throw DataError("probability matrix does not match labels/classes");
    }
    EvalReport r;
    r.class_count = class_count;
    r.labels.assign(labels.begin(), labels.end());
    r.predictions.resize(labels.size());
    r.k_list = std::move(k_list);
    r.topk_hits.assign(r.k_list.size(), std::vector<std::uint8_t>(labels.size(), 0));
    r.per_class_counts.assign(class_count, 0);
    r.per_class_correct.assign(class_count, 0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const std::uint32_t y = labels[i];
        if (y >= class_count) {
            throw DataError("label " + std::to_string(y) + " of sample " + std::to_string(i) + " is outside the class range");
        }
        const auto row = probs.row(i);
        r.predictions[i] = static_cast<std::uint32_t>(argmax(row));
        for (std::size_t k = 0; k < r.k_list.size(); ++k) r.topk_hits[k][i] = in_top_k(row, y, r.k_list[k]) ? 1 : 0;
        ++r.per_class_counts[y];
        if (r.predictions[i] == y) ++r.per_class_correct[y];
    }
    r.per_class_accuracy.resize(class_count);
    for (std::size_t c = 0; c < class_count; ++c) {
        r.per_class_accuracy[c] = r.per_class_counts[c] == 0
                                      ? 0.0
                                      : static_cast<double>(r.per_class_correct[c]) / static_cast<double>(r.per_class_counts[c]);
    }
    r.overall_accuracy = static_cast<double>(r.correct_count()) / static_cast<double>(labels.size());
    return r;
}

EvalReport evaluate(const Network& net, const Samples& data, std::vector<std::size_t> k_list)
{
    if (data.size() == 0) throw DataError("cannot evaluate an empty dataset");
    data.validate();
    return make_report(forward(net, data.batch(0, data.size())), data.labels, net.output_size(), std::move(k_list));
}

const char* to_string(Transition t) noexcept
{
    switch (t) {
    case Transition::stayed_correct: return "black";
    case Transition::newly_wrong: return "red";
    case Transition::newly_correct: return "green";
    case Transition::stayed_wrong: return "stayed_wrong";
    case Transition::pair_only_wrong: return "blue";
    }
    return "?";
}

namespace {

void require_same_samples(const EvalReport& a, const EvalReport& b)
{
    if (a.size() != b.size()) {
        throw ReportError("reports cover " + std::to_string(a.size()) + " and " + std::to_string(b.size()) +
                          " samples");
    }
    if (a.labels != b.labels || a.class_count != b.class_count) {
        throw ReportError("reports were computed on different sample sequences");
    }
}

void add(ClassChange& c, Transition t)
{
    ++c.count;
    switch (t) {
    case Transition::stayed_correct: ++c.stayed_correct; break;
    case Transition::newly_wrong: ++c.newly_wrong; break;
    case Transition::newly_correct: ++c.newly_correct; break;
    case Transition::stayed_wrong: ++c.stayed_wrong; break;
    case Transition::pair_only_wrong: ++c.pair_only_wrong; break;
    }
}

void finish(ClassChange& c)
{
    if (c.count == 0) return;
    const double n = static_cast<double>(c.count);
    const double before = static_cast<double>(c.stayed_correct + c.newly_wrong + c.pair_only_wrong);
    const double after = static_cast<double>(c.stayed_correct + c.newly_correct);
    c.acc_before = before / n;
    c.acc_after = after / n;
    c.delta_pp = (static_cast<double>(c.newly_correct) - static_cast<double>(c.newly_wrong + c.pair_only_wrong)) / n *
                 100.0;
}

ChangeAccounting aggregate(const EvalReport& base, std::vector<Transition> transitions, bool pairwise)
{
    ChangeAccounting acc;
    acc.pairwise = pairwise;
    acc.classes.assign(base.class_count, ClassChange{});
    for (std::size_t i = 0; i < transitions.size(); ++i) {
        add(acc.classes[base.labels[i]], transitions[i]);
        add(acc.overall, transitions[i]);
    }
    for (ClassChange& c : acc.classes) finish(c);
    finish(acc.overall);
    acc.transitions = std::move(transitions);
    return acc;
}

}  // namespace

ChangeAccounting diff_reports(const EvalReport& before, const EvalReport& after)
{
    require_same_samples(before, after);
    std::vector<Transition> t(before.size());
    for (std::size_t i = 0; i < t.size(); ++i) {
        const bool b = before.correct(i);
        const bool a = after.correct(i);
        t[i] = b ? (a ? Transition::stayed_correct : Transition::newly_wrong)
                 : (a ? Transition::newly_correct : Transition::stayed_wrong);
    }
    return aggregate(before, std::move(t), false);
}

ChangeAccounting pairwise_diff(const EvalReport& base, const EvalReport& single_a, const EvalReport& single_b,
                               const EvalReport& pair)
{
    require_same_samples(base, single_a);
    require_same_samples(base, single_b);
    require_same_samples(base, pair);
    std::vector<Transition> t(base.size());
    for (std::size_t i = 0; i < t.size(); ++i) {
        const bool p = pair.correct(i);
        if (!base.correct(i)) {
            t[i] = p ? Transition::newly_correct : Transition::stayed_wrong;
        } else if (p) {
            t[i] = Transition::stayed_correct;
        } else {
            t[i] = single_a.correct(i) && single_b.correct(i) ? Transition::pair_only_wrong : Transition::newly_wrong;
        }
    }
    return aggregate(base, std::move(t), true);
}

namespace {

void write_change_row(CsvWriter& w, const std::string& label, const ClassChange& c)
{
    w.row({label, std::to_string(c.count), format_real(c.acc_before), format_real(c.acc_after), format_real(c.delta_pp),
           std::to_string(c.stayed_correct), std::to_string(c.newly_wrong), std::to_string(c.newly_correct),
           std::to_string(c.pair_only_wrong)});
}

}  // namespace

void write_accounting_csv(const ChangeAccounting& acc, std::ostream& out)
{
    CsvWriter w(out);
    w.row(accounting_columns());
    for (std::size_t c = 0; c < acc.classes.size(); ++c) write_change_row(w, std::to_string(c), acc.classes[c]);
    write_change_row(w, "overall", acc.overall);
}

void write_transitions_csv(const ChangeAccounting& acc, std::span<const std::uint32_t> labels, std::ostream& out)
{
    if (labels.size() != acc.transitions.size()) throw ReportError("label count does not match the accounting");
    CsvWriter w(out);
    w.row(transition_columns());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        w.row({std::to_string(i), std::to_string(labels[i]), to_string(acc.transitions[i])});
    }
}

}  // namespace ablatron
