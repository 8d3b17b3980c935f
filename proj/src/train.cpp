#include "ablatron/train.hpp"

#include "ablatron/error.hpp"
#include "ablatron/kernels.hpp"
#include "layer_ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace ablatron {

void TrainConfig::validate() const
{
    if (epochs < 0) throw ConfigError("epochs must be nonnegative");
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (!(learning_rate > 0.0f) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be positive");
}

struct Trainer::Workspace {
    std::vector<std::vector<float>> acts;  // acts[l] enters layer l; acts.back() holds logits
    std::vector<detail::LayerScratch> scratch;
    std::vector<float> probs;
    std::vector<float> grad;
    std::vector<float> grad_in;
    std::vector<float> staged;   // transposed dz or gathered dY
    std::vector<float> col_t;
    std::vector<float> dcol;
    std::vector<float> dweights;
    std::vector<float> dbias;
    std::vector<double> bias_acc;
};

Trainer::Trainer(Network net, const Samples& data, TrainConfig cfg, const Samples* monitor)
    : net_(std::move(net)), data_(data), monitor_(monitor), cfg_(cfg), rng_(cfg.seed), ws_(std::make_unique<Workspace>())
{
    cfg_.validate();
    validate_architecture(net_.architecture());
    if (net_.layers.back().spec.activation != Activation::softmax) {
        throw ConfigError("training requires a softmax output layer");
    }
    if (data_.size() == 0) throw DataError("training set is empty");
    data_.validate();
    if (data_.dim() != net_.input_shape().size()) throw ConfigError("training samples do not match the network input");
    if (data_.class_count != net_.output_size()) throw ConfigError("class count does not match the network output");
    order_.resize(data_.size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    ws_->acts.resize(net_.layers.size() + 1);
    ws_->scratch.resize(net_.layers.size());
}

Trainer::~Trainer() = default;
Trainer::Trainer(Trainer&&) noexcept = default;

void Trainer::step(std::span<const std::size_t> indices, double& loss_sum, std::size_t& correct)
{
    Workspace& ws = *ws_;
    const std::size_t n = indices.size();
    const std::size_t depth = net_.layers.size();
    const std::size_t classes = net_.output_size();

    const std::size_t dim = data_.dim();
    ws.acts[0].resize(n * dim);
    for (std::size_t r = 0; r < n; ++r) {
        const auto src = data_.sample(indices[r]);
        std::copy(src.begin(), src.end(), ws.acts[0].begin() + static_cast<std::ptrdiff_t>(r * dim));
    }
    for (std::size_t l = 0; l < depth; ++l) {
        const Layer& layer = net_.layers[l];
        const std::size_t width = layer.spec.out_shape.size();
        ws.acts[l + 1].resize(n * width);
        detail::layer_forward(layer, ws.acts[l].data(), n, ws.acts[l + 1].data(), ws.scratch[l]);
        if (l + 1 < depth) detail::apply_activation(layer.spec.activation, ws.acts[l + 1].data(), n, width);
    }

    const std::vector<float>& logits = ws.acts[depth];
    ws.probs = logits;
    detail::softmax_rows(ws.probs.data(), n, classes);
    ws.grad.resize(n * classes);
    const float scale = 1.0f / static_cast<float>(n);
    for (std::size_t r = 0; r < n; ++r) {
        const std::size_t label = data_.labels[indices[r]];
        const float* z = logits.data() + r * classes;
        const float top = *std::max_element(z, z + classes);
        double total = 0.0;
        for (std::size_t c = 0; c < classes; ++c) total += std::exp(static_cast<double>(z[c]) - top);
        loss_sum += std::log(total) + top - static_cast<double>(z[label]);
        const std::span<const float> p(ws.probs.data() + r * classes, classes);
        if (argmax(p) == label) ++correct;
        for (std::size_t c = 0; c < classes; ++c) {
            ws.grad[r * classes + c] = (p[c] - (c == label ? 1.0f : 0.0f)) * scale;
        }
    }

    std::size_t lowest = depth;
    for (std::size_t l = 0; l < depth; ++l) {
        if (net_.layers[l].spec.has_weights() && !net_.layers[l].frozen) {
            lowest = l;
            break;
        }
    }
    const float step_size = -cfg_.learning_rate;

    for (std::size_t l = depth; l-- > lowest;) {
        Layer& layer = net_.layers[l];
        const LayerSpec& spec = layer.spec;
        const std::size_t in_size = spec.in_shape.size();
        const std::size_t out_size = spec.out_shape.size();
        if (l + 1 < depth && spec.activation == Activation::relu) {
            const std::vector<float>& out = ws.acts[l + 1];
            for (std::size_t i = 0; i < n * out_size; ++i) {
                if (!(out[i] > 0.0f)) ws.grad[i] = 0.0f;
            }
        }
        const bool need_input_grad = l > lowest;
        const bool update = spec.has_weights() && !layer.frozen;
        if (need_input_grad) ws.grad_in.assign(n * in_size, 0.0f);

        switch (spec.kind) {
        case LayerKind::dense: {
            const std::size_t units = out_size;
            if (update) {
                ws.staged.resize(units * n);
                detail::transpose(ws.grad.data(), n, units, ws.staged.data());
                ws.dweights.resize(layer.weights.size());
                kernels::gemm(units, in_size, n, ws.staged.data(), n, ws.acts[l].data(), in_size,
                              ws.dweights.data(), in_size, false);
            }
            if (need_input_grad) {
                kernels::gemm(n, in_size, units, ws.grad.data(), units, layer.weights.data(), in_size,
                              ws.grad_in.data(), in_size, false);
            }
            if (update && spec.has_bias) {
                ws.bias_acc.assign(units, 0.0);
                for (std::size_t r = 0; r < n; ++r) {
                    for (std::size_t u = 0; u < units; ++u) ws.bias_acc[u] += ws.grad[r * units + u];
                }
            }
            break;
        }
        case LayerKind::conv2d: {
            const std::size_t filters = spec.filter_count;
            const std::size_t plane = std::size_t{spec.out_shape.h} * spec.out_shape.w;
            const std::size_t width = n * plane;
            const std::size_t fan = spec.fan_in();
            ws.staged.resize(filters * width);
            for (std::size_t s = 0; s < n; ++s) {
                for (std::size_t f = 0; f < filters; ++f) {
                    const float* src = ws.grad.data() + (s * filters + f) * plane;
                    std::copy(src, src + plane, ws.staged.data() + f * width + s * plane);
                }
            }
            if (update) {
                const std::vector<float>& col = ws.scratch[l].col;
                ws.col_t.resize(width * fan);
                detail::transpose(col.data(), fan, width, ws.col_t.data());
                ws.dweights.resize(layer.weights.size());
                kernels::gemm(filters, fan, width, ws.staged.data(), width, ws.col_t.data(), fan,
                              ws.dweights.data(), fan, false);
                if (spec.has_bias) {
                    ws.bias_acc.assign(filters, 0.0);
                    for (std::size_t f = 0; f < filters; ++f) {
                        const float* row = ws.staged.data() + f * width;
                        double acc = 0.0;
                        for (std::size_t i = 0; i < width; ++i) acc += row[i];
                        ws.bias_acc[f] = acc;
                    }
                }
            }
            if (need_input_grad) {
                std::vector<float>& wt = ws.scratch[l].transposed;
                wt.resize(fan * filters);
                detail::transpose(layer.weights.data(), filters, fan, wt.data());
                ws.dcol.resize(fan * width);
                kernels::gemm(fan, width, filters, wt.data(), filters, ws.staged.data(), width, ws.dcol.data(),
                              width, false);
                detail::col2im_add(spec, ws.dcol.data(), n, ws.grad_in.data());
            }
            break;
        }
        case LayerKind::maxpool:
            if (need_input_grad) {
                const std::vector<std::uint32_t>& arg = ws.scratch[l].argmax;
                for (std::size_t s = 0; s < n; ++s) {
                    for (std::size_t o = 0; o < out_size; ++o) {
                        ws.grad_in[s * in_size + arg[s * out_size + o]] += ws.grad[s * out_size + o];
                    }
                }
            }
            break;
        case LayerKind::flatten:
            if (need_input_grad) ws.grad_in = ws.grad;
            break;
        }

        if (update) {
            kernels::axpy(layer.weights.size(), step_size, ws.dweights.data(), layer.weights.data());
            if (spec.has_bias) {
                ws.dbias.resize(layer.bias.size());
                for (std::size_t u = 0; u < layer.bias.size(); ++u) ws.dbias[u] = static_cast<float>(ws.bias_acc[u]);
                kernels::axpy(layer.bias.size(), step_size, ws.dbias.data(), layer.bias.data());
            }
        }
        if (need_input_grad) std::swap(ws.grad, ws.grad_in);
    }
}

EpochStats Trainer::run_epoch()
{
    ++epoch_;
    if (cfg_.shuffle) std::shuffle(order_.begin(), order_.end(), rng_);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t begin = 0; begin < order_.size(); begin += cfg_.batch_size) {
        const std::size_t end = std::min(order_.size(), begin + cfg_.batch_size);
        const double before = loss_sum;
        step(std::span<const std::size_t>(order_.data() + begin, end - begin), loss_sum, correct);
        if (!std::isfinite(loss_sum - before)) throw TrainingError(epoch_, "non-finite loss (training diverged)");
    }
    EpochStats stats;
    stats.epoch = epoch_;
    stats.train_loss = loss_sum / static_cast<double>(order_.size());
    stats.train_accuracy = static_cast<double>(correct) / static_cast<double>(order_.size());
    if (monitor_ != nullptr) {
        const TopKAccuracy acc = topk_accuracy(net_, *monitor_);
        stats.test_top1 = acc.top1;
        stats.test_top5 = acc.top5;
    }
    return stats;
}

TrainResult train(Network net, const Samples& data, const TrainConfig& cfg, const Samples* monitor)
{
    cfg.validate();
    if (cfg.epochs == 0) return {std::move(net), {}};
    Trainer trainer(std::move(net), data, cfg, monitor);
    std::vector<EpochStats> history;
    for (int e = 0; e < cfg.epochs; ++e) history.push_back(trainer.run_epoch());
    return {std::move(trainer).release(), std::move(history)};
}

TopKAccuracy topk_accuracy(const Network& net, const Samples& data)
{
    if (data.size() == 0) throw DataError("evaluation set is empty");
    const Matrix probs = forward(net, data.batch(0, data.size()));
    std::size_t top1 = 0;
    std::size_t top5 = 0;
    for (std::size_t r = 0; r < data.size(); ++r) {
        if (in_top_k(probs.row(r), data.labels[r], 1)) ++top1;
        if (in_top_k(probs.row(r), data.labels[r], 5)) ++top5;
    }
    const double n = static_cast<double>(data.size());
    return {static_cast<double>(top1) / n, static_cast<double>(top5) / n};
}

}  // namespace ablatron
