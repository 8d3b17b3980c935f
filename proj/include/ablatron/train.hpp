#pragma once

#include "ablatron/network.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <vector>

namespace ablatron {

/// Plain mini-batch SGD on softmax cross-entropy.
struct TrainConfig {
    int epochs = 100;
    std::size_t batch_size = 64;
    float learning_rate = 0.1f;
    std::uint64_t seed = 1;
    bool shuffle = true;

    void validate() const;
};

struct EpochStats {
    int epoch = 0;  // 1-based
    double train_loss = 0.0;
    double train_accuracy = 0.0;
    std::optional<double> test_top1;
    std::optional<double> test_top5;
};

/// Epoch-at-a-time training driver. Layers with `frozen` set are never
/// written; backpropagation stops at the lowest trainable layer.
class Trainer {
public:
    Trainer(Network net, const Samples& data, TrainConfig cfg, const Samples* monitor = nullptr);
    ~Trainer();
    Trainer(Trainer&&) noexcept;
    Trainer& operator=(Trainer&&) = delete;

    EpochStats run_epoch();

    const Network& network() const noexcept { return net_; }
    Network release() && { return std::move(net_); }
    int epochs_completed() const noexcept { return epoch_; }

private:
    struct Workspace;

    void step(std::span<const std::size_t> indices, double& loss_sum, std::size_t& correct);

    Network net_;
    const Samples& data_;
    const Samples* monitor_;
    TrainConfig cfg_;
    std::mt19937_64 rng_;
    std::vector<std::size_t> order_;
    int epoch_ = 0;
    std::unique_ptr<Workspace> ws_;
};

struct TrainResult {
    Network network;
    std::vector<EpochStats> history;
};

/// Runs cfg.epochs epochs (0 returns the network unchanged). When `monitor`
/// is given, its top-1/top-5 accuracy is recorded after every epoch.
TrainResult train(Network net, const Samples& data, const TrainConfig& cfg, const Samples* monitor = nullptr);

struct TopKAccuracy {
    double top1 = 0.0;
    double top5 = 0.0;
};

TopKAccuracy topk_accuracy(const Network& net, const Samples& data);

}  // namespace ablatron
