#include "ablatron/error.hpp"
#include "ablatron/train.hpp"

#include "helpers.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace ablatron;

namespace {

// Independent double-precision forward pass and mean cross-entropy for the
// small layer types used in the gradient checks.
struct Params {
    std::vector<std::vector<double>> w, b;
};

Params params_of(const Network& net)
{
    Params p;
    for (const Layer& l : net.layers) {
        p.w.emplace_back(l.weights.begin(), l.weights.end());
        p.b.emplace_back(l.bias.begin(), l.bias.end());
    }
    return p;
}

std::vector<double> layer_out(const LayerSpec& s, const std::vector<double>& w, const std::vector<double>& b,
                              const std::vector<double>& x)
{
    std::vector<double> y(s.out_shape.size(), 0.0);
    switch (s.kind) {
    case LayerKind::dense:
        for (std::size_t o = 0; o < y.size(); ++o) {
            double acc = b.empty() ? 0.0 : b[o];
            for (std::size_t i = 0; i < x.size(); ++i) acc += w[o * x.size() + i] * x[i];
            y[o] = acc;
        }
        break;
    case LayerKind::conv2d:
        for (std::uint32_t f = 0; f < s.filter_count; ++f) {
            for (std::uint32_t oy = 0; oy < s.out_shape.h; ++oy) {
                for (std::uint32_t ox = 0; ox < s.out_shape.w; ++ox) {
                    double acc = b.empty() ? 0.0 : b[f];
                    for (std::uint32_t c = 0; c < s.in_shape.c; ++c) {
                        for (std::uint32_t ky = 0; ky < s.kernel_height; ++ky) {
                            for (std::uint32_t kx = 0; kx < s.kernel_width; ++kx) {
                                const std::size_t iy = oy * s.stride + ky, ix = ox * s.stride + kx;
                                acc += w[((f * s.in_shape.c + c) * s.kernel_height + ky) * s.kernel_width + kx] *
                                       x[(c * s.in_shape.h + iy) * s.in_shape.w + ix];
                            }
                        }
                    }
                    y[(f * s.out_shape.h + oy) * s.out_shape.w + ox] = acc;
                }
            }
        }
        break;
    case LayerKind::maxpool:
        for (std::uint32_t c = 0; c < s.out_shape.c; ++c) {
            for (std::uint32_t oy = 0; oy < s.out_shape.h; ++oy) {
                for (std::uint32_t ox = 0; ox < s.out_shape.w; ++ox) {
                    double m = -1e300;
                    for (std::uint32_t ky = 0; ky < s.kernel_height; ++ky) {
                        for (std::uint32_t kx = 0; kx < s.kernel_width; ++kx) {
                            m = std::max(m, x[(c * s.in_shape.h + oy * s.stride + ky) * s.in_shape.w +
                                              ox * s.stride + kx]);
                        }
                    }
                    y[(c * s.out_shape.h + oy) * s.out_shape.w + ox] = m;
                }
            }
        }
        break;
    case LayerKind::flatten:
        y = x;
        break;
    }
    return y;
}

double mean_loss(const Network& net, const Params& p, const Samples& data)
{
    double total = 0.0;
    for (std::size_t n = 0; n < data.size(); ++n) {
        const auto s = data.sample(n);
        std::vector<double> x(s.begin(), s.end());
        for (std::size_t l = 0; l < net.layers.size(); ++l) {
            x = layer_out(net.layers[l].spec, p.w[l], p.b[l], x);
            if (net.layers[l].spec.activation == Activation::relu) {
                for (double& v : x) v = std::max(v, 0.0);
            }
        }
        const double top = *std::max_element(x.begin(), x.end());
        double z = 0.0;
        for (double v : x) z += std::exp(v - top);
        total += std::log(z) + top - x[data.labels[n]];
    }
    return total / double(data.size());
}

// One full-batch SGD step with a power-of-two learning rate recovers the
// analytic gradient as (w_before - w_after) / lr without extra rounding.
void check_gradients(const Network& net, const Samples& data)
{
    constexpr float lr = 1024.0f;
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.batch_size = data.size();
    cfg.learning_rate = lr;
    cfg.shuffle = false;
    const Network stepped = train(net, data, cfg).network;

    const Params base = params_of(net);
    const double h = 1e-4;
    std::size_t checked = 0;
    double worst = 0.0;
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        for (int which = 0; which < 2; ++which) {
            const auto& before = which == 0 ? net.layers[l].weights : net.layers[l].bias;
            const auto& after = which == 0 ? stepped.layers[l].weights : stepped.layers[l].bias;
            for (std::size_t i = 0; i < before.size(); ++i) {
                const double analytic = (double(before[i]) - double(after[i])) / lr;
                Params plus = base, minus = base;
                (which == 0 ? plus.w : plus.b)[l][i] += h;
                (which == 0 ? minus.w : minus.b)[l][i] -= h;
                const double numeric = (mean_loss(net, plus, data) - mean_loss(net, minus, data)) / (2 * h);
                const double scale = std::max(std::abs(analytic), std::abs(numeric));
                if (scale < 1e-7) continue;  // both vanish
                const double rel = std::abs(analytic - numeric) / scale;
                worst = std::max(worst, rel);
                CAPTURE(l);
                CAPTURE(which);
                CAPTURE(i);
                CAPTURE(analytic);
                CAPTURE(numeric);
                CHECK(rel <= 1e-4);
                ++checked;
            }
        }
    }
    MESSAGE("checked " << checked << " parameters, worst relative error " << worst);
    CHECK(checked > 10);
}

std::vector<LayerSpec> small_mlp(bool bias)
{
    const std::uint32_t w[] = {4, 3, 2};
    return mlp_architecture(w, bias);
}

}  // namespace

TEST_SUITE("train") {

TEST_CASE("dense gradients match central differences")
{
    for (const bool bias : {false, true}) {
        Network net = init_network(small_mlp(bias), 21);
        for (auto& l : net.layers) {
            for (std::size_t i = 0; i < l.bias.size(); ++i) l.bias[i] = 0.05f * float(i + 1);
        }
        check_gradients(net, testing::blobs(6, {4, 1, 1}, 2, 22));
    }
}

TEST_CASE("conv and maxpool gradients match central differences")
{
    std::vector<LayerSpec> arch;
    arch.push_back(LayerSpec::conv2d({2, 6, 6}, 3, 3, Activation::relu, true));
    arch.push_back(LayerSpec::maxpool(arch.back().out_shape, 2, 2));
    arch.push_back(LayerSpec::flatten(arch.back().out_shape));
    arch.push_back(LayerSpec::dense(static_cast<std::uint32_t>(arch.back().out_shape.size()), 3, Activation::softmax, true));
    Network net = init_network(arch, 31);
    for (std::size_t f = 0; f < 3; ++f) net.layers[0].bias[f] = 0.1f;
    check_gradients(net, testing::blobs(5, {2, 6, 6}, 3, 32));
}

TEST_CASE("stacked conv gradients match central differences")
{
    std::vector<LayerSpec> arch;
    arch.push_back(LayerSpec::conv2d({1, 7, 7}, 2, 3, Activation::relu, true));
    arch.push_back(LayerSpec::conv2d(arch.back().out_shape, 3, 2, Activation::relu, true, 2));
    arch.push_back(LayerSpec::flatten(arch.back().out_shape));
    arch.push_back(LayerSpec::dense(static_cast<std::uint32_t>(arch.back().out_shape.size()), 2, Activation::softmax, false));
    Network net = init_network(arch, 41);
    for (auto& b : net.layers[0].bias) b = 0.2f;
    for (auto& b : net.layers[1].bias) b = 0.1f;
    check_gradients(net, testing::blobs(4, {1, 7, 7}, 2, 42));
}

TEST_CASE("zero epochs return the input network")
{
    const Network net = init_network(small_mlp(false), 1);
    TrainConfig cfg;
    cfg.epochs = 0;
    const TrainResult r = train(net, testing::blobs(20, {4, 1, 1}, 2, 1), cfg);
    CHECK(bit_identical(r.network, net));
    CHECK(r.history.empty());
}

TEST_CASE("fully frozen network is untouched but history is reported")
{
    Network net = init_network(small_mlp(true), 2);
    for (Layer& l : net.layers) l.frozen = true;
    TrainConfig cfg;
    cfg.epochs = 5;
    const Samples data = testing::blobs(40, {4, 1, 1}, 2, 3);
    const TrainResult r = train(net, data, cfg, &data);
    CHECK(r.history.size() == 5);
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        CHECK(bit_identical(r.network.layers[l].weights, net.layers[l].weights));
        CHECK(bit_identical(r.network.layers[l].bias, net.layers[l].bias));
    }
    CHECK(r.history.back().test_top1.has_value());
}

TEST_CASE("frozen lower layers stay bit-identical while upper layers learn")
{
    Network net = init_network(desk_cnn_architecture(), 4);
    for (std::size_t l = 0; l < 4; ++l) net.layers[l].frozen = true;
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.batch_size = 16;
    const Samples data = testing::blobs(48, {1, 28, 28}, 10, 5);
    const Network out = train(net, data, cfg).network;
    for (std::size_t l = 0; l < 4; ++l) {
        CHECK(bit_identical(out.layers[l].weights, net.layers[l].weights));
        CHECK(bit_identical(out.layers[l].bias, net.layers[l].bias));
    }
    CHECK_FALSE(bit_identical(out.layers[4].weights, net.layers[4].weights));
    CHECK_FALSE(bit_identical(out.layers[6].weights, net.layers[6].weights));
}

TEST_CASE("training is deterministic")
{
    const Samples data = testing::blobs(200, {1, 28, 28}, 10, 6);
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 32;
    cfg.seed = 9;
    const Network init = init_network(desk_cnn_architecture(), 7);
    CHECK(bit_identical(train(init, data, cfg).network, train(init, data, cfg).network));
    TrainConfig other = cfg;
    other.seed = 10;
    CHECK_FALSE(bit_identical(train(init, data, cfg).network, train(init, data, other).network));
}

TEST_CASE("SGD learns separable blobs")
{
    const Samples data = testing::blobs(600, {16, 1, 1}, 4, 8);
    const std::uint32_t w[] = {16, 12, 4};
    TrainConfig cfg;
    cfg.epochs = 20;
    const TrainResult r = train(init_network(mlp_architecture(w), 1), data, cfg, &data);
    CHECK(r.history.back().train_loss < r.history.front().train_loss);
    CHECK(*r.history.back().test_top1 > 0.95);
    CHECK(topk_accuracy(r.network, data).top5 == 1.0);
}

TEST_CASE("zeroed unit receives no gradient")
{
    Network net = init_network(small_mlp(false), 12);
    std::fill(net.layers[0].unit_weights(1).begin(), net.layers[0].unit_weights(1).end(), 0.0f);
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 4;
    const Network out = train(net, testing::blobs(40, {4, 1, 1}, 2, 13), cfg).network;
    for (float w : out.layers[0].unit_weights(1)) CHECK(w == 0.0f);
}

TEST_CASE("divergence raises a training error naming the epoch")
{
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.learning_rate = 1e30f;
    const Samples data = testing::blobs(64, {4, 1, 1}, 2, 14);
    try {
        train(init_network(small_mlp(true), 1), data, cfg);
        FAIL("expected divergence");
    } catch (const TrainingError& e) {
        CHECK(e.epoch() >= 1);
        CHECK(std::string(e.what()).find("epoch") != std::string::npos);
    }
}

TEST_CASE("invalid configurations are rejected")
{
    const Samples data = testing::blobs(8, {4, 1, 1}, 2, 1);
    const Network net = init_network(small_mlp(false), 1);
    TrainConfig cfg;
    cfg.batch_size = 0;
    CHECK_THROWS_AS(train(net, data, cfg), ConfigError);
    cfg = {};
    cfg.learning_rate = -1.0f;
    CHECK_THROWS_AS(train(net, data, cfg), ConfigError);
    cfg = {};
    cfg.epochs = 1;
    CHECK_THROWS_AS(train(net, testing::blobs(8, {5, 1, 1}, 2, 1), cfg), ConfigError);
    CHECK_THROWS_AS(train(net, testing::blobs(8, {4, 1, 1}, 3, 1), cfg), ConfigError);
    Samples empty;
    empty.shape = {4, 1, 1};
    empty.class_count = 2;
    CHECK_THROWS_AS(train(net, empty, cfg), DataError);
}

}
