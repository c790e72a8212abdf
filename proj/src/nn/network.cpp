#include "qhd/nn/network.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "qhd/detail/seed.hpp"

namespace qhd::nn {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};

std::vector<std::size_t> batch_shape(std::size_t n, const Shape3& s) { return {n, s.channels, s.height, s.width}; }

}  // namespace

Network::Network(Shape3 input, std::vector<LayerSpec> layers) : input_(input), layers_(std::move(layers)) {
    if (input_.size() == 0) throw ShapeError(0, "empty input shape");
    if (layers_.empty()) throw std::invalid_argument("network needs at least one layer");
    Shape3 current = input_;
    shapes_.reserve(layers_.size());
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        try {
            current = nn::output_shape(layers_[i], current);
        } catch (const std::invalid_argument& e) {
            throw ShapeError(i, describe(layers_[i]) + ": " + e.what());
        }
        shapes_.push_back(current);
    }
    const auto shapes = parameter_shapes();
    params_.resize(layers_.size());
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        for (const auto& shape : shapes[i]) params_[i].emplace_back(shape);
    }
}

std::vector<std::vector<std::vector<std::size_t>>> Network::parameter_shapes() const {
    std::vector<std::vector<std::vector<std::size_t>>> out(layers_.size());
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const Shape3& in = i == 0 ? input_ : shapes_[i - 1];
        std::visit(overloaded{
                       [&](const Conv2d& c) {
                           out[i] = {{c.out_maps, in.channels, c.kernel.height, c.kernel.width}, {c.out_maps}};
                       },
                       [&](const TransposeConv2d& c) {
                           out[i] = {{in.channels, c.out_maps, c.kernel.height, c.kernel.width}, {c.out_maps}};
                       },
                       [&](const Dense& d) { out[i] = {{d.units, in.size()}, {d.units}}; },
                       [](const auto&) {},
                   },
                   layers_[i]);
    }
    return out;
}

std::size_t Network::parameter_count() const noexcept {
    std::size_t n = 0;
    for (const auto& layer : params_) {
        for (const auto& a : layer) n += a.size();
    }
    return n;
}

void Network::initialize(std::uint64_t seed, InitScheme scheme) {
    ++version_;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        if (params_[i].empty()) continue;
        const Shape3& in = i == 0 ? input_ : shapes_[i - 1];
        double fan_in = 1.0, fan_out = 1.0;
        std::visit(overloaded{
                       [&](const Conv2d& c) {
                           const auto taps = static_cast<double>(c.kernel.height * c.kernel.width);
                           fan_in = static_cast<double>(in.channels) * taps;
                           fan_out = static_cast<double>(c.out_maps) * taps;
                       },
                       [&](const TransposeConv2d& c) {
                           const auto taps = static_cast<double>(c.kernel.height * c.kernel.width);
                           if (scheme == InitScheme::he_normal) {
                               // each output cell sees about 1/stride^2 of the kernel taps
                               fan_in = static_cast<double>(in.channels) * taps / static_cast<double>(c.stride * c.stride);
                           } else {
                               // kernel-shape convention: (kh, kw, out, in)
                               fan_in = static_cast<double>(c.out_maps) * taps;
                               fan_out = static_cast<double>(in.channels) * taps;
                           }
                       },
                       [&](const Dense& d) {
                           fan_in = static_cast<double>(in.size());
                           fan_out = static_cast<double>(d.units);
                       },
                       [](const auto&) {},
                   },
                   layers_[i]);
        std::mt19937_64 rng(detail::derive_seed(seed, {static_cast<std::uint64_t>(i)}));
        if (scheme == InitScheme::he_normal) {
            std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
            for (double& w : params_[i][0].values()) w = dist(rng);
        } else {
            const double limit = std::sqrt(6.0 / (fan_in + fan_out));
            std::uniform_real_distribution<double> dist(-limit, limit);
            for (double& w : params_[i][0].values()) w = dist(rng);
        }
        params_[i][1].fill(0.0);
    }
}

Activations Network::forward(const ArrayND& batch, Mode mode, std::mt19937_64* rng) const {
    return run(batch, mode, rng, nullptr);
}

Activations Network::forward_with_masks(const ArrayND& batch, const std::vector<ArrayND>& masks) const {
    if (masks.size() != layers_.size()) throw std::invalid_argument("forward_with_masks: one mask slot per layer");
    return run(batch, Mode::training, nullptr, &masks);
}

Activations Network::run(const ArrayND& batch, Mode mode, std::mt19937_64* rng,
                         const std::vector<ArrayND>* masks) const {
    if (batch.rank() != 4 || batch.extent(0) == 0 ||
        Shape3{batch.extent(1), batch.extent(2), batch.extent(3)} != input_) {
        throw ShapeError(0, "batch does not match input shape " + to_string(input_));
    }
    const auto n = batch.extent(0);
    Activations acts;
    acts.input = batch;
    acts.mode = mode;
    acts.owner = this;
    acts.version = version_;
    acts.outputs.reserve(layers_.size());
    acts.dropout_masks.resize(layers_.size());
    acts.argmax.resize(layers_.size());

    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const ArrayND& x = i == 0 ? acts.input : acts.outputs[i - 1];
        ArrayND y = std::visit(
            overloaded{
                [&](const Conv2d& c) { return kernels::conv2d_forward(x, params_[i][0], params_[i][1], c.stride); },
                [&](const TransposeConv2d& c) {
                    return kernels::conv_transpose2d_forward(x, params_[i][0], params_[i][1], c.stride);
                },
                [&](const MaxPool2d& p) {
                    auto r = kernels::maxpool2d_forward(x, p);
                    acts.argmax[i] = std::move(r.argmax);
                    return std::move(r.output);
                },
                [&](const Dense&) { return kernels::dense_forward(x, params_[i][0], params_[i][1]); },
                [&](const Dropout& d) {
                    if (mode == Mode::inference || d.drop_rate == 0.0) return x;
                    ArrayND mask(x.shape());
                    if (masks) {
                        if ((*masks)[i].shape() != x.shape()) throw ShapeError(i, "frozen dropout mask has wrong shape");
                        mask = (*masks)[i];
                    } else {
                        if (!rng) throw std::invalid_argument("training-mode dropout needs a random stream");
                        // one raw 64-bit draw per unit: drop when below drop_rate * 2^64
                        const auto threshold = static_cast<std::uint64_t>(std::min(std::ldexp(d.drop_rate, 64), 0x1.fffffffffffffp63));
                        const double scale = 1.0 / (1.0 - d.drop_rate);
                        for (double& m : mask.values()) m = (*rng)() < threshold ? 0.0 : scale;
                    }
                    ArrayND out = x;
                    for (std::size_t j = 0; j < out.size(); ++j) out[j] *= mask[j];
                    acts.dropout_masks[i] = std::move(mask);
                    return out;
                },
                [&](const Relu&) {
                    ArrayND out = x;
                    for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
                    return out;
                },
                [&](const Linear&) { return x; },
                [&](const Shift& s) {
                    ArrayND out = x;
                    for (double& v : out.values()) v += s.offset;
                    return out;
                },
            },
            layers_[i]);
        y.reshape(batch_shape(n, shapes_[i]));
        acts.outputs.push_back(std::move(y));
    }
    return acts;
}

Gradients Network::backward(const Activations& acts, const ArrayND& upstream) const {
    if (acts.owner != this || acts.version != version_ || acts.mode != Mode::training) {
        throw std::logic_error("backward: stale activations (need a training-mode forward with current parameters)");
    }
    if (upstream.shape() != acts.output().shape()) {
        throw ShapeError(layers_.size() - 1, "upstream gradient shape does not match the network output");
    }
    Gradients g;
    g.params.resize(layers_.size());
    ArrayND grad = upstream;
    for (std::size_t step = layers_.size(); step-- > 0;) {
        const std::size_t i = step;
        const ArrayND& x = i == 0 ? acts.input : acts.outputs[i - 1];
        ArrayND dx;
        std::visit(overloaded{
                       [&](const Conv2d& c) {
                           g.params[i].resize(2);
                           kernels::conv2d_backward(x, params_[i][0], grad, c.stride, g.params[i][0], g.params[i][1], dx);
                       },
                       [&](const TransposeConv2d& c) {
                           g.params[i].resize(2);
                           kernels::conv_transpose2d_backward(x, params_[i][0], grad, c.stride, g.params[i][0],
                                                              g.params[i][1], dx);
                       },
                       [&](const MaxPool2d&) { dx = kernels::maxpool2d_backward(acts.argmax[i], x.shape(), grad); },
                       [&](const Dense&) {
                           g.params[i].resize(2);
                           kernels::dense_backward(x, params_[i][0], grad, g.params[i][0], g.params[i][1], dx);
                       },
                       [&](const Dropout&) {
                           dx = grad;
                           const auto& mask = acts.dropout_masks[i];
                           if (!mask.empty()) {
                               for (std::size_t j = 0; j < dx.size(); ++j) dx[j] *= mask[j];
                           }
                       },
                       [&](const Relu&) {
                           dx = grad;
                           const auto& y = acts.outputs[i];
                           for (std::size_t j = 0; j < dx.size(); ++j) {
                               if (!(y[j] > 0.0)) dx[j] = 0.0;
                           }
                       },
                       [&](const Linear&) { dx = grad; },
                       [&](const Shift&) { dx = grad; },
                   },
                   layers_[i]);
        dx.reshape(x.shape());
        grad = std::move(dx);
    }
    g.input = std::move(grad);
    return g;
}

ArrayND make_batch(const Shape3& shape, const std::vector<const std::vector<double>*>& samples) {
    ArrayND batch(batch_shape(samples.size(), shape));
    const auto per = shape.size();
    for (std::size_t s = 0; s < samples.size(); ++s) {
        if (samples[s]->size() != per) throw ShapeError(0, "sample size does not match input shape");
        std::memcpy(batch.data() + s * per, samples[s]->data(), per * sizeof(double));
    }
    return batch;
}

}  // namespace qhd::nn
