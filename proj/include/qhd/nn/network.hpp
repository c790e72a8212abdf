#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include "qhd/nn/array.hpp"
#include "qhd/nn/layers.hpp"

namespace qhd::nn {

/// Rejection raised for inconsistent shapes; carries the offending layer.
class ShapeError : public std::invalid_argument {
public:
    ShapeError(std::size_t layer, const std::string& what)
        : std::invalid_argument("layer " + std::to_string(layer) + ": " + what), layer_(layer) {}
    [[nodiscard]] std::size_t layer_index() const noexcept { return layer_; }

private:
    std::size_t layer_;
};

enum class Mode : std::uint8_t { training, inference };

/// Per-layer parameter arrays; parameterized layers hold {weight, bias},
/// the others hold nothing.
using ParamSet = std::vector<std::vector<ArrayND>>;

class Network;

/// Everything a backward pass needs from the matching forward pass.
struct Activations {
    ArrayND input;
    std::vector<ArrayND> outputs;
    std::vector<ArrayND> dropout_masks;          // empty entries for non-dropout layers
    std::vector<std::vector<std::size_t>> argmax;  // empty entries for non-pool layers
    Mode mode = Mode::inference;
    const Network* owner = nullptr;
    std::uint64_t version = 0;

    [[nodiscard]] const ArrayND& output() const { return outputs.empty() ? input : outputs.back(); }
};

struct Gradients {
    ParamSet params;
    ArrayND input;
};

/// he_normal: N(0, 2/fan_in). glorot_uniform: U(-l, l), l = sqrt(6/(fan_in + fan_out)).
enum class InitScheme : std::uint8_t { he_normal, glorot_uniform };

class Network {
public:
    /// Validates every layer against the per-sample input shape; throws
    /// ShapeError naming the first inconsistent layer.
    Network(Shape3 input, std::vector<LayerSpec> layers);

    /// Zero biases, random weights; deterministic in `seed`.
    void initialize(std::uint64_t seed, InitScheme scheme = InitScheme::he_normal);

    [[nodiscard]] const Shape3& input_shape() const noexcept { return input_; }
    [[nodiscard]] const Shape3& output_shape() const noexcept { return shapes_.back(); }
    /// shapes()[i] is the output geometry of layer i.
    [[nodiscard]] const std::vector<Shape3>& shapes() const noexcept { return shapes_; }
    [[nodiscard]] const std::vector<LayerSpec>& layers() const noexcept { return layers_; }

    [[nodiscard]] const ParamSet& params() const noexcept { return params_; }
    /// Mutable access invalidates outstanding activations.
    ParamSet& params_mut() noexcept {
        ++version_;
        return params_;
    }
    [[nodiscard]] std::size_t parameter_count() const noexcept;
    /// Expected parameter shapes, derived from the layer specs.
    [[nodiscard]] std::vector<std::vector<std::vector<std::size_t>>> parameter_shapes() const;

    /// `batch` is NCHW matching input_shape(). Training mode draws dropout
    /// masks from `rng`, which may be null only when no dropout layer is
    /// active. Inference never drops or rescales.
    [[nodiscard]] Activations forward(const ArrayND& batch, Mode mode, std::mt19937_64* rng = nullptr) const;

    /// Same as forward, but dropout masks come from `masks` (one entry per
    /// layer, empty for non-dropout layers). Used to freeze masks.
    [[nodiscard]] Activations forward_with_masks(const ArrayND& batch, const std::vector<ArrayND>& masks) const;

    [[nodiscard]] ArrayND predict(const ArrayND& batch) const { return forward(batch, Mode::inference).output(); }

    /// Requires activations from a training-mode forward of this network
    /// with unchanged parameters.
    [[nodiscard]] Gradients backward(const Activations& acts, const ArrayND& upstream) const;

    friend bool operator==(const Network& a, const Network& b) {
        return a.input_ == b.input_ && a.layers_ == b.layers_ && a.params_ == b.params_;
    }

private:
    Activations run(const ArrayND& batch, Mode mode, std::mt19937_64* rng, const std::vector<ArrayND>* masks) const;

    Shape3 input_;
    std::vector<LayerSpec> layers_;
    std::vector<Shape3> shapes_;
    ParamSet params_;
    std::uint64_t version_ = 1;
};

/// Packs per-sample arrays (each of the network's input size) into an NCHW batch.
ArrayND make_batch(const Shape3& shape, const std::vector<const std::vector<double>*>& samples);

}  // namespace qhd::nn
