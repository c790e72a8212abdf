#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>

#include "qhd/nn/array.hpp"

namespace qhd::nn {

struct KernelSize {
    std::size_t height = 1;
    std::size_t width = 1;
    friend bool operator==(const KernelSize&, const KernelSize&) = default;
};

// Convolutions always use "same" padding: out = ceil(in / stride) for Conv2d
// and out = in * stride for TransposeConv2d. Odd padding totals put the extra
// row/column at the bottom/right.

struct Conv2d {
    KernelSize kernel;
    std::size_t out_maps = 1;
    std::size_t stride = 1;
    friend bool operator==(const Conv2d&, const Conv2d&) = default;
};

struct TransposeConv2d {
    KernelSize kernel;
    std::size_t out_maps = 1;
    std::size_t stride = 1;
    friend bool operator==(const TransposeConv2d&, const TransposeConv2d&) = default;
};

struct MaxPool2d {
    KernelSize kernel{2, 2};
    std::size_t stride = 2;
    friend bool operator==(const MaxPool2d&, const MaxPool2d&) = default;
};

/// Fully connected layer over the flattened input. `as_maps` lays the output
/// out as feature maps so a convolution can follow.
struct Dense {
    std::size_t units = 1;
    std::optional<Shape3> as_maps = std::nullopt;
    friend bool operator==(const Dense&, const Dense&) = default;
};

/// Inverted dropout: kept activations are divided by (1 - drop_rate) in
/// training; inference is the identity.
struct Dropout {
    double drop_rate = 0.0;
    friend bool operator==(const Dropout&, const Dropout&) = default;
};

struct Relu {
    friend bool operator==(const Relu&, const Relu&) = default;
};

struct Linear {
    friend bool operator==(const Linear&, const Linear&) = default;
};

/// Adds a fixed constant to every element (no parameters).
struct Shift {
    double offset = 0.0;
    friend bool operator==(const Shift&, const Shift&) = default;
};

using LayerSpec = std::variant<Conv2d, TransposeConv2d, MaxPool2d, Dense, Dropout, Relu, Linear, Shift>;

std::string describe(const LayerSpec& spec);

/// Output geometry of a layer; throws std::invalid_argument on inconsistent specs.
Shape3 output_shape(const LayerSpec& spec, const Shape3& in);

// Geometry of a same-padded strided window sweep over an image.
struct ConvGeometry {
    std::size_t in_h = 0, in_w = 0;
    std::size_t k_h = 0, k_w = 0;
    std::size_t stride = 1;
    std::size_t out_h = 0, out_w = 0;
    std::size_t pad_top = 0, pad_left = 0;
};

ConvGeometry same_geometry(std::size_t in_h, std::size_t in_w, KernelSize k, std::size_t stride);

namespace kernels {

// Batched kernels over NCHW arrays. Backward functions accumulate nothing:
// every returned gradient is freshly allocated.

ArrayND conv2d_forward(const ArrayND& x, const ArrayND& weight, const ArrayND& bias, std::size_t stride);
void conv2d_backward(const ArrayND& x, const ArrayND& weight, const ArrayND& dy, std::size_t stride,
                     ArrayND& dweight, ArrayND& dbias, ArrayND& dx);

ArrayND conv_transpose2d_forward(const ArrayND& x, const ArrayND& weight, const ArrayND& bias,
                                 std::size_t stride);
void conv_transpose2d_backward(const ArrayND& x, const ArrayND& weight, const ArrayND& dy, std::size_t stride,
                               ArrayND& dweight, ArrayND& dbias, ArrayND& dx);

struct PoolResult {
    ArrayND output;
    std::vector<std::size_t> argmax;  // flat index into the input per output cell
};
/// Ties resolve to the first maximal element in row-major window order.
PoolResult maxpool2d_forward(const ArrayND& x, const MaxPool2d& spec);
ArrayND maxpool2d_backward(const std::vector<std::size_t>& argmax, const std::vector<std::size_t>& input_shape,
                           const ArrayND& dy);

ArrayND dense_forward(const ArrayND& x, const ArrayND& weight, const ArrayND& bias);
void dense_backward(const ArrayND& x, const ArrayND& weight, const ArrayND& dy, ArrayND& dweight,
                    ArrayND& dbias, ArrayND& dx);

}  // namespace kernels

}  // namespace qhd::nn
