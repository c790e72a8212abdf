#include "qhd/nn/model_io.hpp"

#include <fstream>
#include <istream>
#include <ostream>

#include "qhd/detail/atomic_file.hpp"
#include "qhd/detail/binary_io.hpp"

namespace qhd::nn {

namespace {

using detail::read_le;
using detail::write_le;

enum class Tag : std::uint8_t { conv = 1, transpose_conv = 2, maxpool = 3, dense = 4, dropout = 5, relu = 6, linear = 7, shift = 8 };

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};

void put_u32(std::ostream& out, std::size_t v) { write_le<std::uint32_t>(out, static_cast<std::uint32_t>(v)); }
std::size_t get_u32(std::istream& in) { return read_le<std::uint32_t>(in); }

void write_layer(std::ostream& out, const LayerSpec& spec) {
    std::visit(overloaded{
                   [&](const Conv2d& c) {
                       write_le<std::uint8_t>(out, static_cast<std::uint8_t>(Tag::conv));
                       put_u32(out, c.kernel.height);
                       put_u32(out, c.kernel.width);
                       put_u32(out, c.out_maps);
                       put_u32(out, c.stride);
                   },
                   [&](const TransposeConv2d& c) {
                       write_le<std::uint8_t>(out, static_cast<std::uint8_t>(Tag::transpose_conv));
                       put_u32(out, c.kernel.height);
                       put_u32(out, c.kernel.width);
                       put_u32(out, c.out_maps);
                       put_u32(out, c.stride);
                   },
                   [&](const MaxPool2d& p) {
                       write_le<std::uint8_t>(out, static_cast<std::uint8_t>(Tag::maxpool));
                       put_u32(out, p.kernel.height);
                       put_u32(out, p.kernel.width);
                       put_u32(out, p.stride);
                   },
                   [&](const Dense& d) {
                       write_le<std::uint8_t>(out, static_cast<std::uint8_t>(Tag::dense));
                       put_u32(out, d.units);
                       write_le<std::uint8_t>(out, d.as_maps ? 1 : 0);
                       const Shape3 maps = d.as_maps.value_or(Shape3{0, 0, 0});
                       put_u32(out, maps.channels);
                       put_u32(out, maps.height);
                       put_u32(out, maps.width);
                   },
                   [&](const Dropout& d) {
                       write_le<std::uint8_t>(out, static_cast<std::uint8_t>(Tag::dropout));
                       detail::write_f64(out, d.drop_rate);
                   },
                   [&](const Relu&) { write_le<std::uint8_t>(out, static_cast<std::uint8_t>(Tag::relu)); },
                   [&](const Linear&) { write_le<std::uint8_t>(out, static_cast<std::uint8_t>(Tag::linear)); },
                   [&](const Shift& s) {
                       write_le<std::uint8_t>(out, static_cast<std::uint8_t>(Tag::shift));
                       detail::write_f64(out, s.offset);
                   },
               },
               spec);
}

LayerSpec read_layer(std::istream& in) {
    const auto tag = static_cast<Tag>(read_le<std::uint8_t>(in));
    switch (tag) {
        case Tag::conv: {
            Conv2d c;
            c.kernel.height = get_u32(in);
            c.kernel.width = get_u32(in);
            c.out_maps = get_u32(in);
            c.stride = get_u32(in);
            return c;
        }
        case Tag::transpose_conv: {
            TransposeConv2d c;
            c.kernel.height = get_u32(in);
            c.kernel.width = get_u32(in);
            c.out_maps = get_u32(in);
            c.stride = get_u32(in);
            return c;
        }
        case Tag::maxpool: {
            MaxPool2d p;
            p.kernel.height = get_u32(in);
            p.kernel.width = get_u32(in);
            p.stride = get_u32(in);
            return p;
        }
        case Tag::dense: {
            Dense d;
            d.units = get_u32(in);
            const bool has_maps = read_le<std::uint8_t>(in) != 0;
            Shape3 maps;
            maps.channels = get_u32(in);
            maps.height = get_u32(in);
            maps.width = get_u32(in);
            if (has_maps) d.as_maps = maps;
            return d;
        }
        case Tag::dropout: return Dropout{detail::read_f64(in)};
        case Tag::relu: return Relu{};
        case Tag::linear: return Linear{};
        case Tag::shift: return Shift{detail::read_f64(in)};
    }
    throw std::runtime_error("unknown layer tag in model file");
}

}  // namespace

void write_model(std::ostream& out, const Network& net) {
    detail::write_magic(out, "QNN1");
    write_le<std::uint32_t>(out, kModelFormatVersion);
    put_u32(out, net.input_shape().channels);
    put_u32(out, net.input_shape().height);
    put_u32(out, net.input_shape().width);
    put_u32(out, net.layers().size());
    for (const auto& layer : net.layers()) write_layer(out, layer);
    for (const auto& layer : net.params()) {
        for (const auto& p : layer) detail::write_f64s(out, p.values());
    }
}

Network read_model(std::istream& in) {
    detail::expect_magic(in, "QNN1");
    if (const auto version = read_le<std::uint32_t>(in); version != kModelFormatVersion) {
        throw std::runtime_error("unsupported model format version " + std::to_string(version));
    }
    Shape3 input;
    input.channels = get_u32(in);
    input.height = get_u32(in);
    input.width = get_u32(in);
    const auto count = get_u32(in);
    std::vector<LayerSpec> layers;
    layers.reserve(count);
    for (std::size_t i = 0; i < count; ++i) layers.push_back(read_layer(in));
    Network net(input, std::move(layers));
    for (auto& layer : net.params_mut()) {
        for (auto& p : layer) detail::read_f64s(in, p.values());
    }
    detail::expect_eof(in);
    return net;
}

void save_model(const Network& net, const std::filesystem::path& path) {
    detail::write_atomically(path, [&](std::ostream& out) { write_model(out, net); });
}

Network load_model(const std::filesystem::path& path, std::optional<Shape3> expected_input) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open model " + path.string());
    try {
        auto net = read_model(in);
        if (expected_input && net.input_shape() != *expected_input) {
            throw ShapeError(0, "model input " + to_string(net.input_shape()) + " does not match expected " +
                                    to_string(*expected_input));
        }
        return net;
    } catch (const std::runtime_error& e) {
        throw std::runtime_error(path.string() + ": " + e.what());
    }
}

}  // namespace qhd::nn
