#include "qhd/nn/layers.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

#include <Eigen/Core>

namespace qhd::nn {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

// Output columns [lo, hi) whose tap kx lands inside the image row.
struct TapRange {
    std::size_t lo, hi;
};

TapRange valid_columns(const ConvGeometry& g, std::size_t kx) {
    const auto first = kx >= g.pad_left ? 0 : ceil_div(g.pad_left - kx, g.stride);
    const auto limit = g.in_w + g.pad_left;
    const auto last = limit > kx ? std::min(g.out_w, ceil_div(limit - kx, g.stride)) : 0;
    return {std::min(first, last), last};
}

// cols has (channels * k_h * k_w) rows and (out_h * out_w) columns.
void im2col(const double* image, std::size_t channels, const ConvGeometry& g, double* cols) {
    const auto plane = g.in_h * g.in_w;
    for (std::size_t c = 0; c < channels; ++c) {
        const double* src = image + c * plane;
        for (std::size_t ky = 0; ky < g.k_h; ++ky) {
            for (std::size_t kx = 0; kx < g.k_w; ++kx) {
                const auto [lo, hi] = valid_columns(g, kx);
                for (std::size_t oy = 0; oy < g.out_h; ++oy, cols += g.out_w) {
                    const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                                    static_cast<std::ptrdiff_t>(g.pad_top);
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h)) {
                        std::fill_n(cols, g.out_w, 0.0);
                        continue;
                    }
                    const double* row = src + static_cast<std::size_t>(iy) * g.in_w + kx - g.pad_left;
                    std::fill(cols, cols + lo, 0.0);
                    if (g.stride == 1) {
                        std::copy(row + lo, row + hi, cols + lo);
                    } else {
                        for (std::size_t ox = lo; ox < hi; ++ox) cols[ox] = row[ox * g.stride];
                    }
                    std::fill(cols + hi, cols + g.out_w, 0.0);
                }
            }
        }
    }
}

// Adjoint of im2col: scatters columns back onto the image, accumulating.
void col2im(const double* cols, std::size_t channels, const ConvGeometry& g, double* image) {
    const auto plane = g.in_h * g.in_w;
    for (std::size_t c = 0; c < channels; ++c) {
        double* dst = image + c * plane;
        for (std::size_t ky = 0; ky < g.k_h; ++ky) {
            for (std::size_t kx = 0; kx < g.k_w; ++kx) {
                const auto [lo, hi] = valid_columns(g, kx);
                for (std::size_t oy = 0; oy < g.out_h; ++oy, cols += g.out_w) {
                    const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                                    static_cast<std::ptrdiff_t>(g.pad_top);
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h)) continue;
                    double* row = dst + static_cast<std::size_t>(iy) * g.in_w + kx - g.pad_left;
                    for (std::size_t ox = lo; ox < hi; ++ox) row[ox * g.stride] += cols[ox];
                }
            }
        }
    }
}

void require_rank4(const ArrayND& a, const char* what) {
    if (a.rank() != 4) throw std::invalid_argument(std::string(what) + ": expected an NCHW array");
}

}  // namespace

std::string to_string(const Shape3& s) {
    return std::to_string(s.channels) + "x" + std::to_string(s.height) + "x" + std::to_string(s.width);
}

ConvGeometry same_geometry(std::size_t in_h, std::size_t in_w, KernelSize k, std::size_t stride) {
    ConvGeometry g;
    g.in_h = in_h;
    g.in_w = in_w;
    g.k_h = k.height;
    g.k_w = k.width;
    g.stride = stride;
    g.out_h = ceil_div(in_h, stride);
    g.out_w = ceil_div(in_w, stride);
    const auto pad_total = [&](std::size_t out, std::size_t k_ext, std::size_t in) -> std::size_t {
        const auto need = (out - 1) * stride + k_ext;
        return need > in ? need - in : 0;
    };
    g.pad_top = pad_total(g.out_h, g.k_h, in_h) / 2;
    g.pad_left = pad_total(g.out_w, g.k_w, in_w) / 2;
    return g;
}

std::string describe(const LayerSpec& spec) {
    return std::visit(
        overloaded{
            [](const Conv2d& c) {
                return "Conv2d[" + std::to_string(c.kernel.height) + "," + std::to_string(c.kernel.width) + "]x" +
                       std::to_string(c.out_maps) + " s" + std::to_string(c.stride);
            },
            [](const TransposeConv2d& c) {
                return "TransposeConv2d[" + std::to_string(c.kernel.height) + "," +
                       std::to_string(c.kernel.width) + "]x" + std::to_string(c.out_maps) + " s" +
                       std::to_string(c.stride);
            },
            [](const MaxPool2d& p) {
                return "MaxPool2d[" + std::to_string(p.kernel.height) + "," + std::to_string(p.kernel.width) +
                       "] s" + std::to_string(p.stride);
            },
            [](const Dense& d) {
                return "Dense(" + std::to_string(d.units) + (d.as_maps ? " as " + to_string(*d.as_maps) : "") + ")";
            },
            [](const Dropout& d) { return "Dropout(" + std::to_string(d.drop_rate) + ")"; },
            [](const Relu&) { return std::string("Relu"); },
            [](const Linear&) { return std::string("Linear"); },
            [](const Shift& s) { return "Shift(" + std::to_string(s.offset) + ")"; },
        },
        spec);
}

Shape3 output_shape(const LayerSpec& spec, const Shape3& in) {
    auto check_kernel = [](KernelSize k, std::size_t stride) {
        if (k.height < 1 || k.width < 1) throw std::invalid_argument("kernel extents must be >= 1");
        if (stride < 1) throw std::invalid_argument("stride must be >= 1");
    };
    return std::visit(
        overloaded{
            [&](const Conv2d& c) {
                check_kernel(c.kernel, c.stride);
                if (c.out_maps < 1) throw std::invalid_argument("conv needs at least one output map");
                return Shape3{c.out_maps, ceil_div(in.height, c.stride), ceil_div(in.width, c.stride)};
            },
            [&](const TransposeConv2d& c) {
                check_kernel(c.kernel, c.stride);
                if (c.out_maps < 1) throw std::invalid_argument("conv needs at least one output map");
                return Shape3{c.out_maps, in.height * c.stride, in.width * c.stride};
            },
            [&](const MaxPool2d& p) {
                check_kernel(p.kernel, p.stride);
                if (in.height < p.kernel.height || in.width < p.kernel.width ||
                    (in.height - p.kernel.height) % p.stride != 0 || (in.width - p.kernel.width) % p.stride != 0) {
                    throw std::invalid_argument("max-pool window does not tile a " + to_string(in) + " input");
                }
                return Shape3{in.channels, (in.height - p.kernel.height) / p.stride + 1,
                              (in.width - p.kernel.width) / p.stride + 1};
            },
            [&](const Dense& d) {
                if (d.units < 1) throw std::invalid_argument("dense layer needs at least one unit");
                if (d.as_maps) {
                    if (d.as_maps->size() != d.units) {
                        throw std::invalid_argument("dense map layout " + to_string(*d.as_maps) +
                                                    " does not hold " + std::to_string(d.units) + " units");
                    }
                    return *d.as_maps;
                }
                return Shape3{d.units, 1, 1};
            },
            [&](const Dropout& d) {
                if (!(d.drop_rate >= 0.0 && d.drop_rate < 1.0)) {
                    throw std::invalid_argument("drop rate must lie in [0,1)");
                }
                return in;
            },
            [&](const Relu&) { return in; },
            [&](const Linear&) { return in; },
            [&](const Shift&) { return in; },
        },
        spec);
}

namespace kernels {

ArrayND conv2d_forward(const ArrayND& x, const ArrayND& weight, const ArrayND& bias, std::size_t stride) {
    require_rank4(x, "conv2d");
    const auto n = x.extent(0), c = x.extent(1), h = x.extent(2), w = x.extent(3);
    const auto o = weight.extent(0);
    const auto g = same_geometry(h, w, {weight.extent(2), weight.extent(3)}, stride);
    const auto k = c * g.k_h * g.k_w;
    const auto p = g.out_h * g.out_w;
    ArrayND y({n, o, g.out_h, g.out_w});
    AlignedBuffer cols(k * p);
    const ConstMatMap wm(weight.data(), static_cast<Eigen::Index>(o), static_cast<Eigen::Index>(k));
    const Eigen::Map<const Eigen::VectorXd> b(bias.data(), static_cast<Eigen::Index>(o));
    for (std::size_t s = 0; s < n; ++s) {
        im2col(x.data() + s * c * h * w, c, g, cols.data());
        const ConstMatMap cm(cols.data(), static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(p));
        MatMap ym(y.data() + s * o * p, static_cast<Eigen::Index>(o), static_cast<Eigen::Index>(p));
        ym.noalias() = wm * cm;
        ym.colwise() += b;
    }
    return y;
}

void conv2d_backward(const ArrayND& x, const ArrayND& weight, const ArrayND& dy, std::size_t stride,
                     ArrayND& dweight, ArrayND& dbias, ArrayND& dx) {
    const auto n = x.extent(0), c = x.extent(1), h = x.extent(2), w = x.extent(3);
    const auto o = weight.extent(0);
    const auto g = same_geometry(h, w, {weight.extent(2), weight.extent(3)}, stride);
    const auto k = c * g.k_h * g.k_w;
    const auto p = g.out_h * g.out_w;
    dweight = ArrayND(weight.shape());
    dbias = ArrayND({o});
    dx = ArrayND(x.shape());
    AlignedBuffer cols(k * p);
    AlignedBuffer dcols(k * p);
    const ConstMatMap wm(weight.data(), static_cast<Eigen::Index>(o), static_cast<Eigen::Index>(k));
    MatMap dwm(dweight.data(), static_cast<Eigen::Index>(o), static_cast<Eigen::Index>(k));
    Eigen::Map<Eigen::VectorXd> db(dbias.data(), static_cast<Eigen::Index>(o));
    for (std::size_t s = 0; s < n; ++s) {
        im2col(x.data() + s * c * h * w, c, g, cols.data());
        const ConstMatMap cm(cols.data(), static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(p));
        const ConstMatMap dym(dy.data() + s * o * p, static_cast<Eigen::Index>(o), static_cast<Eigen::Index>(p));
        dwm.noalias() += dym * cm.transpose();
        db += dym.rowwise().sum();
        MatMap dcm(dcols.data(), static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(p));
        dcm.noalias() = wm.transpose() * dym;
        col2im(dcols.data(), c, g, dx.data() + s * c * h * w);
    }
}

// A transpose convolution is the adjoint (data gradient) of the strided
// same-padded convolution that maps an (in*stride)-sized image to `in`.

ArrayND conv_transpose2d_forward(const ArrayND& x, const ArrayND& weight, const ArrayND& bias,
                                 std::size_t stride) {
    require_rank4(x, "conv_transpose2d");
    const auto n = x.extent(0), c = x.extent(1), h = x.extent(2), w = x.extent(3);
    const auto o = weight.extent(1);
    const auto g = same_geometry(h * stride, w * stride, {weight.extent(2), weight.extent(3)}, stride);
    const auto k = o * g.k_h * g.k_w;
    const auto p = h * w;
    const auto out_plane = g.in_h * g.in_w;
    ArrayND y({n, o, g.in_h, g.in_w});
    AlignedBuffer cols(k * p);
    const ConstMatMap wm(weight.data(), static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(k));
    for (std::size_t s = 0; s < n; ++s) {
        const ConstMatMap xm(x.data() + s * c * p, static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(p));
        MatMap cm(cols.data(), static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(p));
        cm.noalias() = wm.transpose() * xm;
        double* out = y.data() + s * o * out_plane;
        col2im(cols.data(), o, g, out);
        for (std::size_t m = 0; m < o; ++m) {
            std::for_each(out + m * out_plane, out + (m + 1) * out_plane, [b = bias[m]](double& v) { v += b; });
        }
    }
    return y;
}

void conv_transpose2d_backward(const ArrayND& x, const ArrayND& weight, const ArrayND& dy, std::size_t stride,
                               ArrayND& dweight, ArrayND& dbias, ArrayND& dx) {
    const auto n = x.extent(0), c = x.extent(1), h = x.extent(2), w = x.extent(3);
    const auto o = weight.extent(1);
    const auto g = same_geometry(h * stride, w * stride, {weight.extent(2), weight.extent(3)}, stride);
    const auto k = o * g.k_h * g.k_w;
    const auto p = h * w;
    const auto out_plane = g.in_h * g.in_w;
    dweight = ArrayND(weight.shape());
    dbias = ArrayND({o});
    dx = ArrayND(x.shape());
    AlignedBuffer dcols(k * p);
    const ConstMatMap wm(weight.data(), static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(k));
    MatMap dwm(dweight.data(), static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(k));
    for (std::size_t s = 0; s < n; ++s) {
        const double* dout = dy.data() + s * o * out_plane;
        im2col(dout, o, g, dcols.data());
        const ConstMatMap dcm(dcols.data(), static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(p));
        const ConstMatMap xm(x.data() + s * c * p, static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(p));
        MatMap dxm(dx.data() + s * c * p, static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(p));
        dxm.noalias() = wm * dcm;
        dwm.noalias() += xm * dcm.transpose();
        for (std::size_t m = 0; m < o; ++m) {
            double acc = 0.0;
            for (std::size_t i = 0; i < out_plane; ++i) acc += dout[m * out_plane + i];
            dbias[m] += acc;
        }
    }
}

PoolResult maxpool2d_forward(const ArrayND& x, const MaxPool2d& spec) {
    require_rank4(x, "maxpool2d");
    const auto n = x.extent(0), c = x.extent(1), h = x.extent(2), w = x.extent(3);
    const auto out = output_shape(spec, Shape3{c, h, w});
    PoolResult r{ArrayND({n, c, out.height, out.width}), {}};
    r.argmax.resize(r.output.size());
    std::size_t cell = 0;
    for (std::size_t plane = 0; plane < n * c; ++plane) {
        const std::size_t base = plane * h * w;
        for (std::size_t oy = 0; oy < out.height; ++oy) {
            for (std::size_t ox = 0; ox < out.width; ++ox, ++cell) {
                double best = -std::numeric_limits<double>::infinity();
                std::size_t best_index = base + oy * spec.stride * w + ox * spec.stride;
                for (std::size_t ky = 0; ky < spec.kernel.height; ++ky) {
                    for (std::size_t kx = 0; kx < spec.kernel.width; ++kx) {
                        const auto idx = base + (oy * spec.stride + ky) * w + ox * spec.stride + kx;
                        if (x[idx] > best) {
                            best = x[idx];
                            best_index = idx;
                        }
                    }
                }
                r.output[cell] = best;
                r.argmax[cell] = best_index;
            }
        }
    }
    return r;
}

ArrayND maxpool2d_backward(const std::vector<std::size_t>& argmax, const std::vector<std::size_t>& input_shape,
                           const ArrayND& dy) {
    ArrayND dx(input_shape);
    for (std::size_t i = 0; i < argmax.size(); ++i) dx[argmax[i]] += dy[i];
    return dx;
}

ArrayND dense_forward(const ArrayND& x, const ArrayND& weight, const ArrayND& bias) {
    const auto n = x.extent(0);
    const auto in = x.size() / n;
    const auto out = weight.extent(0);
    ArrayND y({n, out});
    const ConstMatMap xm(x.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(in));
    const ConstMatMap wm(weight.data(), static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in));
    const Eigen::Map<const Eigen::RowVectorXd> b(bias.data(), static_cast<Eigen::Index>(out));
    MatMap ym(y.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(out));
    ym.noalias() = xm * wm.transpose();
    ym.rowwise() += b;
    return y;
}

void dense_backward(const ArrayND& x, const ArrayND& weight, const ArrayND& dy, ArrayND& dweight,
                    ArrayND& dbias, ArrayND& dx) {
    const auto n = x.extent(0);
    const auto in = x.size() / n;
    const auto out = weight.extent(0);
    dweight = ArrayND(weight.shape());
    dbias = ArrayND({out});
    dx = ArrayND(x.shape());
    const ConstMatMap xm(x.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(in));
    const ConstMatMap wm(weight.data(), static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in));
    const ConstMatMap dym(dy.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(out));
    MatMap(dweight.data(), static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in)).noalias() =
        dym.transpose() * xm;
    Eigen::Map<Eigen::RowVectorXd>(dbias.data(), static_cast<Eigen::Index>(out)) = dym.colwise().sum();
    MatMap(dx.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(in)).noalias() = dym * wm;
}

}  // namespace kernels

}  // namespace qhd::nn
