#pragma once

// Stride-1/2 "same" convolution under symmetric, asymmetric and grouped
// symmetric padding, with its exact adjoint.
//
// Padding is never materialized. Every input channel carries its own
// (top, left) pad; each sample is unrolled into a patch matrix whose padded
// entries stay zero, so grouped symmetric padding costs the same as plain
// padding.

#include <algorithm>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "evenpad/padding.hpp"
#include "evenpad/tensor.hpp"

namespace evenpad {

class ConvLayer {
public:
    /// weights: (c_o, c_i, k, k). Stride must be 1 or 2.
    ConvLayer(Tensor weights, PaddingPolicy policy, int stride = 1, std::optional<std::vector<double>> bias = {})
        : weights_(std::move(weights)), bias_(std::move(bias)), policy_(policy), stride_(stride) {
        const Shape& s = weights_.shape();
        if (s.h != s.w) {
            throw std::invalid_argument("conv kernels must be square, got " + to_string(s));
        }
        k_ = static_cast<int>(s.h);
        check_policy_parity(k_, policy_);
        if (stride_ != 1 && stride_ != 2) {
            throw std::invalid_argument("conv stride must be 1 or 2, got " + std::to_string(stride_));
        }
        if (bias_ && bias_->size() != s.n) {
            throw std::invalid_argument("conv bias length must equal output channels");
        }
        if (std::holds_alternative<GroupedSymmetric>(policy_)) {
            assignment_ = assign_directions(s.c);
        }
        pads_.reserve(s.c);
        for (std::size_t i = 0; i < s.c; ++i) {
            pads_.push_back(channel_pad_amounts(i));
        }
    }

    [[nodiscard]] int kernel_size() const { return k_; }
    [[nodiscard]] int stride() const { return stride_; }
    [[nodiscard]] const PaddingPolicy& policy() const { return policy_; }
    [[nodiscard]] std::size_t in_channels() const { return weights_.shape().c; }
    [[nodiscard]] std::size_t out_channels() const { return weights_.shape().n; }
    [[nodiscard]] const std::optional<ChannelAssignment>& assignment() const { return assignment_; }

    [[nodiscard]] const Tensor& weights() const { return weights_; }
    [[nodiscard]] Tensor& weights() { return weights_; }
    [[nodiscard]] const std::optional<std::vector<double>>& bias() const { return bias_; }
    [[nodiscard]] std::optional<std::vector<double>>& bias() { return bias_; }

    /// Zero padding seen by input channel i.
    [[nodiscard]] const PadAmounts& channel_pads(std::size_t i) const { return pads_[i]; }
    [[nodiscard]] const std::vector<PadAmounts>& channel_pads() const { return pads_; }

    [[nodiscard]] std::size_t out_extent(std::size_t in) const {
        // Total padding is k - 1 per axis, hence floor((in - 1) / stride) + 1.
        return (in - 1) / static_cast<std::size_t>(stride_) + 1;
    }

    [[nodiscard]] Shape output_shape(const Shape& in) const {
        return {in.n, out_channels(), out_extent(in.h), out_extent(in.w)};
    }

private:
    [[nodiscard]] PadAmounts channel_pad_amounts(std::size_t i) const {
        return std::visit(
            [&](const auto& p) -> PadAmounts {
                using P = std::decay_t<decltype(p)>;
                if constexpr (std::is_same_v<P, SymmetricOdd>) {
                    return pad_amounts(k_, p);
                } else if constexpr (std::is_same_v<P, Asymmetric>) {
                    return pad_amounts(k_, p.direction);
                } else {
                    return pad_amounts(k_, (*assignment_)[i]);
                }
            },
            policy_);
    }

    Tensor weights_;
    std::optional<std::vector<double>> bias_;
    PaddingPolicy policy_;
    int stride_ = 1;
    int k_ = 1;
    std::optional<ChannelAssignment> assignment_;
    std::vector<PadAmounts> pads_;
};

struct ConvGrads {
    Tensor d_input;
    Tensor d_weights;
    std::optional<std::vector<double>> d_bias;
};

namespace detail {

// Output columns [lo, hi) whose input column ox*stride + kx - left is in [0, w).
struct ColumnSpan {
    std::size_t lo = 0;
    std::size_t hi = 0;
};

inline ColumnSpan valid_columns(long kx, long left, long stride, long in_w, long out_w) {
    const long shift = kx - left;  // input column = ox * stride + shift
    long lo = shift >= 0 ? 0 : (-shift + stride - 1) / stride;
    long hi = in_w - 1 - shift < 0 ? 0 : (in_w - 1 - shift) / stride + 1;
    hi = std::min(hi, out_w);
    lo = std::min(lo, hi);
    return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

inline void check_conv_input(const Tensor& x, const ConvLayer& layer) {
    if (x.shape().c != layer.in_channels()) {
        throw std::invalid_argument("conv input has " + std::to_string(x.shape().c) + " channels, layer expects " +
                                    std::to_string(layer.in_channels()));
    }
}

// Patch matrix of sample n: row (i, ky, kx), one column per output pixel.
// Reads that land in channel i's padding stay zero.
inline void im2col(const Tensor& x, std::size_t n, const ConvLayer& layer, long out_h, long out_w,
                   std::vector<double>& cols) {
    const Shape& in = x.shape();
    const long k = layer.kernel_size(), stride = layer.stride();
    const long in_h = static_cast<long>(in.h), in_w = static_cast<long>(in.w);
    const auto columns = static_cast<std::size_t>(out_h * out_w);
    cols.assign(in.c * static_cast<std::size_t>(k * k) * columns, 0.0);
    double* row = cols.data();
    for (std::size_t i = 0; i < in.c; ++i) {
        const double* src = x.plane(n, i).data();
        const PadAmounts& pad = layer.channel_pads(i);
        for (long ky = 0; ky < k; ++ky) {
            for (long kx = 0; kx < k; ++kx, row += columns) {
                const auto span = valid_columns(kx, pad.left, stride, in_w, out_w);
                const long col_shift = kx - pad.left;
                for (long oy = 0; oy < out_h; ++oy) {
                    const long iy = oy * stride + ky - pad.top;
                    if (iy < 0 || iy >= in_h) {
                        continue;
                    }
                    const double* srow = src + iy * in_w;
                    double* drow = row + oy * out_w;
                    for (std::size_t ox = span.lo; ox < span.hi; ++ox) {
                        drow[ox] = srow[static_cast<long>(ox) * stride + col_shift];
                    }
                }
            }
        }
    }
}

// Adjoint of im2col: scatter-add patch gradients back into sample n.
inline void col2im(const std::vector<double>& cols, const ConvLayer& layer, long out_h, long out_w, Tensor& dx,
                   std::size_t n) {
    const Shape& in = dx.shape();
    const long k = layer.kernel_size(), stride = layer.stride();
    const long in_h = static_cast<long>(in.h), in_w = static_cast<long>(in.w);
    const auto columns = static_cast<std::size_t>(out_h * out_w);
    const double* row = cols.data();
    for (std::size_t i = 0; i < in.c; ++i) {
        double* dst = dx.plane(n, i).data();
        const PadAmounts& pad = layer.channel_pads(i);
        for (long ky = 0; ky < k; ++ky) {
            for (long kx = 0; kx < k; ++kx, row += columns) {
                const auto span = valid_columns(kx, pad.left, stride, in_w, out_w);
                const long col_shift = kx - pad.left;
                for (long oy = 0; oy < out_h; ++oy) {
                    const long iy = oy * stride + ky - pad.top;
                    if (iy < 0 || iy >= in_h) {
                        continue;
                    }
                    double* drow = dst + iy * in_w;
                    const double* srow = row + oy * out_w;
                    for (std::size_t ox = span.lo; ox < span.hi; ++ox) {
                        drow[static_cast<long>(ox) * stride + col_shift] += srow[ox];
                    }
                }
            }
        }
    }
}

// Hot loops get an AVX2 clone where the CPU has it. Plain AVX2 (no FMA) keeps
// every product and sum rounded exactly as in the baseline build.
#if defined(__GNUC__) && !defined(__clang__) && defined(__x86_64__) && defined(__linux__)
#define EVENPAD_SIMD_CLONES __attribute__((target_clones("avx2", "default")))
#else
#define EVENPAD_SIMD_CLONES
#endif

EVENPAD_SIMD_CLONES inline void axpy(double* dst, double a, const double* src, std::size_t len) {
    for (std::size_t p = 0; p < len; ++p) {
        dst[p] += a * src[p];
    }
}

// Four interleaved partial sums; the order is fixed, so results are reproducible.
EVENPAD_SIMD_CLONES inline double dot_product(const double* a, const double* b, std::size_t len) {
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    std::size_t p = 0;
    for (; p + 4 <= len; p += 4) {
        s0 += a[p] * b[p];
        s1 += a[p + 1] * b[p + 1];
        s2 += a[p + 2] * b[p + 2];
        s3 += a[p + 3] * b[p + 3];
    }
    double s = (s0 + s1) + (s2 + s3);
    for (; p < len; ++p) {
        s += a[p] * b[p];
    }
    return s;
}

}  // namespace detail

inline Tensor conv2d_forward(const Tensor& x, const ConvLayer& layer) {
    detail::check_conv_input(x, layer);
    const Shape in = x.shape();
    const Shape out_shape = layer.output_shape(in);
    Tensor out(out_shape);

    const long out_h = static_cast<long>(out_shape.h), out_w = static_cast<long>(out_shape.w);
    const std::size_t columns = out_shape.plane();
    const std::size_t taps = in.c * static_cast<std::size_t>(layer.kernel_size() * layer.kernel_size());
    const double* w = layer.weights().data().data();
    std::vector<double> cols;

    for (std::size_t n = 0; n < in.n; ++n) {
        detail::im2col(x, n, layer, out_h, out_w, cols);
        for (std::size_t o = 0; o < out_shape.c; ++o) {
            double* dst = out.plane(n, o).data();
            if (layer.bias()) {
                std::fill(dst, dst + columns, (*layer.bias())[o]);
            }
            for (std::size_t r = 0; r < taps; ++r) {
                detail::axpy(dst, w[o * taps + r], cols.data() + r * columns, columns);
            }
        }
    }
    return out;
}

/// Gradients of sum(d_out * conv2d_forward(x, layer)) with respect to the
/// input, weights and (if present) bias. Contributions that would land in a
/// padded border cell are dropped.
inline ConvGrads conv2d_backward(const Tensor& x, const ConvLayer& layer, const Tensor& d_out) {
    detail::check_conv_input(x, layer);
    const Shape in = x.shape();
    const Shape out_shape = layer.output_shape(in);
    if (d_out.shape() != out_shape) {
        throw std::invalid_argument("conv backward: d_out shape " + to_string(d_out.shape()) + " but forward gives " +
                                    to_string(out_shape));
    }

    ConvGrads g{Tensor(in), Tensor(layer.weights().shape()), std::nullopt};
    if (layer.bias()) {
        std::vector<double> db(out_shape.c, 0.0);
        for (std::size_t n = 0; n < in.n; ++n) {
            for (std::size_t o = 0; o < out_shape.c; ++o) {
                for (double v : d_out.plane(n, o)) {
                    db[o] += v;
                }
            }
        }
        g.d_bias = std::move(db);
    }

    const long out_h = static_cast<long>(out_shape.h), out_w = static_cast<long>(out_shape.w);
    const std::size_t columns = out_shape.plane();
    const std::size_t taps = in.c * static_cast<std::size_t>(layer.kernel_size() * layer.kernel_size());
    const double* w = layer.weights().data().data();
    double* dw = g.d_weights.data().data();
    std::vector<double> cols, dcols;

    for (std::size_t n = 0; n < in.n; ++n) {
        detail::im2col(x, n, layer, out_h, out_w, cols);
        dcols.assign(cols.size(), 0.0);
        for (std::size_t o = 0; o < out_shape.c; ++o) {
            const double* grad = d_out.plane(n, o).data();
            for (std::size_t r = 0; r < taps; ++r) {
                dw[o * taps + r] += detail::dot_product(grad, cols.data() + r * columns, columns);
                detail::axpy(dcols.data() + r * columns, w[o * taps + r], grad, columns);
            }
        }
        detail::col2im(dcols, layer, out_h, out_w, g.d_input, n);
    }
    return g;
}

}  // namespace evenpad
