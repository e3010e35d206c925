#pragma once

// Brute-force reference convolution. Shares no code with conv2d_forward:
// every input channel is zero padded into its own buffer, then a plain
// valid (no-padding) convolution is summed over channels and kernel taps.

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "evenpad/padding.hpp"
#include "evenpad/tensor.hpp"

namespace evenpad {

inline Tensor naive_oracle_conv(const Tensor& x, const Tensor& weights, const std::vector<PadAmounts>& per_channel_pads,
                                int stride) {
    const Shape in = x.shape();
    const Shape ws = weights.shape();
    if (ws.c != in.c) {
        throw std::invalid_argument("oracle: weights expect " + std::to_string(ws.c) + " input channels, got " +
                                    std::to_string(in.c));
    }
    if (per_channel_pads.size() != in.c) {
        throw std::invalid_argument("oracle: need one pad record per input channel");
    }
    if (ws.h != ws.w) {
        throw std::invalid_argument("oracle: kernels must be square");
    }
    if (stride != 1 && stride != 2) {
        throw std::invalid_argument("oracle: stride must be 1 or 2");
    }
    const std::size_t k = ws.h;

    // Materialize each channel with its own padding.
    std::vector<Tensor> padded;
    padded.reserve(in.c);
    for (std::size_t i = 0; i < in.c; ++i) {
        Tensor channel({in.n, 1, in.h, in.w});
        for (std::size_t n = 0; n < in.n; ++n) {
            for (std::size_t y = 0; y < in.h; ++y) {
                for (std::size_t xx = 0; xx < in.w; ++xx) {
                    channel(n, 0, y, xx) = x(n, i, y, xx);
                }
            }
        }
        padded.push_back(pad_tensor(channel, per_channel_pads[i], 0.0));
    }
    const std::size_t ph = padded.front().shape().h;
    const std::size_t pw = padded.front().shape().w;
    for (const Tensor& p : padded) {
        if (p.shape().h != ph || p.shape().w != pw) {
            throw std::invalid_argument("oracle: all channels must pad to the same size");
        }
    }
    if (ph < k || pw < k) {
        throw std::invalid_argument("oracle: padded input smaller than kernel");
    }
    const std::size_t s = static_cast<std::size_t>(stride);
    const std::size_t oh = (ph - k) / s + 1;
    const std::size_t ow = (pw - k) / s + 1;

    Tensor out({in.n, ws.n, oh, ow});
    for (std::size_t n = 0; n < in.n; ++n) {
        for (std::size_t o = 0; o < ws.n; ++o) {
            for (std::size_t oy = 0; oy < oh; ++oy) {
                for (std::size_t ox = 0; ox < ow; ++ox) {
                    double acc = 0.0;
                    for (std::size_t i = 0; i < in.c; ++i) {
                        for (std::size_t ky = 0; ky < k; ++ky) {
                            for (std::size_t kx = 0; kx < k; ++kx) {
                                acc += weights(o, i, ky, kx) * padded[i](n, 0, oy * s + ky, ox * s + kx);
                            }
                        }
                    }
                    out(n, o, oy, ox) = acc;
                }
            }
        }
    }
    return out;
}

}  // namespace evenpad
