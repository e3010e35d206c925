#pragma once

// Verification harnesses shared by the CLI and the test suites: central
// finite-difference gradient checks and fused-vs-oracle convolution diffs.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "evenpad/conv.hpp"
#include "evenpad/kernels.hpp"
#include "evenpad/nn.hpp"
#include "evenpad/oracle.hpp"
#include "evenpad/tensor.hpp"

namespace evenpad {

/// |a - b| / max(|a|, |b|), with a floor on the denominator so that two
/// near-zero values compare by absolute difference.
inline double relative_error(double analytic, double numeric, double floor = 1e-8) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
    return std::abs(analytic - numeric) / denom;
}

/// Central differences of `loss` with respect to every element of `param`.
inline Tensor numeric_gradient(Tensor& param, const std::function<double()>& loss, double step) {
    Tensor g(param.shape());
    for (std::size_t i = 0; i < param.size(); ++i) {
        const double saved = param[i];
        param[i] = saved + step;
        const double up = loss();
        param[i] = saved - step;
        const double down = loss();
        param[i] = saved;
        g[i] = (up - down) / (2.0 * step);
    }
    return g;
}

inline double max_relative_error(const Tensor& analytic, const Tensor& numeric) {
    double worst = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        worst = std::max(worst, relative_error(analytic[i], numeric[i]));
    }
    return worst;
}

struct GradCheckEntry {
    std::string name;
    std::size_t elements = 0;
    double max_rel_error = 0.0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;

    [[nodiscard]] double max_rel_error() const {
        double m = 0.0;
        for (const auto& e : entries) {
            m = std::max(m, e.max_rel_error);
        }
        return m;
    }
};

/// Single conv layer: loss = sum(u * conv(x)) for a fixed random u.
inline GradCheckReport check_conv_gradients(Tensor x, ConvLayer layer, double step, std::uint64_t seed) {
    const Tensor u = random_normal(layer.output_shape(x.shape()), 0.0, 1.0, mix_seed({seed, 0xC0ull}));
    const ConvGrads g = conv2d_backward(x, layer, u);
    auto loss = [&] { return dot(conv2d_forward(x, layer), u); };
    GradCheckReport r;
    r.entries.push_back({"d_input", x.size(), max_relative_error(g.d_input, numeric_gradient(x, loss, step))});
    r.entries.push_back(
        {"d_weights", layer.weights().size(), max_relative_error(g.d_weights, numeric_gradient(layer.weights(), loss, step))});
    return r;
}

/// End-to-end check of a network's parameter and input gradients through
/// softmax cross-entropy with random labels.
inline GradCheckReport check_network_gradients(const NetworkSpec& spec, std::size_t batch, double step,
                                               std::uint64_t seed) {
    Network net = build(spec, seed);
    Tensor x = random_normal({batch, spec.in_channels, spec.in_height, spec.in_width}, 0.0, 1.0, mix_seed({seed, 1}));
    std::vector<int> labels(batch);
    std::mt19937_64 rng(mix_seed({seed, 2}));
    std::uniform_int_distribution<int> pick(0, static_cast<int>(spec.classes()) - 1);
    for (int& l : labels) {
        l = pick(rng);
    }

    auto [logits, cache] = forward(net, x, true);
    const NetGrads g = backward(net, cache, cross_entropy(logits, labels).d_logits);
    auto loss = [&] { return cross_entropy(forward(net, x, true).first, labels).loss; };

    GradCheckReport r;
    auto params = net.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) {
        r.entries.push_back({"param[" + std::to_string(i) + "] " + to_string(params[i]->shape()), params[i]->size(),
                             max_relative_error(g.params[i], numeric_gradient(*params[i], loss, step))});
    }
    r.entries.push_back({"input " + to_string(x.shape()), x.size(),
                         max_relative_error(g.d_input, numeric_gradient(x, loss, step))});
    return r;
}

/// The network used when no spec is given: grouped-symmetric convs, batch
/// norm and a dense head.
inline constexpr const char* kDefaultGradcheckSpec =
    "in=4x5x5,conv:C2sp:8,bn,relu,conv:C2sp:8,bn,relu,conv:C3:4,relu,gap,dense:3";

// ---------------------------------------------------------------------------
// Oracle diffs

struct OracleConfig {
    int k = 3;
    PaddingPolicy policy = SymmetricOdd{};
    int stride = 1;
};

/// Every (k, policy, stride) for k in 1..5 and stride in {1, 2}.
inline std::vector<OracleConfig> oracle_configs() {
    std::vector<OracleConfig> out;
    for (int k = 1; k <= 5; ++k) {
        std::vector<PaddingPolicy> policies;
        if (k % 2 == 1) {
            policies.emplace_back(SymmetricOdd{});
        } else {
            for (Direction d : kDirections) {
                policies.emplace_back(Asymmetric{d});
            }
            policies.emplace_back(GroupedSymmetric{});
        }
        for (const auto& p : policies) {
            for (int s : {1, 2}) {
                out.push_back({k, p, s});
            }
        }
    }
    return out;
}

/// Per-channel padding for the oracle, derived straight from the padding
/// rules rather than from ConvLayer.
inline std::vector<PadAmounts> reference_pads(const OracleConfig& cfg, std::size_t channels) {
    std::vector<PadAmounts> pads;
    if (std::holds_alternative<GroupedSymmetric>(cfg.policy)) {
        const ChannelAssignment a = assign_directions(channels);
        for (std::size_t i = 0; i < channels; ++i) {
            pads.push_back(pad_amounts(cfg.k, a[i]));
        }
        return pads;
    }
    const PadAmounts p = std::holds_alternative<SymmetricOdd>(cfg.policy)
                             ? pad_amounts(cfg.k, SymmetricOdd{})
                             : pad_amounts(cfg.k, std::get<Asymmetric>(cfg.policy).direction);
    pads.assign(channels, p);
    return pads;
}

struct OracleCase {
    OracleConfig config;
    Shape input;
    std::size_t out_channels = 0;
    double max_abs_diff = 0.0;
};

/// One random case with shape up to (2, 8, 9, 9); grouped policies draw
/// channel counts from {4, 8}.
inline OracleCase run_oracle_case(const OracleConfig& cfg, std::mt19937_64& rng) {
    std::uniform_int_distribution<std::size_t> batch(1, 2), chan(1, 8), side(1, 9), quarter(1, 2);
    Shape in{batch(rng), chan(rng), side(rng), side(rng)};
    if (std::holds_alternative<GroupedSymmetric>(cfg.policy)) {
        in.c = 4 * quarter(rng);
    }
    const std::size_t c_out = chan(rng);
    const std::uint64_t s = rng();
    const Tensor x = random_normal(in, 0.0, 1.0, mix_seed({s, 1}));
    const auto k = static_cast<std::size_t>(cfg.k);
    ConvLayer layer(random_normal({c_out, in.c, k, k}, 0.0, 1.0, mix_seed({s, 2})), cfg.policy, cfg.stride);
    const Tensor fused = conv2d_forward(x, layer);
    const Tensor reference = naive_oracle_conv(x, layer.weights(), reference_pads(cfg, in.c), cfg.stride);
    return {cfg, in, c_out, max_abs_diff(fused, reference)};
}

}  // namespace evenpad
