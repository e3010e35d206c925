#pragma once

// A small plain-CNN training stack: conv / batch norm / ReLU / global
// average pooling / dense layers, softmax cross-entropy and momentum SGD.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "evenpad/conv.hpp"
#include "evenpad/data.hpp"
#include "evenpad/kernels.hpp"
#include "evenpad/tensor.hpp"

namespace evenpad {

// ---------------------------------------------------------------------------
// Specs

struct ConvSpec {
    KernelTag tag = KernelTag::C3;
    std::size_t out_channels = 0;
    int stride = 1;
};
struct ReluSpec {};
struct BatchNormSpec {};
struct GlobalAvgPoolSpec {};
struct DenseSpec {
    std::size_t units = 0;
};

using LayerSpec = std::variant<ConvSpec, ReluSpec, BatchNormSpec, GlobalAvgPoolSpec, DenseSpec>;

struct NetworkSpec {
    std::size_t in_channels = 1;
    std::size_t in_height = 1;
    std::size_t in_width = 1;
    std::vector<LayerSpec> layers;

    /// Units of the final dense layer.
    [[nodiscard]] std::size_t classes() const {
        if (layers.empty() || !std::holds_alternative<DenseSpec>(layers.back())) {
            throw std::invalid_argument("network must end with a dense layer");
        }
        return std::get<DenseSpec>(layers.back()).units;
    }

    /// Textual form accepted by parse_network_spec.
    [[nodiscard]] std::string to_string() const {
        std::ostringstream os;
        os << "in=" << in_channels << 'x' << in_height << 'x' << in_width;
        for (const auto& l : layers) {
            os << ',';
            std::visit(
                [&](const auto& s) {
                    using S = std::decay_t<decltype(s)>;
                    if constexpr (std::is_same_v<S, ConvSpec>) {
                        os << "conv:" << evenpad::to_string(s.tag) << ':' << s.out_channels;
                        if (s.stride != 1) {
                            os << ":s" << s.stride;
                        }
                    } else if constexpr (std::is_same_v<S, ReluSpec>) {
                        os << "relu";
                    } else if constexpr (std::is_same_v<S, BatchNormSpec>) {
                        os << "bn";
                    } else if constexpr (std::is_same_v<S, GlobalAvgPoolSpec>) {
                        os << "gap";
                    } else {
                        os << "dense:" << s.units;
                    }
                },
                l);
        }
        return os.str();
    }
};

namespace detail {

inline std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(sep, start);
        parts.emplace_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) {
            return parts;
        }
        start = pos + 1;
    }
}

inline std::size_t parse_count(const std::string& s, const std::string& ctx) {
    std::size_t used = 0;
    unsigned long v = 0;
    try {
        v = std::stoul(s, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != s.size() || s.empty() || v == 0) {
        throw std::invalid_argument("bad number '" + s + "' in " + ctx);
    }
    return v;
}

}  // namespace detail

/// "in=CxHxW,conv:C2sp:8,bn,relu,conv:C3:16:s2,relu,gap,dense:4"
inline NetworkSpec parse_network_spec(std::string_view text) {
    NetworkSpec spec;
    const auto items = detail::split(text, ',');
    if (items.empty() || items.front().rfind("in=", 0) != 0) {
        throw std::invalid_argument("network spec must start with in=CxHxW");
    }
    const auto dims = detail::split(std::string_view(items.front()).substr(3), 'x');
    if (dims.size() != 3) {
        throw std::invalid_argument("network input must be CxHxW");
    }
    spec.in_channels = detail::parse_count(dims[0], "in=");
    spec.in_height = detail::parse_count(dims[1], "in=");
    spec.in_width = detail::parse_count(dims[2], "in=");
    for (std::size_t i = 1; i < items.size(); ++i) {
        const auto f = detail::split(items[i], ':');
        const std::string& kind = f[0];
        if (kind == "conv" && (f.size() == 3 || f.size() == 4)) {
            ConvSpec c{parse_kernel_tag(f[1]), detail::parse_count(f[2], items[i]), 1};
            if (f.size() == 4) {
                if (f[3].size() < 2 || f[3][0] != 's') {
                    throw std::invalid_argument("conv stride must look like s2 in " + items[i]);
                }
                c.stride = static_cast<int>(detail::parse_count(f[3].substr(1), items[i]));
            }
            spec.layers.emplace_back(c);
        } else if (kind == "relu" && f.size() == 1) {
            spec.layers.emplace_back(ReluSpec{});
        } else if (kind == "bn" && f.size() == 1) {
            spec.layers.emplace_back(BatchNormSpec{});
        } else if (kind == "gap" && f.size() == 1) {
            spec.layers.emplace_back(GlobalAvgPoolSpec{});
        } else if (kind == "dense" && f.size() == 2) {
            spec.layers.emplace_back(DenseSpec{detail::parse_count(f[1], items[i])});
        } else {
            throw std::invalid_argument("unknown network layer '" + items[i] + "'");
        }
    }
    return spec;
}

/// conv-bn-relu blocks, then global average pooling and a dense classifier.
inline NetworkSpec plain_conv_net(KernelTag tag, std::size_t depth, std::size_t width, std::size_t in_channels,
                                  std::size_t size, std::size_t classes, bool batch_norm = true) {
    NetworkSpec spec{in_channels, size, size, {}};
    for (std::size_t i = 0; i < depth; ++i) {
        spec.layers.emplace_back(ConvSpec{tag, width, 1});
        if (batch_norm) {
            spec.layers.emplace_back(BatchNormSpec{});
        }
        spec.layers.emplace_back(ReluSpec{});
    }
    spec.layers.emplace_back(GlobalAvgPoolSpec{});
    spec.layers.emplace_back(DenseSpec{classes});
    return spec;
}

// ---------------------------------------------------------------------------
// Layers

struct ConvNode {
    ConvLayer conv;
};
struct ReluNode {};
struct BatchNormNode {
    Tensor gamma;  // (1, c, 1, 1)
    Tensor beta;
    std::vector<double> running_mean;
    std::vector<double> running_var;
};
struct GapNode {};
struct DenseNode {
    Tensor weights;  // (units, features, 1, 1)
    Tensor bias;     // (1, units, 1, 1)
};

using Node = std::variant<ConvNode, ReluNode, BatchNormNode, GapNode, DenseNode>;

inline constexpr double kBatchNormEps = 1e-7;
inline constexpr double kBatchNormMomentum = 0.1;

class Network {
public:
    Network(NetworkSpec spec, std::vector<Node> nodes) : spec_(std::move(spec)), nodes_(std::move(nodes)) {}

    [[nodiscard]] const NetworkSpec& spec() const { return spec_; }
    [[nodiscard]] const std::vector<Node>& nodes() const { return nodes_; }
    [[nodiscard]] std::vector<Node>& nodes() { return nodes_; }

    /// Evaluate batch norm with running statistics instead of batch statistics.
    bool use_running_stats = false;

    /// Every trainable tensor in layer order: conv weights, bn gamma and beta,
    /// dense weights and bias.
    [[nodiscard]] std::vector<Tensor*> parameters() {
        std::vector<Tensor*> out;
        for (auto& n : nodes_) {
            if (auto* c = std::get_if<ConvNode>(&n)) {
                out.push_back(&c->conv.weights());
            } else if (auto* b = std::get_if<BatchNormNode>(&n)) {
                out.push_back(&b->gamma);
                out.push_back(&b->beta);
            } else if (auto* d = std::get_if<DenseNode>(&n)) {
                out.push_back(&d->weights);
                out.push_back(&d->bias);
            }
        }
        return out;
    }

    [[nodiscard]] std::vector<const Tensor*> parameters() const {
        std::vector<const Tensor*> out;
        for (Tensor* t : const_cast<Network*>(this)->parameters()) {
            out.push_back(t);
        }
        return out;
    }

    /// Weight decay applies to conv and dense weights only.
    [[nodiscard]] std::vector<bool> decay_mask() const {
        std::vector<bool> out;
        for (const auto& n : nodes_) {
            if (std::holds_alternative<ConvNode>(n)) {
                out.push_back(true);
            } else if (std::holds_alternative<BatchNormNode>(n)) {
                out.insert(out.end(), {false, false});
            } else if (std::holds_alternative<DenseNode>(n)) {
                out.insert(out.end(), {true, false});
            }
        }
        return out;
    }

    [[nodiscard]] std::vector<Tensor>& velocity() { return velocity_; }

private:
    NetworkSpec spec_;
    std::vector<Node> nodes_;
    std::vector<Tensor> velocity_;
};

/// Validates the layer chain and He-initializes every weight.
inline Network build(const NetworkSpec& spec, std::uint64_t seed) {
    std::size_t c = spec.in_channels, h = spec.in_height, w = spec.in_width;
    if (c == 0 || h == 0 || w == 0) {
        throw std::invalid_argument("network input dims must be positive");
    }
    bool flat = false;  // past the spatial-to-feature boundary
    bool pooled = false;
    std::vector<Node> nodes;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const std::uint64_t layer_seed = mix_seed({seed, i});
        const auto& l = spec.layers[i];
        if (const auto* cs = std::get_if<ConvSpec>(&l)) {
            if (flat) {
                throw std::invalid_argument("conv layer after the pooling/dense boundary");
            }
            if (cs->out_channels == 0) {
                throw std::invalid_argument("conv layer needs positive output channels");
            }
            if (is_grouped(cs->tag) && c % 4 != 0) {
                throw std::invalid_argument(std::string(to_string(cs->tag)) + " conv needs input channels divisible by 4, got " +
                                            std::to_string(c));
            }
            ConvLayer conv(he_normal_conv(cs->out_channels, c, kernel_size(cs->tag), layer_seed), default_policy(cs->tag),
                           cs->stride);
            h = conv.out_extent(h);
            w = conv.out_extent(w);
            c = cs->out_channels;
            nodes.emplace_back(ConvNode{std::move(conv)});
        } else if (std::holds_alternative<ReluSpec>(l)) {
            nodes.emplace_back(ReluNode{});
        } else if (std::holds_alternative<BatchNormSpec>(l)) {
            if (flat) {
                throw std::invalid_argument("batch norm after the pooling/dense boundary");
            }
            nodes.emplace_back(BatchNormNode{Tensor({1, c, 1, 1}, 1.0), Tensor({1, c, 1, 1}, 0.0),
                                             std::vector<double>(c, 0.0), std::vector<double>(c, 1.0)});
        } else if (std::holds_alternative<GlobalAvgPoolSpec>(l)) {
            if (flat || pooled) {
                throw std::invalid_argument("global average pooling must be the single spatial boundary");
            }
            pooled = flat = true;
            h = w = 1;
            nodes.emplace_back(GapNode{});
        } else {
            const auto& ds = std::get<DenseSpec>(l);
            if (ds.units == 0) {
                throw std::invalid_argument("dense layer needs positive units");
            }
            const std::size_t features = c * h * w;
            flat = true;
            nodes.emplace_back(
                DenseNode{random_normal({ds.units, features, 1, 1}, 0.0, he_std(features), layer_seed),
                          Tensor({1, ds.units, 1, 1}, 0.0)});
            c = ds.units;
            h = w = 1;
        }
    }
    if (spec.layers.empty() || !std::holds_alternative<DenseSpec>(spec.layers.back())) {
        throw std::invalid_argument("network must end with a dense layer");
    }
    return Network(spec, std::move(nodes));
}

// ---------------------------------------------------------------------------
// Forward / backward

struct LayerCache {
    Tensor input;
    Tensor normalized;           // batch norm x_hat
    std::vector<double> inv_std;  // batch norm 1/sqrt(var + eps)
};

struct ForwardCache {
    std::vector<LayerCache> layers;
};

struct NetGrads {
    std::vector<Tensor> params;  // aligned with Network::parameters()
    Tensor d_input;
};

namespace detail {

inline Tensor batch_norm_forward(BatchNormNode& bn, const Tensor& x, bool training, bool use_running,
                                 LayerCache& cache) {
    const Shape s = x.shape();
    const double m = static_cast<double>(s.n * s.plane());
    Tensor out(s);
    cache.normalized = Tensor(s);
    cache.inv_std.assign(s.c, 0.0);
    for (std::size_t c = 0; c < s.c; ++c) {
        double mean = 0.0, var = 0.0;
        if (use_running && !training) {
            mean = bn.running_mean[c];
            var = bn.running_var[c];
        } else {
            for (std::size_t n = 0; n < s.n; ++n) {
                for (double v : x.plane(n, c)) {
                    mean += v;
                }
            }
            mean /= m;
            for (std::size_t n = 0; n < s.n; ++n) {
                for (double v : x.plane(n, c)) {
                    var += (v - mean) * (v - mean);
                }
            }
            var /= m;
            if (training) {
                bn.running_mean[c] = (1.0 - kBatchNormMomentum) * bn.running_mean[c] + kBatchNormMomentum * mean;
                bn.running_var[c] = (1.0 - kBatchNormMomentum) * bn.running_var[c] + kBatchNormMomentum * var;
            }
        }
        const double inv = 1.0 / std::sqrt(var + kBatchNormEps);
        cache.inv_std[c] = inv;
        const double g = bn.gamma[c], b = bn.beta[c];
        for (std::size_t n = 0; n < s.n; ++n) {
            const auto src = x.plane(n, c);
            auto xh = cache.normalized.plane(n, c);
            auto dst = out.plane(n, c);
            for (std::size_t i = 0; i < src.size(); ++i) {
                xh[i] = (src[i] - mean) * inv;
                dst[i] = g * xh[i] + b;
            }
        }
    }
    return out;
}

/// Training-mode batch norm adjoint.
inline Tensor batch_norm_backward(const BatchNormNode& bn, const LayerCache& cache, const Tensor& dy, Tensor& d_gamma,
                                  Tensor& d_beta) {
    const Shape s = dy.shape();
    const double m = static_cast<double>(s.n * s.plane());
    Tensor dx(s);
    d_gamma = Tensor({1, s.c, 1, 1});
    d_beta = Tensor({1, s.c, 1, 1});
    for (std::size_t c = 0; c < s.c; ++c) {
        double sum_dy = 0.0, sum_dy_xh = 0.0;
        for (std::size_t n = 0; n < s.n; ++n) {
            const auto g = dy.plane(n, c);
            const auto xh = cache.normalized.plane(n, c);
            for (std::size_t i = 0; i < g.size(); ++i) {
                sum_dy += g[i];
                sum_dy_xh += g[i] * xh[i];
            }
        }
        d_gamma[c] = sum_dy_xh;
        d_beta[c] = sum_dy;
        const double scale_c = bn.gamma[c] * cache.inv_std[c] / m;
        for (std::size_t n = 0; n < s.n; ++n) {
            const auto g = dy.plane(n, c);
            const auto xh = cache.normalized.plane(n, c);
            auto d = dx.plane(n, c);
            for (std::size_t i = 0; i < g.size(); ++i) {
                d[i] = scale_c * (m * g[i] - sum_dy - xh[i] * sum_dy_xh);
            }
        }
    }
    return dx;
}

inline Tensor gap_forward(const Tensor& x) {
    const Shape s = x.shape();
    Tensor out({s.n, s.c, 1, 1});
    for (std::size_t n = 0; n < s.n; ++n) {
        for (std::size_t c = 0; c < s.c; ++c) {
            double acc = 0.0;
            for (double v : x.plane(n, c)) {
                acc += v;
            }
            out(n, c, 0, 0) = acc / static_cast<double>(s.plane());
        }
    }
    return out;
}

inline Tensor gap_backward(const Shape& in, const Tensor& dy) {
    Tensor dx(in);
    const double inv = 1.0 / static_cast<double>(in.plane());
    for (std::size_t n = 0; n < in.n; ++n) {
        for (std::size_t c = 0; c < in.c; ++c) {
            const double g = dy(n, c, 0, 0) * inv;
            for (double& v : dx.plane(n, c)) {
                v = g;
            }
        }
    }
    return dx;
}

inline Tensor dense_forward(const DenseNode& d, const Tensor& x) {
    const std::size_t units = d.weights.shape().n;
    const std::size_t features = d.weights.shape().c;
    const std::size_t batch = x.shape().n;
    if (x.size() != batch * features) {
        throw std::invalid_argument("dense layer expects " + std::to_string(features) + " features per sample");
    }
    Tensor out({batch, units, 1, 1});
    for (std::size_t n = 0; n < batch; ++n) {
        const double* xi = x.data().data() + n * features;
        for (std::size_t u = 0; u < units; ++u) {
            const double* wu = d.weights.data().data() + u * features;
            double acc = d.bias[u];
            for (std::size_t j = 0; j < features; ++j) {
                acc += wu[j] * xi[j];
            }
            out(n, u, 0, 0) = acc;
        }
    }
    return out;
}

inline Tensor dense_backward(const DenseNode& d, const Tensor& x, const Tensor& dy, Tensor& dw, Tensor& db) {
    const std::size_t units = d.weights.shape().n;
    const std::size_t features = d.weights.shape().c;
    const std::size_t batch = x.shape().n;
    dw = Tensor(d.weights.shape());
    db = Tensor(d.bias.shape());
    Tensor dx(x.shape());
    for (std::size_t n = 0; n < batch; ++n) {
        const double* xi = x.data().data() + n * features;
        double* dxi = dx.data().data() + n * features;
        for (std::size_t u = 0; u < units; ++u) {
            const double g = dy(n, u, 0, 0);
            const double* wu = d.weights.data().data() + u * features;
            double* dwu = dw.data().data() + u * features;
            db[u] += g;
            for (std::size_t j = 0; j < features; ++j) {
                dwu[j] += g * xi[j];
                dxi[j] += g * wu[j];
            }
        }
    }
    return dx;
}

}  // namespace detail

/// Returns the logits (n, classes, 1, 1) and what backward needs. Training
/// mode updates batch-norm running statistics.
inline std::pair<Tensor, ForwardCache> forward(Network& net, const Tensor& x, bool training) {
    const NetworkSpec& spec = net.spec();
    if (x.shape().c != spec.in_channels || x.shape().h != spec.in_height || x.shape().w != spec.in_width) {
        throw std::invalid_argument("network input " + to_string(x.shape()) + " does not match spec in=" +
                                    std::to_string(spec.in_channels) + "x" + std::to_string(spec.in_height) + "x" +
                                    std::to_string(spec.in_width));
    }
    ForwardCache cache;
    cache.layers.resize(net.nodes().size());
    Tensor cur = x;
    for (std::size_t i = 0; i < net.nodes().size(); ++i) {
        LayerCache& lc = cache.layers[i];
        lc.input = cur;
        cur = std::visit(
            [&](auto& node) -> Tensor {
                using N = std::decay_t<decltype(node)>;
                if constexpr (std::is_same_v<N, ConvNode>) {
                    return conv2d_forward(lc.input, node.conv);
                } else if constexpr (std::is_same_v<N, ReluNode>) {
                    return relu(lc.input);
                } else if constexpr (std::is_same_v<N, BatchNormNode>) {
                    return detail::batch_norm_forward(node, lc.input, training, net.use_running_stats, lc);
                } else if constexpr (std::is_same_v<N, GapNode>) {
                    return detail::gap_forward(lc.input);
                } else {
                    return detail::dense_forward(node, lc.input);
                }
            },
            net.nodes()[i]);
    }
    return {std::move(cur), std::move(cache)};
}

/// Exact adjoint of training-mode forward.
inline NetGrads backward(const Network& net, const ForwardCache& cache, const Tensor& d_logits) {
    const auto& nodes = net.nodes();
    if (cache.layers.size() != nodes.size()) {
        throw std::invalid_argument("forward cache does not match network");
    }
    // Gradients are produced back to front; collect per node then flatten.
    std::vector<std::vector<Tensor>> per_node(nodes.size());
    Tensor grad = d_logits;
    for (std::size_t idx = nodes.size(); idx-- > 0;) {
        const LayerCache& lc = cache.layers[idx];
        grad = std::visit(
            [&](const auto& node) -> Tensor {
                using N = std::decay_t<decltype(node)>;
                if constexpr (std::is_same_v<N, ConvNode>) {
                    ConvGrads g = conv2d_backward(lc.input, node.conv, grad);
                    per_node[idx].push_back(std::move(g.d_weights));
                    return std::move(g.d_input);
                } else if constexpr (std::is_same_v<N, ReluNode>) {
                    if (grad.shape() != lc.input.shape()) {
                        throw std::invalid_argument("relu backward: shape mismatch");
                    }
                    Tensor d(grad.shape());
                    for (std::size_t i = 0; i < d.size(); ++i) {
                        d[i] = lc.input[i] > 0.0 ? grad[i] : 0.0;
                    }
                    return d;
                } else if constexpr (std::is_same_v<N, BatchNormNode>) {
                    Tensor dg, db;
                    Tensor dx = detail::batch_norm_backward(node, lc, grad, dg, db);
                    per_node[idx].push_back(std::move(dg));
                    per_node[idx].push_back(std::move(db));
                    return dx;
                } else if constexpr (std::is_same_v<N, GapNode>) {
                    return detail::gap_backward(lc.input.shape(), grad);
                } else {
                    Tensor dw, db;
                    Tensor dx = detail::dense_backward(node, lc.input, grad, dw, db);
                    per_node[idx].push_back(std::move(dw));
                    per_node[idx].push_back(std::move(db));
                    return dx;
                }
            },
            nodes[idx]);
    }
    NetGrads out;
    for (auto& v : per_node) {
        for (auto& t : v) {
            out.params.push_back(std::move(t));
        }
    }
    out.d_input = std::move(grad);
    return out;
}

// ---------------------------------------------------------------------------
// Loss and optimizer

struct LossResult {
    double loss = 0.0;
    Tensor d_logits;
};

/// Mean softmax cross-entropy over the batch.
inline LossResult cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
    const std::size_t batch = logits.shape().n;
    const std::size_t classes = logits.shape().c * logits.shape().h * logits.shape().w;
    if (labels.size() != batch) {
        throw std::invalid_argument("cross_entropy: one label per sample required");
    }
    LossResult r{0.0, Tensor(logits.shape())};
    const double inv_batch = 1.0 / static_cast<double>(batch);
    for (std::size_t n = 0; n < batch; ++n) {
        const int label = labels[n];
        if (label < 0 || static_cast<std::size_t>(label) >= classes) {
            throw std::invalid_argument("cross_entropy: label " + std::to_string(label) + " outside [0, " +
                                        std::to_string(classes) + ")");
        }
        const double* z = logits.data().data() + n * classes;
        double* d = r.d_logits.data().data() + n * classes;
        const double zmax = *std::max_element(z, z + classes);
        double denom = 0.0;
        for (std::size_t j = 0; j < classes; ++j) {
            denom += std::exp(z[j] - zmax);
        }
        const double log_denom = std::log(denom);
        r.loss += (log_denom - (z[label] - zmax)) * inv_batch;
        for (std::size_t j = 0; j < classes; ++j) {
            const double p = std::exp(z[j] - zmax - log_denom);
            d[j] = (p - (static_cast<std::size_t>(label) == j ? 1.0 : 0.0)) * inv_batch;
        }
    }
    return r;
}

struct TrainConfig {
    std::size_t epochs = 30;
    std::size_t batch_size = 32;
    double learning_rate = 0.05;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    std::uint64_t seed = 1;
    // Step schedule: lr * gamma^floor(epoch / step_every); step_every == 0 keeps lr constant.
    double step_gamma = 0.1;
    std::size_t step_every = 0;

    [[nodiscard]] double lr_at(std::size_t epoch) const {
        if (step_every == 0) {
            return learning_rate;
        }
        return learning_rate * std::pow(step_gamma, static_cast<double>(epoch / step_every));
    }
};

/// Classical momentum: v <- m v + g + wd theta; theta <- theta - lr v.
/// `epoch` selects the learning rate from the schedule.
inline void sgd_step(Network& net, const std::vector<Tensor>& grads, const TrainConfig& cfg, std::size_t epoch) {
    auto params = net.parameters();
    const auto decay = net.decay_mask();
    if (grads.size() != params.size()) {
        throw std::invalid_argument("sgd_step: gradient count does not match parameters");
    }
    auto& vel = net.velocity();
    if (vel.size() != params.size()) {
        vel.clear();
        for (const Tensor* p : params) {
            vel.emplace_back(p->shape());
        }
    }
    const double lr = cfg.lr_at(epoch);
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& theta = *params[i];
        if (grads[i].shape() != theta.shape()) {
            throw std::invalid_argument("sgd_step: gradient shape mismatch");
        }
        const double wd = decay[i] ? cfg.weight_decay : 0.0;
        for (std::size_t j = 0; j < theta.size(); ++j) {
            vel[i][j] = cfg.momentum * vel[i][j] + grads[i][j] + wd * theta[j];
            theta[j] -= lr * vel[i][j];
        }
    }
}

// ---------------------------------------------------------------------------
// Training driver

struct EpochMetrics {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double test_accuracy = 0.0;
};

struct TrainResult {
    std::vector<EpochMetrics> epochs;  // epochs[0] is the untrained network
    Network network;

    [[nodiscard]] double final_accuracy() const { return epochs.back().test_accuracy; }
};

/// Copies a single-channel image batch into `channels` identical channels.
inline Tensor tile_channels(const Tensor& images, std::size_t channels) {
    const Shape& s = images.shape();
    if (s.c == channels) {
        return images;
    }
    if (s.c != 1) {
        throw std::invalid_argument("can only tile single-channel images");
    }
    Tensor out({s.n, channels, s.h, s.w});
    for (std::size_t n = 0; n < s.n; ++n) {
        for (std::size_t c = 0; c < channels; ++c) {
            std::copy(images.plane(n, 0).begin(), images.plane(n, 0).end(), out.plane(n, c).begin());
        }
    }
    return out;
}

namespace detail {

inline Tensor gather(const Tensor& images, const std::vector<std::size_t>& order, std::size_t begin, std::size_t end) {
    const Shape& s = images.shape();
    Tensor out({end - begin, s.c, s.h, s.w});
    const std::size_t stride = s.c * s.plane();
    for (std::size_t i = begin; i < end; ++i) {
        const auto src = images.data().subspan(order[i] * stride, stride);
        std::copy(src.begin(), src.end(), out.data().begin() + static_cast<std::ptrdiff_t>((i - begin) * stride));
    }
    return out;
}

inline std::vector<int> gather_labels(const std::vector<int>& labels, const std::vector<std::size_t>& order,
                                      std::size_t begin, std::size_t end) {
    std::vector<int> out;
    out.reserve(end - begin);
    for (std::size_t i = begin; i < end; ++i) {
        out.push_back(labels[order[i]]);
    }
    return out;
}

}  // namespace detail

struct Evaluation {
    double loss = 0.0;
    double accuracy = 0.0;
};

/// Batched inference-mode evaluation.
inline Evaluation evaluate(Network& net, const Tensor& images, const std::vector<int>& labels, std::size_t batch_size) {
    const std::size_t n = labels.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Evaluation e;
    std::size_t correct = 0;
    for (std::size_t b = 0; b < n; b += batch_size) {
        const std::size_t end = std::min(n, b + batch_size);
        const Tensor x = detail::gather(images, order, b, end);
        const auto y = detail::gather_labels(labels, order, b, end);
        auto [logits, cache] = forward(net, x, false);
        e.loss += cross_entropy(logits, y).loss * static_cast<double>(end - b);
        const std::size_t classes = logits.shape().c;
        for (std::size_t i = 0; i < end - b; ++i) {
            const double* z = logits.data().data() + i * classes;
            const auto pred = static_cast<int>(std::max_element(z, z + classes) - z);
            correct += pred == y[i] ? 1 : 0;
        }
    }
    e.loss /= static_cast<double>(n);
    e.accuracy = static_cast<double>(correct) / static_cast<double>(n);
    return e;
}

/// Mini-batch SGD with per-epoch shuffling. Images with one channel are
/// tiled to the network's input channel count.
inline TrainResult train_and_eval(const NetworkSpec& spec, const TrainConfig& cfg, const Dataset& train,
                                  const Dataset& test) {
    if (cfg.batch_size == 0) {
        throw std::invalid_argument("batch size must be positive");
    }
    if (train.size() == 0 || test.size() == 0) {
        throw std::invalid_argument("train and test splits must be non-empty");
    }
    Network net = build(spec, cfg.seed);
    const Tensor train_x = tile_channels(train.images, spec.in_channels);
    const Tensor test_x = tile_channels(test.images, spec.in_channels);

    TrainResult result{{}, net};
    const Evaluation init_train = evaluate(net, train_x, train.labels, cfg.batch_size);
    result.epochs.push_back({0, init_train.loss, evaluate(net, test_x, test.labels, cfg.batch_size).accuracy});

    std::mt19937_64 rng(mix_seed({cfg.seed, 0x5EEDull}));
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        std::size_t seen = 0;
        for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), b + cfg.batch_size);
            const Tensor x = detail::gather(train_x, order, b, end);
            const auto y = detail::gather_labels(train.labels, order, b, end);
            auto [logits, cache] = forward(net, x, true);
            auto loss = cross_entropy(logits, y);
            const NetGrads g = backward(net, cache, loss.d_logits);
            sgd_step(net, g.params, cfg, epoch - 1);
            loss_sum += loss.loss * static_cast<double>(end - b);
            seen += end - b;
        }
        result.epochs.push_back(
            {epoch, loss_sum / static_cast<double>(seen), evaluate(net, test_x, test.labels, cfg.batch_size).accuracy});
    }
    result.network = std::move(net);
    return result;
}

inline void write_metrics_csv(std::ostream& os, KernelTag tag, std::uint64_t seed, const TrainResult& r,
                              bool header) {
    if (header) {
        os << "kernel,seed,epoch,train_loss,test_acc\n";
    }
    os.precision(17);
    for (const auto& e : r.epochs) {
        os << to_string(tag) << ',' << seed << ',' << e.epoch << ',' << e.train_loss << ',' << e.test_accuracy << '\n';
    }
}

/// Model dump: one manifest line per layer, each followed by the binary
/// records of that layer's parameters.
inline void write_model(std::ostream& os, const Network& net) {
    os << "evenpad-model " << net.spec().to_string() << '\n';
    const auto& nodes = net.nodes();
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        std::visit(
            [&](const auto& node) {
                using N = std::decay_t<decltype(node)>;
                if constexpr (std::is_same_v<N, ConvNode>) {
                    os << "layer " << i << " conv k=" << node.conv.kernel_size() << " stride=" << node.conv.stride()
                       << " policy=" << to_string(node.conv.policy()) << " tensors=1\n";
                    write_tensor(os, node.conv.weights());
                } else if constexpr (std::is_same_v<N, BatchNormNode>) {
                    os << "layer " << i << " bn tensors=2\n";
                    write_tensor(os, node.gamma);
                    write_tensor(os, node.beta);
                } else if constexpr (std::is_same_v<N, DenseNode>) {
                    os << "layer " << i << " dense tensors=2\n";
                    write_tensor(os, node.weights);
                    write_tensor(os, node.bias);
                } else if constexpr (std::is_same_v<N, ReluNode>) {
                    os << "layer " << i << " relu tensors=0\n";
                } else {
                    os << "layer " << i << " gap tensors=0\n";
                }
            },
            nodes[i]);
    }
}

}  // namespace evenpad
