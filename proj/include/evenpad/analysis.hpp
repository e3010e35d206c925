#pragma once

// Diagnostics for padding-induced drift: the information quantity Q (mean
// L1 norm of a feature map), |FM| centroids, the erosion experiment over
// deep untrained conv stacks, the shift experiment on a delta input, and
// PGM heatmap export.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <fstream>
#include <numeric>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "evenpad/conv.hpp"
#include "evenpad/kernels.hpp"
#include "evenpad/padding.hpp"
#include "evenpad/tensor.hpp"

namespace evenpad {

/// Mean |F| over every element: the per-map spatial mean, averaged over
/// batch and channels.
inline double information_quantity(const Tensor& f) { return mean_abs(f); }

/// Channel- and batch-mean of |F| as an h x w map.
inline std::vector<double> abs_mass_map(const Tensor& f) {
    const Shape& s = f.shape();
    std::vector<double> m(s.plane(), 0.0);
    for (std::size_t n = 0; n < s.n; ++n) {
        for (std::size_t c = 0; c < s.c; ++c) {
            const auto p = f.plane(n, c);
            for (std::size_t i = 0; i < m.size(); ++i) {
                m[i] += std::abs(p[i]);
            }
        }
    }
    const double planes = static_cast<double>(s.n * s.c);
    if (planes > 0) {
        for (double& v : m) {
            v /= planes;
        }
    }
    return m;
}

struct Centroid {
    double y = 0.0;
    double x = 0.0;
};

/// |value|-weighted center of the channel-mean map.
inline Centroid centroid(const Tensor& f) {
    const Shape& s = f.shape();
    const auto m = abs_mass_map(f);
    double total = 0.0, sy = 0.0, sx = 0.0;
    for (std::size_t y = 0; y < s.h; ++y) {
        for (std::size_t x = 0; x < s.w; ++x) {
            const double v = m[y * s.w + x];
            total += v;
            sy += v * static_cast<double>(y);
            sx += v * static_cast<double>(x);
        }
    }
    if (!(total > 0.0)) {
        throw std::invalid_argument("centroid of an all-zero feature map is undefined");
    }
    return {sy / total, sx / total};
}

/// Fraction of |FM| mass in the top-left quadrant. A center row or column
/// (odd extent) counts half toward each side.
inline double top_left_mass_fraction(const Tensor& f) {
    const Shape& s = f.shape();
    const auto m = abs_mass_map(f);
    auto side_weight = [](std::size_t i, std::size_t extent) {
        const double twice = 2.0 * static_cast<double>(i);
        const double mid = static_cast<double>(extent - 1);
        return twice < mid ? 1.0 : (twice == mid ? 0.5 : 0.0);
    };
    double total = 0.0, tl = 0.0;
    for (std::size_t y = 0; y < s.h; ++y) {
        for (std::size_t x = 0; x < s.w; ++x) {
            const double v = m[y * s.w + x];
            total += v;
            tl += v * side_weight(y, s.h) * side_weight(x, s.w);
        }
    }
    if (!(total > 0.0)) {
        throw std::invalid_argument("quadrant mass of an all-zero feature map is undefined");
    }
    return tl / total;
}

// ---------------------------------------------------------------------------
// Heatmaps

/// Channel-mean |F| scaled so the maximum maps to 255.
inline std::vector<std::uint8_t> heatmap_pixels(const Tensor& f) {
    const auto m = abs_mass_map(f);
    const double peak = *std::max_element(m.begin(), m.end());
    if (!(peak > 0.0)) {
        throw std::invalid_argument("heatmap of an all-zero feature map");
    }
    std::vector<std::uint8_t> px(m.size());
    for (std::size_t i = 0; i < m.size(); ++i) {
        px[i] = static_cast<std::uint8_t>(std::lround(255.0 * m[i] / peak));
    }
    return px;
}

inline void write_pgm(std::ostream& os, std::size_t h, std::size_t w, const std::vector<std::uint8_t>& px) {
    os << "P5\n" << w << ' ' << h << "\n255\n";
    os.write(reinterpret_cast<const char*>(px.data()), static_cast<std::streamsize>(px.size()));
}

inline void export_heatmap(const Tensor& f, const std::string& path) {
    const auto px = heatmap_pixels(f);
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw std::runtime_error("cannot open " + path + " for writing");
    }
    write_pgm(os, f.shape().h, f.shape().w, px);
    if (!os) {
        throw std::runtime_error("failed writing " + path);
    }
}

// ---------------------------------------------------------------------------
// Erosion experiment

namespace detail {

/// Rescales to zero mean and unit variance over the whole tensor.
inline void standardize_inplace(Tensor& t) {
    const double n = static_cast<double>(t.size());
    const double mean = sum(t) / n;
    double var = 0.0;
    for (double v : t.data()) {
        var += (v - mean) * (v - mean);
    }
    var /= n;
    const double inv = var > 0.0 ? 1.0 / std::sqrt(var) : 1.0;
    for (double& v : t.data()) {
        v = (v - mean) * inv;
    }
}

/// Runs fn(i) for i in [0, count) on up to `threads` workers. Each index is
/// independent, so the result does not depend on the thread count.
template <typename Fn>
void parallel_for(std::size_t count, unsigned threads, Fn&& fn) {
    const unsigned workers = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(count)));
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) {
            fn(i);
        }
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned t = 0; t < workers; ++t) {
        pool.emplace_back([&, t] {
            try {
                for (std::size_t i = next++; i < count; i = next++) {
                    fn(i);
                }
            } catch (...) {
                errors[t] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) {
        th.join();
    }
    for (auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
}

}  // namespace detail

struct ErosionConfig {
    std::vector<KernelTag> kernels{KernelTag::C2, KernelTag::C2sp, KernelTag::C3,
                                   KernelTag::C4, KernelTag::C4sp, KernelTag::C5};
    std::size_t depth = 54;
    std::size_t width = 16;       // channels of the first stage; doubled at each down-sample
    std::size_t input_size = 32;
    std::size_t input_channels = 0;  // 0: same as width
    std::size_t batch = 256;
    std::vector<std::uint64_t> seeds = default_seeds(20);
    bool relu = true;
    bool post_relu = true;  // measure Q after the activation
    std::vector<std::size_t> downsample_after{18, 36};
    unsigned threads = 1;
    std::optional<Tensor> input;  // replaces the random input when set

    static std::vector<std::uint64_t> default_seeds(std::size_t count) {
        std::vector<std::uint64_t> s(count);
        std::iota(s.begin(), s.end(), std::uint64_t{1});
        return s;
    }

    [[nodiscard]] std::size_t resolved_input_channels() const { return input_channels == 0 ? width : input_channels; }
};

struct ErosionRecord {
    KernelTag tag = KernelTag::C3;
    std::uint64_t seed = 0;
    double input_q = 0.0;
    std::vector<std::pair<std::size_t, double>> layers;  // (layer index, Q)
};

struct ErosionReport {
    ErosionConfig config;
    std::vector<ErosionRecord> records;  // kernel-major, then seed

    /// Q of every seed for one tag at one layer, in seed order.
    [[nodiscard]] std::vector<double> q_values(KernelTag tag, std::size_t layer) const {
        std::vector<double> out;
        for (const auto& r : records) {
            if (r.tag != tag) {
                continue;
            }
            for (const auto& [l, q] : r.layers) {
                if (l == layer) {
                    out.push_back(q);
                }
            }
        }
        return out;
    }

    [[nodiscard]] double mean_q(KernelTag tag, std::size_t layer) const {
        const auto v = q_values(tag, layer);
        if (v.empty()) {
            throw std::invalid_argument("no Q values for " + std::string(to_string(tag)) + " at layer " +
                                        std::to_string(layer));
        }
        return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    }

    void write_csv(std::ostream& os) const {
        os << "tag,seed,layer,q\n";
        os.precision(17);
        for (const auto& r : records) {
            for (const auto& [l, q] : r.layers) {
                os << to_string(r.tag) << ',' << r.seed << ',' << l << ',' << q << '\n';
            }
        }
    }
};

/// Channels after `layer` (1-based) in the plain stack.
inline std::size_t erosion_channels(const ErosionConfig& cfg, std::size_t layer) {
    std::size_t c = cfg.width;
    for (std::size_t d : cfg.downsample_after) {
        if (layer > d) {
            c *= 2;
        }
    }
    return c;
}

inline Tensor erosion_input(const ErosionConfig& cfg, std::uint64_t seed) {
    const std::size_t c = cfg.resolved_input_channels();
    if (cfg.input) {
        const Shape& s = cfg.input->shape();
        Tensor x;
        if (s.c == c) {
            x = *cfg.input;
        } else if (s.c == 1) {
            x = Tensor({s.n, c, s.h, s.w});
            for (std::size_t n = 0; n < s.n; ++n) {
                for (std::size_t ch = 0; ch < c; ++ch) {
                    std::copy(cfg.input->plane(n, 0).begin(), cfg.input->plane(n, 0).end(), x.plane(n, ch).begin());
                }
            }
        } else {
            throw std::invalid_argument("erosion input has " + std::to_string(s.c) + " channels, expected 1 or " +
                                        std::to_string(c));
        }
        detail::standardize_inplace(x);
        return x;
    }
    Tensor x = random_normal({cfg.batch, c, cfg.input_size, cfg.input_size}, 0.0, 1.0, mix_seed({seed, 0xE205ull}));
    detail::standardize_inplace(x);
    return x;
}

/// One (kernel, seed) cell. Weights depend on (seed, kernel size, layer)
/// only, so C2 and C2sp (and C4 and C4sp) see identical weights.
inline ErosionRecord run_erosion_cell(const ErosionConfig& cfg, KernelTag tag, std::uint64_t seed) {
    ErosionRecord rec{tag, seed, 0.0, {}};
    Tensor x = erosion_input(cfg, seed);
    rec.input_q = information_quantity(x);
    if (cfg.depth == 0) {
        rec.layers.emplace_back(0, rec.input_q);
        return rec;
    }
    const int k = kernel_size(tag);
    const PaddingPolicy policy = default_policy(tag);
    for (std::size_t layer = 1; layer <= cfg.depth; ++layer) {
        const std::size_t c_in = x.shape().c;
        const std::size_t c_out = erosion_channels(cfg, layer);
        const bool down = std::find(cfg.downsample_after.begin(), cfg.downsample_after.end(), layer - 1) !=
                          cfg.downsample_after.end();
        ConvLayer conv(he_normal_conv(c_out, c_in, k, mix_seed({seed, static_cast<std::uint64_t>(k), layer})), policy,
                       down ? 2 : 1);
        x = conv2d_forward(x, conv);
        double q = information_quantity(x);
        if (cfg.relu) {
            x = relu(x);
            if (cfg.post_relu) {
                q = information_quantity(x);
            }
        }
        rec.layers.emplace_back(layer, q);
    }
    return rec;
}

inline void validate(const ErosionConfig& cfg) {
    if (cfg.kernels.empty()) {
        throw std::invalid_argument("erosion: no kernel tags given");
    }
    if (cfg.width == 0 || cfg.input_size == 0 || cfg.batch == 0) {
        throw std::invalid_argument("erosion: width, input size and batch must be positive");
    }
    const bool grouped = std::any_of(cfg.kernels.begin(), cfg.kernels.end(), is_grouped);
    if (grouped && (cfg.width % 4 != 0 || cfg.resolved_input_channels() % 4 != 0)) {
        throw std::invalid_argument("erosion: grouped padding tags need width and input channels divisible by 4");
    }
    for (std::size_t i = 1; i < cfg.downsample_after.size(); ++i) {
        if (cfg.downsample_after[i] <= cfg.downsample_after[i - 1]) {
            throw std::invalid_argument("erosion: down-sample layers must be strictly increasing");
        }
    }
}

inline ErosionReport run_erosion(const ErosionConfig& cfg) {
    validate(cfg);
    ErosionReport report{cfg, {}};
    const std::size_t cells = cfg.kernels.size() * cfg.seeds.size();
    report.records.resize(cells);
    detail::parallel_for(cells, cfg.threads, [&](std::size_t i) {
        const KernelTag tag = cfg.kernels[i / cfg.seeds.size()];
        const std::uint64_t seed = cfg.seeds[i % cfg.seeds.size()];
        report.records[i] = run_erosion_cell(cfg, tag, seed);
    });
    return report;
}

/// True when Q strictly decreases from the input through every layer.
inline bool strictly_decreasing(const ErosionRecord& r) {
    double prev = r.input_q;
    for (const auto& [layer, q] : r.layers) {
        if (layer == 0) {
            continue;
        }
        if (!(q < prev)) {
            return false;
        }
        prev = q;
    }
    return true;
}

struct GapCheck {
    KernelTag higher;
    KernelTag lower;
    double mean_gap = 0.0;
    double standard_error = 0.0;  // of the per-seed paired gap
    [[nodiscard]] bool passed() const { return mean_gap > 2.0 * standard_error; }
};

/// Paired (same seed, same input) comparison of Q at one layer.
inline GapCheck compare_q(const ErosionReport& report, KernelTag higher, KernelTag lower, std::size_t layer) {
    const auto a = report.q_values(higher, layer);
    const auto b = report.q_values(lower, layer);
    if (a.empty() || a.size() != b.size()) {
        throw std::invalid_argument("compare_q: tags must both be present with equal seed counts");
    }
    const auto n = static_cast<double>(a.size());
    std::vector<double> gaps(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        gaps[i] = a[i] - b[i];
    }
    const double mean = std::accumulate(gaps.begin(), gaps.end(), 0.0) / n;
    double ss = 0.0;
    for (double g : gaps) {
        ss += (g - mean) * (g - mean);
    }
    const double se = a.size() > 1 ? std::sqrt(ss / (n - 1.0)) / std::sqrt(n) : 0.0;
    return {higher, lower, mean, se};
}

/// The qualitative ordering at `layer`: C2sp > C3 > C2 and C4sp > C4, each
/// restricted to the tags present in the report.
inline std::vector<GapCheck> erosion_ordering(const ErosionReport& report, std::size_t layer) {
    const auto& tags = report.config.kernels;
    auto has = [&](KernelTag t) { return std::find(tags.begin(), tags.end(), t) != tags.end(); };
    std::vector<GapCheck> checks;
    const std::pair<KernelTag, KernelTag> pairs[] = {{KernelTag::C2sp, KernelTag::C3},
                                                     {KernelTag::C3, KernelTag::C2},
                                                     {KernelTag::C4sp, KernelTag::C4}};
    for (const auto& [hi, lo] : pairs) {
        if (has(hi) && has(lo)) {
            checks.push_back(compare_q(report, hi, lo, layer));
        }
    }
    // Without C3 in the report the C2 pair is compared directly.
    if (!has(KernelTag::C3) && has(KernelTag::C2sp) && has(KernelTag::C2)) {
        checks.push_back(compare_q(report, KernelTag::C2sp, KernelTag::C2, layer));
    }
    return checks;
}

// ---------------------------------------------------------------------------
// Shift experiment

enum class KernelContent { Uniform, Random };

struct ShiftConfig {
    KernelTag kernel = KernelTag::C2;
    Direction direction = Direction::OriginLT;  // plain even kernels only
    std::size_t depth = 16;
    std::size_t size = 65;
    std::size_t channels = 4;
    KernelContent content = KernelContent::Uniform;
    bool relu = true;
    std::uint64_t seed = 1;
    std::optional<Tensor> input;  // default: unit delta at the center of every channel
};

struct ShiftStep {
    std::size_t layer = 0;
    Centroid c;
    double dy = 0.0;
    double dx = 0.0;
};

struct ShiftReport {
    ShiftConfig config;
    std::vector<ShiftStep> steps;  // steps[0] is the input
    bool truncated = false;        // an intermediate map vanished
    Centroid predicted;            // drift law for the whole stack
    Tensor final_map;

    [[nodiscard]] Centroid final_displacement() const { return {steps.back().dy, steps.back().dx}; }

    void write_csv(std::ostream& os) const {
        os << "tag,seed,layer,cy,cx,dy,dx\n";
        os.precision(17);
        for (const auto& s : steps) {
            os << to_string(config.kernel) << ',' << config.seed << ',' << s.layer << ',' << s.c.y << ',' << s.c.x
               << ',' << s.dy << ',' << s.dx << '\n';
        }
    }
};

/// Centroid drift of one layer: the negated mean receptive-field offset.
inline Centroid per_layer_drift(KernelTag tag, Direction d) {
    const int k = kernel_size(tag);
    if (is_grouped(tag) || k % 2 == 1) {
        return {0.0, 0.0};
    }
    const auto [my, mx] = offsets(k, d).mean();
    return {-my, -mx};
}

inline Tensor delta_input(std::size_t channels, std::size_t size) {
    Tensor x({1, channels, size, size});
    for (std::size_t c = 0; c < channels; ++c) {
        x(0, c, size / 2, size / 2) = 1.0;
    }
    return x;
}

inline ShiftReport run_shift(const ShiftConfig& cfg) {
    if (is_grouped(cfg.kernel) && cfg.channels % 4 != 0) {
        throw std::invalid_argument("shift: grouped padding needs channels divisible by 4");
    }
    const int k = kernel_size(cfg.kernel);
    const PaddingPolicy policy = default_policy(cfg.kernel, cfg.direction);
    ShiftReport report{cfg, {}, false, {}, {}};
    const Centroid drift = per_layer_drift(cfg.kernel, cfg.direction);
    report.predicted = {drift.y * static_cast<double>(cfg.depth), drift.x * static_cast<double>(cfg.depth)};

    Tensor x = cfg.input ? *cfg.input : delta_input(cfg.channels, cfg.size);
    const Centroid origin = centroid(x);
    report.steps.push_back({0, origin, 0.0, 0.0});
    const auto ks = static_cast<std::size_t>(k);
    for (std::size_t layer = 1; layer <= cfg.depth; ++layer) {
        const std::size_t c = x.shape().c;
        Tensor w = cfg.content == KernelContent::Uniform
                       ? full({cfg.channels, c, ks, ks}, 1.0 / static_cast<double>(c * ks * ks))
                       : he_normal_conv(cfg.channels, c, k, mix_seed({cfg.seed, static_cast<std::uint64_t>(k), layer}));
        x = conv2d_forward(x, ConvLayer(std::move(w), policy));
        if (cfg.relu) {
            x = relu(x);
        }
        if (!(mean_abs(x) > 0.0)) {
            report.truncated = true;
            break;
        }
        const Centroid cc = centroid(x);
        report.steps.push_back({layer, cc, cc.y - origin.y, cc.x - origin.x});
    }
    report.final_map = std::move(x);
    return report;
}

}  // namespace evenpad
