#pragma once

// Datasets: the synthetic quadrant-blob task and an IDX (MNIST-style)
// reader/writer.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "evenpad/kernels.hpp"
#include "evenpad/tensor.hpp"

namespace evenpad {

enum class Split { Train, Test };

struct Dataset {
    Tensor images;            // (n, 1, h, w)
    std::vector<int> labels;  // length n
    int classes = 0;
    Split split = Split::Train;
    std::uint64_t seed = 0;

    [[nodiscard]] std::size_t size() const { return labels.size(); }
};

struct Normalization {
    double mean = 0.0;
    double stddev = 1.0;
};

inline Normalization fit_normalization(const Tensor& t) {
    const double n = static_cast<double>(t.size());
    const double mean = sum(t) / n;
    double var = 0.0;
    for (double v : t.data()) {
        var += (v - mean) * (v - mean);
    }
    var /= n;
    return {mean, var > 0.0 ? std::sqrt(var) : 1.0};
}

inline void apply_normalization(Tensor& t, const Normalization& norm) {
    for (double& v : t.data()) {
        v = (v - norm.mean) / norm.stddev;
    }
}

// ---------------------------------------------------------------------------
// Quadrant blobs: one Gaussian blob per image; the label is the quadrant
// holding its center (0 top-left, 1 top-right, 2 bottom-left, 3 bottom-right).

struct QuadrantOptions {
    double blob_sigma = 0.08;  // blob std as a fraction of the image size
    double jitter = 1.0;       // 0: blob at the quadrant center, 1: anywhere inside it
};

namespace detail {

inline void require_quadrant_args(std::size_t n, std::size_t size) {
    if (size < 16) {
        throw std::invalid_argument("quadrant images need size >= 16, got " + std::to_string(size));
    }
    if (n < 4) {
        throw std::invalid_argument("quadrant dataset needs n >= 4, got " + std::to_string(n));
    }
}

/// Raw (unstandardized) blobs.
inline Dataset quadrant_raw(std::size_t n, std::size_t size, double noise_std, std::uint64_t stream_seed,
                            const QuadrantOptions& opts) {
    require_quadrant_args(n, size);
    std::mt19937_64 rng(stream_seed);
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
        labels[i] = static_cast<int>(i % 4);
    }
    std::shuffle(labels.begin(), labels.end(), rng);

    const double s = static_cast<double>(size);
    const double half_quadrant = s / 4.0 - 0.5;  // keeps the center inside its quadrant
    const double sigma = opts.blob_sigma * s;
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::normal_distribution<double> noise(0.0, 1.0);

    Tensor images({n, 1, size, size});
    for (std::size_t i = 0; i < n; ++i) {
        const int q = labels[i];
        const double base_y = (q / 2 == 0 ? 0.0 : s / 2.0) + (s / 2.0 - 1.0) / 2.0;
        const double base_x = (q % 2 == 0 ? 0.0 : s / 2.0) + (s / 2.0 - 1.0) / 2.0;
        const double cy = base_y + opts.jitter * half_quadrant * unit(rng);
        const double cx = base_x + opts.jitter * half_quadrant * unit(rng);
        auto plane = images.plane(i, 0);
        for (std::size_t y = 0; y < size; ++y) {
            for (std::size_t x = 0; x < size; ++x) {
                const double ry = static_cast<double>(y) - cy;
                const double rx = static_cast<double>(x) - cx;
                double v = std::exp(-(ry * ry + rx * rx) / (2.0 * sigma * sigma));
                if (noise_std > 0.0) {
                    v += noise_std * noise(rng);
                }
                plane[y * size + x] = v;
            }
        }
    }
    return {std::move(images), std::move(labels), 4, Split::Train, stream_seed};
}

}  // namespace detail

/// A standardized training split.
inline Dataset gen_quadrant_blobs(std::size_t n, std::size_t size, double noise_std, std::uint64_t seed,
                                  const QuadrantOptions& opts = {}) {
    Dataset d = detail::quadrant_raw(n, size, noise_std, mix_seed({seed, 0}), opts);
    apply_normalization(d.images, fit_normalization(d.images));
    d.seed = seed;
    return d;
}

struct TaskSplits {
    Dataset train;
    Dataset test;
    Normalization norm;  // fitted on train, applied to both
};

inline TaskSplits make_quadrant_task(std::size_t n_train, std::size_t n_test, std::size_t size, double noise_std,
                                     std::uint64_t seed, const QuadrantOptions& opts = {}) {
    TaskSplits t{detail::quadrant_raw(n_train, size, noise_std, mix_seed({seed, 0}), opts),
                 detail::quadrant_raw(n_test, size, noise_std, mix_seed({seed, 1}), opts), {}};
    t.norm = fit_normalization(t.train.images);
    apply_normalization(t.train.images, t.norm);
    apply_normalization(t.test.images, t.norm);
    t.train.seed = t.test.seed = seed;
    t.test.split = Split::Test;
    return t;
}

// ---------------------------------------------------------------------------
// IDX files: big-endian magic and dims, unsigned byte payload.

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

struct IdxImages {
    std::uint32_t count = 0;
    std::uint32_t rows = 0;
    std::uint32_t cols = 0;
    std::vector<std::uint8_t> pixels;  // count * rows * cols

    friend bool operator==(const IdxImages&, const IdxImages&) = default;
};

namespace detail {

inline std::uint32_t read_be32(std::istream& is, const char* what) {
    std::array<unsigned char, 4> b{};
    is.read(reinterpret_cast<char*>(b.data()), 4);
    if (!is) {
        throw std::runtime_error(std::string("idx: truncated header in ") + what);
    }
    return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | std::uint32_t{b[3]};
}

inline void write_be32(std::ostream& os, std::uint32_t v) {
    const std::array<char, 4> b{static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                                static_cast<char>(v)};
    os.write(b.data(), 4);
}

inline std::vector<std::uint8_t> read_payload(std::istream& is, std::size_t bytes, const char* what) {
    std::vector<std::uint8_t> out(bytes);
    is.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(bytes));
    if (static_cast<std::size_t>(is.gcount()) != bytes) {
        throw std::runtime_error(std::string("idx: truncated payload in ") + what);
    }
    return out;
}

}  // namespace detail

inline IdxImages read_idx_images(std::istream& is) {
    const auto magic = detail::read_be32(is, "images");
    if (magic != kIdxImagesMagic) {
        throw std::runtime_error("idx: bad images magic");
    }
    IdxImages img;
    img.count = detail::read_be32(is, "images");
    img.rows = detail::read_be32(is, "images");
    img.cols = detail::read_be32(is, "images");
    img.pixels = detail::read_payload(is, std::size_t{img.count} * img.rows * img.cols, "images");
    return img;
}

inline std::vector<std::uint8_t> read_idx_labels(std::istream& is) {
    const auto magic = detail::read_be32(is, "labels");
    if (magic != kIdxLabelsMagic) {
        throw std::runtime_error("idx: bad labels magic");
    }
    const auto count = detail::read_be32(is, "labels");
    return detail::read_payload(is, count, "labels");
}

inline void write_idx_images(std::ostream& os, const IdxImages& img) {
    if (img.pixels.size() != std::size_t{img.count} * img.rows * img.cols) {
        throw std::invalid_argument("idx: pixel count does not match dims");
    }
    detail::write_be32(os, kIdxImagesMagic);
    detail::write_be32(os, img.count);
    detail::write_be32(os, img.rows);
    detail::write_be32(os, img.cols);
    os.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
}

inline void write_idx_labels(std::ostream& os, const std::vector<std::uint8_t>& labels) {
    detail::write_be32(os, kIdxLabelsMagic);
    detail::write_be32(os, static_cast<std::uint32_t>(labels.size()));
    os.write(reinterpret_cast<const char*>(labels.data()), static_cast<std::streamsize>(labels.size()));
}

/// Pixels scaled to [0, 1], then standardized with their own statistics.
inline Dataset dataset_from_idx(const IdxImages& img, const std::vector<std::uint8_t>& labels) {
    if (labels.size() != img.count) {
        throw std::runtime_error("idx: " + std::to_string(img.count) + " images but " + std::to_string(labels.size()) +
                                 " labels");
    }
    if (img.count == 0 || img.rows == 0 || img.cols == 0) {
        throw std::runtime_error("idx: empty image set");
    }
    Tensor t({img.count, 1, img.rows, img.cols});
    for (std::size_t i = 0; i < img.pixels.size(); ++i) {
        t[i] = static_cast<double>(img.pixels[i]) / 255.0;
    }
    apply_normalization(t, fit_normalization(t));
    Dataset d{std::move(t), {}, 0, Split::Train, 0};
    d.labels.assign(labels.begin(), labels.end());
    d.classes = *std::max_element(d.labels.begin(), d.labels.end()) + 1;
    return d;
}

inline Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream is(images_path, std::ios::binary);
    if (!is) {
        throw std::runtime_error("cannot open " + images_path);
    }
    std::ifstream ls(labels_path, std::ios::binary);
    if (!ls) {
        throw std::runtime_error("cannot open " + labels_path);
    }
    const auto img = read_idx_images(is);
    const auto labels = read_idx_labels(ls);
    return dataset_from_idx(img, labels);
}

}  // namespace evenpad
