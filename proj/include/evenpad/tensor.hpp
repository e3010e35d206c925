#pragma once

// Dense NCHW tensor of doubles plus the handful of elementwise and
// reduction operations the rest of the library needs.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <functional>
#include <istream>
#include <ostream>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace evenpad {

struct Shape {
    std::size_t n = 0;
    std::size_t c = 0;
    std::size_t h = 0;
    std::size_t w = 0;

    [[nodiscard]] constexpr std::size_t size() const { return n * c * h * w; }
    [[nodiscard]] constexpr std::size_t plane() const { return h * w; }
    friend constexpr bool operator==(const Shape&, const Shape&) = default;
};

inline std::string to_string(const Shape& s) {
    return "(" + std::to_string(s.n) + "," + std::to_string(s.c) + "," + std::to_string(s.h) + "," +
           std::to_string(s.w) + ")";
}

inline std::ostream& operator<<(std::ostream& os, const Shape& s) { return os << to_string(s); }

class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape, double fill = 0.0) : shape_(checked(shape)), data_(shape.size(), fill) {}

    Tensor(Shape shape, std::vector<double> data) : shape_(checked(shape)), data_(std::move(data)) {
        if (data_.size() != shape_.size()) {
            throw std::invalid_argument("tensor data length " + std::to_string(data_.size()) +
                                        " does not match shape " + to_string(shape_));
        }
    }

    [[nodiscard]] const Shape& shape() const { return shape_; }
    [[nodiscard]] std::size_t size() const { return data_.size(); }
    [[nodiscard]] bool empty() const { return data_.empty(); }

    [[nodiscard]] std::span<double> data() { return data_; }
    [[nodiscard]] std::span<const double> data() const { return data_; }
    [[nodiscard]] const std::vector<double>& values() const { return data_; }

    [[nodiscard]] std::size_t offset(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const {
        return ((n * shape_.c + c) * shape_.h + y) * shape_.w + x;
    }

    [[nodiscard]] std::array<std::size_t, 4> index(std::size_t flat) const {
        const std::size_t x = flat % shape_.w;
        flat /= shape_.w;
        const std::size_t y = flat % shape_.h;
        flat /= shape_.h;
        const std::size_t c = flat % shape_.c;
        return {flat / shape_.c, c, y, x};
    }

    double& operator()(std::size_t n, std::size_t c, std::size_t y, std::size_t x) {
        return data_[offset(n, c, y, x)];
    }
    double operator()(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const {
        return data_[offset(n, c, y, x)];
    }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    /// One (n, c) spatial plane, row-major.
    [[nodiscard]] std::span<double> plane(std::size_t n, std::size_t c) {
        return std::span<double>(data_).subspan(offset(n, c, 0, 0), shape_.plane());
    }
    [[nodiscard]] std::span<const double> plane(std::size_t n, std::size_t c) const {
        return std::span<const double>(data_).subspan(offset(n, c, 0, 0), shape_.plane());
    }

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    static Shape checked(Shape s) {
        if (s.h == 0 || s.w == 0) {
            throw std::invalid_argument("tensor spatial dims must be >= 1, got " + to_string(s));
        }
        return s;
    }

    Shape shape_{};
    std::vector<double> data_;
};

inline Tensor zeros(Shape shape) { return Tensor(shape, 0.0); }

inline Tensor full(Shape shape, double value) { return Tensor(shape, value); }

/// Deterministic normal samples; the same seed always yields the same bits.
inline Tensor random_normal(Shape shape, double mean, double stddev, std::uint64_t seed) {
    if (!(stddev >= 0.0)) {
        throw std::invalid_argument("random_normal: std must be >= 0");
    }
    Tensor t(shape, mean);
    if (stddev == 0.0) {
        return t;
    }
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(mean, stddev);
    for (double& v : t.data()) {
        v = dist(rng);
    }
    return t;
}

namespace detail {

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                                    to_string(b.shape()));
    }
}

template <typename BinaryOp>
Tensor zip(const Tensor& a, const Tensor& b, const char* name, BinaryOp op) {
    require_same_shape(a, b, name);
    Tensor out(a.shape());
    auto o = out.data();
    auto x = a.data();
    auto y = b.data();
    for (std::size_t i = 0; i < o.size(); ++i) {
        o[i] = op(x[i], y[i]);
    }
    return out;
}

}  // namespace detail

template <typename Fn>
Tensor map(const Tensor& a, Fn&& fn) {
    Tensor out(a.shape());
    std::transform(a.data().begin(), a.data().end(), out.data().begin(), std::forward<Fn>(fn));
    return out;
}

inline Tensor add(const Tensor& a, const Tensor& b) { return detail::zip(a, b, "add", std::plus<>{}); }
inline Tensor sub(const Tensor& a, const Tensor& b) { return detail::zip(a, b, "sub", std::minus<>{}); }
inline Tensor mul(const Tensor& a, const Tensor& b) { return detail::zip(a, b, "mul", std::multiplies<>{}); }

inline Tensor scale(const Tensor& a, double s) {
    return map(a, [s](double v) { return v * s; });
}

inline Tensor relu(const Tensor& a) {
    return map(a, [](double v) { return v > 0.0 ? v : 0.0; });
}

/// a += s * b
inline void axpy_inplace(Tensor& a, double s, const Tensor& b) {
    detail::require_same_shape(a, b, "axpy");
    auto x = a.data();
    auto y = b.data();
    for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] += s * y[i];
    }
}

inline double sum(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data()) {
        s += v;
    }
    return s;
}

inline double mean_abs(const Tensor& a) {
    if (a.empty()) {
        return 0.0;
    }
    double s = 0.0;
    for (double v : a.data()) {
        s += std::abs(v);
    }
    return s / static_cast<double>(a.size());
}

inline double dot(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "dot");
    double s = 0.0;
    auto x = a.data();
    auto y = b.data();
    for (std::size_t i = 0; i < x.size(); ++i) {
        s += x[i] * y[i];
    }
    return s;
}

inline double max(const Tensor& a) {
    if (a.empty()) {
        throw std::invalid_argument("max of empty tensor");
    }
    return *std::max_element(a.data().begin(), a.data().end());
}

inline std::size_t argmax(const Tensor& a) {
    if (a.empty()) {
        throw std::invalid_argument("argmax of empty tensor");
    }
    return static_cast<std::size_t>(std::distance(a.data().begin(), std::max_element(a.data().begin(), a.data().end())));
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "max_abs_diff");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        m = std::max(m, std::abs(a[i] - b[i]));
    }
    return m;
}

// Binary format: four little-endian u32 dims (n, c, h, w), then n*c*h*w
// little-endian IEEE-754 doubles.

namespace detail {

template <typename U>
void put_le(std::ostream& os, U value) {
    std::array<char, sizeof(U)> bytes{};
    for (std::size_t i = 0; i < sizeof(U); ++i) {
        bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFFu);
    }
    os.write(bytes.data(), bytes.size());
}

template <typename U>
U get_le(std::istream& is) {
    std::array<unsigned char, sizeof(U)> bytes{};
    is.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
    if (!is) {
        throw std::runtime_error("tensor stream truncated");
    }
    U value = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
        value |= static_cast<U>(bytes[i]) << (8 * i);
    }
    return value;
}

}  // namespace detail

inline void write_tensor(std::ostream& os, const Tensor& t) {
    const Shape& s = t.shape();
    for (std::size_t d : {s.n, s.c, s.h, s.w}) {
        if (d > 0xFFFFFFFFu) {
            throw std::invalid_argument("tensor dim does not fit in u32");
        }
        detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(d));
    }
    for (double v : t.data()) {
        detail::put_le<std::uint64_t>(os, std::bit_cast<std::uint64_t>(v));
    }
    if (!os) {
        throw std::runtime_error("tensor write failed");
    }
}

inline Tensor read_tensor(std::istream& is) {
    Shape s;
    s.n = detail::get_le<std::uint32_t>(is);
    s.c = detail::get_le<std::uint32_t>(is);
    s.h = detail::get_le<std::uint32_t>(is);
    s.w = detail::get_le<std::uint32_t>(is);
    std::vector<double> data(s.size());
    for (double& v : data) {
        v = std::bit_cast<double>(detail::get_le<std::uint64_t>(is));
    }
    return Tensor(s, std::move(data));
}

inline void save_tensor(const std::string& path, const Tensor& t) {
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw std::runtime_error("cannot open " + path + " for writing");
    }
    write_tensor(os, t);
}

inline Tensor load_tensor(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw std::runtime_error("cannot open " + path);
    }
    return read_tensor(is);
}

}  // namespace evenpad
