#pragma once

// Receptive-field geometry for odd and even kernels: kappa, offset sets,
// per-side zero padding and the channel-to-direction assignment used by
// grouped symmetric padding.
//
// Axis convention: dy grows downward, dx grows rightward. Offset (dy, dx)
// of output pixel (y, x) reads input pixel (y + dy, x + dx).

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "evenpad/tensor.hpp"

namespace evenpad {

/// Which corner-adjacent pixel acts as the origin of an even kernel.
/// Declaration order is R_0..R_3.
enum class Direction : std::uint8_t {
    OriginLT = 0,  // extra zero on bottom and right
    OriginRT = 1,
    OriginLB = 2,
    OriginRB = 3,  // extra zero on top and left
};

inline constexpr std::array<Direction, 4> kDirections{Direction::OriginLT, Direction::OriginRT, Direction::OriginLB,
                                                      Direction::OriginRB};

inline constexpr std::string_view to_string(Direction d) {
    switch (d) {
        case Direction::OriginLT: return "lt";
        case Direction::OriginRT: return "rt";
        case Direction::OriginLB: return "lb";
        case Direction::OriginRB: return "rb";
    }
    return "?";
}

inline Direction parse_direction(std::string_view s) {
    for (Direction d : kDirections) {
        if (s == to_string(d)) {
            return d;
        }
    }
    throw std::invalid_argument("unknown direction '" + std::string(s) + "' (expected lt, rt, lb or rb)");
}

struct SymmetricOdd {
    friend constexpr bool operator==(SymmetricOdd, SymmetricOdd) = default;
};
struct Asymmetric {
    Direction direction = Direction::OriginLT;
    friend constexpr bool operator==(Asymmetric, Asymmetric) = default;
};
struct GroupedSymmetric {
    friend constexpr bool operator==(GroupedSymmetric, GroupedSymmetric) = default;
};

using PaddingPolicy = std::variant<SymmetricOdd, Asymmetric, GroupedSymmetric>;

inline std::string to_string(const PaddingPolicy& p) {
    if (std::holds_alternative<SymmetricOdd>(p)) {
        return "symmetric";
    }
    if (const auto* a = std::get_if<Asymmetric>(&p)) {
        return "asymmetric-" + std::string(to_string(a->direction));
    }
    return "grouped";
}

inline void require_kernel_size(int k) {
    if (k < 1) {
        throw std::invalid_argument("kernel size must be >= 1, got " + std::to_string(k));
    }
}

/// ceil((k - 1) / 2): how far an odd kernel reaches from its center.
inline int kappa(int k) {
    require_kernel_size(k);
    return k / 2;
}

inline void check_policy_parity(int k, const PaddingPolicy& policy) {
    require_kernel_size(k);
    const bool odd = k % 2 == 1;
    if (std::holds_alternative<SymmetricOdd>(policy) && !odd) {
        throw std::invalid_argument("symmetric padding needs an odd kernel, got k=" + std::to_string(k));
    }
    if (!std::holds_alternative<SymmetricOdd>(policy) && odd) {
        throw std::invalid_argument(to_string(policy) + " padding needs an even kernel, got k=" + std::to_string(k));
    }
}

struct Offset {
    int dy = 0;
    int dx = 0;
    friend constexpr bool operator==(Offset, Offset) = default;
};

/// Inclusive per-axis offset ranges of one receptive field.
struct OffsetRange {
    int y_lo = 0, y_hi = 0;
    int x_lo = 0, x_hi = 0;
};

struct Center {};

inline OffsetRange offset_range(int k, Center) {
    if (k % 2 == 0) {
        throw std::invalid_argument("centered receptive field needs an odd kernel, got k=" + std::to_string(k));
    }
    const int r = kappa(k);
    return {-r, r, -r, r};
}

inline OffsetRange offset_range(int k, Direction d) {
    require_kernel_size(k);
    if (k % 2 != 0) {
        throw std::invalid_argument("shifted receptive field needs an even kernel, got k=" + std::to_string(k));
    }
    const int r = kappa(k);
    // R_0 spans (1-r)..r on both axes; the other corners mirror one or both axes.
    const bool flip_y = d == Direction::OriginLB || d == Direction::OriginRB;
    const bool flip_x = d == Direction::OriginRT || d == Direction::OriginRB;
    OffsetRange range{1 - r, r, 1 - r, r};
    if (flip_y) {
        range.y_lo = -r;
        range.y_hi = r - 1;
    }
    if (flip_x) {
        range.x_lo = -r;
        range.x_hi = r - 1;
    }
    return range;
}

struct OffsetSet {
    int k = 0;
    std::optional<Direction> direction;  // empty for the centered odd set
    std::vector<Offset> offsets;

    /// Exact integer sum of all offsets.
    [[nodiscard]] std::pair<long, long> sum() const {
        long sy = 0, sx = 0;
        for (const Offset& o : offsets) {
            sy += o.dy;
            sx += o.dx;
        }
        return {sy, sx};
    }

    [[nodiscard]] std::pair<double, double> mean() const {
        const auto [sy, sx] = sum();
        const auto n = static_cast<double>(offsets.size());
        return {static_cast<double>(sy) / n, static_cast<double>(sx) / n};
    }
};

namespace detail {

inline OffsetSet enumerate(int k, std::optional<Direction> d, const OffsetRange& r) {
    OffsetSet set{k, d, {}};
    set.offsets.reserve(static_cast<std::size_t>(k) * static_cast<std::size_t>(k));
    for (int dy = r.y_lo; dy <= r.y_hi; ++dy) {
        for (int dx = r.x_lo; dx <= r.x_hi; ++dx) {
            set.offsets.push_back({dy, dx});
        }
    }
    return set;
}

}  // namespace detail

inline OffsetSet offsets(int k, Center c) { return detail::enumerate(k, std::nullopt, offset_range(k, c)); }

inline OffsetSet offsets(int k, Direction d) { return detail::enumerate(k, d, offset_range(k, d)); }

struct PadAmounts {
    int top = 0;
    int bottom = 0;
    int left = 0;
    int right = 0;
    friend constexpr bool operator==(PadAmounts, PadAmounts) = default;
};

inline PadAmounts pad_amounts(const OffsetRange& r) { return {-r.y_lo, r.y_hi, -r.x_lo, r.x_hi}; }

inline PadAmounts pad_amounts(int k, SymmetricOdd) { return pad_amounts(offset_range(k, Center{})); }

inline PadAmounts pad_amounts(int k, Direction d) { return pad_amounts(offset_range(k, d)); }

/// Per-input-channel receptive field direction for grouped symmetric padding.
struct ChannelAssignment {
    std::vector<Direction> directions;
    std::array<std::size_t, 4> counts{};

    [[nodiscard]] std::size_t size() const { return directions.size(); }
    [[nodiscard]] Direction operator[](std::size_t i) const { return directions[i]; }

    /// Sum of every offset over every channel's receptive field; zero for a
    /// balanced assignment.
    [[nodiscard]] std::pair<long, long> offset_sum(int k) const {
        long sy = 0, sx = 0;
        for (Direction d : directions) {
            const auto [y, x] = offsets(k, d).sum();
            sy += y;
            sx += x;
        }
        return {sy, sx};
    }
};

/// Channel i gets R_floor(4i / c_i) (0-based), i.e. four contiguous quarters.
inline ChannelAssignment assign_directions(std::size_t channels) {
    if (channels < 4 || channels % 4 != 0) {
        throw std::invalid_argument("grouped symmetric padding needs input channels divisible by 4, got " +
                                    std::to_string(channels));
    }
    ChannelAssignment a;
    a.directions.reserve(channels);
    for (std::size_t i = 0; i < channels; ++i) {
        const auto group = (4 * i) / channels;
        a.directions.push_back(kDirections[group]);
        ++a.counts[group];
    }
    return a;
}

inline Tensor pad_tensor(const Tensor& x, const PadAmounts& p, double fill = 0.0) {
    if (p.top < 0 || p.bottom < 0 || p.left < 0 || p.right < 0) {
        throw std::invalid_argument("pad amounts must be non-negative");
    }
    const Shape& s = x.shape();
    const auto top = static_cast<std::size_t>(p.top);
    const auto left = static_cast<std::size_t>(p.left);
    Tensor out({s.n, s.c, s.h + top + static_cast<std::size_t>(p.bottom), s.w + left + static_cast<std::size_t>(p.right)},
               fill);
    for (std::size_t n = 0; n < s.n; ++n) {
        for (std::size_t c = 0; c < s.c; ++c) {
            for (std::size_t y = 0; y < s.h; ++y) {
                for (std::size_t xi = 0; xi < s.w; ++xi) {
                    out(n, c, y + top, xi + left) = x(n, c, y, xi);
                }
            }
        }
    }
    return out;
}

}  // namespace evenpad
