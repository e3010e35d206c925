#pragma once

// Kernel tags (C2, C2sp, C3, ...) and He-normal weight initialization.

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "evenpad/padding.hpp"
#include "evenpad/tensor.hpp"

namespace evenpad {

enum class KernelTag : std::uint8_t { C1, C2, C2sp, C3, C4, C4sp, C5 };

inline constexpr std::array<KernelTag, 7> kKernelTags{KernelTag::C1, KernelTag::C2,   KernelTag::C2sp, KernelTag::C3,
                                                      KernelTag::C4, KernelTag::C4sp, KernelTag::C5};

inline constexpr std::string_view to_string(KernelTag t) {
    switch (t) {
        case KernelTag::C1: return "C1";
        case KernelTag::C2: return "C2";
        case KernelTag::C2sp: return "C2sp";
        case KernelTag::C3: return "C3";
        case KernelTag::C4: return "C4";
        case KernelTag::C4sp: return "C4sp";
        case KernelTag::C5: return "C5";
    }
    return "?";
}

inline KernelTag parse_kernel_tag(std::string_view s) {
    for (KernelTag t : kKernelTags) {
        if (s == to_string(t)) {
            return t;
        }
    }
    throw std::invalid_argument("unknown kernel tag '" + std::string(s) + "'");
}

inline std::vector<KernelTag> parse_kernel_tags(std::string_view list) {
    std::vector<KernelTag> tags;
    std::size_t start = 0;
    while (start <= list.size()) {
        const auto comma = list.find(',', start);
        const auto end = comma == std::string_view::npos ? list.size() : comma;
        if (end > start) {
            tags.push_back(parse_kernel_tag(list.substr(start, end - start)));
        }
        if (comma == std::string_view::npos) {
            break;
        }
        start = comma + 1;
    }
    return tags;
}

inline constexpr int kernel_size(KernelTag t) {
    switch (t) {
        case KernelTag::C1: return 1;
        case KernelTag::C2:
        case KernelTag::C2sp: return 2;
        case KernelTag::C3: return 3;
        case KernelTag::C4:
        case KernelTag::C4sp: return 4;
        case KernelTag::C5: return 5;
    }
    return 0;
}

inline constexpr bool is_grouped(KernelTag t) { return t == KernelTag::C2sp || t == KernelTag::C4sp; }

/// Plain even tags use a single corner; OriginLT unless overridden.
inline PaddingPolicy default_policy(KernelTag t, Direction even_direction = Direction::OriginLT) {
    if (is_grouped(t)) {
        return GroupedSymmetric{};
    }
    if (kernel_size(t) % 2 == 0) {
        return Asymmetric{even_direction};
    }
    return SymmetricOdd{};
}

inline double he_std(std::size_t fan_in) { return std::sqrt(2.0 / static_cast<double>(fan_in)); }

/// (c_out, c_in, k, k) weights with std sqrt(2 / (c_in k^2)).
inline Tensor he_normal_conv(std::size_t c_out, std::size_t c_in, int k, std::uint64_t seed) {
    const auto ks = static_cast<std::size_t>(k);
    return random_normal({c_out, c_in, ks, ks}, 0.0, he_std(c_in * ks * ks), seed);
}

/// Mixes several integers into one 64-bit seed (splitmix64 finalizer).
inline std::uint64_t mix_seed(std::initializer_list<std::uint64_t> parts) {
    std::uint64_t h = 0x9E3779B97F4A7C15ull;
    for (std::uint64_t p : parts) {
        std::uint64_t z = h ^ (p + 0x9E3779B97F4A7C15ull + (h << 6) + (h >> 2));
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        h = z ^ (z >> 31);
    }
    return h;
}

}  // namespace evenpad
