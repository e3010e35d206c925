#include <gtest/gtest.h>

#include <random>

#include "evenpad/analysis.hpp"
#include "evenpad/conv.hpp"
#include "evenpad/kernels.hpp"
#include "evenpad/oracle.hpp"
#include "evenpad/verify.hpp"

using namespace evenpad;

namespace {

std::vector<PaddingPolicy> policies_for(int k) {
    if (k % 2 == 1) {
        return {SymmetricOdd{}};
    }
    std::vector<PaddingPolicy> out;
    for (Direction d : kDirections) {
        out.emplace_back(Asymmetric{d});
    }
    out.emplace_back(GroupedSymmetric{});
    return out;
}

ConvLayer random_layer(std::size_t c_out, std::size_t c_in, int k, PaddingPolicy p, std::uint64_t seed,
                       int stride = 1) {
    const auto ks = static_cast<std::size_t>(k);
    return ConvLayer(random_normal({c_out, c_in, ks, ks}, 0.0, 1.0, seed), p, stride);
}

// x shifted by (1, 1) with zeros entering from the top and left.
Tensor shift_down_right(const Tensor& x) {
    const Shape s = x.shape();
    Tensor out(s);
    for (std::size_t n = 0; n < s.n; ++n) {
        for (std::size_t c = 0; c < s.c; ++c) {
            for (std::size_t y = 0; y + 1 < s.h; ++y) {
                for (std::size_t xx = 0; xx + 1 < s.w; ++xx) {
                    out(n, c, y + 1, xx + 1) = x(n, c, y, xx);
                }
            }
        }
    }
    return out;
}

}  // namespace

TEST(Conv, OneByOneIdentity) {
    const Tensor x = random_normal({2, 3, 5, 4}, 0.0, 1.0, 1);
    Tensor w({3, 3, 1, 1});
    for (std::size_t i = 0; i < 3; ++i) {
        w(i, i, 0, 0) = 1.0;
    }
    EXPECT_EQ(conv2d_forward(x, ConvLayer(w, SymmetricOdd{})).values(), x.values());
}

TEST(Conv, GroupedK2MatchesOracle) {
    std::mt19937_64 rng(5);
    for (int i = 0; i < 20; ++i) {
        const OracleCase c = run_oracle_case({2, GroupedSymmetric{}, 1}, rng);
        EXPECT_LE(c.max_abs_diff, 1e-12);
    }
}

TEST(Conv, SymmetricK3MatchesOracle) {
    std::mt19937_64 rng(6);
    for (int i = 0; i < 20; ++i) {
        EXPECT_LE(run_oracle_case({3, SymmetricOdd{}, 1}, rng).max_abs_diff, 1e-12);
    }
}

TEST(Conv, AsymmetricMatchesOracleForAllDirections) {
    std::mt19937_64 rng(7);
    for (int k : {2, 4}) {
        for (Direction d : kDirections) {
            for (int s : {1, 2}) {
                for (int i = 0; i < 10; ++i) {
                    EXPECT_LE(run_oracle_case({k, Asymmetric{d}, s}, rng).max_abs_diff, 1e-12);
                }
            }
        }
    }
}

TEST(Conv, OracleZeroWeightsGiveZero) {
    const Tensor x = random_normal({1, 4, 6, 6}, 0.0, 1.0, 2);
    const Tensor y = naive_oracle_conv(x, zeros({3, 4, 2, 2}), std::vector<PadAmounts>(4, {0, 1, 0, 1}), 1);
    EXPECT_EQ(y.shape(), (Shape{1, 3, 6, 6}));
    EXPECT_EQ(mean_abs(y), 0.0);
}

TEST(Conv, DeltaDriftsHalfPixelPerLayer) {
    Tensor x({1, 1, 9, 9});
    x(0, 0, 4, 4) = 1.0;
    const Tensor y = conv2d_forward(x, ConvLayer(full({1, 1, 2, 2}, 0.25), Asymmetric{Direction::OriginLT}));
    const Centroid a = centroid(x), b = centroid(y);
    EXPECT_NEAR(b.y - a.y, -0.5, 1e-12);
    EXPECT_NEAR(b.x - a.x, -0.5, 1e-12);
}

TEST(Conv, StrideTwoGeometry) {
    for (std::size_t h : {1u, 2u, 5u, 8u, 9u}) {
        for (int k = 1; k <= 5; ++k) {
            for (const auto& p : policies_for(k)) {
                const ConvLayer l = random_layer(2, 4, k, p, 3, 2);
                const Tensor y = conv2d_forward(random_normal({1, 4, h, h + 1}, 0.0, 1.0, 4), l);
                EXPECT_EQ(y.shape(), (Shape{1, 2, (h - 1) / 2 + 1, h / 2 + 1}));
            }
        }
    }
}

TEST(Conv, LayerValidation) {
    EXPECT_THROW(ConvLayer(zeros({1, 1, 2, 3}), Asymmetric{}), std::invalid_argument);
    EXPECT_THROW(ConvLayer(zeros({1, 1, 2, 2}), SymmetricOdd{}), std::invalid_argument);
    EXPECT_THROW(ConvLayer(zeros({1, 1, 3, 3}), GroupedSymmetric{}), std::invalid_argument);
    EXPECT_THROW(ConvLayer(zeros({1, 6, 2, 2}), GroupedSymmetric{}), std::invalid_argument);
    EXPECT_THROW(ConvLayer(zeros({1, 1, 3, 3}), SymmetricOdd{}, 3), std::invalid_argument);
    EXPECT_THROW(ConvLayer(zeros({2, 1, 3, 3}), SymmetricOdd{}, 1, std::vector<double>{1.0}), std::invalid_argument);
    const ConvLayer l(zeros({2, 1, 3, 3}), SymmetricOdd{});
    EXPECT_THROW(conv2d_forward(zeros({1, 2, 4, 4}), l), std::invalid_argument);
    EXPECT_THROW(conv2d_backward(zeros({1, 1, 4, 4}), l, zeros({1, 2, 4, 5})), std::invalid_argument);
}

TEST(Conv, GroupedLayerRecordsPerChannelPads) {
    const ConvLayer l(zeros({1, 8, 4, 4}), GroupedSymmetric{});
    ASSERT_TRUE(l.assignment());
    for (std::size_t i = 0; i < 8; ++i) {
        EXPECT_EQ(l.channel_pads(i), pad_amounts(4, l.assignment()->directions[i]));
    }
}

TEST(Conv, BiasIsAddedPerOutputChannel) {
    const Tensor x = random_normal({2, 4, 5, 5}, 0.0, 1.0, 8);
    const Tensor w = random_normal({3, 4, 2, 2}, 0.0, 1.0, 9);
    const Tensor plain = conv2d_forward(x, ConvLayer(w, GroupedSymmetric{}));
    const Tensor biased = conv2d_forward(x, ConvLayer(w, GroupedSymmetric{}, 1, std::vector<double>{1.0, -2.0, 0.5}));
    for (std::size_t i = 0; i < plain.size(); ++i) {
        const std::size_t o = plain.index(i)[1];
        EXPECT_NEAR(biased[i] - plain[i], (std::array<double, 3>{1.0, -2.0, 0.5})[o], 1e-12);
    }
}

TEST(ConvBackward, ZeroUpstreamGivesZero) {
    const Tensor x = random_normal({2, 4, 5, 5}, 0.0, 1.0, 10);
    const ConvLayer l(random_normal({3, 4, 2, 2}, 0.0, 1.0, 11), GroupedSymmetric{}, 1, std::vector<double>(3, 0.3));
    const ConvGrads g = conv2d_backward(x, l, zeros(l.output_shape(x.shape())));
    EXPECT_EQ(mean_abs(g.d_input), 0.0);
    EXPECT_EQ(mean_abs(g.d_weights), 0.0);
    ASSERT_TRUE(g.d_bias);
    for (double v : *g.d_bias) {
        EXPECT_EQ(v, 0.0);
    }
}

TEST(ConvBackward, GroupedFiniteDifferences) {
    const Tensor x = random_normal({2, 4, 5, 5}, 0.0, 1.0, 12);
    const ConvLayer l = random_layer(3, 4, 2, GroupedSymmetric{}, 13);
    const GradCheckReport r = check_conv_gradients(x, l, 1e-6, 14);
    EXPECT_LE(r.max_rel_error(), 1e-5);
}

TEST(ConvBackward, FiniteDifferencesEveryPolicy) {
    std::uint64_t seed = 100;
    for (int k = 1; k <= 5; ++k) {
        for (const auto& p : policies_for(k)) {
            for (int s : {1, 2}) {
                seed += 3;
                const Tensor x = random_normal({1, 4, 6, 5}, 0.0, 1.0, seed);
                const GradCheckReport r = check_conv_gradients(x, random_layer(2, 4, k, p, seed + 1, s), 1e-6, seed + 2);
                EXPECT_LE(r.max_rel_error(), 1e-5) << "k=" << k << " " << to_string(p) << " s=" << s;
            }
        }
    }
}

TEST(ConvBackward, BiasGradientIsUpstreamSum) {
    const Tensor x = random_normal({2, 4, 3, 3}, 0.0, 1.0, 15);
    const ConvLayer l(random_normal({2, 4, 2, 2}, 0.0, 1.0, 16), GroupedSymmetric{}, 1, std::vector<double>(2, 0.0));
    const Tensor u = random_normal(l.output_shape(x.shape()), 0.0, 1.0, 17);
    const ConvGrads g = conv2d_backward(x, l, u);
    for (std::size_t o = 0; o < 2; ++o) {
        double s = 0.0;
        for (std::size_t n = 0; n < 2; ++n) {
            for (double v : u.plane(n, o)) {
                s += v;
            }
        }
        EXPECT_NEAR((*g.d_bias)[o], s, 1e-12);
    }
}

TEST(ConvBackward, LinearInUpstream) {
    const Tensor x = random_normal({2, 8, 6, 6}, 0.0, 1.0, 18);
    const ConvLayer l = random_layer(3, 8, 4, GroupedSymmetric{}, 19, 2);
    const Tensor u = random_normal(l.output_shape(x.shape()), 0.0, 1.0, 20);
    const ConvGrads a = conv2d_backward(x, l, u);
    const ConvGrads b = conv2d_backward(x, l, scale(u, 2.0));
    EXPECT_LE(max_abs_diff(b.d_input, scale(a.d_input, 2.0)), 1e-12);
    EXPECT_LE(max_abs_diff(b.d_weights, scale(a.d_weights, 2.0)), 1e-12);
}

// ---------------------------------------------------------------------------

TEST(ConvProperty, StrideOneKeepsSize) {
    for (int k = 1; k <= 5; ++k) {
        for (const auto& p : policies_for(k)) {
            for (std::size_t h : {1u, 2u, 3u, 7u, 10u}) {
                const Tensor y = conv2d_forward(random_normal({1, 4, h, h + 2}, 0.0, 1.0, 1), random_layer(3, 4, k, p, 2));
                EXPECT_EQ(y.shape(), (Shape{1, 3, h, h + 2}));
            }
        }
    }
}

TEST(ConvProperty, GroupedEqualsAverageOfDirections) {
    for (int k : {2, 4}) {
        for (std::uint64_t seed = 1; seed <= 5; ++seed) {
            const auto ks = static_cast<std::size_t>(k);
            const Tensor x0 = random_normal({2, 1, 7, 6}, 0.0, 1.0, seed);
            const Tensor w0 = random_normal({3, 1, ks, ks}, 0.0, 1.0, seed + 50);
            // Replicate input and weights across the four groups; each group
            // weight carries a quarter so the sum becomes the average.
            Tensor x({2, 4, 7, 6}), w({3, 4, ks, ks});
            for (std::size_t i = 0; i < x.size(); ++i) {
                const auto [n, c, y, xx] = x.index(i);
                x[i] = x0(n, 0, y, xx);
            }
            for (std::size_t i = 0; i < w.size(); ++i) {
                const auto [o, c, y, xx] = w.index(i);
                w[i] = 0.25 * w0(o, 0, y, xx);
            }
            const Tensor grouped = conv2d_forward(x, ConvLayer(w, GroupedSymmetric{}));
            Tensor avg(grouped.shape());
            for (Direction d : kDirections) {
                axpy_inplace(avg, 0.25, conv2d_forward(x0, ConvLayer(w0, Asymmetric{d})));
            }
            EXPECT_LE(max_abs_diff(grouped, avg), 1e-12);
        }
    }
}

TEST(ConvProperty, TranslationCovariance) {
    for (int k = 1; k <= 5; ++k) {
        for (const auto& p : policies_for(k)) {
            const std::size_t size = 14;
            Tensor x({1, 4, size, size});
            const Tensor r = random_normal(x.shape(), 0.0, 1.0, static_cast<std::uint64_t>(k));
            // Support kept well inside so no shifted read reaches a border.
            for (std::size_t c = 0; c < 4; ++c) {
                for (std::size_t y = 4; y < 9; ++y) {
                    for (std::size_t xx = 4; xx < 9; ++xx) {
                        x(0, c, y, xx) = r(0, c, y, xx);
                    }
                }
            }
            const ConvLayer l = random_layer(2, 4, k, p, 77);
            const Tensor a = conv2d_forward(x, l);
            const Tensor b = conv2d_forward(shift_down_right(x), l);
            double worst = 0.0;
            for (std::size_t o = 0; o < 2; ++o) {
                for (std::size_t y = 0; y + 1 < size; ++y) {
                    for (std::size_t xx = 0; xx + 1 < size; ++xx) {
                        worst = std::max(worst, std::abs(b(0, o, y + 1, xx + 1) - a(0, o, y, xx)));
                    }
                }
            }
            EXPECT_EQ(worst, 0.0) << "k=" << k << " " << to_string(p);
        }
    }
}

TEST(ConvProperty, AdjointDotProduct) {
    std::uint64_t seed = 500;
    for (int k = 1; k <= 5; ++k) {
        for (const auto& p : policies_for(k)) {
            for (int s : {1, 2}) {
                const Tensor x = random_normal({2, 8, 7, 6}, 0.0, 1.0, ++seed);
                const ConvLayer l = random_layer(3, 8, k, p, ++seed, s);
                const Tensor u = random_normal(l.output_shape(x.shape()), 0.0, 1.0, ++seed);
                const ConvGrads g = conv2d_backward(x, l, u);
                const double lhs = dot(conv2d_forward(x, l), u);
                const double scale_ref = std::max(1.0, std::abs(lhs));
                EXPECT_LE(std::abs(lhs - dot(x, g.d_input)), 1e-10 * scale_ref) << k << to_string(p) << s;
                EXPECT_LE(std::abs(lhs - dot(l.weights(), g.d_weights)), 1e-10 * scale_ref) << k << to_string(p) << s;
            }
        }
    }
}
