#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "evenpad/analysis.hpp"
#include "evenpad/tensor.hpp"

using namespace evenpad;

TEST(Tensor, ZerosHasProductOfDims) {
    const Tensor a = zeros({1, 1, 2, 2});
    EXPECT_EQ(a.size(), 4u);
    for (double v : a.data()) {
        EXPECT_EQ(v, 0.0);
    }
    EXPECT_EQ(zeros({2, 3, 4, 5}).size(), 120u);
}

TEST(Tensor, RejectsEmptySpatialDims) {
    EXPECT_THROW(Tensor({1, 1, 0, 3}), std::invalid_argument);
    EXPECT_THROW(Tensor({1, 1, 3, 0}), std::invalid_argument);
}

TEST(Tensor, DataLengthMustMatchShape) { EXPECT_THROW(Tensor({1, 1, 2, 2}, std::vector<double>(3)), std::invalid_argument); }

TEST(Tensor, QuantityOfZerosIsZero) {
    for (Shape s : {Shape{1, 1, 1, 1}, Shape{2, 3, 4, 5}, Shape{1, 16, 8, 8}}) {
        EXPECT_EQ(information_quantity(zeros(s)), 0.0);
    }
}

TEST(Tensor, RandomNormalIsSeeded) {
    const Tensor a = random_normal({2, 3, 4, 5}, 0.0, 1.0, 7);
    const Tensor b = random_normal({2, 3, 4, 5}, 0.0, 1.0, 7);
    EXPECT_EQ(a.values(), b.values());
    EXPECT_NE(a.values(), random_normal({2, 3, 4, 5}, 0.0, 1.0, 8).values());
}

TEST(Tensor, RandomNormalZeroStdIsConstant) {
    const Tensor a = random_normal({1, 2, 3, 3}, 1.5, 0.0, 3);
    for (double v : a.data()) {
        EXPECT_EQ(v, 1.5);
    }
    EXPECT_THROW(random_normal({1, 1, 1, 1}, 0.0, -1.0, 1), std::invalid_argument);
}

TEST(Tensor, RandomNormalSampleMean) {
    const Tensor a = random_normal({1, 1, 64, 64}, 0.0, 1.0, 11);
    EXPECT_NEAR(sum(a) / static_cast<double>(a.size()), 0.0, 0.1);
}

TEST(Tensor, ReluClampsNegatives) {
    const Tensor a({1, 1, 1, 2}, std::vector<double>{-1.0, 2.0});
    EXPECT_EQ(relu(a).values(), (std::vector<double>{0.0, 2.0}));
}

TEST(Tensor, MeanAbsOfOnes) {
    EXPECT_EQ(mean_abs(full({2, 3, 5, 7}, 1.0)), 1.0);
    EXPECT_EQ(mean_abs(full({1, 1, 1, 1}, -1.0)), 1.0);
}

TEST(Tensor, SumIsLinear) {
    const Tensor a = random_normal({2, 3, 4, 5}, 0.0, 1.0, 1);
    const Tensor b = random_normal({2, 3, 4, 5}, 0.0, 1.0, 2);
    const double lhs = sum(add(a, b));
    const double rhs = sum(a) + sum(b);
    EXPECT_LE(std::abs(lhs - rhs), 1e-12 * std::max(1.0, std::abs(rhs)));
}

TEST(Tensor, BinaryOpsCheckShapes) {
    EXPECT_THROW(add(zeros({1, 1, 2, 2}), zeros({1, 1, 2, 3})), std::invalid_argument);
    EXPECT_THROW(mul(zeros({1, 2, 2, 2}), zeros({1, 1, 2, 2})), std::invalid_argument);
    EXPECT_THROW(dot(zeros({1, 2, 2, 2}), zeros({1, 1, 2, 2})), std::invalid_argument);
}

TEST(Tensor, ElementwiseOps) {
    const Tensor a({1, 1, 1, 3}, std::vector<double>{1.0, -2.0, 3.0});
    const Tensor b({1, 1, 1, 3}, std::vector<double>{4.0, 5.0, -6.0});
    EXPECT_EQ(sub(a, b).values(), (std::vector<double>{-3.0, -7.0, 9.0}));
    EXPECT_EQ(mul(a, b).values(), (std::vector<double>{4.0, -10.0, -18.0}));
    EXPECT_EQ(scale(a, 2.0).values(), (std::vector<double>{2.0, -4.0, 6.0}));
    EXPECT_EQ(map(a, [](double v) { return v * v; }).values(), (std::vector<double>{1.0, 4.0, 9.0}));
    EXPECT_EQ(dot(a, b), 4.0 - 10.0 - 18.0);
    EXPECT_EQ(max(b), 5.0);
    EXPECT_EQ(argmax(b), 1u);
    Tensor c = a;
    axpy_inplace(c, 0.5, b);
    EXPECT_EQ(c.values(), (std::vector<double>{3.0, 0.5, 0.0}));
}

TEST(Tensor, IndexingIsRowMajorNCHW) {
    Tensor t({2, 3, 4, 5});
    t(1, 2, 3, 4) = 9.0;
    EXPECT_EQ(t.offset(1, 2, 3, 4), t.size() - 1);
    EXPECT_EQ(t[t.size() - 1], 9.0);
    EXPECT_EQ(t.offset(0, 1, 0, 0), 20u);
    EXPECT_EQ(t.plane(1, 2)[19], 9.0);
}

TEST(Tensor, BinaryRoundTrip) {
    const Tensor a = random_normal({2, 3, 4, 5}, 0.0, 1.0, 5);
    std::stringstream ss;
    write_tensor(ss, a);
    EXPECT_EQ(ss.str().size(), 16u + 8u * a.size());
    const Tensor b = read_tensor(ss);
    EXPECT_EQ(a.shape(), b.shape());
    EXPECT_EQ(a.values(), b.values());
}

TEST(Tensor, BinaryIsLittleEndian) {
    std::stringstream ss;
    write_tensor(ss, full({1, 1, 1, 2}, 1.0));
    const std::string s = ss.str();
    EXPECT_EQ(static_cast<unsigned char>(s[0]), 1u);
    EXPECT_EQ(static_cast<unsigned char>(s[8]), 1u);
    EXPECT_EQ(static_cast<unsigned char>(s[12]), 2u);
    // 1.0 is 0x3FF0000000000000
    EXPECT_EQ(static_cast<unsigned char>(s[16 + 7]), 0x3Fu);
    EXPECT_EQ(static_cast<unsigned char>(s[16 + 6]), 0xF0u);
}

TEST(Tensor, TruncatedReadFails) {
    std::stringstream ss;
    write_tensor(ss, full({1, 1, 2, 2}, 1.0));
    std::string s = ss.str();
    s.resize(s.size() - 3);
    std::stringstream cut(s);
    EXPECT_THROW(read_tensor(cut), std::runtime_error);
}

// ---------------------------------------------------------------------------

TEST(TensorProperty, IndexOffsetBijection) {
    for (Shape s : {Shape{1, 1, 1, 1}, Shape{2, 3, 4, 5}, Shape{3, 1, 7, 2}, Shape{1, 8, 9, 9}}) {
        const Tensor t(s);
        std::vector<bool> seen(t.size(), false);
        for (std::size_t n = 0; n < s.n; ++n) {
            for (std::size_t c = 0; c < s.c; ++c) {
                for (std::size_t y = 0; y < s.h; ++y) {
                    for (std::size_t x = 0; x < s.w; ++x) {
                        const std::size_t f = t.offset(n, c, y, x);
                        ASSERT_LT(f, t.size());
                        ASSERT_FALSE(seen[f]);
                        seen[f] = true;
                        const auto idx = t.index(f);
                        ASSERT_EQ(idx, (std::array<std::size_t, 4>{n, c, y, x}));
                    }
                }
            }
        }
        EXPECT_TRUE(std::all_of(seen.begin(), seen.end(), [](bool b) { return b; }));
    }
}

TEST(TensorProperty, ReductionsIgnoreBatchOrder) {
    const Tensor a = random_normal({5, 2, 3, 3}, 0.0, 1.0, 21);
    std::vector<std::size_t> perm{3, 0, 4, 1, 2};
    Tensor b(a.shape());
    const std::size_t per = a.size() / 5;
    for (std::size_t i = 0; i < 5; ++i) {
        std::copy_n(a.data().begin() + static_cast<long>(perm[i] * per), per, b.data().begin() + static_cast<long>(i * per));
    }
    EXPECT_NEAR(sum(a), sum(b), 1e-12);
    EXPECT_NEAR(mean_abs(a), mean_abs(b), 1e-12);
    EXPECT_EQ(max(a), max(b));
    EXPECT_NEAR(information_quantity(a), information_quantity(b), 1e-12);
}

TEST(TensorProperty, ReluIsIdempotent) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const Tensor a = random_normal({2, 3, 6, 6}, 0.0, 1.0, seed);
        EXPECT_EQ(relu(relu(a)).values(), relu(a).values());
    }
}
