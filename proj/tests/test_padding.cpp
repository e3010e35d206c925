#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "evenpad/padding.hpp"

using namespace evenpad;

namespace {

std::set<std::pair<int, int>> as_set(const OffsetSet& s) {
    std::set<std::pair<int, int>> out;
    for (const Offset& o : s.offsets) {
        out.insert({o.dy, o.dx});
    }
    return out;
}

}  // namespace

TEST(Padding, Kappa) {
    EXPECT_EQ(kappa(1), 0);
    EXPECT_EQ(kappa(2), 1);
    EXPECT_EQ(kappa(3), 1);
    EXPECT_EQ(kappa(4), 2);
    EXPECT_EQ(kappa(5), 2);
    EXPECT_THROW(kappa(0), std::invalid_argument);
}

TEST(Padding, CenteredOffsetsK3) {
    const OffsetSet s = offsets(3, Center{});
    std::set<std::pair<int, int>> want;
    for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
            want.insert({dy, dx});
        }
    }
    EXPECT_EQ(as_set(s), want);
    EXPECT_EQ(s.mean(), (std::pair<double, double>{0.0, 0.0}));
}

TEST(Padding, ShiftedOffsetsK2) {
    const OffsetSet s = offsets(2, Direction::OriginLT);
    EXPECT_EQ(as_set(s), (std::set<std::pair<int, int>>{{0, 0}, {0, 1}, {1, 0}, {1, 1}}));
    EXPECT_EQ(s.mean(), (std::pair<double, double>{0.5, 0.5}));
}

TEST(Padding, ShiftedOffsetsK4RightBottom) {
    EXPECT_EQ(offsets(4, Direction::OriginRB).mean(), (std::pair<double, double>{-0.5, -0.5}));
    EXPECT_EQ(offsets(4, Direction::OriginRB).offsets.size(), 16u);
}

TEST(Padding, ParityIsEnforced) {
    EXPECT_THROW(offsets(2, Center{}), std::invalid_argument);
    EXPECT_THROW(offsets(3, Direction::OriginLT), std::invalid_argument);
    EXPECT_THROW(check_policy_parity(2, SymmetricOdd{}), std::invalid_argument);
    EXPECT_THROW(check_policy_parity(3, GroupedSymmetric{}), std::invalid_argument);
    EXPECT_THROW(check_policy_parity(5, Asymmetric{Direction::OriginLB}), std::invalid_argument);
    EXPECT_NO_THROW(check_policy_parity(4, Asymmetric{Direction::OriginLB}));
}

TEST(Padding, PadAmounts) {
    const PadAmounts lt = pad_amounts(2, Direction::OriginLT);
    EXPECT_EQ(lt, (PadAmounts{0, 1, 0, 1}));
    const PadAmounts sym = pad_amounts(3, SymmetricOdd{});
    EXPECT_EQ(sym, (PadAmounts{1, 1, 1, 1}));
    const PadAmounts rb = pad_amounts(4, Direction::OriginRB);
    EXPECT_EQ(rb, (PadAmounts{2, 1, 2, 1}));
    const PadAmounts rt = pad_amounts(2, Direction::OriginRT);
    EXPECT_EQ(rt, (PadAmounts{0, 1, 1, 0}));
    const PadAmounts lb = pad_amounts(2, Direction::OriginLB);
    EXPECT_EQ(lb, (PadAmounts{1, 0, 0, 1}));
}

TEST(Padding, AssignFour) {
    const ChannelAssignment a = assign_directions(4);
    EXPECT_EQ(a.directions, (std::vector<Direction>{Direction::OriginLT, Direction::OriginRT, Direction::OriginLB,
                                                    Direction::OriginRB}));
}

TEST(Padding, AssignEightIsContiguousQuarters) {
    using D = Direction;
    EXPECT_EQ(assign_directions(8).directions,
              (std::vector<D>{D::OriginLT, D::OriginLT, D::OriginRT, D::OriginRT, D::OriginLB, D::OriginLB,
                              D::OriginRB, D::OriginRB}));
}

TEST(Padding, AssignRejectsIndivisibleCounts) {
    for (std::size_t c : {0u, 1u, 2u, 3u, 5u, 6u, 10u}) {
        EXPECT_THROW(assign_directions(c), std::invalid_argument) << c;
    }
}

TEST(Padding, PadTensorGeometry) {
    const Tensor x = full({1, 1, 2, 2}, 1.0);
    const Tensor p = pad_tensor(x, {1, 1, 1, 1});
    EXPECT_EQ(p.shape(), (Shape{1, 1, 4, 4}));
    EXPECT_EQ(sum(p), 4.0);
    for (std::size_t y = 1; y <= 2; ++y) {
        for (std::size_t xx = 1; xx <= 2; ++xx) {
            EXPECT_EQ(p(0, 0, y, xx), 1.0);
        }
    }
    EXPECT_EQ(p(0, 0, 0, 0), 0.0);
}

TEST(Padding, PadTensorIdentityAndFill) {
    const Tensor x = random_normal({2, 3, 4, 5}, 0.0, 1.0, 3);
    EXPECT_EQ(pad_tensor(x, {0, 0, 0, 0}).values(), x.values());
    const Tensor p = pad_tensor(x, {0, 2, 1, 0});
    EXPECT_EQ(p.shape(), (Shape{2, 3, 6, 6}));
    EXPECT_NEAR(sum(p), sum(x), 1e-12);
    const Tensor f = pad_tensor(full({1, 1, 1, 1}, 0.0), {1, 0, 0, 0}, 7.0);
    EXPECT_EQ(f.values(), (std::vector<double>{7.0, 0.0}));
}

TEST(Padding, DirectionNamesRoundTrip) {
    for (Direction d : kDirections) {
        EXPECT_EQ(parse_direction(to_string(d)), d);
    }
    EXPECT_THROW(parse_direction("up"), std::invalid_argument);
}

// ---------------------------------------------------------------------------

TEST(PaddingProperty, EvenPadsSumToKMinusOne) {
    for (int k = 2; k <= 12; k += 2) {
        for (Direction d : kDirections) {
            const PadAmounts p = pad_amounts(k, d);
            EXPECT_EQ(p.top + p.bottom, k - 1);
            EXPECT_EQ(p.left + p.right, k - 1);
            EXPECT_GE(std::min({p.top, p.bottom, p.left, p.right}), 0);
        }
    }
    for (int k = 1; k <= 11; k += 2) {
        const PadAmounts p = pad_amounts(k, SymmetricOdd{});
        EXPECT_EQ(p.top + p.bottom, k - 1);
        EXPECT_EQ(p.left + p.right, k - 1);
    }
}

TEST(PaddingProperty, EvenMeanOffsetsAreHalfPixel) {
    for (int k = 2; k <= 12; k += 2) {
        double sy = 0.0, sx = 0.0;
        for (Direction d : kDirections) {
            const auto [my, mx] = offsets(k, d).mean();
            EXPECT_EQ(std::abs(my), 0.5);
            EXPECT_EQ(std::abs(mx), 0.5);
            const bool bottom = d == Direction::OriginLB || d == Direction::OriginRB;
            const bool right = d == Direction::OriginRT || d == Direction::OriginRB;
            EXPECT_EQ(my, bottom ? -0.5 : 0.5);
            EXPECT_EQ(mx, right ? -0.5 : 0.5);
            sy += my;
            sx += mx;
        }
        EXPECT_EQ(sy, 0.0);
        EXPECT_EQ(sx, 0.0);
    }
}

TEST(PaddingProperty, OddOffsetsArePointSymmetric) {
    for (int k = 1; k <= 11; k += 2) {
        const auto s = as_set(offsets(k, Center{}));
        EXPECT_EQ(s.size(), static_cast<std::size_t>(k * k));
        for (const auto& [dy, dx] : s) {
            EXPECT_TRUE(s.count({-dy, -dx})) << k;
        }
    }
}

TEST(PaddingProperty, AssignmentOffsetsCancelExactly) {
    for (std::size_t c = 4; c <= 1024; c += 4) {
        const ChannelAssignment a = assign_directions(c);
        ASSERT_EQ(a.size(), c);
        for (int k : {2, 4, 6}) {
            ASSERT_EQ(a.offset_sum(k), (std::pair<long, long>{0, 0})) << "c=" << c << " k=" << k;
        }
        // Per-channel mean offsets, accumulated in channel order.
        double my = 0.0, mx = 0.0;
        for (std::size_t i = 0; i < c; ++i) {
            const auto m = offsets(2, a[i]).mean();
            my += m.first;
            mx += m.second;
        }
        ASSERT_EQ(my, 0.0);
        ASSERT_EQ(mx, 0.0);
    }
}
