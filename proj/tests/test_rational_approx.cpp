#include <gtest/gtest.h>

#include "mdset/approx_sets.hpp"

#include <map>
#include <set>

using namespace mdset;

namespace {

Rational R(long long n, long long d) { return make_rational(n, d); }
Box unit1() { return unit_box(1); }

// Union length by event sweep: +1 at each left end, -1 at each right end, length where coverage > 0.
Rational union_length_oracle(const std::vector<Interval>& iv) {
    std::map<Rational, int> events;
    for (const auto& i : iv) {
        if (i.hi <= i.lo) continue;
        events[i.lo] += 1;
        events[i.hi] -= 1;
    }
    Rational total = 0, prev = 0;
    int cover = 0;
    for (const auto& [x, delta] : events) {
        if (cover > 0) total += x - prev;
        cover += delta;
        prev = x;
    }
    return total;
}

// Every interval (p+theta)/q +- eta/q clipped to [0,1], q in [q_lo, q_hi], p scanned over a wide range.
std::vector<Interval> brute_intervals(long long q_lo, long long q_hi, const Rational& eta, const Rational& theta) {
    std::vector<Interval> out;
    for (long q = q_lo; q <= q_hi; ++q)
        for (long p = -2; p <= q + 2; ++p) {
            Rational c = (Rational(p) + theta) / q;
            Interval s{max(c - eta / q, Rational(0)), min(c + eta / q, Rational(1))};
            if (s.lo <= s.hi) out.push_back(s);
        }
    return out;
}

}  // namespace

TEST(BuildAQ, SpecExamples) {
    auto a = build_AQ(1, R(1, 10), {0}, unit1());
    ASSERT_EQ(a.size(), 2u);
    EXPECT_EQ(a.components()[0].side[0], (Interval{0, R(1, 10)}));
    EXPECT_EQ(a.components()[1].side[0], (Interval{R(9, 10), 1}));

    // Q=2: q in {2,3}
    auto b = build_AQ(2, R(1, 10), {0}, unit1());
    EXPECT_EQ(b.volume(), union_length_oracle(brute_intervals(2, 3, R(1, 10), 0)));
    // q=2 contributes 1/20 + 1/10 + 1/20, q=3 contributes 1/30 + 2/30 + 2/30 + 1/30; ends overlap
    EXPECT_EQ(b.volume(), R(1, 20) + R(1, 10) + R(1, 20) + R(2, 30) + R(2, 30));

    auto c = build_AQ(2, R(1, 100), {R(1, 2)}, unit1());
    EXPECT_FALSE(c.contains({0}));
    EXPECT_TRUE(c.contains({R(1, 4)}));
    EXPECT_TRUE(c.contains({R(1, 6)}));
    EXPECT_TRUE(c.contains({R(1, 2)}));
}

TEST(BuildAQ, RejectsWrappingEta) {
    EXPECT_THROW(build_AQ(3, R(1, 2), {0}, unit1()), std::invalid_argument);
    EXPECT_THROW(build_Aq_single(3, 0, {0}, unit1()), std::invalid_argument);
}

TEST(BuildAqSingle, SpecExamples) {
    auto a = build_Aq_single(1, R(1, 4), {0}, unit1());
    ASSERT_EQ(a.size(), 2u);
    EXPECT_EQ(a.components()[0].side[0], (Interval{0, R(1, 4)}));
    EXPECT_EQ(a.components()[1].side[0], (Interval{R(3, 4), 1}));
    EXPECT_EQ(build_Aq_single(3, R(1, 10), {0}, unit1()).volume(), R(1, 5));
}

TEST(BuildAqSingle, LengthIsMinOneTwoEta) {
    for (long q = 1; q <= 40; ++q)
        for (auto eta : {R(1, 3), R(1, 7), R(2, 9), R(1, 1000), R(49, 100)})
            EXPECT_EQ(build_Aq_single(q, eta, {0}, unit1()).volume(), min(Rational(1), 2 * eta));
}

TEST(BuildAqSingle, ContainedInAQ) {
    for (long Q : {1, 3, 8})
        for (auto theta : {R(0, 1), R(1, 7)}) {
            auto AQ = build_AQ(Q, R(1, 20), {theta}, unit1());
            for (long q = Q; q < 2 * Q; ++q) EXPECT_TRUE(AQ.covers(build_Aq_single(q, R(1, 20), {theta}, unit1())));
        }
}

TEST(BuildAQ, MatchesEventSweepOracleExhaustively) {
    for (long Q = 1; Q <= 50; ++Q)
        for (auto eta : {R(1, 10), R(1, 100), R(1, 1000)})
            for (auto theta : {R(0, 1), R(1, 2), R(1, 7)}) {
                auto AQ = build_AQ(Q, eta, {theta}, unit1());
                ASSERT_EQ(AQ.volume(), union_length_oracle(brute_intervals(Q, 2 * Q - 1, eta, theta)))
                    << "Q=" << Q << " eta=" << eta << " theta=" << theta;
                auto single = build_Aq_single(Q, eta, {theta}, unit1());
                ASSERT_EQ(single.volume(), union_length_oracle(brute_intervals(Q, Q, eta, theta)));
            }
}

TEST(Region, NormalizationIsIdempotent) {
    auto a = build_AQ(7, R(1, 9), {R(1, 7)}, unit1());
    auto b = a;
    b.normalize();
    EXPECT_EQ(a, b);
    auto r = build_rect(3, {R(1, 5), R(1, 7)}, unit_box(2));
    auto s = r;
    s.normalize();
    EXPECT_EQ(r, s);
    const auto& c = a.components();
    for (std::size_t i = 1; i < c.size(); ++i) EXPECT_LT(c[i - 1].side[0].hi, c[i].side[0].lo);
}

TEST(Region, JsonRoundTrip) {
    auto a = build_AQ(4, R(1, 9), {R(1, 7)}, unit1());
    EXPECT_EQ(RegionUnion::from_json(a.to_json(), 1), a);
    auto r = build_rect(2, {R(1, 8), R(1, 5)}, unit_box(2));
    EXPECT_EQ(RegionUnion::from_json(r.to_json(), 2), r);
    EXPECT_EQ(build_Aq_single(1, R(1, 4), {0}, unit1()).to_json().dump(), R"([["0","1/4"],["3/4","1"]])");
}

TEST(BuildRect, SpecExamples) {
    EXPECT_EQ(build_rect(1, {R(1, 4), R(1, 4)}, unit_box(2)).volume(), R(1, 4));
    EXPECT_EQ(build_rect(2, {R(1, 8), R(1, 8)}, unit_box(2)).volume(), R(1, 16));
}

TEST(BuildRect, VolumeIsProductOfPeriodicLengths) {
    for (long q = 1; q <= 12; ++q)
        for (auto e1 : {R(1, 3), R(1, 10), R(2, 5)})
            for (auto e2 : {R(1, 4), R(1, 9)})
                EXPECT_EQ(build_rect(q, {e1, e2}, unit_box(2)).volume(), min(Rational(1), 2 * e1) * min(Rational(1), 2 * e2));
}

TEST(BuildRect, TwoDimAQMatchesInclusionExclusionOracle) {
    // d=2 A_Q volume against a grid oracle: integrate the 1D cross-section length over x-slabs.
    long Q = 3;
    Rational eta = R(1, 7);
    auto AQ = build_AQ(Q, eta, {0}, unit_box(2));
    std::set<Rational> xs{0, 1};
    for (long q = Q; q < 2 * Q; ++q)
        for (long p = -1; p <= q + 1; ++p) {
            xs.insert(max(Rational(0), min(Rational(1), (p - eta) / q)));
            xs.insert(max(Rational(0), min(Rational(1), (p + eta) / q)));
        }
    std::vector<Rational> xv(xs.begin(), xs.end());
    Rational total = 0;
    for (std::size_t i = 0; i + 1 < xv.size(); ++i) {
        Rational mid = (xv[i] + xv[i + 1]) / 2;
        std::vector<Interval> ys;
        for (long q = Q; q < 2 * Q; ++q)
            for (long p1 = -1; p1 <= q + 1; ++p1) {
                if (abs(mid - Rational(p1) / q) > eta / q) continue;
                for (long p2 = -1; p2 <= q + 1; ++p2)
                    ys.push_back({max(Rational(0), (p2 - eta) / q), min(Rational(1), (p2 + eta) / q)});
            }
        total += (xv[i + 1] - xv[i]) * union_length_oracle(ys);
    }
    EXPECT_EQ(AQ.volume(), total);
}

TEST(Coprime, FilterDropsNonReducedFractions) {
    auto all = build_Aq_single(6, R(1, 100), {0}, unit1());
    auto red = build_Aq_single(6, R(1, 100), {0}, unit1(), true);
    EXPECT_TRUE(all.contains({R(1, 2)}));
    EXPECT_FALSE(red.contains({R(1, 2)}));
    EXPECT_TRUE(red.contains({R(1, 6)}));
    EXPECT_TRUE(all.covers(red));
}

TEST(Enumerate, FullDigitSetKeepsWindow) {
    auto sys = DigitSystem::full(5, 1);
    auto out = enumerate_rationals_near_set(sys, 1, 12, R(1, 100), {0});
    std::size_t expected = 0;
    for (long q = 1; q <= 12; ++q) expected += q + 1;  // p/q in [0,1] only, radius < 1/q
    EXPECT_EQ(out.size(), expected);
}

TEST(Enumerate, ExcludesHalfForCantor) {
    DigitSystem cantor(3, {{0, 2}});
    auto out = enumerate_rationals_near_set(cantor, 2, 2, R(1, 100), {0});
    for (const auto& r : out) EXPECT_NE(r.value()[0], R(1, 2));
    EXPECT_EQ(out.size(), 2u);  // 0/2 and 2/2
}

TEST(Enumerate, PrunedEqualsBruteForce) {
    std::vector<DigitSystem> systems{DigitSystem(3, {{0, 2}}), DigitSystem(5, {{0, 1, 2, 3}}), DigitSystem(7, {{1, 5}})};
    for (const auto& sys : systems)
        for (auto radius : {R(1, 100), R(1, 1000)})
            for (auto theta : {R(0, 1), R(1, 7)}) {
                auto a = enumerate_rationals_near_set(sys, 1, 50, radius, {theta});
                auto b = enumerate_rationals_brute(sys, 1, 50, radius, {theta});
                EXPECT_EQ(a, b);
            }
}

TEST(Enumerate, TwoDimPrunedEqualsBruteForce) {
    DigitSystem sys(5, {{0, 1, 2, 3}, {0, 2, 4}});
    auto a = enumerate_rationals_near_set(sys, 1, 14, R(1, 50), {0});
    auto b = enumerate_rationals_brute(sys, 1, 14, R(1, 50), {0});
    EXPECT_EQ(a, b);
    EXPECT_FALSE(a.empty());
}
