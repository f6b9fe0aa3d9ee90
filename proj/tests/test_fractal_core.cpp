#include <gtest/gtest.h>

#include "mdset/measure.hpp"

#include <cmath>
#include <functional>

using namespace mdset;

namespace {

DigitSystem cantor() { return DigitSystem(3, {{0, 2}}); }
DigitSystem five() { return DigitSystem(5, {{0, 1, 2, 3}}); }

Rational R(long long n, long long d) { return make_rational(n, d); }

RegionUnion interval(const Rational& lo, const Rational& hi) { return RegionUnion::from_intervals({{lo, hi}}); }

// mu([0,x]) bracket from the self-similar cdf recursion F(x) = (less(a) + F(bx - a)) / #D
std::pair<Rational, Rational> cdf_bracket(const DigitSystem& sys, Rational x, int depth) {
    const auto& D = sys.digits();
    const int b = sys.base();
    Rational acc = 0, weight = 1;
    for (int i = 0; i < depth; ++i) {
        if (x <= 0) return {acc, acc};
        if (x >= 1) return {acc + weight, acc + weight};
        Rational bx = x * b;
        long a = floor(bx).get_si();
        int below = 0;
        bool in = false;
        for (int d : D) {
            if (d < a) ++below;
            if (d == a) in = true;
        }
        acc += weight * Rational(below, int(D.size()));
        if (!in) return {acc, acc};
        weight /= int(D.size());
        x = bx - a;
    }
    return {acc, acc + weight};
}

}  // namespace

TEST(DigitSystem, HausdorffDimensionValues) {
    EXPECT_NEAR(cantor().hausdorff_dim(), 0.63093, 1e-5);
    EXPECT_DOUBLE_EQ(DigitSystem::full(5, 1).hausdorff_dim(), 1.0);
    EXPECT_NEAR(five().hausdorff_dim(), std::log(4.0) / std::log(5.0), 1e-15);
    EXPECT_NEAR(five().hausdorff_dim(), 0.86135, 1e-5);
    EXPECT_DOUBLE_EQ(DigitSystem::full(7, 2).hausdorff_dim(), 2.0);
}

TEST(DigitSystem, RejectsMalformedDigits) {
    EXPECT_THROW(DigitSystem(2, {{0}}), std::invalid_argument);
    EXPECT_THROW(DigitSystem(3, {{0, 3}}), std::invalid_argument);
    EXPECT_THROW(DigitSystem(3, {{1, 1}}), std::invalid_argument);
    EXPECT_THROW(DigitSystem(3, {{}}), std::invalid_argument);
}

TEST(DigitSystem, JsonRoundTripIsCanonical) {
    DigitSystem s(5, {{3, 0, 2, 1}, {4, 0, 1, 2, 3}});
    auto j = s.to_json();
    EXPECT_EQ(j.dump(), R"({"base":5,"digits":[[0,1,2,3],[0,1,2,3,4]],"dim":2})");
    EXPECT_EQ(DigitSystem::from_json(j), s);
}

TEST(Cylinder, BoxExamples) {
    auto root = cylinder_box(cantor(), CylinderWord{});
    EXPECT_EQ(root.side[0], (Interval{0, 1}));
    EXPECT_EQ(cylinder_box(cantor(), CylinderWord::of({2})).side[0], (Interval{R(2, 3), 1}));
    EXPECT_EQ(cylinder_box(cantor(), CylinderWord::of({0, 2})).side[0], (Interval{R(2, 9), R(3, 9)}));
    EXPECT_THROW(cylinder_box(cantor(), CylinderWord::of({1})), std::invalid_argument);
}

TEST(Cylinder, NestingFollowsPrefixes) {
    auto sys = five();
    for (const auto& w : all_words(sys, 2))
        for (const auto& v : all_words(sys, 3)) {
            bool prefix = v.letters[0] == w.letters[0] && v.letters[1] == w.letters[1];
            auto bw = cylinder_box(sys, w).side[0];
            auto bv = cylinder_box(sys, v).side[0];
            bool inside = bw.lo <= bv.lo && bv.hi <= bw.hi;
            EXPECT_EQ(prefix, inside);
        }
}

TEST(Measure, SpecExamples) {
    for (const auto& sys : {cantor(), five(), DigitSystem::full(4, 1)}) {
        auto m = measure_of_region(sys, interval(0, 1), 12);
        EXPECT_EQ(m.value, 1);
        EXPECT_EQ(m.error_bound, 0);
    }
    auto a = measure_of_region(cantor(), interval(0, R(1, 3)), 10);
    EXPECT_EQ(a.value, R(1, 2));
    EXPECT_EQ(a.error_bound, 0);
    auto b = measure_of_region(cantor(), interval(0, R(1, 2)), 10);
    EXPECT_EQ(b.value, R(1, 2));
    EXPECT_EQ(b.error_bound, 0);
}

TEST(Measure, CylinderConsistencyExact) {
    std::vector<DigitSystem> systems{cantor(), five(), DigitSystem(5, {{0, 1, 2, 3}, {0, 1, 2, 3, 4}}),
                                     DigitSystem(7, {{1, 5}})};
    for (const auto& sys : systems)
        for (int depth = 0; depth <= (sys.dim() == 2 ? 2 : 4); ++depth)
            for (const auto& w : all_words(sys, depth)) {
                auto box = cylinder_box(sys, w);
                auto m = measure_of_region(sys, RegionUnion::from_boxes(sys.dim(), {box}), 8);
                EXPECT_EQ(m.value, cylinder_measure(sys, w));
                EXPECT_EQ(m.error_bound, 0);
            }
}

TEST(Measure, BadicEndpointsGiveZeroError) {
    auto sys = five();
    for (int k = 0; k < 125; k += 7)
        for (int l = k; l <= 125; l += 11) {
            auto m = measure_of_region(sys, interval(R(k, 125), R(l, 125)), 3);
            EXPECT_EQ(m.error_bound, 0);
            // oracle: count depth-3 D-words whose box sits in [k, l]
            int count = 0;
            for (int w = k; w < l; ++w) {
                int x = w;
                bool ok = true;
                for (int i = 0; i < 3; ++i, x /= 5) ok = ok && (x % 5 != 4);
                count += ok;
            }
            EXPECT_EQ(m.value, R(count, 64));
        }
}

TEST(Measure, AgreesWithCdfRecursion) {
    std::vector<Rational> pts{0, R(1, 7), R(2, 9), R(1, 3), R(5, 13), R(1, 2), R(7, 11), R(17, 19), 1};
    for (const auto& sys : {cantor(), five()})
        for (const auto& lo : pts)
            for (const auto& hi : pts) {
                if (hi < lo) continue;
                auto m = measure_of_region(sys, interval(lo, hi), 30);
                auto [flo, flo2] = cdf_bracket(sys, lo, 30);
                auto [fhi, fhi2] = cdf_bracket(sys, hi, 30);
                // true value in [fhi - flo2, fhi2 - flo]
                EXPECT_LE(m.lower(), fhi2 - flo);
                EXPECT_GE(m.upper(), fhi - flo2);
                EXPECT_LT(to_double(m.error_bound), 1e-8);
            }
}

TEST(Measure, AdditivityOnDisjointParts) {
    auto sys = five();
    CounterRng rng(7, 0);
    for (int trial = 0; trial < 200; ++trial) {
        long long den = 1 + rng.below(400);
        long long a = rng.below(den + 1), b = rng.below(den + 1), c = rng.below(den + 1);
        std::vector<long long> v{a, b, c};
        std::sort(v.begin(), v.end());
        auto whole = measure_of_region(sys, interval(R(v[0], den), R(v[2], den)), 20);
        auto left = measure_of_region(sys, interval(R(v[0], den), R(v[1], den)), 20);
        auto right = measure_of_region(sys, interval(R(v[1], den), R(v[2], den)), 20);
        Rational diff = abs(whole.value - left.value - right.value);
        EXPECT_LE(diff, whole.error_bound + left.error_bound + right.error_bound);
    }
}

TEST(Measure, ProductMeasureOfBoxes) {
    DigitSystem sys(5, {{0, 1, 2, 3}, {0, 1, 2, 3, 4}});
    Box box{{{0, R(2, 5)}, {R(1, 5), R(4, 5)}}};
    auto m = measure_of_region(sys, RegionUnion::from_boxes(2, {box}), 6);
    EXPECT_EQ(m.value, R(2, 4) * R(3, 5));
    EXPECT_EQ(m.error_bound, 0);
}

TEST(Distance, Examples) {
    auto [lo, hi] = distance_to_set(cantor(), {R(1, 3)});
    EXPECT_EQ(lo, 0);
    EXPECT_EQ(hi, 0);
    auto [lo2, hi2] = distance_to_set(cantor(), {R(1, 2)});
    EXPECT_EQ(lo2, R(1, 6));
    EXPECT_EQ(hi2, R(1, 6));
    auto pts = sample_measure(five(), 20, 12, 3);
    for (const auto& p : pts) EXPECT_EQ(distance_to_set(five(), p).second, 0);
}

TEST(Distance, BracketsDepthSixBruteForce) {
    auto sys = cantor();
    DigitTable g(sys, 0);
    for (int k = 0; k <= 60; ++k) {
        Rational x = R(k, 60);
        auto [lo, hi] = distance_to_set(sys, {x}, 30);
        // every depth-6 hull endpoint lies in K; every point of K lies in some hull
        Rational best_end = 10, best_hull = 10;
        for (const auto& w : all_words(sys, 6)) {
            Interval h = cylinder_hull(g, word_index(3, w.coordinate(0)), 6);
            best_end = min(best_end, min(abs(h.lo - x), abs(h.hi - x)));
            Rational dh = x < h.lo ? Rational(h.lo - x) : (x > h.hi ? Rational(x - h.hi) : Rational(0));
            best_hull = min(best_hull, dh);
        }
        EXPECT_LE(lo, hi);
        EXPECT_LE(hi, best_end);
        EXPECT_GE(hi, best_hull);
        EXPECT_GE(lo, best_hull);
    }
}

TEST(FindPoint, ReturnsMembersOrNothing) {
    DigitTable g(cantor(), 0);
    EXPECT_FALSE(find_point_in_interval(g, R(2, 5), R(3, 5)).has_value());
    auto p = find_point_in_interval(g, R(1, 4), R(3, 10));
    ASSERT_TRUE(p.has_value());
    EXPECT_EQ(distance_to_set(cantor(), {*p}).second, 0);
    EXPECT_GE(*p, R(1, 4));
    EXPECT_LE(*p, R(3, 10));
}

TEST(Sampling, FullDigitMeanWithinFourStandardErrors) {
    auto sys = DigitSystem::full(5, 2);
    const std::size_t n = 100000;
    double s0 = 0, s1 = 0;
    for (std::size_t i = 0; i < n; ++i) {
        auto dg = sample_digits(sys, 20, 11, i);
        double x0 = 0, x1 = 0, w = 1;
        for (int k = 0; k < 20; ++k) {
            w /= 5;
            x0 += dg[0][k] * w;
            x1 += dg[1][k] * w;
        }
        s0 += x0;
        s1 += x1;
    }
    double se = std::sqrt(1.0 / 12.0 / double(n));
    EXPECT_LT(std::fabs(s0 / n - 0.5), 4 * se);
    EXPECT_LT(std::fabs(s1 / n - 0.5), 4 * se);
}

TEST(Sampling, DigitsInDAndDeterministic) {
    auto a = sample_measure(five(), 500, 9, 42);
    auto b = sample_measure(five(), 500, 9, 42);
    EXPECT_EQ(a, b);
    for (std::size_t i = 0; i < 500; ++i) {
        auto dg = sample_digits(five(), 9, 42, i);
        for (int d : dg[0]) EXPECT_NE(d, 4);
    }
    // draw i does not depend on how many draws are requested
    auto c = sample_measure(five(), 10, 9, 42);
    for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(c[i], a[i]);
}

TEST(Sampling, MonteCarloAgreesWithExactMeasure) {
    auto sys = five();
    const std::size_t n = 20000;
    auto pts = sample_measure(sys, n, 20, 5);
    std::vector<RegionUnion> regions{interval(R(1, 7), R(3, 5)), interval(0, R(1, 3)),
                                     RegionUnion::from_intervals({{R(1, 10), R(1, 5)}, {R(2, 3), R(9, 10)}})};
    for (const auto& reg : regions) {
        auto m = measure_of_region(sys, reg, 24);
        std::size_t hit = 0;
        for (const auto& p : pts) hit += reg.contains(p);
        double freq = double(hit) / double(n);
        double mu = to_double(m.value);
        EXPECT_LE(std::fabs(freq - mu), 4 * std::sqrt(mu / double(n)) + to_double(m.error_bound));
    }
}

TEST(Ahlfors, CylinderRatioIsOne) {
    for (const auto& sys : {cantor(), five()}) {
        double delta = sys.hausdorff_dim();
        for (int k = 0; k <= 10; ++k) {
            double ratio = std::pow(double(sys.count()), -k) / std::pow(std::pow(double(sys.base()), -k), delta);
            EXPECT_NEAR(ratio, 1.0, 1e-9);
        }
    }
}

TEST(Ahlfors, BallWindowBounded) {
    for (const auto& sys : {cantor(), five()}) {
        double delta = sys.hausdorff_dim();
        auto pts = sample_measure(sys, 60, 16, 9);
        double lo = 1e300, hi = 0;
        for (const auto& p : pts)
            for (int k = 1; k <= 8; ++k) {
                Rational r = make_rational(BigInt(1), ipow(sys.base(), k)) * R(2, 3);
                auto m = measure_of_region(sys, interval(max(p[0] - r, 0), min(p[0] + r, 1)), 22);
                double v = to_double(m.value) / std::pow(to_double(r), delta);
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
        EXPECT_GT(lo, 0);
        EXPECT_LE(hi / lo, sys.count() * std::pow(sys.base(), delta));
    }
}
