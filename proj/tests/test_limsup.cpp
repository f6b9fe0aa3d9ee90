#include <gtest/gtest.h>

#include "mdset/limsup.hpp"

#include <map>

using namespace mdset;

namespace {

Rational R(long n, long d) { return make_rational(n, d); }

DigitSystem five_four() { return DigitSystem(5, {{0, 1, 2, 3}}); }

// Length of a union of intervals by sorting and sweeping, independent of RegionUnion.
Rational union_length_oracle(std::vector<std::pair<Rational, Rational>> iv) {
    std::sort(iv.begin(), iv.end());
    Rational total = 0;
    bool open = false;
    Rational lo, hi;
    for (auto& [a, b] : iv) {
        if (open && a <= hi) {
            if (b > hi) hi = b;
            continue;
        }
        if (open) total += hi - lo;
        lo = a;
        hi = b;
        open = true;
    }
    if (open) total += hi - lo;
    return total;
}

// Full digit set: the K-part of a cell is the cell, so count closed cells meeting the region.
long full_cover_count_1d(int b, const RegionUnion& region, int n) {
    BigInt cells = ipow(b, unsigned(n));
    long count = 0;
    for (long j = 0; j < cells.get_si(); ++j) {
        Rational lo = R(j, cells.get_si()), hi = R(j + 1, cells.get_si());
        for (const auto& c : region.components())
            if (c.side[0].lo <= hi && lo <= c.side[0].hi) {
                ++count;
                break;
            }
    }
    return count;
}

long full_cover_count_2d(int b, const RegionUnion& region, int n) {
    long cells = ipow(b, unsigned(n)).get_si();
    long count = 0;
    for (long i = 0; i < cells; ++i)
        for (long j = 0; j < cells; ++j) {
            Rational x0 = R(i, cells), x1 = R(i + 1, cells), y0 = R(j, cells), y1 = R(j + 1, cells);
            for (const auto& c : region.components())
                if (c.side[0].lo <= x1 && x0 <= c.side[0].hi && c.side[1].lo <= y1 && y0 <= c.side[1].hi) {
                    ++count;
                    break;
                }
        }
    return count;
}

CylinderWord generic_ball_2d() {
    CylinderWord B;
    B.letters = {{2, 3}, {0, 1}, {3, 4}, {1, 0}};
    return B;
}

}  // namespace

// ---------------------------------------------------------------- finite stages

TEST(FiniteStage, FirstDenominatorGivesWholeInterval) {
    auto st = build_finite_stage(five_four(), 2.0, {R(0, 1)}, 1, 1);
    ASSERT_EQ(st.region.size(), 1u);
    EXPECT_EQ(st.region.components()[0].side[0].lo, 0);
    EXPECT_EQ(st.region.components()[0].side[0].hi, 1);
    EXPECT_EQ(st.eta[0], 1);
}

TEST(FiniteStage, LargeTauMatchesIntervalUnionOracle) {
    const long q0 = 2, q1 = 14;
    auto st = build_finite_stage(five_four(), 10.0, {R(0, 1)}, q0, q1);
    std::vector<std::pair<Rational, Rational>> iv;
    for (long q = q0; q <= q1; ++q) {
        Rational eta = st.eta[std::size_t(q - q0)];
        for (long p = 0; p <= q; ++p) {
            Rational lo = (Rational(p) - eta) / q, hi = (Rational(p) + eta) / q;
            iv.emplace_back(max(lo, Rational(0)), min(hi, Rational(1)));
        }
    }
    Rational exact = union_length_oracle(iv);
    EXPECT_EQ(st.region.volume(), exact);
    // each q contributes total length 2 eta_q before overlaps at shared rationals
    Rational sum = 0;
    for (const auto& e : st.eta) sum += 2 * e;
    EXPECT_LE(exact, sum);
    EXPECT_GT(exact, sum / 2);
}

TEST(FiniteStage, EtaIsDyadicFloor) {
    auto st = build_finite_stage(five_four(), 1.3, {R(0, 1)}, 5, 40);
    for (long q = 5; q <= 40; ++q) {
        const Rational& e = st.eta[std::size_t(q - 5)];
        double target = std::pow(double(q), -1.3);
        EXPECT_LE(e.get_d(), target);
        EXPECT_GT(e.get_d(), target * (1 - 1e-7));
    }
}

TEST(FiniteStage, ShrinksWithTauAndRange) {
    auto sys = five_four();
    for (auto theta : {R(0, 1), R(1, 3)}) {
        auto a = build_finite_stage(sys, 1.5, {theta}, 3, 30);
        auto b = build_finite_stage(sys, 2.0, {theta}, 3, 30);
        auto c = build_finite_stage(sys, 1.5, {theta}, 6, 20);
        EXPECT_TRUE(a.region.covers(b.region));
        EXPECT_TRUE(a.region.covers(c.region));
        EXPECT_LT(b.region.volume(), a.region.volume());
        std::vector<int> depths{2, 3, 4, 5};
        auto na = region_cover_counts(sys, a.region, depths);
        auto nb = region_cover_counts(sys, b.region, depths);
        for (std::size_t i = 0; i < depths.size(); ++i) EXPECT_LE(nb[i], na[i]);
    }
}

TEST(FiniteStage, TwoDimensionalStageMatchesBoxUnion) {
    auto sys = DigitSystem::full(3, 2);
    auto st = build_finite_stage(sys, 0.8, {R(0, 1)}, 2, 5);
    RegionUnion ref(2);
    for (long q = 2; q <= 5; ++q) {
        Rational eta = st.eta[std::size_t(q - 2)];
        for (long p0 = 0; p0 <= q; ++p0)
            for (long p1 = 0; p1 <= q; ++p1) {
                Box b;
                b.side.push_back({max((Rational(p0) - eta) / q, Rational(0)), min((Rational(p0) + eta) / q, Rational(1))});
                b.side.push_back({max((Rational(p1) - eta) / q, Rational(0)), min((Rational(p1) + eta) / q, Rational(1))});
                ref.add(b);
            }
    }
    ref.normalize();
    EXPECT_EQ(st.region.volume(), ref.volume());
}

TEST(FiniteStage, Preconditions) {
    EXPECT_THROW(build_finite_stage(five_four(), 1.0, {R(0, 1)}, 1, 4), std::invalid_argument);
    EXPECT_THROW(build_finite_stage(five_four(), 1.5, {R(0, 1)}, 5, 4), std::invalid_argument);
    EXPECT_THROW(build_finite_stage(DigitSystem::full(3, 2), 0.5, {R(0, 1)}, 1, 4), std::invalid_argument);
    EXPECT_THROW(build_finite_stage(five_four(), 1.5, {R(0, 1)}, 1, 5000, 1e6), std::length_error);
}

// ---------------------------------------------------------------- box counting

TEST(BoxDim, FullDigitsWholeSpaceHasSlopeD) {
    for (int d : {1, 2}) {
        auto sys = DigitSystem::full(3, d);
        RegionUnion all = RegionUnion::from_boxes(d, {unit_box(d)});
        auto e = box_dim_estimate(sys, all, {1, 2, 3, 4});
        for (std::size_t i = 0; i < e.depths.size(); ++i) EXPECT_EQ(e.counts[i], ipow(3, unsigned(d * e.depths[i])));
        EXPECT_NEAR(e.slope, d, 1e-12);
        EXPECT_NEAR(e.residual, 0, 1e-12);
    }
}

TEST(BoxDim, SingleCylinderIntervalHasSlopeOne) {
    const int b = 5, m = 2;
    auto sys = DigitSystem::full(b, 1);
    auto region = RegionUnion::from_intervals({{R(7, 25), R(8, 25)}});
    std::vector<int> depths{6, 7, 8, 9, 10};
    auto e = box_dim_estimate(sys, region, depths);
    for (std::size_t i = 0; i < depths.size(); ++i) {
        // the closed interval also touches one neighbour on each side
        EXPECT_EQ(e.counts[i], ipow(b, unsigned(depths[i] - m)) + 2);
    }
    EXPECT_NEAR(e.slope, 1.0, 0.01);
}

TEST(BoxDim, WholeSetGivesHausdorffDimension) {
    auto sys = five_four();
    auto e = box_dim_estimate(sys, RegionUnion::from_intervals({{0, 1}}), {6, 7, 8, 9, 10});
    EXPECT_NEAR(e.slope, sys.hausdorff_dim(), 0.01);
}

TEST(BoxDim, RegionCountsMatchFullDigitOracle) {
    auto sys = DigitSystem::full(5, 1);
    auto st = build_finite_stage(sys, 1.2, {R(0, 1)}, 3, 25);
    for (int n : {1, 2, 3, 4}) EXPECT_EQ(region_cover_counts(sys, st.region, {n})[0], full_cover_count_1d(5, st.region, n));
    auto sys2 = DigitSystem::full(3, 2);
    auto st2 = build_finite_stage(sys2, 0.7, {R(0, 1)}, 2, 6);
    for (int n : {1, 2, 3}) EXPECT_EQ(region_cover_counts(sys2, st2.region, {n})[0], full_cover_count_2d(3, st2.region, n));
}

TEST(BoxDim, SweepAgreesWithRegionCounts) {
    for (const auto& sys : {five_four(), DigitSystem(3, {{0, 2}}), DigitSystem::full(4, 1)})
        for (auto theta : {R(0, 1), R(1, 7)}) {
            std::vector<int> depths{2, 3, 4, 5, 6};
            auto st = build_finite_stage(sys, 1.2, {theta}, 2, 60);
            auto a = box_dim_estimate(sys, st, depths);
            auto b = box_dim_estimate_sweep(sys, 1.2, theta, 2, 60, depths);
            for (std::size_t i = 0; i < depths.size(); ++i) EXPECT_EQ(a.counts[i], b.counts[i]) << depths[i];
            EXPECT_DOUBLE_EQ(a.slope, b.slope);
        }
}

TEST(BoxDim, DepthWindowSpansComponentWidths) {
    auto [lo, hi] = suggest_depth_window(5, 1.2, 64, 8192);
    EXPECT_EQ(lo, 6);
    EXPECT_EQ(hi, 11);
    EXPECT_THROW(fit_box_dim(5, {6}, {BigInt(4)}), std::invalid_argument);
    EXPECT_THROW(fit_box_dim(5, {6, 6}, {BigInt(4), BigInt(5)}), std::invalid_argument);
}

// ---------------------------------------------------------------- restricted nu

namespace {

NuAuditParams nu_params(long long Q, std::size_t samples) {
    NuAuditParams p;
    p.ball = CylinderWord::of({1, 2});
    p.Q = Q;
    p.tau = 1.2;
    p.c = R(1, 16);
    p.s = 0.7505;
    p.beta = 0.75;
    p.samples = samples;
    return p;
}

}  // namespace

TEST(NuRestricted, MassBoundsBracketExactRegionMeasure) {
    for (const auto& sys : {five_four(), DigitSystem::full(5, 1)}) {
        auto p = nu_params(64, 200);
        p.ball = CylinderWord::of({1});
        auto r = nu_restricted_audit(sys, p);
        Box box = cylinder_box(sys, p.ball);
        auto F = build_AQ(p.Q, r.eta, {R(0, 1)}, box);
        auto mv = measure_of_region(sys, F, 14);
        double muB = r.mu_B.get_d();
        EXPECT_LE(r.mu_F_lo * muB, Rational(mv.value + mv.error_bound).get_d() * (1 + 1e-12));
        EXPECT_GE(r.mu_F_hi * muB, Rational(mv.value - mv.error_bound).get_d() * (1 - 1e-12));
        if (sys.is_full()) {
            double len = Rational(F.volume() / (box.side[0].hi - box.side[0].lo)).get_d();
            EXPECT_LE(r.mu_F_lo, len * (1 + 1e-12));
            EXPECT_GE(r.mu_F_hi, len * (1 - 1e-12));
        }
        // nu(whole space) = 1 up to the cells straddling the boundary of F
        EXPECT_GE(r.nu_total_hi, 1.0);
        EXPECT_LE(r.nu_total_hi, 1.05);
    }
}

TEST(NuRestricted, CaseRangesFollowTheScaleTable) {
    auto sys = five_four();
    auto r = nu_restricted_audit(sys, nu_params(1024, 100));
    const double Q = 1024, delta = sys.hausdorff_dim(), U = delta + 2 / 2.2 - 1;
    std::map<std::string, NuCase> c;
    for (auto& k : r.cases) c[k.name] = k;
    EXPECT_DOUBLE_EQ(c["1"].r_lo, std::pow(Q, -0.75));
    EXPECT_DOUBLE_EQ(c["1"].r_hi, 1.0 / 25);
    EXPECT_NEAR(c["2"].r_lo, std::pow(Q, -0.75 * delta / U), 1e-15);
    EXPECT_DOUBLE_EQ(c["3B"].r_lo, 1 / (8 * Q * Q));
    EXPECT_NEAR(c["4B"].r_lo, std::pow(Q, -2.2) / 16, 1e-18);
    EXPECT_DOUBLE_EQ(c["5B"].r_hi, c["4B"].r_lo);
    for (auto& k : r.cases) {
        EXPECT_TRUE(k.applicable) << k.name;
        EXPECT_EQ(k.evaluations, r.samples);
        EXPECT_GT(k.sup_ratio, 0);
        EXPECT_TRUE(std::isfinite(k.sup_ratio));
    }
    auto p = nu_params(1024, 50);
    p.theta = R(1, 7);
    auto shifted = nu_restricted_audit(sys, p);
    for (auto& k : shifted.cases) EXPECT_EQ(k.applicable, k.name.back() != 'B') << k.name;
}

TEST(NuRestricted, DeterministicForSeed) {
    auto sys = five_four();
    auto a = nu_restricted_audit(sys, nu_params(256, 500));
    auto b = nu_restricted_audit(sys, nu_params(256, 500));
    for (std::size_t i = 0; i < a.cases.size(); ++i) EXPECT_EQ(a.cases[i].sup_ratio, b.cases[i].sup_ratio);
    auto p = nu_params(256, 500);
    p.seed = 9;
    auto c = nu_restricted_audit(sys, p);
    bool differs = false;
    for (std::size_t i = 0; i < a.cases.size(); ++i) differs |= a.cases[i].sup_ratio != c.cases[i].sup_ratio;
    EXPECT_TRUE(differs);
}

TEST(NuRestricted, SupRatiosStableAcrossQ) {
    auto sys = five_four();
    auto lo = nu_restricted_audit(sys, nu_params(256, 3000));
    auto hi = nu_restricted_audit(sys, nu_params(1024, 3000));
    for (std::size_t i = 0; i < lo.cases.size(); ++i) EXPECT_LT(hi.cases[i].sup_ratio, 4 * lo.cases[i].sup_ratio) << lo.cases[i].name;
    double m0 = 0.5 * (lo.mass_ratio_lo + lo.mass_ratio_hi), m1 = 0.5 * (hi.mass_ratio_lo + hi.mass_ratio_hi);
    EXPECT_LT(std::max(m0, m1) / std::min(m0, m1), 2.0);
}

TEST(NuRestricted, Preconditions) {
    auto sys = five_four();
    auto p = nu_params(64, 10);
    p.c = 0;
    EXPECT_THROW(nu_restricted_audit(sys, p), std::invalid_argument);
    p = nu_params(64, 10);
    p.ball = CylinderWord::of({1, 2, 3, 0, 1});  // 5^-5 < 64^-0.75
    EXPECT_THROW(nu_restricted_audit(sys, p), std::invalid_argument);
    p = nu_params(64, 10);
    EXPECT_THROW(nu_restricted_audit(DigitSystem::full(3, 2), p), std::invalid_argument);
}

// ---------------------------------------------------------------- product construction

namespace {

DigitSystem product_k1() { return DigitSystem(5, {{0, 1, 2, 3}, {0, 1, 2, 3, 4}}); }

// Members of Q(B) by exact rational scan.
long brute_member_count(const DigitSystem& sys, const CylinderWord& B, long long Q, const Rational& c,
                        const Rational& a, const Rational& eta2) {
    Box box = cylinder_box(sys, B);
    DigitTable g(sys, 0);
    long q_lo = to_ll(ceil(c * long(Q)));
    long count = 0;
    Rational w = box.side[0].hi - box.side[0].lo;
    for (long q = q_lo; q <= 2 * Q; ++q) {
        long n1 = 0, n2 = 0;
        long long p_lo = to_ll(floor(box.side[0].lo * q)) - 1, p_hi = to_ll(ceil(box.side[1].hi * q)) + 1;
        p_lo = std::min(p_lo, to_ll(floor(box.side[1].lo * q)) - 1);
        p_hi = std::max(p_hi, to_ll(ceil(box.side[0].hi * q)) + 1);
        for (long p = long(p_lo); p <= long(p_hi); ++p) {
            Rational lo = max(Rational((Rational(p) - a) / q), box.side[0].lo);
            Rational hi = min(Rational((Rational(p) + a) / q), box.side[0].hi);
            if (lo <= hi && find_point_in_interval(g, (lo - box.side[0].lo) / w, (hi - box.side[0].lo) / w)) ++n1;
            Rational lo2 = (Rational(p) - eta2) / q, hi2 = (Rational(p) + eta2) / q;
            if (lo2 <= box.side[1].hi && box.side[1].lo <= hi2) ++n2;
        }
        count += n1 * n2;
    }
    return count;
}

}  // namespace

TEST(ProductConstruction, MembersMatchRationalScan) {
    auto sys = product_k1();
    CylinderWord B;
    B.letters = {{2, 3}, {0, 1}};
    for (long long Q : {256, 512}) {
        ProductAuditParams p;
        p.ball = B;
        p.Q = Q;
        p.c = R(1, 4);
        p.nu_samples = 50;
        auto r = product_construction_audit(sys, p);
        EXPECT_EQ(r.eta1 * r.eta2, R(1, Q));
        EXPECT_EQ(long(r.rationals), brute_member_count(sys, B, Q, p.c, r.eta1, r.eta2));
        EXPECT_EQ(r.skipped, 0u);
    }
}

TEST(ProductConstruction, SelectionIsDisjointAndCovers) {
    auto sys = product_k1();
    for (long long Q : {256, 512, 1024}) {
        ProductAuditParams p;
        p.ball = generic_ball_2d();
        p.Q = Q;
        p.nu_samples = 200;
        auto r = product_construction_audit(sys, p);
        EXPECT_TRUE(r.disjoint);
        EXPECT_TRUE(r.covered);
        EXPECT_TRUE(r.contained);
        EXPECT_LE(r.needed_factor, 3);  // both sides shrink with q, so a selected neighbour is at least as large
        EXPECT_GT(r.selected, 0u);
        EXPECT_LE(r.selected, r.rationals);
        EXPECT_NEAR(r.s, sys.hausdorff_dim() + 3 / 1.6 - 2, 1e-12);
        for (auto& c : r.cases) EXPECT_TRUE(std::isfinite(c.sup_ratio));
    }
}

TEST(ProductConstruction, LebesgueCountRatioBounded) {
    auto sys = DigitSystem::full(5, 2);
    CylinderWord B;
    B.letters = {{2, 3}, {1, 4}, {3, 0}};
    std::vector<double> ratios;
    for (long long Q : {256, 512, 1024}) {
        ProductAuditParams p;
        p.ball = B;
        p.Q = Q;
        p.tau = 0.6;
        p.nu_samples = 100;
        auto r = product_construction_audit(sys, p);
        EXPECT_NEAR(r.delta, 2.0, 1e-12);
        ratios.push_back(r.count_ratio);
    }
    EXPECT_LT(*std::max_element(ratios.begin(), ratios.end()) / *std::min_element(ratios.begin(), ratios.end()), 8.0);
}

TEST(ProductConstruction, Preconditions) {
    ProductAuditParams p;
    p.ball = CylinderWord{};
    EXPECT_THROW(product_construction_audit(five_four(), p), std::invalid_argument);
    EXPECT_THROW(product_construction_audit(DigitSystem(5, {{0, 1, 2, 3}, {0, 1, 2, 3}}), p), std::invalid_argument);
    p.tau = 1.0;
    EXPECT_THROW(product_construction_audit(product_k1(), p), std::invalid_argument);
    p.tau = 0.5;
    EXPECT_THROW(product_construction_audit(product_k1(), p), std::invalid_argument);
    p.tau = 0.6;
    p.c = 0;
    EXPECT_THROW(product_construction_audit(product_k1(), p), std::invalid_argument);
}
