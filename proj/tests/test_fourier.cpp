#include <mdset/fourier.hpp>

#include <gtest/gtest.h>

#include <numbers>

using namespace mdset;

namespace {

const double kPi = std::numbers::pi;

DigitSystem cantor() { return DigitSystem(3, {{0, 2}}); }
DigitSystem five_four() { return DigitSystem(5, {{0, 1, 2, 3}}); }

// |mu_hat(t)| for the middle-third Cantor measure: prod |cos(2 pi t / 3^n)|
double cantor_abs(double t, int terms = 60) {
    double p = 1, s = 1;
    for (int n = 1; n <= terms; ++n) {
        s /= 3;
        p *= std::abs(std::cos(2 * kPi * t * s));
    }
    return p;
}

// |g(u)| for D = {0,1,2,3}, b = 5 via the geometric series |sin(4 pi u) / (4 sin(pi u))|
double five_four_factor_abs(double u) {
    double den = 4 * std::sin(kPi * u);
    if (std::abs(den) < 1e-300) return 1;
    return std::abs(std::sin(4 * kPi * u) / den);
}

double five_four_abs(double t, int terms = 60) {
    double p = 1, s = 1;
    for (int n = 1; n <= terms; ++n) {
        s /= 5;
        p *= five_four_factor_abs(t * s);
    }
    return p;
}

double sinc_abs(double x) { return x == 0 ? 1 : std::abs(std::sin(kPi * x) / (kPi * x)); }

}  // namespace

TEST(MuHat, BasicValues) {
    for (const auto& sys : {cantor(), five_four(), DigitSystem::full(5, 1)}) EXPECT_EQ(mu_hat(sys, 0.0), Complex(1, 0));
    auto full = DigitSystem::full(5, 1);
    for (int xi : {1, -1, 2, 5, 25, 1234}) EXPECT_EQ(std::abs(mu_hat(full, double(xi))), 0.0) << xi;
    EXPECT_NEAR(std::abs(mu_hat(cantor(), 1.0)), cantor_abs(1.0, 40), 1e-12);
}

TEST(MuHat, MatchesIndependentProducts) {
    CounterRng rng(7, 0);
    for (int i = 0; i < 1000; ++i) {
        double t = (rng.uniform() - 0.5) * 2e4;
        EXPECT_NEAR(std::abs(mu_hat(cantor(), t)), cantor_abs(t), 1e-10) << t;
        EXPECT_NEAR(std::abs(mu_hat(five_four(), t)), five_four_abs(t), 1e-10) << t;
    }
}

TEST(MuHat, ModulusConjugationAndFunctionalEquation) {
    CounterRng rng(11, 0);
    for (const auto& sys : {cantor(), five_four(), DigitSystem(7, {{1, 2, 5}}), DigitSystem::full(4, 1)}) {
        CoordinateTransform f(sys, 0, 1e-13);
        for (int i = 0; i < 1000; ++i) {
            double t = (rng.uniform() - 0.5) * 1e3;
            Complex v = f(t);
            EXPECT_LE(std::abs(v), 1 + 1e-12);
            EXPECT_NEAR(std::abs(f(-t)), std::abs(v), 1e-12);
            EXPECT_NEAR(std::abs(f(-t) - std::conj(v)), 0, 1e-11);
            Complex rhs = f.factor(t / sys.base()) * f(t / sys.base());
            EXPECT_NEAR(std::abs(v - rhs), 0, 1e-11) << t;
        }
    }
}

TEST(MuHat, LebesgueClosedForm) {
    auto full = DigitSystem::full(5, 1);
    for (double t : {0.3, 1.5, -2.25, 17.1}) EXPECT_NEAR(std::abs(mu_hat(full, t)), sinc_abs(t), 1e-14);
}

TEST(MuHat, TruncationToleranceHonoured) {
    CounterRng rng(3, 0);
    for (double tol : {1e-3, 1e-6, 1e-9}) {
        CoordinateTransform coarse(five_four(), 0, tol), fine(five_four(), 0, 1e-15);
        for (int i = 0; i < 200; ++i) {
            double t = rng.uniform() * 1e5;
            EXPECT_LE(std::abs(coarse(t) - fine(t)), tol) << t;
        }
    }
    EXPECT_THROW(CoordinateTransform(cantor(), 0, 0), std::invalid_argument);
}

TEST(MuHat, TwoDimensionalProduct) {
    DigitSystem sys(5, {{0, 1, 2, 3}, {0, 2, 4}});
    DigitSystem first(5, {{0, 1, 2, 3}}), second(5, {{0, 2, 4}});
    Complex v = mu_hat(sys, std::vector<double>{3.5, -7.0});
    EXPECT_NEAR(std::abs(v - mu_hat(first, 3.5) * mu_hat(second, -7.0)), 0, 1e-12);
    EXPECT_THROW(mu_hat(sys, 1.0), std::invalid_argument);
}

TEST(L1Sum, FullSetIsZeroAndSmallCases) {
    for (std::int64_t M : {1, 10, 1000}) EXPECT_EQ(l1_sum(DigitSystem::full(3, 1), M).S, 0.0);
    EXPECT_EQ(l1_sum(DigitSystem::full(3, 2), 50).S, 0.0);
    auto one = l1_sum(cantor(), 1);
    EXPECT_NEAR(one.S, 2 * cantor_abs(1), 1e-11);
    EXPECT_THROW(l1_sum(cantor(), 0), std::invalid_argument);
}

TEST(L1Sum, CantorDirectSummation) {
    const std::int64_t M = 729;
    double direct = 0;
    for (std::int64_t xi = -M; xi <= M; ++xi)
        if (xi != 0) direct += cantor_abs(double(xi));
    auto s = l1_sum(cantor(), M);
    EXPECT_NEAR(s.S, direct, 1e-8);
    EXPECT_LE(s.error_bound, 1e-6);
    EXPECT_GT(s.error_bound, 0);
}

TEST(L1Sum, MonotoneInM) {
    double prev = 0;
    for (std::int64_t M = 1; M <= 3000; M = M * 3 / 2 + 1) {
        double s = l1_sum(five_four(), M).S;
        EXPECT_GE(s, prev);
        prev = s;
    }
}

TEST(L1Sum, TwoDimensionalBoxMatchesEnumeration) {
    DigitSystem sys(3, {{0, 2}, {0, 1}});
    const std::int64_t M = 12;
    double direct = 0;
    for (std::int64_t x = -M; x <= M; ++x)
        for (std::int64_t y = -M; y <= M; ++y)
            if (x != 0 || y != 0) direct += std::abs(mu_hat(sys, std::vector<double>{double(x), double(y)}));
    EXPECT_NEAR(l1_sum(sys, M).S, direct, 1e-9);
}

TEST(DimL1, FullSetIsDegenerate) {
    auto p = dim_l1_estimate(DigitSystem::full(5, 1), {5, 25, 125});
    EXPECT_TRUE(p.degenerate);
    EXPECT_EQ(p.estimate, 1.0);
    auto p2 = dim_l1_estimate(DigitSystem::full(3, 2), {3, 9, 27});
    EXPECT_EQ(p2.estimate, 2.0);
    EXPECT_THROW(dim_l1_estimate(cantor(), {3, 9}), std::invalid_argument);
    EXPECT_THROW(dim_l1_estimate(cantor(), {9, 3, 27}), std::invalid_argument);
}

TEST(DimL1, FiveAryAboveHalfAndBelowDimension) {
    auto p = dim_l1_estimate(five_four(), {125, 625, 3125, 15625});
    EXPECT_FALSE(p.degenerate);
    EXPECT_GT(p.estimate, 0.5);
    EXPECT_LE(p.estimate, five_four().hausdorff_dim() + 0.05);
    for (double s : p.slopes) EXPECT_LE(s, 1.0);
    for (std::size_t i = 1; i < p.entries.size(); ++i) EXPECT_GE(p.entries[i].S, p.entries[i - 1].S);
    // slopes recomputable from the entries
    const auto& e = p.entries;
    EXPECT_NEAR(p.slopes[0], 1 - std::log(e[1].S / e[0].S) / std::log(5.0), 1e-12);
}

TEST(DimL1, ProperSetsStayBelowDimension) {
    for (const auto& sys : {cantor(), DigitSystem(7, {{1, 2, 5}}), DigitSystem(4, {{0, 3}})}) {
        std::vector<std::int64_t> Ms;
        std::int64_t m = 1;
        while (m < 50000) {
            m *= sys.base();
            if (m >= 50) Ms.push_back(m);
        }
        auto p = dim_l1_estimate(sys, Ms);
        EXPECT_LE(p.estimate, sys.hausdorff_dim() + 0.05) << sys.base();
    }
}

TEST(BranchIdentity, EmptyWordIsTrivial) {
    auto r = branch_identity_check(cantor(), {}, 5.0, 10000);
    EXPECT_EQ(r.lhs_abs, r.rhs_abs);
    EXPECT_TRUE(r.agrees);
}

TEST(BranchIdentity, CantorMonteCarlo) {
    auto r = branch_identity_check(cantor(), {2}, 3.0, 1000000, 42);
    EXPECT_NEAR(r.lhs_abs, cantor_abs(1.0), 1e-12);
    EXPECT_TRUE(r.agrees) << r.direct << " vs " << r.sampled << " se " << r.std_error;
    EXPECT_NEAR(std::abs(r.sampled), cantor_abs(1.0), 4 * std::sqrt(2.0) * r.std_error);
}

TEST(BranchIdentity, LebesgueSinc) {
    auto full = DigitSystem::full(5, 1);
    for (double xi : {1.0, 7.0, 13.0}) {
        auto r = branch_identity_check(full, {1, 3}, xi, 200000, 9);
        EXPECT_NEAR(r.lhs_abs, sinc_abs(xi / 25), 1e-12);
        EXPECT_TRUE(r.agrees) << xi;
    }
    EXPECT_THROW(branch_identity_check(cantor(), {1}, 1.0), std::invalid_argument);
}

TEST(Divisors, CountsAndSieve) {
    EXPECT_EQ(divisor_count(1), 1);
    EXPECT_EQ(divisor_count(6), 4);
    EXPECT_EQ(divisor_count(12), 6);
    EXPECT_THROW(divisor_count(0), std::invalid_argument);
    auto s = divisor_sieve(2000);
    for (std::int64_t n = 1; n <= 2000; ++n) {
        std::int64_t brute = 0;
        for (std::int64_t k = 1; k <= n; ++k) brute += n % k == 0;
        ASSERT_EQ(s[std::size_t(n)], std::uint32_t(brute)) << n;
    }
}

TEST(BranchSum, DepthZeroIsDivisorWeightedL1) {
    const std::int64_t X = 300;
    double direct = 0;
    for (std::int64_t xi = 1; xi <= X; ++xi) {
        std::int64_t dn = 0;
        for (std::int64_t k = 1; k <= xi; ++k) dn += xi % k == 0;
        direct += 2 * double(dn) * cantor_abs(double(xi));
    }
    auto r = divisor_weighted_branch_sum(cantor(), 0, X);
    EXPECT_NEAR(r.T, direct, 1e-9);
    EXPECT_NEAR(r.bound_ratio(0.5), r.T / std::sqrt(double(X)), 1e-12);
}

TEST(BranchSum, LebesgueClosedForm) {
    const int b = 5;
    auto r = divisor_weighted_branch_sum(DigitSystem::full(b, 1), 1, b - 1);
    double expect = 0;
    for (int xi = 1; xi < b; ++xi) expect += 2 * double(divisor_count(xi)) * sinc_abs(double(xi) / b);
    EXPECT_NEAR(r.T, expect, 1e-13);
    // xi = b gives sinc(1) = 0
    EXPECT_NEAR(divisor_weighted_branch_sum(DigitSystem::full(b, 1), 1, b).T, expect, 1e-13);
}

TEST(BranchSum, FiveAryRatioBounded) {
    std::vector<double> ratios;
    for (int k = 1; k <= 4; ++k)
        for (int j = 0; j <= 3; ++j) {
            std::int64_t X = std::int64_t(std::pow(5, k)) << j;
            ratios.push_back(divisor_weighted_branch_sum(five_four(), k, X).bound_ratio(0.55));
        }
    auto g = geometric_summary(ratios);
    EXPECT_EQ(g.nonpositive, 0u);
    EXPECT_LE(g.spread, 10.0);
}

TEST(BranchSum, Preconditions) {
    EXPECT_THROW(divisor_weighted_branch_sum(cantor(), -1, 10), std::invalid_argument);
    EXPECT_THROW(divisor_weighted_branch_sum(cantor(), 0, 0), std::invalid_argument);
    EXPECT_THROW(divisor_weighted_branch_sum(cantor(), 0, kMaxBranchCutoff + 1), std::invalid_argument);
    // sieve path agrees with trial division
    auto a = divisor_weighted_branch_sum(five_four(), 2, 100001);
    double trial = 0;
    CoordinateTransform f(five_four(), 0, 1e-12);
    for (std::int64_t xi = 1; xi <= 100001; ++xi) trial += 2 * double(divisor_count(xi)) * f.abs(double(xi) / 25);
    EXPECT_NEAR(a.T, trial, 1e-6 * trial);
}
