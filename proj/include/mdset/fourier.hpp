#pragma once

#include "digit_system.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "stats.hpp"

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace mdset {

using Complex = std::complex<double>;

/// Fourier transform of the coordinate-j Bernoulli measure, mu_hat(t) = prod_{n>=1} g_D(t / b^n).
class CoordinateTransform {
public:
    CoordinateTransform(const DigitSystem& sys, int coord, double tol) : b_(sys.base()), digits_(sys.digits(coord)), tol_(tol) {
        if (!(tol > 0)) throw std::invalid_argument("tol must be > 0");
        full_ = sys.is_full(coord);
        max_digit_ = digits_.back();
    }

    /// g_D(u) = (1/#D) sum_{a in D} exp(-2 pi i a u)
    Complex factor(double u) const {
        const double ang = -2 * std::numbers::pi * u;
        const Complex w(std::cos(ang), std::sin(ang));
        Complex acc = 0, p = 1;
        int power = 0;
        for (int a : digits_) {
            while (power < a) {
                p *= w;
                ++power;
            }
            acc += p;
        }
        return acc / double(digits_.size());
    }

    Complex operator()(double t) const {
        if (t == 0) return 1;
        if (full_) {  // Lebesgue on [0,1]
            if (t == std::floor(t)) return 0;
            const double x = std::numbers::pi * t;
            return std::polar(std::sin(x) / x, -x);
        }
        // tail prod_{m>=n} g(t/b^m) is within exp(2 pi maxD |t| b^-n b/(b-1)) - 1 of 1
        const double c = 2 * std::numbers::pi * max_digit_ * std::abs(t) * double(b_) / double(b_ - 1);
        Complex prod = 1;
        double scale = 1.0 / b_;
        for (int n = 1; n < 4000; ++n, scale /= b_) {
            if (std::expm1(c * scale) < tol_) break;
            prod *= factor(t * scale);
            if (prod == 0.0) break;
        }
        return prod;
    }

    double abs(double t) const { return std::abs((*this)(t)); }

private:
    int b_;
    std::vector<int> digits_;
    double tol_;
    bool full_ = false;
    int max_digit_ = 0;
};

/// mu_hat at a real point of R^d (product over coordinates).
inline Complex mu_hat(const DigitSystem& sys, const std::vector<double>& xi, double tol = 1e-12) {
    if (static_cast<int>(xi.size()) != sys.dim()) throw std::invalid_argument("xi dimension mismatch");
    Complex out = 1;
    for (int j = 0; j < sys.dim(); ++j) out *= CoordinateTransform(sys, j, tol / sys.dim())(xi[j]);
    return out;
}

inline Complex mu_hat(const DigitSystem& sys, double t, double tol = 1e-12) { return mu_hat(sys, std::vector<double>{t}, tol); }

/// Compensated sum, applied in a fixed order.
struct KahanSum {
    double sum = 0, comp = 0;
    void add(double v) {
        double y = v - comp;
        double t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
};

namespace detail {

// sum_{xi = 1}^{X} w(xi) f(xi), block-parallel with block-ordered reduction
template <class F>
double blocked_sum(std::int64_t X, F&& term) {
    constexpr std::int64_t block = 1 << 15;
    const std::size_t nblocks = std::size_t((X + block - 1) / block);
    std::vector<double> partial(nblocks, 0.0);
    parallel_for(nblocks, [&](std::size_t k) {
        KahanSum s;
        const std::int64_t lo = std::int64_t(k) * block + 1, hi = std::min<std::int64_t>(X, lo + block - 1);
        for (std::int64_t xi = lo; xi <= hi; ++xi) s.add(term(xi));
        partial[k] = s.sum;
    });
    KahanSum s;
    for (double v : partial) s.add(v);
    return s.sum;
}

}  // namespace detail

struct L1Sum {
    std::int64_t M = 0;
    double S = 0;          // sum_{0 < |xi|_inf <= M} |mu_hat(xi)|
    double error_bound = 0;
};

/// l1 partial sum over the sup-norm ball; for d > 1 it factorises over coordinates.
inline L1Sum l1_sum(const DigitSystem& sys, std::int64_t M, double tol = 1e-12) {
    if (M < 1) throw std::invalid_argument("M must be >= 1");
    L1Sum out;
    out.M = M;
    double total = 1, err_rel = 0;
    for (int j = 0; j < sys.dim(); ++j) {
        CoordinateTransform f(sys, j, tol);
        // one-sided sum; |mu_hat(-xi)| = |mu_hat(xi)|
        double one_side = sys.is_full(j) ? 0.0 : detail::blocked_sum(M, [&](std::int64_t xi) { return f.abs(double(xi)); });
        total *= 1 + 2 * one_side;
        err_rel += 2 * double(M) * tol / (1 + 2 * one_side);
    }
    out.S = total - 1;
    // each factor carries at most 2 M tol absolute error
    out.error_bound = (total + 1) * (std::expm1(err_rel) + 1e-15 * double(M));
    return out;
}

struct FourierProfile {
    struct Entry {
        std::int64_t M;
        double S;
        double error_bound;
    };
    std::vector<Entry> entries;
    std::vector<double> slopes;  // s_k = d - log(S_{k+1}/S_k) / log(M_{k+1}/M_k)
    double estimate = 0;         // median of slopes
    double spread = 0;           // max - min of slopes
    bool degenerate = false;     // S vanished (full digit set)
    double truncation_tol = 0;
};

/// Empirical Fourier l1-dimension from l1 sums at increasing M.  Not a certified bound.
inline FourierProfile dim_l1_estimate(const DigitSystem& sys, const std::vector<std::int64_t>& Ms, double tol = 1e-12) {
    if (Ms.size() < 3) throw std::invalid_argument("need at least 3 values of M");
    for (std::size_t i = 1; i < Ms.size(); ++i)
        if (Ms[i] <= Ms[i - 1]) throw std::invalid_argument("M values must increase");
    FourierProfile p;
    p.truncation_tol = tol;
    for (auto M : Ms) {
        auto s = l1_sum(sys, M, tol);
        p.entries.push_back({M, s.S, s.error_bound});
    }
    const double d = sys.dim();
    bool zero = true;
    for (const auto& e : p.entries) zero = zero && e.S == 0;
    if (zero) {
        p.degenerate = true;
        p.estimate = d;
        p.slopes.assign(Ms.size() - 1, d);
        return p;
    }
    for (std::size_t i = 0; i + 1 < p.entries.size(); ++i) {
        const auto& a = p.entries[i];
        const auto& c = p.entries[i + 1];
        p.slopes.push_back(d - std::log(c.S / a.S) / std::log(double(c.M) / double(a.M)));
    }
    p.estimate = median(p.slopes);
    auto [lo, hi] = std::minmax_element(p.slopes.begin(), p.slopes.end());
    p.spread = *hi - *lo;
    return p;
}

// ---------------------------------------------------------------- branch identity

struct BranchIdentity {
    Complex direct;    // exp(-2 pi i xi x_w) mu_hat(b^-|w| xi)
    Complex sampled;   // Monte-Carlo integral against mu_w
    double std_error;  // per-component standard error of the sample mean
    double lhs_abs, rhs_abs;
    bool agrees = false;  // |direct - sampled| <= z * std_error (componentwise)
};

/**
 * @brief |mu_w_hat(xi)| = |mu_hat(b^-|w| xi)| for the normalised restriction mu_w
 * of a one-dimensional measure to the cylinder w.
 */
inline BranchIdentity branch_identity_check(const DigitSystem& sys, const std::vector<int>& word, double xi,
                                            std::uint64_t samples = 1000000, std::uint64_t seed = 1, double z = 4,
                                            double tol = 1e-12) {
    if (sys.dim() != 1) throw std::invalid_argument("branch identity is checked for d = 1");
    for (int a : word)
        if (!sys.has_digit(0, a)) throw std::invalid_argument("word digit not in D");
    const int b = sys.base();
    double left = 0, scale = 1;
    for (int a : word) {
        scale /= b;
        left += a * scale;
    }
    BranchIdentity out;
    const double pi2 = 2 * std::numbers::pi;
    out.direct = std::polar(1.0, -pi2 * xi * left) * mu_hat(sys, xi * scale, tol);
    out.lhs_abs = std::abs(out.direct);
    out.rhs_abs = std::abs(mu_hat(sys, xi * scale, tol));
    if (samples == 0) throw std::invalid_argument("samples must be > 0");

    const auto& D = sys.digits(0);
    const int depth = int(std::ceil(60 / std::log2(double(b))));
    const std::size_t blocks = 64;
    std::vector<double> re(blocks), im(blocks), re2(blocks), im2(blocks);
    parallel_for(blocks, [&](std::size_t k) {
        CounterRng rng(seed, k);
        const std::uint64_t lo = samples * k / blocks, hi = samples * (k + 1) / blocks;
        KahanSum sr, si, sr2, si2;
        for (std::uint64_t i = lo; i < hi; ++i) {
            double y = 0, s = 1;
            for (int n = 0; n < depth; ++n) {
                s /= b;
                y += D[rng.below(D.size())] * s;
            }
            const double x = left + scale * y;
            const double c = std::cos(pi2 * xi * x), sn = -std::sin(pi2 * xi * x);
            sr.add(c);
            si.add(sn);
            sr2.add(c * c);
            si2.add(sn * sn);
        }
        re[k] = sr.sum;
        im[k] = si.sum;
        re2[k] = sr2.sum;
        im2[k] = si2.sum;
    });
    KahanSum r, i, r2, i2;
    for (std::size_t k = 0; k < blocks; ++k) {
        r.add(re[k]);
        i.add(im[k]);
        r2.add(re2[k]);
        i2.add(im2[k]);
    }
    const double n = double(samples);
    out.sampled = {r.sum / n, i.sum / n};
    const double var_r = std::max(0.0, r2.sum / n - out.sampled.real() * out.sampled.real());
    const double var_i = std::max(0.0, i2.sum / n - out.sampled.imag() * out.sampled.imag());
    out.std_error = std::sqrt(std::max(var_r, var_i) / n);
    const double slack = z * out.std_error + 1e-9;
    out.agrees = std::abs(out.direct.real() - out.sampled.real()) <= slack &&
                 std::abs(out.direct.imag() - out.sampled.imag()) <= slack;
    return out;
}

// ---------------------------------------------------------------- divisor sums

inline std::int64_t divisor_count(std::int64_t n) {
    if (n < 1) throw std::invalid_argument("divisor_count needs n >= 1");
    std::int64_t c = 0;
    for (std::int64_t k = 1; k * k <= n; ++k)
        if (n % k == 0) c += (k * k == n) ? 1 : 2;
    return c;
}

/// d(n) for n in [0, X]; entry 0 is unused.
inline std::vector<std::uint32_t> divisor_sieve(std::int64_t X) {
    std::vector<std::uint32_t> d(std::size_t(X + 1), 0);
    for (std::int64_t k = 1; k <= X; ++k)
        for (std::int64_t m = k; m <= X; m += k) ++d[std::size_t(m)];
    return d;
}

inline constexpr std::int64_t kMaxBranchCutoff = 10'000'000;

struct BranchSum {
    int depth = 0;
    std::int64_t X = 0;
    double T = 0;  // sum_{0 < |xi| <= X} d(|xi|) |mu_hat(b^-k xi)|
    double error_bound = 0;
    int base = 2;
    double bound_ratio(double gamma) const { return T / (std::pow(double(base), gamma * depth) * std::pow(double(X), 1 - gamma)); }
};

inline BranchSum divisor_weighted_branch_sum(const DigitSystem& sys, int depth, std::int64_t X, double tol = 1e-12) {
    if (sys.dim() != 1) throw std::invalid_argument("branch sums are one-dimensional");
    if (depth < 0) throw std::invalid_argument("depth must be >= 0");
    if (X < 1) throw std::invalid_argument("X must be >= 1");
    if (X > kMaxBranchCutoff) throw std::invalid_argument("X above the 1e7 cap");
    CoordinateTransform f(sys, 0, tol);
    const double scale = std::pow(double(sys.base()), -depth);
    std::vector<std::uint32_t> sieve;
    if (X > 100000) sieve = divisor_sieve(X);
    auto dcount = [&](std::int64_t xi) { return sieve.empty() ? double(divisor_count(xi)) : double(sieve[std::size_t(xi)]); };
    BranchSum out;
    out.depth = depth;
    out.X = X;
    out.base = sys.base();
    double weight = 0;
    for (std::int64_t xi = 1; xi <= X; ++xi) weight += dcount(xi);
    out.T = 2 * detail::blocked_sum(X, [&](std::int64_t xi) { return dcount(xi) * f.abs(double(xi) * scale); });
    out.error_bound = 2 * weight * tol + 1e-15 * out.T * double(X);
    return out;
}

}  // namespace mdset
