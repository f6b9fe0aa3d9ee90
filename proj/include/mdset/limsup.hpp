#pragma once

#include "approx_sets.hpp"
#include "audit.hpp"
#include "geometry.hpp"
#include "rng.hpp"
#include "stats.hpp"
#include "sweep.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace mdset {

// ---------------------------------------------------------------- finite stages

/// Bits of eta_q: ceil(tau log2 q) + 24, a function of q alone so nested stages nest exactly.
inline int stage_eta_bits_for(long long q, double tau) { return int(std::ceil(tau * std::log2(double(q)))) + 24; }

/// floor(q^-tau 2^bits) with bits = stage_eta_bits_for(q, tau); eta_q = this / 2^bits.
inline std::int64_t stage_eta_num(long long q, double tau) {
    long double v = std::floor(std::ldexp(std::pow((long double)q, -(long double)tau), stage_eta_bits_for(q, tau)));
    if (v < 1) throw std::overflow_error("eta_q underflows the dyadic denominator");
    return std::int64_t(v);
}

/// Common denominator bits for q_lo <= q <= q_hi.
inline int stage_eta_bits(long long q_lo, long long q_hi, double tau) {
    return std::max(stage_eta_bits_for(q_lo, tau), stage_eta_bits_for(q_hi, tau));
}

struct FiniteStageSet {
    RegionUnion region{1};
    double tau = 0;
    std::vector<Rational> theta;
    long long q_lo = 1, q_hi = 1;
    int eta_bits = 0;           // common denominator 2^eta_bits of all eta_q
    std::vector<Rational> eta;  // eta_q for q_lo <= q <= q_hi
};

namespace detail {

inline long long theta_den_lcm(const std::vector<Rational>& theta) {
    BigInt l = 1;
    for (const auto& t : theta) l = lcm(l, BigInt(t.get_den()));
    if (!l.fits_slong_p()) throw std::overflow_error("theta denominators too large");
    return l.get_si();
}

inline void check_stage(const DigitSystem& sys, double tau, long long q_lo, long long q_hi) {
    if (sys.dim() > 2) throw std::invalid_argument("finite stages support d <= 2");
    if (!(tau > 1.0 / sys.dim())) throw std::invalid_argument("tau must exceed 1/d");
    if (q_lo < 1 || q_hi < q_lo) throw std::invalid_argument("need 1 <= Q0 <= Q1");
}

}  // namespace detail

/**
 * @brief Union over Q0 <= q <= Q1 of A(q, eta_q, theta) clipped to [0,1]^d,
 * eta_q the dyadic floor of q^-tau.  eta_q >= 1/2 contributes the whole box.
 */
inline FiniteStageSet build_finite_stage(const DigitSystem& sys, double tau, const std::vector<Rational>& theta,
                                         long long q_lo, long long q_hi, double max_components = 1e7) {
    detail::check_stage(sys, tau, q_lo, q_hi);
    const int d = sys.dim();
    auto th = detail::expand(theta, d, "theta");
    double est = 0;
    for (long long q = q_lo; q <= q_hi; ++q) est += std::pow(double(q + 1), d);
    if (est > max_components) throw std::length_error("finite stage exceeds the component budget");

    FiniteStageSet st;
    st.region = RegionUnion(d);
    st.tau = tau;
    st.theta = th;
    st.q_lo = q_lo;
    st.q_hi = q_hi;
    st.eta_bits = stage_eta_bits(q_lo, q_hi, tau);
    const Box box = unit_box(d);
    for (long long q = q_lo; q <= q_hi; ++q) {
        Rational eta = make_rational(BigInt(long(stage_eta_num(q, tau))), BigInt(1) << stage_eta_bits_for(q, tau));
        st.eta.push_back(eta);
        if (eta >= Rational(1, 2)) {
            st.region.add(box);
            continue;
        }
        detail::append_neighborhoods(q, std::vector<Rational>(d, eta), th, box, false, st.region);
    }
    st.region.normalize();
    return st;
}

/// Sweep family of the same stage (d = 1), with identical eta_q.
inline ShiftedFamily stage_family(int base, double tau, const Rational& theta, long long q_lo, long long q_hi) {
    if (q_lo < 1 || q_hi < q_lo) throw std::invalid_argument("need 1 <= Q0 <= Q1");
    auto [tn, td] = detail::to_i64_fraction(theta, "theta");
    const int bits = stage_eta_bits(q_lo, q_hi, tau);
    if (double(bits) + std::log2(double(q_hi)) + std::log2(double(td)) + std::log2(double(base) * double(base - 1)) >= 61.5)
        throw std::overflow_error("eta denominators too large for a 64-bit sweep over this q range");
    auto fam = constant_family(q_lo, q_hi, 0, std::int64_t(1) << bits, tn, td);
    for (long long q = q_lo; q <= q_hi; ++q)
        fam.eta_num[std::size_t(q - q_lo)] = stage_eta_num(q, tau) << (bits - stage_eta_bits_for(q, tau));
    return fam;
}

// ---------------------------------------------------------------- box counting

struct BoxDimEstimate {
    std::vector<int> depths;
    std::vector<BigInt> counts;  // N_n
    double slope = 0, intercept = 0, slope_se = 0;
    double residual = 0;  // rms of the fit in log_b units
};

/// Depth window where b^-n spans the component widths 2 eta_q / q of the stage.
inline std::pair<int, int> suggest_depth_window(int base, double tau, long long q_lo, long long q_hi) {
    const double lb = std::log(double(base));
    const double widest = std::log(2.0) - (1 + tau) * std::log(double(q_lo));
    const double narrowest = std::log(2.0) - (1 + tau) * std::log(double(q_hi));
    int lo = std::max(1, int(std::ceil(-widest / lb)));
    int hi = int(std::floor(-narrowest / lb));
    return {lo, std::max(lo, hi)};
}

inline BoxDimEstimate fit_box_dim(int base, const std::vector<int>& depths, const std::vector<BigInt>& counts) {
    if (depths.size() < 2) throw std::invalid_argument("degenerate depth window: need >= 2 depths");
    for (std::size_t i = 1; i < depths.size(); ++i)
        if (depths[i] <= depths[i - 1]) throw std::invalid_argument("depths must be strictly increasing");
    BoxDimEstimate e;
    e.depths = depths;
    e.counts = counts;
    std::vector<double> x, y;
    const double lb = std::log(double(base));
    for (std::size_t i = 0; i < depths.size(); ++i) {
        if (counts[i] <= 0) throw std::invalid_argument("region misses K at some depth");
        x.push_back(depths[i]);
        y.push_back(std::log(counts[i].get_d()) / lb);
    }
    auto f = linear_fit(x, y);
    e.slope = f.slope;
    e.intercept = f.intercept;
    e.slope_se = f.slope_se;
    double ss = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double r = y[i] - f.intercept - f.slope * x[i];
        ss += r * r;
    }
    e.residual = std::sqrt(ss / double(x.size()));
    return e;
}

namespace detail {

// Rank ranges of depth-n cylinders of coordinate table g meeting [lo, hi].
inline std::pair<BigInt, BigInt> meeting_ranks(const DigitTable& g, const Interval& iv, int n,
                                               const std::vector<BigInt>& npow) {
    const BigInt& lo_den = iv.lo.get_den();
    const BigInt& hi_den = iv.hi.get_den();
    auto lo = locate<BigInt, BigInt>(g, iv.lo.get_num(), lo_den, n, npow);
    auto hi = locate<BigInt, BigInt>(g, iv.hi.get_num(), hi_den, n, npow);
    return meeting_rank_range<BigInt, BigInt>(g, lo, lo_den, hi, hi_den, n, npow);
}

inline BigInt union_length(std::vector<std::pair<BigInt, BigInt>> r) {
    std::sort(r.begin(), r.end());
    BigInt total = 0, end = -1;
    for (auto& [a, b] : r) {
        if (a > b) continue;
        BigInt s = a > end ? a : BigInt(end + 1);
        if (b >= s) total += b - s + 1;
        if (b > end) end = b;
    }
    return total;
}

}  // namespace detail

/// N_n = number of depth-n cylinders of K meeting the region, exactly.
inline std::vector<BigInt> region_cover_counts(const DigitSystem& sys, const RegionUnion& region,
                                               const std::vector<int>& depths) {
    if (region.dim() != sys.dim()) throw std::invalid_argument("region dimension mismatch");
    const int d = sys.dim();
    std::vector<DigitTable> tabs;
    for (int j = 0; j < d; ++j) tabs.emplace_back(sys, j);
    std::vector<BigInt> out;
    for (int n : depths) {
        std::vector<std::vector<BigInt>> npow;
        for (int j = 0; j < d; ++j) npow.push_back(count_powers<BigInt>(tabs[j].n, n));
        if (d == 1) {
            std::vector<std::pair<BigInt, BigInt>> r;
            for (const auto& c : region.components()) r.push_back(detail::meeting_ranks(tabs[0], c.side[0], n, npow[0]));
            out.push_back(detail::union_length(std::move(r)));
            continue;
        }
        // lattice union of rank rectangles, swept along coordinate 0
        struct RR {
            BigInt x0, x1, y0, y1;
        };
        std::vector<RR> rr;
        for (const auto& c : region.components()) {
            auto xr = detail::meeting_ranks(tabs[0], c.side[0], n, npow[0]);
            auto yr = detail::meeting_ranks(tabs[1], c.side[1], n, npow[1]);
            if (xr.first > xr.second || yr.first > yr.second) continue;
            rr.push_back({xr.first, xr.second, yr.first, yr.second});
        }
        std::vector<BigInt> xs;
        for (const auto& r : rr) {
            xs.push_back(r.x0);
            xs.push_back(r.x1 + 1);
        }
        std::sort(xs.begin(), xs.end());
        xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
        BigInt total = 0;
        for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
            std::vector<std::pair<BigInt, BigInt>> ys;
            for (const auto& r : rr)
                if (r.x0 <= xs[i] && xs[i] <= r.x1) ys.emplace_back(r.y0, r.y1);
            if (!ys.empty()) total += detail::union_length(std::move(ys)) * (xs[i + 1] - xs[i]);
        }
        out.push_back(total);
    }
    return out;
}

inline BoxDimEstimate box_dim_estimate(const DigitSystem& sys, const RegionUnion& region, const std::vector<int>& depths) {
    return fit_box_dim(sys.base(), depths, region_cover_counts(sys, region, depths));
}

inline BoxDimEstimate box_dim_estimate(const DigitSystem& sys, const FiniteStageSet& stage, const std::vector<int>& depths) {
    return box_dim_estimate(sys, stage.region, depths);
}

/// Same counts for large d = 1 stages through the hull-pruned sweep.
inline BoxDimEstimate box_dim_estimate_sweep(const DigitSystem& sys, double tau, const Rational& theta, long long q_lo,
                                             long long q_hi, const std::vector<int>& depths) {
    if (sys.dim() != 1) throw std::invalid_argument("sweep box counting is one-dimensional");
    detail::check_stage(sys, tau, q_lo, q_hi);
    if (depths.empty()) throw std::invalid_argument("degenerate depth window: need >= 2 depths");
    DigitTable g(sys, 0);
    auto fam = stage_family(sys.base(), tau, theta, q_lo, q_hi);
    SweepPlan plan;
    plan.max_leaf_depth = *std::min_element(depths.begin(), depths.end());
    auto vis = sweep_family(g, fam, plan, CoverVisitor(g, depths));
    std::vector<BigInt> counts;
    for (auto c : vis.counts) counts.push_back(big(c));
    return fit_box_dim(sys.base(), depths, counts);
}

// ---------------------------------------------------------------- nu audits

/// Sup of nu(B(x, r)) mu(B) / r^s over samples with r log-uniform in [r_lo, r_hi).
struct NuCase {
    std::string name;
    double r_lo = 0, r_hi = 0;
    bool applicable = true;
    std::size_t evaluations = 0;
    double sup_ratio = 0;
    double argmax_r = 0;
};

namespace detail {

inline void update_case(NuCase& c, double ratio, double r) {
    ++c.evaluations;
    if (ratio > c.sup_ratio) {
        c.sup_ratio = ratio;
        c.argmax_r = r;
    }
}

inline double log_uniform(CounterRng& rng, double lo, double hi) {
    return std::exp(std::log(lo) + rng.uniform() * (std::log(hi) - std::log(lo)));
}

// D-words of depth L with b-adic index < K.
inline std::uint64_t count_below(const DigitTable& g, i128 K, int L, const std::vector<std::uint64_t>& bpow,
                                 const std::vector<std::uint64_t>& npow) {
    if (K <= 0) return 0;
    if (K >= i128(bpow[L])) return npow[L];
    std::uint64_t C = 0;
    std::uint64_t k = std::uint64_t(K);
    for (int i = 0; i < L; ++i) {
        int a = int((k / bpow[L - 1 - i]) % std::uint64_t(g.b));
        C += std::uint64_t(g.less[a]) * npow[L - 1 - i];
        if (!g.in[a]) break;
    }
    return C;
}

// b-adic index of the D-word with the given rank.
inline std::uint64_t index_of_rank(const DigitTable& g, std::uint64_t rank, int L, const std::vector<int>& digits) {
    std::uint64_t idx = 0, pw = 1;
    for (int i = 0; i < L; ++i) {
        idx += std::uint64_t(digits[std::size_t(rank % std::uint64_t(g.n))]) * pw;
        rank /= std::uint64_t(g.n);
        pw *= std::uint64_t(g.b);
    }
    return idx;
}

/// Sorted disjoint rank ranges [first, last] with prefix sums of their lengths.
struct RankSet {
    std::vector<std::uint64_t> first, last, before;
    std::uint64_t total = 0;

    void add(std::uint64_t a, std::uint64_t b) {  // ranges arrive sorted by a
        if (a > b) return;
        if (!first.empty() && a <= last.back() + 1) {
            if (b > last.back()) {
                total += b - last.back();
                last.back() = b;
            }
            return;
        }
        first.push_back(a);
        last.push_back(b);
        before.push_back(total);
        total += b - a + 1;
    }
    /// Members < R.
    std::uint64_t below(std::uint64_t R) const {
        auto it = std::upper_bound(first.begin(), first.end(), R);
        if (it == first.begin()) return 0;
        std::size_t i = std::size_t(it - first.begin()) - 1;
        if (R == first[i]) return before[i];
        return before[i] + std::min<std::uint64_t>(R, last[i] + 1) - first[i];
    }
    bool contains(std::uint64_t r) const { return below(r + 1) > below(r); }
    /// The k-th member (0-based).
    std::uint64_t nth(std::uint64_t k) const {
        auto it = std::upper_bound(before.begin(), before.end(), k);
        std::size_t i = std::size_t(it - before.begin()) - 1;
        return first[i] + (k - before[i]);
    }
};

}  // namespace detail

struct NuAuditParams {
    CylinderWord ball;     // B, a cylinder of K
    long long Q = 1024;
    double tau = 1.2;
    Rational c = Rational(1, 16);
    double s = 0.75;
    double beta = 0.75;    // local counting exponent: Case 1 starts at Q^-beta
    std::size_t samples = 10000;
    std::uint64_t seed = 1;
    Rational theta = 0;
    int depth = 0;         // measure depth below B; 0 picks one
};

struct NuAuditResult {
    long long Q = 0;
    double tau = 0, s = 0, beta = 0, delta = 0;
    Rational c, eta, mu_B;
    int depth = 0;                       // absolute cylinder depth of the counts
    std::size_t components = 0;
    std::uint64_t inside_cells = 0, meeting_cells = 0;
    double mu_F_lo = 0, mu_F_hi = 0;     // mu(F) / mu(B) bounds
    double mass_ratio_lo = 0, mass_ratio_hi = 0;  // mu(F) / (mu(B) Q^{1-tau})
    double nu_total_hi = 0;              // upper bound for nu(whole space); 1 up to resolution
    bool empty_F = false;
    std::size_t samples = 0, draws = 0;
    std::vector<NuCase> cases;
};

/**
 * @brief Restricted measure nu = mu|_F / mu(F), F = B cap A_Q(c Q^-tau, theta), d = 1.
 *
 * F is exact (merged rational components).  Counts are taken at a fixed depth
 * n below B: inside cells give a lower bound for mu(F), cells meeting F an
 * upper bound for mu|_F of any ball.  Sample points are mu-samples of B kept
 * when their depth-n cell lies inside F.  Each ball is widened to whole cells.
 */
inline NuAuditResult nu_restricted_audit(const DigitSystem& sys, const NuAuditParams& p) {
    if (sys.dim() != 1) throw std::invalid_argument("nu_restricted_audit is one-dimensional");
    validate_word(sys, p.ball);
    if (p.c <= 0) throw std::invalid_argument("c must be positive");
    if (p.Q < 2) throw std::invalid_argument("Q must be >= 2");
    if (!(p.tau > 1)) throw std::invalid_argument("tau must exceed 1/d = 1");
    if (!(p.beta > 0 && p.beta < 1)) throw std::invalid_argument("beta must lie in (0, 1)");
    if (p.samples < 1) throw std::invalid_argument("samples must be >= 1");
    const DigitTable g(sys, 0);
    const int b = g.b;
    const int m = p.ball.depth();
    const double delta = sys.hausdorff_dim();
    const double Qd = double(p.Q);
    const double radiusB = std::pow(double(b), -m);
    if (radiusB < std::pow(Qd, -p.beta)) throw std::invalid_argument("ball smaller than Q^-beta");

    NuAuditResult out;
    out.Q = p.Q;
    out.tau = p.tau;
    out.s = p.s;
    out.beta = p.beta;
    out.delta = delta;
    out.c = p.c;
    out.mu_B = cylinder_measure(sys, p.ball);

    // case table
    const double U = delta + 2.0 / (1 + p.tau) - 1;
    const double r2 = std::pow(Qd, -p.beta * delta / U);
    const double r4 = p.c.get_d() * std::pow(Qd, -(1 + p.tau));
    const double r_floor = r4 / double(b * b);
    const double r3 = 1.0 / (8.0 * Qd * Qd);
    const bool special = p.theta == 0;
    out.cases = {{"1", std::pow(Qd, -p.beta), radiusB},
                 {"2", r2, std::pow(Qd, -p.beta)},
                 {"3A", r_floor, r2},
                 {"3B", r3, r2},
                 {"4B", r4, r3},
                 {"5B", r_floor, r4}};
    for (auto& c : out.cases) {
        if (!(c.r_lo < c.r_hi)) c.applicable = false;
        if (c.name.back() == 'B' && !special) c.applicable = false;
    }

    // eta = dyadic floor of c Q^-tau; endpoints share denominator q * T
    auto [tn, td] = detail::to_i64_fraction(p.theta, "theta");
    int k = int(std::floor(61.5 - std::log2(2.0 * Qd) - std::log2(double(b)) - std::log2(double(td)))) - 1;
    long double ev = std::ldexp((long double)p.c.get_d() * std::pow((long double)Qd, -(long double)p.tau), k);
    if (ev < 1) throw std::overflow_error("c Q^-tau underflows the dyadic denominator");
    const std::int64_t en = std::int64_t(std::floor(ev));
    const std::int64_t ed = std::int64_t(1) << k;
    out.eta = make_rational(BigInt(long(en)), BigInt(long(ed)));
    if (out.eta >= Rational(1, 2)) throw std::invalid_argument("c Q^-tau must be < 1/2");
    const std::int64_t T = std::lcm(td, ed);
    const i128 s_lo = i128(tn) * (T / td) - i128(en) * (T / ed);
    const i128 s_hi = i128(tn) * (T / td) + i128(en) * (T / ed);

    const i128 bm = i128(to_ll(ipow(b, m)));
    const i128 k1 = to_i128(word_index(b, p.ball.coordinate(0)));

    // F in B-relative coordinates y = x b^m - k1
    std::vector<SweepItem> items;
    auto fl = [](i128 a, i128 c) { return a >= 0 ? a / c : -((-a + c - 1) / c); };
    for (long long q = p.Q; q < 2 * p.Q; ++q) {
        const i128 D = i128(q) * T;
        // (p T + s) b^m - k1 D in [0, D]
        i128 pmin = fl(k1 * D - s_hi * bm, i128(T) * bm) - 1;
        i128 pmax = fl((k1 + 1) * D - s_lo * bm, i128(T) * bm) + 1;
        for (i128 pp = pmin; pp <= pmax; ++pp) {
            i128 lo = (pp * T + s_lo) * bm - k1 * D, hi = (pp * T + s_hi) * bm - k1 * D;
            if (hi < 0 || lo > D) continue;
            if (lo < 0) lo = 0;
            if (hi > D) hi = D;
            items.push_back({std::int64_t(lo), std::int64_t(hi), std::int64_t(D)});
        }
    }
    std::vector<detail::Comp> comps;
    detail::merge_components(items, comps);
    items = {};
    out.components = comps.size();

    // relative depth L with b^-(m+L) <= r_floor / 4
    int L = p.depth > 0 ? p.depth - m : 1;
    if (p.depth <= 0)
        while (std::pow(double(b), -(m + L)) > r_floor / 4) ++L;
    if (L < 1) throw std::invalid_argument("measure depth must exceed the ball depth");
    if (L * std::log2(double(b)) > 62 || L * std::log2(double(g.n)) > 62) throw std::overflow_error("measure depth too large");
    out.depth = m + L;
    auto npow = count_powers<std::uint64_t>(g.n, L);
    auto bpow = count_powers<std::uint64_t>(b, L);
    const int bm1 = b - 1;

    std::vector<std::pair<std::uint64_t, std::uint64_t>> in_r(comps.size()), me_r(comps.size());
    parallel_for(comps.size(), [&](std::size_t i) {
        const auto& c = comps[i];
        auto lo = locate<std::int64_t, std::uint64_t>(g, c.lo, c.lo_den, L, npow);
        auto hi = locate<std::int64_t, std::uint64_t>(g, c.hi, c.hi_den, L, npow);
        auto cnt = interval_counts<std::int64_t, std::uint64_t>(g, lo, c.lo_den, hi, c.hi_den);
        std::uint64_t first_in = lo.C + ((lo.in_d && cmp_frac(lo.r, c.lo_den, g.min_digit, bm1) > 0) ? 1 : 0);
        in_r[i] = {first_in, first_in + cnt.inside - 1};
        if (cnt.inside == 0) in_r[i] = {1, 0};
        me_r[i] = meeting_rank_range<std::int64_t, std::uint64_t>(g, lo, c.lo_den, hi, c.hi_den, L, npow);
    });
    detail::RankSet inside, meeting;
    for (auto& r : in_r) inside.add(r.first, r.second);
    for (auto& r : me_r) meeting.add(r.first, r.second);
    out.inside_cells = inside.total;
    out.meeting_cells = meeting.total;
    const double NL = double(npow[L]);
    out.mu_F_lo = double(inside.total) / NL;
    out.mu_F_hi = double(meeting.total) / NL;
    const double scale = std::pow(Qd, 1 - p.tau);
    out.mass_ratio_lo = out.mu_F_lo / scale;
    out.mass_ratio_hi = out.mu_F_hi / scale;
    if (inside.total == 0) {
        out.empty_F = true;
        return out;
    }
    out.nu_total_hi = double(meeting.total) / double(inside.total);

    // rejection sampling of mu|_B against the inside cells of F
    std::vector<std::uint64_t> xs;  // b-adic index below B
    const std::size_t batch = 1 << 16;
    const std::size_t max_draws = std::max<std::size_t>(p.samples * 100000, 1 << 20);
    std::vector<std::uint64_t> idx(batch);
    std::vector<char> ok(batch);
    while (xs.size() < p.samples && out.draws < max_draws) {
        parallel_for(batch, [&](std::size_t i) {
            CounterRng rng(p.seed, out.draws + i);
            std::uint64_t rank = 0, index = 0;
            for (int t = 0; t < L; ++t) {
                int j = int(rng.below(std::uint64_t(g.n)));
                rank = rank * std::uint64_t(g.n) + std::uint64_t(j);
                index = index * std::uint64_t(b) + std::uint64_t(sys.digits(0)[std::size_t(j)]);
            }
            ok[i] = inside.contains(rank);
            idx[i] = index;
        });
        for (std::size_t i = 0; i < batch && xs.size() < p.samples; ++i)
            if (ok[i]) xs.push_back(idx[i]);
        out.draws += batch;
    }
    out.samples = xs.size();

    const double cell = std::pow(double(b), -(m + L));
    const double muB = out.mu_B.get_d();
    const double denom_in = double(inside.total);
    std::vector<std::vector<std::pair<double, double>>> vals(xs.size());
    parallel_for(xs.size(), [&](std::size_t i) {
        CounterRng rng(p.seed ^ 0x5bd1e995ULL, i);
        for (const auto& c : out.cases) {
            double r = c.applicable ? detail::log_uniform(rng, c.r_lo, c.r_hi) : 0;
            if (!c.applicable) {
                vals[i].emplace_back(0, 0);
                continue;
            }
            const i128 R = i128(std::ceil(r / cell));
            const i128 X = i128(xs[i]);
            std::uint64_t a = detail::count_below(g, X - R, L, bpow, npow);
            std::uint64_t z = detail::count_below(g, X + R + 1, L, bpow, npow);
            double nu = double(meeting.below(z) - meeting.below(a)) / denom_in;
            vals[i].emplace_back(nu * muB / std::pow(r, p.s), r);
        }
    });
    for (auto& v : vals)
        for (std::size_t j = 0; j < out.cases.size(); ++j)
            if (out.cases[j].applicable) detail::update_case(out.cases[j], v[j].first, v[j].second);
    return out;
}

// ---------------------------------------------------------------- product construction

struct ProductAuditParams {
    CylinderWord ball;  // B, a cylinder of K
    long long Q = 256;
    double tau = 0.6;
    Rational c = Rational(1, 4);
    std::size_t nu_samples = 2000;
    std::uint64_t seed = 1;
};

struct ProductAuditResult {
    long long Q = 0;
    double tau = 0, delta = 0, s = 0;
    Rational c, eta1, eta2;          // eta1 eta2 = 1/Q exactly
    long long q_lo = 0, q_hi = 0;
    std::size_t rationals = 0;       // #Q(B)
    std::size_t skipped = 0;         // members whose K-part touches only at an endpoint
    std::size_t selected = 0;        // #X = #balls
    double count_scale = 0;          // mu(B) Q^{(1+tau)(delta-1)+2-tau}
    double count_ratio = 0;
    bool contained = true;           // each shrunken rectangle lies in its doubled one
    bool disjoint = true, covered = true;
    double factor = 0;               // 5^{(1+tau)/tau}
    Rational factor_used, needed_factor;
    std::vector<NuCase> cases;
};

namespace detail {

// Smallest depth-L (L <= cap) cylinder of the unit cylinder with K-part inside
// [lo, hi]/den, nearest to centre/den.  Returns {L, index} or {-1, 0}.
inline std::pair<int, std::uint64_t> inside_cylinder_near(const DigitTable& g, std::int64_t lo, std::int64_t hi,
                                                          std::int64_t centre, std::int64_t den, int L0, int cap) {
    const int bm1 = g.b - 1;
    std::vector<int> digits;
    for (int a = 0; a < g.b; ++a)
        if (g.in[a]) digits.push_back(a);
    for (int L = std::max(1, L0); L <= cap; ++L) {
        auto npow = count_powers<std::uint64_t>(g.n, L);
        auto a = locate<std::int64_t, std::uint64_t>(g, lo, den, L, npow);
        auto z = locate<std::int64_t, std::uint64_t>(g, hi, den, L, npow);
        auto cnt = interval_counts<std::int64_t, std::uint64_t>(g, a, den, z, den);
        if (cnt.inside == 0) continue;
        std::uint64_t first = a.C + ((a.in_d && cmp_frac(a.r, den, g.min_digit, bm1) > 0) ? 1 : 0);
        std::uint64_t last = first + cnt.inside - 1;
        auto cpos = locate<std::int64_t, std::uint64_t>(g, centre, den, L, npow);
        std::uint64_t rank = std::clamp(cpos.C, first, last);
        return {L, index_of_rank(g, rank, L, digits)};
    }
    return {-1, 0};
}

struct UnitCounter {
    const DigitTable* g;
    int L;
    std::vector<std::uint64_t> bpow, npow;
    double scale;  // b^L

    UnitCounter(const DigitTable& t, int depth)
        : g(&t), L(depth), bpow(count_powers<std::uint64_t>(t.b, depth)), npow(count_powers<std::uint64_t>(t.n, depth)),
          scale(double(bpow[depth])) {}
    // cylinders whose hull lies in [u, v] (lower) and that meet [u, v] (upper), one cell of slack for rounding
    std::uint64_t inside(double u, double v) const {
        i128 a = i128(std::ceil(u * scale)) + 1, z = i128(std::floor(v * scale)) - 1;
        if (z <= a) return 0;
        return count_below(*g, z, L, bpow, npow) - count_below(*g, a, L, bpow, npow);
    }
    std::uint64_t meeting(double u, double v) const {
        i128 a = i128(std::floor(u * scale)) - 1, z = i128(std::floor(v * scale)) + 2;
        if (z <= a) return 0;
        return count_below(*g, z, L, bpow, npow) - count_below(*g, a, L, bpow, npow);
    }
};

}  // namespace detail

/**
 * @brief Rectangle construction for K = K_1 x [0,1] at one Q.
 *
 * eta = (a, 1/(Q a)) with a the dyadic floor of Q^-tau / 4.  Q(B) holds the
 * pairs (p, q), ceil(cQ) <= q <= 2Q, whose rectangle B(p_1/q, a/q) x
 * B(p_2/q, eta_2/q) meets B.  Each gets a rectangle B(x_1, a/q) x B(x_2, eta_2/q)
 * with x in B inside the doubled rectangle; a greedy pass by descending size
 * picks the disjoint subfamily X.  nu averages mu over the balls B(x, a/q).
 */
inline ProductAuditResult product_construction_audit(const DigitSystem& sys, const ProductAuditParams& p) {
    if (sys.dim() != 2) throw std::invalid_argument("product construction is two-dimensional");
    if (!sys.is_full(1)) throw std::invalid_argument("last coordinate must carry the full digit set");
    if (!(p.tau > 0.5 && p.tau < 1)) throw std::invalid_argument("tau must lie in (1/2, 1)");
    if (p.c <= 0 || p.c >= 2) throw std::invalid_argument("c must lie in (0, 2)");
    if (p.Q < 2) throw std::invalid_argument("Q must be >= 2");
    validate_word(sys, p.ball);
    const int b = sys.base();
    const int m = p.ball.depth();
    const DigitTable g(sys, 0);
    const double Qd = double(p.Q);

    ProductAuditResult out;
    out.Q = p.Q;
    out.tau = p.tau;
    out.delta = sys.hausdorff_dim();
    out.s = out.delta + 3.0 / (1 + p.tau) - 2;
    out.c = p.c;
    out.q_lo = detail::ceil_cQ(p.c, p.Q);
    out.q_hi = 2 * p.Q;
    const int k = int(std::floor(61.0 - std::log2(2.0 * Qd) - std::log2(double(b)))) - 1;
    const std::int64_t A = std::int64_t(std::floor(std::ldexp(std::pow(Qd, -p.tau) / 4, k)));
    if (A < 1) throw std::overflow_error("Q^-tau/4 underflows the dyadic denominator");
    const BigInt two_k = BigInt(1) << k;
    out.eta1 = make_rational(BigInt(long(A)), two_k);
    out.eta2 = make_rational(two_k, BigInt(long(A)) * long(p.Q));
    if (out.eta2 >= Rational(1, 2)) throw std::invalid_argument("eta_2 must be < 1/2; increase Q");

    const i128 bm = i128(to_ll(ipow(b, m)));
    const i128 k1 = to_i128(word_index(b, p.ball.coordinate(0)));
    const i128 k2 = to_i128(word_index(b, p.ball.coordinate(1)));
    const i128 QA = i128(p.Q) * A;
    const i128 K2 = i128(1) << k;

    // candidates per q, built in parallel into per-q slots
    struct Cand {
        long long q;
        std::int64_t p1, p2;
        int L;
        std::uint64_t idx;  // x_1 = (k1 + (idx (b-1) + min)/(b^L (b-1))) / b^m
        bool skipped;
    };
    const std::size_t nq = std::size_t(out.q_hi - out.q_lo + 1);
    std::vector<std::vector<Cand>> per_q(nq);
    auto fl = [](i128 a, i128 c) { return a >= 0 ? a / c : -((-a + c - 1) / c); };
    const int cap = std::min(24, int(60 / std::log2(double(b))));
    parallel_for(nq, [&](std::size_t t) {
        const long long q = out.q_lo + (long long)t;
        const i128 D = i128(q) * K2;  // coordinate-0 denominator
        // p2: [p2 - eta2, p2 + eta2] / q meets [k2, k2+1] / b^m; in units 1/(q Q A b^m)
        std::vector<std::int64_t> p2s;
        {
            i128 lo = fl(k2 * q * QA - K2 * bm, QA * bm) - 1, hi = fl((k2 + 1) * q * QA + K2 * bm, QA * bm) + 1;
            for (i128 v = lo; v <= hi; ++v) {
                i128 top = v * QA * bm + K2 * bm, bot = v * QA * bm - K2 * bm;
                if (top >= k2 * q * QA && bot <= (k2 + 1) * q * QA) p2s.push_back(std::int64_t(v));
            }
        }
        if (p2s.empty()) return;
        i128 plo = fl(k1 * q * K2 - A * bm, K2 * bm) - 1, phi = fl((k1 + 1) * q * K2 + A * bm, K2 * bm) + 1;
        const int L0 = std::max(1, int(std::floor(std::log(double(D) / (2.0 * A * double(bm))) / std::log(double(b)))));
        for (i128 p1 = plo; p1 <= phi; ++p1) {
            i128 lo = (p1 * K2 - A) * bm - k1 * D, hi = (p1 * K2 + A) * bm - k1 * D, ce = p1 * K2 * bm - k1 * D;
            if (hi < 0 || lo > D) continue;
            lo = std::max<i128>(lo, 0);
            hi = std::min<i128>(hi, D);
            if (!k_meets_unit<std::int64_t>(g, std::int64_t(lo), std::int64_t(D), std::int64_t(hi), std::int64_t(D))) continue;
            auto [L, idx] = detail::inside_cylinder_near(g, std::int64_t(lo), std::int64_t(hi),
                                                         std::int64_t(std::clamp<i128>(ce, 0, D)), std::int64_t(D), L0, cap);
            for (auto p2 : p2s) per_q[t].push_back({q, std::int64_t(p1), p2, L, idx, L < 0});
        }
    });

    std::vector<Rect> rects;
    std::vector<std::size_t> owner;
    std::vector<Cand> cands;
    const Rational lo2 = make_rational(BigInt(long(k2)), BigInt(long(bm)));
    const Rational hi2 = make_rational(BigInt(long(k2 + 1)), BigInt(long(bm)));
    for (auto& v : per_q)
        for (auto& c : v) {
            ++out.rationals;
            if (c.skipped) {
                ++out.skipped;
                continue;
            }
            Rect r;
            BigInt den = ipow(b, unsigned(c.L)) * (b - 1);
            Rational y = make_rational(BigInt(long(c.idx)) * (b - 1) + g.min_digit, den);
            r.centre.push_back((Rational(BigInt(long(k1))) + y) / Rational(BigInt(long(bm))));
            Rational x2 = make_rational(BigInt(long(c.p2)), BigInt(long(c.q)));
            r.centre.push_back(std::clamp<Rational>(x2, lo2, hi2));
            r.half = {out.eta1 / long(c.q), out.eta2 / long(c.q)};
            r.scale = 1.0 / double(c.q);
            Rational c1 = make_rational(BigInt(long(c.p1)), BigInt(long(c.q)));
            if (abs(r.centre[0] - c1) > r.half[0] || abs(r.centre[1] - x2) > r.half[1]) out.contained = false;
            rects.push_back(std::move(r));
            cands.push_back(c);
        }
    per_q = {};
    if (rects.empty()) throw std::runtime_error("empty ball family: Q(B) has no usable members");

    out.factor = std::pow(5.0, (1 + p.tau) / p.tau);
    auto cov = greedy_disjoint_cover(rects, Rational(std::floor(out.factor * 1024) / 1024));
    out.factor_used = cov.factor_used;
    out.needed_factor = cov.needed_factor;
    out.disjoint = cov.disjoint;
    out.covered = cov.covered;
    out.selected = cov.selected.size();
    const double muB = cylinder_measure(sys, p.ball).get_d();
    out.count_scale = muB * std::pow(Qd, (1 + p.tau) * (out.delta - 1) + 2 - p.tau);
    out.count_ratio = double(out.selected) / out.count_scale;

    // nu = average of mu|_D / mu(D) over balls D = B(x, a/q), x in X
    struct Ball {
        double x1, x2, h;
        double m1;  // cylinders of depth Lnu inside the first side: lower bound for mu_1 n^Lnu
    };
    const double a_min = out.eta1.get_d() / double(out.q_hi);
    int Lnu = 1;
    while (std::pow(double(b), -Lnu) > a_min / 64) ++Lnu;
    if (Lnu * std::log2(double(b)) > 52) throw std::overflow_error("nu resolution exceeds double precision");
    detail::UnitCounter uc(g, Lnu);
    std::vector<Ball> balls;
    for (auto i : cov.selected) {
        double h = rects[i].half[0].get_d();
        Ball bl{rects[i].centre[0].get_d(), rects[i].centre[1].get_d(), h, 0};
        bl.m1 = double(uc.inside(bl.x1 - h, bl.x1 + h));
        balls.push_back(bl);
    }
    std::sort(balls.begin(), balls.end(), [](const Ball& u, const Ball& v) { return u.x1 < v.x1; });
    double hmax = 0;
    for (auto& bl : balls) hmax = std::max(hmax, bl.h);
    const double nB = double(balls.size());
    const double r1 = std::pow(Qd, -(1 + p.tau));
    const double radiusB = std::pow(double(b), -m);
    out.cases = {{"1", r1, radiusB}, {"2", r1 / double(b * b), r1}};
    for (auto& c : out.cases)
        if (!(c.r_lo < c.r_hi)) c.applicable = false;

    std::vector<std::vector<std::pair<double, double>>> vals(p.nu_samples);
    std::vector<int> digits;
    for (int a = 0; a < b; ++a)
        if (g.in[a]) digits.push_back(a);
    parallel_for(p.nu_samples, [&](std::size_t i) {
        CounterRng rng(p.seed, i);
        const Ball& D = balls[std::size_t(rng.below(balls.size()))];
        // x ~ mu|_D: a cylinder inside D's first side, uniform second coordinate
        i128 a = i128(std::ceil((D.x1 - D.h) * uc.scale)) + 1, z = i128(std::floor((D.x1 + D.h) * uc.scale)) - 1;
        std::uint64_t ra = detail::count_below(g, a, Lnu, uc.bpow, uc.npow);
        std::uint64_t rz = detail::count_below(g, z, Lnu, uc.bpow, uc.npow);
        if (rz <= ra) return;
        std::uint64_t rank = ra + rng.below(rz - ra);
        double x1 = (double(detail::index_of_rank(g, rank, Lnu, digits)) + double(g.min_digit) / (b - 1)) / uc.scale;
        double x2 = D.x2 + (2 * rng.uniform() - 1) * D.h;
        for (const auto& c : out.cases) {
            if (!c.applicable) {
                vals[i].emplace_back(0, 0);
                continue;
            }
            double r = detail::log_uniform(rng, c.r_lo, c.r_hi);
            auto first = std::lower_bound(balls.begin(), balls.end(), x1 - r - hmax,
                                          [](const Ball& u, double v) { return u.x1 < v; });
            double nu = 0;
            for (auto it = first; it != balls.end() && it->x1 <= x1 + r + hmax; ++it) {
                double ylo = std::max(x2 - r, it->x2 - it->h), yhi = std::min(x2 + r, it->x2 + it->h);
                if (yhi < ylo || it->m1 <= 0) continue;
                double ulo = std::max(x1 - r, it->x1 - it->h), uhi = std::min(x1 + r, it->x1 + it->h);
                if (uhi < ulo) continue;
                nu += double(uc.meeting(ulo, uhi)) / it->m1 * (yhi - ylo) / (2 * it->h);
            }
            nu /= nB;
            vals[i].emplace_back(nu * muB / std::pow(r, out.s), r);
        }
    });
    for (auto& v : vals)
        for (std::size_t j = 0; j < v.size(); ++j)
            if (out.cases[j].applicable) detail::update_case(out.cases[j], v[j].first, v[j].second);
    return out;
}

}  // namespace mdset
