#pragma once

#include "approx_sets.hpp"
#include "measure.hpp"
#include "rng.hpp"
#include "stats.hpp"
#include "sweep.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace mdset {

/// Raised when a grid violates alpha <= (1 + delta - beta delta)/(d - delta).
struct ConsistencyError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

namespace detail {

inline std::pair<std::int64_t, std::int64_t> to_i64_fraction(const Rational& r, const char* what) {
    if (!r.get_num().fits_slong_p() || !r.get_den().fits_slong_p())
        throw std::overflow_error(std::string(what) + " does not fit 64-bit numerator/denominator");
    return {r.get_num().get_si(), r.get_den().get_si()};
}

inline BigInt big_pow(long base, int e) { return ipow(base, static_cast<unsigned long>(e)); }

inline BigInt pow_big(const BigInt& a, int e) {
    BigInt r;
    mpz_pow_ui(r.get_mpz_t(), a.get_mpz_t(), static_cast<unsigned long>(e));
    return r;
}

// word of the given rank among D-words of a one-dimensional system
inline CylinderWord word_from_rank(const DigitSystem& sys, int depth, u128 rank) {
    std::vector<int> digits(depth);
    const auto& D = sys.digits(0);
    for (int i = depth - 1; i >= 0; --i) {
        digits[i] = D[std::size_t(rank % u128(D.size()))];
        rank /= u128(D.size());
    }
    return CylinderWord::of(digits);
}

}  // namespace detail

/**
 * @brief Dyadic eta just below Q^-tau.
 *
 * The denominator is 2^k with k = ceil(tau log2 Q) + extra_bits, reduced
 * until the 64-bit sweep can hold (2Q) * lcm(theta_den, 2^k) * b(b-1).
 */
inline Rational audit_eta(long long Q, double tau, long long theta_den = 1, int base = 2, int extra_bits = 20) {
    if (Q < 1) throw std::invalid_argument("Q must be >= 1");
    double target = std::exp2(-tau * std::log2(double(Q)));
    int k = int(std::ceil(tau * std::log2(double(Q)))) + extra_bits;
    const double budget = 61.5 - std::log2(2.0 * double(Q)) - std::log2(double(theta_den)) -
                          std::log2(double(base) * double(base - 1));
    k = std::min(k, int(std::floor(budget)));
    if (k < 1) throw std::overflow_error("no room for eta denominator at this Q");
    double scaled = std::floor(std::ldexp(target, k));
    if (scaled < 1) throw std::overflow_error("eta underflows the available denominator");
    BigInt num;
    mpz_set_d(num.get_mpz_t(), scaled);
    return make_rational(num, BigInt(1) << k);
}

/// Family for A_Q(eta, theta): q in [Q, 2Q-1].
inline ShiftedFamily aq_family(long long q_lo, long long q_hi, const Rational& eta, const Rational& theta,
                               bool coprime = false) {
    detail::check_eta(eta);
    auto [en, ed] = detail::to_i64_fraction(eta, "eta");
    auto [tn, td] = detail::to_i64_fraction(theta, "theta");
    auto f = constant_family(q_lo, q_hi, en, ed, tn, td);
    f.coprime = coprime;
    return f;
}

/// Smallest n with N^n >= target (target > 0).
inline int depth_for_count(int N, double target, int cap = 60) {
    int n = 0;
    double v = 1;
    while (v < target && n < cap) {
        v *= N;
        ++n;
    }
    return n;
}

/// Exact mu-counts of A_Q-type families per depth-`report_depth` cylinder, at measure depth n.
inline MeasureVisitor sweep_measure_cells(const DigitTable& g, const ShiftedFamily& fam, int n, int report_depth) {
    if (n < report_depth) throw std::invalid_argument("measure depth below report depth");
    SweepPlan plan;
    plan.min_leaf_depth = report_depth;
    plan.max_leaf_depth = std::max(report_depth, std::min(n, 8));
    return sweep_family(g, fam, plan, MeasureVisitor(g, n, report_depth));
}

// ---------------------------------------------------------------- local audit

struct AuditGrid {
    std::vector<long long> Q_list;
    std::vector<double> taus;  // eta = Q^-tau, dyadic rounded
    Rational theta = 0;
    double alpha = 2;
    double beta = 0.5;
    long long Q_min = 1;      // cells with Q < Q_min are flagged, never dropped
    int max_ball_depth = 6;   // cap on the cylinder depth of balls
    int max_depth = 0;        // measure depth; 0 = automatic
    bool coprime = false;
    bool force_region = false;  // use the exact region path even in d = 1
};

struct AuditCell {
    long long Q = 0;
    double tau = 0;
    Rational eta;
    std::string ball_id;
    int ball_depth = 0;
    Rational num;      // mu(B cap A_Q), lower count
    Rational den;      // mu(B) Q eta^d
    Rational num_err;  // certified slack on num
    bool flagged = false;

    double ratio() const { return Rational(num / den).get_d(); }
    double err() const { return Rational(num_err / den).get_d(); }
};

struct AuditSummary {
    GeometricSummary overall;
    std::map<long long, GeometricSummary> per_Q;
    std::size_t flagged = 0;
    std::size_t zero_cells = 0;
    double max_rel_err = 0;
};

struct AuditReport {
    std::vector<AuditCell> cells;
    AuditSummary summary;
    nlohmann::json metadata = nlohmann::json::object();
};

inline AuditSummary summarize(const std::vector<AuditCell>& cells) {
    AuditSummary s;
    std::vector<double> all;
    std::map<long long, std::vector<double>> byQ;
    for (const auto& c : cells) {
        double r = c.ratio();
        all.push_back(r);
        byQ[c.Q].push_back(r);
        if (c.flagged) ++s.flagged;
        if (c.num == 0) ++s.zero_cells;
        if (c.num > 0) s.max_rel_err = std::max(s.max_rel_err, Rational(c.num_err / c.num).get_d());
    }
    s.overall = geometric_summary(all);
    for (auto& [Q, v] : byQ) s.per_Q[Q] = geometric_summary(v);
    return s;
}

inline nlohmann::json to_json(const GeometricSummary& g) {
    auto num = [](double v) -> nlohmann::json {
        if (!std::isfinite(v)) return nullptr;
        return v;
    };
    return {{"count", g.count},       {"nonpositive", g.nonpositive}, {"min", num(g.min)},
            {"max", num(g.max)},      {"median", num(g.median)},      {"geo_mean", num(g.geo_mean)},
            {"log_sd", num(g.log_sd)}, {"spread", num(g.spread)}};
}

inline nlohmann::json to_json(const AuditSummary& s) {
    nlohmann::json perQ = nlohmann::json::array();
    for (const auto& [Q, g] : s.per_Q) {
        auto j = to_json(g);
        j["Q"] = Q;
        perQ.push_back(j);
    }
    return {{"overall", to_json(s.overall)},
            {"per_Q", perQ},
            {"flagged_cells", s.flagged},
            {"zero_cells", s.zero_cells},
            {"max_relative_error", s.max_rel_err}};
}

/// Throws ConsistencyError when alpha exceeds (1 + delta - beta delta)/(d - delta).
inline void consistency_guard(const DigitSystem& sys, double alpha, double beta) {
    const double delta = sys.hausdorff_dim();
    const int d = sys.dim();
    if (delta >= d - 1e-12) return;
    const double bound = (1 + delta - beta * delta) / (double(d) - delta);
    if (alpha > bound + 1e-12)
        throw ConsistencyError("alpha = " + std::to_string(alpha) + " exceeds (1+delta-beta*delta)/(d-delta) = " +
                               std::to_string(bound));
}

inline void validate_grid(const DigitSystem& sys, const AuditGrid& grid) {
    if (grid.Q_list.empty() || grid.taus.empty()) throw std::invalid_argument("empty grid");
    if (!(grid.beta > 0)) throw std::invalid_argument("beta must be positive");
    const double d = sys.dim();
    for (double t : grid.taus) {
        if (t < 1 / d - 1e-12) throw std::invalid_argument("tau below 1/d: eta would exceed Q^{-1/d}");
        if (t > grid.alpha + 1e-12) throw std::invalid_argument("tau above alpha: eta would fall below Q^{-alpha}");
    }
    for (long long Q : grid.Q_list)
        if (Q < 1) throw std::invalid_argument("Q must be >= 1");
    consistency_guard(sys, grid.alpha, grid.beta);
}

/// Largest cylinder depth m with b^-m >= Q^-beta, capped.
inline int max_ball_depth_for(int base, long long Q, double beta, int cap) {
    int m = int(std::floor(beta * std::log(double(Q)) / std::log(double(base)) + 1e-9));
    return std::max(0, std::min(m, cap));
}

/**
 * @brief mu(B cap A_Q(eta, theta)) / (mu(B) Q eta^d) over a grid of Q, eta and cylinder balls.
 *
 * Balls are all cylinders with side b^-m >= Q^-beta.  d = 1 uses the
 * pruned sweep; other dimensions build A_Q inside each ball exactly.
 */
inline AuditReport local_counting_audit(const DigitSystem& sys, const AuditGrid& grid) {
    validate_grid(sys, grid);
    const int d = sys.dim();
    const int b = sys.base();
    AuditReport rep;
    for (long long Q : grid.Q_list) {
        const int mmax = max_ball_depth_for(b, Q, grid.beta, grid.max_ball_depth);
        for (double tau : grid.taus) {
            Rational eta = audit_eta(Q, tau, grid.theta.get_den().get_si(), b);
            Rational eta_d = 1;
            for (int j = 0; j < d; ++j) eta_d *= eta;
            const double smallest_ball = std::pow(sys.total_count().get_d(), -double(mmax));
            int n = grid.max_depth;
            if (n <= 0) {
                double target = 3.0 * 1024 * double(Q) / (eta.get_d() * smallest_ball);
                n = depth_for_count(sys.count(0), target);
            }
            n = std::max(n, mmax);
            auto push = [&](const std::string& id, int m, const MeasureValue& mv) {
                AuditCell c;
                c.Q = Q;
                c.tau = tau;
                c.eta = eta;
                c.ball_id = id;
                c.ball_depth = m;
                c.num = mv.value;
                c.num_err = mv.error_bound;
                c.den = make_rational(BigInt(1), detail::pow_big(sys.total_count(), m)) * long(Q) * eta_d;
                c.flagged = Q < grid.Q_min;
                rep.cells.push_back(std::move(c));
            };
            if (d == 1 && !grid.force_region) {
                DigitTable g(sys, 0);
                auto fam = aq_family(Q, 2 * Q - 1, eta, grid.theta, grid.coprime);
                auto vis = sweep_measure_cells(g, fam, n, mmax);
                const BigInt total = detail::big_pow(g.n, n);
                for (int m = 0; m <= mmax; ++m) {
                    const u128 per = vis.npow[mmax - m];
                    for (u128 r = 0; r < vis.npow[m]; ++r) {
                        u128 in = 0, me = 0;
                        for (u128 c = r * per; c < (r + 1) * per; ++c) {
                            in += vis.inside[std::size_t(c)];
                            me += vis.meeting[std::size_t(c)];
                        }
                        MeasureValue mv{make_rational(big(in), total), make_rational(big(me - in), total)};
                        push(detail::word_from_rank(sys, m, r).id(), m, mv);
                    }
                }
            } else {
                for (int m = 0; m <= mmax; ++m)
                    for (const auto& w : all_words(sys, m)) {
                        auto R = build_AQ(Q, eta, {grid.theta}, cylinder_box(sys, w), grid.coprime);
                        push(w.id(), m, measure_of_region(sys, R, n));
                    }
            }
        }
    }
    rep.summary = summarize(rep.cells);
    rep.metadata["sys"] = sys.to_json();
    rep.metadata["theta"] = to_string(grid.theta);
    rep.metadata["alpha"] = grid.alpha;
    rep.metadata["beta"] = grid.beta;
    rep.metadata["Q_min"] = grid.Q_min;
    rep.metadata["max_ball_depth"] = grid.max_ball_depth;
    rep.metadata["ball_rule"] = "cylinders with side b^-m >= Q^-beta";
    return rep;
}

// ---------------------------------------------------------------- global and covering audits

struct GlobalAudit {
    MeasureValue mu;  // mu(A_Q(eta, theta))
    Rational den;     // Q eta^d
    int depth = 0;
    double ratio() const { return Rational(mu.value / den).get_d(); }
    double err() const { return Rational(mu.error_bound / den).get_d(); }
};

namespace detail {

struct LebesgueTally {
    double length = 0;      // Lebesgue measure of the union
    double length_err = 0;  // rigorous bound on |length - exact|
    u128 cover = 0;         // depth-nc b-adic cells meeting the closed union
};

/**
 * @brief A_Q(eta, 0) on [0,1], for several eta in one pass.
 *
 * Around a reduced a/c the intervals from q = c, 2c, ... nest, so only the
 * smallest multiple q* of c in [Q, 2Q) matters.  Reduced fractions with
 * c < 2Q come in increasing order from the Farey recurrence; a short buffer
 * ordered by left end restores left-end order, since radii differ by at most 2x.
 * The union is symmetric about 1/2, so only [0, 1/2] is walked.
 */
inline std::vector<LebesgueTally> farey_union_tally(int base, long long Q, const std::vector<Rational>& etas,
                                                    const std::vector<int>& cover_depths, bool coprime = false) {
    const std::int64_t N = 2 * Q - 1;
    struct Iv {
        std::int64_t lo, lo_den, hi, hi_den;
    };
    struct State {
        std::int64_t en, ed;
        std::int64_t Bc;  // b^nc
        std::vector<Iv> buf;
        std::int64_t last_cover = -1;
        long double half_len = 0;
        double merged = 0, comps = 0;
        u128 cells = 0;     // cells k < Bc-1-k
        bool mid_hit = false;
        double rmax;
        bool has = false;
        Iv comp{};
    };
    // floor(x B / den) for 0 <= x <= den: double estimate, checked exactly when close to an integer
    auto fmd = [](std::int64_t x, std::int64_t B, std::int64_t den) {
        const double y = double(x) * double(B) / double(den);
        std::int64_t q = std::int64_t(y);
        const double frac = y - double(q), tol = y * 1e-15 + 1e-12;
        if (frac > tol && frac < 1 - tol && y < 0x1p52) return q;
        const i128 exact = i128(x) * B;
        while (i128(q) * den > exact) --q;
        while (i128(q + 1) * den <= exact) ++q;
        return q;
    };
    auto cmd = [&](std::int64_t x, std::int64_t B, std::int64_t den) {
        std::int64_t q = fmd(x, B, den);
        return i128(q) * den < i128(x) * B ? q + 1 : q;
    };
    std::vector<State> st(etas.size());
    for (std::size_t i = 0; i < etas.size(); ++i) {
        check_eta(etas[i]);
        auto [en, ed] = to_i64_fraction(etas[i], "eta");
        if (std::log2(double(2 * Q)) + std::log2(double(ed)) > 60) throw std::overflow_error("eta denominator too large");
        if (std::log2(double(base)) * cover_depths[i] > 62) throw std::overflow_error("cover depth too large");
        st[i].en = en;
        st[i].ed = ed;
        st[i].Bc = 1;
        for (int k = 0; k < cover_depths[i]; ++k) st[i].Bc *= base;
        st[i].rmax = double(en) / double(ed) / double(Q);
    }
    auto finish = [&](State& s) {
        const Iv& c = s.comp;
        s.comps += 1;
        if (c.lo_den == c.hi_den) {
            s.half_len += (long double)(double(c.hi - c.lo) / double(c.hi_den));
        } else {
            s.merged += 1;
            s.half_len += (long double)(double(c.hi) / double(c.hi_den) - double(c.lo) / double(c.lo_den));
        }
        // cells k with k <= Bc-1-k; cell k = [k, k+1]/Bc meets [lo, hi] iff ceil(lo Bc) - 1 <= k <= floor(hi Bc)
        std::int64_t k0 = cmd(c.lo, s.Bc, c.lo_den) - 1, k1 = fmd(c.hi, s.Bc, c.hi_den);
        const std::int64_t kmid = (s.Bc - 1) / 2;
        if (k0 < 0) k0 = 0;
        if (k1 > kmid) k1 = kmid;
        if (k0 <= s.last_cover) k0 = s.last_cover + 1;
        if (k1 >= k0) {
            if (s.Bc % 2 == 1 && k1 == kmid) {
                s.mid_hit = true;
                s.cells += u128(k1 - k0);
            } else {
                s.cells += u128(k1 - k0 + 1);
            }
            s.last_cover = k1;
        }
    };
    auto feed = [&](State& s, const Iv& v) {
        Iv& c = s.comp;
        if (s.has && i128(v.lo) * c.hi_den <= i128(c.hi) * v.lo_den) {
            if (i128(v.hi) * c.hi_den > i128(c.hi) * v.hi_den) {
                c.hi = v.hi;
                c.hi_den = v.hi_den;
            }
            return;
        }
        if (s.has) finish(s);
        c = v;
        s.has = true;
    };
    auto lo_less = [](const Iv& a, const Iv& b) { return i128(a.lo) * b.lo_den < i128(b.lo) * a.lo_den; };

    std::vector<std::int64_t> qstar(std::size_t(N + 1));
    for (std::int64_t c = 1; c <= N; ++c) qstar[std::size_t(c)] = c >= Q ? c : c * ((Q + c - 1) / c);

    auto emit = [&](std::int64_t a, std::int64_t c) {
        if (coprime && c < Q) return;
        const std::int64_t qs = qstar[std::size_t(c)];
        const std::int64_t mult = qs / c;
        const double center = double(a) / double(c);
        for (State& s : st) {
            const std::int64_t den = qs * s.ed;
            const std::int64_t mid = a * mult * s.ed;
            Iv v{mid - s.en, den, mid + s.en, den};
            if (v.lo < 0) v.lo = 0;
            if (2 * i128(v.hi) > den) v = {v.lo, v.lo_den, 1, 2};
            if (s.buf.empty() || !lo_less(v, s.buf.back()))
                s.buf.push_back(v);
            else
                s.buf.insert(std::upper_bound(s.buf.begin(), s.buf.end(), v, lo_less), v);
            // later intervals start at or after center - rmax
            const double release = center - s.rmax - 1e-12;
            std::size_t k = 0;
            while (k < s.buf.size() && double(s.buf[k].lo) / double(s.buf[k].lo_den) < release) feed(s, s.buf[k++]);
            if (k) s.buf.erase(s.buf.begin(), s.buf.begin() + std::ptrdiff_t(k));
        }
    };
    // Farey sequence of order N from 0/1 up to 1/2
    std::int64_t a = 0, b = 1, c = 1, d = N;
    emit(a, b);
    while (2 * c <= d) {
        emit(c, d);
        std::int64_t k = (N + b) / d;
        std::int64_t e = k * c - a, f = k * d - b;
        a = c;
        b = d;
        c = e;
        d = f;
    }
    std::vector<LebesgueTally> out;
    constexpr double u = 0x1p-53;
    for (State& s : st) {
        for (const auto& v : s.buf) feed(s, v);
        if (s.has) finish(s);
        LebesgueTally t;
        t.length = double(2 * s.half_len);
        // 3u per term (relative when isolated, absolute when merged), plus the long double sum
        t.length_err = 2 * (3 * u * (double(s.half_len) + s.merged) + s.comps * 0x1p-63 * double(s.half_len)) + 4 * u;
        t.cover = 2 * s.cells + (s.mid_hit ? 1 : 0);
        out.push_back(t);
    }
    return out;
}

}  // namespace detail

/// Smallest n with b^n eta >= Q.
inline int cover_depth(int base, long long Q, const Rational& eta) {
    int n = 0;
    Rational v = eta;
    while (v < long(Q)) {
        v *= base;
        ++n;
        if (n > 120) throw std::overflow_error("cover depth overflow");
    }
    return n;
}

inline int global_depth(const DigitSystem& sys, long long Q, const Rational& eta) {
    return depth_for_count(sys.count(0), 3.0 * 1024 * double(Q) / eta.get_d());
}

struct CoverAudit {
    int depth = 0;      // ceil(log_b(Q/eta))
    BigInt count = 0;   // depth-n cylinders of K meeting A_Q
    double ratio = 0;   // count / (Q^{1+delta} eta^{d-delta})
    double inflation_bound = 1;  // b^delta, from the b-adic proxy for radius eta/Q balls
};

namespace detail {

inline bool lebesgue_fast_path(const DigitSystem& sys, const Rational& theta) {
    return sys.dim() == 1 && sys.is_full() && theta == 0;
}

inline CoverAudit make_cover(const DigitSystem& sys, long long Q, const Rational& eta, int depth, const BigInt& count) {
    CoverAudit out;
    out.depth = depth;
    out.count = count;
    const double delta = sys.hausdorff_dim();
    out.ratio = count.get_d() / (std::pow(double(Q), 1 + delta) * std::pow(eta.get_d(), double(sys.dim()) - delta));
    out.inflation_bound = std::pow(double(sys.base()), delta);
    return out;
}

inline GlobalAudit make_global(const DigitSystem& sys, long long Q, const Rational& eta, int depth, const BigInt& inside,
                               const BigInt& meeting) {
    GlobalAudit out;
    out.den = long(Q);
    for (int j = 0; j < sys.dim(); ++j) out.den *= eta;
    out.depth = depth;
    const BigInt total = pow_big(sys.total_count(), depth);
    out.mu = {make_rational(inside, total), make_rational(meeting - inside, total)};
    return out;
}

// Lebesgue measure from the Farey pass; depth 0 marks a length rather than a cell count.
inline GlobalAudit make_global_exact(long long Q, const Rational& eta, const LebesgueTally& t) {
    GlobalAudit out;
    out.den = Rational(long(Q)) * eta;
    out.depth = 0;
    out.mu = {Rational(t.length), Rational(t.length_err)};
    return out;
}

}  // namespace detail

/// mu(A_Q(eta, theta)) / (Q eta^d).
inline GlobalAudit global_counting_audit(const DigitSystem& sys, long long Q, const Rational& eta, const Rational& theta,
                                         int max_depth = 0, bool coprime = false, bool allow_fast = true) {
    if (Q < 1) throw std::invalid_argument("Q must be >= 1");
    detail::check_eta(eta);
    const int d = sys.dim();
    const int depth = max_depth > 0 ? max_depth : global_depth(sys, Q, eta);
    if (allow_fast && detail::lebesgue_fast_path(sys, theta)) {
        auto t = detail::farey_union_tally(sys.base(), Q, {eta}, {0}, coprime)[0];
        return detail::make_global_exact(Q, eta, t);
    }
    if (d == 1) {
        DigitTable g(sys, 0);
        auto vis = sweep_measure_cells(g, aq_family(Q, 2 * Q - 1, eta, theta, coprime), depth, 0);
        return detail::make_global(sys, Q, eta, depth, big(vis.inside[0]), big(vis.meeting[0]));
    }
    GlobalAudit out;
    out.den = long(Q);
    for (int j = 0; j < d; ++j) out.den *= eta;
    out.depth = depth;
    out.mu = measure_of_region(sys, build_AQ(Q, eta, {theta}, unit_box(d), coprime), depth);
    return out;
}

inline CoverAudit covering_count_audit(const DigitSystem& sys, long long Q, const Rational& eta, const Rational& theta,
                                       bool coprime = false, bool allow_fast = true) {
    if (sys.dim() != 1) throw std::invalid_argument("covering audit is implemented for d = 1");
    detail::check_eta(eta);
    DigitTable g(sys, 0);
    const int depth = cover_depth(g.b, Q, eta);
    if (std::log2(double(g.n)) * depth > 120) throw std::overflow_error("cover depth overflow");
    if (allow_fast && detail::lebesgue_fast_path(sys, theta)) {
        auto t = detail::farey_union_tally(g.b, Q, {eta}, {depth}, coprime)[0];
        return detail::make_cover(sys, Q, eta, depth, big(t.cover));
    }
    SweepPlan plan;
    plan.max_leaf_depth = std::min(depth, 8);
    auto vis = sweep_family(g, aq_family(Q, 2 * Q - 1, eta, theta, coprime), plan, CoverVisitor(g, {depth}));
    return detail::make_cover(sys, Q, eta, depth, big(vis.counts[0]));
}

/// Global and covering audits for several eta at one Q; one pass on the full digit set with theta = 0.
inline std::vector<std::pair<GlobalAudit, CoverAudit>> global_and_cover_batch(const DigitSystem& sys, long long Q,
                                                                              const std::vector<Rational>& etas,
                                                                              const Rational& theta) {
    std::vector<std::pair<GlobalAudit, CoverAudit>> out;
    if (!detail::lebesgue_fast_path(sys, theta)) {
        for (const auto& e : etas) out.emplace_back(global_counting_audit(sys, Q, e, theta), covering_count_audit(sys, Q, e, theta));
        return out;
    }
    std::vector<int> cd;
    for (const auto& e : etas) cd.push_back(cover_depth(sys.base(), Q, e));
    auto t = detail::farey_union_tally(sys.base(), Q, etas, cd);
    for (std::size_t i = 0; i < etas.size(); ++i)
        out.emplace_back(detail::make_global_exact(Q, etas[i], t[i]),
                         detail::make_cover(sys, Q, etas[i], cd[i], big(t[i].cover)));
    return out;
}

// ---------------------------------------------------------------- product-form audits

namespace detail {

/**
 * @brief Counts of depth-(m+L) cylinders below the depth-m cylinder with index k
 * whose K-part lies in / meets {x : ||q x|| <= en/ed}.
 */
inline CylinderCounts<u128> periodic_counts(const DigitTable& g, std::int64_t q, std::int64_t en, std::int64_t ed,
                                            i128 k, i128 bm, int L, const std::vector<u128>& npow) {
    const i128 D = i128(q) * ed;
    if (D * g.b * (g.b - 1) >= (i128(1) << 62)) throw std::overflow_error("periodic_counts: denominator too large");
    auto fl = [](i128 a, i128 c) {
        i128 r = a / c;
        if (a % c != 0 && ((a < 0) != (c < 0))) --r;
        return r;
    };
    CylinderCounts<u128> total;
    const i128 p_lo = fl(k * q, bm) - 1, p_hi = fl((k + 1) * q, bm) + 1;
    for (i128 p = p_lo; p <= p_hi; ++p) {
        i128 lo = (p * ed - en) * bm - k * D;
        i128 hi = (p * ed + en) * bm - k * D;
        if (hi < 0 || lo > D) continue;
        if (lo < 0) lo = 0;
        if (hi > D) hi = D;
        std::int64_t dd = std::int64_t(D);
        auto a = locate<std::int64_t, u128>(g, std::int64_t(lo), dd, L, npow);
        auto c = locate<std::int64_t, u128>(g, std::int64_t(hi), dd, L, npow);
        auto cnt = interval_counts<std::int64_t, u128>(g, a, dd, c, dd);
        total.inside += cnt.inside;
        total.meeting += cnt.meeting;
    }
    return total;
}

inline void check_product_eta(const DigitSystem& sys, const std::vector<Rational>& eta) {
    if (static_cast<int>(eta.size()) != sys.dim()) throw std::invalid_argument("eta vector length must equal d");
    for (const auto& e : eta) check_eta(e);
}

}  // namespace detail

struct NondivergenceAudit {
    MeasureValue sum;  // sum_{q <= Q} mu_omega(R(q, eta))
    Rational den;      // Q eta_1 ... eta_d
    std::vector<int> depths;
    double ratio() const { return Rational(sum.value / den).get_d(); }
    double err() const { return Rational(sum.error_bound / den).get_d(); }
};

/**
 * @brief sum_{1 <= q <= Q} mu_omega(R(q, eta)) / (Q prod eta_j).
 *
 * mu_omega is mu restricted to the cylinder omega and renormalized; in product
 * form each term factors over coordinates.
 */
inline NondivergenceAudit nondivergence_audit(const DigitSystem& sys, const CylinderWord& omega, long long Q,
                                              const std::vector<Rational>& eta, int max_depth = 0) {
    validate_word(sys, omega);
    detail::check_product_eta(sys, eta);
    if (Q < 1) throw std::invalid_argument("Q must be >= 1");
    const int d = sys.dim();
    const int m = omega.depth();
    const BigInt bm_big = detail::big_pow(sys.base(), m);
    if (!bm_big.fits_slong_p()) throw std::overflow_error("cylinder too deep");
    const i128 bm = bm_big.get_si();
    NondivergenceAudit out;
    out.den = long(Q);
    for (const auto& e : eta) out.den *= e;

    std::vector<std::vector<u128>> in(d), me(d);
    BigInt denom = 1;
    for (int j = 0; j < d; ++j) {
        DigitTable g(sys, j);
        auto [en, ed] = detail::to_i64_fraction(eta[j], "eta");
        int L = max_depth > 0 ? max_depth
                              : depth_for_count(g.n, 4096.0 * double(Q) * double(bm) / eta[j].get_d(), 120);
        L = std::min(L, int(120 / std::log2(double(std::max(2, g.n)))));
        out.depths.push_back(L);
        auto npow = count_powers<u128>(g.n, L);
        denom *= big(npow[L]);
        const i128 k = to_i128(word_index(sys.base(), omega.coordinate(j)));
        in[j].resize(std::size_t(Q));
        me[j].resize(std::size_t(Q));
        parallel_for(std::size_t(Q), [&](std::size_t i) {
            auto c = detail::periodic_counts(g, std::int64_t(i) + 1, en, ed, k, bm, L, npow);
            in[j][i] = c.inside;
            me[j][i] = c.meeting;
        });
    }
    BigInt lo = 0, hi = 0;
    for (std::size_t i = 0; i < std::size_t(Q); ++i) {
        BigInt a = 1, c = 1;
        for (int j = 0; j < d; ++j) {
            a *= big(in[j][i]);
            c *= big(me[j][i]);
        }
        lo += a;
        hi += c;
    }
    out.sum = {make_rational(lo, denom), make_rational(hi - lo, denom)};
    return out;
}

struct UbiquityAudit {
    std::string method;  // "monte-carlo" or "exact"
    Rational c;
    long long q_start = 0;  // ceil(c Q)
    double ratio = 0;
    double se = 0;          // Monte Carlo standard error, or certified slack for the exact path
    std::size_t samples = 0, hits = 0;
    double small_q_mass = 0;  // fraction of samples already in some R(q), q < q_start
    bool c_auto = false;
    bool c_calibrated = true;  // false when no candidate c met the small-q mass bound
};

namespace detail {

inline void check_ubiquity(const DigitSystem& sys, long long Q, const std::vector<Rational>& eta) {
    check_product_eta(sys, eta);
    if (Q < 1) throw std::invalid_argument("Q must be >= 1");
    Rational prod = 1;
    for (const auto& e : eta) prod *= e;
    if (prod != make_rational(1, Q)) throw std::invalid_argument("eta_1 ... eta_d must equal 1/Q exactly");
}

inline long long ceil_cQ(const Rational& c, long long Q) { return to_ll(ceil(c * long(Q))); }

struct SampleHits {
    std::vector<std::int64_t> qmin, qmax;  // 0 when no q in [1, 2Q] hits
};

// For each sample x ~ mu|_B: smallest and largest q in [1, 2Q] with x in R(q, eta).
inline SampleHits ubiquity_scan(const DigitSystem& sys, const CylinderWord& B, long long Q,
                                const std::vector<Rational>& eta, std::size_t samples, std::uint64_t seed) {
    const int d = sys.dim();
    const int b = sys.base();
    int S = 1;
    while (std::log2(double(b)) * (S + 1) + std::log2(double(b - 1)) < 61.0) ++S;
    if (S <= B.depth()) throw std::invalid_argument("ball too deep for 64-bit sampling");
    u128 Dx = 1;
    for (int i = 0; i < S; ++i) Dx *= u128(b);
    Dx *= u128(b - 1);
    std::vector<u128> en(d), ed(d);
    for (int j = 0; j < d; ++j) {
        auto [n, e] = to_i64_fraction(eta[j], "eta");
        en[j] = u128(n);
        ed[j] = u128(e);
    }
    SampleHits out;
    out.qmin.assign(samples, 0);
    out.qmax.assign(samples, 0);
    parallel_for(samples, [&](std::size_t i) {
        CounterRng rng(seed, i);
        std::vector<std::uint64_t> X(d), r(d);
        for (int j = 0; j < d; ++j) {
            u128 k = 0;
            for (int t = 0; t < B.depth(); ++t) k = k * u128(b) + u128(B.letters[t][j]);
            for (int t = B.depth(); t < S; ++t) k = k * u128(b) + u128(sys.digits(j)[rng.below(sys.count(j))]);
            X[j] = std::uint64_t(k * u128(b - 1) + u128(sys.digits(j).front()));
        }
        const std::uint64_t D = std::uint64_t(Dx);
        for (int j = 0; j < d; ++j) r[j] = 0;
        std::int64_t lo = 0, hi = 0;
        for (std::int64_t q = 1; q <= 2 * Q; ++q) {
            bool all = true;
            for (int j = 0; j < d; ++j) {
                r[j] += X[j];
                if (r[j] >= D) r[j] -= D;
                std::uint64_t dist = std::min(r[j], D - r[j]);
                if (u128(dist) * ed[j] > en[j] * u128(D)) all = false;
            }
            if (all) {
                if (lo == 0) lo = q;
                hi = q;
            }
        }
        out.qmin[i] = lo;
        out.qmax[i] = hi;
    });
    return out;
}

inline UbiquityAudit ubiquity_from_hits(const SampleHits& h, const Rational& c, long long Q) {
    UbiquityAudit u;
    u.method = "monte-carlo";
    u.c = c;
    u.q_start = ceil_cQ(c, Q);
    u.samples = h.qmax.size();
    std::size_t small = 0;
    for (std::size_t i = 0; i < u.samples; ++i) {
        if (h.qmax[i] >= u.q_start) ++u.hits;
        if (h.qmin[i] != 0 && h.qmin[i] < u.q_start) ++small;
    }
    u.ratio = double(u.hits) / double(u.samples);
    u.se = std::sqrt(u.ratio * (1 - u.ratio) / double(u.samples));
    u.small_q_mass = double(small) / double(u.samples);
    return u;
}

}  // namespace detail

/**
 * @brief Monte Carlo estimate of mu(B cap U_{q=ceil(cQ)}^{2Q} R(q, eta)) / mu(B).
 *
 * Sample points are the smallest points of K in random depth-S cylinders of B,
 * so the membership test ||q x_j|| <= eta_j is exact integer arithmetic.
 */
inline UbiquityAudit ubiquity_audit(const DigitSystem& sys, const CylinderWord& B, long long Q,
                                    const std::vector<Rational>& eta, const Rational& c, std::size_t samples,
                                    std::uint64_t seed) {
    validate_word(sys, B);
    detail::check_ubiquity(sys, Q, eta);
    if (c <= 0 || c >= 2) throw std::invalid_argument("c must lie in (0, 2)");
    if (samples < 1) throw std::invalid_argument("samples must be >= 1");
    return detail::ubiquity_from_hits(detail::ubiquity_scan(sys, B, Q, eta, samples, seed), c, Q);
}

/// Chooses the largest c in {2^-1, ..., 2^-8} whose small-q mass is at most 1/2.
inline UbiquityAudit ubiquity_audit_auto_c(const DigitSystem& sys, const CylinderWord& B, long long Q,
                                           const std::vector<Rational>& eta, std::size_t samples, std::uint64_t seed) {
    validate_word(sys, B);
    detail::check_ubiquity(sys, Q, eta);
    auto hits = detail::ubiquity_scan(sys, B, Q, eta, samples, seed);
    UbiquityAudit best;
    for (int k = 1; k <= 8; ++k) {
        auto u = detail::ubiquity_from_hits(hits, make_rational(1, 1LL << k), Q);
        best = u;
        if (u.small_q_mass <= 0.5) {
            best.c_auto = true;
            return best;
        }
    }
    best.c_auto = true;
    best.c_calibrated = false;
    return best;
}

/// Exact region version; feasible for small Q.
inline UbiquityAudit ubiquity_audit_exact(const DigitSystem& sys, const CylinderWord& B, long long Q,
                                          const std::vector<Rational>& eta, const Rational& c, int max_depth = 24) {
    validate_word(sys, B);
    detail::check_ubiquity(sys, Q, eta);
    if (c <= 0 || c >= 2) throw std::invalid_argument("c must lie in (0, 2)");
    UbiquityAudit u;
    u.method = "exact";
    u.c = c;
    u.q_start = detail::ceil_cQ(c, Q);
    Box box = cylinder_box(sys, B);
    RegionUnion all(sys.dim());
    for (long long q = u.q_start; q <= 2 * Q; ++q) detail::append_neighborhoods(q, eta, std::vector<Rational>(sys.dim(), Rational(0)), box, false, all);
    all.normalize();
    auto mv = measure_of_region(sys, all, max_depth);
    Rational muB = cylinder_measure(sys, B);
    u.ratio = Rational(mv.value / muB).get_d();
    u.se = Rational(mv.error_bound / muB).get_d();
    return u;
}

}  // namespace mdset
