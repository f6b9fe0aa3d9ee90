#pragma once

#include "measure.hpp"
#include "region.hpp"

#include <numeric>
#include <optional>
#include <vector>

namespace mdset {

/// (p + theta) / q with no gcd reduction.
struct ShiftedRational {
    std::vector<BigInt> p;
    BigInt q;
    std::vector<Rational> theta;

    std::vector<Rational> value() const {
        std::vector<Rational> v;
        for (std::size_t j = 0; j < p.size(); ++j) v.push_back((Rational(p[j]) + theta[j]) / Rational(q));
        return v;
    }
    bool operator==(const ShiftedRational& o) const { return p == o.p && q == o.q && theta == o.theta; }
    bool operator<(const ShiftedRational& o) const {
        if (q != o.q) return q < o.q;
        return p < o.p;
    }
};

namespace detail {

inline void check_eta(const Rational& eta) {
    if (eta <= 0) throw std::invalid_argument("eta must be positive");
    if (eta >= Rational(1, 2)) throw std::invalid_argument("eta must be < 1/2 (neighborhoods would wrap)");
}

/// Integers p with |(p + theta)/q - c| <= eta/q for some c in [lo, hi].
inline std::pair<BigInt, BigInt> p_range(const BigInt& q, const Rational& theta, const Rational& eta,
                                         const Interval& clip) {
    return {ceil(clip.lo * q - theta - eta), floor(clip.hi * q - theta + eta)};
}

inline bool gcd_is_one(const BigInt& q, const std::vector<BigInt>& p) {
    BigInt g = q;
    for (const auto& v : p) mpz_gcd(g.get_mpz_t(), g.get_mpz_t(), v.get_mpz_t());
    return g == 1;
}

// Boxes prod_j [(p_j+theta_j-eta_j)/q, (p_j+theta_j+eta_j)/q] clipped to `clip`, appended to out.
inline void append_neighborhoods(long long qv, const std::vector<Rational>& eta, const std::vector<Rational>& theta,
                                 const Box& clip, bool coprime, RegionUnion& out) {
    const int d = clip.dim();
    BigInt q = big(qv);
    std::vector<std::pair<BigInt, BigInt>> ranges;
    for (int j = 0; j < d; ++j) ranges.push_back(p_range(q, theta[j], eta[j], clip.side[j]));
    for (int j = 0; j < d; ++j)
        if (ranges[j].second < ranges[j].first) return;
    std::vector<BigInt> p(d);
    for (int j = 0; j < d; ++j) p[j] = ranges[j].first;
    for (;;) {
        if (!coprime || gcd_is_one(q, p)) {
            Box b;
            bool ok = true;
            for (int j = 0; j < d; ++j) {
                Rational c = (Rational(p[j]) + theta[j]);
                Interval s{max((c - eta[j]) / q, clip.side[j].lo), min((c + eta[j]) / q, clip.side[j].hi)};
                if (s.hi < s.lo) ok = false;
                b.side.push_back(std::move(s));
            }
            if (ok) out.add(std::move(b));
        }
        int j = d - 1;
        while (j >= 0 && p[j] == ranges[j].second) {
            p[j] = ranges[j].first;
            --j;
        }
        if (j < 0) break;
        ++p[j];
    }
}

inline std::vector<Rational> expand(const std::vector<Rational>& v, int d, const char* what) {
    if (static_cast<int>(v.size()) == d) return v;
    if (v.size() == 1) return std::vector<Rational>(d, v[0]);
    throw std::invalid_argument(std::string(what) + " length does not match dimension");
}

}  // namespace detail

/// A(q, eta, theta) = {x in clip : ||q x - theta|| <= eta}, closed components.
inline RegionUnion build_Aq_single(long long q, const Rational& eta, const std::vector<Rational>& theta,
                                   const Box& clip, bool coprime = false) {
    if (q < 1) throw std::invalid_argument("q must be >= 1");
    detail::check_eta(eta);
    const int d = clip.dim();
    RegionUnion r(d);
    detail::append_neighborhoods(q, std::vector<Rational>(d, eta), detail::expand(theta, d, "theta"), clip, coprime, r);
    r.normalize();
    return r;
}

/// A_Q(eta, theta): union of A(q, eta, theta) over Q <= q < 2Q.
inline RegionUnion build_AQ(long long Q, const Rational& eta, const std::vector<Rational>& theta, const Box& clip,
                            bool coprime = false) {
    if (Q < 1) throw std::invalid_argument("Q must be >= 1");
    detail::check_eta(eta);
    const int d = clip.dim();
    auto th = detail::expand(theta, d, "theta");
    RegionUnion r(d);
    for (long long q = Q; q < 2 * Q; ++q) detail::append_neighborhoods(q, std::vector<Rational>(d, eta), th, clip, coprime, r);
    r.normalize();
    return r;
}

/// R(q, eta) = {x in clip : ||q x_j|| <= eta_j for every j}.
inline RegionUnion build_rect(long long q, const std::vector<Rational>& eta, const Box& clip) {
    if (q < 1) throw std::invalid_argument("q must be >= 1");
    const int d = clip.dim();
    auto e = detail::expand(eta, d, "eta");
    for (const auto& v : e) detail::check_eta(v);
    RegionUnion r(d);
    detail::append_neighborhoods(q, e, std::vector<Rational>(d, Rational(0)), clip, false, r);
    r.normalize();
    return r;
}

/// Decides dist_sup(x, K) < radius by refining the distance bounds.
inline bool within_distance(const DigitSystem& sys, const std::vector<Rational>& x, const Rational& radius) {
    for (int depth = 8;; depth *= 2) {
        auto [lo, hi] = distance_to_set(sys, x, depth);
        if (hi < radius) return true;
        if (lo >= radius) return false;
        if (depth >= 256) return false;  // dist == radius up to 2^-256 resolution; the inequality is strict
    }
}

namespace detail {

// Closed intervals covering the radius-neighborhood of K_j, from hulls at a depth near the radius scale.
inline std::vector<Interval> neighborhood_cover(const DigitTable& g, const Rational& radius) {
    int m = 0;
    Rational side = 1;
    while (side > radius && m < 40) {
        side /= g.b;
        ++m;
    }
    std::vector<Interval> out;
    std::vector<BigInt> level{BigInt(0)};
    for (int i = 0; i < m; ++i) {
        std::vector<BigInt> next;
        for (const auto& k : level)
            for (int a = 0; a < g.b; ++a)
                if (g.in[a]) next.push_back(k * g.b + a);
        level = std::move(next);
    }
    for (const auto& k : level) {
        Interval h = cylinder_hull(g, k, m);
        out.push_back({h.lo - radius, h.hi + radius});
    }
    return RegionUnion::merge_intervals(std::move(out));
}

}  // namespace detail

/**
 * @brief All (p, q), q in [q_lo, q_hi], with dist((p+theta)/q, K) < radius.
 *
 * Candidates come from hull neighborhoods of the cylinder tree; each is then
 * confirmed by distance refinement.  Sorted by q, then p.
 */
inline std::vector<ShiftedRational> enumerate_rationals_near_set(const DigitSystem& sys, long long q_lo, long long q_hi,
                                                                 const Rational& radius,
                                                                 const std::vector<Rational>& theta) {
    if (radius <= 0) throw std::invalid_argument("radius must be positive");
    if (q_lo < 1 || q_hi < q_lo) throw std::invalid_argument("bad q range");
    const int d = sys.dim();
    auto th = detail::expand(theta, d, "theta");
    std::vector<std::vector<Interval>> cover;
    for (int j = 0; j < d; ++j) cover.push_back(detail::neighborhood_cover(DigitTable(sys, j), radius));
    std::vector<ShiftedRational> out;
    for (long long qv = q_lo; qv <= q_hi; ++qv) {
        BigInt q = big(qv);
        std::vector<std::vector<BigInt>> cand(d);
        for (int j = 0; j < d; ++j) {
            BigInt last = BigInt(0);
            bool have = false;
            for (const auto& iv : cover[j]) {
                BigInt a = ceil(iv.lo * q - th[j]), b = floor(iv.hi * q - th[j]);
                if (have && a <= last) a = last + 1;
                for (BigInt p = a; p <= b; ++p) cand[j].push_back(p);
                if (b >= a) {
                    last = b;
                    have = true;
                }
            }
        }
        std::vector<std::size_t> idx(d, 0);
        bool empty = false;
        for (int j = 0; j < d; ++j) empty = empty || cand[j].empty();
        if (empty) continue;
        for (;;) {
            ShiftedRational r;
            r.q = q;
            r.theta = th;
            for (int j = 0; j < d; ++j) r.p.push_back(cand[j][idx[j]]);
            if (within_distance(sys, r.value(), radius)) out.push_back(std::move(r));
            int j = d - 1;
            while (j >= 0 && idx[j] + 1 == cand[j].size()) {
                idx[j] = 0;
                --j;
            }
            if (j < 0) break;
            ++idx[j];
        }
    }
    return out;
}

/// Same output by scanning every p with (p+theta)/q in [-radius, 1+radius]^d.
inline std::vector<ShiftedRational> enumerate_rationals_brute(const DigitSystem& sys, long long q_lo, long long q_hi,
                                                              const Rational& radius,
                                                              const std::vector<Rational>& theta) {
    const int d = sys.dim();
    auto th = detail::expand(theta, d, "theta");
    std::vector<ShiftedRational> out;
    for (long long qv = q_lo; qv <= q_hi; ++qv) {
        BigInt q = big(qv);
        std::vector<BigInt> lo(d), hi(d), p(d);
        for (int j = 0; j < d; ++j) {
            lo[j] = ceil(-radius * q - th[j]);
            hi[j] = floor((1 + radius) * q - th[j]);
            p[j] = lo[j];
        }
        for (;;) {
            ShiftedRational r{p, q, th};
            if (within_distance(sys, r.value(), radius)) out.push_back(r);
            int j = d - 1;
            while (j >= 0 && p[j] == hi[j]) {
                p[j] = lo[j];
                --j;
            }
            if (j < 0) break;
            ++p[j];
        }
    }
    return out;
}

}  // namespace mdset
