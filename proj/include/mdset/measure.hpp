#pragma once

#include "digit_count.hpp"
#include "region.hpp"
#include "rng.hpp"

#include <optional>
#include <queue>
#include <utility>
#include <vector>

namespace mdset {

/// Measure value with a certified two-sided truncation error.
struct MeasureValue {
    Rational value = 0;
    Rational error_bound = 0;

    Rational lower() const { return value - error_bound; }
    Rational upper() const { return value + error_bound; }

    MeasureValue& operator+=(const MeasureValue& o) {
        value += o.value;
        error_bound += o.error_bound;
        return *this;
    }
    friend MeasureValue operator+(MeasureValue a, const MeasureValue& b) { return a += b; }
    friend MeasureValue operator*(const MeasureValue& a, const MeasureValue& b) {
        return {a.value * b.value, a.value * b.error_bound + b.value * a.error_bound + a.error_bound * b.error_bound};
    }
};

/// Counts of depth-L cylinders for a closed interval, exact endpoints.
inline CylinderCounts<BigInt> interval_cylinder_counts(const DigitTable& g, Rational lo, Rational hi, int L) {
    if (lo < 0) lo = 0;
    if (hi > 1) hi = 1;
    if (hi < lo) return {};
    auto npow = count_powers<BigInt>(g.n, L);
    BigInt lo_den = lo.get_den(), hi_den = hi.get_den();
    auto a = locate<BigInt, BigInt>(g, lo.get_num(), lo_den, L, npow);
    auto b = locate<BigInt, BigInt>(g, hi.get_num(), hi_den, L, npow);
    return interval_counts<BigInt, BigInt>(g, a, lo_den, b, hi_den);
}

/// mu_j([lo,hi]) for a single coordinate measure.
inline MeasureValue interval_measure(const DigitTable& g, const Rational& lo, const Rational& hi, int L) {
    auto c = interval_cylinder_counts(g, lo, hi, L);
    BigInt total = ipow(g.n, static_cast<unsigned long>(L));
    return {make_rational(c.inside, total), make_rational(c.meeting - c.inside, total)};
}

inline MeasureValue box_measure(const DigitSystem& sys, const Box& box, int L) {
    MeasureValue m{1, 0};
    for (int j = 0; j < sys.dim(); ++j)
        m = m * interval_measure(DigitTable(sys, j), box.side[j].lo, box.side[j].hi, L);
    return m;
}

/**
 * @brief mu(R) by cylinder counting at depth max_depth.
 *
 * Cylinders whose K-part lies inside a component are counted in the value,
 * cylinders that straddle a component boundary go into error_bound.  With
 * b-adic endpoints of depth <= max_depth there are no straddlers.
 */
inline MeasureValue measure_of_region(const DigitSystem& sys, const RegionUnion& R, int max_depth) {
    if (R.dim() != sys.dim()) throw std::invalid_argument("region and system dimensions differ");
    if (max_depth < 0) throw std::invalid_argument("negative depth");
    MeasureValue total;
    for (const auto& c : R.components()) total += box_measure(sys, c, max_depth);
    if (total.value > 1) total.value = 1;
    return total;
}

/// Convex hull of K_omega for the depth-m cylinder with index k.
inline Interval cylinder_hull(const DigitTable& g, const BigInt& k, int m) {
    BigInt scale = ipow(g.b, static_cast<unsigned long>(m)) * (g.b - 1);
    return {make_rational(k * (g.b - 1) + g.min_digit, scale), make_rational(k * (g.b - 1) + g.max_digit, scale)};
}

/// Some point of K in [lo,hi] (one coordinate), if there is one.
inline std::optional<Rational> find_point_in_interval(const DigitTable& g, const Rational& lo, const Rational& hi,
                                                      int max_depth = 200) {
    if (hi < lo) return std::nullopt;
    // depth-first over cylinders whose hull meets [lo,hi]; hull endpoints are points of K
    struct Node {
        BigInt k;
        int m;
    };
    std::vector<Node> stack{{BigInt(0), 0}};
    while (!stack.empty()) {
        Node nd = stack.back();
        stack.pop_back();
        Interval h = cylinder_hull(g, nd.k, nd.m);
        if (h.hi < lo || h.lo > hi) continue;
        if (h.lo >= lo) return h.lo;
        if (h.hi <= hi) return h.hi;
        if (nd.m >= max_depth) continue;
        for (auto it = g.in.rbegin(); it != g.in.rend(); ++it) {
            int a = int(g.in.rend() - it) - 1;
            if (*it) stack.push_back({nd.k * g.b + a, nd.m + 1});
        }
    }
    return std::nullopt;
}

/// Bounds on the distance from x to one coordinate factor of K.
inline std::pair<Rational, Rational> distance_bounds_1d(const DigitTable& g, const Rational& x, int depth) {
    auto hull_dist = [&](const Interval& h) -> Rational {
        if (x < h.lo) return h.lo - x;
        if (x > h.hi) return x - h.hi;
        return 0;
    };
    Rational upper = -1;
    auto consider = [&](const Rational& p) {
        Rational d = abs(p - x);
        if (upper < 0 || d < upper) upper = d;
    };
    std::vector<std::pair<BigInt, int>> level{{BigInt(0), 0}};
    Rational lower = 0;
    for (int m = 0;; ++m) {
        Rational best_lower = -1;
        for (const auto& [k, mm] : level) {
            Interval h = cylinder_hull(g, k, mm);
            consider(h.lo);
            consider(h.hi);
        }
        std::vector<std::pair<BigInt, int>> keep;
        for (const auto& [k, mm] : level) {
            Rational lb = hull_dist(cylinder_hull(g, k, mm));
            if (lb > upper) continue;
            keep.emplace_back(k, mm);
            if (best_lower < 0 || lb < best_lower) best_lower = lb;
        }
        lower = best_lower < 0 ? upper : best_lower;
        if (lower == upper || m >= depth || keep.empty()) break;
        std::vector<std::pair<BigInt, int>> next;
        for (const auto& [k, mm] : keep)
            for (int a = 0; a < g.b; ++a)
                if (g.in[a]) next.emplace_back(k * g.b + a, mm + 1);
        level = std::move(next);
    }
    return {lower, upper};
}

/// Sup-norm distance bounds from a rational point to K.
inline std::pair<Rational, Rational> distance_to_set(const DigitSystem& sys, const std::vector<Rational>& x,
                                                     int depth = 24) {
    Rational lo = 0, hi = 0;
    for (int j = 0; j < sys.dim(); ++j) {
        auto [l, u] = distance_bounds_1d(DigitTable(sys, j), x.at(j), depth);
        lo = max(lo, l);
        hi = max(hi, u);
    }
    return {lo, hi};
}

/// Digits of one sample, coordinate-major: digits[j][i].
inline std::vector<std::vector<int>> sample_digits(const DigitSystem& sys, int depth, std::uint64_t seed,
                                                   std::uint64_t index) {
    CounterRng rng(seed, index);
    std::vector<std::vector<int>> out(sys.dim(), std::vector<int>(depth));
    for (int i = 0; i < depth; ++i)
        for (int j = 0; j < sys.dim(); ++j) out[j][i] = sys.digits(j)[rng.below(sys.count(j))];
    return out;
}

/// Smallest point of K in the cylinder with the given digits.
inline Rational min_point(const DigitTable& g, const std::vector<int>& digits) {
    BigInt k = 0;
    for (int a : digits) k = k * g.b + a;
    BigInt scale = ipow(g.b, digits.size());
    return make_rational(k * (g.b - 1) + g.min_digit, scale * (g.b - 1));
}

/**
 * @brief n draws from mu truncated at `depth`.
 *
 * Draw i uses stream (seed, i) only.  The returned point is the smallest point
 * of K inside the sampled depth-`depth` cylinder.
 */
inline std::vector<std::vector<Rational>> sample_measure(const DigitSystem& sys, std::size_t n, int depth,
                                                         std::uint64_t seed) {
    if (n < 1 || depth < 1) throw std::invalid_argument("sample_measure needs n >= 1 and depth >= 1");
    std::vector<DigitTable> tables;
    for (int j = 0; j < sys.dim(); ++j) tables.emplace_back(sys, j);
    std::vector<std::vector<Rational>> pts;
    pts.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto dg = sample_digits(sys, depth, seed, i);
        std::vector<Rational> p;
        for (int j = 0; j < sys.dim(); ++j) p.push_back(min_point(tables[j], dg[j]));
        pts.push_back(std::move(p));
    }
    return pts;
}

}  // namespace mdset
