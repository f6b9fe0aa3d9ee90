#pragma once

#include "digit_system.hpp"

#include <vector>

namespace mdset {

/**
 * @brief Per-coordinate digit tables used for cylinder counting.
 *
 * A depth-L cylinder of K with index k has convex hull
 * [(k + e_min) b^-L, (k + e_max) b^-L], e = min D/(b-1), max D/(b-1).
 */
struct DigitTable {
    int b = 0;
    int n = 0;
    int min_digit = 0, max_digit = 0;
    std::vector<int> less;   // less[a] = #{d in D : d < a}
    std::vector<char> in;    // in[a] = a in D

    DigitTable() = default;
    DigitTable(int base, const std::vector<int>& digits) : b(base), n(int(digits.size())), less(base + 1, 0), in(base, 0) {
        for (int a : digits) in[a] = 1;
        for (int a = 0; a < base; ++a) less[a + 1] = less[a] + in[a];
        min_digit = digits.front();
        max_digit = digits.back();
    }
    DigitTable(const DigitSystem& sys, int j) : DigitTable(sys.base(), sys.digits(j)) {}

    bool degenerate() const { return min_digit == max_digit; }
};

template <class Count>
std::vector<Count> count_powers(int n, int L) {
    std::vector<Count> p(L + 1);
    p[0] = 1;
    for (int i = 1; i <= L; ++i) p[i] = p[i - 1] * n;
    return p;
}

/// Location of x = r/den in [0,1] at depth L.  C counts D-words with index < floor(x b^L).
template <class Int, class Count>
struct Located {
    Count C = 0;
    Count K = 0;        // floor(x b^L)
    bool in_d = false;  // K is a D-word
    Int r = 0;          // frac(x b^L) = r/den
};

template <class Int, class Count>
Located<Int, Count> locate(const DigitTable& g, Int r, const Int& den, int L, const std::vector<Count>& npow) {
    Located<Int, Count> out;
    if (r >= den) {  // x = 1
        out.C = npow[L];
        out.K = 1;
        for (int i = 0; i < L; ++i) out.K *= g.b;
        out.in_d = false;
        out.r = 0;
        return out;
    }
    bool prefix = true;
    for (int i = 0; i < L; ++i) {
        r *= g.b;
        Int a = r / den;
        r -= a * den;
        out.K = out.K * g.b + Count(a);
        if (prefix) {
            int ia = static_cast<int>(a);
            out.C += Count(g.less[ia]) * npow[L - 1 - i];
            if (!g.in[ia]) prefix = false;
        }
    }
    out.in_d = prefix;
    out.r = r;
    return out;
}

template <>
inline Located<BigInt, BigInt> locate(const DigitTable& g, BigInt r, const BigInt& den, int L,
                                      const std::vector<BigInt>& npow) {
    Located<BigInt, BigInt> out;
    if (r >= den) {
        out.C = npow[L];
        out.K = ipow(g.b, static_cast<unsigned long>(L));
        return out;
    }
    bool prefix = true;
    BigInt a;
    for (int i = 0; i < L; ++i) {
        r *= g.b;
        mpz_fdiv_qr(a.get_mpz_t(), r.get_mpz_t(), r.get_mpz_t(), den.get_mpz_t());
        out.K = out.K * g.b + a;
        if (prefix) {
            int ia = static_cast<int>(a.get_si());
            out.C += BigInt(g.less[ia]) * npow[L - 1 - i];
            if (!g.in[ia]) prefix = false;
        }
    }
    out.in_d = prefix;
    out.r = r;
    return out;
}

template <class Int>
inline int small_int(const Int& v) {
    if constexpr (std::is_same_v<Int, BigInt>)
        return static_cast<int>(v.get_si());
    else
        return static_cast<int>(v);
}

// r/den vs e/(b-1)
template <class Int>
inline int cmp_frac(const Int& r, const Int& den, int e, int bm1) {
    if constexpr (std::is_same_v<Int, BigInt>) {
        BigInt lhs = r * bm1, rhs = den * e;
        return lhs < rhs ? -1 : (lhs > rhs ? 1 : 0);
    } else {
        i128 lhs = i128(r) * bm1, rhs = i128(den) * e;
        return lhs < rhs ? -1 : (lhs > rhs ? 1 : 0);
    }
}

template <class Count>
struct CylinderCounts {
    Count inside = 0;   // cylinders whose K-part lies in the interval
    Count meeting = 0;  // cylinders whose hull overlaps the interval interior
};

/// Counts for the closed interval [lo, hi] at depth L given both located endpoints.
template <class Int, class Count>
CylinderCounts<Count> interval_counts(const DigitTable& g, const Located<Int, Count>& lo, const Int& lo_den,
                                      const Located<Int, Count>& hi, const Int& hi_den) {
    const int bm1 = g.b - 1;
    auto bump = [](const Located<Int, Count>& p, bool cond) -> Count { return p.C + Count((p.in_d && cond) ? 1 : 0); };
    CylinderCounts<Count> c;
    Count in_hi = bump(hi, cmp_frac(hi.r, hi_den, g.max_digit, bm1) >= 0);
    Count in_lo = bump(lo, cmp_frac(lo.r, lo_den, g.min_digit, bm1) > 0);
    c.inside = in_hi > in_lo ? Count(in_hi - in_lo) : Count(0);
    if (g.degenerate()) {
        c.meeting = c.inside;
        return c;
    }
    Count m_hi = bump(hi, cmp_frac(hi.r, hi_den, g.min_digit, bm1) > 0);
    Count m_lo = bump(lo, cmp_frac(lo.r, lo_den, g.max_digit, bm1) >= 0);
    c.meeting = m_hi > m_lo ? Count(m_hi - m_lo) : Count(0);
    return c;
}

/**
 * @brief Whether K meets [u, v] inside the unit cylinder, u = ru/du, v = rv/dv.
 *
 * Exact digit descent; gives up (answers true) after max_steps levels, which
 * only happens when u = v is a point with a periodic expansion.
 */
template <class Int>
bool k_meets_unit(const DigitTable& g, Int ru, const Int& du, Int rv, const Int& dv, int max_steps = 256) {
    const int bm1 = g.b - 1;
    for (int step = 0; step < max_steps; ++step) {
        if (cmp_frac(rv, dv, g.min_digit, bm1) < 0) return false;
        if (cmp_frac(ru, du, g.max_digit, bm1) > 0) return false;
        if (cmp_frac(ru, du, g.min_digit, bm1) <= 0 || cmp_frac(rv, dv, g.max_digit, bm1) >= 0) return true;
        ru *= g.b;
        rv *= g.b;
        Int a = ru / du, c = rv / dv;
        ru -= a * du;
        rv -= c * dv;
        int ia = small_int(Int(a)), ic = small_int(Int(c));
        for (int k = ia + 1; k < ic; ++k)
            if (g.in[k]) return true;
        if (ia != ic) {
            if (g.in[ia] && cmp_frac(ru, du, g.max_digit, bm1) <= 0) return true;
            return g.in[ic] && cmp_frac(rv, dv, g.min_digit, bm1) >= 0;
        }
        if (!g.in[ia]) return false;
    }
    return true;
}

/**
 * @brief Rank range [first, last] of depth-L cylinders whose K-part meets the
 * closed interval between two located endpoints.  Empty when first > last.
 */
/// Whether the depth-L word with index K is a D-word, and its rank among D-words.
template <class Count>
std::pair<bool, Count> word_rank(const DigitTable& g, Count K, int L, const std::vector<Count>& npow) {
    Count rank = 0;
    for (int i = 0; i < L; ++i) {
        int a = small_int(Count(K % Count(g.b)));
        K /= Count(g.b);
        if (!g.in[a]) return {false, Count(0)};
        rank += Count(g.less[a]) * npow[i];
    }
    return {true, rank};
}

template <class Int, class Count>
std::pair<Count, Count> meeting_rank_range_open_left(const DigitTable& g, const Located<Int, Count>& lo, const Int& lo_den,
                                           const Located<Int, Count>& hi, const Int& hi_den) {
    const int bm1 = g.b - 1;
    // ranks of cylinders strictly between K_lo and K_hi
    Count first = lo.C + Count(lo.in_d ? 1 : 0);
    Count last_excl = hi.C;
    bool lo_meets = false, hi_meets = false;
    if (lo.K == hi.K) {
        if (lo.in_d) lo_meets = k_meets_unit<Int>(g, lo.r, lo_den, hi.r, hi_den);
        if (lo_meets) return {lo.C, lo.C};
        return {Count(1), Count(0)};
    }
    if (lo.in_d) lo_meets = cmp_frac(lo.r, lo_den, g.max_digit, bm1) <= 0;
    if (hi.in_d) hi_meets = cmp_frac(hi.r, hi_den, g.min_digit, bm1) >= 0;
    if (lo_meets) first = lo.C;
    Count last_incl_plus1 = last_excl + Count(hi_meets ? 1 : 0);
    if (last_incl_plus1 <= first) return {Count(1), Count(0)};
    return {first, Count(last_incl_plus1 - 1)};
}

/**
 * @brief Rank range of depth-L cylinders whose K-part meets [lo, hi], including
 * the cylinder to the left of K_lo when lo sits on its right end.
 */
template <class Int, class Count>
std::pair<Count, Count> meeting_rank_range(const DigitTable& g, const Located<Int, Count>& lo, const Int& lo_den,
                                           const Located<Int, Count>& hi, const Int& hi_den,
                                           int L, const std::vector<Count>& npow) {
    auto out = meeting_rank_range_open_left<Int, Count>(g, lo, lo_den, hi, hi_den);
    if (lo.r != 0 || lo.K == Count(0) || g.max_digit != g.b - 1) return out;
    auto [is_word, rank] = word_rank<Count>(g, Count(lo.K - 1), L, npow);
    if (!is_word) return out;
    if (out.first > out.second) return {rank, rank};
    return {rank < out.first ? rank : out.first, out.second};
}

}  // namespace mdset
