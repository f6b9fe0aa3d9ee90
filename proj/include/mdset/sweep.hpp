#pragma once

#include "digit_count.hpp"
#include "parallel.hpp"

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace mdset {

/**
 * @brief Closed intervals [(p+theta)/q - eta_q/q, (p+theta)/q + eta_q/q] for
 * q_lo <= q <= q_hi and all integers p, in 64-bit fixed-denominator form.
 *
 * eta_q = eta_num[q - q_lo] / eta_den.  Endpoints of denominator q share the
 * denominator q*T with T = lcm(theta_den, eta_den).
 */
struct ShiftedFamily {
    std::int64_t q_lo = 1, q_hi = 1;
    std::int64_t theta_num = 0, theta_den = 1;
    std::int64_t eta_den = 1;
    std::vector<std::int64_t> eta_num;
    bool coprime = false;

    std::int64_t T() const { return std::lcm(theta_den, eta_den); }
    std::int64_t eta_at(std::int64_t q) const { return eta_num[std::size_t(q - q_lo)]; }
    std::size_t interval_estimate() const {
        double s = 0;
        for (std::int64_t q = q_lo; q <= q_hi; ++q) s += double(q + 1);
        return std::size_t(s);
    }
};

/// Family with one eta for all q in [q_lo, q_hi].
inline ShiftedFamily constant_family(std::int64_t q_lo, std::int64_t q_hi, std::int64_t eta_num, std::int64_t eta_den,
                                     std::int64_t theta_num, std::int64_t theta_den) {
    ShiftedFamily f;
    f.q_lo = q_lo;
    f.q_hi = q_hi;
    f.eta_den = eta_den;
    f.eta_num.assign(std::size_t(q_hi - q_lo + 1), eta_num);
    std::int64_t g = std::gcd(theta_num, theta_den);
    theta_num /= g;
    theta_den /= g;
    if (theta_den < 0) {
        theta_den = -theta_den;
        theta_num = -theta_num;
    }
    f.theta_num = ((theta_num % theta_den) + theta_den) % theta_den;
    f.theta_den = theta_den;
    return f;
}

/// Interval state relative to a b-adic box: lo = lo/den, hi = hi/den in box units.
struct SweepItem {
    std::int64_t lo, hi, den;
};

struct LeafBox {
    int depth = 0;
    u128 index = 0;  // b-adic index of the box
    u128 rank = 0;   // rank among D-words of this depth
};

struct SweepPlan {
    int top_depth = -1;       // generation depth; < 0 picks automatically
    int min_leaf_depth = 0;   // always split down to here
    int max_leaf_depth = 8;   // never split below here
    std::size_t leaf_size = 48;
};

inline bool item_lo_less(const SweepItem& a, const SweepItem& b) {
    return u128(a.lo) * u128(b.den) < u128(b.lo) * u128(a.den);
}

namespace detail {

// Component with independent denominators for its two endpoints.
struct Comp {
    std::int64_t lo, lo_den, hi, hi_den;
};

inline void merge_components(std::vector<SweepItem>& items, std::vector<Comp>& out) {
    std::sort(items.begin(), items.end(), item_lo_less);
    out.clear();
    for (const auto& it : items) {
        if (!out.empty()) {
            Comp& c = out.back();
            // it.lo <= c.hi ?
            if (u128(it.lo) * u128(c.hi_den) <= u128(c.hi) * u128(it.den)) {
                if (u128(it.hi) * u128(c.hi_den) > u128(c.hi) * u128(it.den)) {
                    c.hi = it.hi;
                    c.hi_den = it.den;
                }
                continue;
            }
        }
        out.push_back({it.lo, it.den, it.hi, it.den});
    }
}

}  // namespace detail

/**
 * @brief Hull-pruned traversal of a shifted-rational family over the cylinder tree.
 *
 * Intervals are generated per top-level cylinder, pushed down to the children
 * whose hull they meet (closed), and handed to visitor.leaf() as sorted merged
 * components in leaf-box coordinates.  Visitors from different top cylinders
 * are merged in cylinder order, so results do not depend on the thread count.
 */
template <class Visitor>
Visitor sweep_family(const DigitTable& g, const ShiftedFamily& fam, SweepPlan plan, const Visitor& proto) {
    using detail::Comp;
    const std::int64_t T = fam.T();
    const std::int64_t b = g.b;
    const std::int64_t bm1 = b - 1;
    const std::int64_t max_den = fam.q_hi * T;
    if (fam.q_lo < 1 || fam.q_hi < fam.q_lo) throw std::invalid_argument("bad q range");
    if (i128(max_den) * b * bm1 >= (i128(1) << 62)) throw std::overflow_error("family denominators too large for 64-bit sweep");

    if (plan.top_depth < 0) {
        double total = double(fam.interval_estimate());
        int m = 0;
        double tops = 1;
        while (m < plan.min_leaf_depth || (m < plan.max_leaf_depth && m < 6 && tops * g.n * double(fam.q_hi - fam.q_lo + 1) * 16 < total)) {
            ++m;
            tops *= g.n;
        }
        plan.top_depth = std::min(m, plan.max_leaf_depth);
    }
    const int m0 = plan.top_depth;

    // D-word indices at depth m0
    std::vector<std::pair<u128, u128>> tops{{0, 0}};
    for (int i = 0; i < m0; ++i) {
        std::vector<std::pair<u128, u128>> next;
        for (auto [idx, rank] : tops)
            for (int a = 0; a < b; ++a)
                if (g.in[a]) next.emplace_back(idx * u128(b) + u128(a), rank * u128(g.n) + u128(g.less[a]));
        tops = std::move(next);
    }
    i128 S = 1;
    for (int i = 0; i < m0; ++i) S *= b;

    const std::int64_t theta_scaled = fam.theta_num * (T / fam.theta_den);

    auto floor_div = [](i128 a, i128 d) {
        i128 q = a / d;
        if ((a % d != 0) && ((a < 0) != (d < 0))) --q;
        return q;
    };
    auto ceil_div = [&](i128 a, i128 d) { return -floor_div(-a, d); };

    auto run_top = [&](std::size_t t) {
        Visitor vis = proto;
        const auto [a_idx, a_rank] = tops[t];
        const i128 a = i128(a_idx);
        std::vector<SweepItem> items;
        const i128 hlo_num = a * bm1 + g.min_digit;  // hull / (S * bm1)
        const i128 hhi_num = a * bm1 + g.max_digit;
        for (std::int64_t q = fam.q_lo; q <= fam.q_hi; ++q) {
            const std::int64_t Dq = q * T;
            const std::int64_t half = fam.eta_at(q) * (T / fam.eta_den);
            const i128 s_lo = i128(theta_scaled) - half;
            const i128 s_hi = i128(theta_scaled) + half;
            // hi(p) >= hull_lo and lo(p) <= hull_hi
            i128 pmin = ceil_div(hlo_num * q * T - s_hi * S * bm1, i128(T) * S * bm1);
            i128 pmax = floor_div(hhi_num * q * T - s_lo * S * bm1, i128(T) * S * bm1);
            for (i128 p = pmin; p <= pmax; ++p) {
                if (fam.coprime && std::gcd(std::int64_t(p < 0 ? -p : p), q) != 1) continue;
                i128 rl = (p * T + s_lo) * S - a * Dq;
                i128 rh = (p * T + s_hi) * S - a * Dq;
                if (rl < 0) rl = 0;
                if (rh > Dq) rh = Dq;
                if (rh < rl) continue;
                if (rl * bm1 > i128(g.max_digit) * Dq || rh * bm1 < i128(g.min_digit) * Dq) continue;
                items.push_back({std::int64_t(rl), std::int64_t(rh), Dq});
            }
        }

        struct Frame {
            std::vector<SweepItem> items;
            LeafBox box;
        };
        std::vector<Frame> stack;
        stack.push_back({std::move(items), LeafBox{m0, a_idx, a_rank}});
        std::vector<Comp> comps;
        std::vector<std::vector<SweepItem>> kids(b);
        while (!stack.empty()) {
            Frame fr = std::move(stack.back());
            stack.pop_back();
            if (fr.items.empty()) continue;
            const int m = fr.box.depth;
            bool split = m < plan.min_leaf_depth || (m < plan.max_leaf_depth && fr.items.size() > plan.leaf_size);
            if (!split) {
                detail::merge_components(fr.items, comps);
                vis.leaf(fr.box, comps);
                continue;
            }
            for (auto& k : kids) k.clear();
            for (const auto& it : fr.items) {
                std::int64_t xl = it.lo * b, xh = it.hi * b;
                std::int64_t dl = xl / it.den, dh = xh / it.den;
                std::int64_t rl = xl - dl * it.den, rh = xh - dh * it.den;
                if (dh >= b) {  // hi at the box end
                    dh = b - 1;
                    rh = it.den;
                }
                if (dl >= b) continue;
                // lo on a child boundary also touches the right end of the child before it
                if (rl == 0 && dl > 0) {
                    --dl;
                    rl = it.den;
                }
                for (std::int64_t c = dl; c <= dh; ++c) {
                    if (!g.in[c]) continue;
                    std::int64_t cl = (c == dl) ? rl : 0;
                    std::int64_t ch = (c == dh) ? rh : it.den;
                    if (i128(cl) * bm1 > i128(g.max_digit) * it.den) continue;
                    if (i128(ch) * bm1 < i128(g.min_digit) * it.den) continue;
                    kids[c].push_back({cl, ch, it.den});
                }
            }
            for (std::int64_t c = b - 1; c >= 0; --c) {
                if (!g.in[c] || kids[c].empty()) continue;
                LeafBox child{m + 1, fr.box.index * u128(b) + u128(c), fr.box.rank * u128(g.n) + u128(g.less[c])};
                stack.push_back({std::move(kids[c]), child});
                kids[c] = {};
            }
        }
        return vis;
    };

    std::vector<Visitor> results(tops.size(), proto);
    parallel_for(tops.size(), [&](std::size_t t) { results[t] = run_top(t); });
    Visitor total = proto;
    for (auto& r : results) total.merge(r);
    return total;
}

/// Exact mu-counts per report cylinder: inside / meeting depth-n cylinders.
struct MeasureVisitor {
    const DigitTable* g = nullptr;
    int depth = 0;         // n
    int report_depth = 0;  // cells are D-words of this depth
    std::vector<u128> inside, meeting;
    std::vector<u128> npow;
    std::size_t components = 0;

    MeasureVisitor() = default;
    MeasureVisitor(const DigitTable& table, int n, int report)
        : g(&table), depth(n), report_depth(report), npow(count_powers<u128>(table.n, n)) {
        u128 cells = npow[report];
        inside.assign(std::size_t(cells), 0);
        meeting.assign(std::size_t(cells), 0);
    }

    void leaf(const LeafBox& box, const std::vector<detail::Comp>& comps) {
        const int L = depth - box.depth;
        if (L < 0) throw std::logic_error("measure depth above leaf depth");
        std::size_t cell = std::size_t(box.rank / npow[box.depth - report_depth]);
        u128 in = 0, me = 0;
        for (const auto& c : comps) {
            auto lo = locate<std::int64_t, u128>(*g, c.lo, c.lo_den, L, npow);
            auto hi = locate<std::int64_t, u128>(*g, c.hi, c.hi_den, L, npow);
            auto k = interval_counts<std::int64_t, u128>(*g, lo, c.lo_den, hi, c.hi_den);
            in += k.inside;
            me += k.meeting;
        }
        inside[cell] += in;
        meeting[cell] += me;
        components += comps.size();
    }
    void merge(const MeasureVisitor& o) {
        for (std::size_t i = 0; i < inside.size(); ++i) {
            inside[i] += o.inside[i];
            meeting[i] += o.meeting[i];
        }
        components += o.components;
    }
};

/// Number of depth-n cylinders of K meeting the union, for several n.
struct CoverVisitor {
    const DigitTable* g = nullptr;
    std::vector<int> depths;
    std::vector<u128> counts;
    std::vector<std::vector<u128>> npow;

    CoverVisitor() = default;
    CoverVisitor(const DigitTable& table, std::vector<int> ds) : g(&table), depths(std::move(ds)), counts(depths.size(), 0) {
        int mx = 0;
        for (int d : depths) mx = std::max(mx, d);
        npow.push_back(count_powers<u128>(table.n, mx));
    }

    void leaf(const LeafBox& box, const std::vector<detail::Comp>& comps) {
        for (std::size_t i = 0; i < depths.size(); ++i) {
            const int L = depths[i] - box.depth;
            if (L < 0) throw std::logic_error("cover depth above leaf depth");
            bool any = false;
            u128 last = 0, total = 0;
            for (const auto& c : comps) {
                auto lo = locate<std::int64_t, u128>(*g, c.lo, c.lo_den, L, npow[0]);
                auto hi = locate<std::int64_t, u128>(*g, c.hi, c.hi_den, L, npow[0]);
                auto [first, lastr] = meeting_rank_range<std::int64_t, u128>(*g, lo, c.lo_den, hi, c.hi_den, L, npow[0]);
                if (first > lastr) continue;
                if (any && first <= last) first = last + 1;
                if (first > lastr) continue;
                total += lastr - first + 1;
                last = lastr;
                any = true;
            }
            counts[i] += total;
        }
    }
    void merge(const CoverVisitor& o) {
        for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += o.counts[i];
    }
};

}  // namespace mdset
