#pragma once

#include "measure.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <unordered_map>
#include <vector>

namespace mdset {

// ---------------------------------------------------------------- simplex lemma

/// Rational point p/q in R^d, reduced.
struct RationalPoint {
    std::vector<BigInt> p;
    BigInt q;
    std::vector<Rational> coords() const {
        std::vector<Rational> out;
        for (const auto& v : p) out.push_back(make_rational(v, q));
        return out;
    }
    bool operator<(const RationalPoint& o) const { return p != o.p ? p < o.p : q < o.q; }
    bool operator==(const RationalPoint& o) const { return p == o.p && q == o.q; }
};

/// All rational points with denominator q <= Q in a closed box, reduced and sorted.
inline std::vector<RationalPoint> rational_points_in_box(long long Q, const Box& box) {
    const int d = box.dim();
    std::vector<RationalPoint> out;
    for (long long qv = 1; qv <= Q; ++qv) {
        BigInt q = big(qv);
        std::vector<BigInt> lo(d), hi(d);
        bool empty = false;
        for (int j = 0; j < d; ++j) {
            Rational a = box.side[j].lo * q, b = box.side[j].hi * q;
            mpz_cdiv_q(lo[j].get_mpz_t(), a.get_num_mpz_t(), a.get_den_mpz_t());
            mpz_fdiv_q(hi[j].get_mpz_t(), b.get_num_mpz_t(), b.get_den_mpz_t());
            if (hi[j] < lo[j]) empty = true;
        }
        if (empty) continue;
        std::vector<BigInt> cur = lo;
        while (true) {
            BigInt g = q;
            for (const auto& v : cur) g = gcd(g, v);
            if (g == 1) out.push_back({cur, q});  // non-reduced ones appear at a smaller q
            int j = 0;
            while (j < d) {
                if (cur[j] < hi[j]) {
                    ++cur[j];
                    break;
                }
                cur[j] = lo[j];
                ++j;
            }
            if (j == d) break;
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

/// Rank of an integer matrix by fraction-free elimination.
inline int integer_rank(std::vector<std::vector<BigInt>> m) {
    const int rows = int(m.size());
    if (rows == 0) return 0;
    const int cols = int(m[0].size());
    int rank = 0;
    BigInt prev = 1;
    for (int c = 0; c < cols && rank < rows; ++c) {
        int piv = -1;
        for (int r = rank; r < rows; ++r)
            if (m[r][c] != 0) {
                piv = r;
                break;
            }
        if (piv < 0) continue;
        std::swap(m[piv], m[rank]);
        for (int r = rank + 1; r < rows; ++r) {
            for (int k = c + 1; k < cols; ++k) m[r][k] = (m[r][k] * m[rank][c] - m[rank][k] * m[r][c]) / prev;
            m[r][c] = 0;
        }
        prev = m[rank][c];
        ++rank;
    }
    return rank;
}

enum class SimplexMode { Strict, Demonstrate };

struct SimplexResult {
    bool admissible = true;  // vol(box) <= Q^{-(1+d)}/d!
    bool coplanar = true;    // all points on one affine hyperplane
    std::vector<RationalPoint> points;
    std::vector<RationalPoint> witness;  // d+1 affinely independent points when not coplanar
};

inline Rational simplex_volume_bound(int d, long long Q) {
    BigInt den = 1;
    for (int k = 2; k <= d; ++k) den *= k;
    for (int k = 0; k <= d; ++k) den *= big(Q);
    return make_rational(BigInt(1), den);
}

/**
 * @brief Whether the rationals of height <= Q in a small box lie on a hyperplane.
 *
 * Affine independence of points p_i/q_i is linear independence of the
 * homogeneous rows (p_i, q_i).
 */
inline SimplexResult simplex_check(int d, long long Q, const Box& box, SimplexMode mode = SimplexMode::Strict) {
    if (d < 1 || box.dim() != d) throw std::invalid_argument("box dimension must equal d >= 1");
    if (Q < 1) throw std::invalid_argument("Q must be >= 1");
    for (const auto& s : box.side)
        if (s.hi < s.lo) throw std::invalid_argument("malformed box");
    SimplexResult out;
    out.admissible = box.volume() <= simplex_volume_bound(d, Q);
    if (!out.admissible && mode == SimplexMode::Strict)
        throw std::invalid_argument("box volume exceeds Q^{-(1+d)}/d!; use demonstration mode");
    out.points = rational_points_in_box(Q, box);
    std::vector<std::vector<BigInt>> basis_rows;
    std::vector<RationalPoint> basis;
    for (const auto& pt : out.points) {
        auto row = pt.p;
        row.push_back(pt.q);
        basis_rows.push_back(row);
        if (integer_rank(basis_rows) == int(basis_rows.size())) {
            basis.push_back(pt);
            if (int(basis.size()) == d + 1) {
                out.coplanar = false;
                out.witness = basis;
                break;
            }
        } else {
            basis_rows.pop_back();
        }
    }
    return out;
}

/**
 * @brief Random box of volume in (V/2, V], V = Q^{-(1+d)}/d!, anchored at a
 * random rational of height <= Q, with a random aspect ratio up to Q^2.
 */
inline Box random_admissible_box(int d, long long Q, CounterRng& rng) {
    const Rational V = simplex_volume_bound(d, Q);
    constexpr std::uint64_t res = 1u << 20;
    auto frac = [&](std::uint64_t lo_num) { return make_rational(big((long long)(lo_num + rng.below(res - lo_num))), big((long long)res)); };
    Rational vol = V * frac(res / 2 + 1);
    std::vector<Rational> sides(d);
    if (d == 1) {
        sides[0] = vol;
    } else {
        // log-uniform aspect in [Q^-2, Q^2] per coordinate, dyadic, last side closes the volume
        Rational prod = 1;
        const double root = std::pow(vol.get_d(), 1.0 / d);
        for (int j = 0; j + 1 < d; ++j) {
            double s = root * std::pow(double(Q), 4 * rng.uniform() - 2);
            int e = int(std::floor(-std::log2(s))) + 24;
            sides[j] = make_rational(big((long long)std::max(1.0, std::floor(s * std::ldexp(1.0, e)))), BigInt(1) << e);
            prod *= sides[j];
        }
        sides[d - 1] = vol / prod;
    }
    const long long q = 1 + (long long)rng.below(std::uint64_t(Q));
    Box box;
    for (int j = 0; j < d; ++j) {
        Rational anchor = make_rational(big((long long)rng.below(std::uint64_t(q) + 1)), big(q));
        Rational lo = anchor - sides[j] * frac(0);
        box.side.push_back({lo, lo + sides[j]});
    }
    return box;
}

// ---------------------------------------------------------------- absolute decay

struct DecayOptions {
    std::size_t samples = 1000;
    std::uint64_t seed = 1;
    int sample_depth = 24;       // x is the least point of K in a random cylinder of this depth
    double max_radius_exp = 6;   // r = b^-u, u uniform in [1, max_radius_exp]
    double max_ratio_exp = 4;    // eps / r = b^-v, v uniform in [0.1, max_ratio_exp]
    std::size_t node_budget = 200000;
    double target_rel_err = 0.02;
};

struct DecaySample {
    std::vector<double> x;
    double r = 0, eps = 0;
    std::vector<int> normal;  // hyperplane normal (integer, ell^1 normalised distance)
    double numerator = 0;     // upper bound for mu(B cap L^eps)
    double ball = 0;          // lower bound for mu(B)
    double rel_err = 0;
    double ratio = 0;         // numerator r^e / (eps^e ball), e = delta + 1 - d
};

struct DecayResult {
    double exponent = 0;  // delta + 1 - d
    double C_emp = 0;
    std::size_t worst = 0;
    std::vector<DecaySample> samples;
    std::vector<std::pair<double, double>> bins;  // (log(eps/r) bin centre, max ratio)
    double trend_slope = 0;                       // of log max ratio against log(eps/r)
};

namespace detail {

/// Inside / meeting counts at depth L of the closed interval [lo, hi] / den, clipped to [0, 1].
inline std::pair<u128, u128> interval_counts_i64(const DigitTable& g, std::int64_t lo, std::int64_t hi, std::int64_t den,
                                                 int L, const std::vector<u128>& npow) {
    if (lo < 0) lo = 0;
    if (hi > den) hi = den;
    if (hi < lo) return {0, 0};
    auto a = locate<std::int64_t, u128>(g, lo, den, L, npow);
    auto c = locate<std::int64_t, u128>(g, hi, den, L, npow);
    auto k = interval_counts<std::int64_t, u128>(g, a, den, c, den);
    return {k.inside, k.meeting};
}

// floor / ceil for a signed numerator and positive divisor
inline i128 floor_div(i128 a, i128 b) { return a >= 0 ? a / b : -((-a + b - 1) / b); }
inline i128 ceil_div(i128 a, i128 b) { return -floor_div(-a, b); }

/// Lower and upper bounds for a measure as counts over n_total.
struct CountBounds {
    BigInt lower = 0, upper = 0, total = 1;
    Rational lo() const { return make_rational(lower, total); }
    Rational hi() const { return make_rational(upper, total); }
};

/**
 * @brief Sup-norm ball B(X, R) and its intersection with {|a.z - c| <= w}; all
 * coordinates are integers over D.
 */
class DecayGeometry {
public:
    DecayGeometry(const DigitSystem& sys, std::int64_t D, int L) : sys_(sys), D_(D), L_(L) {
        for (int j = 0; j < sys.dim(); ++j) {
            tables_.emplace_back(sys, j);
            npow_.push_back(count_powers<u128>(sys.count(j), L));
        }
    }

    CountBounds ball(const std::vector<std::int64_t>& X, std::int64_t R) const {
        CountBounds out;
        out.lower = out.upper = 1;
        for (int j = 0; j < sys_.dim(); ++j) {
            auto [in, me] = interval_counts_i64(tables_[j], X[j] - R, X[j] + R, D_, L_, npow_[j]);
            out.lower *= big(in);
            out.upper *= big(me);
            out.total *= big(npow_[j][L_]);
        }
        return out;
    }

    CountBounds slab(const std::vector<std::int64_t>& X, std::int64_t R, const std::vector<int>& a, i128 c, i128 w,
                     double target_rel_err, std::size_t budget) const {
        const int d = sys_.dim();
        std::vector<std::int64_t> lo(d), hi(d);
        for (int j = 0; j < d; ++j) {
            lo[j] = X[j] - R;
            hi[j] = X[j] + R;
        }
        int axis = -1;  // normal along one coordinate
        for (int j = 0; j < d; ++j)
            if (a[j] != 0 && std::count(a.begin(), a.end(), 0) == d - 1) axis = j;
        if (axis >= 0) {
            const i128 s = a[axis] > 0 ? a[axis] : -a[axis];
            const i128 cc = a[axis] > 0 ? c : -c;
            lo[axis] = std::int64_t(std::max<i128>(lo[axis], ceil_div(cc - w, s)));
            hi[axis] = std::int64_t(std::min<i128>(hi[axis], floor_div(cc + w, s)));
            CountBounds out;
            out.lower = out.upper = 1;
            for (int j = 0; j < d; ++j) {
                auto [in, me] = interval_counts_i64(tables_[j], lo[j], hi[j], D_, L_, npow_[j]);
                out.lower *= big(in);
                out.upper *= big(me);
                out.total *= big(npow_[j][L_]);
            }
            return out;
        }
        if (d != 2 || a[1] == 0) throw std::invalid_argument("unsupported hyperplane");
        return sloped(lo, hi, a, c, w, target_rel_err, budget);
    }

private:
    // coordinate-0 cylinders at depth m; z1 range of the strip bracketed over each cylinder's hull
    CountBounds sloped(const std::vector<std::int64_t>& lo, const std::vector<std::int64_t>& hi, const std::vector<int>& a,
                       i128 c, i128 w, double target_rel_err, std::size_t budget) const {
        const DigitTable& g0 = tables_[0];
        const DigitTable& g1 = tables_[1];
        const std::int64_t b = g0.b;
        const i128 a0 = a[0], a1 = a[1] > 0 ? a[1] : -a[1];
        if (a[1] < 0) c = -c;
        const i128 s0 = a[1] < 0 ? -a0 : a0;  // strip: |s0 z0 + a1 z1 - c| <= w, a1 > 0
        const std::int64_t den1 = D_ * std::int64_t(a1);
        const std::int64_t width = std::max<std::int64_t>(1, std::int64_t(w / a1));
        int m = 0;
        {
            std::int64_t cell = D_;
            while (cell > width && m < L_) {
                cell /= b;
                ++m;
            }
        }
        CountBounds best;
        best.total = 0;
        for (;; ++m) {
            std::vector<std::pair<std::int64_t, int>> cyl;  // (index, in_ball)
            bool over = false;
            std::vector<std::int64_t> bpow(m + 1, 1);
            for (int i = 1; i <= m; ++i) bpow[i] = bpow[i - 1] * b;
            // iterative DFS over coordinate-0 words
            struct Node {
                std::int64_t k;
                int depth;
            };
            std::vector<Node> st{{0, 0}};
            while (!st.empty()) {
                Node nd = st.back();
                st.pop_back();
                const std::int64_t scale = D_ / (b - 1) / bpow[nd.depth];
                const std::int64_t hlo = (nd.k * (b - 1) + g0.min_digit) * scale;
                const std::int64_t hhi = (nd.k * (b - 1) + g0.max_digit) * scale;
                if (hhi < lo[0] || hlo > hi[0]) continue;
                if (nd.depth == m) {
                    cyl.push_back({nd.k, (hlo >= lo[0] && hhi <= hi[0]) ? 1 : 0});
                    if (cyl.size() > budget) {
                        over = true;
                        break;
                    }
                    continue;
                }
                for (int t = b - 1; t >= 0; --t)
                    if (g0.in[t]) st.push_back({nd.k * b + t, nd.depth + 1});
            }
            if (over) break;
            u128 lower = 0, upper = 0;
            const std::int64_t scale = D_ / (b - 1) / bpow[m];
            for (auto [k, inside_ball] : cyl) {
                const i128 hlo = i128(k * (b - 1) + g0.min_digit) * scale;
                const i128 hhi = i128(k * (b - 1) + g0.max_digit) * scale;
                // z1 in [(c - w - s0 z0)/a1, (c + w - s0 z0)/a1]; numerators over den1 = D a1
                const i128 f_lo = s0 >= 0 ? s0 * hlo : s0 * hhi, f_hi = s0 >= 0 ? s0 * hhi : s0 * hlo;
                const i128 inner_lo = c - w - f_lo, inner_hi = c + w - f_hi;
                const i128 outer_lo = c - w - f_hi, outer_hi = c + w - f_lo;
                const i128 blo = i128(lo[1]) * a1, bhi = i128(hi[1]) * a1;
                auto clip = [&](i128 v) { return std::int64_t(std::clamp<i128>(v, -1, i128(den1) + 1)); };
                const u128 wcount = npow_[0][L_ - m];  // mu_0-mass of one depth-m cylinder in depth-L units
                if (inside_ball) {
                    auto [in, me] = interval_counts_i64(g1, clip(std::max(inner_lo, blo)), clip(std::min(inner_hi, bhi)),
                                                        den1, L_, npow_[1]);
                    lower += wcount * in;
                }
                auto [in2, me2] = interval_counts_i64(g1, clip(std::max(outer_lo, blo)), clip(std::min(outer_hi, bhi)),
                                                      den1, L_, npow_[1]);
                upper += wcount * me2;
            }
            best.lower = big(lower);
            best.upper = big(upper);
            best.total = big(npow_[0][L_]) * big(npow_[1][L_]);
            if (m >= L_ || (lower > 0 && double(upper - lower) <= target_rel_err * double(lower))) break;
        }
        if (best.total == 0) throw std::runtime_error("sloped slab: node budget too small");
        return best;
    }

    const DigitSystem& sys_;
    std::int64_t D_;
    int L_;
    std::vector<DigitTable> tables_;
    std::vector<std::vector<u128>> npow_;
};

}  // namespace detail

/**
 * @brief Empirical constant in mu(B(x,r) cap L^(eps)) <= C (eps/r)^{delta+1-d} mu(B(x,r)).
 *
 * Balls and hyperplane neighbourhoods use the sup-norm, so L^(eps) for
 * L = {a.z = c} is {|a.z - c| <= eps |a|_1}.  For d = 2 the lines are the two
 * axis directions and normals of height <= 2.  Ratios use the upper bound of
 * the numerator and the lower bound of mu(B).
 */
inline DecayResult decay_check(const DigitSystem& sys, const DecayOptions& opt = {}) {
    const int d = sys.dim();
    if (d < 1 || d > 2) throw std::invalid_argument("decay_check supports d in {1, 2}");
    const double delta = sys.hausdorff_dim();
    if (d == 2 && !(delta > 1)) throw std::invalid_argument("decay_check at d = 2 needs delta > 1");
    if (opt.samples < 1) throw std::invalid_argument("need at least one sample");
    const int b = sys.base();
    // 2 D b < 2^62 keeps locate() in 64 bits
    int P = 0;
    std::int64_t D = b - 1;
    while (P < opt.sample_depth && double(D) * b * 2 * b < 0x1p62) {
        D *= b;
        ++P;
    }
    const std::int64_t bP = D / (b - 1);
    int L = P + 8;
    for (int j = 0; j < d; ++j)
        while (L > P && std::log2(double(sys.count(j))) * L > 100) --L;
    detail::DecayGeometry geo(sys, D, L);

    DecayResult res;
    res.exponent = delta + 1 - d;
    res.samples.resize(opt.samples);
    static const std::vector<std::vector<int>> normals2{{1, 0}, {0, 1}, {1, 1}, {1, -1}, {1, 2}, {2, 1}, {1, -2}, {2, -1}};
    parallel_for(opt.samples, [&](std::size_t i) {
        CounterRng rng(opt.seed, i);
        DecaySample s;
        std::vector<std::int64_t> X(d);
        for (int j = 0; j < d; ++j) {
            const auto& Dj = sys.digits(j);
            std::int64_t k = 0;
            for (int t = 0; t < P; ++t) k = k * b + Dj[rng.below(Dj.size())];
            X[j] = k * (b - 1) + Dj.front();  // least point of K in the cylinder
            s.x.push_back(double(X[j]) / double(D));
        }
        auto badic = [&](double v) {  // floor(v b^P) (b-1), at least b-1
            double scaled = std::floor(v * double(bP));
            return std::int64_t(std::max(1.0, scaled)) * (b - 1);
        };
        const double u = 1 + (opt.max_radius_exp - 1) * rng.uniform();
        const double v = 0.1 + (opt.max_ratio_exp - 0.1) * rng.uniform();
        const std::int64_t R = badic(std::pow(double(b), -u));
        const std::int64_t E = badic(std::pow(double(b), -u - v));
        s.r = double(R) / double(D);
        s.eps = double(E) / double(D);
        s.normal = d == 1 ? std::vector<int>{1} : normals2[rng.below(normals2.size())];
        i128 c = 0, l1 = 0;
        for (int j = 0; j < d; ++j) {
            const double t = 2 * rng.uniform() - 1;
            c += i128(s.normal[j]) * (X[j] + std::int64_t(std::floor(t * double(R))));
            l1 += s.normal[j] < 0 ? -s.normal[j] : s.normal[j];
        }
        auto ball = geo.ball(X, R);
        auto num = geo.slab(X, R, s.normal, c, i128(E) * l1, opt.target_rel_err, opt.node_budget);
        s.ball = ball.lo().get_d();
        s.numerator = num.hi().get_d();
        const double num_lo = num.lo().get_d();
        s.rel_err = num_lo > 0 ? (s.numerator - num_lo) / num_lo : (s.numerator > 0 ? INFINITY : 0.0);
        s.ratio = s.ball > 0 ? s.numerator * std::pow(s.r / s.eps, res.exponent) / s.ball : 0.0;
        res.samples[i] = std::move(s);
    });
    for (std::size_t i = 0; i < res.samples.size(); ++i)
        if (res.samples[i].ratio > res.C_emp) {
            res.C_emp = res.samples[i].ratio;
            res.worst = i;
        }
    // max ratio per unit bin of log_b(r/eps)
    std::map<int, double> bin_max;
    for (const auto& s : res.samples) {
        int bin = int(std::floor(std::log(s.r / s.eps) / std::log(double(b))));
        bin_max[bin] = std::max(bin_max[bin], s.ratio);
    }
    std::vector<double> xs, ys;
    for (auto [bin, m] : bin_max) {
        if (m <= 0) continue;
        const double centre = -(bin + 0.5) * std::log(double(b));
        res.bins.emplace_back(centre, m);
        xs.push_back(centre);
        ys.push_back(std::log(m));
    }
    if (xs.size() >= 2) res.trend_slope = linear_fit(xs, ys).slope;
    return res;
}

// ---------------------------------------------------------------- 5r covering

/// Closed axis rectangle with rational centre and half-sides; scale orders the greedy pass.
struct Rect {
    std::vector<Rational> centre;
    std::vector<Rational> half;
    double scale = 0;  // r with half_j ~ r^{u_j}
};

struct CoverResult {
    std::vector<std::size_t> selected;
    double factor = 1;           // 5^{max u / min u}
    Rational factor_used = 1;    // rational lower approximation of factor used in the check
    Rational needed_factor = 0;  // least lambda with every rectangle inside lambda R_s for some selected s
    bool disjoint = true;
    bool covered = true;
};

/// lambda R: same centre, half-sides times lambda.
inline bool rect_inside_scaled(const Rect& inner, const Rect& outer, const Rational& lambda) {
    for (std::size_t j = 0; j < inner.centre.size(); ++j)
        if (abs(inner.centre[j] - outer.centre[j]) + inner.half[j] > lambda * outer.half[j]) return false;
    return true;
}

inline bool rects_intersect(const Rect& a, const Rect& b) {
    for (std::size_t j = 0; j < a.centre.size(); ++j)
        if (abs(a.centre[j] - b.centre[j]) > a.half[j] + b.half[j]) return false;
    return true;
}

namespace detail {

/// Uniform grid over centres; cells at least as wide as any two half-sides together.
class RectGrid {
public:
    RectGrid(const std::vector<Rect>& rects, int d) : rects_(rects), d_(d), cell_(d, 0) {
        for (const auto& r : rects)
            for (int j = 0; j < d; ++j) cell_[j] = std::max(cell_[j], 2 * r.half[j].get_d() * (1 + 1e-9));
        for (int j = 0; j < d; ++j)
            if (cell_[j] <= 0) cell_[j] = 1;
    }
    void insert(std::size_t i) { cells_[key(cell_of(rects_[i]))].push_back(i); }
    template <class F>
    void for_near(const Rect& r, F&& f) const {
        auto c = cell_of(r);
        std::vector<long long> k(2, 0);
        for (long long dx = -1; dx <= 1; ++dx)
            for (long long dy = (d_ > 1 ? -1 : 0); dy <= (d_ > 1 ? 1 : 0); ++dy) {
                k[0] = c[0] + dx;
                k[1] = c[1] + dy;
                auto it = cells_.find(key(k));
                if (it == cells_.end()) continue;
                for (auto idx : it->second) f(idx);
            }
    }

private:
    std::vector<long long> cell_of(const Rect& r) const {
        std::vector<long long> c(2, 0);
        for (int j = 0; j < d_; ++j) c[j] = (long long)std::floor(r.centre[j].get_d() / cell_[j]);
        return c;
    }
    static std::uint64_t key(const std::vector<long long>& c) {
        return (std::uint64_t(c[0]) * 0x9e3779b97f4a7c15ULL) ^ std::uint64_t(c[1]);
    }
    const std::vector<Rect>& rects_;
    int d_;
    std::vector<double> cell_;
    std::unordered_map<std::uint64_t, std::vector<std::size_t>> cells_;
};

}  // namespace detail

/**
 * @brief Greedy disjoint subfamily (descending scale, ties by centre) with an
 * exact check that factor_used-enlargements of it contain every rectangle.
 */
inline CoverResult greedy_disjoint_cover(const std::vector<Rect>& rects, const Rational& factor_used) {
    CoverResult out;
    out.factor = factor_used.get_d();
    out.factor_used = factor_used;
    if (rects.empty()) return out;
    const int d = int(rects.front().centre.size());
    if (d < 1 || d > 2) throw std::invalid_argument("greedy cover supports d in {1, 2}");
    std::vector<double> cd(rects.size() * d), hd(rects.size() * d);
    for (std::size_t i = 0; i < rects.size(); ++i)
        for (int j = 0; j < d; ++j) {
            cd[i * d + j] = rects[i].centre[j].get_d();
            hd[i * d + j] = rects[i].half[j].get_d();
        }
    // exact test only when the double gap is within rounding
    auto maybe_meet = [&](std::size_t a, std::size_t b) {
        for (int j = 0; j < d; ++j) {
            double gap = std::abs(cd[a * d + j] - cd[b * d + j]) - (hd[a * d + j] + hd[b * d + j]);
            double tol = 1e-12 * (std::abs(cd[a * d + j]) + std::abs(cd[b * d + j]) + hd[a * d + j] + hd[b * d + j]);
            if (gap > tol) return false;
        }
        return true;
    };

    std::vector<std::size_t> order(rects.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (rects[a].scale != rects[b].scale) return rects[a].scale > rects[b].scale;
        if (rects[a].centre != rects[b].centre) return rects[a].centre < rects[b].centre;
        return a < b;
    });
    detail::RectGrid grid(rects, d);
    std::vector<Rational> need(rects.size(), -1);
    for (std::size_t i : order) {
        bool hit = false;
        grid.for_near(rects[i], [&](std::size_t s) {
            if (!maybe_meet(i, s) || !rects_intersect(rects[i], rects[s])) return;
            hit = true;
            Rational lam = 0;
            for (int j = 0; j < d; ++j) {
                Rational l = (abs(rects[i].centre[j] - rects[s].centre[j]) + rects[i].half[j]) / rects[s].half[j];
                if (l > lam) lam = l;
            }
            if (need[i] < 0 || lam < need[i]) need[i] = lam;
        });
        if (!hit) {
            out.selected.push_back(i);
            grid.insert(i);
            need[i] = 1;
        }
    }
    for (const auto& n : need) {
        if (n < 0) out.covered = false;
        if (n > out.needed_factor) out.needed_factor = n;
    }
    out.covered = out.covered && out.needed_factor <= out.factor_used;
    // disjointness, pairwise over grid neighbours
    detail::RectGrid sel(rects, d);
    for (std::size_t s : out.selected) {
        sel.for_near(rects[s], [&](std::size_t t) {
            if (maybe_meet(s, t) && rects_intersect(rects[s], rects[t])) out.disjoint = false;
        });
        sel.insert(s);
    }
    return out;
}

/**
 * @brief Greedy disjoint subfamily and an exact check that
 * 5^{max u/min u}-enlargements of it contain every rectangle.
 */
inline CoverResult five_r_cover(const std::vector<Rect>& rects, const std::vector<double>& u, double exponent_tol = 1e-6) {
    if (u.empty()) throw std::invalid_argument("exponent vector is empty");
    const int d = int(u.size());
    if (d > 2) throw std::invalid_argument("five_r_cover supports d <= 2");
    for (double e : u)
        if (!(e > 0)) throw std::invalid_argument("exponents must be positive");
    for (const auto& r : rects) {
        if (int(r.centre.size()) != d || int(r.half.size()) != d) throw std::invalid_argument("rectangle dimension mismatch");
        if (!(r.scale > 0 && r.scale < 1)) throw std::invalid_argument("scale must lie in (0, 1)");
        for (int j = 0; j < d; ++j) {
            if (r.half[j] <= 0) throw std::invalid_argument("half-sides must be positive");
            const double got = std::log(r.half[j].get_d()) / std::log(r.scale);
            if (std::abs(got - u[j]) > exponent_tol * std::max(1.0, u[j]))
                throw std::invalid_argument("rectangles do not share the exponent vector");
        }
    }
    const double umax = *std::max_element(u.begin(), u.end()), umin = *std::min_element(u.begin(), u.end());
    const double factor = std::pow(5.0, umax / umin);
    auto out = greedy_disjoint_cover(rects, Rational(std::floor(factor * 1024) / 1024));
    out.factor = factor;
    return out;
}

}  // namespace mdset
