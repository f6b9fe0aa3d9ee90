#pragma once

#include "rational.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <vector>

namespace mdset {

struct Precondition {
    std::string name;
    bool ok = true;
};

/**
 * @brief Value of a closed-form evaluator plus the checks its source statement imposes.
 *
 * T is double or Rational.  The value is always computed when the expression
 * is defined; `valid()` tells whether every precondition held.
 */
template <class T>
struct FormulaResult {
    std::string name;
    std::vector<std::pair<std::string, T>> inputs;
    T value{};
    bool defined = true;
    std::vector<Precondition> preconditions;
    std::map<std::string, T> extra;  // branch values, thresholds

    bool valid() const {
        if (!defined) return false;
        for (const auto& p : preconditions)
            if (!p.ok) return false;
        return true;
    }
    void check(std::string n, bool ok) { preconditions.push_back({std::move(n), ok}); }
};

namespace detail {
inline double as_double(double v) { return v; }
inline double as_double(const Rational& v) { return v.get_d(); }
inline nlohmann::json num_json(double v) {
    if (!std::isfinite(v)) return nullptr;
    return v;
}
inline nlohmann::json num_json(const Rational& v) { return v.get_d(); }
template <class T>
T from_int(long v) {
    return T(v);
}
}  // namespace detail

template <class T>
nlohmann::json to_json(const FormulaResult<T>& r) {
    nlohmann::json j;
    j["name"] = r.name;
    nlohmann::json in = nlohmann::json::object();
    for (const auto& [k, v] : r.inputs) in[k] = detail::num_json(v);
    j["inputs"] = in;
    j["value"] = r.defined ? detail::num_json(r.value) : nlohmann::json(nullptr);
    if constexpr (std::is_same_v<T, Rational>) j["exact"] = r.defined ? to_string(r.value) : "";
    nlohmann::json pre = nlohmann::json::array();
    for (const auto& p : r.preconditions) pre.push_back({{"name", p.name}, {"ok", p.ok}});
    j["preconditions"] = pre;
    if (!r.extra.empty()) {
        nlohmann::json ex = nlohmann::json::object();
        for (const auto& [k, v] : r.extra) ex[k] = detail::num_json(v);
        j["details"] = ex;
    }
    return j;
}

/// delta + (d+1)/(1+tau) - d: the sharp upper exponent, also the lower-bound cap.
template <class T>
T upper_exponent(int d, const T& delta, const T& tau) {
    return delta + T(d + 1) / (T(1) + tau) - T(d);
}

template <class T>
FormulaResult<T> upper_dim(int d, const T& delta, const T& tau) {
    FormulaResult<T> r;
    r.name = "upper-dim";
    r.inputs = {{"d", T(d)}, {"delta", delta}, {"tau", tau}};
    r.check("d >= 1", d >= 1);
    r.check("0 < delta <= d", delta > T(0) && delta <= T(d));
    // tau = 1/d is accepted as the boundary value (the expression equals delta there)
    r.check("tau >= 1/d", d >= 1 && tau * T(d) >= T(1));
    r.defined = tau != T(-1);
    if (r.defined) r.value = upper_exponent(d, delta, tau);
    return r;
}

/// Dimension of well-approximable reals of order tau on the line: min(1, 2/(1+tau)).
template <class T>
FormulaResult<T> jarnik_dim(const T& tau) {
    FormulaResult<T> r;
    r.name = "jarnik";
    r.inputs = {{"tau", tau}};
    r.check("tau >= 1", tau >= T(1));
    r.defined = tau > T(-1);
    if (r.defined) r.value = std::min<T>(T(1), T(2) / (T(1) + tau));
    return r;
}

template <class T>
FormulaResult<T> lower_dim_general(int d, const T& delta, const T& tau, const T& beta) {
    FormulaResult<T> r;
    r.name = "lower-dim-general";
    r.inputs = {{"d", T(d)}, {"delta", delta}, {"tau", tau}, {"beta", beta}};
    r.check("d >= 1", d >= 1);
    r.check("0 < delta <= d", delta > T(0) && delta <= T(d));
    r.check("tau > 1/d", tau * T(d) > T(1));
    r.check("0 < beta < 1", beta > T(0) && beta < T(1));
    r.defined = beta != T(0) && delta != T(0) && tau != T(-1);
    if (!r.defined) return r;
    T cap = upper_exponent(d, delta, tau);
    T first = delta - (tau * T(d) - T(1)) * cap / (beta * delta);
    r.extra["first_branch"] = first;
    r.extra["second_branch"] = cap;
    r.value = std::min<T>(first, cap);
    return r;
}

template <class T>
FormulaResult<T> lower_dim_special(int d, const T& delta, const T& tau, const T& beta) {
    FormulaResult<T> r;
    r.name = "lower-dim-special";
    r.inputs = {{"d", T(d)}, {"delta", delta}, {"tau", tau}, {"beta", beta}};
    r.check("d >= 1", d >= 1);
    r.check("d-1 < delta <= d", delta > T(d - 1) && delta <= T(d));
    r.check("tau > 1/d", tau * T(d) > T(1));
    r.check("0 < beta < 1", beta > T(0) && beta < T(1));
    const T gap = T(2 * d - 1) - delta;  // 2d - delta - 1
    // tau < (delta + 2 - d)/(2d - delta - 1); no constraint when the denominator vanishes
    r.check("tau < (delta+2-d)/(2d-delta-1)", gap <= T(0) || tau * gap < delta + T(2 - d));
    r.defined = beta != T(0) && delta != T(0) && tau != T(-1);
    if (!r.defined) return r;
    T cap = upper_exponent(d, delta, tau);
    T first = delta - (tau - T(1) / T(d)) * gap * cap / (beta * delta);
    r.extra["first_branch"] = first;
    r.extra["second_branch"] = cap;
    r.value = std::min<T>(first, cap);
    if (r.valid()) {
        auto g = lower_dim_general(d, delta, tau, beta);
        r.extra["general"] = g.value;
        r.check("special >= general", r.value >= g.value);
    }
    return r;
}

/// Thresholds under which the special lower bound reaches the upper exponent.
template <class T>
FormulaResult<T> min_attained_conditions(int d, const T& beta) {
    FormulaResult<T> r;
    r.name = "min-attained";
    r.inputs = {{"d", T(d)}, {"beta", beta}};
    r.check("d >= 1", d >= 1);
    T dd = T(d);
    T delta_threshold = T(2 * d - 1) - dd * dd * beta / (T(1) + dd);
    T beta_threshold = T(1) - T(1) / (dd * dd);
    r.extra["delta_threshold"] = delta_threshold;
    r.extra["beta_threshold"] = beta_threshold;
    r.value = (d == 1 ? beta > T(0) : beta > beta_threshold) ? T(1) : T(0);
    r.check("beta > 1 - d^-2", d == 1 ? beta > T(0) : beta > beta_threshold);
    return r;
}

/// max{ log2/log3 + 2/(1+tau) - 1, (log2/log3)/(1+tau) }.
inline FormulaResult<double> bd_conjecture_value(double tau) {
    FormulaResult<double> r;
    r.name = "bd-conjecture";
    r.inputs = {{"tau", tau}};
    // tau = 1 accepted as the boundary value
    r.check("tau >= 1", tau >= 1);
    const double c = std::log(2.0) / std::log(3.0);
    double a = c + 2.0 / (1.0 + tau) - 1.0;
    double b = c / (1.0 + tau);
    r.extra["first_branch"] = a;
    r.extra["second_branch"] = b;
    r.value = std::max(a, b);
    return r;
}

/// 2(1 - delta)/delta; delta defaults to the middle-third Cantor dimension.
inline FormulaResult<double> middle_third_kappa_requirement(double delta = std::log(2.0) / std::log(3.0)) {
    FormulaResult<double> r;
    r.name = "kappa-requirement";
    r.inputs = {{"delta", delta}};
    r.check("0 < delta <= 1", delta > 0 && delta <= 1);
    r.value = 2.0 * (1.0 - delta) / delta;
    return r;
}

template <class T>
struct Endpoint {
    T value{};
    bool closed = false;
    bool infinite = false;
};

/// Interval of admissible exponents.  Empty when lo >= hi (respecting closedness).
template <class T>
struct ParamInterval {
    Endpoint<T> lo, hi;
    bool empty() const {
        if (lo.infinite || hi.infinite) return false;
        if (lo.closed && hi.closed) return lo.value > hi.value;
        return lo.value >= hi.value;
    }
    bool contains(const T& x) const {
        if (!lo.infinite && (lo.closed ? x < lo.value : x <= lo.value)) return false;
        if (!hi.infinite && (hi.closed ? x > hi.value : x >= hi.value)) return false;
        return true;
    }
};

template <class T>
ParamInterval<T> open_interval(const T& lo, const T& hi) {
    return {{lo, false, false}, {hi, false, false}};
}

enum class RegionKind { SelfSimilar, MissingDigits, MissingDigitsMeasure, Product, Consistency };

inline RegionKind parse_region_kind(const std::string& s) {
    if (s == "self-similar") return RegionKind::SelfSimilar;
    if (s == "missing-digits") return RegionKind::MissingDigits;
    if (s == "missing-digits-measure" || s == "missing-digits-measure-version") return RegionKind::MissingDigitsMeasure;
    if (s == "product") return RegionKind::Product;
    if (s == "consistency") return RegionKind::Consistency;
    throw std::invalid_argument("unknown region kind: " + s);
}

inline std::string region_kind_name(RegionKind k) {
    switch (k) {
        case RegionKind::SelfSimilar: return "self-similar";
        case RegionKind::MissingDigits: return "missing-digits";
        case RegionKind::MissingDigitsMeasure: return "missing-digits-measure";
        case RegionKind::Product: return "product";
        case RegionKind::Consistency: return "consistency";
    }
    return "";
}

/// Parameters for admissible_region; unused fields are ignored by a given kind.
template <class T>
struct RegionParams {
    int d = 1;
    T alpha{};
    T gamma{};
    T kappa{};
    T delta{};
    T beta{};
};

template <class T>
struct AdmissibleRegion {
    RegionKind kind{};
    ParamInterval<T> alpha;  // admissible alpha
    ParamInterval<T> beta;   // admissible beta at the given alpha (consistency: alpha bound at the given beta)
    std::vector<Precondition> preconditions;
    bool valid() const {
        for (const auto& p : preconditions)
            if (!p.ok) return false;
        return true;
    }
};

template <class T>
AdmissibleRegion<T> admissible_region(RegionKind kind, const RegionParams<T>& p) {
    AdmissibleRegion<T> r;
    r.kind = kind;
    const T d = T(p.d);
    const T one(1);
    auto check = [&](std::string n, bool ok) { r.preconditions.push_back({std::move(n), ok}); };
    check("d >= 1", p.d >= 1);
    switch (kind) {
        case RegionKind::SelfSimilar: {
            check("kappa > 0", p.kappa > T(0));
            r.alpha = {{one / d, false, false}, {T(0), false, true}};
            check("alpha > 1/d", p.alpha * d > one);
            T sup = one + d * p.alpha * (d + one) * p.kappa / (d + one + d * p.kappa) - d * p.alpha;
            r.beta = open_interval<T>(T(0), sup);
            break;
        }
        case RegionKind::MissingDigits: {
            check("1/2 < gamma < 1", p.gamma * T(2) > one && p.gamma < one);
            if (p.gamma >= one) break;
            r.alpha = open_interval<T>(one, p.gamma / (one - p.gamma));
            check("alpha in (1, gamma/(1-gamma))", r.alpha.contains(p.alpha));
            r.beta = open_interval<T>(T(0), (one - (one + p.alpha) * (one - p.gamma)) / p.gamma);
            break;
        }
        case RegionKind::MissingDigitsMeasure: {
            check("1/2 < gamma < 1", p.gamma * T(2) > one && p.gamma < one);
            check("0 < delta <= 1", p.delta > T(0) && p.delta <= one);
            if (p.gamma >= one) break;
            r.alpha = open_interval<T>(one, (T(2) * p.delta * p.gamma - p.gamma) / (one - p.gamma));
            check("alpha in (1, (2 delta gamma - gamma)/(1-gamma))", r.alpha.contains(p.alpha));
            r.beta = {{T(2) * (one - p.delta), true, false},
                      {(one - (one + p.alpha) * (one - p.gamma)) / p.gamma, false, false}};
            break;
        }
        case RegionKind::Product: {
            check("d/(d+1) < gamma < 1", p.gamma * (d + one) > d && p.gamma < one);
            if (p.gamma >= one) break;
            r.alpha = {{one, true, false}, {(one - d + d * p.gamma) / (one - p.gamma), false, false}};
            check("alpha in [1, (1-d+d gamma)/(1-gamma))", r.alpha.contains(p.alpha));
            r.beta = open_interval<T>(T(0), (one - d + d * p.gamma + p.alpha * (p.gamma - one)) / (d * p.gamma));
            break;
        }
        case RegionKind::Consistency: {
            check("0 < delta <= d", p.delta > T(0) && p.delta <= d);
            check("0 < beta < 1", p.beta > T(0) && p.beta < one);
            r.beta = open_interval<T>(T(0), one);
            if (p.delta == d) {
                r.alpha = {{one / d, false, false}, {T(0), false, true}};
            } else {
                r.alpha = {{one / d, false, false}, {(one + p.delta - p.beta * p.delta) / (d - p.delta), true, false}};
            }
            break;
        }
    }
    return r;
}

template <class T>
nlohmann::json to_json(const ParamInterval<T>& iv) {
    auto ep = [](const Endpoint<T>& e) -> nlohmann::json {
        if (e.infinite) return nullptr;
        return detail::num_json(e.value);
    };
    return {{"lo", ep(iv.lo)}, {"lo_closed", iv.lo.closed}, {"hi", ep(iv.hi)}, {"hi_closed", iv.hi.closed}, {"empty", iv.empty()}};
}

template <class T>
nlohmann::json to_json(const AdmissibleRegion<T>& r) {
    nlohmann::json pre = nlohmann::json::array();
    for (const auto& p : r.preconditions) pre.push_back({{"name", p.name}, {"ok", p.ok}});
    return {{"name", "admissible-region"}, {"kind", region_kind_name(r.kind)}, {"alpha", to_json(r.alpha)},
            {"beta", to_json(r.beta)}, {"preconditions", pre}};
}

/// Consistency guard: alpha <= (1 + delta - beta delta)/(d - delta).
inline bool consistency_ok(int d, double delta, double alpha, double beta) {
    if (delta >= d) return true;
    return alpha <= (1.0 + delta - beta * delta) / (double(d) - delta);
}

}  // namespace mdset
