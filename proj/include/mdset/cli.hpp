#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mdset/audit.hpp"
#include "mdset/formulas.hpp"
#include "mdset/fourier.hpp"
#include "mdset/geometry.hpp"
#include "mdset/io.hpp"
#include "mdset/limsup.hpp"
#include "mdset/stats.hpp"

namespace mdset::cli {

enum ExitCode : int { kOk = 0, kInternal = 1, kInvalidConfig = 2, kConsistency = 3 };

/// Thrown for malformed or unknown configuration values (exit 2).
struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/**
 * @brief Parameter block of one run with typed accessors.
 *
 * Values come from a JSON config file and key=value tokens (tokens win).  Every
 * key must be read by the command, otherwise the run is refused.
 */
class Params {
public:
    Params() = default;
    explicit Params(nlohmann::json j) : j_(std::move(j)) {
        if (!j_.is_object()) throw ConfigError("config must be a JSON object");
    }

    void set(const std::string& key, const std::string& value) { j_[key] = value; }
    const nlohmann::json& json() const { return j_; }

    bool has(const std::string& key) const { return j_.contains(key); }

    std::string text(const std::string& key, const std::string& def) {
        if (!take(key)) return def;
        const auto& v = j_[key];
        if (v.is_string()) return v.get<std::string>();
        return v.dump();
    }

    long long integer(const std::string& key, long long def) {
        if (!take(key)) return def;
        const auto& v = j_[key];
        if (v.is_number_integer()) return v.get<long long>();
        if (v.is_string()) return parse_int(v.get<std::string>(), key);
        throw ConfigError(key + " must be an integer");
    }

    double real(const std::string& key, double def) {
        if (!take(key)) return def;
        const auto& v = j_[key];
        if (v.is_number()) return v.get<double>();
        if (v.is_string()) return parse_real(v.get<std::string>(), key);
        throw ConfigError(key + " must be a number");
    }

    /// Exact rational given as "num/den"; decimals are rejected.
    Rational exact(const std::string& key, const Rational& def) {
        if (!take(key)) return def;
        const auto& v = j_[key];
        if (v.is_number_integer()) return Rational(long(v.get<long long>()));
        if (!v.is_string()) throw ConfigError(key + " must be an exact rational string \"num/den\"");
        try {
            return parse_rational(v.get<std::string>());
        } catch (const std::invalid_argument& e) {
            throw ConfigError(key + ": " + e.what());
        }
    }

    bool flag(const std::string& key, bool def) {
        if (!take(key)) return def;
        const auto& v = j_[key];
        if (v.is_boolean()) return v.get<bool>();
        std::string s = v.is_string() ? v.get<std::string>() : v.dump();
        if (s == "1" || s == "true" || s == "yes") return true;
        if (s == "0" || s == "false" || s == "no") return false;
        throw ConfigError(key + " must be true or false");
    }

    std::vector<std::string> list(const std::string& key, const std::string& def) {
        std::vector<std::string> out;
        if (take(key) && j_[key].is_array()) {
            for (const auto& e : j_[key]) out.push_back(e.is_string() ? e.get<std::string>() : e.dump());
            return out;
        }
        std::string s = has(key) ? (j_[key].is_string() ? j_[key].get<std::string>() : j_[key].dump()) : def;
        std::stringstream ss(s);
        std::string tok;
        while (std::getline(ss, tok, ','))
            if (!tok.empty()) out.push_back(tok);
        return out;
    }

    /// Comma list of integers; "2^k" and ranges "a..b" (with "2^a..2^b" stepping by doubling) are expanded.
    std::vector<long long> int_list(const std::string& key, const std::string& def) {
        std::vector<long long> out;
        for (const auto& tok : list(key, def)) {
            auto dots = tok.find("..");
            if (dots == std::string::npos) {
                out.push_back(parse_int(tok, key));
                continue;
            }
            std::string a = tok.substr(0, dots), b = tok.substr(dots + 2);
            bool pow2 = a.rfind("2^", 0) == 0 && b.rfind("2^", 0) == 0;
            long long lo = parse_int(a, key), hi = parse_int(b, key);
            if (hi < lo) throw ConfigError(key + ": empty range " + tok);
            if (pow2)
                for (long long v = lo; v <= hi; v *= 2) out.push_back(v);
            else
                for (long long v = lo; v <= hi; ++v) out.push_back(v);
        }
        if (out.empty()) throw ConfigError(key + " is empty");
        return out;
    }

    std::vector<double> real_list(const std::string& key, const std::string& def) {
        std::vector<double> out;
        for (const auto& tok : list(key, def)) out.push_back(parse_real(tok, key));
        if (out.empty()) throw ConfigError(key + " is empty");
        return out;
    }

    void reject_unused() const {
        std::string bad;
        for (const auto& [k, v] : j_.items())
            if (!used_.count(k)) bad += (bad.empty() ? "" : ", ") + k;
        if (!bad.empty()) throw ConfigError("unknown parameter(s): " + bad);
    }

    static long long parse_int(const std::string& s, const std::string& key) {
        if (s.rfind("2^", 0) == 0) {
            long long e = parse_int(s.substr(2), key);
            if (e < 0 || e > 62) throw ConfigError(key + ": exponent out of range in " + s);
            return 1LL << e;
        }
        std::size_t pos = 0;
        long long v = 0;
        try {
            v = std::stoll(s, &pos);
        } catch (const std::exception&) {
            throw ConfigError(key + ": not an integer: " + s);
        }
        if (pos != s.size()) throw ConfigError(key + ": not an integer: " + s);
        return v;
    }

    static double parse_real(const std::string& s, const std::string& key) {
        if (s.find('/') != std::string::npos) {
            try {
                return parse_rational(s).get_d();
            } catch (const std::invalid_argument&) {
                throw ConfigError(key + ": not a number: " + s);
            }
        }
        std::size_t pos = 0;
        double v = 0;
        try {
            v = std::stod(s, &pos);
        } catch (const std::exception&) {
            throw ConfigError(key + ": not a number: " + s);
        }
        if (pos != s.size() || !std::isfinite(v)) throw ConfigError(key + ": not a number: " + s);
        return v;
    }

private:
    bool take(const std::string& key) {
        used_.insert(key);
        return j_.contains(key) && !j_[key].is_null();
    }

    nlohmann::json j_ = nlohmann::json::object();
    std::set<std::string> used_;
};

/// Global flags shared by every command.
struct Globals {
    std::uint64_t seed = 1;
    std::string out_dir = "mdset_out";
    int max_depth = 0;
    double tol = 1e-12;
};

// ---------------------------------------------------------------- parsing helpers

/// base=5 digits=0,1,2,3 [dim=2] or digits="0,1,2,3;0,1,2,3,4", or sys={JSON}.
inline DigitSystem system_from(Params& p, int def_base = 5, const std::string& def_digits = "0,1,2,3") {
    if (p.has("sys")) {
        auto s = p.text("sys", "");
        try {
            return DigitSystem::from_json(nlohmann::json::parse(s));
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(std::string("sys: ") + e.what());
        }
    }
    const int base = int(p.integer("base", def_base));
    const long long dim = p.integer("dim", 0);  // 0: one coordinate per ';' group
    std::string digits = p.text("digits", def_digits);
    std::vector<std::vector<int>> per;
    std::stringstream ss(digits);
    std::string coord;
    while (std::getline(ss, coord, ';')) {
        std::vector<int> ds;
        if (coord == "all") {
            for (int a = 0; a < base; ++a) ds.push_back(a);
        } else {
            std::stringstream cs(coord);
            std::string t;
            while (std::getline(cs, t, ',')) ds.push_back(int(Params::parse_int(t, "digits")));
        }
        per.push_back(ds);
    }
    if (per.size() == 1 && dim > 1) per.assign(std::size_t(dim), per[0]);
    if (dim >= 1 && per.size() != std::size_t(dim)) throw ConfigError("digits has " + std::to_string(per.size()) + " coordinates, dim is " + std::to_string(dim));
    return DigitSystem(base, per);
}

/// "root", "1.2.0" (d = 1) or "2:3.0:1" (letters separated by '.', coordinates by ':').
inline CylinderWord parse_word(const DigitSystem& sys, const std::string& id) {
    CylinderWord w;
    if (id != "root" && !id.empty()) {
        std::stringstream ss(id);
        std::string letter;
        while (std::getline(ss, letter, '.')) {
            std::vector<int> l;
            std::stringstream ls(letter);
            std::string t;
            while (std::getline(ls, t, ':')) l.push_back(int(Params::parse_int(t, "word")));
            w.letters.push_back(l);
        }
    }
    for (const auto& l : w.letters)
        if (int(l.size()) != sys.dim()) throw ConfigError("word " + id + " does not match the dimension");
    validate_word(sys, w);
    return w;
}

/**
 * @brief Approximation widths at scale Q: d = 1 uses the dyadic Q^-tau; d = 2
 * splits eta_1 = Q^-tau * scale (dyadic, 40 bits) and eta_2 = 1/(eta_1 Q).
 */
inline std::vector<Rational> eta_for(const DigitSystem& sys, long long Q, double tau, const Rational& scale) {
    if (sys.dim() == 1) return {audit_eta(Q, tau, 1, sys.base())};
    if (sys.dim() != 2) throw ConfigError("eta split is defined for d <= 2");
    Rational a = dyadic_round(std::pow(double(Q), -tau) * scale.get_d(), 40);
    if (a <= 0) throw ConfigError("eta_1 rounds to 0");
    return {a, Rational(1) / (a * long(Q))};
}

/// JSON number, or null when not finite.
inline nlohmann::json jnum(double v) {
    if (!std::isfinite(v)) return nullptr;
    return v;
}

inline std::string join_rationals(const std::vector<Rational>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ";" : "") + to_string(v[i]);
    return s;
}

inline double log_or_nan(double v) { return v > 0 ? std::log(v) : std::nan(""); }

/// Slope of log(max) against log2 Q, the trend statistic for "bounded as Q grows".
inline LinearFit trend_fit(const std::map<long long, double>& max_by_Q) {
    std::vector<double> x, y;
    for (const auto& [Q, m] : max_by_Q)
        if (m > 0) {
            x.push_back(std::log2(double(Q)));
            y.push_back(std::log(m));
        }
    if (x.size() < 2) return LinearFit{};
    return linear_fit(x, y);
}

inline nlohmann::json fit_json(const LinearFit& f) {
    return {{"slope", jnum(f.slope)}, {"slope_se", jnum(f.slope_se)}, {"n", f.n}};
}

// ---------------------------------------------------------------- commands

struct Context {
    Params params;
    Globals globals;
    std::vector<std::string> positional;
    nlohmann::json config;  // echoed into every artifact
    std::ostream* out = &std::cout;
};

using Command = int (*)(Context&);

inline io::RunWriter writer(Context& c, const std::string& stem) {
    return io::RunWriter(c.globals.out_dir, stem, c.config);
}

inline void report(Context& c, const std::filesystem::path& summary) { *c.out << summary.string() << "\n"; }

inline int cmd_formulas(Context& c) {
    if (c.positional.size() != 1) throw ConfigError("formulas needs exactly one formula name");
    const std::string name = c.positional[0];
    auto& p = c.params;
    nlohmann::json out;
    // exact evaluation when every numeric input is a rational string
    auto all_exact = [&](std::initializer_list<const char*> keys) {
        for (const char* k : keys) {
            if (!p.has(k)) continue;
            const auto& v = p.json()[k];
            if (v.is_number_float()) return false;
            if (v.is_string()) {
                try {
                    parse_rational(v.get<std::string>());
                } catch (const std::invalid_argument&) {
                    return false;
                }
            }
        }
        return true;
    };
    auto delta_of = [&]() -> double {
        if (p.has("delta")) return p.real("delta", 0);
        return system_from(p).hausdorff_dim();
    };
    auto need = [&](const char* k) {
        if (!p.has(k)) throw ConfigError(std::string("missing parameter ") + k);
    };
    if (name == "upper-dim" || name == "lower-dim-general" || name == "lower-dim-special") {
        need("tau");
        const int d = int(p.integer("d", 1));
        const bool beta_needed = name != "upper-dim";
        if (beta_needed) need("beta");
        if (p.has("delta") && all_exact({"delta", "tau", "beta"})) {
            Rational delta = p.exact("delta", 0), tau = p.exact("tau", 0), beta = p.exact("beta", 0);
            if (name == "upper-dim") out = to_json(upper_dim<Rational>(d, delta, tau));
            else if (name == "lower-dim-general") out = to_json(lower_dim_general<Rational>(d, delta, tau, beta));
            else out = to_json(lower_dim_special<Rational>(d, delta, tau, beta));
        } else {
            double delta = delta_of(), tau = p.real("tau", 0), beta = p.real("beta", 0);
            if (name == "upper-dim") out = to_json(upper_dim<double>(d, delta, tau));
            else if (name == "lower-dim-general") out = to_json(lower_dim_general<double>(d, delta, tau, beta));
            else out = to_json(lower_dim_special<double>(d, delta, tau, beta));
        }
    } else if (name == "jarnik" || name == "jarnik-dim") {
        need("tau");
        if (all_exact({"tau"})) out = to_json(jarnik_dim<Rational>(p.exact("tau", 0)));
        else out = to_json(jarnik_dim<double>(p.real("tau", 0)));
    } else if (name == "min-attained") {
        need("beta");
        const int d = int(p.integer("d", 1));
        if (all_exact({"beta"})) out = to_json(min_attained_conditions<Rational>(d, p.exact("beta", 0)));
        else out = to_json(min_attained_conditions<double>(d, p.real("beta", 0)));
    } else if (name == "bd-conjecture") {
        need("tau");
        out = to_json(bd_conjecture_value(p.real("tau", 0)));
    } else if (name == "kappa-requirement") {
        out = to_json(p.has("delta") ? middle_third_kappa_requirement(p.real("delta", 0)) : middle_third_kappa_requirement());
    } else if (name == "hausdorff-dim") {
        auto sys = system_from(p);
        FormulaResult<double> r;
        r.name = "hausdorff-dim";
        r.inputs = {{"base", double(sys.base())}, {"dim", double(sys.dim())}};
        r.value = sys.hausdorff_dim();
        out = to_json(r);
        out["sys"] = sys.to_json();
    } else if (name == "admissible-region") {
        auto kind = parse_region_kind(p.text("kind", "missing-digits"));
        RegionParams<double> rp;
        rp.d = int(p.integer("d", 1));
        rp.alpha = p.real("alpha", 0);
        rp.gamma = p.real("gamma", 0);
        rp.kappa = p.real("kappa", 0);
        rp.beta = p.real("beta", 0);
        rp.delta = p.has("delta") || p.has("base") || p.has("sys") ? delta_of() : 0.0;
        out = to_json(admissible_region(kind, rp));
    } else {
        throw ConfigError("unknown formula: " + name);
    }
    p.reject_unused();
    auto w = writer(c, "formulas");
    auto path = w.finish(out);
    *c.out << out.dump() << "\n";
    (void)path;
    return kOk;
}

inline int cmd_audit_counting(Context& c) {
    auto& p = c.params;
    auto sys = system_from(p);
    AuditGrid grid;
    grid.Q_list = p.int_list("Q", "64,128");
    grid.taus = p.real_list("tau", "1.1");
    grid.theta = p.exact("theta", 0);
    grid.alpha = p.real("alpha", 2);
    grid.beta = p.real("beta", 0.5);
    grid.Q_min = p.integer("Q_min", 1);
    grid.max_ball_depth = int(p.integer("max_ball_depth", 3));
    grid.coprime = p.flag("coprime", false);
    grid.force_region = p.flag("force_region", false);
    grid.max_depth = c.globals.max_depth;
    p.reject_unused();
    auto rep = local_counting_audit(sys, grid);

    io::CsvTable t({"Q", "tau", "eta_num", "eta_den", "ball_id", "num", "den", "ratio", "err"});
    io::PlotData plot{"log_Q", "log_ratio", {}};
    for (const auto& cell : rep.cells) {
        t.row() << cell.Q << cell.tau << to_string(BigInt(cell.eta.get_num())) << to_string(BigInt(cell.eta.get_den()))
                << cell.ball_id << to_string(cell.num) << to_string(cell.den) << cell.ratio() << cell.err();
        plot.series[cell.ball_id + "_tau" + io::fmt_double(cell.tau)].push_back({std::log(double(cell.Q)), log_or_nan(cell.ratio())});
    }
    std::map<long long, double> spread;
    for (const auto& [Q, g] : rep.summary.per_Q) spread[Q] = g.spread;
    nlohmann::json s = to_json(rep.summary);
    s["metadata"] = rep.metadata;
    s["log_spread_trend"] = fit_json(trend_fit(spread));
    s["covering_inflation_bound"] = jnum(std::pow(double(sys.base()), sys.hausdorff_dim()));
    auto w = writer(c, "audit-counting");
    w.csv("", t);
    w.plot(plot);
    report(c, w.finish(s));
    return kOk;
}

inline int cmd_audit_global(Context& c) {
    auto& p = c.params;
    auto sys = system_from(p);
    auto Qs = p.int_list("Q", "64,128,256");
    auto taus = p.real_list("tau", "1");
    Rational theta = p.exact("theta", 0);
    p.reject_unused();
    io::CsvTable t({"Q", "tau", "eta_num", "eta_den", "ball_id", "num", "den", "ratio", "err"});
    io::PlotData plot{"log_Q", "ratio", {}};
    std::vector<double> ratios;
    for (auto Q : Qs)
        for (double tau : taus) {
            Rational eta = audit_eta(Q, tau, theta.get_den().get_si(), sys.base());
            auto g = global_counting_audit(sys, Q, eta, theta, c.globals.max_depth);
            t.row() << Q << tau << to_string(BigInt(eta.get_num())) << to_string(BigInt(eta.get_den())) << "root"
                    << to_string(g.mu.value) << to_string(g.den) << g.ratio() << g.err();
            plot.series["tau" + io::fmt_double(tau)].push_back({std::log(double(Q)), g.ratio()});
            ratios.push_back(g.ratio());
        }
    auto w = writer(c, "audit-global");
    w.csv("", t);
    w.plot(plot);
    nlohmann::json s;
    s["cells"] = ratios.size();
    s["ratio"] = to_json(geometric_summary(ratios));
    s["sys"] = sys.to_json();
    report(c, w.finish(s));
    return kOk;
}

inline int cmd_audit_cover(Context& c) {
    auto& p = c.params;
    auto sys = system_from(p);
    auto Qs = p.int_list("Q", "64,128,256");
    auto taus = p.real_list("tau", "1");
    Rational theta = p.exact("theta", 0);
    p.reject_unused();
    io::CsvTable t({"Q", "tau", "eta_num", "eta_den", "depth", "count", "ratio", "inflation_bound"});
    io::PlotData plot{"log_Q", "ratio", {}};
    std::vector<double> ratios;
    for (auto Q : Qs)
        for (double tau : taus) {
            Rational eta = audit_eta(Q, tau, theta.get_den().get_si(), sys.base());
            auto a = covering_count_audit(sys, Q, eta, theta);
            t.row() << Q << tau << to_string(BigInt(eta.get_num())) << to_string(BigInt(eta.get_den())) << a.depth
                    << to_string(a.count) << a.ratio << a.inflation_bound;
            plot.series["tau" + io::fmt_double(tau)].push_back({std::log(double(Q)), a.ratio});
            ratios.push_back(a.ratio);
        }
    auto w = writer(c, "audit-cover");
    w.csv("", t);
    w.plot(plot);
    nlohmann::json s;
    s["cells"] = ratios.size();
    s["ratio"] = to_json(geometric_summary(ratios));
    s["sys"] = sys.to_json();
    report(c, w.finish(s));
    return kOk;
}

/// "root,1,2" or "depth1" (root plus every depth-1 word).
inline std::vector<CylinderWord> words_from(Params& p, const DigitSystem& sys, const std::string& key, const std::string& def) {
    std::vector<CylinderWord> out;
    for (const auto& tok : p.list(key, def)) {
        if (tok.rfind("depth", 0) == 0) {
            int m = int(Params::parse_int(tok.substr(5), key));
            out.push_back(CylinderWord{});
            for (int k = 1; k <= m; ++k)
                for (auto& w : all_words(sys, k)) out.push_back(w);
        } else {
            out.push_back(parse_word(sys, tok));
        }
    }
    return out;
}

inline int cmd_audit_nondiv(Context& c) {
    auto& p = c.params;
    auto sys = system_from(p);
    auto omegas = words_from(p, sys, "omega", "root");
    auto Qs = p.int_list("Q", "256,512,1024");
    double tau = p.real("tau", sys.dim() == 1 ? 1.0 : 0.6);
    Rational scale = p.exact("eta1_scale", Rational(1, 4));
    p.reject_unused();
    io::CsvTable t({"Q", "tau", "eta", "ball_id", "num", "den", "ratio", "err"});
    io::PlotData plot{"log_Q", "log_ratio", {}};
    std::map<long long, double> mx, mn;
    for (auto Q : Qs) {
        auto eta = eta_for(sys, Q, tau, scale);
        for (const auto& w : omegas) {
            auto a = nondivergence_audit(sys, w, Q, eta, c.globals.max_depth);
            t.row() << Q << tau << join_rationals(eta) << w.id() << to_string(a.sum.value) << to_string(a.den) << a.ratio()
                    << a.err();
            plot.series[w.id()].push_back({std::log(double(Q)), log_or_nan(a.ratio())});
            mx[Q] = std::max(mx.count(Q) ? mx[Q] : 0.0, a.ratio());
            mn[Q] = std::min(mn.count(Q) ? mn[Q] : INFINITY, a.ratio());
        }
    }
    nlohmann::json perQ = nlohmann::json::array();
    double spread = 1;
    for (auto& [Q, m] : mx) {
        perQ.push_back({{"Q", Q}, {"min", jnum(mn[Q])}, {"max", jnum(m)}});
        spread = std::max(spread, mn[Q] > 0 ? m / mn[Q] : INFINITY);
    }
    nlohmann::json s{{"per_Q", perQ}, {"spread", jnum(spread)}, {"max_trend", fit_json(trend_fit(mx))}};
    s["sys"] = sys.to_json();
    auto w = writer(c, "audit-nondiv");
    w.csv("", t);
    w.plot(plot);
    report(c, w.finish(s));
    return kOk;
}

inline int cmd_audit_ubiquity(Context& c) {
    auto& p = c.params;
    auto sys = system_from(p);
    auto ball = parse_word(sys, p.text("ball", "root"));
    auto Qs = p.int_list("Q", "256,512");
    double tau = p.real("tau", sys.dim() == 1 ? 1.0 : 0.6);
    Rational scale = p.exact("eta1_scale", Rational(1, 4));
    std::string cs = p.text("c", "auto");
    auto samples = std::size_t(p.integer("samples", 2000));
    p.reject_unused();
    io::CsvTable t({"Q", "c", "q_start", "samples", "hits", "ratio", "se", "small_q_mass", "c_auto", "c_calibrated"});
    io::PlotData plot{"log_Q", "ratio", {}};
    double min_ratio = INFINITY;
    for (auto Q : Qs) {
        auto eta = eta_for(sys, Q, tau, scale);
        UbiquityAudit u = cs == "auto" ? ubiquity_audit_auto_c(sys, ball, Q, eta, samples, c.globals.seed)
                                       : ubiquity_audit(sys, ball, Q, eta, parse_rational(cs), samples, c.globals.seed);
        t.row() << Q << to_string(u.c) << u.q_start << u.samples << u.hits << u.ratio << u.se << u.small_q_mass << u.c_auto
                << u.c_calibrated;
        plot.series["ratio"].push_back({std::log(double(Q)), u.ratio});
        min_ratio = std::min(min_ratio, u.ratio);
    }
    nlohmann::json s{{"min_ratio", jnum(min_ratio)}, {"ball", ball.id()}, {"sys", sys.to_json()}};
    auto w = writer(c, "audit-ubiquity");
    w.csv("", t);
    w.plot(plot);
    report(c, w.finish(s));
    return kOk;
}

inline int cmd_fourier_dim(Context& c) {
    auto& p = c.params;
    auto sys = system_from(p);
    std::vector<std::int64_t> Ms;
    if (p.has("M")) {
        for (auto m : p.int_list("M", "")) Ms.push_back(m);
    } else {
        long long kmin = p.integer("kmin", 2), kmax = p.integer("kmax", 6);
        if (kmax < kmin) throw ConfigError("kmax < kmin");
        for (long long k = kmin; k <= kmax; ++k) Ms.push_back(std::int64_t(std::llround(std::pow(double(sys.base()), double(k)))));
    }
    p.reject_unused();
    auto prof = dim_l1_estimate(sys, Ms, c.globals.tol);
    io::CsvTable t({"M", "S", "error_bound", "slope"});
    io::PlotData plot{"log_M", "log_S", {}};
    for (std::size_t i = 0; i < prof.entries.size(); ++i) {
        const auto& e = prof.entries[i];
        t.row() << e.M << e.S << e.error_bound << (i == 0 ? std::string() : io::fmt_double(prof.slopes[i - 1]));
        if (e.S > 0) plot.series["l1"].push_back({std::log(double(e.M)), std::log(e.S)});
    }
    nlohmann::json s{{"estimate", jnum(prof.estimate)},
                     {"spread", jnum(prof.spread)},
                     {"degenerate", prof.degenerate},
                     {"hausdorff_dim", jnum(sys.hausdorff_dim())},
                     {"empirical", true},
                     {"sys", sys.to_json()}};
    auto w = writer(c, "fourier-dim");
    w.csv("", t);
    w.plot(plot);
    report(c, w.finish(s));
    return kOk;
}

inline int cmd_simplex_check(Context& c) {
    auto& p = c.params;
    const int d = int(p.integer("d", 1));
    const long long Q = p.integer("Q", 20);
    const auto trials = std::uint64_t(p.integer("trials", 1000));
    const std::string mode = p.text("mode", "strict");
    const Rational inflate = p.exact("inflate", 1);
    p.reject_unused();
    if (mode != "strict" && mode != "demonstrate") throw ConfigError("mode must be strict or demonstrate");
    if (mode == "strict" && inflate != 1) throw ConfigError("inflate requires mode=demonstrate");
    if (inflate < 1) throw ConfigError("inflate must be >= 1");
    io::CsvTable t({"trial", "d", "Q", "admissible", "points", "coplanar"});
    std::size_t violations = 0, inadmissible = 0;
    for (std::uint64_t i = 0; i < trials; ++i) {
        CounterRng rng(c.globals.seed, i);
        Box box = random_admissible_box(d, Q, rng);
        for (auto& s : box.side) s.hi = s.lo + (s.hi - s.lo) * inflate;
        auto r = simplex_check(d, Q, box, mode == "strict" ? SimplexMode::Strict : SimplexMode::Demonstrate);
        if (!r.coplanar && r.admissible) ++violations;
        if (!r.admissible) ++inadmissible;
        t.row() << i << d << Q << r.admissible << r.points.size() << r.coplanar;
    }
    nlohmann::json s{{"trials", trials}, {"violations", violations}, {"inadmissible", inadmissible}, {"mode", mode}};
    auto w = writer(c, "simplex-check");
    w.csv("", t);
    report(c, w.finish(s));
    return kOk;
}

inline int cmd_decay_check(Context& c) {
    auto& p = c.params;
    auto sys = system_from(p);
    DecayOptions o;
    o.samples = std::size_t(p.integer("samples", 1000));
    o.sample_depth = int(p.integer("sample_depth", o.sample_depth));
    o.max_radius_exp = p.real("max_radius_exp", o.max_radius_exp);
    o.max_ratio_exp = p.real("max_ratio_exp", o.max_ratio_exp);
    o.node_budget = std::size_t(p.integer("node_budget", (long long)o.node_budget));
    o.seed = c.globals.seed;
    p.reject_unused();
    auto r = decay_check(sys, o);
    io::CsvTable t({"sample", "r", "eps", "normal", "numerator", "ball", "rel_err", "ratio"});
    for (std::size_t i = 0; i < r.samples.size(); ++i) {
        const auto& s = r.samples[i];
        std::string normal;
        for (std::size_t j = 0; j < s.normal.size(); ++j) normal += (j ? ";" : "") + std::to_string(s.normal[j]);
        t.row() << i << s.r << s.eps << normal << s.numerator << s.ball << s.rel_err << s.ratio;
    }
    io::PlotData plot{"log_eps_over_r", "log_max_ratio", {}};
    nlohmann::json bins = nlohmann::json::array();
    for (const auto& [x, m] : r.bins) {
        plot.series["max_ratio"].push_back({x, log_or_nan(m)});
        bins.push_back({jnum(x), jnum(m)});
    }
    nlohmann::json s{{"exponent", jnum(r.exponent)}, {"C_emp", jnum(r.C_emp)},
                     {"trend_slope", jnum(r.trend_slope)}, {"bins", bins}, {"sys", sys.to_json()}};
    auto w = writer(c, "decay-check");
    w.csv("", t);
    w.plot(plot);
    report(c, w.finish(s));
    return kOk;
}

inline int cmd_cover_check(Context& c) {
    auto& p = c.params;
    const auto trials = std::uint64_t(p.integer("trials", 100));
    const long long n = p.integer("rects", 200);
    const double tau = p.real("tau", 0.6);
    const int kmax = int(p.integer("max_scale_exp", 10));
    p.reject_unused();
    if (n < 1 || kmax < 2 || !(tau > 0)) throw ConfigError("need rects >= 1, max_scale_exp >= 2, tau > 0");
    const std::vector<double> u{tau, 1 + tau};
    io::CsvTable t({"trial", "rects", "selected", "factor", "needed_factor", "disjoint", "covered"});
    std::size_t failures = 0;
    double worst = 0;
    for (std::uint64_t i = 0; i < trials; ++i) {
        CounterRng rng(c.globals.seed, i);
        std::vector<Rect> rects;
        for (long long k = 0; k < n; ++k) {
            const int e = 2 + int(rng.below(std::uint64_t(kmax - 1)));
            const double r = std::ldexp(1.0, -e);
            Rect rect;
            for (int j = 0; j < 2; ++j) {
                rect.centre.push_back(make_rational(big((long long)rng.below(1u << 20)), BigInt(1) << 20));
                rect.half.push_back(dyadic_round(std::pow(r, u[std::size_t(j)]), 60));
            }
            rect.scale = r;
            rects.push_back(std::move(rect));
        }
        auto res = five_r_cover(rects, u);
        if (!res.disjoint || !res.covered) ++failures;
        worst = std::max(worst, res.needed_factor.get_d());
        t.row() << i << n << res.selected.size() << res.factor << to_string(res.needed_factor) << res.disjoint << res.covered;
    }
    nlohmann::json s{{"trials", trials},
                     {"failures", failures},
                     {"factor", jnum(std::pow(5.0, (1 + tau) / tau))},
                     {"max_needed_factor", jnum(worst)}};
    auto w = writer(c, "cover-check");
    w.csv("", t);
    report(c, w.finish(s));
    return kOk;
}

inline int cmd_box_dim(Context& c) {
    auto& p = c.params;
    auto sys = system_from(p);
    const double tau = p.real("tau", 1.2);
    const Rational theta = p.exact("theta", 0);
    const long long q_lo = p.integer("q_lo", 64), q_hi = p.integer("q_hi", 8192);
    std::vector<int> depths;
    if (p.has("depths")) {
        for (auto v : p.int_list("depths", "")) depths.push_back(int(v));
    } else {
        auto [lo, hi] = suggest_depth_window(sys.base(), tau, q_lo, q_hi);
        for (int n = lo; n <= hi; ++n) depths.push_back(n);
    }
    const std::string method = p.text("method", sys.dim() == 1 ? "sweep" : "region");
    p.reject_unused();
    BoxDimEstimate e;
    if (method == "sweep") e = box_dim_estimate_sweep(sys, tau, theta, q_lo, q_hi, depths);
    else if (method == "region") e = box_dim_estimate(sys, build_finite_stage(sys, tau, {theta}, q_lo, q_hi), depths);
    else throw ConfigError("method must be sweep or region");
    io::CsvTable t({"depth", "count", "log_b_count"});
    io::PlotData plot{"depth", "log_b_count", {}};
    const double lb = std::log(double(sys.base()));
    for (std::size_t i = 0; i < e.depths.size(); ++i) {
        const double y = std::log(e.counts[i].get_d()) / lb;
        t.row() << e.depths[i] << to_string(e.counts[i]) << y;
        plot.series["counts"].push_back({double(e.depths[i]), y});
    }
    const double delta = sys.hausdorff_dim();
    const int d = sys.dim();
    nlohmann::json s{{"slope", jnum(e.slope)},
                     {"slope_se", jnum(e.slope_se)},
                     {"residual", jnum(e.residual)},
                     {"target", jnum(upper_exponent<double>(d, delta, tau))},
                     {"baseline", jnum(delta / (1 + tau))},
                     {"method", method},
                     {"sys", sys.to_json()}};
    auto w = writer(c, "box-dim");
    w.csv("", t);
    w.plot(plot);
    report(c, w.finish(s));
    return kOk;
}

inline void cases_table(io::CsvTable& t, long long Q, const std::vector<NuCase>& cases) {
    for (const auto& k : cases)
        t.row() << Q << k.name << k.r_lo << k.r_hi << k.applicable << k.evaluations << k.sup_ratio << k.argmax_r;
}

inline int cmd_nu_audit(Context& c) {
    auto& p = c.params;
    auto sys = system_from(p);
    NuAuditParams np;
    np.ball = parse_word(sys, p.text("ball", "1.2.0"));
    auto Qs = p.int_list("Q", "1024");
    np.tau = p.real("tau", 1.2);
    np.c = p.exact("c", Rational(1, 16));
    np.s = p.real("s", upper_exponent<double>(1, sys.hausdorff_dim(), np.tau) - 0.02);
    np.beta = p.real("beta", 0.75);
    np.samples = std::size_t(p.integer("samples", 2000));
    np.theta = p.exact("theta", 0);
    np.depth = c.globals.max_depth;
    np.seed = c.globals.seed;
    p.reject_unused();
    io::CsvTable t({"Q", "case", "r_lo", "r_hi", "applicable", "evaluations", "sup_ratio", "argmax_r"});
    io::PlotData plot{"log2_Q", "log_sup_ratio", {}};
    nlohmann::json perQ = nlohmann::json::array();
    for (auto Q : Qs) {
        np.Q = Q;
        auto r = nu_restricted_audit(sys, np);
        cases_table(t, Q, r.cases);
        for (const auto& k : r.cases)
            if (k.applicable && k.evaluations > 0) plot.series["case_" + k.name].push_back({std::log2(double(Q)), log_or_nan(k.sup_ratio)});
        perQ.push_back({{"Q", Q},
                        {"eta", to_string(r.eta)},
                        {"depth", r.depth},
                        {"components", r.components},
                        {"mass_ratio_lo", jnum(r.mass_ratio_lo)},
                        {"mass_ratio_hi", jnum(r.mass_ratio_hi)},
                        {"nu_total_hi", jnum(r.nu_total_hi)},
                        {"draws", r.draws},
                        {"samples", r.samples}});
    }
    nlohmann::json s{{"per_Q", perQ}, {"s", jnum(np.s)}, {"ball", np.ball.id()}, {"sys", sys.to_json()}};
    auto w = writer(c, "nu-audit");
    w.csv("", t);
    w.plot(plot);
    report(c, w.finish(s));
    return kOk;
}

inline int cmd_product_audit(Context& c) {
    auto& p = c.params;
    auto sys = system_from(p, 5, "0,1,2,3;0,1,2,3,4");
    ProductAuditParams pp;
    pp.ball = parse_word(sys, p.text("ball", "2:3.0:1.3:4.1:0"));
    auto Qs = p.int_list("Q", "256,512");
    pp.tau = p.real("tau", 0.6);
    pp.c = p.exact("c", Rational(1, 4));
    pp.nu_samples = std::size_t(p.integer("nu_samples", 2000));
    pp.seed = c.globals.seed;
    p.reject_unused();
    io::CsvTable t({"Q", "case", "r_lo", "r_hi", "applicable", "evaluations", "sup_ratio", "argmax_r"});
    io::CsvTable counts({"Q", "q_lo", "q_hi", "eta1", "eta2", "rationals", "skipped", "selected", "count_scale", "count_ratio",
                         "factor_used", "needed_factor", "disjoint", "covered", "contained"});
    io::PlotData plot{"log_Q", "count_ratio", {}};
    std::vector<double> ratios;
    bool exact_ok = true;
    for (auto Q : Qs) {
        pp.Q = Q;
        auto r = product_construction_audit(sys, pp);
        cases_table(t, Q, r.cases);
        counts.row() << Q << r.q_lo << r.q_hi << to_string(r.eta1) << to_string(r.eta2) << r.rationals << r.skipped << r.selected
                     << r.count_scale << r.count_ratio << to_string(r.factor_used) << to_string(r.needed_factor) << r.disjoint
                     << r.covered << r.contained;
        plot.series["count_ratio"].push_back({std::log(double(Q)), r.count_ratio});
        ratios.push_back(r.count_ratio);
        exact_ok = exact_ok && r.disjoint && r.covered && r.contained;
    }
    nlohmann::json s{{"count_ratio", to_json(geometric_summary(ratios))}, {"cover_checks_pass", exact_ok}, {"ball", pp.ball.id()},
                     {"sys", sys.to_json()}};
    auto w = writer(c, "product-audit");
    w.csv("", t);
    w.csv("_counts", counts);
    w.plot(plot);
    report(c, w.finish(s));
    return kOk;
}

inline int cmd_verify_outputs(Context& c) {
    if (c.positional.size() > 1) throw ConfigError("verify-outputs takes at most one directory");
    c.params.reject_unused();
    const std::string dir = c.positional.empty() ? c.globals.out_dir : c.positional[0];
    auto rep = io::verify_outputs(dir);
    for (const auto& i : rep.issues) *c.out << "FAIL " << i.file << ": " << i.problem << "\n";
    *c.out << (rep.ok() ? "OK" : "FAILED") << " summaries=" << rep.summaries << " artifacts=" << rep.artifacts << "\n";
    return rep.ok() ? kOk : kInternal;
}

inline const std::map<std::string, std::pair<Command, std::string>>& commands() {
    static const std::map<std::string, std::pair<Command, std::string>> table{
        {"formulas", {cmd_formulas, "evaluate a named dimension formula: formulas <name> key=value..."}},
        {"audit-counting", {cmd_audit_counting, "local counting audit over Q, tau and cylinder balls"}},
        {"audit-global", {cmd_audit_global, "mu(A_Q) / (Q eta^d) over a grid"}},
        {"audit-cover", {cmd_audit_cover, "cylinder covering counts of A_Q (d = 1)"}},
        {"audit-nondiv", {cmd_audit_nondiv, "nondivergence sums over Q for cylinders omega"}},
        {"audit-ubiquity", {cmd_audit_ubiquity, "Monte Carlo ubiquity ratio in a ball"}},
        {"fourier-dim", {cmd_fourier_dim, "empirical Fourier l1-dimension"}},
        {"simplex-check", {cmd_simplex_check, "coplanarity of rationals in small random boxes"}},
        {"decay-check", {cmd_decay_check, "absolute decay near hyperplanes"}},
        {"cover-check", {cmd_cover_check, "greedy disjoint subfamily and enlarged cover on random rectangles"}},
        {"box-dim", {cmd_box_dim, "box-counting slope of a finite stage"}},
        {"nu-audit", {cmd_nu_audit, "Hoelder exponent audit of the restricted measure"}},
        {"product-audit", {cmd_product_audit, "rational selection, 5r cover and count ratio in d = 2"}},
        {"verify-outputs", {cmd_verify_outputs, "re-check config and content hashes of an output directory"}},
    };
    return table;
}

/// Splits key=value, --key=value and --key value tokens from positional ones.
inline void absorb_tokens(const std::vector<std::string>& tokens, Params& params, std::vector<std::string>& positional) {
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        std::string t = tokens[i];
        if (t.rfind("--", 0) == 0) {
            t = t.substr(2);
            auto eq = t.find('=');
            if (eq == std::string::npos) {
                if (i + 1 >= tokens.size()) throw ConfigError("missing value for --" + t);
                params.set(t, tokens[++i]);
            } else {
                params.set(t.substr(0, eq), t.substr(eq + 1));
            }
            continue;
        }
        auto eq = t.find('=');
        if (eq == std::string::npos || eq == 0) positional.push_back(t);
        else params.set(t.substr(0, eq), t.substr(eq + 1));
    }
}

/// Full command-line entry point; returns the process exit code.
inline int run(const std::vector<std::string>& argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"mdset: experiments on missing-digit sets and their approximation properties"};
    app.require_subcommand(1);
    app.fallthrough();
    app.allow_extras();
    Globals g;
    std::string config_file;
    app.add_option("--seed", g.seed, "random seed")->capture_default_str();
    app.add_option("--out-dir", g.out_dir, "output directory")->capture_default_str();
    app.add_option("--max-depth", g.max_depth, "measure depth (0 = automatic)")->capture_default_str();
    app.add_option("--tol", g.tol, "numerical tolerance")->capture_default_str();
    app.add_option("--config", config_file, "JSON config file; command-line values override it");
    for (const auto& [name, cmd] : commands()) {
        auto* sub = app.add_subcommand(name, cmd.second);
        sub->allow_extras();
        sub->fallthrough();
    }
    std::vector<std::string> args(argv.rbegin(), argv.rend());
    if (!args.empty()) args.pop_back();  // program name
    try {
        app.parse(args);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e, out, err);
        return code == 0 ? kOk : kInvalidConfig;
    }
    try {
        Context c;
        c.globals = g;
        c.out = &out;
        auto* sub = app.get_subcommands().front();
        const std::string name = sub->get_name();
        if (!config_file.empty()) {
            try {
                c.params = Params(nlohmann::json::parse(io::read_file(config_file)));
            } catch (const nlohmann::json::exception& e) {
                throw ConfigError(std::string("config file: ") + e.what());
            } catch (const std::runtime_error& e) {
                throw ConfigError(e.what());
            }
        }
        absorb_tokens(app.remaining(), c.params, c.positional);
        c.config = {{"command", name},
                    {"positional", c.positional},
                    {"params", c.params.json()},
                    {"seed", std::to_string(g.seed)},
                    {"max_depth", g.max_depth},
                    {"tol", io::fmt_double(g.tol)}};
        return commands().at(name).first(c);
    } catch (const ConsistencyError& e) {
        err << "consistency guard: " << e.what() << "\n";
        return kConsistency;
    } catch (const std::invalid_argument& e) {
        err << "invalid configuration: " << e.what() << "\n";
        return kInvalidConfig;
    } catch (const std::length_error& e) {
        err << "invalid configuration: " << e.what() << "\n";
        return kInvalidConfig;
    } catch (const std::overflow_error& e) {
        err << "invalid configuration: " << e.what() << "\n";
        return kInvalidConfig;
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << "\n";
        return kInternal;
    }
}

}  // namespace mdset::cli
