#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace mdset {

struct LinearFit {
    double slope = 0, intercept = 0;
    double slope_se = 0;  // standard error of the slope; 0 when n <= 2
    double r2 = 0;
    std::size_t n = 0;
};

/// Ordinary least squares y = slope x + intercept.
inline LinearFit linear_fit(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("linear_fit needs >= 2 paired points");
    const double n = double(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0) throw std::invalid_argument("linear_fit: x values are all equal");
    LinearFit f;
    f.n = x.size();
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    double sse = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double r = y[i] - f.intercept - f.slope * x[i];
        sse += r * r;
    }
    f.r2 = syy > 0 ? 1 - sse / syy : 1;
    if (x.size() > 2) f.slope_se = std::sqrt(sse / (n - 2) / sxx);
    return f;
}

inline double median(std::vector<double> v) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(v.begin(), v.end());
    std::size_t m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

/// Log-domain summary of positive ratios; non-positive entries are only counted.
struct GeometricSummary {
    std::size_t count = 0;
    std::size_t nonpositive = 0;
    double min = 0, max = 0, median = 0;
    double geo_mean = 0;
    double log_sd = 0;
    double spread = 0;  // max/min over positive entries
};

inline GeometricSummary geometric_summary(const std::vector<double>& values) {
    GeometricSummary s;
    s.count = values.size();
    std::vector<double> pos;
    for (double v : values) {
        if (v > 0 && std::isfinite(v))
            pos.push_back(v);
        else
            ++s.nonpositive;
    }
    if (pos.empty()) {
        s.min = s.max = s.median = s.geo_mean = std::numeric_limits<double>::quiet_NaN();
        s.spread = std::numeric_limits<double>::infinity();
        return s;
    }
    s.min = *std::min_element(pos.begin(), pos.end());
    s.max = *std::max_element(pos.begin(), pos.end());
    s.median = median(pos);
    double ml = 0;
    for (double v : pos) ml += std::log(v);
    ml /= double(pos.size());
    double var = 0;
    for (double v : pos) var += (std::log(v) - ml) * (std::log(v) - ml);
    s.geo_mean = std::exp(ml);
    s.log_sd = pos.size() > 1 ? std::sqrt(var / double(pos.size() - 1)) : 0;
    s.spread = s.max / s.min;
    return s;
}

}  // namespace mdset
