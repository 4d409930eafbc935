#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include "magdda/errors.hpp"

namespace magdda {

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
};

inline LinearFit linear_fit(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2)
        throw ConfigError("linear_fit: need two same-length samples of size >= 2");
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx, dy = y[i] - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if (sxx <= 0.0)
        throw ConfigError("linear_fit: degenerate abscissa");
    LinearFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    f.r2 = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
    return f;
}

namespace detail_stats {

/// Fractional ranks with ties sharing the average rank.
inline std::vector<double> ranks(const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size(), 0.0);
    std::size_t i = 0;
    while (i < idx.size()) {
        std::size_t j = i;
        while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]])
            ++j;
        const double shared = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
        for (std::size_t q = i; q <= j; ++q)
            r[idx[q]] = shared;
        i = j + 1;
    }
    return r;
}

} // namespace detail_stats

/// Spearman rank correlation (Pearson correlation of the rank vectors,
/// tie-safe).
inline double spearman_rank_correlation(const std::vector<double>& x,
                                        const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2)
        throw ConfigError("spearman_rank_correlation: need two same-length samples");
    const auto rx = detail_stats::ranks(x);
    const auto ry = detail_stats::ranks(y);
    const double n = static_cast<double>(x.size());
    const double mr = (n + 1.0) / 2.0;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        const double dx = rx[i] - mr, dy = ry[i] - mr;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx <= 0.0 || syy <= 0.0)
        return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

struct Peak {
    std::size_t index = 0;  // sample index of the discrete maximum
    double x = 0.0;         // sub-sample abscissa from parabolic refinement
    double value = 0.0;     // refined ordinate
    double prominence = 0.0;
};

/// Local maxima of a sampled curve with parabolic sub-sample refinement and
/// classical prominence (drop to the highest saddle separating the peak from
/// any higher ground). Peaks below `min_prominence` relative to the data
/// range are discarded.
inline std::vector<Peak> find_peaks(const std::vector<double>& x, const std::vector<double>& y,
                                    double min_prominence = 0.0) {
    if (x.size() != y.size() || x.size() < 3)
        throw ConfigError("find_peaks: need same-length samples of size >= 3");
    std::vector<Peak> peaks;
    for (std::size_t i = 1; i + 1 < y.size(); ++i) {
        if (!(y[i] > y[i - 1] && y[i] >= y[i + 1]))
            continue;
        Peak p;
        p.index = i;
        const double denom = y[i - 1] - 2.0 * y[i] + y[i + 1];
        if (denom < 0.0) {
            const double delta = 0.5 * (y[i - 1] - y[i + 1]) / denom;
            const double h = 0.5 * (x[i + 1] - x[i - 1]);
            p.x = x[i] + delta * h;
            p.value = y[i] - 0.25 * (y[i - 1] - y[i + 1]) * delta;
        } else {
            p.x = x[i];
            p.value = y[i];
        }
        // prominence: walk both ways until a sample exceeds the peak or the
        // signal ends, keep the minimum passed on each side, reference level
        // is the higher of the two minima
        double left_min = y[i], right_min = y[i];
        for (std::size_t q = i; q-- > 0;) {
            if (y[q] > y[i])
                break;
            left_min = std::min(left_min, y[q]);
        }
        for (std::size_t q = i + 1; q < y.size(); ++q) {
            if (y[q] > y[i])
                break;
            right_min = std::min(right_min, y[q]);
        }
        p.prominence = y[i] - std::max(left_min, right_min);
        peaks.push_back(p);
    }
    if (min_prominence > 0.0 && !peaks.empty()) {
        const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
        const double range = *hi - *lo;
        peaks.erase(std::remove_if(peaks.begin(), peaks.end(),
                                   [&](const Peak& p) {
                                       return p.prominence < min_prominence * range;
                                   }),
                    peaks.end());
    }
    return peaks;
}

} // namespace magdda
