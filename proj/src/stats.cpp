#include "bbm/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "bbm/errors.hpp"

namespace bbm {

namespace {

SlopeFit solve(std::vector<SlopeFit::Row> grid, std::string method) {
    if (grid.size() < 3) throw ValidationError("slope fit needs at least 3 points");
    double sw = 0, sx = 0, sy = 0;
    for (const auto& r : grid) {
        sw += r.weight;
        sx += r.weight * r.x;
        sy += r.weight * r.log_value;
    }
    const double xbar = sx / sw, ybar = sy / sw;
    double sxx = 0, sxy = 0;
    for (const auto& r : grid) {
        sxx += r.weight * (r.x - xbar) * (r.x - xbar);
        sxy += r.weight * (r.x - xbar) * (r.log_value - ybar);
    }
    if (!(sxx > 0.0)) throw ValidationError("slope fit grid is degenerate (all abscissae equal)");
    SlopeFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = ybar - fit.slope * xbar;
    double rss = 0;
    for (const auto& r : grid) {
        const double e = r.log_value - fit.intercept - fit.slope * r.x;
        rss += r.weight * e * e;
    }
    const double sigma2 = rss / static_cast<double>(grid.size() - 2);
    fit.stderr = std::sqrt(sigma2 / sxx);
    fit.grid = std::move(grid);
    fit.method = std::move(method);
    return fit;
}

}  // namespace

SlopeFit fit_log_slope(const std::vector<FitPoint>& points) {
    bool weighted = !points.empty();
    for (const auto& p : points) {
        if (!(p.value > 0.0) || !std::isfinite(p.value))
            throw ValidationError("slope fit needs positive finite values");
        if (!(p.stderr > 0.0)) weighted = false;
    }
    std::vector<SlopeFit::Row> grid;
    for (const auto& p : points) {
        const double rel = p.stderr / p.value;
        grid.push_back({p.x, std::log(p.value), weighted ? 1.0 / (rel * rel) : 1.0});
    }
    return solve(std::move(grid), weighted ? "wls-inverse-variance-log" : "ols-log");
}

SlopeFit refit(const SlopeFit& fit) { return solve(fit.grid, fit.method); }

// ---------------------------------------------------------------------------

double ks_critical_95(double n) { return 1.36 / std::sqrt(n); }
double ks_critical_95(double n, double m) { return 1.36 * std::sqrt((n + m) / (n * m)); }

double ks_statistic(std::vector<double> samples, const std::function<double(double)>& cdf,
                    const std::function<double(double)>& cdf_left) {
    if (samples.empty()) throw ValidationError("KS statistic of an empty sample");
    std::sort(samples.begin(), samples.end());
    const double n = static_cast<double>(samples.size());
    double d = 0.0;
    std::size_t i = 0;
    while (i < samples.size()) {
        std::size_t j = i;
        while (j < samples.size() && samples[j] == samples[i]) ++j;
        const double x = samples[i];
        // Empirical CDF just below x is i/n, at x it is j/n.
        d = std::max(d, std::abs(static_cast<double>(i) / n - cdf_left(x)));
        d = std::max(d, std::abs(static_cast<double>(j) / n - cdf(x)));
        i = j;
    }
    return d;
}

double ks_statistic(std::vector<double> samples, const std::function<double(double)>& cdf) {
    return ks_statistic(std::move(samples), cdf, cdf);
}

double ks_two_sample(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty()) throw ValidationError("two-sample KS needs two nonempty samples");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < a.size() || j < b.size()) {
        double x;
        if (j == b.size() || (i < a.size() && a[i] <= b[j]))
            x = a[i];
        else
            x = b[j];
        while (i < a.size() && a[i] == x) ++i;
        while (j < b.size() && b[j] == x) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
    }
    return d;
}

UniformityReport ks_uniform(const std::vector<double>& samples, std::size_t bin_count) {
    if (samples.size() < 20) throw ValidationError("uniformity test needs at least 20 samples");
    if (bin_count == 0) throw ValidationError("uniformity test needs at least one bin");
    UniformityReport rep;
    rep.total = samples.size();
    std::vector<double> inside;
    std::uint64_t over = 0;
    for (double x : samples) {
        if (x > 1.0)
            ++over;
        else if (x >= 0.0)
            inside.push_back(x);
        else
            throw ValidationError("uniformity test received a negative sample");
    }
    rep.overflow_fraction = static_cast<double>(over) / static_cast<double>(samples.size());
    rep.sample_count = inside.size();
    rep.bins.assign(bin_count, 0);
    for (double x : inside)
        ++rep.bins[std::min(bin_count - 1, static_cast<std::size_t>(x * static_cast<double>(bin_count)))];
    if (inside.empty()) {
        rep.ks = 1.0;
        return rep;
    }
    rep.ks = ks_statistic(inside, [](double x) { return std::clamp(x, 0.0, 1.0); });
    rep.critical = ks_critical_95(static_cast<double>(inside.size()));
    return rep;
}

// ---------------------------------------------------------------------------

std::vector<TailPoint> tail_curve(const std::vector<double>& samples, const std::vector<double>& thresholds) {
    if (samples.empty()) throw ValidationError("tail curve of an empty sample");
    std::vector<double> s = samples;
    std::sort(s.begin(), s.end());
    const double n = static_cast<double>(s.size());
    std::vector<TailPoint> out;
    for (double w : thresholds) {
        const auto above = static_cast<std::uint64_t>(s.end() - std::upper_bound(s.begin(), s.end(), w));
        TailPoint p;
        p.w = w;
        p.hits = above;
        p.survival = static_cast<double>(above) / n;
        p.stderr = std::sqrt(p.survival * (1.0 - p.survival) / n);
        out.push_back(p);
    }
    return out;
}

std::vector<TailPoint> left_tail_curve(const std::vector<double>& samples, const std::vector<double>& thresholds) {
    if (samples.empty()) throw ValidationError("tail curve of an empty sample");
    std::vector<double> s = samples;
    std::sort(s.begin(), s.end());
    const double n = static_cast<double>(s.size());
    std::vector<TailPoint> out;
    for (double u : thresholds) {
        const auto below = static_cast<std::uint64_t>(std::lower_bound(s.begin(), s.end(), -u) - s.begin());
        TailPoint p;
        p.w = u;
        p.hits = below;
        p.survival = static_cast<double>(below) / n;
        p.stderr = std::sqrt(p.survival * (1.0 - p.survival) / n);
        out.push_back(p);
    }
    return out;
}

SlopeFit fit_tail(const std::vector<TailPoint>& curve) {
    std::vector<FitPoint> pts;
    for (const auto& p : curve)
        if (p.hits > 0 && p.survival < 1.0) pts.push_back({p.w, p.survival, p.stderr});
    return fit_log_slope(pts);
}

MaxTailReport max_tail_check(const std::vector<double>& maxima, const std::vector<double>& grid,
                             std::uint64_t min_samples) {
    if (maxima.size() < min_samples)
        throw ValidationError("max tail check needs at least " + std::to_string(min_samples) + " samples, got " +
                              std::to_string(maxima.size()));
    MaxTailReport rep;
    rep.samples = maxima.size();
    rep.right_curve = tail_curve(maxima, grid);
    rep.left_curve = left_tail_curve(maxima, grid);
    rep.right = fit_tail(rep.right_curve);
    rep.left = fit_tail(rep.left_curve);
    rep.right_ok = rep.right.slope <= -0.85 * std::numbers::sqrt2;
    rep.left_ok = std::abs(rep.left.slope) >= 0.6 * (2.0 - std::numbers::sqrt2);
    return rep;
}

// ---------------------------------------------------------------------------

double coefficient_of_variation(const std::vector<double>& xs) {
    const MeanEstimate m = mean_estimate(xs);
    if (xs.size() < 2 || m.mean == 0.0) return std::numeric_limits<double>::quiet_NaN();
    return m.stderr * std::sqrt(static_cast<double>(xs.size())) / std::abs(m.mean);
}

MeanEstimate mean_estimate(const std::vector<double>& xs) {
    MeanEstimate out;
    out.n = xs.size();
    if (xs.empty()) return out;
    const double n = static_cast<double>(xs.size());
    double s = 0.0;
    for (double x : xs) s += x;
    out.mean = s / n;
    double ss = 0.0;
    for (double x : xs) ss += (x - out.mean) * (x - out.mean);
    out.stderr = xs.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
    return out;
}

PrefactorReport prefactor_discrimination(const std::vector<double>& v, const std::vector<std::vector<double>>& counts,
                                         const std::vector<double>& z) {
    if (counts.size() != z.size()) throw ValidationError("prefactor discrimination: counts and Z differ in length");
    if (v.size() < 2) throw ValidationError("prefactor discrimination needs at least two grid levels");
    PrefactorReport rep;
    rep.v = v;
    rep.ratio.assign(v.size(), 0.0);
    for (std::size_t i = 0; i < counts.size(); ++i) {
        if (counts[i].size() != v.size()) throw ValidationError("prefactor discrimination: ragged count rows");
        if (!(z[i] > 0.0)) {
            ++rep.excluded;
            continue;
        }
        ++rep.used;
        for (std::size_t j = 0; j < v.size(); ++j) rep.ratio[j] += counts[i][j] / z[i];
    }
    if (rep.used == 0) throw ValidationError("prefactor discrimination: no replica with Z > 0");
    for (std::size_t j = 0; j < v.size(); ++j) {
        rep.ratio[j] /= static_cast<double>(rep.used);
        const double base = rep.ratio[j] * std::exp(-std::numbers::sqrt2 * v[j]);
        rep.plain.push_back(base);
        rep.linear.push_back(base / v[j]);
    }
    rep.cv_linear = coefficient_of_variation(rep.linear);
    rep.cv_plain = coefficient_of_variation(rep.plain);
    rep.cv_ratio = rep.cv_linear / rep.cv_plain;
    rep.linear_flatter = rep.cv_linear < rep.cv_plain;
    return rep;
}

DominanceReport dominance_check(const std::vector<double>& values, const std::vector<double>& stderrs,
                                const std::vector<double>& shape) {
    if (values.size() != stderrs.size() || values.size() != shape.size() || values.size() < 2)
        throw ValidationError("dominance check needs matching grids with at least two points");
    DominanceReport rep;
    rep.calibration = (values.size() + 1) / 2;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!(shape[i] > 0.0)) throw ValidationError("dominance shape must be positive");
        rep.ratio.push_back(values[i] / shape[i]);
        rep.ratio_se.push_back(stderrs[i] / shape[i]);
    }
    rep.c = *std::max_element(rep.ratio.begin(), rep.ratio.begin() + static_cast<std::ptrdiff_t>(rep.calibration));
    rep.pass = true;
    for (std::size_t i = rep.calibration; i < values.size(); ++i)
        if (rep.ratio[i] > rep.c + 3.0 * rep.ratio_se[i]) rep.pass = false;
    return rep;
}

}  // namespace bbm
