#pragma once

// Estimators and tests used to turn simulation output into exponents,
// prefactor verdicts and distributional checks.  All functions are pure.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace bbm {

struct FitPoint {
    double x = 0.0;
    double value = 0.0;   ///< count or probability, must be > 0
    double stderr = 0.0;  ///< standard error of `value` (0 = unknown)
};

struct SlopeFit {
    double slope = 0.0;
    double intercept = 0.0;
    double stderr = 0.0;
    struct Row {
        double x, log_value, weight;
    };
    std::vector<Row> grid;
    std::string method;
};

/// Weighted least squares of log(value) on x.  Weights are 1 / SE(log value)^2
/// = (value / stderr)^2 when every point has a positive stderr, uniform
/// otherwise.  The slope stderr uses the weighted residual variance.
SlopeFit fit_log_slope(const std::vector<FitPoint>& points);

/// Recomputes a fit from its stored grid (used to check reproducibility).
SlopeFit refit(const SlopeFit& fit);

// ---------------------------------------------------------------------------
// Kolmogorov-Smirnov

/// 1.36 / sqrt(n), the asymptotic 95% one-sample critical value.
double ks_critical_95(double n);
/// 1.36 sqrt((n + m) / (n m)) for two samples.
double ks_critical_95(double n, double m);

/// sup |F_n - F| for a CDF that may have atoms; `cdf_left(x)` is P(X < x).
double ks_statistic(std::vector<double> samples, const std::function<double(double)>& cdf,
                    const std::function<double(double)>& cdf_left);
/// Continuous CDF version.
double ks_statistic(std::vector<double> samples, const std::function<double(double)>& cdf);

/// Two-sample statistic; +-inf values are allowed.
double ks_two_sample(std::vector<double> a, std::vector<double> b);

struct UniformityReport {
    std::uint64_t total = 0;         ///< all samples offered
    std::uint64_t sample_count = 0;  ///< samples inside [0, 1] used by the test
    double ks = 0.0;
    double critical = 0.0;
    double overflow_fraction = 0.0;  ///< share of samples above 1
    std::vector<std::uint64_t> bins; ///< 10 equal bins over [0, 1]; sums to sample_count
};

/// One-sample KS against U[0, 1] on the samples inside [0, 1]; mass above 1
/// is excluded and reported.  Needs at least 20 samples.
UniformityReport ks_uniform(const std::vector<double>& samples, std::size_t bin_count = 10);

// ---------------------------------------------------------------------------
// Tails

struct TailPoint {
    double w = 0.0;
    double survival = 0.0;
    double stderr = 0.0;
    std::uint64_t hits = 0;
};

/// P(X > w) with binomial stderr at each threshold.
std::vector<TailPoint> tail_curve(const std::vector<double>& samples, const std::vector<double>& thresholds);
/// P(X < -u) at each u.
std::vector<TailPoint> left_tail_curve(const std::vector<double>& samples, const std::vector<double>& thresholds);

/// Log-slope of a tail curve (points with zero hits are dropped).
SlopeFit fit_tail(const std::vector<TailPoint>& curve);

struct MaxTailReport {
    std::uint64_t samples = 0;
    SlopeFit right;  ///< log P(X > u) against u
    SlopeFit left;   ///< log P(X < -u) against u
    std::vector<TailPoint> right_curve, left_curve;
    bool right_ok = false;  ///< right slope <= -0.85 sqrt2
    bool left_ok = false;   ///< |left slope| >= 0.6 (2 - sqrt2)
};

/// Tail exponents of a sample of centered maxima over u in `grid`.  Needs at
/// least `min_samples` samples.
MaxTailReport max_tail_check(const std::vector<double>& maxima, const std::vector<double>& grid,
                             std::uint64_t min_samples = 10000);

// ---------------------------------------------------------------------------
// Level sets

struct PrefactorReport {
    std::vector<double> v;
    std::vector<double> ratio;        ///< mean over replicas of N(v) / Z
    std::vector<double> linear;       ///< ratio e^{-sqrt2 v} / v
    std::vector<double> plain;        ///< ratio e^{-sqrt2 v}
    double cv_linear = 0.0;
    double cv_plain = 0.0;
    double cv_ratio = 0.0;            ///< cv_linear / cv_plain
    bool linear_flatter = false;
    std::uint64_t used = 0;
    std::uint64_t excluded = 0;       ///< replicas with Z <= 0
};

/// counts[i][j] = N(v_j) of replica i, z[i] its martingale value.
PrefactorReport prefactor_discrimination(const std::vector<double>& v, const std::vector<std::vector<double>>& counts,
                                         const std::vector<double>& z);

/// Coefficient of variation (sample sd / |mean|).
double coefficient_of_variation(const std::vector<double>& xs);

struct MeanEstimate {
    double mean = 0.0;
    double stderr = 0.0;
    std::uint64_t n = 0;
};
MeanEstimate mean_estimate(const std::vector<double>& xs);

struct DominanceReport {
    double c = 0.0;  ///< max of value / shape over the calibration half
    std::vector<double> ratio, ratio_se;
    std::size_t calibration = 0;  ///< number of leading grid points used to fit c
    bool pass = false;
};

/// Fits c as the largest value/shape ratio on the first half of the grid and
/// requires value <= (c + 3 SE) shape on the second half.
DominanceReport dominance_check(const std::vector<double>& values, const std::vector<double>& stderrs,
                                const std::vector<double>& shape);

}  // namespace bbm
