#pragma once

#include <functional>
#include <vector>

#include <Eigen/Dense>

namespace uvu {

/// Asymptotic Kolmogorov distribution P(K <= x).
double kolmogorov_cdf(double x);

/// scale * chi^2(dof); scale == 0 is the point mass at 0.
struct ScaledChiSquared {
    double scale = 1.0;
    int dof = 1;

    [[nodiscard]] double cdf(double x) const;
    [[nodiscard]] bool degenerate() const noexcept { return scale <= 0.0; }
};

struct KsResult {
    double statistic = 0.0;
    double p_value = 1.0;
    double alpha = 0.01;
    bool pass = true;
};

/// Two-sided one-sample Kolmogorov-Smirnov test (Stephens' finite-n correction).
KsResult ks_test(std::vector<double> samples, const std::function<double(double)>& cdf, double alpha = 0.01);
/// Against a scaled chi-square law; the degenerate law passes iff all samples are 0.
KsResult ks_test(const std::vector<double>& samples, const ScaledChiSquared& law, double alpha = 0.01);

/// Spearman rank correlation with average ranks for ties. Throws
/// ValidationError when either input is constant.
double spearman(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

struct TInterval {
    double mean = 0.0;
    double lower = 0.0;
    double upper = 0.0;
    double half_width = 0.0;
};
/// Two-sided Student-t interval for the mean at `level`.
TInterval t_interval(const std::vector<double>& xs, double level = 0.9);

struct TTestResult {
    double t = 0.0;
    double df = 0.0;
    double p_value = 1.0;
};
enum class Alternative { two_sided, greater, less };
/// Welch's unequal-variance t-test of mean(a) - mean(b).
TTestResult welch_t_test(const std::vector<double>& a, const std::vector<double>& b,
                         Alternative alt = Alternative::two_sided);
/// Paired t-test of mean(a - b).
TTestResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b,
                          Alternative alt = Alternative::two_sided);

double mean(const std::vector<double>& xs);
/// Unbiased sample variance.
double sample_variance(const std::vector<double>& xs);

}  // namespace uvu
