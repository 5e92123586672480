#include "uvu/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "uvu/error.hpp"

namespace uvu {

double kolmogorov_cdf(double x) {
    if (x <= 0.0) return 0.0;
    // Alternating series converges fast for x >~ 1; the theta-function form
    // is used for small x where the alternating one needs many terms.
    if (x < 1.0) {
        const double pi = 3.14159265358979323846;
        const double c = pi * pi / (8.0 * x * x);
        double s = 0.0;
        for (int k = 1; k <= 50; k += 2) s += std::exp(-k * k * c);
        return std::sqrt(2.0 * pi) / x * s;
    }
    double s = 0.0;
    for (int k = 1; k <= 100; ++k) {
        const double term = std::exp(-2.0 * k * k * x * x);
        s += (k % 2 == 1 ? term : -term);
        if (term < 1e-18) break;
    }
    return 1.0 - 2.0 * s;
}

double ScaledChiSquared::cdf(double x) const {
    if (degenerate()) return x >= 0.0 ? 1.0 : 0.0;
    if (x <= 0.0) return 0.0;
    return boost::math::cdf(boost::math::chi_squared(dof), x / scale);
}

KsResult ks_test(std::vector<double> samples, const std::function<double(double)>& cdf, double alpha) {
    if (samples.size() < 2) throw ValidationError("ks_test: need at least two samples");
    std::sort(samples.begin(), samples.end());
    const double n = static_cast<double>(samples.size());
    double d = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const double f = cdf(samples[i]);
        d = std::max({d, (static_cast<double>(i) + 1.0) / n - f, f - static_cast<double>(i) / n});
    }
    KsResult r;
    r.statistic = d;
    r.alpha = alpha;
    const double sn = std::sqrt(n);
    r.p_value = std::clamp(1.0 - kolmogorov_cdf((sn + 0.12 + 0.11 / sn) * d), 0.0, 1.0);
    r.pass = r.p_value >= alpha;
    return r;
}

KsResult ks_test(const std::vector<double>& samples, const ScaledChiSquared& law, double alpha) {
    if (law.degenerate()) {
        KsResult r;
        r.alpha = alpha;
        const bool all_zero = std::all_of(samples.begin(), samples.end(), [](double v) { return v == 0.0; });
        r.statistic = all_zero ? 0.0 : 1.0;
        r.p_value = all_zero ? 1.0 : 0.0;
        r.pass = all_zero;
        return r;
    }
    return ks_test(samples, [&law](double x) { return law.cdf(x); }, alpha);
}

namespace {

Eigen::VectorXd ranks(const Eigen::VectorXd& v) {
    const Eigen::Index n = v.size();
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&v](Eigen::Index a, Eigen::Index b) { return v(a) < v(b); });
    Eigen::VectorXd r(n);
    for (Eigen::Index i = 0; i < n;) {
        Eigen::Index j = i;
        while (j + 1 < n && v(idx[static_cast<std::size_t>(j + 1)]) == v(idx[static_cast<std::size_t>(i)])) ++j;
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        for (Eigen::Index k = i; k <= j; ++k) r(idx[static_cast<std::size_t>(k)]) = avg;
        i = j + 1;
    }
    return r;
}

}  // namespace

double spearman(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    if (a.size() != b.size() || a.size() < 2) throw ValidationError("spearman: need two paired samples of length >= 2");
    const Eigen::VectorXd ra = ranks(a);
    const Eigen::VectorXd rb = ranks(b);
    const Eigen::VectorXd ca = ra.array() - ra.mean();
    const Eigen::VectorXd cb = rb.array() - rb.mean();
    const double den = ca.norm() * cb.norm();
    if (den == 0.0) throw ValidationError("spearman: rank correlation undefined for constant input");
    return ca.dot(cb) / den;
}

double mean(const std::vector<double>& xs) {
    if (xs.empty()) throw ValidationError("mean: empty sample");
    return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double sample_variance(const std::vector<double>& xs) {
    if (xs.size() < 2) throw ValidationError("sample_variance: need at least two values");
    const double m = mean(xs);
    double s = 0.0;
    for (double x : xs) s += (x - m) * (x - m);
    return s / static_cast<double>(xs.size() - 1);
}

TInterval t_interval(const std::vector<double>& xs, double level) {
    TInterval r;
    r.mean = mean(xs);
    if (xs.size() < 2) {
        r.lower = r.upper = r.mean;
        return r;
    }
    const double n = static_cast<double>(xs.size());
    const double se = std::sqrt(sample_variance(xs) / n);
    const double q = boost::math::quantile(boost::math::students_t(n - 1.0), 0.5 + 0.5 * level);
    r.half_width = q * se;
    r.lower = r.mean - r.half_width;
    r.upper = r.mean + r.half_width;
    return r;
}

namespace {

TTestResult finish(double t, double df, Alternative alt) {
    TTestResult r;
    r.t = t;
    r.df = df;
    if (std::isnan(t)) return r;
    if (std::isinf(t)) {
        const bool pos = t > 0;
        r.p_value = alt == Alternative::two_sided ? 0.0 : ((alt == Alternative::greater) == pos ? 0.0 : 1.0);
        return r;
    }
    const boost::math::students_t dist(df);
    switch (alt) {
        case Alternative::two_sided: r.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t))); break;
        case Alternative::greater: r.p_value = boost::math::cdf(boost::math::complement(dist, t)); break;
        case Alternative::less: r.p_value = boost::math::cdf(dist, t); break;
    }
    return r;
}

}  // namespace

TTestResult welch_t_test(const std::vector<double>& a, const std::vector<double>& b, Alternative alt) {
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    const double va = sample_variance(a) / na;
    const double vb = sample_variance(b) / nb;
    const double diff = mean(a) - mean(b);
    if (va + vb == 0.0) {
        return finish(diff == 0.0 ? std::nan("") : std::copysign(INFINITY, diff), na + nb - 2.0, alt);
    }
    const double t = diff / std::sqrt(va + vb);
    const double df = (va + vb) * (va + vb) / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    return finish(t, df, alt);
}

TTestResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b, Alternative alt) {
    if (a.size() != b.size()) throw ValidationError("paired_t_test: samples must have equal length");
    std::vector<double> d(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
    const double n = static_cast<double>(d.size());
    const double v = sample_variance(d);
    const double m = mean(d);
    if (v == 0.0) return finish(m == 0.0 ? std::nan("") : std::copysign(INFINITY, m), n - 1.0, alt);
    return finish(m / std::sqrt(v / n), n - 1.0, alt);
}

}  // namespace uvu
