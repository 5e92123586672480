#include <cmath>
#include <filesystem>
#include <numbers>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <gtest/gtest.h>

#include "uvu/error.hpp"
#include "uvu/ntk.hpp"
#include "uvu/stats.hpp"

using namespace uvu;
using std::numbers::pi;

namespace {

double npdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2 * pi); }
double ncdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

template <typename F>
double integrate(F f, double lo, double hi) {
    return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, lo, hi, 15, 1e-13);
}

// E over (u, v) ~ N(0, [[a, c], [c, b]]) by conditioning on u = sqrt(a) t; the
// inner expectation over v | u is closed form for relu and erf.
struct Cond {
    double a, b, c;
    double m(double t) const { return c / std::sqrt(a) * t; }
    double s() const { return std::sqrt(std::max(b - c * c / a, 0.0)); }
};

double relu_phi_phi(double a, double b, double c) {
    Cond k{a, b, c};
    return integrate(
        [&](double t) {
            const double u = std::sqrt(a) * t, m = k.m(t), s = k.s();
            const double ev = s > 0 ? m * ncdf(m / s) + s * npdf(m / s) : std::max(m, 0.0);
            return u * ev * npdf(t);
        },
        0.0, 12.0);
}

double relu_dphi_dphi(double a, double b, double c) {
    Cond k{a, b, c};
    return integrate([&](double t) { return ncdf(k.m(t) / k.s()) * npdf(t); }, 0.0, 12.0);
}

double erf_phi_phi(double a, double b, double c) {
    Cond k{a, b, c};
    return integrate(
        [&](double t) {
            const double s = k.s();
            return std::erf(std::sqrt(a) * t) * std::erf(k.m(t) / std::sqrt(1 + 2 * s * s)) * npdf(t);
        },
        -12.0, 12.0);
}

double erf_dphi_dphi(double a, double b, double c) {
    Cond k{a, b, c};
    return integrate(
        [&](double t) {
            const double s2 = k.s() * k.s(), u = std::sqrt(a) * t, m = k.m(t);
            const double ev = std::exp(-m * m / (1 + 2 * s2)) / std::sqrt(1 + 2 * s2);
            return (4.0 / pi) * std::exp(-u * u) * ev * npdf(t);
        },
        -12.0, 12.0);
}

Eigen::MatrixXd gaussian(int r, int c, std::uint64_t seed) {
    Rng rng(seed);
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index j = 0; j < m.cols(); ++j)
        for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = rng.normal();
    return m;
}

// Narrow RBF kernels: nearly diagonal, so Delta stays positive definite.
KernelFn rbf_kernel(double ell) {
    return [ell](const Eigen::MatrixXd& xs, const Eigen::MatrixXd& ys) {
        KernelPair kp;
        kp.theta.resize(xs.cols(), ys.cols());
        kp.kappa.resize(xs.cols(), ys.cols());
        for (Eigen::Index i = 0; i < xs.cols(); ++i) {
            for (Eigen::Index j = 0; j < ys.cols(); ++j) {
                const double d2 = (xs.col(i) - ys.col(j)).squaredNorm();
                kp.theta(i, j) = std::exp(-d2 / (2 * ell * ell));
                kp.kappa(i, j) = 0.7 * std::exp(-d2 / (2 * 1.5 * 1.5 * ell * ell));
            }
        }
        return kp;
    };
}

TdProblem rbf_problem(double gamma, std::uint64_t seed, int n = 8, int n_test = 5) {
    Eigen::MatrixXd x = gaussian(3, n, seed), xn = gaussian(3, n, seed + 1), t = gaussian(3, n_test, seed + 2);
    Eigen::VectorXd boot = Eigen::VectorXd::Ones(n);
    boot(n - 1) = 0.0;
    return make_td_problem(rbf_kernel(0.6), t, x, xn, gamma, boot, gaussian(n, 1, seed + 3).col(0));
}

}  // namespace

TEST(GaussianExpectation, ReluMatchesQuadrature) {
    for (auto [a, b, c] : {std::tuple{1.0, 1.0, 0.5}, {1.5, 0.8, 0.95}, {2.0, 0.5, -0.7}, {1.0, 1.0, 0.0}}) {
        auto e = gaussian_expectation(Nonlinearity::relu, a, b, c);
        EXPECT_NEAR(e.phi_phi, relu_phi_phi(a, b, c), 1e-9) << a << " " << b << " " << c;
        EXPECT_NEAR(e.dphi_dphi, relu_dphi_dphi(a, b, c), 1e-9);
    }
    // equal inputs: E[relu(u)^2] = a / 2
    EXPECT_NEAR(gaussian_expectation(Nonlinearity::relu, 2.0, 2.0, 2.0).phi_phi, 1.0, 1e-12);
}

TEST(GaussianExpectation, ErfMatchesQuadrature) {
    for (auto [a, b, c] : {std::tuple{1.0, 1.0, 0.5}, {1.5, 0.8, 0.95}, {0.3, 2.0, -0.4}}) {
        auto e = gaussian_expectation(Nonlinearity::erf, a, b, c);
        EXPECT_NEAR(e.phi_phi, erf_phi_phi(a, b, c), 1e-9);
        EXPECT_NEAR(e.dphi_dphi, erf_dphi_dphi(a, b, c), 1e-9);
    }
}

TEST(KernelRecursion, OneLayerByHand) {
    MlpSpec s;
    s.input_dim = 4;
    s.widths = {100};
    s.sigma_w = 1.4;
    s.sigma_b = 0.3;
    Eigen::MatrixXd x = normalize_columns(gaussian(4, 3, 1));
    KernelPair kp = ntk_kernel(s, x, x);
    const double sw2 = 1.96, sb2 = 0.09;
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            const double k1 = sw2 / 4 * x.col(i).dot(x.col(j)) + sb2;
            const double kii = sw2 / 4 + sb2, kjj = kii;
            const double k2 = sb2 + sw2 * relu_phi_phi(kii, kjj, k1);
            const double th = k1 * sw2 * relu_dphi_dphi(kii, kjj, k1) + k2;
            EXPECT_NEAR(kp.kappa(i, j), k2, 1e-9);
            EXPECT_NEAR(kp.theta(i, j), th, 1e-9);
        }
    }
}

TEST(KernelRecursion, SymmetricPositiveSemidefinite) {
    for (int depth = 1; depth <= 4; ++depth) {
        MlpSpec s;
        s.input_dim = 5;
        s.widths = std::vector<int>(static_cast<std::size_t>(depth), 64);
        s.sigma_b = 0.1;
        Eigen::MatrixXd x = gaussian(5, 9, 10 + depth);
        KernelPair kp = ntk_kernel(s, x, x);
        for (const Eigen::MatrixXd* m : {&kp.theta, &kp.kappa}) {
            EXPECT_LT((*m - m->transpose()).cwiseAbs().maxCoeff(), 1e-12);
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(*m);
            EXPECT_GT(es.eigenvalues().minCoeff(), -1e-10);
        }
        // the NTK dominates the NNGP entrywise on the diagonal
        EXPECT_TRUE((kp.theta.diagonal().array() >= kp.kappa.diagonal().array()).all());
    }
}

TEST(KernelRecursion, RejectsStandardParametrization) {
    MlpSpec s;
    s.input_dim = 2;
    s.parametrization = Parametrization::standard;
    EXPECT_THROW(ntk_kernel(s, gaussian(2, 2, 0), gaussian(2, 2, 1)), ValidationError);
}

TEST(TdPosterior, MeanAndCovarianceFromBlockMap) {
    TdProblem p = rbf_problem(0.8, 3);
    using S = TdProblem::Set;
    const Eigen::MatrixXd delta = p.theta(S::train, S::train) - p.discounts().asDiagonal() * p.theta(S::next, S::train);
    const Eigen::MatrixXd w = p.theta(S::test, S::train) * delta.inverse();
    TdGaussian g = td_posterior(p);
    EXPECT_LT((g.mean - w * p.rewards).cwiseAbs().maxCoeff(), 1e-10);
    // f(T) = f0(T) - W f0(X) + W Gamma f0(X')
    const Eigen::Index t = p.n_test, n = p.n_train;
    Eigen::MatrixXd a(t, t + 2 * n);
    a << Eigen::MatrixXd::Identity(t, t), -w, w * p.discounts().asDiagonal();
    const Eigen::MatrixXd cov = a * p.joint.kappa * a.transpose();
    EXPECT_LT((g.cov - cov).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT((block_affine_posterior(p).test_cov() - cov).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(TdPosterior, GammaZeroIsSupervised) {
    TdProblem p = rbf_problem(0.0, 5);
    using S = TdProblem::Set;
    TdGaussian td = td_posterior(p);
    TdGaussian sup = supervised_posterior(p.theta(S::train, S::train), p.theta(S::test, S::train),
                                          p.kappa(S::train, S::train), p.kappa(S::test, S::train),
                                          p.kappa(S::test, S::test), p.rewards);
    EXPECT_LT((td.mean - sup.mean).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((td.cov - sup.cov).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(TdPosterior, PostConvergenceSatisfiesBellman) {
    TdProblem base = rbf_problem(0.9, 7);
    // evaluate the converged function on X and X' themselves
    Eigen::MatrixXd x = gaussian(3, 8, 7), xn = gaussian(3, 8, 8);
    Eigen::MatrixXd t(3, 16);
    t << x, xn;
    TdProblem p = make_td_problem(rbf_kernel(0.6), t, x, xn, 0.9, base.bootstrap, base.rewards);
    // the initial function has to agree with itself on the shared points
    Eigen::VectorXd f0 = gaussian(16, 1, 20).col(0);
    Eigen::VectorXd fx = f0.head(8), fxn = f0.tail(8);
    Eigen::VectorXd f = post_convergence_function(p, f0, fx, fxn);
    Eigen::VectorXd resid = f.head(8) - p.discounts().cwiseProduct(f.tail(8)) - p.rewards;
    EXPECT_LT(resid.cwiseAbs().maxCoeff(), 1e-9);
}

TEST(TdPosterior, NonPositiveDefiniteDeltaFails) {
    // X' = 2X with a linear kernel makes Delta = (1 - 2 gamma) Theta_XX
    KernelFn lin = [](const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
        Eigen::MatrixXd k = a.transpose() * b;
        return KernelPair{k, k};
    };
    Eigen::MatrixXd x = gaussian(6, 4, 1);
    TdProblem p = make_td_problem(lin, gaussian(6, 2, 2), x, 2.0 * x, 0.9, Eigen::VectorXd::Ones(4),
                                  Eigen::VectorXd::Ones(4));
    EXPECT_THROW(td_posterior(p), NonPositiveDefiniteDelta);
    using S = TdProblem::Set;
    StabilityReport r = stability_check(p.theta(S::train, S::train), p.theta(S::next, S::train), 0.9);
    EXPECT_FALSE(r.is_pd);
    EXPECT_LE(r.gershgorin_lower_bound, r.min_eigenvalue);
    EXPECT_TRUE(stability_check(p.theta(S::train, S::train), p.theta(S::next, S::train), 0.3).is_pd);
}

TEST(TdPosterior, RejectsDuplicateInputs) {
    Eigen::MatrixXd x = gaussian(3, 4, 1);
    x.col(2) = x.col(0);
    EXPECT_THROW(make_td_problem(rbf_kernel(1.0), x, x, gaussian(3, 4, 2), 0.5, Eigen::VectorXd::Ones(4),
                                 Eigen::VectorXd::Ones(4)),
                 ValidationError);
}

TEST(Stability, GershgorinIsALowerBound) {
    Rng rng(3);
    for (int k = 0; k < 200; ++k) {
        const int n = 2 + static_cast<int>(rng.below(10));
        Eigen::MatrixXd a = gaussian(n, n, 100 + k), b = gaussian(n, n, 500 + k);
        Eigen::MatrixXd txx = a * a.transpose() + Eigen::MatrixXd::Identity(n, n);
        StabilityReport r = stability_check(txx, b, rng.uniform());
        EXPECT_LE(r.gershgorin_lower_bound, r.min_eigenvalue + 1e-12);
    }
}

TEST(ErrorLaw, ScaledChiSquare) {
    TdGaussian g;
    g.mean = Eigen::Vector2d(0, 0);
    g.cov = Eigen::Matrix2d{{0.4, 0.1}, {0.1, 0.0}};
    UvuErrorLaw law = uvu_error_law(g);
    EXPECT_DOUBLE_EQ(law.mean(0), 0.4);
    EXPECT_DOUBLE_EQ(law.variance(0, 4), 2 * 0.16 / 4);
    EXPECT_NEAR(law.cdf(0, 4, 0.3), (ScaledChiSquared{0.1, 4}).cdf(0.3), 1e-14);
    EXPECT_EQ(law.cdf(1, 4, 0.0), 1.0);
}

TEST(Export, FilesAndHash) {
    auto dir = std::filesystem::temp_directory_path() / "uvu_test_export";
    std::filesystem::create_directories(dir);
    Eigen::MatrixXd x = gaussian(3, 4, 1);
    MlpSpec s;
    s.input_dim = 3;
    export_kernel_pair((dir / "k").string(), ntk_kernel(s, x, x), {{"points", point_set_hash(x)}});
    EXPECT_TRUE(std::filesystem::exists(dir / "k_theta.csv"));
    EXPECT_TRUE(std::filesystem::exists(dir / "k_kappa.csv"));
    EXPECT_TRUE(std::filesystem::exists(dir / "k.json"));
    EXPECT_EQ(point_set_hash(x), point_set_hash(x));
    Eigen::MatrixXd y = x;
    y(0, 0) += 1e-15;
    EXPECT_NE(point_set_hash(x), point_set_hash(y));
}
