#pragma once

#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "uvu/net.hpp"
#include "uvu/ntk.hpp"

namespace uvu {

/// f(x; theta) = theta_m^T phi(x) for each head m, with a separate block of p
/// parameters per head. Under theta ~ N(0, I) both the NTK and the NNGP equal
/// phi(x)^T phi(x') exactly, at any p.
class LinearFeatureModel final : public FunctionModel {
public:
    using FeatureMap = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

    LinearFeatureModel(int input_dim, int n_features, int n_heads, FeatureMap phi);
    /// phi(x) = sqrt(2 / p) relu(W x + b) with W, b ~ N(0, 1) fixed by `seed`.
    static LinearFeatureModel random_relu(int input_dim, int n_features, int n_heads, std::uint64_t seed);
    /// phi(x) = sqrt(2 / p) cos(W x / bandwidth + b) with W ~ N(0, 1), b ~ U[0, 2 pi).
    static LinearFeatureModel random_fourier(int input_dim, int n_features, int n_heads, std::uint64_t seed,
                                             double bandwidth = 1.0);

    [[nodiscard]] Eigen::Index n_params() const override { return static_cast<Eigen::Index>(p_) * heads_; }
    [[nodiscard]] int input_dim() const override { return input_dim_; }
    [[nodiscard]] int n_outputs() const override { return heads_; }
    [[nodiscard]] int n_features() const noexcept { return p_; }

    [[nodiscard]] Eigen::MatrixXd forward(const Eigen::VectorXd& params, const Eigen::MatrixXd& x) const override;
    [[nodiscard]] Eigen::VectorXd vjp(const Eigen::VectorXd& params, const Eigen::MatrixXd& x,
                                      const Eigen::MatrixXd& cotangent) const override;
    [[nodiscard]] Eigen::VectorXd init(Rng& rng) const override;

    /// Feature matrix, p x batch.
    [[nodiscard]] Eigen::MatrixXd features(const Eigen::MatrixXd& xs) const;
    [[nodiscard]] KernelPair kernel(const Eigen::MatrixXd& xs, const Eigen::MatrixXd& ys) const;
    [[nodiscard]] KernelFn kernel_fn() const;

private:
    int input_dim_;
    int p_;
    int heads_;
    FeatureMap phi_;
};

/// Transitions for the exact solver: X, X', test points and bootstrap weights.
struct TdPoints {
    Eigen::MatrixXd test;
    Eigen::MatrixXd train;
    Eigen::MatrixXd next;
    Eigen::VectorXd bootstrap;
};

/// Sample moments with Monte Carlo standard errors.
struct SampleMoments {
    Eigen::VectorXd mean;
    Eigen::VectorXd mean_se;
    Eigen::MatrixXd cov;
    Eigen::MatrixXd cov_se;
};
/// Columns of `samples` are draws.
SampleMoments sample_moments(const Eigen::MatrixXd& samples);

struct LinearOracleResult {
    Eigen::MatrixXd samples;  // converged f(T), n_test x seed_count
    SampleMoments moments;
};

/// Exact converged semi-gradient TD solution of the linear model for
/// `seed_count` draws theta_0 ~ N(0, I): theta_inf = theta_0 + Phi_X^T w with
/// (Phi_X - Gamma Phi_X') Phi_X^T w = r - (Phi_X - Gamma Phi_X') theta_0.
/// Throws SingularSystemError when the feature TD system is rank deficient.
LinearOracleResult linear_oracle_solve(const LinearFeatureModel& model, const TdPoints& pts, double gamma,
                                       const Eigen::VectorXd& rewards, long seed_count, std::uint64_t seed);

/// Exact converged UVU errors eps = u_inf - g at the test points: one matrix per
/// head (n_test x seed_count), with u_0 and g drawn independently per seed and
/// head and the synthetic reward g(X) - Gamma g(X').
std::vector<Eigen::MatrixXd> linear_oracle_uvu_errors(const LinearFeatureModel& model, const TdPoints& pts,
                                                      double gamma, int n_heads, long seed_count, std::uint64_t seed);

}  // namespace uvu
