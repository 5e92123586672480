#pragma once

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "uvu/net.hpp"

namespace uvu {

/// NTK matrix and NNGP matrix over the same pair of point sets.
struct KernelPair {
    Eigen::MatrixXd theta;
    Eigen::MatrixXd kappa;
};

/// Values of one layer of the kernel recursion between two point sets.
struct KernelLayerState {
    Eigen::MatrixXd kappa;      // kappa^l(x, y)
    Eigen::MatrixXd kappa_dot;  // sigma_w^2 E[phi'(u) phi'(v)] under kappa^l; empty on the output layer
    Eigen::MatrixXd theta;      // Theta^l(x, y)
};

struct KernelOptions {
    /// Project inputs onto the unit sphere before evaluating.
    bool normalize_inputs = true;
};

/// E[phi(u) phi(v)] and E[phi'(u) phi'(v)] for (u, v) ~ N(0, [[k11, k12], [k12, k22]]).
struct GaussianExpectation {
    double phi_phi = 0.0;
    double dphi_dphi = 0.0;
};
GaussianExpectation gaussian_expectation(Nonlinearity f, double k11, double k22, double k12);

Eigen::MatrixXd normalize_columns(const Eigen::MatrixXd& xs);

/// Layers 1 .. L+1 of the recursion (the last entry is the output layer).
std::vector<KernelLayerState> kernel_layers(const MlpSpec& spec, const Eigen::MatrixXd& xs, const Eigen::MatrixXd& ys,
                                            const KernelOptions& opts = {});
Eigen::MatrixXd nngp_kernel(const MlpSpec& spec, const Eigen::MatrixXd& xs, const Eigen::MatrixXd& ys,
                            const KernelOptions& opts = {});
KernelPair ntk_kernel(const MlpSpec& spec, const Eigen::MatrixXd& xs, const Eigen::MatrixXd& ys,
                      const KernelOptions& opts = {});

// ---------------------------------------------------------------------------
// TD posterior

/// Kernel blocks over the stacked point set [X_T; X; X'] together with the
/// per-transition discount. Terminal transitions use a zero bootstrap weight,
/// so Gamma = diag(gamma * bootstrap) replaces the scalar gamma throughout.
struct TdProblem {
    KernelPair joint;
    Eigen::Index n_test = 0;
    Eigen::Index n_train = 0;
    double gamma = 0.0;
    Eigen::VectorXd bootstrap;  // 1 for non-terminal transitions, 0 otherwise
    Eigen::VectorXd rewards;

    enum class Set { test, train, next };
    [[nodiscard]] Eigen::MatrixXd theta(Set rows, Set cols) const;
    [[nodiscard]] Eigen::MatrixXd kappa(Set rows, Set cols) const;
    [[nodiscard]] Eigen::VectorXd discounts() const { return gamma * bootstrap; }
    void validate() const;
};

/// Kernel function over two point sets (columns are points).
using KernelFn = std::function<KernelPair(const Eigen::MatrixXd&, const Eigen::MatrixXd&)>;

KernelFn mlp_kernel_fn(const MlpSpec& spec, const KernelOptions& opts = {});

/// Builds a TdProblem; rejects duplicate training inputs.
TdProblem make_td_problem(const KernelFn& kernel, const Eigen::MatrixXd& test, const Eigen::MatrixXd& train,
                          const Eigen::MatrixXd& next, double gamma, const Eigen::VectorXd& bootstrap,
                          const Eigen::VectorXd& rewards);

struct SolveOptions {
    /// Add 1e-8 * trace(Delta) / N to the diagonal of Delta instead of failing on non-PD.
    bool jitter = false;
};

struct StabilityReport {
    double min_eigenvalue = 0.0;
    double gershgorin_lower_bound = 0.0;
    bool is_pd = false;
};

/// Diagnostic on the symmetric part of Delta = Theta_XX - Gamma Theta_X'X.
StabilityReport stability_check(const Eigen::MatrixXd& theta_XX, const Eigen::MatrixXd& theta_XpX, double gamma);
StabilityReport stability_check(const Eigen::MatrixXd& theta_XX, const Eigen::MatrixXd& theta_XpX,
                                const Eigen::VectorXd& discounts);

struct TdOperatorMatrices {
    Eigen::MatrixXd delta_X;
    Eigen::MatrixXd delta_inv;
    Eigen::MatrixXd lambda_X;   // kappa_XX - Gamma kappa_X'X
    Eigen::MatrixXd lambda_Xp;  // kappa_XX' - Gamma kappa_X'X'
    Eigen::MatrixXd lambda_T;   // kappa_XT - Gamma kappa_X'T
    double gamma = 0.0;
    StabilityReport stability;
    bool jittered = false;
};

TdOperatorMatrices td_operators(const TdProblem& p, const SolveOptions& opts = {});

struct TdGaussian {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
};

/// Closed-form mean and covariance of the converged TD predictor at the test points.
TdGaussian td_posterior(const TdProblem& p, const SolveOptions& opts = {});

/// Kernel regression posterior: mean Theta_TX Theta_XX^-1 y, covariance
/// kappa_TT - (Theta_TX Theta_XX^-1 kappa_XT + h.c.) + Theta_TX Theta_XX^-1 kappa_XX Theta_XX^-1 Theta_XT.
TdGaussian supervised_posterior(const Eigen::MatrixXd& theta_XX, const Eigen::MatrixXd& theta_TX,
                                const Eigen::MatrixXd& kappa_XX, const Eigen::MatrixXd& kappa_TX,
                                const Eigen::MatrixXd& kappa_TT, const Eigen::VectorXd& y);

/// f_inf(T) = f0(T) - Theta_TX Delta^-1 (f0(X) - Gamma f0(X') - r).
Eigen::VectorXd post_convergence_function(const TdProblem& p, const Eigen::VectorXd& f0_test,
                                          const Eigen::VectorXd& f0_train, const Eigen::VectorXd& f0_next,
                                          const SolveOptions& opts = {});

/// Joint affine map [f(T); f(X); f(X')]_inf = A f0 + b and its covariance A K A^T.
struct BlockAffinePosterior {
    Eigen::MatrixXd A;
    Eigen::VectorXd b;
    Eigen::MatrixXd cov;  // A K A^T over all three blocks
    Eigen::Index n_test = 0;
    Eigen::Index n_train = 0;

    [[nodiscard]] Eigen::MatrixXd test_cov() const { return cov.topLeftCorner(n_test, n_test); }
};
BlockAffinePosterior block_affine_posterior(const TdProblem& p, const SolveOptions& opts = {});

/// Law of UVU errors at the test points: E[eps^2 / 2] = sigma_q2, and the
/// M-head mean (1/2M) sum eps_i^2 ~ (sigma_q2 / M) chi^2(M).
struct UvuErrorLaw {
    Eigen::VectorXd sigma_q2;

    [[nodiscard]] Eigen::VectorXd expected_half_sq_error() const { return sigma_q2; }
    /// Mean and variance of the M-head statistic at test point i.
    [[nodiscard]] double mean(Eigen::Index i) const { return sigma_q2(i); }
    [[nodiscard]] double variance(Eigen::Index i, int n_heads) const;
    [[nodiscard]] double cdf(Eigen::Index i, int n_heads, double x) const;
};
UvuErrorLaw uvu_error_law(const TdGaussian& g);

// ---------------------------------------------------------------------------
// Export

/// Writes `<prefix>_theta.csv`, `<prefix>_kappa.csv` and `<prefix>.json`.
void export_kernel_pair(const std::string& prefix, const KernelPair& kp, const nlohmann::json& manifest);
/// Writes `<prefix>_mean.csv`, `<prefix>_cov.csv` and `<prefix>.json`.
void export_td_gaussian(const std::string& prefix, const TdGaussian& g, const nlohmann::json& manifest);
/// FNV-1a over the raw bytes of a point set.
std::string point_set_hash(const Eigen::MatrixXd& xs);

}  // namespace uvu
