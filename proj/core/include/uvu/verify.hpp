#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "uvu/env.hpp"
#include "uvu/linear_oracle.hpp"

namespace uvu {

struct CheckResult {
    std::string name;
    bool pass = false;
    double value = 0.0;      // the statistic that was compared
    double threshold = 0.0;  // against this bound
    std::string detail;
    double seconds = 0.0;

    [[nodiscard]] nlohmann::json to_json() const;
};

struct SuiteReport {
    std::string suite;
    std::vector<CheckResult> checks;
    double seconds = 0.0;

    [[nodiscard]] bool pass() const;
    [[nodiscard]] nlohmann::json to_json() const;
};

/// `full` runs at acceptance scale (10^5 oracle seeds, width-4096 kernels);
/// otherwise sample counts are cut so a suite finishes in seconds.
struct VerifyOptions {
    bool full = false;
    std::uint64_t seed = 0;
};

/// kernels | theorem1 | corollaries | reductions | tabular
const std::vector<std::string>& suite_names();
/// Throws ValidationError for an unknown suite.
SuiteReport run_suite(const std::string& suite, const VerifyOptions& opts);

// ---------------------------------------------------------------------------
// Linear-feature chain instances

/// A chain TD problem with exact features: Theta = kappa = phi^T phi.
struct LinearChainInstance {
    ChainMdp mdp;
    LinearFeatureModel model;
    TdPoints points;
    double gamma = 0.0;
    Eigen::VectorXd rewards;
    std::uint64_t feature_seed = 0;
};

/// Chains of 4 to 6 states logged under z = 1 and relabelled for three
/// policies, p = 64 random Fourier features, N(0, 1) rewards and `n_test` query
/// points drawn from (state, action, z) combinations. Feature seeds are
/// redrawn until Delta is positive definite and the feature TD system has full rank.
std::vector<LinearChainInstance> linear_chain_instances(int count, std::uint64_t seed, int n_test = 10);

/// Max over entries of |analytic - sample| / standard error, with entries whose
/// standard error is below a floor compared absolutely.
struct MomentAgreement {
    double max_mean_z = 0.0;
    double max_cov_z = 0.0;
    double max_abs_exact = 0.0;  // largest gap among floored entries
    int n_entries = 0;
};

// ---------------------------------------------------------------------------
// Individual checks (each suite is a list of these)

CheckResult check_theorem1(const VerifyOptions& opts);
CheckResult check_block_map(const VerifyOptions& opts);
CheckResult check_corollary1(const VerifyOptions& opts);
CheckResult check_corollary2(const VerifyOptions& opts);
CheckResult check_supervised_reduction(const VerifyOptions& opts);
CheckResult check_uvu_rnd_identity(const VerifyOptions& opts);
CheckResult check_kernel_recursion(const VerifyOptions& opts);
CheckResult check_empirical_kernels(const VerifyOptions& opts);
CheckResult check_gaussian_expectations(const VerifyOptions& opts);
CheckResult check_tabular(const VerifyOptions& opts);
CheckResult check_gershgorin(const VerifyOptions& opts);
CheckResult check_divergence_abort(const VerifyOptions& opts);
CheckResult check_gradients(const VerifyOptions& opts);

}  // namespace uvu
