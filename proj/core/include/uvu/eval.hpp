#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "uvu/env.hpp"
#include "uvu/practical_train.hpp"
#include "uvu/stats.hpp"
#include "uvu/train.hpp"

namespace uvu {

// ---------------------------------------------------------------------------
// Chain heatmaps

/// Uncertainty at (state, action "a", z); rows are states, columns z values.
struct HeatmapGrid {
    std::vector<double> z_values;
    std::vector<int> states;
    Eigen::MatrixXd values;

    void validate() const;
    /// Long format: z, state, value.
    void write_csv(const std::string& path) const;
    [[nodiscard]] nlohmann::json to_json() const;
};

std::vector<double> uniform_grid(int n);  // n points spanning [0, 1]

using ChainEstimator = std::function<double(int state, double z)>;

/// Evaluates `estimator` over the grid. Empty `states` means every non-terminal state.
HeatmapGrid chain_heatmap(const ChainEstimator& estimator, const ChainMdp& mdp, const std::vector<double>& z_grid,
                          std::vector<int> states = {});

/// Tabular estimators rerun per z on the same seed (common random numbers).
HeatmapGrid tabular_uvu_heatmap(const ChainMdp& mdp, const Dataset& ds, const std::vector<double>& z_grid, int n_heads,
                                std::uint64_t seed, int n_sweeps = 1000);
HeatmapGrid tabular_ensemble_heatmap(const ChainMdp& mdp, const Dataset& ds, const std::vector<double>& z_grid,
                                     int n_members, std::uint64_t seed, int n_sweeps = 1000);

/// Neural estimators over the chain encoding [one-hot s, one-hot a, z]. The
/// estimator holds a reference: `model` must outlive it.
ChainEstimator uvu_estimator(const UvuModel& model, const ChainMdp& mdp);
ChainEstimator ensemble_estimator(const EnsembleModel& model, const ChainMdp& mdp);
ChainEstimator rnd_estimator(const RndModel& model, const ChainMdp& mdp);
ChainEstimator intrinsic_q_estimator(const RndModel& model, const ChainMdp& mdp);

/// Shape statistics of a heatmap relative to the divergence state.
struct HeatmapShape {
    Eigen::VectorXd ratio_z1_z0;  // per pre-divergence state: value(z=1) / value(z=0)
    Eigen::VectorXd spearman_z;   // per pre-divergence state: rank correlation of value with z
    double pre_min = 0.0;         // smallest value over pre-divergence states at z = 0
    double post_max = 0.0;        // largest value from the divergence state on at z = 0
    double max_row_range = 0.0;   // largest (max - min) over z within any row
};
/// Requires the grid to contain z = 0 and z = 1.
HeatmapShape heatmap_shape(const HeatmapGrid& grid, int divergence_state);

// ---------------------------------------------------------------------------
// Task rejection

struct RejectionProtocol {
    int n_tasks = kGridColors;
    int n_rejections = 4;
};

/// Uncertainty of attempting `task` from the initial observation with greedy action a0.
using UncertaintyFn = std::function<double(const GridWorld& env, const Eigen::VectorXd& s0, int task, int a0)>;

UncertaintyFn agent_uncertainty(const Agent& agent);
/// Ground truth from the data-collection rule: 1 when the task fell to the fallback policy.
UncertaintyFn oracle_uncertainty();

/// Tasks kept after rejecting the n_rejections most uncertain; ties reject the lower index first.
std::vector<int> surviving_tasks(const std::vector<double>& uncertainty, const RejectionProtocol& protocol);

struct RejectionResult {
    std::vector<double> episode_returns;
    std::vector<int> attempted_tasks;
    double mean_return = 0.0;
};

/// One survivor is attempted per episode, drawn uniformly. An empty
/// `uncertainty` rejects uniformly at random (the plain DQN baseline).
RejectionResult run_task_rejection(const Agent& agent, const UncertaintyFn& uncertainty, int grid_size, int n_episodes,
                                   std::uint64_t seed, const RejectionProtocol& protocol = {});

struct RunSummary {
    std::vector<double> per_seed;
    TInterval interval;  // 90% Student-t over seeds
};
RunSummary summarize(const std::vector<double>& per_seed_returns, double level = 0.9);

struct ResultRow {
    std::string method;
    int size = 5;
    std::uint64_t seed = 0;
    double value = 0.0;
};
/// Long format: method, size, seed, return.
void write_results_csv(const std::string& path, const std::vector<ResultRow>& rows);
/// {"size_<n>": {"<method>": {"mean", "lower", "upper", "n_seeds"}}}
nlohmann::json results_summary_json(const std::vector<ResultRow>& rows);

// ---------------------------------------------------------------------------
// Distribution and agreement checks

/// ks_test with the >= 100 sample precondition enforced.
KsResult ks_test_law(const std::vector<double>& samples, const ScaledChiSquared& law, double alpha = 0.01);
/// Spearman correlation of paired uncertainty estimates.
double uncertainty_correlation(const Eigen::VectorXd& uvu_errors, const Eigen::VectorXd& ensemble_variances);

}  // namespace uvu
