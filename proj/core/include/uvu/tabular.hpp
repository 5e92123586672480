#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "uvu/env.hpp"

namespace uvu {

/// Values indexed by (state, action), sink included.
struct Table {
    Eigen::MatrixXd values;

    [[nodiscard]] double operator()(int s, int a) const { return values(s, a); }
    double& operator()(int s, int a) { return values(s, a); }
    [[nodiscard]] int n_states() const noexcept { return static_cast<int>(values.rows()); }
    [[nodiscard]] int n_actions() const noexcept { return static_cast<int>(values.cols()); }
};

/// One UVU head: online table u and fixed random target g.
struct TabularUvuState {
    Table u;
    Table g;
    double discount = 0.0;
    std::uint64_t rng_seed = 0;
};

/// Independent heads with u, g entries i.i.d. N(0, 1).
std::vector<TabularUvuState> init_tabular(const ChainMdp& mdp, std::uint64_t seed, int n_heads);

/// g[s, a] - gamma g[s', a'], with a zero bootstrap for terminal successors.
double tabular_synthetic_reward(const TabularUvuState& state, const ChainMdp& mdp, const Transition& t);

struct SweepReport {
    int sweeps = 0;
    bool converged = false;
    double last_max_update = 0.0;
};

/// u[s, a] <- r_g + gamma u[s', a'] over the dataset in order, redrawing a'
/// from `policy` at every visit. Stops once the largest update of a sweep
/// is below 1e-10 or after `n_sweeps`.
SweepReport tabular_sweep(TabularUvuState& state, const ChainMdp& mdp, const Dataset& ds, const ChainPolicy& policy,
                          int n_sweeps, Rng& rng);

/// (u[s, a] - g[s, a])^2
double tabular_error(const TabularUvuState& state, int s, int a);

/// Per-(s, a) sample variance of `n_members` tabular Q-functions trained with
/// the same update on the environment reward from N(0, 1) initial tables.
Table tabular_ensemble_variance(const ChainMdp& mdp, const Dataset& ds, const ChainPolicy& policy, int n_members,
                                std::uint64_t seed, int n_sweeps = 1000);
/// Same, with one explicit seed per member.
Table tabular_ensemble_variance(const ChainMdp& mdp, const Dataset& ds, const ChainPolicy& policy,
                                const std::vector<std::uint64_t>& member_seeds, int n_sweeps = 1000);

/// Mean over heads of eps^2 / 2 after sweeping each head under `policy`.
Table tabular_uvu_uncertainty(const ChainMdp& mdp, const Dataset& ds, const ChainPolicy& policy, int n_heads,
                              std::uint64_t seed, int n_sweeps = 1000);

/// Rows are states, columns actions.
void write_table_csv(const std::string& path, const Table& t);

}  // namespace uvu
