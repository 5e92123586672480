#include "uvu/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "uvu/csv.hpp"
#include "uvu/error.hpp"
#include "uvu/tabular.hpp"

namespace uvu {

void HeatmapGrid::validate() const {
    if (values.rows() != static_cast<Eigen::Index>(states.size()) ||
        values.cols() != static_cast<Eigen::Index>(z_values.size())) {
        throw ValidationError("HeatmapGrid: values shape does not match the axes");
    }
    if (!values.allFinite() || (values.size() > 0 && values.minCoeff() < 0.0)) {
        throw ValidationError("HeatmapGrid: values must be finite and non-negative");
    }
}

void HeatmapGrid::write_csv(const std::string& path) const {
    CsvWriter w(path, {"z", "state", "value"});
    for (std::size_t j = 0; j < z_values.size(); ++j) {
        for (std::size_t i = 0; i < states.size(); ++i) {
            w.row({CsvWriter::num(z_values[j]), std::to_string(states[i]),
                   CsvWriter::num(values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)))});
        }
    }
}

nlohmann::json HeatmapGrid::to_json() const {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < values.rows(); ++i) {
        std::vector<double> r(static_cast<std::size_t>(values.cols()));
        for (Eigen::Index j = 0; j < values.cols(); ++j) r[static_cast<std::size_t>(j)] = values(i, j);
        rows.push_back(r);
    }
    return {{"z_values", z_values}, {"states", states}, {"values", rows}};
}

std::vector<double> uniform_grid(int n) {
    if (n < 2) throw ValidationError("uniform_grid: need at least two points");
    std::vector<double> g(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) g[static_cast<std::size_t>(i)] = static_cast<double>(i) / (n - 1);
    return g;
}

HeatmapGrid chain_heatmap(const ChainEstimator& estimator, const ChainMdp& mdp, const std::vector<double>& z_grid,
                          std::vector<int> states) {
    if (z_grid.empty()) throw ValidationError("chain_heatmap: empty z grid");
    if (states.empty()) {
        for (int s = 0; s < mdp.n_states; ++s) {
            if (!mdp.is_terminal(s)) states.push_back(s);
        }
    }
    HeatmapGrid g;
    g.z_values = z_grid;
    g.states = states;
    g.values.resize(static_cast<Eigen::Index>(states.size()), static_cast<Eigen::Index>(z_grid.size()));
    for (std::size_t i = 0; i < states.size(); ++i) {
        for (std::size_t j = 0; j < z_grid.size(); ++j) {
            g.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = estimator(states[i], z_grid[j]);
        }
    }
    return g;
}

namespace {

HeatmapGrid tabular_heatmap(const ChainMdp& mdp, const std::vector<double>& z_grid,
                            const std::function<Table(const ChainPolicy&)>& run) {
    std::vector<Table> tables;
    for (double z : z_grid) tables.push_back(run(ChainPolicy{z}));
    // column j holds z_grid[j]
    return chain_heatmap(
        [&](int s, double z) {
            const auto j = static_cast<std::size_t>(std::find(z_grid.begin(), z_grid.end(), z) - z_grid.begin());
            return std::max(0.0, tables[j](s, chain_action::a));
        },
        mdp, z_grid);
}

Eigen::VectorXd chain_input(const ChainMdp& mdp, int state, double z) {
    const Encoder enc = chain_encoder(mdp);
    return enc(mdp.encode_state(state), chain_action::a, Eigen::VectorXd::Constant(1, z));
}

}  // namespace

HeatmapGrid tabular_uvu_heatmap(const ChainMdp& mdp, const Dataset& ds, const std::vector<double>& z_grid, int n_heads,
                                std::uint64_t seed, int n_sweeps) {
    return tabular_heatmap(mdp, z_grid, [&](const ChainPolicy& p) {
        return tabular_uvu_uncertainty(mdp, ds, p, n_heads, seed, n_sweeps);
    });
}

HeatmapGrid tabular_ensemble_heatmap(const ChainMdp& mdp, const Dataset& ds, const std::vector<double>& z_grid,
                                     int n_members, std::uint64_t seed, int n_sweeps) {
    return tabular_heatmap(mdp, z_grid, [&](const ChainPolicy& p) {
        return tabular_ensemble_variance(mdp, ds, p, n_members, seed, n_sweeps);
    });
}

ChainEstimator uvu_estimator(const UvuModel& model, const ChainMdp& mdp) {
    return [&model, mdp](int s, double z) { return uvu_uncertainty(model, chain_input(mdp, s, z))(0); };
}

ChainEstimator ensemble_estimator(const EnsembleModel& model, const ChainMdp& mdp) {
    return [&model, mdp](int s, double z) { return model.variance(chain_input(mdp, s, z))(0); };
}

ChainEstimator rnd_estimator(const RndModel& model, const ChainMdp& mdp) {
    return [&model, mdp](int s, double z) { return rnd_error(model, chain_input(mdp, s, z)); };
}

ChainEstimator intrinsic_q_estimator(const RndModel& model, const ChainMdp& mdp) {
    // negative intrinsic values are clipped so the grid stays a non-negative uncertainty map
    return [&model, mdp](int s, double z) { return std::max(0.0, intrinsic_q(model, chain_input(mdp, s, z))(0)); };
}

HeatmapShape heatmap_shape(const HeatmapGrid& grid, int divergence_state) {
    grid.validate();
    const auto z0 = std::find(grid.z_values.begin(), grid.z_values.end(), 0.0);
    const auto z1 = std::find(grid.z_values.begin(), grid.z_values.end(), 1.0);
    if (z0 == grid.z_values.end() || z1 == grid.z_values.end()) {
        throw ValidationError("heatmap_shape: grid must contain z = 0 and z = 1");
    }
    const auto j0 = static_cast<Eigen::Index>(z0 - grid.z_values.begin());
    const auto j1 = static_cast<Eigen::Index>(z1 - grid.z_values.begin());
    const Eigen::VectorXd zs = Eigen::Map<const Eigen::VectorXd>(grid.z_values.data(),
                                                                  static_cast<Eigen::Index>(grid.z_values.size()));
    HeatmapShape out;
    std::vector<double> ratios, rhos;
    out.pre_min = INFINITY;
    out.post_max = 0.0;
    for (std::size_t i = 0; i < grid.states.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        const Eigen::VectorXd row = grid.values.row(r).transpose();
        out.max_row_range = std::max(out.max_row_range, row.maxCoeff() - row.minCoeff());
        if (grid.states[i] < divergence_state) {
            ratios.push_back(row(j0) > 0.0 ? row(j1) / row(j0) : INFINITY);
            double rho = NAN;
            try {
                rho = spearman(zs, row);
            } catch (const ValidationError&) {
            }
            rhos.push_back(rho);
            out.pre_min = std::min(out.pre_min, row(j0));
        } else {
            out.post_max = std::max(out.post_max, row(j0));
        }
    }
    out.ratio_z1_z0 = Eigen::Map<Eigen::VectorXd>(ratios.data(), static_cast<Eigen::Index>(ratios.size()));
    out.spearman_z = Eigen::Map<Eigen::VectorXd>(rhos.data(), static_cast<Eigen::Index>(rhos.size()));
    return out;
}

// ---------------------------------------------------------------------------

UncertaintyFn agent_uncertainty(const Agent& agent) {
    return [&agent](const GridWorld&, const Eigen::VectorXd& s0, int task, int a0) {
        return agent.uncertainty(s0.cast<float>(), GridWorld::task_encoding(task).cast<float>(), {a0})(0);
    };
}

UncertaintyFn oracle_uncertainty() {
    return [](const GridWorld& env, const Eigen::VectorXd&, int task, int) {
        return uses_fallback_policy(env.layout(), task) ? 1.0 : 0.0;
    };
}

std::vector<int> surviving_tasks(const std::vector<double>& uncertainty, const RejectionProtocol& protocol) {
    const int n = static_cast<int>(uncertainty.size());
    if (n != protocol.n_tasks || protocol.n_rejections < 0 || protocol.n_rejections >= n) {
        throw ValidationError("surviving_tasks: protocol does not match the offered tasks");
    }
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return uncertainty[static_cast<std::size_t>(a)] > uncertainty[static_cast<std::size_t>(b)];
    });
    std::vector<int> keep(order.begin() + protocol.n_rejections, order.end());
    std::sort(keep.begin(), keep.end());
    return keep;
}

RejectionResult run_task_rejection(const Agent& agent, const UncertaintyFn& uncertainty, int grid_size, int n_episodes,
                                   std::uint64_t seed, const RejectionProtocol& protocol) {
    if (n_episodes < 1) throw ValidationError("run_task_rejection: n_episodes must be >= 1");
    if (protocol.n_tasks != kGridColors) throw ValidationError("run_task_rejection: the grid world offers 6 tasks");
    const Rng root(seed);
    GridWorld env(grid_size, root.split(0).key());
    Rng rng = root.split(1);
    RejectionResult res;
    for (int e = 0; e < n_episodes; ++e) {
        env.reset();
        const Eigen::VectorXd s0 = env.observation();
        std::vector<int> keep;
        if (uncertainty) {
            std::vector<double> u(static_cast<std::size_t>(protocol.n_tasks));
            for (int t = 0; t < protocol.n_tasks; ++t) {
                const int a0 = agent.greedy_action(s0, GridWorld::task_encoding(t));
                u[static_cast<std::size_t>(t)] = uncertainty(env, s0, t, a0);
            }
            keep = surviving_tasks(u, protocol);
        } else {
            std::vector<int> all(static_cast<std::size_t>(protocol.n_tasks));
            std::iota(all.begin(), all.end(), 0);
            for (int i = 0; i < protocol.n_tasks - protocol.n_rejections; ++i) {
                const auto j = static_cast<std::size_t>(i) + rng.below(all.size() - static_cast<std::size_t>(i));
                std::swap(all[static_cast<std::size_t>(i)], all[j]);
            }
            keep.assign(all.begin(), all.begin() + (protocol.n_tasks - protocol.n_rejections));
        }
        const int task = keep[rng.below(keep.size())];
        const Eigen::VectorXd z = GridWorld::task_encoding(task);
        double ret = 0.0;
        while (!env.done()) ret += env.step(agent.greedy_action(env.observation(), z), task);
        res.episode_returns.push_back(ret);
        res.attempted_tasks.push_back(task);
    }
    res.mean_return = mean(res.episode_returns);
    return res;
}

RunSummary summarize(const std::vector<double>& per_seed_returns, double level) {
    if (per_seed_returns.empty()) throw ValidationError("summarize: no seeds");
    RunSummary s;
    s.per_seed = per_seed_returns;
    s.interval = t_interval(per_seed_returns, level);
    return s;
}

void write_results_csv(const std::string& path, const std::vector<ResultRow>& rows) {
    CsvWriter w(path, {"method", "size", "seed", "return"});
    for (const auto& r : rows) w.row({r.method, std::to_string(r.size), std::to_string(r.seed), CsvWriter::num(r.value)});
}

nlohmann::json results_summary_json(const std::vector<ResultRow>& rows) {
    std::map<int, std::map<std::string, std::vector<double>>> grouped;
    for (const auto& r : rows) grouped[r.size][r.method].push_back(r.value);
    nlohmann::json out = nlohmann::json::object();
    for (const auto& [size, methods] : grouped) {
        nlohmann::json& col = out["size_" + std::to_string(size)];
        for (const auto& [m, xs] : methods) {
            const TInterval ci = t_interval(xs, 0.9);
            col[m] = {{"mean", ci.mean}, {"lower", ci.lower}, {"upper", ci.upper}, {"n_seeds", xs.size()}};
        }
    }
    return out;
}

KsResult ks_test_law(const std::vector<double>& samples, const ScaledChiSquared& law, double alpha) {
    if (samples.size() < 100) throw ValidationError("ks_test_law: need at least 100 samples");
    return ks_test(samples, law, alpha);
}

double uncertainty_correlation(const Eigen::VectorXd& uvu_errors, const Eigen::VectorXd& ensemble_variances) {
    return spearman(uvu_errors, ensemble_variances);
}

}  // namespace uvu
