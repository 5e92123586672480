#include "uvu/tabular.hpp"

#include <algorithm>
#include <cmath>

#include "uvu/csv.hpp"
#include "uvu/error.hpp"

namespace uvu {

namespace {

Table random_table(const ChainMdp& mdp, Rng& rng) {
    Table t{Eigen::MatrixXd(mdp.n_table_states(), ChainMdp::n_actions)};
    for (Eigen::Index i = 0; i < t.values.size(); ++i) t.values.data()[i] = rng.normal();
    return t;
}

struct Indices {
    int s, a, sn;
};

Indices indices(const ChainMdp& mdp, const Transition& t) {
    const int s = mdp.decode_state(t.s);
    const int sn = mdp.decode_state(t.s_next);
    if (t.a < 0 || t.a >= ChainMdp::n_actions) throw ValidationError("tabular: action out of range");
    return {s, t.a, sn};
}

// Value of the successor under the (re)drawn next action; 0 when terminal.
double bootstrap_value(const Table& table, const ChainMdp& mdp, int sn, int an) {
    if (mdp.is_terminal(sn) || an < 0) return 0.0;
    return table(sn, an);
}

}  // namespace

std::vector<TabularUvuState> init_tabular(const ChainMdp& mdp, std::uint64_t seed, int n_heads) {
    if (n_heads < 1) throw ValidationError("init_tabular: n_heads must be >= 1");
    const Rng root(seed);
    std::vector<TabularUvuState> heads;
    heads.reserve(static_cast<std::size_t>(n_heads));
    for (int h = 0; h < n_heads; ++h) {
        Rng rng = root.split(static_cast<std::uint64_t>(h));
        TabularUvuState st;
        st.u = random_table(mdp, rng);
        st.g = random_table(mdp, rng);
        st.discount = mdp.discount;
        st.rng_seed = rng.key();
        heads.push_back(std::move(st));
    }
    return heads;
}

double tabular_synthetic_reward(const TabularUvuState& state, const ChainMdp& mdp, const Transition& t) {
    const auto [s, a, sn] = indices(mdp, t);
    if (t.terminal() || mdp.is_terminal(sn)) return state.g(s, a);
    if (t.a_next >= ChainMdp::n_actions) throw ValidationError("tabular: next action out of range");
    return state.g(s, a) - state.discount * state.g(sn, t.a_next);
}

SweepReport tabular_sweep(TabularUvuState& state, const ChainMdp& mdp, const Dataset& ds, const ChainPolicy& policy,
                          int n_sweeps, Rng& rng) {
    if (n_sweeps < 1) throw ValidationError("tabular_sweep: n_sweeps must be >= 1");
    SweepReport rep;
    for (int sweep = 0; sweep < n_sweeps; ++sweep) {
        double max_update = 0.0;
        for (const auto& data : ds.transitions) {
            const auto [s, a, sn] = indices(mdp, data);
            const int an = mdp.is_terminal(sn) ? -1 : policy.sample(mdp, sn, rng);
            const double rg = state.g(s, a) - state.discount * bootstrap_value(state.g, mdp, sn, an);
            const double updated = rg + state.discount * bootstrap_value(state.u, mdp, sn, an);
            max_update = std::max(max_update, std::abs(updated - state.u(s, a)));
            state.u(s, a) = updated;
        }
        rep.sweeps = sweep + 1;
        rep.last_max_update = max_update;
        if (max_update < 1e-10) {
            rep.converged = true;
            break;
        }
    }
    return rep;
}

double tabular_error(const TabularUvuState& state, int s, int a) {
    if (s < 0 || s >= state.u.n_states() || a < 0 || a >= state.u.n_actions()) {
        throw ValidationError("tabular_error: index out of range");
    }
    const double e = state.u(s, a) - state.g(s, a);
    return e * e;
}

Table tabular_ensemble_variance(const ChainMdp& mdp, const Dataset& ds, const ChainPolicy& policy, int n_members,
                                std::uint64_t seed, int n_sweeps) {
    if (n_members < 2) throw ValidationError("tabular_ensemble_variance: n_members must be >= 2");
    const Rng root(seed);
    std::vector<std::uint64_t> seeds;
    for (int k = 0; k < n_members; ++k) seeds.push_back(root.split(static_cast<std::uint64_t>(k)).key());
    return tabular_ensemble_variance(mdp, ds, policy, seeds, n_sweeps);
}

Table tabular_ensemble_variance(const ChainMdp& mdp, const Dataset& ds, const ChainPolicy& policy,
                                const std::vector<std::uint64_t>& member_seeds, int n_sweeps) {
    const auto n_members = static_cast<Eigen::Index>(member_seeds.size());
    if (n_members < 2) throw ValidationError("tabular_ensemble_variance: n_members must be >= 2");
    const Eigen::Index cells = mdp.n_table_states() * ChainMdp::n_actions;
    Eigen::MatrixXd q_all(cells, n_members);
    for (Eigen::Index k = 0; k < n_members; ++k) {
        Rng rng(member_seeds[static_cast<std::size_t>(k)]);
        Table q = random_table(mdp, rng);
        for (int sweep = 0; sweep < n_sweeps; ++sweep) {
            double max_update = 0.0;
            for (const auto& data : ds.transitions) {
                const auto [s, a, sn] = indices(mdp, data);
                const int an = mdp.is_terminal(sn) ? -1 : policy.sample(mdp, sn, rng);
                const double updated = data.r + mdp.discount * bootstrap_value(q, mdp, sn, an);
                max_update = std::max(max_update, std::abs(updated - q(s, a)));
                q(s, a) = updated;
            }
            if (max_update < 1e-10) break;
        }
        q_all.col(k) = Eigen::Map<const Eigen::VectorXd>(q.values.data(), cells);
    }
    const Eigen::VectorXd mean = q_all.rowwise().mean();
    const Eigen::VectorXd var = (q_all.colwise() - mean).rowwise().squaredNorm() / (static_cast<double>(n_members) - 1.0);
    Table out{Eigen::Map<const Eigen::MatrixXd>(var.data(), mdp.n_table_states(), ChainMdp::n_actions)};
    return out;
}

Table tabular_uvu_uncertainty(const ChainMdp& mdp, const Dataset& ds, const ChainPolicy& policy, int n_heads,
                              std::uint64_t seed, int n_sweeps) {
    auto heads = init_tabular(mdp, seed, n_heads);
    Table out{Eigen::MatrixXd::Zero(mdp.n_table_states(), ChainMdp::n_actions)};
    for (auto& h : heads) {
        Rng rng(h.rng_seed);
        tabular_sweep(h, mdp, ds, policy, n_sweeps, rng);
        out.values += 0.5 * (h.u.values - h.g.values).cwiseAbs2();
    }
    out.values /= n_heads;
    return out;
}

void write_table_csv(const std::string& path, const Table& t) {
    std::vector<std::string> header{"state"};
    for (int a = 0; a < t.n_actions(); ++a) header.push_back("a" + std::to_string(a));
    CsvWriter w(path, header);
    for (int s = 0; s < t.n_states(); ++s) {
        std::vector<std::string> row{std::to_string(s)};
        for (int a = 0; a < t.n_actions(); ++a) row.push_back(CsvWriter::num(t(s, a)));
        w.row(row);
    }
}

}  // namespace uvu
