#include "uvu/env.hpp"

#include "uvu/error.hpp"

namespace uvu {

bool Transition::operator==(const Transition& o) const {
    return s == o.s && a == o.a && r == o.r && z == o.z && s_next == o.s_next && a_next == o.a_next;
}

int Dataset::state_dim() const { return transitions.empty() ? 0 : static_cast<int>(transitions.front().s.size()); }
int Dataset::task_dim() const { return transitions.empty() ? 0 : static_cast<int>(transitions.front().z.size()); }

// ---------------------------------------------------------------------------

bool ChainMdp::action_available(int state, int action) const noexcept {
    if (state < 0 || state >= n_states - 1) return false;
    if (action == chain_action::a) return true;
    return action == chain_action::b && state == divergence_state;
}

ChainMdp::Step ChainMdp::step(int state, int action) const {
    if (!action_available(state, action)) {
        throw ValidationError("chain: action " + std::to_string(action) + " unavailable in state " +
                              std::to_string(state));
    }
    if (action == chain_action::b) return {sink(), 0.0, true};
    const int next = state + 1;
    return {next, 0.0, is_terminal(next)};
}

Eigen::VectorXd ChainMdp::encode_state(int state) const {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(n_table_states());
    v(state) = 1.0;
    return v;
}

int ChainMdp::decode_state(const Eigen::VectorXd& s) const {
    if (s.size() != n_table_states()) throw ValidationError("chain: state vector has wrong dimension");
    Eigen::Index idx = 0;
    s.maxCoeff(&idx);
    return static_cast<int>(idx);
}

nlohmann::json ChainMdp::to_json() const {
    return {{"type", "chain"}, {"n_states", n_states}, {"discount", discount}, {"divergence_state", divergence_state}};
}

ChainMdp make_chain(int n_states, double discount, int divergence_state) {
    if (n_states < 3) throw ValidationError("chain: n_states must be >= 3");
    if (!(discount >= 0.0 && discount < 1.0)) throw ValidationError("chain: discount must lie in [0, 1)");
    if (divergence_state < 0 || divergence_state >= n_states - 1) {
        throw ValidationError("chain: divergence state must be a non-terminal state");
    }
    return ChainMdp{n_states, discount, divergence_state};
}

double ChainPolicy::probability(const ChainMdp& mdp, int state, int action) const {
    if (!mdp.action_available(state, action)) return 0.0;
    if (mdp.action_available(state, chain_action::b)) return action == chain_action::b ? 1.0 - z : z;
    return action == chain_action::a ? 1.0 : 0.0;
}

int ChainPolicy::sample(const ChainMdp& mdp, int state, Rng& rng) const {
    if (mdp.action_available(state, chain_action::b)) {
        return rng.bernoulli(1.0 - z) ? chain_action::b : chain_action::a;
    }
    return chain_action::a;
}

Dataset rollout_chain(const ChainMdp& mdp, const ChainPolicy& policy, int n_episodes, std::uint64_t seed) {
    if (n_episodes < 1) throw ValidationError("rollout_chain: n_episodes must be >= 1");
    if (!(policy.z >= 0.0 && policy.z <= 1.0)) throw ValidationError("rollout_chain: z must lie in [0, 1]");
    Dataset ds;
    ds.metadata.policy_id = "chain_z=" + std::to_string(policy.z);
    ds.metadata.seed = seed;
    ds.metadata.env_spec = mdp.to_json();
    Rng rng(seed);
    const Eigen::VectorXd z = policy.encoding();
    for (int ep = 0; ep < n_episodes; ++ep) {
        int state = 0;
        int action = policy.sample(mdp, state, rng);
        for (;;) {
            const auto step = mdp.step(state, action);
            Transition t;
            t.s = mdp.encode_state(state);
            t.a = action;
            t.r = step.reward;
            t.z = z;
            t.s_next = mdp.encode_state(step.next_state);
            t.a_next = step.terminal ? -1 : policy.sample(mdp, step.next_state, rng);
            ds.transitions.push_back(t);
            if (step.terminal) break;
            state = step.next_state;
            action = t.a_next;
        }
    }
    return ds;
}

void resample_next_actions(const ChainMdp& mdp, Dataset& ds, const ChainPolicy& policy, Rng& rng) {
    const Eigen::VectorXd z = policy.encoding();
    for (auto& t : ds.transitions) {
        t.z = z;
        const int next = mdp.decode_state(t.s_next);
        t.a_next = mdp.is_terminal(next) ? -1 : policy.sample(mdp, next, rng);
    }
}

Dataset relabel_for_policies(const ChainMdp& mdp, const Dataset& ds, const std::vector<double>& z_grid,
                             std::uint64_t seed, int next_action_samples) {
    if (next_action_samples < 1) throw ValidationError("relabel_for_policies: next_action_samples must be >= 1");
    Dataset out;
    out.metadata = ds.metadata;
    out.metadata.policy_id += "+relabelled";
    out.metadata.seed = seed;
    Rng rng(seed);
    for (std::size_t k = 0; k < z_grid.size(); ++k) {
        Rng sub = rng.split(k);
        for (int rep = 0; rep < next_action_samples; ++rep) {
            Dataset copy = ds;
            resample_next_actions(mdp, copy, ChainPolicy{z_grid[k]}, sub);
            out.transitions.insert(out.transitions.end(), copy.transitions.begin(), copy.transitions.end());
        }
    }
    return out;
}

}  // namespace uvu
