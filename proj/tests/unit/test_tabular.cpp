#include <cmath>

#include <gtest/gtest.h>

#include "uvu/env.hpp"
#include "uvu/tabular.hpp"

using namespace uvu;

namespace {

// Data that covers every (s, a) pair of the chain, including the divergence action.
Dataset full_coverage(const ChainMdp& mdp) {
    Dataset ds = rollout_chain(mdp, ChainPolicy{1.0}, 1, 0);
    Dataset div = rollout_chain(mdp, ChainPolicy{0.0}, 1, 0);
    ds.transitions.insert(ds.transitions.end(), div.transitions.begin(), div.transitions.end());
    return ds;
}

}  // namespace

TEST(Tabular, SyntheticRewardMakesTargetAFixedPoint) {
    ChainMdp mdp = make_chain(6, 0.7, 2);
    auto heads = init_tabular(mdp, 3, 1);
    const auto& h = heads[0];
    Transition t = rollout_chain(mdp, ChainPolicy{1.0}, 1, 0).transitions[1];
    const double expect = h.g(1, t.a) - 0.7 * h.g(2, t.a_next);
    EXPECT_DOUBLE_EQ(tabular_synthetic_reward(h, mdp, t), expect);
    Transition last = rollout_chain(mdp, ChainPolicy{1.0}, 1, 0).transitions.back();
    ASSERT_TRUE(last.terminal());
    EXPECT_DOUBLE_EQ(tabular_synthetic_reward(h, mdp, last), h.g(4, last.a));
}

TEST(Tabular, FullCoverageConverges) {
    ChainMdp mdp = make_chain(6, 0.7, 2);
    Dataset ds = full_coverage(mdp);
    for (double z : {0.0, 0.3, 1.0}) {
        auto heads = init_tabular(mdp, 11, 4);
        for (auto& h : heads) {
            Rng rng(h.rng_seed);
            SweepReport rep = tabular_sweep(h, mdp, ds, ChainPolicy{z}, 2000, rng);
            // with a stochastic policy the bootstrap keeps moving, so only the
            // deterministic policies reach the 1e-10 stopping rule
            if (z == 0.0 || z == 1.0) {
                EXPECT_TRUE(rep.converged);
            }
            for (const auto& t : ds.transitions) {
                const int s = mdp.decode_state(t.s);
                EXPECT_LT(std::sqrt(tabular_error(h, s, t.a)), 1e-8) << "z=" << z << " s=" << s;
            }
        }
    }
}

TEST(Tabular, TruncatedChainPropagatesDiscountedError) {
    ChainMdp mdp = make_chain(6, 0.7, 2);
    Dataset ds = rollout_chain(mdp, ChainPolicy{1.0}, 1, 0);  // never takes b
    auto heads = init_tabular(mdp, 5, 8);
    for (auto& h : heads) {
        Rng rng(h.rng_seed);
        tabular_sweep(h, mdp, ds, ChainPolicy{0.0}, 100, rng);
        const double e_div = h.u(2, chain_action::b) - h.g(2, chain_action::b);  // untouched
        const double e1 = h.u(1, chain_action::a) - h.g(1, chain_action::a);
        const double e0 = h.u(0, chain_action::a) - h.g(0, chain_action::a);
        EXPECT_NEAR(e1, 0.7 * e_div, 1e-12);
        EXPECT_NEAR(e0, 0.7 * e1, 1e-12);
        for (int s = 2; s < 5; ++s) EXPECT_LT(tabular_error(h, s, chain_action::a), 1e-20);
    }
}

TEST(Tabular, UvuAndEnsembleAgreeInExpectation) {
    // one step before the unseen action: eps = gamma (u0 - g0) and Q = gamma q0,
    // so E[eps^2 / 2] = Var[Q] = gamma^2
    ChainMdp mdp = make_chain(6, 0.7, 2);
    Dataset ds = rollout_chain(mdp, ChainPolicy{1.0}, 1, 0);
    const int k = 4000;
    Table u = tabular_uvu_uncertainty(mdp, ds, ChainPolicy{0.0}, k, 1, 50);
    Table v = tabular_ensemble_variance(mdp, ds, ChainPolicy{0.0}, k, 2, 50);
    const double g2 = 0.49;
    const double se = g2 * std::sqrt(2.0 / k);
    EXPECT_NEAR(u(1, chain_action::a), g2, 5 * se);
    EXPECT_NEAR(v(1, chain_action::a), g2, 5 * se);
    EXPECT_NEAR(u(0, chain_action::a), g2 * g2, 5 * g2 * se);
    EXPECT_NEAR(v(0, chain_action::a), g2 * g2, 5 * g2 * se);
    // the policy that never diverges is certain everywhere along the chain
    Table u1 = tabular_uvu_uncertainty(mdp, ds, ChainPolicy{1.0}, 16, 1, 50);
    Table v1 = tabular_ensemble_variance(mdp, ds, ChainPolicy{1.0}, 16, 2, 50);
    for (int s = 0; s < 5; ++s) {
        EXPECT_LT(u1(s, chain_action::a), 1e-20);
        EXPECT_LT(v1(s, chain_action::a), 1e-20);
    }
}

TEST(Tabular, ExplicitSeedsGiveIdenticalMembers) {
    ChainMdp mdp = make_chain(6, 0.7, 2);
    Dataset ds = rollout_chain(mdp, ChainPolicy{1.0}, 1, 0);
    Table v = tabular_ensemble_variance(mdp, ds, ChainPolicy{0.0}, std::vector<std::uint64_t>{7, 7, 7}, 50);
    EXPECT_LT(v.values.cwiseAbs().maxCoeff(), 1e-28);
}
