#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "uvu/env.hpp"
#include "uvu/error.hpp"

using namespace uvu;
namespace fs = std::filesystem;

namespace {

fs::path tmp_dir(const std::string& name) {
    fs::path p = fs::temp_directory_path() / ("uvu_test_env_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

}  // namespace

TEST(Chain, Transitions) {
    ChainMdp mdp = make_chain(6, 0.7, 2);
    EXPECT_EQ(mdp.sink(), 6);
    EXPECT_TRUE(mdp.is_terminal(5));
    EXPECT_TRUE(mdp.is_terminal(6));
    EXPECT_FALSE(mdp.is_terminal(4));
    auto s = mdp.step(0, chain_action::a);
    EXPECT_EQ(s.next_state, 1);
    EXPECT_FALSE(s.terminal);
    auto d = mdp.step(2, chain_action::b);
    EXPECT_EQ(d.next_state, mdp.sink());
    EXPECT_TRUE(d.terminal);
    EXPECT_TRUE(mdp.step(4, chain_action::a).terminal);
    EXPECT_THROW((void)mdp.step(1, chain_action::b), ValidationError);
    EXPECT_THROW((void)mdp.step(5, chain_action::a), ValidationError);
}

TEST(Chain, PolicyProbabilities) {
    ChainMdp mdp = make_chain(6, 0.7, 2);
    ChainPolicy pi{0.3};
    EXPECT_DOUBLE_EQ(pi.probability(mdp, 2, chain_action::b), 0.7);
    EXPECT_DOUBLE_EQ(pi.probability(mdp, 2, chain_action::a), 0.3);
    EXPECT_DOUBLE_EQ(pi.probability(mdp, 1, chain_action::a), 1.0);
    EXPECT_DOUBLE_EQ(pi.probability(mdp, 1, chain_action::b), 0.0);
    Rng rng(0);
    int b = 0;
    for (int i = 0; i < 20000; ++i) b += pi.sample(mdp, 2, rng) == chain_action::b;
    EXPECT_NEAR(b / 20000.0, 0.7, 0.02);
}

TEST(Chain, RolloutUnderZOneVisitsWholeChain) {
    ChainMdp mdp = make_chain(6, 0.7, 2);
    Dataset ds = rollout_chain(mdp, ChainPolicy{1.0}, 1, 3);
    ASSERT_EQ(ds.size(), 5u);
    for (int i = 0; i < 5; ++i) {
        const auto& t = ds.transitions[static_cast<std::size_t>(i)];
        EXPECT_EQ(mdp.decode_state(t.s), i);
        EXPECT_EQ(t.a, chain_action::a);
        EXPECT_EQ(mdp.decode_state(t.s_next), i + 1);
        EXPECT_EQ(t.terminal(), i == 4);
    }
}

TEST(Chain, RolloutDeterministic) {
    ChainMdp mdp = make_chain(8, 0.9, 3);
    EXPECT_EQ(rollout_chain(mdp, ChainPolicy{0.5}, 10, 9), rollout_chain(mdp, ChainPolicy{0.5}, 10, 9));
}

TEST(Chain, RelabelStampsPolicyAndKeepsStructure) {
    ChainMdp mdp = make_chain(6, 0.7, 2);
    Dataset ds = rollout_chain(mdp, ChainPolicy{1.0}, 1, 0);
    std::vector<double> zs{0.0, 0.5, 1.0};
    Dataset r = relabel_for_policies(mdp, ds, zs, 4, 3);
    ASSERT_EQ(r.size(), ds.size() * 3 * 3);
    for (std::size_t k = 0; k < zs.size(); ++k) {
        for (std::size_t i = 0; i < 3 * ds.size(); ++i) {
            const auto& t = r.transitions[k * 3 * ds.size() + i];
            EXPECT_DOUBLE_EQ(t.z(0), zs[k]);
            const int sn = mdp.decode_state(t.s_next);
            if (t.terminal()) continue;
            EXPECT_TRUE(mdp.action_available(sn, t.a_next));
            // z = 1 never takes b
            if (zs[k] == 1.0) {
                EXPECT_EQ(t.a_next, chain_action::a);
            }
        }
    }
    // z = 0 always takes b at the divergence state
    for (std::size_t i = 0; i < 3 * ds.size(); ++i) {
        const auto& t = r.transitions[i];
        if (mdp.decode_state(t.s_next) == mdp.divergence_state) {
            EXPECT_EQ(t.a_next, chain_action::b);
        }
    }
}

TEST(Dataset, RoundTrip) {
    ChainMdp mdp = make_chain(5, 0.7, 1);
    Dataset ds = relabel_for_policies(mdp, rollout_chain(mdp, ChainPolicy{0.4}, 3, 1), {0.0, 0.25, 1.0}, 2);
    auto dir = tmp_dir("roundtrip");
    const std::string path = (dir / "ds.txt").string();
    write_dataset(ds, path);
    EXPECT_TRUE(fs::exists(metadata_path(path)));
    Dataset back = read_dataset(path);
    EXPECT_EQ(back, ds);
}

TEST(Dataset, RejectsCorruptFiles) {
    auto dir = tmp_dir("corrupt");
    const std::string path = (dir / "bad.txt").string();
    {
        std::ofstream out(path);
        out << "not a dataset\n";
    }
    EXPECT_THROW(read_dataset(path), ValidationError);
    EXPECT_THROW(read_dataset((dir / "missing.txt").string()), ValidationError);
}
