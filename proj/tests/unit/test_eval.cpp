#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "uvu/error.hpp"
#include "uvu/eval.hpp"

using namespace uvu;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string tmp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / ("uvu_eval_" + name)).string();
}

}  // namespace

TEST(Eval, UniformGrid) {
    auto g = uniform_grid(11);
    ASSERT_EQ(g.size(), 11u);
    EXPECT_EQ(g.front(), 0.0);
    EXPECT_EQ(g.back(), 1.0);
    EXPECT_DOUBLE_EQ(g[3], 0.3);
    EXPECT_THROW(uniform_grid(1), ValidationError);
}

TEST(Eval, SurvivingTasksRejectLowerIndexOnTies) {
    RejectionProtocol p;
    EXPECT_EQ(surviving_tasks({0.1, 0.9, 0.3, 0.8, 0.2, 0.7}, p), (std::vector<int>{0, 4}));
    EXPECT_EQ(surviving_tasks({1, 1, 1, 1, 1, 1}, p), (std::vector<int>{4, 5}));
    EXPECT_EQ(surviving_tasks({0, 1, 0, 1, 0, 0}, p), (std::vector<int>{4, 5}));
    EXPECT_THROW(surviving_tasks({1, 2, 3}, p), ValidationError);
    p.n_rejections = 6;
    EXPECT_THROW(surviving_tasks({1, 2, 3, 4, 5, 6}, p), ValidationError);
}

TEST(Eval, ChainHeatmapLayoutAndExport) {
    ChainMdp mdp = make_chain(6, 0.7, 2);
    auto z = uniform_grid(3);
    HeatmapGrid g = chain_heatmap([](int s, double zz) { return 10.0 * s + zz; }, mdp, z);
    ASSERT_EQ(g.states, (std::vector<int>{0, 1, 2, 3, 4}));
    EXPECT_EQ(g.values(3, 1), 30.5);
    const std::string path = tmp_path("heatmap.csv");
    std::filesystem::remove(path);
    g.write_csv(path);
    std::istringstream lines(slurp(path));
    std::string header, first;
    std::getline(lines, header);
    std::getline(lines, first);
    EXPECT_EQ(header, "z,state,value");
    EXPECT_EQ(first.substr(0, 4), "0,0,");
    nlohmann::json j = g.to_json();
    EXPECT_EQ(j["values"][3][1].get<double>(), 30.5);
    EXPECT_EQ(j["z_values"].size(), 3u);
    std::filesystem::remove(path);
}

TEST(Eval, HeatmapShapeStatistics) {
    HeatmapGrid g;
    g.z_values = {0.0, 0.5, 1.0};
    g.states = {0, 1, 2, 3};
    g.values.resize(4, 3);
    g.values << 4, 2, 1,
                8, 4, 2,
                1e-3, 1e-3, 1e-3,
                0, 0, 0;
    HeatmapShape s = heatmap_shape(g, 2);
    ASSERT_EQ(s.ratio_z1_z0.size(), 2);
    EXPECT_DOUBLE_EQ(s.ratio_z1_z0(0), 0.25);
    EXPECT_DOUBLE_EQ(s.spearman_z(1), -1.0);
    EXPECT_DOUBLE_EQ(s.pre_min, 4.0);
    EXPECT_DOUBLE_EQ(s.post_max, 1e-3);
    EXPECT_DOUBLE_EQ(s.max_row_range, 6.0);
    g.z_values = {0.0, 0.5, 0.9};
    EXPECT_THROW(heatmap_shape(g, 2), ValidationError);
}

TEST(Eval, TabularHeatmapsUseCommonNumbers) {
    // each z column reuses the same seed, so the z = 1 column is exactly zero before divergence
    ChainMdp mdp = make_chain(6, 0.7, 2);
    Dataset ds = rollout_chain(mdp, ChainPolicy{1.0}, 1, 0);
    auto z = uniform_grid(5);
    HeatmapGrid u = tabular_uvu_heatmap(mdp, ds, z, 64, 3, 50);
    HeatmapGrid v = tabular_ensemble_heatmap(mdp, ds, z, 64, 4, 50);
    for (const HeatmapGrid* g : {&u, &v}) {
        HeatmapShape s = heatmap_shape(*g, 2);
        EXPECT_LT(g->values.col(4).head(2).maxCoeff(), 1e-20);
        EXPECT_DOUBLE_EQ(s.spearman_z(0), -1.0);
        EXPECT_GT(s.pre_min, 0.1);
    }
}

TEST(Eval, SummaryAndResults) {
    RunSummary s = summarize({1, 2, 3, 4, 5});
    EXPECT_NEAR(s.interval.lower, 1.492556680937677, 1e-12);
    EXPECT_NEAR(s.interval.upper, 4.507443319062323, 1e-12);
    EXPECT_THROW(summarize({}), ValidationError);

    std::vector<ResultRow> rows = {{"uvu", 5, 0, 0.5}, {"uvu", 5, 1, 0.7}, {"dqn", 5, 0, 0.2}, {"dqn", 5, 1, 0.4}};
    nlohmann::json j = results_summary_json(rows);
    EXPECT_NEAR(j["size_5"]["uvu"]["mean"].get<double>(), 0.6, 1e-12);
    EXPECT_EQ(j["size_5"]["dqn"]["n_seeds"].get<int>(), 2);
    EXPECT_LT(j["size_5"]["dqn"]["lower"].get<double>(), 0.3);

    const std::string path = tmp_path("results.csv");
    std::filesystem::remove(path);
    write_results_csv(path, rows);
    EXPECT_EQ(slurp(path).substr(0, 25), "method,size,seed,return\nu");
    std::filesystem::remove(path);
}

TEST(Eval, TaskRejectionProtocol) {
    PracticalConfig c;
    c.method = Method::dqn;
    c.arch.encoder_width = 8;
    c.arch.trunk_width = 8;
    c.arch.trunk_depth = 1;
    auto agent = make_agent(c);
    auto oracle = oracle_uncertainty();
    RejectionResult a = run_task_rejection(*agent, oracle, 5, 40, 3);
    RejectionResult b = run_task_rejection(*agent, oracle, 5, 40, 3);
    EXPECT_EQ(a.attempted_tasks, b.attempted_tasks);
    ASSERT_EQ(a.episode_returns.size(), 40u);
    double mean = 0;
    for (double r : a.episode_returns) mean += r / 40.0;
    EXPECT_NEAR(a.mean_return, mean, 1e-12);
    RejectionResult r = run_task_rejection(*agent, UncertaintyFn{}, 5, 40, 3);
    for (int t : r.attempted_tasks) {
        EXPECT_GE(t, 0);
        EXPECT_LT(t, kGridColors);
    }
}

TEST(Eval, LawAndCorrelationChecks) {
    EXPECT_THROW(ks_test_law(std::vector<double>(50, 1.0), ScaledChiSquared{}), ValidationError);
    Eigen::VectorXd a(4), b(4);
    a << 1, 2, 3, 4;
    b << 10, 20, 30, 45;
    EXPECT_DOUBLE_EQ(uncertainty_correlation(a, b), 1.0);
}
