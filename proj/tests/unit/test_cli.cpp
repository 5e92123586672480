#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>
#include <json.hpp>
#include <sys/wait.h>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int run(const std::string& args) {
    const std::string cmd = std::string(UVU_LAB_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() /
               ("uvu_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    std::string config(const json& j, const std::string& name = "cfg.json") {
        json c = j;
        c["output_dir"] = (dir_ / "runs").string();
        const fs::path p = dir_ / name;
        std::ofstream(p) << c.dump(2);
        return p.string();
    }
    fs::path run_dir(const std::string& exp, int seed = 0) const { return dir_ / "runs" / exp / std::to_string(seed); }

    static json chain(const std::string& method, int steps = 200) {
        return {{"experiment_id", method},
                {"method", method},
                {"env", {{"type", "chain"}, {"z_grid", 3}, {"next_action_samples", 2}}},
                {"model", {{"widths", {16}}, {"n_heads", 1}}},
                {"train", {{"n_steps", steps}, {"learning_rate", 0.3}}}};
    }

    fs::path dir_;
};

}  // namespace

TEST_F(Cli, BadArgumentsAndConfigsExitOne) {
    EXPECT_EQ(run("train"), 1);
    EXPECT_EQ(run("train --config " + (dir_ / "missing.json").string()), 1);
    json bad = chain("uvu");
    bad["method"] = "bootstrap";
    EXPECT_EQ(run("gen-data --config " + config(bad)), 1);
    json unknown = chain("uvu");
    unknown["env"]["chain"] = json::object();
    EXPECT_EQ(run("gen-data --config " + config(unknown)), 1);
    EXPECT_EQ(run("verify --suite nonsense"), 1);
}

TEST_F(Cli, ChainPipelineAndOverwriteGuard) {
    const std::string cfg = config(chain("uvu"));
    ASSERT_EQ(run("gen-data --config " + cfg), 0);
    EXPECT_TRUE(fs::exists(run_dir("uvu") / "data" / "dataset.txt"));
    EXPECT_EQ(run("gen-data --config " + cfg), 1);
    EXPECT_EQ(run("gen-data --config " + cfg + " --force"), 0);
    // analyze before training has no checkpoints
    EXPECT_EQ(run("analyze --config " + cfg), 1);
    ASSERT_EQ(run("train --config " + cfg), 0);
    EXPECT_TRUE(fs::exists(run_dir("uvu") / "metrics.csv"));
    ASSERT_EQ(run("analyze --config " + cfg), 0);
    json h = json::parse(slurp(run_dir("uvu") / "heatmap.json"));
    EXPECT_EQ(h["method"], "uvu");
    EXPECT_EQ(h["z_values"].size(), 3u);
    EXPECT_TRUE(h.contains("shape"));
    EXPECT_TRUE(fs::exists(run_dir("uvu") / "heatmap.csv"));
}

TEST_F(Cli, EmptyRunDirectoryIsAnError) {
    json c = chain("uvu");
    c["experiment_id"] = "empty";
    const std::string cfg = config(c);
    fs::create_directories(run_dir("empty"));
    EXPECT_EQ(run("analyze --config " + cfg), 1);
}

TEST_F(Cli, EnsembleSizeControlsMemberCheckpoints) {
    json c = chain("bdqnp");
    c["ensemble_size"] = 3;
    const std::string cfg = config(c);
    ASSERT_EQ(run("gen-data --config " + cfg), 0);
    ASSERT_EQ(run("train --config " + cfg), 0);
    const fs::path ck = run_dir("bdqnp") / "checkpoints";
    for (int k = 0; k < 3; ++k) {
        EXPECT_TRUE(fs::exists(ck / ("member" + std::to_string(k) + ".bin"))) << k;
        EXPECT_TRUE(fs::exists(ck / ("prior" + std::to_string(k) + ".bin"))) << k;
    }
    EXPECT_FALSE(fs::exists(ck / "member3.bin"));
}

TEST_F(Cli, DivergenceExitsTwoWithDiagnostics) {
    json c = chain("dqn", 2000);
    // relu units die at huge steps; erf keeps the gradients alive so the loss blows up
    c["model"]["nonlinearity"] = "erf";
    c["train"]["learning_rate"] = 100.0;
    const std::string cfg = config(c);
    ASSERT_EQ(run("gen-data --config " + cfg), 0);
    EXPECT_EQ(run("train --config " + cfg), 2);
    const fs::path d = run_dir("dqn") / "divergence.json";
    ASSERT_TRUE(fs::exists(d));
    json j = json::parse(slurp(d));
    EXPECT_TRUE(j.contains("stability_check"));
    EXPECT_TRUE(j["stability_check"].contains("min_eigenvalue"));
}

TEST_F(Cli, GenDataIsByteIdentical) {
    const std::string a = config(chain("uvu"), "a.json");
    ASSERT_EQ(run("gen-data --config " + a), 0);
    const std::string first = slurp(run_dir("uvu") / "data" / "dataset.txt");
    ASSERT_EQ(run("gen-data --config " + a + " --force"), 0);
    EXPECT_EQ(slurp(run_dir("uvu") / "data" / "dataset.txt"), first);
    ASSERT_EQ(run("gen-data --config " + a + " --seed 1"), 0);
    EXPECT_NE(slurp(run_dir("uvu", 1) / "data" / "dataset.txt"), first);
}

TEST_F(Cli, TrainingIsReproducible) {
    const std::string cfg = config(chain("uvu"));
    ASSERT_EQ(run("gen-data --config " + cfg), 0);
    ASSERT_EQ(run("train --config " + cfg), 0);
    const std::string u = slurp(run_dir("uvu") / "checkpoints" / "u.bin");
    ASSERT_EQ(run("train --config " + cfg + " --force"), 0);
    EXPECT_EQ(slurp(run_dir("uvu") / "checkpoints" / "u.bin"), u);
}

TEST_F(Cli, GridworldReplicasAggregate) {
    json c = {{"experiment_id", "grid"},
              {"method", "uvu"},
              {"env", {{"type", "gridworld"}, {"size", 5}, {"n_steps", 300}}},
              {"practical",
               {{"arch", {{"encoder_width", 8}, {"trunk_width", 8}, {"trunk_depth", 1}}},
                {"batch_size", 16},
                {"n_steps", 20},
                {"uvu_heads", 2}}},
              {"eval", {{"n_episodes", 5}}}};
    const std::string cfg = config(c);
    ASSERT_EQ(run("gen-data --config " + cfg + " --replicas 2"), 0);
    ASSERT_EQ(run("train --config " + cfg + " --replicas 2"), 0);
    ASSERT_EQ(run("analyze --config " + cfg + " --replicas 2"), 0);
    EXPECT_TRUE(fs::exists(run_dir("grid", 0) / "results.csv"));
    EXPECT_TRUE(fs::exists(run_dir("grid", 1) / "results.csv"));
    json s = json::parse(slurp(dir_ / "runs" / "grid" / "summary.json"));
    EXPECT_EQ(s["size_5"]["uvu"]["n_seeds"], 2);
    EXPECT_TRUE(s["size_5"].contains("uvu+oracle"));
}

TEST_F(Cli, VerifyReductionsPasses) {
    const fs::path report = dir_ / "report.json";
    ASSERT_EQ(run("verify --suite reductions --report " + report.string()), 0);
    json j = json::parse(slurp(report));
    EXPECT_FALSE(j.dump().empty());
}
