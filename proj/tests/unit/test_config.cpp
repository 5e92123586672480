#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "uvu/config.hpp"
#include "uvu/error.hpp"

using namespace uvu;
using nlohmann::json;

TEST(Config, DefaultsRoundTrip) {
    RunConfig c;
    c.validate();
    RunConfig back = RunConfig::from_json(c.to_json());
    EXPECT_EQ(back.to_json(), c.to_json());
    EXPECT_EQ(c.model.input_dim, 10);
}

TEST(Config, GridworldRoundTrip) {
    json j = {{"experiment_id", "g"},
              {"seed", 3},
              {"method", "bdqnp"},
              {"env", {{"type", "gridworld"}, {"size", 7}, {"n_steps", 500}}},
              {"practical", {{"arch", {{"trunk_depth", 2}}}, {"batch_size", 64}}},
              {"eval", {{"n_episodes", 30}}}};
    RunConfig c = RunConfig::from_json(j);
    EXPECT_EQ(c.env.grid.size, 7);
    EXPECT_EQ(c.practical.arch.trunk_depth, 2);
    EXPECT_EQ(c.practical.arch.trunk_width, RunConfig{}.practical.arch.trunk_width);
    EXPECT_EQ(c.practical.method, Method::bdqnp);
    EXPECT_EQ(c.practical.seed, 3u);
    EXPECT_DOUBLE_EQ(c.prior_scale, 1.0);
    EXPECT_DOUBLE_EQ(c.practical.prior_scale, 1.0);
    EXPECT_EQ(c.practical.ensemble_size, c.ensemble_size);
    EXPECT_EQ(RunConfig::from_json(c.to_json()).to_json(), c.to_json());
    EXPECT_EQ(std::filesystem::path(c.run_dir()), std::filesystem::path("runs") / "g" / "3");
}

TEST(Config, RejectsUnknownKeysEverywhere) {
    EXPECT_THROW(RunConfig::from_json({{"sead", 1}}), ValidationError);
    EXPECT_THROW(RunConfig::from_json({{"env", {{"type", "chain"}, {"chain", json::object()}}}}), ValidationError);
    EXPECT_THROW(RunConfig::from_json({{"env", {{"type", "gridworld"}, {"n_states", 6}}}}), ValidationError);
    EXPECT_THROW(RunConfig::from_json({{"train", {{"lr", 0.1}}}}), ValidationError);
    EXPECT_THROW(RunConfig::from_json({{"practical", {{"arch", {{"width", 3}}}}}}), ValidationError);
    EXPECT_THROW(RunConfig::from_json({{"eval", {{"episodes", 3}}}}), ValidationError);
}

TEST(Config, RejectsInvalidValues) {
    EXPECT_THROW(RunConfig::from_json({{"method", "bootstrap"}}), ValidationError);
    EXPECT_THROW(RunConfig::from_json({{"env", {{"type", "gridworld"}, {"size", 11}}}}), ValidationError);
    EXPECT_THROW(RunConfig::from_json({{"env", {{"type", "gridworld"}, {"size", 4}}}}), ValidationError);
    EXPECT_THROW(RunConfig::from_json({{"env", {{"type", "maze"}}}}), ValidationError);
    EXPECT_THROW(RunConfig::from_json({{"env", {{"divergence_state", 5}}}}), ValidationError);
    EXPECT_THROW(RunConfig::from_json({{"method", "uvu"}, {"practical", {{"method", "dqn"}}}}), ValidationError);
    EXPECT_THROW(RunConfig::from_json({{"seed", "zero"}}), ValidationError);
    EXPECT_THROW(RunConfig::from_json({{"experiment_id", "a/b"}}), ValidationError);
    EXPECT_THROW(RunConfig::from_json({{"ensemble_size", 1}}), ValidationError);
}

TEST(Config, ChainDefaultsFollowTheEnvironment) {
    RunConfig c = RunConfig::from_json({{"env", {{"n_states", 8}, {"discount", 0.5}}}});
    EXPECT_EQ(c.model.input_dim, 8 + 1 + 2 + 1);
    EXPECT_DOUBLE_EQ(c.train.discount, 0.5);
    EXPECT_THROW(RunConfig::from_json({{"env", {{"discount", 0.5}}}, {"train", {{"discount", 0.7}}}}), ValidationError);
}

TEST(Config, SeedOverrideReachesNestedConfigs) {
    RunConfig c;
    c.set_seed(42);
    EXPECT_EQ(c.train.seed, 42u);
    EXPECT_EQ(c.practical.seed, 42u);
}

TEST(Config, LoadFromFile) {
    const auto dir = std::filesystem::temp_directory_path() / "uvu_config_test";
    std::filesystem::create_directories(dir);
    {
        std::ofstream(dir / "ok.json") << R"({"experiment_id": "x", "seed": 2})";
        std::ofstream(dir / "bad.json") << R"({"experiment_id": )";
    }
    EXPECT_EQ(RunConfig::load((dir / "ok.json").string()).seed, 2u);
    EXPECT_THROW(RunConfig::load((dir / "bad.json").string()), ValidationError);
    EXPECT_THROW(RunConfig::load((dir / "missing.json").string()), ValidationError);
    std::filesystem::remove_all(dir);
}

TEST(Config, ShippedConfigsParse) {
    for (const char* name : {"chain_uvu.json", "grid_uvu.json"}) {
        RunConfig c = RunConfig::load(std::string(UVU_CONFIG_DIR) + "/" + name);
        EXPECT_NO_THROW(c.validate()) << name;
    }
}
