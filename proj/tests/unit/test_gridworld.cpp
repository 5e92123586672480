#include <gtest/gtest.h>

#include "uvu/env.hpp"
#include "uvu/error.hpp"

using namespace uvu;

TEST(GridWorld, ObservationRoundTrip) {
    GridWorld env(8, 3);
    for (int i = 0; i < 200; ++i) {
        env.reset();
        Eigen::VectorXd o = env.observation();
        ASSERT_EQ(o.size(), kGridObsDim);
        EXPECT_GE(o(2), 1.0);
        EXPECT_LE(o(2), 4.0);
        auto [layout, agent] = GridWorld::decode(o);
        EXPECT_EQ(layout, env.layout());
        EXPECT_EQ(agent, env.agent());
        EXPECT_EQ(GridWorld::encode(layout, agent), o);
    }
}

TEST(GridWorld, LayoutInvariants) {
    GridWorld env(10, 17);
    for (int i = 0; i < 200; ++i) {
        env.reset();
        const auto& l = env.layout();
        EXPECT_GE(l.width, 5);
        EXPECT_LE(l.width, 10);
        EXPECT_GE(l.height, 5);
        EXPECT_LE(l.height, 10);
        EXPECT_TRUE(l.interior(env.agent().x, env.agent().y));
        std::vector<int> colors;
        for (int d = 0; d < kGridDoors; ++d) {
            const auto& door = l.doors[static_cast<std::size_t>(d)];
            EXPECT_EQ(static_cast<int>(door.wall), d);
            EXPECT_FALSE(l.interior(door.x, door.y));
            colors.push_back(door.color);
        }
        std::sort(colors.begin(), colors.end());
        EXPECT_EQ(std::unique(colors.begin(), colors.end()), colors.end()) << "door colours must be distinct";
    }
}

TEST(GridWorld, PlannerReachesGoalInPredictedSteps) {
    GridWorld env(7, 5);
    for (int i = 0; i < 100; ++i) {
        env.reset();
        for (int task : env.present_colors()) {
            GridWorld e = env;
            const int dist = PlannerPolicy::distance_to_goal(e.layout(), e.agent(), task);
            ASSERT_GE(dist, 1);
            double r = 0.0;
            for (int k = 0; k < dist; ++k) {
                const int before = PlannerPolicy::distance_to_goal(e.layout(), e.agent(), task);
                EXPECT_EQ(before, dist - k);
                r = e.step(PlannerPolicy::optimal_action(e.layout(), e.agent(), task), task);
                if (k + 1 < dist) {
                    EXPECT_EQ(r, 0.0);
                }
            }
            EXPECT_EQ(r, 1.0);
        }
    }
}

TEST(GridWorld, WrongDoorGivesNothing) {
    GridWorld env(6, 2);
    env.reset();
    const auto colors = env.present_colors();
    const int task = colors[0];
    int other = -1;
    for (int c = 0; c < kGridColors; ++c) {
        if (std::find(colors.begin(), colors.end(), c) == colors.end()) other = c;
    }
    ASSERT_GE(other, 0);
    EXPECT_EQ(PlannerPolicy::distance_to_goal(env.layout(), env.agent(), other), -1);
    // walk to the door of `task`, then try to open it under the absent colour
    GridWorld e = env;
    int dist = PlannerPolicy::distance_to_goal(e.layout(), e.agent(), task);
    for (int k = 0; k + 1 < dist; ++k) e.step(PlannerPolicy::optimal_action(e.layout(), e.agent(), task), task);
    EXPECT_EQ(e.step(grid_action::open, other), 0.0);
    EXPECT_THROW(e.step(4, task), ValidationError);
    EXPECT_THROW(e.step(0, 6), ValidationError);
}

TEST(GridWorld, EpisodeLength) {
    GridWorld env(5, 1, 12);
    env.reset();
    int steps = 0;
    while (!env.done()) {
        env.step(grid_action::turn_left, 0);
        ++steps;
    }
    EXPECT_EQ(steps, 12);
}

TEST(GridWorld, FallbackRule) {
    GridWorld env(5, 9);
    env.reset();
    const auto& l = env.layout();
    for (int d = 0; d < kGridDoors; ++d) {
        const auto& door = l.doors[static_cast<std::size_t>(d)];
        EXPECT_EQ(uses_fallback_policy(l, door.color), door.wall == Wall::north || door.wall == Wall::east);
    }
}

TEST(GridWorld, TaskEncoding) {
    for (int t = 0; t < kGridColors; ++t) EXPECT_EQ(GridWorld::decode_task(GridWorld::task_encoding(t)), t);
    EXPECT_THROW(GridWorld::task_encoding(6), ValidationError);
}

TEST(GridData, DeterministicAndWellFormed) {
    auto collect = [] {
        GridWorld env(5, 4);
        PlannerPolicy planner(0.1);
        return collect_gridworld_dataset(env, planner, 3000, 8);
    };
    Dataset a = collect(), b = collect();
    EXPECT_EQ(a, b);
    ASSERT_EQ(a.size(), 3000u);
    double rewards = 0;
    for (const auto& t : a.transitions) {
        EXPECT_FALSE(t.terminal());
        EXPECT_EQ(t.s.size(), kGridObsDim);
        EXPECT_EQ(t.z.size(), kGridColors);
        rewards += t.r;
    }
    EXPECT_GT(rewards, 0.0);
}

TEST(GridData, FallbackTasksAreRarelySolved) {
    // the planner solves south and west doors quickly; the random network does not
    GridWorld env(5, 6);
    PlannerPolicy planner(0.0);
    Dataset ds = collect_gridworld_dataset(env, planner, 20000, 1);
    double fb = 0, fb_n = 0, on = 0, on_n = 0;
    for (const auto& t : ds.transitions) {
        auto [layout, agent] = GridWorld::decode(t.s);
        const bool fallback = uses_fallback_policy(layout, GridWorld::decode_task(t.z));
        (fallback ? fb : on) += t.r;
        (fallback ? fb_n : on_n) += 1;
    }
    ASSERT_GT(fb_n, 0);
    ASSERT_GT(on_n, 0);
    EXPECT_GT(on / on_n, 5.0 * fb / fb_n);
}
