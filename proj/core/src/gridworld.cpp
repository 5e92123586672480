#include <algorithm>
#include <array>
#include <deque>
#include <numeric>

#include "uvu/env.hpp"
#include "uvu/error.hpp"
#include "uvu/practical_net.hpp"

namespace uvu {

namespace {

constexpr std::array<int, 4> kDx{1, 0, -1, 0};
constexpr std::array<int, 4> kDy{0, 1, 0, -1};

}  // namespace

int GridLayout::door_with_color(int color) const {
    for (int i = 0; i < kGridDoors; ++i) {
        if (doors[static_cast<std::size_t>(i)].color == color) return i;
    }
    return -1;
}

bool GridLayout::operator==(const GridLayout& o) const {
    if (width != o.width || height != o.height) return false;
    for (std::size_t i = 0; i < doors.size(); ++i) {
        const auto& a = doors[i];
        const auto& b = o.doors[i];
        if (a.x != b.x || a.y != b.y || a.color != b.color || a.wall != b.wall) return false;
    }
    return true;
}

GridWorld::GridWorld(int max_size, std::uint64_t seed, int episode_len)
    : max_size_(max_size), episode_len_(episode_len), rng_(seed) {
    if (max_size < 5 || max_size > 10) throw ValidationError("gridworld: max_size must lie in [5, 10]");
    if (episode_len < 1) throw ValidationError("gridworld: episode_len must be positive");
    reset();
}

GridWorld make_gridworld(int max_size, std::uint64_t seed) { return GridWorld(max_size, seed); }

void GridWorld::reset() {
    layout_.width = 5 + static_cast<int>(rng_.below(static_cast<std::uint64_t>(max_size_ - 4)));
    layout_.height = 5 + static_cast<int>(rng_.below(static_cast<std::uint64_t>(max_size_ - 4)));
    std::array<int, kGridColors> colors{};
    std::iota(colors.begin(), colors.end(), 0);
    for (int i = 0; i < kGridDoors; ++i) {
        const auto j = static_cast<std::size_t>(i) + rng_.below(static_cast<std::uint64_t>(kGridColors - i));
        std::swap(colors[static_cast<std::size_t>(i)], colors[j]);
    }
    const int w = layout_.width;
    const int h = layout_.height;
    auto along = [&](int extent) { return 1 + static_cast<int>(rng_.below(static_cast<std::uint64_t>(extent - 2))); };
    layout_.doors[0] = {along(w), 0, colors[0], Wall::north};
    layout_.doors[1] = {w - 1, along(h), colors[1], Wall::east};
    layout_.doors[2] = {along(w), h - 1, colors[2], Wall::south};
    layout_.doors[3] = {0, along(h), colors[3], Wall::west};
    place_agent_randomly(false);
    agent_.dir = static_cast<int>(rng_.below(4));
    t_ = 0;
}

void GridWorld::place_agent_randomly(bool avoid_current) {
    const int iw = layout_.width - 2;
    const int ih = layout_.height - 2;
    for (;;) {
        const int x = 1 + static_cast<int>(rng_.below(static_cast<std::uint64_t>(iw)));
        const int y = 1 + static_cast<int>(rng_.below(static_cast<std::uint64_t>(ih)));
        if (avoid_current && x == agent_.x && y == agent_.y) continue;
        agent_.x = x;
        agent_.y = y;
        return;
    }
}

std::pair<int, int> GridWorld::front() const {
    const auto d = static_cast<std::size_t>(agent_.dir);
    return {agent_.x + kDx[d], agent_.y + kDy[d]};
}

int GridWorld::facing_door() const {
    const auto [fx, fy] = front();
    for (int i = 0; i < kGridDoors; ++i) {
        const auto& door = layout_.doors[static_cast<std::size_t>(i)];
        if (door.x == fx && door.y == fy) return i;
    }
    return -1;
}

double GridWorld::step(int action, int task) {
    if (action < 0 || action >= kGridActions) throw ValidationError("gridworld: invalid action");
    if (task < 0 || task >= kGridColors) throw ValidationError("gridworld: invalid task");
    double reward = 0.0;
    switch (action) {
        case grid_action::turn_left: agent_.dir = (agent_.dir + 3) % 4; break;
        case grid_action::turn_right: agent_.dir = (agent_.dir + 1) % 4; break;
        case grid_action::forward: {
            const auto [fx, fy] = front();
            if (layout_.interior(fx, fy)) {
                agent_.x = fx;
                agent_.y = fy;
            }
            break;
        }
        case grid_action::open: {
            const int d = facing_door();
            if (d >= 0 && layout_.doors[static_cast<std::size_t>(d)].color == task) {
                reward = 1.0;
                place_agent_randomly(true);
            }
            break;
        }
        default: break;
    }
    ++t_;
    return reward;
}

Eigen::VectorXd GridWorld::encode(const GridLayout& layout, const AgentState& agent) {
    Eigen::VectorXd o = Eigen::VectorXd::Zero(kGridObsDim);
    o(0) = agent.x;
    o(1) = agent.y;
    o(2) = agent.dir + 1;
    for (int i = 0; i < kGridDoors; ++i) {
        const auto& door = layout.doors[static_cast<std::size_t>(i)];
        o(3 + i * kGridColors + door.color) = 1.0;
        o(27 + 2 * i) = door.x;
        o(28 + 2 * i) = door.y;
    }
    return o;
}

Eigen::VectorXd GridWorld::observation() const { return encode(layout_, agent_); }

std::pair<GridLayout, AgentState> GridWorld::decode(const Eigen::VectorXd& obs) {
    if (obs.size() != kGridObsDim) throw ValidationError("gridworld: observation must have 35 entries");
    GridLayout layout;
    for (int i = 0; i < kGridDoors; ++i) {
        auto& door = layout.doors[static_cast<std::size_t>(i)];
        Eigen::Index c = 0;
        obs.segment(3 + i * kGridColors, kGridColors).maxCoeff(&c);
        door.color = static_cast<int>(c);
        door.x = static_cast<int>(obs(27 + 2 * i));
        door.y = static_cast<int>(obs(28 + 2 * i));
        door.wall = static_cast<Wall>(i);
    }
    layout.width = layout.doors[1].x + 1;
    layout.height = layout.doors[2].y + 1;
    AgentState agent{static_cast<int>(obs(0)), static_cast<int>(obs(1)), static_cast<int>(obs(2)) - 1};
    return {layout, agent};
}

Eigen::VectorXd GridWorld::task_encoding(int task) {
    if (task < 0 || task >= kGridColors) throw ValidationError("gridworld: invalid task");
    Eigen::VectorXd z = Eigen::VectorXd::Zero(kGridColors);
    z(task) = 1.0;
    return z;
}

int GridWorld::decode_task(const Eigen::VectorXd& z) {
    if (z.size() != kGridColors) throw ValidationError("gridworld: task encoding must have 6 entries");
    Eigen::Index idx = 0;
    z.maxCoeff(&idx);
    return static_cast<int>(idx);
}

void GridWorld::set_state(const GridLayout& layout, const AgentState& agent, int t) {
    layout_ = layout;
    agent_ = agent;
    t_ = t;
}

std::vector<int> GridWorld::present_colors() const {
    std::vector<int> c;
    for (const auto& d : layout_.doors) c.push_back(d.color);
    std::sort(c.begin(), c.end());
    return c;
}

nlohmann::json GridWorld::to_json() const {
    return {{"type", "gotodoor"}, {"max_size", max_size_}, {"episode_len", episode_len_}};
}

// ---------------------------------------------------------------------------

namespace {

bool facing(const GridLayout& layout, const AgentState& a, int door) {
    const auto& d = layout.doors[static_cast<std::size_t>(door)];
    const auto k = static_cast<std::size_t>(a.dir);
    return a.x + kDx[k] == d.x && a.y + kDy[k] == d.y;
}

AgentState move(const GridLayout& layout, AgentState a, int action) {
    if (action == grid_action::turn_left) a.dir = (a.dir + 3) % 4;
    else if (action == grid_action::turn_right) a.dir = (a.dir + 1) % 4;
    else if (action == grid_action::forward) {
        const auto k = static_cast<std::size_t>(a.dir);
        if (layout.interior(a.x + kDx[k], a.y + kDy[k])) {
            a.x += kDx[k];
            a.y += kDy[k];
        }
    }
    return a;
}

// Turns/moves needed to face `door`, or -1.
int steps_to_face(const GridLayout& layout, const AgentState& start, int door) {
    const int w = layout.width;
    const int h = layout.height;
    auto id = [&](const AgentState& a) { return (a.y * w + a.x) * 4 + a.dir; };
    std::vector<int> dist(static_cast<std::size_t>(w * h * 4), -1);
    std::deque<AgentState> queue{start};
    dist[static_cast<std::size_t>(id(start))] = 0;
    while (!queue.empty()) {
        const AgentState a = queue.front();
        queue.pop_front();
        const int d = dist[static_cast<std::size_t>(id(a))];
        if (facing(layout, a, door)) return d;
        for (int act = 0; act < 3; ++act) {
            const AgentState n = move(layout, a, act);
            auto& slot = dist[static_cast<std::size_t>(id(n))];
            if (slot < 0) {
                slot = d + 1;
                queue.push_back(n);
            }
        }
    }
    return -1;
}

}  // namespace

int PlannerPolicy::distance_to_goal(const GridLayout& layout, const AgentState& agent, int task) {
    const int door = layout.door_with_color(task);
    if (door < 0) return -1;
    const int d = steps_to_face(layout, agent, door);
    return d < 0 ? -1 : d + 1;
}

int PlannerPolicy::optimal_action(const GridLayout& layout, const AgentState& agent, int task) {
    const int door = layout.door_with_color(task);
    if (door < 0) return grid_action::turn_left;
    if (facing(layout, agent, door)) return grid_action::open;
    int best = grid_action::turn_left;
    int best_d = -1;
    for (int act = 0; act < 3; ++act) {
        const AgentState n = move(layout, agent, act);
        if (n == agent) continue;
        const int d = steps_to_face(layout, n, door);
        if (d >= 0 && (best_d < 0 || d < best_d)) {
            best_d = d;
            best = act;
        }
    }
    return best;
}

int PlannerPolicy::act(const GridWorld& env, const Eigen::VectorXd& /*obs*/, int task, Rng& rng) {
    if (rng.bernoulli(epsilon_)) return static_cast<int>(rng.below(kGridActions));
    return optimal_action(env.layout(), env.agent(), task);
}

bool uses_fallback_policy(const GridLayout& layout, int task) {
    const int door = layout.door_with_color(task);
    if (door < 0) return true;
    const Wall w = layout.doors[static_cast<std::size_t>(door)].wall;
    return w == Wall::north || w == Wall::east;
}

namespace {

class RandomNetworkPolicy final : public GridPolicy {
public:
    explicit RandomNetworkPolicy(std::uint64_t seed)
        : net_(PracticalArchSpec{kGridObsDim, kGridColors, 64, 2, 64, kGridActions, 1, 1e-12}) {
        Rng rng(seed);
        params_ = net_.init(rng);
    }

    int act(const GridWorld& /*env*/, const Eigen::VectorXd& obs, int task, Rng& /*rng*/) override {
        const Eigen::MatrixXd q = net_.forward(params_, obs, GridWorld::task_encoding(task));
        Eigen::Index best = 0;
        q.col(0).maxCoeff(&best);
        return static_cast<int>(best);
    }
    [[nodiscard]] std::string id() const override { return "random_q_network"; }

private:
    PracticalNet<double> net_;
    Eigen::VectorXd params_;
};

}  // namespace

Dataset collect_gridworld_dataset(GridWorld& env, GridPolicy& online_agent, long n_steps, std::uint64_t seed) {
    if (n_steps < 0) throw ValidationError("collect_gridworld_dataset: n_steps must be >= 0");
    Dataset ds;
    ds.metadata.policy_id = "mixture(" + online_agent.id() + ",random_q_network)";
    ds.metadata.seed = seed;
    ds.metadata.env_spec = env.to_json();
    if (n_steps == 0) return ds;

    Rng root(seed);
    RandomNetworkPolicy fallback(root.split(1).key());
    Rng rng = root.split(2);
    ds.transitions.reserve(static_cast<std::size_t>(n_steps));

    long recorded = 0;
    while (recorded < n_steps) {
        env.reset();
        const auto colors = env.present_colors();
        const int task = colors[rng.below(colors.size())];
        const Eigen::VectorXd z = GridWorld::task_encoding(task);
        GridPolicy& policy = uses_fallback_policy(env.layout(), task) ? static_cast<GridPolicy&>(fallback)
                                                                      : online_agent;
        Eigen::VectorXd obs = env.observation();
        int action = policy.act(env, obs, task, rng);
        while (!env.done() && recorded < n_steps) {
            Transition t;
            t.s = obs;
            t.a = action;
            t.r = env.step(action, task);
            t.z = z;
            t.s_next = env.observation();
            // time-limit truncation is not terminal: always carry a bootstrap action
            t.a_next = policy.act(env, t.s_next, task, rng);
            online_agent.observe(t);
            obs = t.s_next;
            action = t.a_next;
            ds.transitions.push_back(std::move(t));
            ++recorded;
        }
    }
    return ds;
}

}  // namespace uvu
