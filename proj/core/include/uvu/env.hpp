#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "uvu/rng.hpp"

namespace uvu {

/// One offline tuple (s, a, r, z, s', a'). `a_next < 0` marks a terminal or
/// absorbing successor whose bootstrap value is zero.
struct Transition {
    Eigen::VectorXd s;
    int a = 0;
    double r = 0.0;
    Eigen::VectorXd z;
    Eigen::VectorXd s_next;
    int a_next = -1;

    [[nodiscard]] bool terminal() const noexcept { return a_next < 0; }
    bool operator==(const Transition& o) const;
};

struct DatasetMetadata {
    std::string policy_id;
    std::uint64_t seed = 0;
    nlohmann::json env_spec = nlohmann::json::object();

    bool operator==(const DatasetMetadata& o) const {
        return policy_id == o.policy_id && seed == o.seed && env_spec == o.env_spec;
    }
};

struct Dataset {
    std::vector<Transition> transitions;
    DatasetMetadata metadata;

    [[nodiscard]] std::size_t size() const noexcept { return transitions.size(); }
    [[nodiscard]] bool empty() const noexcept { return transitions.empty(); }
    [[nodiscard]] int state_dim() const;
    [[nodiscard]] int task_dim() const;
    bool operator==(const Dataset& o) const { return transitions == o.transitions && metadata == o.metadata; }
};

// Dataset files: a one-line header followed by one whitespace-separated record
// per transition laid out as s | a | r | z | s_next | a_next. Metadata lives in
// a sidecar "<path>.meta.json".
void write_dataset(const Dataset& ds, const std::string& path);
Dataset read_dataset(const std::string& path);
std::string metadata_path(const std::string& dataset_path);

// ---------------------------------------------------------------------------
// Chain MDP

namespace chain_action {
inline constexpr int a = 0;
inline constexpr int b = 1;
}  // namespace chain_action

/// Deterministic chain s_1 .. s_N. Action "a" moves right, s_N is terminal, and
/// action "b" at the divergence state leaves the data into an absorbing sink.
/// States are 0-based internally; index n_states is the sink.
struct ChainMdp {
    int n_states = 4;
    double discount = 0.7;
    int divergence_state = 2;  // s_3

    static constexpr int n_actions = 2;

    [[nodiscard]] int sink() const noexcept { return n_states; }
    [[nodiscard]] int n_table_states() const noexcept { return n_states + 1; }
    [[nodiscard]] bool is_terminal(int state) const noexcept { return state == n_states - 1 || state == sink(); }
    [[nodiscard]] bool action_available(int state, int action) const noexcept;

    struct Step {
        int next_state;
        double reward;
        bool terminal;
    };
    /// Throws ValidationError for terminal states or unavailable actions.
    [[nodiscard]] Step step(int state, int action) const;

    [[nodiscard]] Eigen::VectorXd encode_state(int state) const;
    [[nodiscard]] int decode_state(const Eigen::VectorXd& s) const;
    [[nodiscard]] nlohmann::json to_json() const;
};

ChainMdp make_chain(int n_states, double discount, int divergence_state = 2);

/// Chooses "b" with probability 1 - z wherever "b" exists, "a" otherwise.
struct ChainPolicy {
    double z = 1.0;

    [[nodiscard]] double probability(const ChainMdp& mdp, int state, int action) const;
    int sample(const ChainMdp& mdp, int state, Rng& rng) const;
    [[nodiscard]] Eigen::VectorXd encoding() const { return Eigen::VectorXd::Constant(1, z); }
};

Dataset rollout_chain(const ChainMdp& mdp, const ChainPolicy& policy, int n_episodes, std::uint64_t seed);

/// Redraws every non-terminal a_next from `policy` and stamps its encoding into z.
void resample_next_actions(const ChainMdp& mdp, Dataset& ds, const ChainPolicy& policy, Rng& rng);

/// One copy of `ds` per z value, each with a_next drawn from that policy.
Dataset relabel_for_policies(const ChainMdp& mdp, const Dataset& ds, const std::vector<double>& z_grid,
                             std::uint64_t seed, int next_action_samples = 1);

// ---------------------------------------------------------------------------
// GoToDoor grid world

inline constexpr int kGridObsDim = 35;
inline constexpr int kGridActions = 4;
inline constexpr int kGridColors = 6;
inline constexpr int kGridDoors = 4;

namespace grid_action {
inline constexpr int turn_left = 0;
inline constexpr int turn_right = 1;
inline constexpr int forward = 2;
inline constexpr int open = 3;
}  // namespace grid_action

enum class Wall { north = 0, east = 1, south = 2, west = 3 };

struct Door {
    int x = 0;
    int y = 0;
    int color = 0;
    Wall wall = Wall::north;
};

struct GridLayout {
    int width = 5;   // including border walls
    int height = 5;
    std::array<Door, kGridDoors> doors{};  // ordered north, east, south, west

    [[nodiscard]] int door_with_color(int color) const;  // -1 if absent
    [[nodiscard]] bool interior(int x, int y) const { return x >= 1 && y >= 1 && x <= width - 2 && y <= height - 2; }
    bool operator==(const GridLayout& o) const;
};

/// Agent direction: 0 east, 1 south, 2 west, 3 north (observed as 1..4).
struct AgentState {
    int x = 1;
    int y = 1;
    int dir = 0;
    bool operator==(const AgentState&) const = default;
};

class GridWorld {
public:
    GridWorld(int max_size, std::uint64_t seed, int episode_len = 50);

    /// New random layout, door placement and agent pose.
    void reset();
    /// Applies `action` under task colour `task`; returns the reward.
    double step(int action, int task);

    [[nodiscard]] Eigen::VectorXd observation() const;
    [[nodiscard]] bool done() const noexcept { return t_ >= episode_len_; }
    [[nodiscard]] int time() const noexcept { return t_; }

    [[nodiscard]] const GridLayout& layout() const noexcept { return layout_; }
    [[nodiscard]] const AgentState& agent() const noexcept { return agent_; }
    [[nodiscard]] int max_size() const noexcept { return max_size_; }
    [[nodiscard]] int episode_len() const noexcept { return episode_len_; }
    [[nodiscard]] Rng& rng() noexcept { return rng_; }

    void set_state(const GridLayout& layout, const AgentState& agent, int t = 0);
    /// Inverse of observation(); grid extent is recovered from the east and south doors.
    static std::pair<GridLayout, AgentState> decode(const Eigen::VectorXd& obs);
    static Eigen::VectorXd encode(const GridLayout& layout, const AgentState& agent);
    static Eigen::VectorXd task_encoding(int task);
    static int decode_task(const Eigen::VectorXd& z);

    /// Cell in front of the agent.
    [[nodiscard]] std::pair<int, int> front() const;
    /// Door index in front of the agent or -1.
    [[nodiscard]] int facing_door() const;
    /// Colours present in the current layout.
    [[nodiscard]] std::vector<int> present_colors() const;

    [[nodiscard]] nlohmann::json to_json() const;

private:
    void place_agent_randomly(bool avoid_current);

    int max_size_;
    int episode_len_;
    Rng rng_;
    GridLayout layout_;
    AgentState agent_;
    int t_ = 0;
};

GridWorld make_gridworld(int max_size, std::uint64_t seed);

/// Behaviour policy used while recording grid world data.
class GridPolicy {
public:
    virtual ~GridPolicy() = default;
    virtual int act(const GridWorld& env, const Eigen::VectorXd& obs, int task, Rng& rng) = 0;
    /// Hook for agents trained concurrently with data collection.
    virtual void observe(const Transition& /*t*/) {}
    [[nodiscard]] virtual std::string id() const = 0;
};

/// Shortest-path expert with epsilon-greedy noise.
class PlannerPolicy : public GridPolicy {
public:
    explicit PlannerPolicy(double epsilon = 0.1) : epsilon_(epsilon) {}
    int act(const GridWorld& env, const Eigen::VectorXd& obs, int task, Rng& rng) override;
    [[nodiscard]] std::string id() const override { return "planner"; }

    /// Optimal action (lowest index among ties) towards facing the door of `task`.
    static int optimal_action(const GridLayout& layout, const AgentState& agent, int task);
    /// Number of steps until the door of `task` is opened; -1 if unreachable.
    static int distance_to_goal(const GridLayout& layout, const AgentState& agent, int task);

private:
    double epsilon_;
};

/// True when the data-collection mixture hands `task` to the fallback policy.
bool uses_fallback_policy(const GridLayout& layout, int task);

/// Records `n_steps` transitions. Target doors on the south or west wall are
/// driven by `online_agent`; north or east doors by a fixed random Q-network.
Dataset collect_gridworld_dataset(GridWorld& env, GridPolicy& online_agent, long n_steps, std::uint64_t seed);

}  // namespace uvu
