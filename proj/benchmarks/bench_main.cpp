#include <benchmark/benchmark.h>

#include "uvu/env.hpp"
#include "uvu/net.hpp"
#include "uvu/ntk.hpp"
#include "uvu/practical_train.hpp"
#include "uvu/rng.hpp"

using namespace uvu;

namespace {

Eigen::MatrixXd points(int dim, int n, std::uint64_t seed) {
    Rng rng(seed);
    Eigen::MatrixXd x(dim, n);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < dim; ++i) x(i, j) = rng.normal();
    return x;
}

MlpSpec spec(int width, int depth) {
    MlpSpec s;
    s.input_dim = 10;
    s.widths.assign(static_cast<std::size_t>(depth), width);
    s.sigma_b = 0.5;
    return s;
}

void BM_NtkRecursion(benchmark::State& st) {
    const auto n = static_cast<int>(st.range(0));
    const MlpSpec s = spec(512, 3);
    const Eigen::MatrixXd x = points(10, n, 1);
    for (auto _ : st) benchmark::DoNotOptimize(ntk_kernel(s, x, x));
    st.SetComplexityN(n);
}
BENCHMARK(BM_NtkRecursion)->RangeMultiplier(2)->Range(16, 256)->Complexity();

void BM_TdPosterior(benchmark::State& st) {
    const auto n = static_cast<int>(st.range(0));
    const MlpSpec s = spec(512, 2);
    const Eigen::MatrixXd test = points(10, 16, 2);
    const Eigen::MatrixXd train = points(10, n, 3);
    const Eigen::MatrixXd next = points(10, n, 4);
    const TdProblem p = make_td_problem(mlp_kernel_fn(s), test, train, next, 0.1, Eigen::VectorXd::Ones(n),
                                        Eigen::VectorXd::Zero(n));
    for (auto _ : st) benchmark::DoNotOptimize(td_posterior(p));
    st.SetComplexityN(n);
}
BENCHMARK(BM_TdPosterior)->RangeMultiplier(2)->Range(16, 256)->Complexity();

void BM_MlpForward(benchmark::State& st) {
    const Mlp net(spec(static_cast<int>(st.range(0)), 2));
    Rng rng(5);
    const Eigen::VectorXd p = net.init(rng);
    const Eigen::MatrixXd x = points(10, 256, 6);
    for (auto _ : st) benchmark::DoNotOptimize(net.forward(p, x));
}
BENCHMARK(BM_MlpForward)->Arg(128)->Arg(512);

void BM_MlpVjp(benchmark::State& st) {
    const Mlp net(spec(static_cast<int>(st.range(0)), 2));
    Rng rng(5);
    const Eigen::VectorXd p = net.init(rng);
    const Eigen::MatrixXd x = points(10, 256, 6);
    const Eigen::MatrixXd ct = Eigen::MatrixXd::Ones(1, 256);
    for (auto _ : st) benchmark::DoNotOptimize(net.vjp(p, x, ct));
}
BENCHMARK(BM_MlpVjp)->Arg(128)->Arg(512);

const OfflineBuffer& grid_buffer() {
    static const OfflineBuffer buf = [] {
        GridWorld env(5, 3);
        PlannerPolicy planner(0.5);
        return OfflineBuffer::from_dataset(collect_gridworld_dataset(env, planner, 5000, 4));
    }();
    return buf;
}

// one gradient step per iteration; compare uvu against bdqnp(5)
void BM_AgentStep(benchmark::State& st) {
    PracticalConfig cfg;
    cfg.method = static_cast<Method>(st.range(0));
    cfg.arch.encoder_width = 128;
    cfg.arch.trunk_width = 128;
    cfg.arch.trunk_depth = 2;
    cfg.batch_size = 128;
    cfg.ensemble_size = 5;
    auto agent = make_agent(cfg);
    const OfflineBuffer& buf = grid_buffer();
    Rng rng(7);
    for (auto _ : st) benchmark::DoNotOptimize(agent->train_step(buf, rng));
    st.SetLabel(to_string(cfg.method));
}
BENCHMARK(BM_AgentStep)
    ->Arg(static_cast<int>(Method::dqn))
    ->Arg(static_cast<int>(Method::uvu))
    ->Arg(static_cast<int>(Method::bdqnp))
    ->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
