// uvu_lab: dataset generation, training, analysis and verification runs.
//
//   uvu_lab gen-data --config run.json [--seed N] [--out DIR] [--force] [--replicas R]
//   uvu_lab train    --config run.json ...
//   uvu_lab analyze  --config run.json ...
//   uvu_lab verify   --suite all [--full] [--report FILE]
//
// exit codes: 0 ok, 1 validation, 2 divergence, 3 verification failure

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "uvu/config.hpp"
#include "uvu/csv.hpp"
#include "uvu/env.hpp"
#include "uvu/error.hpp"
#include "uvu/eval.hpp"
#include "uvu/net.hpp"
#include "uvu/ntk.hpp"
#include "uvu/practical_net.hpp"
#include "uvu/practical_train.hpp"
#include "uvu/train.hpp"
#include "uvu/verify.hpp"

namespace fs = std::filesystem;
using namespace uvu;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitDivergence = 2;
constexpr int kExitVerify = 3;

struct RunOptions {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    bool force = false;
    int replicas = 1;
};

/// Thrown after a divergence once the stability report has been written.
struct DivergenceReported : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::mutex g_log_mutex;

void log(const std::string& msg) {
    std::lock_guard<std::mutex> lk(g_log_mutex);
    std::cerr << msg << '\n';
}

void write_json(const fs::path& p, const json& j) {
    std::ofstream out(p);
    if (!out) throw ValidationError("cannot write " + p.string());
    out << j.dump(2) << '\n';
}

RunConfig load_config(const RunOptions& o, std::uint64_t seed_offset) {
    if (o.config.empty()) throw ValidationError("--config is required");
    RunConfig rc = RunConfig::load(o.config);
    const std::uint64_t base = o.seed ? *o.seed : rc.seed;
    rc.set_seed(base + seed_offset);
    if (!o.out.empty()) rc.output_dir = o.out;
    rc.validate();
    return rc;
}

bool nonempty_dir(const fs::path& p) { return fs::is_directory(p) && !fs::is_empty(p); }

/// Refuses to overwrite `outputs` unless forced; forced runs remove them first.
void claim_outputs(const std::vector<fs::path>& outputs, bool force) {
    for (const auto& p : outputs) {
        const bool present = fs::is_directory(p) ? nonempty_dir(p) : fs::exists(p);
        if (!present) continue;
        if (!force) throw ValidationError("output exists: " + p.string() + " (use --force to overwrite)");
        fs::remove_all(p);
    }
}

ChainMdp chain_of(const RunConfig& rc) {
    const auto& c = rc.env.chain;
    return make_chain(c.n_states, c.discount, c.divergence_state);
}

bool is_chain(const RunConfig& rc) { return rc.env.type == "chain"; }

fs::path dataset_file(const RunConfig& rc) { return fs::path(rc.run_dir()) / "data" / "dataset.txt"; }
fs::path checkpoint_dir(const RunConfig& rc) { return fs::path(rc.run_dir()) / "checkpoints"; }

json manifest(const RunConfig& rc, const std::string& stage) {
    return {{"stage", stage}, {"config", rc.to_json()}};
}

// ---------------------------------------------------------------------------
// gen-data

void gen_data(const RunConfig& rc, bool force) {
    const fs::path dir = fs::path(rc.run_dir()) / "data";
    claim_outputs({dir}, force);
    fs::create_directories(dir);
    Dataset ds;
    if (is_chain(rc)) {
        const ChainMdp mdp = chain_of(rc);
        const auto& c = rc.env.chain;
        Dataset logged = rollout_chain(mdp, ChainPolicy{c.z_collect}, c.n_episodes, stream_seed(rc.seed, kChainRollout));
        write_dataset(logged, (dir / "logged.txt").string());
        ds = relabel_for_policies(mdp, logged, uniform_grid(c.z_grid), stream_seed(rc.seed, kRelabel),
                                  c.next_action_samples);
    } else {
        const auto& g = rc.env.grid;
        GridWorld env(g.size, stream_seed(rc.seed, kGridEnv), g.episode_len);
        PlannerPolicy planner(g.planner_epsilon);
        ds = collect_gridworld_dataset(env, planner, g.n_steps, stream_seed(rc.seed, kGridData));
    }
    write_dataset(ds, dataset_file(rc).string());
    write_json(fs::path(rc.run_dir()) / "manifest.json", manifest(rc, "gen-data"));
    log("gen-data: " + std::to_string(ds.size()) + " transitions -> " + dataset_file(rc).string());
}

Dataset load_run_dataset(const RunConfig& rc) {
    const fs::path p = dataset_file(rc);
    if (!fs::exists(p)) throw ValidationError("no dataset at " + p.string() + " (run gen-data first)");
    return read_dataset(p.string());
}

// ---------------------------------------------------------------------------
// Stability diagnostics attached to divergence aborts

json stability_json(const StabilityReport& r, Eigen::Index n) {
    return {{"min_eigenvalue", r.min_eigenvalue},
            {"gershgorin_lower_bound", r.gershgorin_lower_bound},
            {"is_pd", r.is_pd},
            {"n_transitions", n}};
}

/// Empirical NTK of the chain network at initialisation over [X, X'].
StabilityReport chain_stability(const RunConfig& rc, const TdBatch& batch) {
    MlpSpec spec = rc.model;
    spec.n_heads = 1;
    const Mlp net(spec);
    const Eigen::VectorXd params = init_params(spec, stream_seed(rc.seed, kModel)).values();
    const Eigen::Index n = batch.size();
    Eigen::MatrixXd xs(batch.x.rows(), 2 * n);
    xs << batch.x, batch.x_next;
    const Eigen::MatrixXd k = net.empirical_ntk(params, xs);
    return stability_check(k.topLeftCorner(n, n), k.bottomLeftCorner(n, n), rc.env.chain.discount * batch.bootstrap);
}

/// Same for the practical Q-network on a subsample of logged transitions.
StabilityReport grid_stability(const RunConfig& rc, const Dataset& ds, Eigen::Index max_points = 128) {
    PracticalArchSpec arch = rc.practical.arch;
    arch.n_heads = 1;
    const PracticalNet<double> net(arch);
    Rng rng(stream_seed(rc.seed, kModel));
    const Eigen::VectorXd params = net.init(rng);
    const Eigen::Index n = std::min<Eigen::Index>(max_points, static_cast<Eigen::Index>(ds.size()));
    std::vector<Eigen::VectorXd> grads;
    Eigen::VectorXd discounts(n);
    // rows: gradients at (s, a) for the first n transitions, then at (s', a')
    for (int pass = 0; pass < 2; ++pass) {
        for (Eigen::Index i = 0; i < n; ++i) {
            const Transition& t = ds.transitions[static_cast<std::size_t>(i)];
            const Eigen::VectorXd& s = pass == 0 ? t.s : t.s_next;
            const int a = pass == 0 ? t.a : std::max(t.a_next, 0);
            typename PracticalNet<double>::Cache cache;
            net.forward(params, s, t.z, cache);
            Eigen::MatrixXd cot = Eigen::MatrixXd::Zero(arch.n_outputs(), 1);
            cot(net.output_index(a, 0), 0) = 1.0;
            Eigen::VectorXd g = Eigen::VectorXd::Zero(net.n_params());
            net.backward(params, cache, cot, g);
            grads.push_back(std::move(g));
            if (pass == 0) discounts(i) = t.terminal() ? 0.0 : rc.practical.discount;
        }
    }
    Eigen::MatrixXd xx(n, n), xpx(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            xx(i, j) = grads[static_cast<std::size_t>(i)].dot(grads[static_cast<std::size_t>(j)]);
            xpx(i, j) = grads[static_cast<std::size_t>(n + i)].dot(grads[static_cast<std::size_t>(j)]);
        }
    }
    return stability_check(xx, xpx, discounts);
}

[[noreturn]] void report_divergence(const RunConfig& rc, const DivergenceError& e, const StabilityReport& r,
                                    Eigen::Index n) {
    json j = {{"error", e.what()}, {"step", e.step()}, {"loss", e.loss()}, {"stability_check", stability_json(r, n)}};
    write_json(fs::path(rc.run_dir()) / "divergence.json", j);
    log("divergence: " + j.dump());
    throw DivergenceReported(e.what());
}

// ---------------------------------------------------------------------------
// Checkpoints

void save_part(const RunConfig& rc, const std::string& name, const Eigen::VectorXd& params) {
    json m = {{"part", name}, {"method", rc.method}, {"seed", rc.seed}, {"config", rc.to_json()}};
    save_checkpoint((checkpoint_dir(rc) / (name + ".bin")).string(), params, m);
}

void save_part(const RunConfig& rc, const std::string& name, const ParamVector& params) {
    save_part(rc, name, params.values());
}

Eigen::VectorXd load_part(const RunConfig& rc, const std::string& name) {
    const fs::path p = checkpoint_dir(rc) / (name + ".bin");
    if (!fs::exists(p)) throw ValidationError("missing checkpoint " + p.string() + " (run train first)");
    return load_checkpoint(p.string());
}

ParamVector load_part(const RunConfig& rc, const std::string& name, ParamRole role) { return {load_part(rc, name), role}; }

std::shared_ptr<const Mlp> chain_net(const RunConfig& rc, int n_heads) {
    MlpSpec spec = rc.model;
    spec.n_heads = n_heads;
    return std::make_shared<const Mlp>(spec);
}

double chain_prior_scale(const RunConfig& rc) {
    if (rc.method == "bdqnp" && rc.prior_scale == 0.0) return 1.0;
    return rc.method == "bdqnp" ? rc.prior_scale : 0.0;
}

// ---------------------------------------------------------------------------
// train

void train_chain(const RunConfig& rc) {
    const ChainMdp mdp = chain_of(rc);
    const Dataset ds = load_run_dataset(rc);
    const TdBatch batch = make_td_batch(ds, chain_encoder(mdp), ChainMdp::n_actions);
    TrainConfig cfg = rc.train;
    cfg.metrics_path = (fs::path(rc.run_dir()) / "metrics.csv").string();
    const std::uint64_t mseed = stream_seed(rc.seed, kModel);
    try {
        if (rc.method == "uvu") {
            UvuModel m = make_uvu_model(chain_net(rc, rc.model.n_heads), mdp.discount, mseed);
            const TrainResult r = uvu_train(m, batch, cfg);
            save_part(rc, "u", m.online);
            save_part(rc, "g", m.target);
            log("train uvu: steps " + std::to_string(r.steps) + " loss " + CsvWriter::num(r.final_loss));
        } else if (rc.method == "ensemble" || rc.method == "bdqnp") {
            EnsembleModel ens = make_ensemble(chain_net(rc, 1), rc.ensemble_size, mseed, chain_prior_scale(rc));
            const auto results = ensemble_train(ens, batch, cfg, rc.method == "bdqnp");
            for (std::size_t k = 0; k < results.size(); ++k) {
                if (results[k].diverged) {
                    throw DivergenceError("member " + std::to_string(k) + ": " + results[k].message, results[k].steps,
                                          results[k].final_loss);
                }
            }
            for (int k = 0; k < ens.size(); ++k) {
                save_part(rc, "member" + std::to_string(k), ens.members[static_cast<std::size_t>(k)]);
                if (!ens.priors.empty()) save_part(rc, "prior" + std::to_string(k), ens.priors[static_cast<std::size_t>(k)]);
            }
            log("train " + rc.method + ": " + std::to_string(ens.size()) + " members");
        } else if (rc.method == "rnd" || rc.method == "rnd_p") {
            RndModel m = make_rnd_model(chain_net(rc, rc.model.n_heads), mseed);
            TrainConfig rcfg = cfg;
            rcfg.discount = 0.0;
            rnd_train(m, batch, rcfg);
            save_part(rc, "rnd_predictor", m.predictor);
            save_part(rc, "rnd_target", m.target);
            if (rc.method == "rnd_p") {
                TrainConfig qcfg = cfg;
                qcfg.metrics_path = (fs::path(rc.run_dir()) / "metrics_intrinsic.csv").string();
                rnd_prior_train(m, chain_net(rc, 1), batch, qcfg, true);
                save_part(rc, "q_intr", m.intrinsic_q);
            }
            log("train " + rc.method + ": done");
        } else {
            auto net = chain_net(rc, 1);
            Eigen::VectorXd q = init_params(net->spec(), mseed).values();
            const TrainResult r = td_train(*net, q, batch, batch.rewards.transpose(), cfg);
            save_part(rc, "q", q);
            log("train dqn: steps " + std::to_string(r.steps));
        }
    } catch (const DivergenceError& e) {
        report_divergence(rc, e, chain_stability(rc, batch), batch.size());
    }
}

void train_grid(const RunConfig& rc) {
    const Dataset ds = load_run_dataset(rc);
    const OfflineBuffer buf = OfflineBuffer::from_dataset(ds);
    auto agent = make_agent(rc.practical);
    PracticalResult res;
    try {
        res = practical_train(*agent, buf, rc.practical);
    } catch (const DivergenceError& e) {
        report_divergence(rc, e, grid_stability(rc, ds), std::min<Eigen::Index>(128, static_cast<Eigen::Index>(ds.size())));
    }
    for (const auto& [name, params] : agent->checkpoint()) save_part(rc, name, params.cast<double>());
    CsvWriter metrics((fs::path(rc.run_dir()) / "metrics.csv").string(), {"step", "loss"});
    for (std::size_t i = 0; i < res.loss_trace.size(); ++i) {
        metrics.row({std::to_string(100 * (i + 1)), CsvWriter::num(res.loss_trace[i])});
    }
    log("train " + rc.method + ": " + std::to_string(res.steps) + " steps, loss " + CsvWriter::num(res.final_loss) +
        ", " + CsvWriter::num(res.seconds) + " s");
}

void train(const RunConfig& rc, bool force) {
    const fs::path run = rc.run_dir();
    claim_outputs({checkpoint_dir(rc), run / "metrics.csv", run / "metrics_intrinsic.csv", run / "divergence.json"},
                  force);
    // ensemble members log to metrics.csv.member<k>
    if (fs::is_directory(run)) {
        for (const auto& e : fs::directory_iterator(run)) {
            if (e.path().filename().string().rfind("metrics.csv.", 0) == 0) claim_outputs({e.path()}, force);
        }
    }
    fs::create_directories(checkpoint_dir(rc));
    if (is_chain(rc)) {
        train_chain(rc);
    } else {
        train_grid(rc);
    }
    write_json(run / "manifest.json", manifest(rc, "train"));
}

// ---------------------------------------------------------------------------
// analyze

std::unique_ptr<Agent> restore_agent(const RunConfig& rc) {
    auto agent = make_agent(rc.practical);
    std::vector<std::pair<std::string, VecF>> parts;
    for (const auto& [name, params] : agent->checkpoint()) {
        parts.emplace_back(name, load_part(rc, name).cast<float>());
        if (parts.back().second.size() != params.size()) throw ValidationError("checkpoint " + name + " has the wrong size");
    }
    agent->restore(parts);
    return agent;
}

void analyze_chain(const RunConfig& rc) {
    const ChainMdp mdp = chain_of(rc);
    ChainEstimator est;
    // estimators reference their model, so these outlive the branches
    UvuModel m;
    EnsembleModel ens;
    RndModel rnd;
    if (rc.method == "uvu") {
        m.net = chain_net(rc, rc.model.n_heads);
        m.online = load_part(rc, "u", ParamRole::vartheta);
        m.target = load_part(rc, "g", ParamRole::psi);
        m.gamma = mdp.discount;
        est = uvu_estimator(m, mdp);
    } else if (rc.method == "ensemble" || rc.method == "bdqnp") {
        ens.net = chain_net(rc, 1);
        ens.prior_scale = chain_prior_scale(rc);
        for (int k = 0; k < rc.ensemble_size; ++k) {
            ens.members.push_back(load_part(rc, "member" + std::to_string(k), ParamRole::theta));
            if (ens.prior_scale > 0.0) ens.priors.push_back(load_part(rc, "prior" + std::to_string(k), ParamRole::psi));
        }
        est = ensemble_estimator(ens, mdp);
    } else if (rc.method == "rnd" || rc.method == "rnd_p") {
        rnd.net = chain_net(rc, rc.model.n_heads);
        rnd.predictor = load_part(rc, "rnd_predictor", ParamRole::rnd_predictor);
        rnd.target = load_part(rc, "rnd_target", ParamRole::rnd_target);
        if (rc.method == "rnd_p") {
            rnd.q_net = chain_net(rc, 1);
            rnd.intrinsic_q = load_part(rc, "q_intr", ParamRole::theta);
            rnd.intrinsic_prior = true;
            est = intrinsic_q_estimator(rnd, mdp);
        } else {
            est = rnd_estimator(rnd, mdp);
        }
    } else {
        throw ValidationError("analyze: method 'dqn' has no uncertainty heatmap on the chain");
    }
    const HeatmapGrid grid = chain_heatmap(est, mdp, uniform_grid(rc.env.chain.z_grid));
    const fs::path run = rc.run_dir();
    grid.write_csv((run / "heatmap.csv").string());
    json j = grid.to_json();
    j["method"] = rc.method;
    const HeatmapShape shape = heatmap_shape(grid, mdp.divergence_state);
    j["shape"] = {{"ratio_z1_z0", std::vector<double>(shape.ratio_z1_z0.begin(), shape.ratio_z1_z0.end())},
                  {"spearman_z", std::vector<double>(shape.spearman_z.begin(), shape.spearman_z.end())},
                  {"pre_min", shape.pre_min},
                  {"post_max", shape.post_max},
                  {"max_row_range", shape.max_row_range}};
    write_json(run / "heatmap.json", j);
    log("analyze: heatmap " + std::to_string(grid.states.size()) + " states x " + std::to_string(grid.z_values.size()) +
        " z values");
}

void analyze_grid(const RunConfig& rc) {
    const auto agent = restore_agent(rc);
    const int size = rc.env.grid.size;
    const std::uint64_t eseed = stream_seed(rc.seed, kEval);
    const UncertaintyFn unc = rc.method == "dqn" ? UncertaintyFn{} : agent_uncertainty(*agent);
    std::vector<ResultRow> rows;
    rows.push_back({rc.method, size, rc.seed, run_task_rejection(*agent, unc, size, rc.eval.n_episodes, eseed).mean_return});
    if (rc.method != "dqn") {
        // same agent with uniformly random rejection, and with the data-collection oracle
        rows.push_back({rc.method + "+random", size, rc.seed,
                        run_task_rejection(*agent, {}, size, rc.eval.n_episodes, eseed).mean_return});
    }
    rows.push_back({rc.method + "+oracle", size, rc.seed,
                    run_task_rejection(*agent, oracle_uncertainty(), size, rc.eval.n_episodes, eseed).mean_return});
    const fs::path run = rc.run_dir();
    write_results_csv((run / "results.csv").string(), rows);
    write_json(run / "summary.json", results_summary_json(rows));
    std::ostringstream msg;
    msg << "analyze:";
    for (const auto& r : rows) msg << ' ' << r.method << '=' << CsvWriter::num(r.value);
    log(msg.str());
}

void analyze(const RunConfig& rc, bool force) {
    const fs::path run = rc.run_dir();
    if (!fs::is_directory(run) || fs::is_empty(run)) throw ValidationError("empty run directory " + run.string());
    if (!nonempty_dir(checkpoint_dir(rc))) throw ValidationError("missing checkpoints in " + checkpoint_dir(rc).string());
    if (is_chain(rc)) {
        claim_outputs({run / "heatmap.csv", run / "heatmap.json"}, force);
        analyze_chain(rc);
    } else {
        claim_outputs({run / "results.csv", run / "summary.json"}, force);
        analyze_grid(rc);
    }
}

std::vector<ResultRow> read_results_csv(const fs::path& p) {
    std::ifstream in(p);
    std::string line;
    std::getline(in, line);  // header
    std::vector<ResultRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
        if (f.size() != 4) throw ValidationError("malformed results row in " + p.string());
        rows.push_back({f[0], std::stoi(f[1]), std::stoull(f[2]), std::stod(f[3])});
    }
    return rows;
}

/// Table-shaped summary over every seed directory of the experiment.
void aggregate_experiment(const RunConfig& rc) {
    const fs::path exp = fs::path(rc.output_dir) / rc.experiment_id;
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(exp)) {
        if (e.is_directory() && fs::exists(e.path() / "results.csv")) files.push_back(e.path() / "results.csv");
    }
    std::sort(files.begin(), files.end());
    std::vector<ResultRow> rows;
    for (const auto& f : files) {
        auto r = read_results_csv(f);
        rows.insert(rows.end(), r.begin(), r.end());
    }
    if (files.size() < 2) return;  // a t-interval needs two seeds
    write_results_csv((exp / "results.csv").string(), rows);
    write_json(exp / "summary.json", results_summary_json(rows));
    log("analyze: aggregated " + std::to_string(files.size()) + " seeds -> " + (exp / "summary.json").string());
}

// ---------------------------------------------------------------------------
// replicas

int exit_code_of(const std::exception_ptr& ep) {
    try {
        std::rethrow_exception(ep);
    } catch (const ValidationError& e) {
        log(std::string("error: ") + e.what());
        return kExitValidation;
    } catch (const DivergenceReported&) {
        return kExitDivergence;
    } catch (const DivergenceError& e) {
        log(std::string("divergence: ") + e.what());
        return kExitDivergence;
    } catch (const NonPositiveDefiniteDelta& e) {
        log(std::string("divergence: ") + e.what());
        return kExitDivergence;
    } catch (const std::exception& e) {
        log(std::string("error: ") + e.what());
        return kExitValidation;
    }
}

int worker_cap() {
    int cap = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    if (const char* env = std::getenv("UVU_LAB_THREADS")) {
        try {
            const int v = std::stoi(env);
            if (v >= 1) cap = std::min(cap, v);
        } catch (const std::exception&) {
            throw ValidationError(std::string("UVU_LAB_THREADS must be a positive integer, got '") + env + "'");
        }
    }
    return cap;
}

/// Runs `fn` for seeds base .. base + replicas - 1 and returns the worst exit code
/// (lowest seed first among equals). Workers share only the read-only options.
template <typename Fn>
int for_each_replica(const RunOptions& o, Fn fn) {
    if (o.replicas < 1) throw ValidationError("--replicas must be >= 1");
    std::vector<RunConfig> configs;
    for (int r = 0; r < o.replicas; ++r) configs.push_back(load_config(o, static_cast<std::uint64_t>(r)));
    std::vector<int> codes(configs.size(), kExitOk);
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i = next++; i < configs.size(); i = next++) {
            try {
                fn(configs[i]);
            } catch (...) {
                codes[i] = exit_code_of(std::current_exception());
            }
        }
    };
    const int n_workers = std::min<int>(worker_cap(), o.replicas);
    if (n_workers == 1) {
        work();
    } else {
        std::vector<std::jthread> pool;
        for (int w = 0; w < n_workers; ++w) pool.emplace_back(work);
    }
    int code = kExitOk;
    for (int c : codes) code = std::max(code, c);
    return code;
}

void add_run_options(CLI::App* cmd, RunOptions& o) {
    cmd->add_option("--config", o.config, "run configuration (JSON)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--seed", o.seed, "seed override");
    cmd->add_option("--out", o.out, "output directory override");
    cmd->add_flag("--force", o.force, "overwrite existing outputs");
    cmd->add_option("--replicas", o.replicas, "run seeds seed .. seed + replicas - 1")->check(CLI::PositiveNumber);
}

int run_verify(const std::string& suite, bool full, std::uint64_t seed, const std::string& report_path) {
    std::vector<std::string> suites;
    if (suite == "all") {
        suites = suite_names();
    } else {
        suites = {suite};
    }
    VerifyOptions opts;
    opts.full = full;
    opts.seed = seed;
    json report = {{"full", full}, {"seed", seed}, {"suites", json::array()}};
    bool pass = true;
    for (const auto& s : suites) {
        const SuiteReport r = run_suite(s, opts);
        for (const auto& c : r.checks) {
            std::printf("%-4s %-12s %-28s value=%-12.4g threshold=%-10.4g %s\n", c.pass ? "PASS" : "FAIL", s.c_str(),
                        c.name.c_str(), c.value, c.threshold, c.detail.c_str());
        }
        std::fflush(stdout);
        pass = pass && r.pass();
        report["suites"].push_back(r.to_json());
    }
    report["pass"] = pass;
    if (!report_path.empty()) {
        write_json(report_path, report);
    } else {
        std::printf("%s\n", report.dump().c_str());
    }
    return pass ? kExitOk : kExitVerify;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"uvu_lab: value-function uncertainty experiments"};
    app.require_subcommand(1);

    RunOptions gen_opts, train_opts, analyze_opts;
    auto* gen_cmd = app.add_subcommand("gen-data", "write the offline dataset of a run");
    add_run_options(gen_cmd, gen_opts);
    auto* train_cmd = app.add_subcommand("train", "train the configured method on the run dataset");
    add_run_options(train_cmd, train_opts);
    auto* analyze_cmd = app.add_subcommand("analyze", "heatmaps (chain) or task-rejection results (gridworld)");
    add_run_options(analyze_cmd, analyze_opts);

    std::string suite = "all", report_path;
    bool full = false;
    std::uint64_t verify_seed = 0;
    auto* verify_cmd = app.add_subcommand("verify", "run verification suites");
    std::vector<std::string> choices = suite_names();
    choices.push_back("all");
    verify_cmd->add_option("--suite", suite, "kernels | theorem1 | corollaries | reductions | tabular | all")
        ->check(CLI::IsMember(choices));
    verify_cmd->add_flag("--full", full, "acceptance-scale sample counts");
    verify_cmd->add_option("--seed", verify_seed, "seed of the verification instances");
    verify_cmd->add_option("--report", report_path, "write the JSON report here instead of stdout");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitValidation;
    }

    try {
        if (*gen_cmd) return for_each_replica(gen_opts, [&](const RunConfig& rc) { gen_data(rc, gen_opts.force); });
        if (*train_cmd) return for_each_replica(train_opts, [&](const RunConfig& rc) { train(rc, train_opts.force); });
        if (*analyze_cmd) {
            const int code = for_each_replica(analyze_opts, [&](const RunConfig& rc) { analyze(rc, analyze_opts.force); });
            if (code == kExitOk) {
                const RunConfig rc = load_config(analyze_opts, 0);
                if (!is_chain(rc)) aggregate_experiment(rc);
            }
            return code;
        }
        if (*verify_cmd) return run_verify(suite, full, verify_seed, report_path);
    } catch (...) {
        return exit_code_of(std::current_exception());
    }
    return kExitOk;
}
