#include "uvu/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <sstream>

#include "uvu/error.hpp"
#include "uvu/ntk.hpp"
#include "uvu/practical_net.hpp"
#include "uvu/stats.hpp"
#include "uvu/tabular.hpp"
#include "uvu/train.hpp"

namespace uvu {

nlohmann::json CheckResult::to_json() const {
    return {{"name", name}, {"pass", pass}, {"value", value}, {"threshold", threshold},
            {"detail", detail}, {"seconds", seconds}};
}

bool SuiteReport::pass() const {
    return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.pass; });
}

nlohmann::json SuiteReport::to_json() const {
    nlohmann::json cs = nlohmann::json::array();
    for (const auto& c : checks) cs.push_back(c.to_json());
    return {{"suite", suite}, {"pass", pass()}, {"seconds", seconds}, {"checks", cs}};
}

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c);
    return buf;
}

Eigen::MatrixXd gaussian_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
    return m;
}

Eigen::MatrixXd unit_sphere_points(Rng& rng, int dim, int n) {
    return normalize_columns(gaussian_matrix(rng, dim, n));
}

TdProblem linear_problem(const LinearChainInstance& inst, const Eigen::MatrixXd& test) {
    return make_td_problem(inst.model.kernel_fn(), test, inst.points.train, inst.points.next, inst.gamma,
                           inst.points.bootstrap, inst.rewards);
}

MomentAgreement compare_moments(const TdGaussian& g, const SampleMoments& m, double se_floor = 1e-12) {
    MomentAgreement a;
    auto one = [&](double analytic, double sample, double se, double& worst) {
        ++a.n_entries;
        if (se < se_floor) {
            a.max_abs_exact = std::max(a.max_abs_exact, std::abs(analytic - sample));
            return;
        }
        worst = std::max(worst, std::abs(analytic - sample) / se);
    };
    for (Eigen::Index i = 0; i < g.mean.size(); ++i) one(g.mean(i), m.mean(i), m.mean_se(i), a.max_mean_z);
    for (Eigen::Index i = 0; i < g.cov.rows(); ++i) {
        for (Eigen::Index j = 0; j <= i; ++j) one(g.cov(i, j), m.cov(i, j), m.cov_se(i, j), a.max_cov_z);
    }
    return a;
}

int instance_count(const VerifyOptions& o) { return o.full ? 5 : 2; }

}  // namespace

// ---------------------------------------------------------------------------

std::vector<LinearChainInstance> linear_chain_instances(int count, std::uint64_t seed, int n_test) {
    if (count < 1 || n_test < 1) throw ValidationError("linear_chain_instances: count and n_test must be positive");
    static const std::vector<double> z_grid{0.0, 0.5, 1.0};
    static const std::vector<double> z_test{0.0, 0.1, 0.4, 0.6, 0.9, 1.0};
    static const double gammas[] = {0.5, 0.7, 0.8};
    constexpr int kFeatures = 64;
    constexpr double kBandwidth = 0.1;

    std::vector<LinearChainInstance> out;
    out.reserve(static_cast<std::size_t>(count));
    const Rng root(seed);
    for (int k = 0; k < count; ++k) {
        const Rng rng = root.split(static_cast<std::uint64_t>(k));
        const ChainMdp mdp = make_chain(4 + k % 3, gammas[k % 3], 1);
        const Dataset logged = rollout_chain(mdp, ChainPolicy{1.0}, 1, rng.split(0).key());
        const Dataset ds = relabel_for_policies(mdp, logged, z_grid, rng.split(1).key(), 1);
        const Encoder enc = chain_encoder(mdp);
        const TdBatch batch = make_td_batch(ds, enc);

        std::vector<Eigen::VectorXd> cand;
        for (int s = 0; s < mdp.n_states - 1; ++s) {
            for (int a = 0; a < ChainMdp::n_actions; ++a) {
                if (!mdp.action_available(s, a)) continue;
                for (double z : z_test) cand.push_back(enc(mdp.encode_state(s), a, Eigen::VectorXd::Constant(1, z)));
            }
        }
        if (static_cast<int>(cand.size()) < n_test) throw ValidationError("linear_chain_instances: n_test too large");
        Rng pick = rng.split(2);
        for (int i = 0; i < n_test; ++i) {
            const auto j = static_cast<std::size_t>(i) + pick.below(cand.size() - static_cast<std::size_t>(i));
            std::swap(cand[static_cast<std::size_t>(i)], cand[j]);
        }
        Eigen::MatrixXd test(batch.x.rows(), n_test);
        for (int i = 0; i < n_test; ++i) test.col(i) = cand[static_cast<std::size_t>(i)];

        Rng rr = rng.split(3);
        Eigen::VectorXd rewards(batch.size());
        for (Eigen::Index i = 0; i < rewards.size(); ++i) rewards(i) = rr.normal();

        TdPoints pts{test, batch.x, batch.x_next, batch.bootstrap};
        bool found = false;
        for (std::uint64_t attempt = 0; attempt < 100 && !found; ++attempt) {
            const std::uint64_t fseed = rng.split(4 + attempt).key();
            LinearFeatureModel model = LinearFeatureModel::random_fourier(static_cast<int>(batch.x.rows()), kFeatures, 1, fseed, kBandwidth);
            const StabilityReport st = stability_check(model.kernel(pts.train, pts.train).theta,
                                                       model.kernel(pts.next, pts.train).theta,
                                                       Eigen::VectorXd(mdp.discount * pts.bootstrap));
            if (!st.is_pd) continue;
            try {
                (void)linear_oracle_solve(model, pts, mdp.discount, rewards, 2, 0);
            } catch (const SingularSystemError&) {
                continue;
            }
            out.push_back(LinearChainInstance{mdp, std::move(model), pts, mdp.discount, rewards, fseed});
            found = true;
        }
        if (!found) throw ValidationError("linear_chain_instances: no stable feature draw for instance " + std::to_string(k));
    }
    return out;
}

// ---------------------------------------------------------------------------
// theorem1

CheckResult check_theorem1(const VerifyOptions& opts) {
    const auto t0 = Clock::now();
    const long seeds = opts.full ? 100000 : 10000;
    CheckResult r{"theorem1_oracle", true, 0.0, 3.0, "", 0.0};
    const auto insts = linear_chain_instances(instance_count(opts), opts.seed);
    std::ostringstream detail;
    double worst_time = 0.0;
    for (std::size_t k = 0; k < insts.size(); ++k) {
        const auto ti = Clock::now();
        const auto& inst = insts[k];
        const TdGaussian g = td_posterior(linear_problem(inst, inst.points.test));
        const auto res = linear_oracle_solve(inst.model, inst.points, inst.gamma, inst.rewards, seeds, opts.seed + 17 * k);
        const MomentAgreement a = compare_moments(g, res.moments);
        const double secs = since(ti);
        worst_time = std::max(worst_time, secs);
        const double z = std::max(a.max_mean_z, a.max_cov_z);
        r.value = std::max(r.value, z);
        if (z > 3.0 || a.max_abs_exact > 1e-8 || secs > 120.0) r.pass = false;
        detail << "instance " << k << ": N_D=" << inst.points.train.cols() << " gamma=" << inst.gamma
               << " mean_z=" << a.max_mean_z << " cov_z=" << a.max_cov_z << " exact_gap=" << a.max_abs_exact
               << " t=" << secs << "s; ";
    }
    detail << "seeds=" << seeds << " worst_time=" << worst_time << "s";
    r.detail = detail.str();
    r.seconds = since(t0);
    return r;
}

CheckResult check_block_map(const VerifyOptions& opts) {
    const auto t0 = Clock::now();
    CheckResult r{"block_map_redundancy", true, 0.0, 1e-10, "", 0.0};
    for (const auto& inst : linear_chain_instances(instance_count(opts), opts.seed)) {
        const TdProblem p = linear_problem(inst, inst.points.test);
        const double gap = (block_affine_posterior(p).test_cov() - td_posterior(p).cov).cwiseAbs().maxCoeff();
        r.value = std::max(r.value, gap);
    }
    r.pass = r.value < r.threshold;
    r.detail = "max |top-left(A K A^T) - closed-form TD covariance|";
    r.seconds = since(t0);
    return r;
}

CheckResult check_gershgorin(const VerifyOptions& opts) {
    const auto t0 = Clock::now();
    CheckResult r{"gershgorin_bound", true, -1e300, 0.0, "", 0.0};
    Rng rng = Rng(opts.seed).split(31);
    MlpSpec spec;
    spec.input_dim = 5;
    spec.widths = {64, 64};
    const KernelFn k = mlp_kernel_fn(spec, KernelOptions{false});
    int violations = 0;
    for (int i = 0; i < 100; ++i) {
        const int n = 3 + static_cast<int>(rng.below(10));
        const Eigen::MatrixXd x = gaussian_matrix(rng, 5, n);
        const Eigen::MatrixXd xn = gaussian_matrix(rng, 5, n);
        const double gamma = rng.uniform();
        const StabilityReport s = stability_check(k(x, x).theta, k(xn, x).theta, gamma);
        const double slack = s.gershgorin_lower_bound - s.min_eigenvalue;
        r.value = std::max(r.value, slack);
        if (slack > 1e-12 * std::max(1.0, std::abs(s.min_eigenvalue))) ++violations;
    }
    r.pass = violations == 0;
    r.detail = "max(gershgorin - min eigenvalue) over 100 instances; violations=" + std::to_string(violations);
    r.seconds = since(t0);
    return r;
}

CheckResult check_divergence_abort(const VerifyOptions& opts) {
    const auto t0 = Clock::now();
    CheckResult r{"divergence_abort", false, 0.0, 0.0, "", 0.0};
    MlpSpec spec;
    spec.input_dim = 4;
    spec.widths = {256};
    auto net = std::make_shared<Mlp>(spec);
    Rng rng = Rng(opts.seed).split(37);
    const Eigen::MatrixXd x = unit_sphere_points(rng, 4, 4);

    // x' = 2x: a homogeneous relu net sees f(x') = 2 f(x), so gamma > 1/2 flips Delta
    auto run = [&](double gamma, bool& pd, bool& diverged, double& min_eig) {
        TdBatch b;
        b.x = x;
        b.x_next = 2.0 * x;
        b.bootstrap = Eigen::VectorXd::Ones(4);
        b.rewards = Eigen::VectorXd::Zero(4);
        const KernelFn k = mlp_kernel_fn(spec, KernelOptions{false});
        const StabilityReport s = stability_check(k(b.x, b.x).theta, k(b.x_next, b.x).theta, gamma);
        pd = s.is_pd;
        min_eig = s.min_eigenvalue;
        TrainConfig cfg;
        cfg.learning_rate = 0.1;
        cfg.n_steps = 20000;
        cfg.discount = gamma;
        cfg.seed = opts.seed;
        Eigen::VectorXd params = init_params(spec, opts.seed).values();
        diverged = false;
        try {
            (void)td_train(*net, params, b, b.rewards.transpose(), cfg);
        } catch (const DivergenceError&) {
            diverged = true;
        }
    };
    bool pd_hot = true, div_hot = false, pd_cold = false, div_cold = true;
    double eig_hot = 0.0, eig_cold = 0.0;
    run(0.99, pd_hot, div_hot, eig_hot);
    run(0.3, pd_cold, div_cold, eig_cold);
    r.pass = !pd_hot && div_hot && pd_cold && !div_cold;
    r.value = eig_hot;
    r.detail = fmt("gamma=0.99: min eig %.4g, ", eig_hot) + (pd_hot ? "PD" : "not PD") +
               (div_hot ? ", training aborted" : ", training did not abort") + fmt("; control gamma=0.3: min eig %.4g, ", eig_cold) +
               (pd_cold ? "PD" : "not PD") + (div_cold ? ", aborted" : ", stable");
    r.seconds = since(t0);
    return r;
}

// ---------------------------------------------------------------------------
// corollaries

CheckResult check_corollary1(const VerifyOptions& opts) {
    const auto t0 = Clock::now();
    const long seeds = opts.full ? 10000 : 2000;
    CheckResult r{"corollary1_mean_error", true, 0.0, 3.0, "", 0.0};
    const auto insts = linear_chain_instances(instance_count(opts), opts.seed);
    for (std::size_t k = 0; k < insts.size(); ++k) {
        const auto& inst = insts[k];
        const TdGaussian g = td_posterior(linear_problem(inst, inst.points.test));
        const Eigen::MatrixXd eps =
            linear_oracle_uvu_errors(inst.model, inst.points, inst.gamma, 1, seeds, opts.seed + 101 * k)[0];
        const Eigen::MatrixXd half = 0.5 * eps.array().square();
        const Eigen::VectorXd mean = half.rowwise().mean();
        for (Eigen::Index i = 0; i < mean.size(); ++i) {
            const double var = (half.row(i).array() - mean(i)).square().sum() / static_cast<double>(seeds - 1);
            const double se = std::sqrt(var / static_cast<double>(seeds));
            const double z = se > 1e-12 ? std::abs(mean(i) - g.cov(i, i)) / se : std::abs(mean(i) - g.cov(i, i)) * 1e8;
            r.value = std::max(r.value, z);
        }
    }
    r.pass = r.value <= r.threshold;
    r.detail = "max |mean(eps^2/2) - diag(cov)| / SE over " + std::to_string(insts.size()) +
               " instances x 10 test points, seeds=" + std::to_string(seeds);
    r.seconds = since(t0);
    return r;
}

CheckResult check_corollary2(const VerifyOptions& opts) {
    const auto t0 = Clock::now();
    constexpr long kSeeds = 2000;
    CheckResult r{"corollary2_chi_square", true, 1.0, 0.01, "", 0.0};
    const auto insts = linear_chain_instances(1, opts.seed);
    const auto& inst = insts[0];
    const TdGaussian g = td_posterior(linear_problem(inst, inst.points.test));
    Eigen::Index j = 0;
    const double sigma2 = g.cov.diagonal().maxCoeff(&j);
    const auto eps = linear_oracle_uvu_errors(inst.model, inst.points, inst.gamma, 16, kSeeds, opts.seed + 7);
    Rng rng = Rng(opts.seed).split(41);
    std::ostringstream detail;
    for (int m : {1, 4, 16}) {
        std::vector<double> samples(kSeeds);
        for (long s = 0; s < kSeeds; ++s) {
            double acc = 0.0;
            for (int h = 0; h < m; ++h) acc += eps[static_cast<std::size_t>(h)](j, s) * eps[static_cast<std::size_t>(h)](j, s);
            samples[static_cast<std::size_t>(s)] = acc / (2.0 * m);
        }
        const ScaledChiSquared law{sigma2 / m, m};
        const KsResult ks = ks_test(samples, law, 0.01);
        // power: chi^2(M + 5) draws labelled as chi^2(M)
        std::chi_squared_distribution<double> wrong(m + 5);
        std::vector<double> bad(kSeeds);
        for (auto& v : bad) v = law.scale * wrong(rng);
        const KsResult power = ks_test(bad, law, 0.01);
        if (!ks.pass || power.pass) r.pass = false;
        r.value = std::min(r.value, ks.p_value);
        detail << "M=" << m << ": p=" << ks.p_value << (ks.pass ? " pass" : " FAIL") << ", mislabelled p=" << power.p_value
               << (power.pass ? " (not rejected)" : " (rejected)") << "; ";
    }
    r.detail = detail.str();
    r.seconds = since(t0);
    return r;
}

// ---------------------------------------------------------------------------
// reductions

CheckResult check_supervised_reduction(const VerifyOptions& opts) {
    const auto t0 = Clock::now();
    CheckResult r{"gamma0_supervised_posterior", true, 0.0, 1e-12, "", 0.0};
    Rng rng = Rng(opts.seed).split(43);
    for (int i = 0; i < 20; ++i) {
        MlpSpec spec;
        spec.input_dim = 4;
        spec.widths = std::vector<int>(1 + i % 3, 64);
        spec.nonlinearity = i % 2 == 0 ? Nonlinearity::relu : Nonlinearity::erf;
        spec.sigma_b = 0.1 * (i % 4);
        const int n = 4 + i % 6;
        const Eigen::MatrixXd x = gaussian_matrix(rng, 4, n);
        const Eigen::MatrixXd xn = gaussian_matrix(rng, 4, n);
        const Eigen::MatrixXd xt = gaussian_matrix(rng, 4, 5);
        Eigen::VectorXd y(n);
        for (int k = 0; k < n; ++k) y(k) = rng.normal();
        const TdProblem p = make_td_problem(mlp_kernel_fn(spec), xt, x, xn, 0.0, Eigen::VectorXd::Ones(n), y);
        using S = TdProblem::Set;
        const TdGaussian a = td_posterior(p);
        const TdGaussian b = supervised_posterior(p.theta(S::train, S::train), p.theta(S::test, S::train),
                                                  p.kappa(S::train, S::train), p.kappa(S::test, S::train),
                                                  p.kappa(S::test, S::test), y);
        r.value = std::max({r.value, (a.mean - b.mean).cwiseAbs().maxCoeff(), (a.cov - b.cov).cwiseAbs().maxCoeff()});
    }
    r.pass = r.value < r.threshold;
    r.detail = "max entrywise gap over 20 instances";
    r.seconds = since(t0);
    return r;
}

CheckResult check_uvu_rnd_identity(const VerifyOptions& opts) {
    const auto t0 = Clock::now();
    CheckResult r{"gamma0_uvu_equals_rnd", true, 0.0, 0.0, "", 0.0};
    const ChainMdp mdp = make_chain(5, 0.0, 2);
    const Dataset ds = relabel_for_policies(mdp, rollout_chain(mdp, ChainPolicy{1.0}, 1, opts.seed),
                                            {0.0, 0.5, 1.0}, opts.seed + 1, 1);
    const TdBatch batch = make_td_batch(ds, chain_encoder(mdp));
    MlpSpec spec;
    spec.input_dim = chain_input_dim(mdp);
    spec.widths = {32};
    spec.n_heads = 3;
    auto net = std::make_shared<Mlp>(spec);
    int runs = 0;
    for (bool full : {true, false}) {
        for (long steps : {1L, 7L, 60L}) {
            TrainConfig cfg;
            cfg.learning_rate = 0.2;
            cfg.discount = 0.0;
            cfg.n_steps = steps;
            cfg.full_batch = full;
            cfg.batch_size = 4;
            cfg.seed = opts.seed + 3;
            cfg.convergence_tol = 0.0;
            UvuModel u = make_uvu_model(net, 0.0, opts.seed + 5);
            RndModel d = make_rnd_model(net, opts.seed + 5);
            (void)uvu_train(u, batch, cfg);
            (void)rnd_train(d, batch, cfg);
            r.value = std::max(r.value, (u.online.values() - d.predictor.values()).cwiseAbs().maxCoeff());
            r.value = std::max(r.value, (u.target.values() - d.target.values()).cwiseAbs().maxCoeff());
            ++runs;
        }
    }
    r.pass = r.value == 0.0;
    r.detail = "max |vartheta - rnd predictor| after 1/7/60 steps, full batch and minibatch (" + std::to_string(runs) + " runs)";
    r.seconds = since(t0);
    return r;
}

// ---------------------------------------------------------------------------
// kernels

CheckResult check_kernel_recursion(const VerifyOptions& opts) {
    const auto t0 = Clock::now();
    CheckResult r{"kernel_recursion", true, 0.0, 1e-12, "", 0.0};
    Rng rng = Rng(opts.seed).split(47);
    double min_eig = 1e300;
    for (Nonlinearity f : {Nonlinearity::relu, Nonlinearity::erf}) {
        MlpSpec spec;
        spec.input_dim = 6;
        spec.widths = {64, 64, 64};
        spec.nonlinearity = f;
        spec.sigma_b = 0.2;
        const Eigen::MatrixXd xs = gaussian_matrix(rng, 6, 8);
        const auto layers = kernel_layers(spec, xs, xs);
        r.value = std::max(r.value, (layers[0].theta - layers[0].kappa).cwiseAbs().maxCoeff());
        for (std::size_t l = 1; l < layers.size(); ++l) {
            const Eigen::MatrixXd gap =
                layers[l].theta - layers[l - 1].theta.cwiseProduct(layers[l - 1].kappa_dot) - layers[l].kappa;
            r.value = std::max(r.value, gap.cwiseAbs().maxCoeff());
        }
        const KernelPair kp = ntk_kernel(spec, xs, xs);
        for (const Eigen::MatrixXd* m : {&kp.theta, &kp.kappa}) {
            r.value = std::max(r.value, (*m - m->transpose()).cwiseAbs().maxCoeff());
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (*m + m->transpose()), Eigen::EigenvaluesOnly);
            min_eig = std::min(min_eig, es.eigenvalues().minCoeff());
        }
    }
    r.pass = r.value < r.threshold && min_eig >= -1e-10;
    r.detail = fmt("max recursion/symmetry gap; min eigenvalue %.3g", min_eig);
    r.seconds = since(t0);
    return r;
}

CheckResult check_empirical_kernels(const VerifyOptions& opts) {
    const auto t0 = Clock::now();
    const int width = opts.full ? 4096 : 1024;
    CheckResult r{"empirical_vs_analytic_kernels", true, 0.0, opts.full ? 0.05 : 0.15, "", 0.0};
    Rng rng = Rng(opts.seed).split(53);
    const Eigen::MatrixXd xs = unit_sphere_points(rng, 8, 10);
    std::ostringstream detail;
    for (int depth : {1, 2, 3}) {
        MlpSpec spec;
        spec.input_dim = 8;
        spec.widths = std::vector<int>(static_cast<std::size_t>(depth), width);
        // keeps every entry away from zero so the relative error is meaningful
        spec.sigma_b = 0.5;
        const Mlp net(spec);
        const Eigen::VectorXd params = init_params(spec, opts.seed + static_cast<std::uint64_t>(depth)).values();
        const KernelPair an = ntk_kernel(spec, xs, xs);
        const double e_ntk = ((net.empirical_ntk(params, xs) - an.theta).array() / an.theta.array().abs()).abs().maxCoeff();
        const double e_nngp = ((net.empirical_nngp(params, xs) - an.kappa).array() / an.kappa.array().abs()).abs().maxCoeff();
        r.value = std::max({r.value, e_ntk, e_nngp});
        detail << "L=" << depth << ": ntk " << e_ntk << ", nngp " << e_nngp << "; ";
    }
    r.pass = r.value <= r.threshold;
    detail << "width=" << width << ", max relative entrywise error";
    r.detail = detail.str();
    r.seconds = since(t0);
    return r;
}

CheckResult check_gaussian_expectations(const VerifyOptions& opts) {
    const auto t0 = Clock::now();
    const long n = opts.full ? 1000000 : 100000;
    CheckResult r{"gaussian_expectation_mc", true, 0.0, opts.full ? 0.005 : 0.02, "", 0.0};
    Rng rng = Rng(opts.seed).split(59);
    struct Triple {
        double k11, k22, k12;
    };
    const Triple triples[] = {{1.0, 1.0, 0.5}, {1.5, 0.8, 0.95}};
    std::ostringstream detail;
    for (Nonlinearity f : {Nonlinearity::relu, Nonlinearity::erf}) {
        for (const auto& t : triples) {
            const double a = std::sqrt(t.k11);
            const double c = t.k12 / a;
            const double d = std::sqrt(t.k22 - c * c);
            double pp = 0.0, dd = 0.0;
            for (long i = 0; i < n; ++i) {
                const double e1 = rng.normal();
                const double e2 = rng.normal();
                const double u = a * e1;
                const double v = c * e1 + d * e2;
                pp += activate(f, u) * activate(f, v);
                dd += activate_grad(f, u) * activate_grad(f, v);
            }
            const GaussianExpectation e = gaussian_expectation(f, t.k11, t.k22, t.k12);
            const double rp = std::abs(pp / n - e.phi_phi) / std::abs(e.phi_phi);
            const double rd = std::abs(dd / n - e.dphi_dphi) / std::abs(e.dphi_dphi);
            r.value = std::max({r.value, rp, rd});
            detail << to_string(f) << "(" << t.k11 << "," << t.k22 << "," << t.k12 << "): " << rp << ", " << rd << "; ";
        }
    }
    r.pass = r.value <= r.threshold;
    detail << n << " samples, relative errors of E[phi phi'] and E[phi' phi']";
    r.detail = detail.str();
    r.seconds = since(t0);
    return r;
}

CheckResult check_gradients(const VerifyOptions& opts) {
    const auto t0 = Clock::now();
    CheckResult r{"gradient_check", true, 0.0, 1e-4, "", 0.0};
    constexpr double h = 1e-5;
    constexpr int kCoords = 100;
    auto rel = [](double fd, double an) { return std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6}); };
    Rng rng = Rng(opts.seed).split(61);

    MlpSpec spec;
    spec.input_dim = 5;
    spec.widths = {16, 16};
    spec.n_heads = 2;
    spec.sigma_b = 0.5;
    const Mlp mlp(spec);
    const Eigen::VectorXd p = init_params(spec, opts.seed).values();
    const Eigen::MatrixXd x = gaussian_matrix(rng, 5, 3);
    const Eigen::MatrixXd cot = gaussian_matrix(rng, 2, 3);
    const Eigen::VectorXd g = mlp.vjp(p, x, cot);
    double worst_mlp = 0.0;
    for (int i = 0; i < kCoords; ++i) {
        const auto k = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(p.size())));
        Eigen::VectorXd pp = p, pm = p;
        pp(k) += h;
        pm(k) -= h;
        const double fd = (mlp.forward(pp, x).cwiseProduct(cot).sum() - mlp.forward(pm, x).cwiseProduct(cot).sum()) / (2 * h);
        worst_mlp = std::max(worst_mlp, rel(fd, g(k)));
    }

    PracticalArchSpec arch;
    arch.encoder_width = 16;
    arch.trunk_depth = 2;
    arch.trunk_width = 16;
    arch.n_heads = 2;
    const PracticalNet<double> pnet(arch);
    Rng ri = rng.split(1);
    const Eigen::VectorXd q = pnet.init(ri);
    Eigen::MatrixXd s(arch.state_dim, 3), z = Eigen::MatrixXd::Zero(arch.task_dim, 3);
    for (Eigen::Index i = 0; i < s.size(); ++i) s.data()[i] = static_cast<double>(rng.below(5));
    for (int j = 0; j < 3; ++j) z(static_cast<Eigen::Index>(rng.below(6)), j) = 1.0;
    const Eigen::MatrixXd pcot = gaussian_matrix(rng, arch.n_outputs(), 3);
    PracticalNet<double>::Cache cache;
    (void)pnet.forward(q, s, z, cache);
    Eigen::VectorXd pg = Eigen::VectorXd::Zero(q.size());
    pnet.backward(q, cache, pcot, pg);
    double worst_practical = 0.0;
    for (int i = 0; i < kCoords; ++i) {
        const auto k = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(q.size())));
        Eigen::VectorXd qp = q, qm = q;
        qp(k) += h;
        qm(k) -= h;
        const double fd =
            (pnet.forward(qp, s, z).cwiseProduct(pcot).sum() - pnet.forward(qm, s, z).cwiseProduct(pcot).sum()) / (2 * h);
        worst_practical = std::max(worst_practical, rel(fd, pg(k)));
    }
    r.value = std::max(worst_mlp, worst_practical);
    r.pass = r.value < r.threshold;
    r.detail = fmt("mlp %.3g, practical net %.3g (100 coordinates each)", worst_mlp, worst_practical);
    r.seconds = since(t0);
    return r;
}

// ---------------------------------------------------------------------------
// tabular

CheckResult check_tabular(const VerifyOptions& opts) {
    const auto t0 = Clock::now();
    CheckResult r{"tabular_chain", true, 0.0, 1e-8, "", 0.0};
    const ChainMdp mdp = make_chain(6, 0.7, 2);
    const Dataset ds = rollout_chain(mdp, ChainPolicy{1.0}, 1, opts.seed);
    constexpr int kHeads = 4;

    // full coverage: the data policy itself
    auto heads = init_tabular(mdp, opts.seed + 1, kHeads);
    double max_gap = 0.0;
    bool converged = true;
    for (auto& h : heads) {
        Rng rng(h.rng_seed);
        converged = converged && tabular_sweep(h, mdp, ds, ChainPolicy{1.0}, 10000, rng).converged;
        for (const auto& t : ds.transitions) {
            const int s = mdp.decode_state(t.s);
            max_gap = std::max(max_gap, std::abs(h.u(s, t.a) - h.g(s, t.a)));
        }
    }

    // truncated: always "b" at the divergence state
    auto trunc = init_tabular(mdp, opts.seed + 1, kHeads);
    std::vector<double> g_entries;
    for (auto& h : trunc) {
        Rng rng(h.rng_seed);
        (void)tabular_sweep(h, mdp, ds, ChainPolicy{0.0}, 10000, rng);
        for (Eigen::Index i = 0; i < h.g.values.size(); ++i) g_entries.push_back(h.g.values.data()[i]);
    }
    const double var_g = sample_variance(g_entries);
    double min_err = 1e300;
    for (int s = 0; s < mdp.divergence_state; ++s) {
        double e = 0.0;
        for (const auto& h : trunc) e += tabular_error(h, s, chain_action::a);
        min_err = std::min(min_err, e / kHeads);
    }
    const bool truncated_ok = min_err > 0.01 * var_g;
    r.value = max_gap;
    r.pass = converged && max_gap < 1e-8 && truncated_ok;
    r.detail = fmt("full coverage max|u-g| %.3g; truncated min mean eps^2 before divergence %.4g vs 0.01 Var(g) = %.4g",
                   max_gap, min_err, 0.01 * var_g) +
               (converged ? "" : "; sweeps did not converge");
    r.seconds = since(t0);
    return r;
}

// ---------------------------------------------------------------------------

const std::vector<std::string>& suite_names() {
    static const std::vector<std::string> names{"kernels", "theorem1", "corollaries", "reductions", "tabular"};
    return names;
}

SuiteReport run_suite(const std::string& suite, const VerifyOptions& opts) {
    using Check = CheckResult (*)(const VerifyOptions&);
    std::vector<Check> checks;
    if (suite == "kernels") {
        checks = {check_kernel_recursion, check_empirical_kernels, check_gaussian_expectations, check_gradients};
    } else if (suite == "theorem1") {
        checks = {check_theorem1, check_block_map, check_gershgorin, check_divergence_abort};
    } else if (suite == "corollaries") {
        checks = {check_corollary1, check_corollary2};
    } else if (suite == "reductions") {
        checks = {check_supervised_reduction, check_uvu_rnd_identity};
    } else if (suite == "tabular") {
        checks = {check_tabular};
    } else {
        throw ValidationError("unknown verification suite '" + suite + "'");
    }
    const auto t0 = Clock::now();
    SuiteReport rep;
    rep.suite = suite;
    for (Check c : checks) {
        try {
            rep.checks.push_back(c(opts));
        } catch (const std::exception& e) {
            rep.checks.push_back(CheckResult{"error", false, 0.0, 0.0, e.what(), 0.0});
        }
    }
    rep.seconds = since(t0);
    return rep;
}

}  // namespace uvu
