#include "uvu/train.hpp"

#include <cmath>
#include <cstdio>
#include <optional>

#include "uvu/csv.hpp"
#include "uvu/error.hpp"

namespace uvu {

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw ValidationError("TrainConfig: learning_rate must be positive");
    if (!full_batch && batch_size < 1) throw ValidationError("TrainConfig: batch_size must be >= 1 without full_batch");
    if (n_steps < 0) throw ValidationError("TrainConfig: n_steps must be >= 0");
    if (!(discount >= 0.0 && discount < 1.0)) throw ValidationError("TrainConfig: discount must lie in [0, 1)");
    if (target_update_interval < 0) throw ValidationError("TrainConfig: target_update_interval must be >= 0");
    if (!(target_polyak > 0.0 && target_polyak <= 1.0)) throw ValidationError("TrainConfig: target_polyak must lie in (0, 1]");
    if (convergence_tol < 0.0) throw ValidationError("TrainConfig: convergence_tol must be >= 0");
    if (!(divergence_threshold > 0.0)) throw ValidationError("TrainConfig: divergence_threshold must be positive");
    if (log_every < 1) throw ValidationError("TrainConfig: log_every must be >= 1");
}

nlohmann::json TrainConfig::to_json() const {
    return {{"learning_rate", learning_rate},
            {"full_batch", full_batch},
            {"batch_size", batch_size},
            {"n_steps", n_steps},
            {"discount", discount},
            {"target_update_interval", target_update_interval},
            {"target_polyak", target_polyak},
            {"seed", seed},
            {"convergence_tol", convergence_tol},
            {"divergence_threshold", divergence_threshold},
            {"metrics_path", metrics_path},
            {"log_every", log_every}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
    TrainConfig c;
    const auto known = c.to_json();
    for (const auto& [k, v] : j.items()) {
        if (!known.contains(k)) throw ValidationError("TrainConfig: unknown key '" + k + "'");
    }
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.full_batch = j.value("full_batch", c.full_batch);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.n_steps = j.value("n_steps", c.n_steps);
    c.discount = j.value("discount", c.discount);
    c.target_update_interval = j.value("target_update_interval", c.target_update_interval);
    c.target_polyak = j.value("target_polyak", c.target_polyak);
    c.seed = j.value("seed", c.seed);
    c.convergence_tol = j.value("convergence_tol", c.convergence_tol);
    c.divergence_threshold = j.value("divergence_threshold", c.divergence_threshold);
    c.metrics_path = j.value("metrics_path", c.metrics_path);
    c.log_every = j.value("log_every", c.log_every);
    c.validate();
    return c;
}

// ---------------------------------------------------------------------------

namespace {

Eigen::MatrixXd take_cols(const Eigen::MatrixXd& m, const std::vector<Eigen::Index>* idx) {
    if (idx == nullptr) return m;
    Eigen::MatrixXd out(m.rows(), static_cast<Eigen::Index>(idx->size()));
    for (std::size_t j = 0; j < idx->size(); ++j) out.col(static_cast<Eigen::Index>(j)) = m.col((*idx)[j]);
    return out;
}

Eigen::VectorXd take(const Eigen::VectorXd& v, const std::vector<Eigen::Index>* idx) {
    if (idx == nullptr) return v;
    Eigen::VectorXd out(static_cast<Eigen::Index>(idx->size()));
    for (std::size_t j = 0; j < idx->size(); ++j) out(static_cast<Eigen::Index>(j)) = v((*idx)[j]);
    return out;
}

// gamma_i * next_values + rewards; exact copy of `rewards` when gamma = 0.
Eigen::MatrixXd bootstrap_targets(const Eigen::MatrixXd& next_values, const Eigen::VectorXd& bootstrap, double gamma,
                                  const Eigen::MatrixXd& rewards) {
    const Eigen::VectorXd g = gamma * bootstrap;
    Eigen::MatrixXd y = rewards;
    y += next_values * g.asDiagonal();
    return y;
}

// Regression targets for a (mini)batch given the bootstrap parameters.
using TargetFn = std::function<Eigen::MatrixXd(const std::vector<Eigen::Index>* idx, const Eigen::VectorXd& boot)>;

std::string divergence_message(long step, double loss) {
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "training diverged at step %ld (loss %.3e); Delta = Theta_XX - gamma Theta_X'X is probably "
                  "not positive definite, see stability_check",
                  step, loss);
    return buf;
}

TrainResult fit_loop(const FunctionModel& model, Eigen::VectorXd& params, const Eigen::MatrixXd& x,
                     const TrainConfig& cfg, const TargetFn& targets) {
    cfg.validate();
    if (x.cols() < 1) throw ValidationError("training requires a non-empty dataset");
    if (params.size() != model.n_params()) throw ValidationError("training: parameter vector has wrong length");
    Rng rng(cfg.seed);
    Eigen::VectorXd target_params = params;
    std::optional<CsvWriter> metrics;
    if (!cfg.metrics_path.empty()) metrics.emplace(cfg.metrics_path, std::vector<std::string>{"step", "loss", "residual_inf"});

    TrainResult res;
    std::vector<Eigen::Index> idx;
    const Eigen::Index n = x.cols();
    for (long step = 0; step < cfg.n_steps; ++step) {
        const std::vector<Eigen::Index>* sel = nullptr;
        if (!cfg.full_batch) {
            idx.resize(static_cast<std::size_t>(cfg.batch_size));
            for (auto& i : idx) i = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
            sel = &idx;
        }
        const Eigen::VectorXd& boot = cfg.target_update_interval > 0 ? target_params : params;
        const Eigen::MatrixXd y = targets(sel, boot);
        const StepResult s = regression_step(model, params, sel ? take_cols(x, sel) : x, y, cfg.learning_rate);
        res.steps = step + 1;
        res.final_loss = s.loss;
        res.residual_inf = s.residual_inf;
        if (!std::isfinite(s.loss) || s.loss > cfg.divergence_threshold) {
            throw DivergenceError(divergence_message(step, s.loss), step, s.loss);
        }
        if (cfg.target_update_interval > 0 && (step + 1) % cfg.target_update_interval == 0) {
            target_params = cfg.target_polyak * params + (1.0 - cfg.target_polyak) * target_params;
        }
        if (metrics && (step % cfg.log_every == 0 || step + 1 == cfg.n_steps)) {
            metrics->row({std::to_string(step), CsvWriter::num(s.loss), CsvWriter::num(s.residual_inf)});
        }
        if (cfg.full_batch && s.residual_inf < cfg.convergence_tol) {
            res.converged = true;
            break;
        }
    }
    return res;
}

}  // namespace

TdBatch TdBatch::subset(const std::vector<Eigen::Index>& idx) const {
    TdBatch b;
    b.x = take_cols(x, &idx);
    b.x_next = take_cols(x_next, &idx);
    b.bootstrap = take(bootstrap, &idx);
    b.rewards = take(rewards, &idx);
    for (const auto& m : x_next_actions) b.x_next_actions.push_back(take_cols(m, &idx));
    return b;
}

Encoder chain_encoder(const ChainMdp& mdp) {
    const int ns = mdp.n_table_states();
    return [ns](const Eigen::VectorXd& s, int a, const Eigen::VectorXd& z) {
        if (s.size() != ns) throw ValidationError("chain_encoder: state encoding has the wrong length");
        Eigen::VectorXd x = Eigen::VectorXd::Zero(ns + ChainMdp::n_actions + z.size());
        x.head(ns) = s;
        x(ns + a) = 1.0;
        x.tail(z.size()) = z;
        return x;
    };
}

int chain_input_dim(const ChainMdp& mdp) { return mdp.n_table_states() + ChainMdp::n_actions + 1; }

TdBatch make_td_batch(const Dataset& ds, const Encoder& enc, int n_actions) {
    if (ds.empty()) throw ValidationError("make_td_batch: empty dataset");
    const auto n = static_cast<Eigen::Index>(ds.size());
    TdBatch b;
    const Eigen::VectorXd first = enc(ds.transitions[0].s, ds.transitions[0].a, ds.transitions[0].z);
    b.x.resize(first.size(), n);
    b.x_next.resize(first.size(), n);
    b.bootstrap.resize(n);
    b.rewards.resize(n);
    b.x_next_actions.assign(static_cast<std::size_t>(n_actions), Eigen::MatrixXd(first.size(), n));
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& t = ds.transitions[static_cast<std::size_t>(i)];
        b.x.col(i) = enc(t.s, t.a, t.z);
        b.x_next.col(i) = enc(t.s_next, t.terminal() ? 0 : t.a_next, t.z);
        b.bootstrap(i) = t.terminal() ? 0.0 : 1.0;
        b.rewards(i) = t.r;
        for (int a = 0; a < n_actions; ++a) b.x_next_actions[static_cast<std::size_t>(a)].col(i) = enc(t.s_next, a, t.z);
    }
    return b;
}

StepResult regression_step(const FunctionModel& model, Eigen::VectorXd& params, const Eigen::MatrixXd& x,
                           const Eigen::MatrixXd& targets, double learning_rate) {
    const Eigen::MatrixXd out = model.forward(params, x);
    if (out.rows() != targets.rows() || out.cols() != targets.cols()) {
        throw ValidationError("regression_step: target shape mismatch");
    }
    const Eigen::MatrixXd delta = targets - out;
    const double n = static_cast<double>(x.cols());
    StepResult r;
    r.loss = 0.5 * delta.squaredNorm() / n;
    r.residual_inf = delta.size() > 0 ? delta.cwiseAbs().maxCoeff() : 0.0;
    const Eigen::MatrixXd cot = -delta / n;
    params -= learning_rate * model.vjp(params, x, cot);
    return r;
}

Eigen::VectorXd td_gradient(const FunctionModel& model, const Eigen::VectorXd& params, const TdBatch& batch,
                            const Eigen::MatrixXd& rewards, const Eigen::VectorXd& bootstrap_params, double gamma,
                            StepResult* info) {
    const Eigen::MatrixXd y =
        bootstrap_targets(model.forward(bootstrap_params, batch.x_next), batch.bootstrap, gamma, rewards);
    const Eigen::MatrixXd delta = y - model.forward(params, batch.x);
    const double n = static_cast<double>(batch.size());
    if (info != nullptr) {
        info->loss = 0.5 * delta.squaredNorm() / n;
        info->residual_inf = delta.cwiseAbs().maxCoeff();
    }
    return model.vjp(params, batch.x, -delta / n);
}

StepResult td_step(const FunctionModel& model, Eigen::VectorXd& params, const TdBatch& batch,
                   const Eigen::MatrixXd& rewards, const Eigen::VectorXd& bootstrap_params, const TrainConfig& cfg) {
    if (batch.size() < 1) throw ValidationError("td_step: empty batch");
    const Eigen::MatrixXd y =
        bootstrap_targets(model.forward(bootstrap_params, batch.x_next), batch.bootstrap, cfg.discount, rewards);
    const StepResult r = regression_step(model, params, batch.x, y, cfg.learning_rate);
    if (!std::isfinite(r.loss)) throw DivergenceError(divergence_message(0, r.loss), 0, r.loss);
    return r;
}

TrainResult td_train(const FunctionModel& model, Eigen::VectorXd& params, const TdBatch& batch,
                     const Eigen::MatrixXd& rewards, const TrainConfig& cfg) {
    if (rewards.rows() != model.n_outputs() || rewards.cols() != batch.size()) {
        throw ValidationError("td_train: rewards must be n_outputs x N");
    }
    return fit_loop(model, params, batch.x, cfg, [&](const std::vector<Eigen::Index>* idx, const Eigen::VectorXd& boot) {
        return bootstrap_targets(model.forward(boot, take_cols(batch.x_next, idx)), take(batch.bootstrap, idx),
                                 cfg.discount, take_cols(rewards, idx));
    });
}

// ---------------------------------------------------------------------------

UvuModel make_uvu_model(std::shared_ptr<const FunctionModel> net, double gamma, std::uint64_t seed) {
    if (!net) throw ValidationError("make_uvu_model: null network");
    const Rng root(seed);
    Rng ru = root.split(0);
    Rng rg = root.split(1);
    UvuModel m;
    m.online = ParamVector(net->init(ru), ParamRole::vartheta);
    m.target = ParamVector(net->init(rg), ParamRole::psi);
    m.gamma = gamma;
    m.net = std::move(net);
    return m;
}

Eigen::MatrixXd uvu_synthetic_rewards(const UvuModel& model, const TdBatch& batch) {
    const Eigen::MatrixXd g = model.net->forward(model.target.values(), batch.x);
    const Eigen::MatrixXd gn = model.net->forward(model.target.values(), batch.x_next);
    const Eigen::VectorXd disc = model.gamma * batch.bootstrap;
    Eigen::MatrixXd r = g;
    r -= gn * disc.asDiagonal();
    return r;
}

TrainResult uvu_train(UvuModel& model, const TdBatch& batch, const TrainConfig& cfg) {
    if (cfg.discount != model.gamma) throw ValidationError("uvu_train: config discount differs from the model's gamma");
    const Eigen::MatrixXd rg = uvu_synthetic_rewards(model, batch);
    return td_train(*model.net, model.online.mutable_values(), batch, rg, cfg);
}

Eigen::MatrixXd uvu_signed_errors(const UvuModel& model, const Eigen::MatrixXd& xs) {
    return model.net->forward(model.online.values(), xs) - model.net->forward(model.target.values(), xs);
}

UvuErrors uvu_error(const UvuModel& model, const Eigen::VectorXd& x) {
    const Eigen::VectorXd e = uvu_signed_errors(model, x).col(0);
    UvuErrors out;
    out.per_head_sq = e.cwiseAbs2();
    out.half_mean_sq = 0.5 * out.per_head_sq.mean();
    return out;
}

Eigen::VectorXd uvu_uncertainty(const UvuModel& model, const Eigen::MatrixXd& xs) {
    return 0.5 * uvu_signed_errors(model, xs).cwiseAbs2().colwise().mean().transpose();
}

double uvu_bootstrap_q(const UvuModel& model, const FunctionModel& q_net, const Eigen::VectorXd& q_params,
                       const Eigen::VectorXd& x, int head) {
    if (head < 0 || head >= model.n_heads()) throw ValidationError("uvu_bootstrap_q: head out of range");
    const double q = q_net.forward(q_params, x)(0, 0);
    return q + uvu_signed_errors(model, x)(head, 0);
}

// ---------------------------------------------------------------------------

Eigen::RowVectorXd EnsembleModel::member_output(int k, const Eigen::MatrixXd& xs) const {
    const auto kk = static_cast<std::size_t>(k);
    Eigen::RowVectorXd out = net->forward(members[kk].values(), xs).row(0);
    if (!priors.empty()) out += prior_scale * net->forward(priors[kk].values(), xs).row(0);
    return out;
}

Eigen::MatrixXd EnsembleModel::outputs(const Eigen::MatrixXd& xs) const {
    Eigen::MatrixXd out(size(), xs.cols());
    for (int k = 0; k < size(); ++k) out.row(k) = member_output(k, xs);
    return out;
}

Eigen::VectorXd EnsembleModel::variance(const Eigen::MatrixXd& xs) const {
    if (size() < 2) throw ValidationError("EnsembleModel::variance: need at least two members");
    const Eigen::MatrixXd o = outputs(xs);
    const Eigen::RowVectorXd m = o.colwise().mean();
    return ((o.rowwise() - m).colwise().squaredNorm() / (size() - 1.0)).transpose();
}

EnsembleModel make_ensemble(std::shared_ptr<const FunctionModel> net, const std::vector<std::uint64_t>& member_seeds,
                            double prior_scale) {
    if (!net) throw ValidationError("make_ensemble: null network");
    if (member_seeds.empty()) throw ValidationError("make_ensemble: need at least one member");
    if (prior_scale < 0.0) throw ValidationError("make_ensemble: prior_scale must be >= 0");
    EnsembleModel e;
    e.prior_scale = prior_scale;
    for (const auto s : member_seeds) {
        const Rng root(s);
        Rng rm = root.split(0);
        e.members.emplace_back(net->init(rm), ParamRole::theta);
        if (prior_scale > 0.0) {
            Rng rp = root.split(1);
            e.priors.emplace_back(net->init(rp), ParamRole::psi);
        }
    }
    e.net = std::move(net);
    return e;
}

EnsembleModel make_ensemble(std::shared_ptr<const FunctionModel> net, int k, std::uint64_t seed, double prior_scale) {
    if (k < 1) throw ValidationError("make_ensemble: need at least one member");
    const Rng root(seed);
    std::vector<std::uint64_t> seeds;
    for (int i = 0; i < k; ++i) seeds.push_back(root.split(static_cast<std::uint64_t>(i)).key());
    return make_ensemble(std::move(net), seeds, prior_scale);
}

std::vector<TrainResult> ensemble_train(EnsembleModel& ens, const TdBatch& batch, const TrainConfig& cfg,
                                        bool independent_bootstrap) {
    if (independent_bootstrap && batch.x_next_actions.empty()) {
        throw ValidationError("ensemble_train: independent bootstrapping needs encoded successor actions");
    }
    const FunctionModel& net = *ens.net;
    const Rng root(cfg.seed);
    std::vector<TrainResult> results;
    for (int k = 0; k < ens.size(); ++k) {
        const auto kk = static_cast<std::size_t>(k);
        TrainConfig ck = cfg;
        ck.seed = root.split(static_cast<std::uint64_t>(k)).key();
        if (!cfg.metrics_path.empty()) ck.metrics_path = cfg.metrics_path + ".member" + std::to_string(k);
        const bool has_prior = !ens.priors.empty();
        // Frozen prior contributions, evaluated once over the full batch.
        Eigen::MatrixXd prior_x, prior_next;
        std::vector<Eigen::MatrixXd> prior_next_a;
        if (has_prior) {
            const auto& psi = ens.priors[kk].values();
            prior_x = ens.prior_scale * net.forward(psi, batch.x).topRows(1);
            prior_next = ens.prior_scale * net.forward(psi, batch.x_next).topRows(1);
            for (const auto& xa : batch.x_next_actions) prior_next_a.push_back(ens.prior_scale * net.forward(psi, xa).topRows(1));
        }
        const Eigen::MatrixXd r = batch.rewards.transpose();
        auto targets = [&](const std::vector<Eigen::Index>* idx, const Eigen::VectorXd& boot) {
            Eigen::MatrixXd next;
            if (independent_bootstrap) {
                // Greedy successor action of this member, lowest index on ties.
                Eigen::MatrixXd best;
                for (std::size_t a = 0; a < batch.x_next_actions.size(); ++a) {
                    Eigen::MatrixXd v = net.forward(boot, take_cols(batch.x_next_actions[a], idx)).topRows(1);
                    if (has_prior) v += take_cols(prior_next_a[a], idx);
                    best = a == 0 ? v : best.cwiseMax(v);
                }
                next = best;
            } else {
                next = net.forward(boot, take_cols(batch.x_next, idx)).topRows(1);
                if (has_prior) next += take_cols(prior_next, idx);
            }
            Eigen::MatrixXd y = bootstrap_targets(next, take(batch.bootstrap, idx), cfg.discount, take_cols(r, idx));
            if (has_prior) y -= take_cols(prior_x, idx);
            return y;
        };
        if (net.n_outputs() != 1) throw ValidationError("ensemble_train: members must be single-output networks");
        try {
            results.push_back(fit_loop(net, ens.members[kk].mutable_values(), batch.x, ck, targets));
        } catch (const DivergenceError& e) {
            TrainResult tr;
            tr.diverged = true;
            tr.steps = e.step();
            tr.final_loss = e.loss();
            tr.message = "member " + std::to_string(k) + ": " + e.what();
            results.push_back(tr);
        }
    }
    return results;
}

// ---------------------------------------------------------------------------

RndModel make_rnd_model(std::shared_ptr<const FunctionModel> net, std::uint64_t seed) {
    if (!net) throw ValidationError("make_rnd_model: null network");
    const Rng root(seed);
    Rng rp = root.split(0);
    Rng rt = root.split(1);
    RndModel m;
    m.predictor = ParamVector(net->init(rp), ParamRole::rnd_predictor);
    m.target = ParamVector(net->init(rt), ParamRole::rnd_target);
    m.net = std::move(net);
    return m;
}

TrainResult rnd_train(RndModel& model, const TdBatch& batch, const TrainConfig& cfg) {
    // Same target slicing as uvu_train so that the two coincide bit for bit at gamma = 0.
    const Eigen::MatrixXd g = model.net->forward(model.target.values(), batch.x);
    return fit_loop(*model.net, model.predictor.mutable_values(), batch.x, cfg,
                    [&](const std::vector<Eigen::Index>* idx, const Eigen::VectorXd&) { return take_cols(g, idx); });
}

Eigen::VectorXd rnd_errors(const RndModel& model, const Eigen::MatrixXd& xs) {
    const Eigen::MatrixXd e =
        model.net->forward(model.predictor.values(), xs) - model.net->forward(model.target.values(), xs);
    return 0.5 * e.cwiseAbs2().colwise().mean().transpose();
}

double rnd_error(const RndModel& model, const Eigen::VectorXd& x) { return rnd_errors(model, x)(0); }

TrainResult rnd_prior_train(RndModel& model, std::shared_ptr<const FunctionModel> q_net, const TdBatch& batch,
                            const TrainConfig& cfg, bool prior) {
    if (!q_net || q_net->n_outputs() != 1) throw ValidationError("rnd_prior_train: intrinsic Q must have one output");
    Rng rng(Rng(cfg.seed).split(7).key());
    model.q_net = std::move(q_net);
    model.intrinsic_q = ParamVector(model.q_net->init(rng), ParamRole::theta);
    model.intrinsic_prior = prior;
    const Eigen::MatrixXd r = rnd_errors(model, batch.x).transpose();
    const Eigen::MatrixXd p_x = prior ? r : Eigen::MatrixXd::Zero(1, batch.size());
    const Eigen::MatrixXd p_next = prior ? Eigen::MatrixXd(rnd_errors(model, batch.x_next).transpose())
                                         : Eigen::MatrixXd::Zero(1, batch.size());
    const FunctionModel& q = *model.q_net;
    return fit_loop(q, model.intrinsic_q.mutable_values(), batch.x, cfg,
                    [&](const std::vector<Eigen::Index>* idx, const Eigen::VectorXd& boot) {
                        Eigen::MatrixXd next = q.forward(boot, take_cols(batch.x_next, idx)) + take_cols(p_next, idx);
                        Eigen::MatrixXd y = bootstrap_targets(next, take(batch.bootstrap, idx), cfg.discount, take_cols(r, idx));
                        y -= take_cols(p_x, idx);
                        return y;
                    });
}

Eigen::VectorXd intrinsic_q(const RndModel& model, const Eigen::MatrixXd& xs) {
    if (!model.q_net) throw ValidationError("intrinsic_q: model has no intrinsic Q-function");
    Eigen::VectorXd q = model.q_net->forward(model.intrinsic_q.values(), xs).row(0).transpose();
    if (model.intrinsic_prior) q += rnd_errors(model, xs);
    return q;
}

}  // namespace uvu
