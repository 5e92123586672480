#include "uvu/practical_train.hpp"

#include <chrono>
#include <cmath>

#include "uvu/error.hpp"

namespace uvu {

Adam::Adam(Eigen::Index n_params, AdamConfig cfg)
    : cfg_(cfg), m_(VecF::Zero(n_params)), v_(VecF::Zero(n_params)) {}

void Adam::step(VecF& params, const VecF& grad) {
    ++t_;
    const auto b1 = static_cast<float>(cfg_.beta1);
    const auto b2 = static_cast<float>(cfg_.beta2);
    m_ = b1 * m_ + (1.0f - b1) * grad;
    v_ = b2 * v_ + (1.0f - b2) * grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    const auto lr = static_cast<float>(cfg_.learning_rate * std::sqrt(c2) / c1);
    const auto eps = static_cast<float>(cfg_.epsilon * std::sqrt(c2));
    params.array() -= lr * m_.array() / (v_.array().sqrt() + eps);
}

std::string to_string(Method m) {
    switch (m) {
        case Method::dqn: return "dqn";
        case Method::uvu: return "uvu";
        case Method::ensemble: return "ensemble";
        case Method::bdqnp: return "bdqnp";
        case Method::rnd: return "rnd";
        case Method::rnd_p: return "rnd_p";
    }
    return "?";
}

Method method_from_string(const std::string& s) {
    for (Method m : {Method::dqn, Method::uvu, Method::ensemble, Method::bdqnp, Method::rnd, Method::rnd_p}) {
        if (to_string(m) == s) return m;
    }
    throw ValidationError("unknown method '" + s + "' (expected dqn, uvu, ensemble, bdqnp, rnd or rnd_p)");
}

void PracticalConfig::validate() const {
    arch.validate();
    if (!(learning_rate > 0.0) || !(aux_learning_rate > 0.0)) throw ValidationError("PracticalConfig: learning rates must be positive");
    if (!(discount >= 0.0 && discount < 1.0)) throw ValidationError("PracticalConfig: discount must lie in [0, 1)");
    if (batch_size < 1) throw ValidationError("PracticalConfig: batch_size must be >= 1");
    if (adam_epsilon < 0.0) throw ValidationError("PracticalConfig: adam_epsilon must be >= 0");
    if (n_steps < 0) throw ValidationError("PracticalConfig: n_steps must be >= 0");
    if (target_frequency < 1) throw ValidationError("PracticalConfig: target_frequency must be >= 1");
    if (!(target_lambda > 0.0 && target_lambda <= 1.0)) throw ValidationError("PracticalConfig: target_lambda must lie in (0, 1]");
    if ((method == Method::ensemble || method == Method::bdqnp) && ensemble_size < 2) {
        throw ValidationError("PracticalConfig: ensemble_size must be >= 2");
    }
    if (prior_scale < 0.0) throw ValidationError("PracticalConfig: prior_scale must be >= 0");
    if (uvu_heads < 1 || rnd_heads < 1) throw ValidationError("PracticalConfig: head counts must be >= 1");
    if (!(divergence_threshold > 0.0)) throw ValidationError("PracticalConfig: divergence_threshold must be positive");
}

nlohmann::json PracticalConfig::to_json() const {
    return {{"method", to_string(method)},
            {"arch", arch.to_json()},
            {"learning_rate", learning_rate},
            {"aux_learning_rate", aux_learning_rate},
            {"discount", discount},
            {"batch_size", batch_size},
            {"adam_epsilon", adam_epsilon},
            {"n_steps", n_steps},
            {"target_frequency", target_frequency},
            {"target_lambda", target_lambda},
            {"double_dqn", double_dqn},
            {"ensemble_size", ensemble_size},
            {"prior_scale", prior_scale},
            {"uvu_heads", uvu_heads},
            {"rnd_heads", rnd_heads},
            {"divergence_threshold", divergence_threshold},
            {"seed", seed}};
}

PracticalConfig PracticalConfig::from_json(const nlohmann::json& j) {
    PracticalConfig c;
    const auto known = c.to_json();
    for (const auto& [k, v] : j.items()) {
        if (!known.contains(k)) throw ValidationError("PracticalConfig: unknown key '" + k + "'");
    }
    if (j.contains("method")) c.method = method_from_string(j.at("method").get<std::string>());
    if (j.contains("arch")) c.arch = PracticalArchSpec::from_json(j.at("arch"));
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.aux_learning_rate = j.value("aux_learning_rate", c.aux_learning_rate);
    c.discount = j.value("discount", c.discount);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.adam_epsilon = j.value("adam_epsilon", c.adam_epsilon);
    c.n_steps = j.value("n_steps", c.n_steps);
    c.target_frequency = j.value("target_frequency", c.target_frequency);
    c.target_lambda = j.value("target_lambda", c.target_lambda);
    c.double_dqn = j.value("double_dqn", c.double_dqn);
    c.ensemble_size = j.value("ensemble_size", c.ensemble_size);
    c.prior_scale = j.value("prior_scale", c.prior_scale);
    c.uvu_heads = j.value("uvu_heads", c.uvu_heads);
    c.rnd_heads = j.value("rnd_heads", c.rnd_heads);
    c.divergence_threshold = j.value("divergence_threshold", c.divergence_threshold);
    c.seed = j.value("seed", c.seed);
    c.validate();
    return c;
}

OfflineBuffer OfflineBuffer::from_dataset(const Dataset& ds) {
    if (ds.empty()) throw ValidationError("OfflineBuffer: empty dataset");
    const auto n = static_cast<Eigen::Index>(ds.size());
    OfflineBuffer b;
    b.states.resize(ds.state_dim(), n);
    b.tasks.resize(ds.task_dim(), n);
    b.next_states.resize(ds.state_dim(), n);
    b.rewards.resize(n);
    b.bootstrap.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& t = ds.transitions[static_cast<std::size_t>(i)];
        b.states.col(i) = t.s.cast<float>();
        b.tasks.col(i) = t.z.cast<float>();
        b.next_states.col(i) = t.s_next.cast<float>();
        b.actions.push_back(t.a);
        b.next_actions.push_back(t.a_next);
        b.rewards(i) = static_cast<float>(t.r);
        b.bootstrap(i) = t.terminal() ? 0.0f : 1.0f;
    }
    return b;
}

Minibatch sample_minibatch(const OfflineBuffer& buf, long batch_size, Rng& rng) {
    Minibatch mb;
    const auto n = static_cast<std::uint64_t>(buf.size());
    const auto bs = static_cast<Eigen::Index>(batch_size);
    mb.idx.resize(static_cast<std::size_t>(bs));
    mb.s.resize(buf.states.rows(), bs);
    mb.z.resize(buf.tasks.rows(), bs);
    mb.s_next.resize(buf.next_states.rows(), bs);
    mb.a.resize(static_cast<std::size_t>(bs));
    mb.r.resize(bs);
    mb.m.resize(bs);
    for (Eigen::Index j = 0; j < bs; ++j) {
        const auto i = static_cast<Eigen::Index>(rng.below(n));
        mb.idx[static_cast<std::size_t>(j)] = i;
        mb.s.col(j) = buf.states.col(i);
        mb.z.col(j) = buf.tasks.col(i);
        mb.s_next.col(j) = buf.next_states.col(i);
        mb.a[static_cast<std::size_t>(j)] = buf.actions[static_cast<std::size_t>(i)];
        mb.r(j) = buf.rewards(i);
        mb.m(j) = buf.bootstrap(i);
    }
    return mb;
}

int argmax_action(const MatF& q, Eigen::Index col, int n_actions, int head) {
    int best = 0;
    float v = q(head * n_actions, col);
    for (int a = 1; a < n_actions; ++a) {
        if (q(head * n_actions + a, col) > v) {
            v = q(head * n_actions + a, col);
            best = a;
        }
    }
    return best;
}

void TrainedNet::refresh_target(double lambda) {
    const auto l = static_cast<float>(lambda);
    target = l * params + (1.0f - l) * target;
}

int Agent::greedy_action(const Eigen::VectorXd& s, const Eigen::VectorXd& z) const {
    const MatF q = q_values(s.cast<float>(), z.cast<float>());
    return argmax_action(q, 0, static_cast<int>(q.rows()));
}

// ---------------------------------------------------------------------------

namespace {

using Net = PracticalNet<float>;

std::shared_ptr<const Net> make_net(const PracticalArchSpec& arch, int heads) {
    PracticalArchSpec s = arch;
    s.n_heads = heads;
    return std::make_shared<const Net>(s);
}

TrainedNet make_trained(std::shared_ptr<const Net> net, Rng rng, double lr, double eps) {
    TrainedNet t;
    t.params = net->init(rng);
    t.target = t.params;
    t.opt = Adam(net->n_params(), AdamConfig{lr, 0.9, 0.999, eps});
    t.net = std::move(net);
    return t;
}

// Regresses the outputs rows[i] of column i onto y_i, loss 1/(2B) sum delta^2.
// `rows` holds one output index per (column, head); delta is averaged over heads.
float regress(TrainedNet& n, const MatF& s, const MatF& z, const std::vector<std::vector<int>>& rows, const MatF& y) {
    Net::Cache cache;
    const MatF& out = n.net->forward(n.params, s, z, cache);
    const auto bs = static_cast<float>(s.cols());
    const auto heads = static_cast<float>(y.rows());
    MatF cot = MatF::Zero(out.rows(), out.cols());
    float loss = 0.0f;
    for (Eigen::Index i = 0; i < s.cols(); ++i) {
        for (Eigen::Index h = 0; h < y.rows(); ++h) {
            const int r = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(h)];
            const float d = y(h, i) - out(r, i);
            loss += 0.5f * d * d / (bs * heads);
            cot(r, i) -= d / (bs * heads);
        }
    }
    VecF grad = VecF::Zero(n.net->n_params());
    n.net->backward(n.params, cache, cot, grad);
    n.opt.step(n.params, grad);
    return loss;
}

std::vector<std::vector<int>> single_rows(const std::vector<int>& actions) {
    std::vector<std::vector<int>> rows;
    rows.reserve(actions.size());
    for (int a : actions) rows.push_back({a});
    return rows;
}

// (Double) DQN update of a single-head Q-network. Returns the loss and the
// greedy successor actions it bootstrapped from.
float dqn_update(TrainedNet& q, const Minibatch& mb, const PracticalConfig& cfg, std::vector<int>* next_actions) {
    const int na = cfg.arch.n_actions;
    const MatF nt = q.net->forward(q.target, mb.s_next, mb.z);
    const MatF no = cfg.double_dqn ? q.net->forward(q.params, mb.s_next, mb.z) : nt;
    MatF y(1, mb.s.cols());
    std::vector<int> an(mb.a.size());
    for (Eigen::Index i = 0; i < mb.s.cols(); ++i) {
        const int a = argmax_action(no, i, na);
        an[static_cast<std::size_t>(i)] = a;
        y(0, i) = mb.r(i) + static_cast<float>(cfg.discount) * mb.m(i) * nt(a, i);
    }
    if (next_actions != nullptr) *next_actions = std::move(an);
    return regress(q, mb.s, mb.z, single_rows(mb.a), y);
}

class DqnAgent : public Agent {
public:
    explicit DqnAgent(const PracticalConfig& cfg) : cfg_(cfg) {
        const Rng root(cfg.seed);
        q_ = make_trained(make_net(cfg.arch, 1), root.split(0), cfg.learning_rate, cfg.effective_adam_epsilon());
    }
    double train_step(const OfflineBuffer& buf, Rng& rng) override {
        const Minibatch mb = sample_minibatch(buf, cfg_.batch_size, rng);
        const float loss = dqn_update(q_, mb, cfg_, nullptr);
        after_step();
        return loss;
    }
    [[nodiscard]] MatF q_values(const MatF& s, const MatF& z) const override { return q_.net->forward(q_.params, s, z); }
    [[nodiscard]] Eigen::VectorXd uncertainty(const MatF& s, const MatF&, const std::vector<int>&) const override {
        return Eigen::VectorXd::Zero(s.cols());
    }
    [[nodiscard]] Method method() const override { return Method::dqn; }
    [[nodiscard]] std::vector<std::pair<std::string, VecF>> checkpoint() const override {
        return {{"q", q_.params}, {"q_target", q_.target}};
    }
    void restore(const std::vector<std::pair<std::string, VecF>>& parts) override {
        for (const auto& [k, v] : parts) {
            if (k == "q") q_.params = v;
            if (k == "q_target") q_.target = v;
        }
    }

protected:
    void after_step() {
        if (++steps_ % cfg_.target_frequency == 0) refresh_targets();
    }
    virtual void refresh_targets() { q_.refresh_target(cfg_.target_lambda); }

    PracticalConfig cfg_;
    TrainedNet q_;
    long steps_ = 0;
};

class UvuAgent final : public DqnAgent {
public:
    explicit UvuAgent(const PracticalConfig& cfg) : DqnAgent(cfg) {
        const Rng root(cfg.seed);
        auto net = make_net(cfg.arch, cfg.uvu_heads);
        u_ = make_trained(net, root.split(1), cfg.aux_learning_rate, cfg.effective_adam_epsilon());
        Rng rg = root.split(2);
        g_ = net->init(rg);
    }

    double train_step(const OfflineBuffer& buf, Rng& rng) override {
        const Minibatch mb = sample_minibatch(buf, cfg_.batch_size, rng);
        const float loss = dqn_update(q_, mb, cfg_, nullptr);
        uvu_update(mb);
        after_step();
        return loss;
    }

    [[nodiscard]] Eigen::VectorXd uncertainty(const MatF& s, const MatF& z, const std::vector<int>& a) const override {
        const MatF e = u_.net->forward(u_.params, s, z) - u_.net->forward(g_, s, z);
        const int na = cfg_.arch.n_actions;
        Eigen::VectorXd out(s.cols());
        for (Eigen::Index i = 0; i < s.cols(); ++i) {
            double acc = 0.0;
            for (int h = 0; h < cfg_.uvu_heads; ++h) {
                const double v = e(h * na + a[static_cast<std::size_t>(i)], i);
                acc += v * v;
            }
            out(i) = 0.5 * acc / cfg_.uvu_heads;
        }
        return out;
    }
    [[nodiscard]] Method method() const override { return Method::uvu; }
    [[nodiscard]] std::vector<std::pair<std::string, VecF>> checkpoint() const override {
        auto c = DqnAgent::checkpoint();
        c.emplace_back("u", u_.params);
        c.emplace_back("u_target", u_.target);
        c.emplace_back("g", g_);
        return c;
    }
    void restore(const std::vector<std::pair<std::string, VecF>>& parts) override {
        DqnAgent::restore(parts);
        for (const auto& [k, v] : parts) {
            if (k == "u") u_.params = v;
            if (k == "u_target") u_.target = v;
            if (k == "g") g_ = v;
        }
    }

private:
    // Head k bootstraps from argmax_a Q(s', a) + eps_k(s', a).
    void uvu_update(const Minibatch& mb) {
        const int na = cfg_.arch.n_actions;
        const int m = cfg_.uvu_heads;
        const auto gamma = static_cast<float>(cfg_.discount);
        const MatF qn = q_.net->forward(q_.params, mb.s_next, mb.z);
        const MatF un = u_.net->forward(u_.params, mb.s_next, mb.z);
        const MatF ut = u_.net->forward(u_.target, mb.s_next, mb.z);
        const MatF gn = u_.net->forward(g_, mb.s_next, mb.z);
        const MatF gs = u_.net->forward(g_, mb.s, mb.z);
        const Eigen::Index bs = mb.s.cols();
        MatF y(m, bs);
        std::vector<std::vector<int>> rows(static_cast<std::size_t>(bs), std::vector<int>(static_cast<std::size_t>(m)));
        for (Eigen::Index i = 0; i < bs; ++i) {
            for (int k = 0; k < m; ++k) {
                int best = 0;
                float bv = -INFINITY;
                for (int a = 0; a < na; ++a) {
                    const float v = qn(a, i) + un(k * na + a, i) - gn(k * na + a, i);
                    if (v > bv) {
                        bv = v;
                        best = a;
                    }
                }
                const int rn = k * na + best;
                const float w = gamma * mb.m(i);
                const float rg = gs(k * na + mb.a[static_cast<std::size_t>(i)], i) - w * gn(rn, i);
                y(k, i) = rg + w * ut(rn, i);
                rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] = k * na + mb.a[static_cast<std::size_t>(i)];
            }
        }
        regress(u_, mb.s, mb.z, rows, y);
    }
    void refresh_targets() override {
        DqnAgent::refresh_targets();
        u_.refresh_target(cfg_.target_lambda);
    }

    TrainedNet u_;
    VecF g_;
};

class EnsembleAgent final : public Agent {
public:
    explicit EnsembleAgent(const PracticalConfig& cfg) : cfg_(cfg) {
        const Rng root(cfg.seed);
        net_ = make_net(cfg.arch, 1);
        for (int k = 0; k < cfg.ensemble_size; ++k) {
            const Rng rk = root.split(static_cast<std::uint64_t>(k));
            members_.push_back(make_trained(net_, rk.split(0), cfg.learning_rate, cfg.effective_adam_epsilon()));
            if (has_prior()) {
                Rng rp = rk.split(1);
                priors_.push_back(net_->init(rp));
            }
        }
    }

    double train_step(const OfflineBuffer& buf, Rng& rng) override {
        const Minibatch mb = sample_minibatch(buf, cfg_.batch_size, rng);
        const int na = cfg_.arch.n_actions;
        const auto gamma = static_cast<float>(cfg_.discount);
        const float s = prior_scale();
        float loss = 0.0f;
        for (std::size_t k = 0; k < members_.size(); ++k) {
            TrainedNet& q = members_[k];
            MatF nt = q.net->forward(q.target, mb.s_next, mb.z);
            MatF no = cfg_.double_dqn ? q.net->forward(q.params, mb.s_next, mb.z) : nt;
            MatF prior_s;
            if (has_prior()) {
                const MatF pn = s * net_->forward(priors_[k], mb.s_next, mb.z);
                nt += pn;
                no = cfg_.double_dqn ? MatF(no + pn) : nt;
                prior_s = s * net_->forward(priors_[k], mb.s, mb.z);
            }
            MatF y(1, mb.s.cols());
            for (Eigen::Index i = 0; i < mb.s.cols(); ++i) {
                const int a = argmax_action(no, i, na);
                y(0, i) = mb.r(i) + gamma * mb.m(i) * nt(a, i);
                if (has_prior()) y(0, i) -= prior_s(mb.a[static_cast<std::size_t>(i)], i);
            }
            loss += regress(q, mb.s, mb.z, single_rows(mb.a), y) / static_cast<float>(members_.size());
        }
        if (++steps_ % cfg_.target_frequency == 0) {
            for (auto& q : members_) q.refresh_target(cfg_.target_lambda);
        }
        return loss;
    }

    [[nodiscard]] MatF member_q(std::size_t k, const MatF& s, const MatF& z) const {
        MatF q = net_->forward(members_[k].params, s, z);
        if (has_prior()) q += prior_scale() * net_->forward(priors_[k], s, z);
        return q;
    }
    [[nodiscard]] MatF q_values(const MatF& s, const MatF& z) const override {
        MatF q = member_q(0, s, z);
        for (std::size_t k = 1; k < members_.size(); ++k) q += member_q(k, s, z);
        return q / static_cast<float>(members_.size());
    }
    [[nodiscard]] Eigen::VectorXd uncertainty(const MatF& s, const MatF& z, const std::vector<int>& a) const override {
        const auto k = members_.size();
        Eigen::MatrixXd vals(static_cast<Eigen::Index>(k), s.cols());
        for (std::size_t m = 0; m < k; ++m) {
            const MatF q = member_q(m, s, z);
            for (Eigen::Index i = 0; i < s.cols(); ++i) vals(static_cast<Eigen::Index>(m), i) = q(a[static_cast<std::size_t>(i)], i);
        }
        const Eigen::RowVectorXd mu = vals.colwise().mean();
        return ((vals.rowwise() - mu).colwise().squaredNorm() / (static_cast<double>(k) - 1.0)).transpose();
    }
    [[nodiscard]] Method method() const override { return cfg_.method; }
    [[nodiscard]] std::vector<std::pair<std::string, VecF>> checkpoint() const override {
        std::vector<std::pair<std::string, VecF>> c;
        for (std::size_t k = 0; k < members_.size(); ++k) {
            c.emplace_back("member" + std::to_string(k), members_[k].params);
            c.emplace_back("member" + std::to_string(k) + "_target", members_[k].target);
            if (has_prior()) c.emplace_back("prior" + std::to_string(k), priors_[k]);
        }
        return c;
    }
    void restore(const std::vector<std::pair<std::string, VecF>>& parts) override {
        for (const auto& [key, v] : parts) {
            for (std::size_t k = 0; k < members_.size(); ++k) {
                const std::string n = std::to_string(k);
                if (key == "member" + n) members_[k].params = v;
                if (key == "member" + n + "_target") members_[k].target = v;
                if (has_prior() && key == "prior" + n) priors_[k] = v;
            }
        }
    }

private:
    [[nodiscard]] bool has_prior() const { return cfg_.method == Method::bdqnp && cfg_.prior_scale > 0.0; }
    [[nodiscard]] float prior_scale() const { return has_prior() ? static_cast<float>(cfg_.prior_scale) : 0.0f; }

    PracticalConfig cfg_;
    std::shared_ptr<const Net> net_;
    std::vector<TrainedNet> members_;
    std::vector<VecF> priors_;
    long steps_ = 0;
};

// DQN plus an RND predictor and an intrinsic Q-function trained on eps_rnd^2 / 2.
class RndAgent final : public DqnAgent {
public:
    explicit RndAgent(const PracticalConfig& cfg) : DqnAgent(cfg), prior_(cfg.method == Method::rnd_p) {
        const Rng root(cfg.seed);
        auto net = make_net(cfg.arch, cfg.rnd_heads);
        pred_ = make_trained(net, root.split(1), cfg.aux_learning_rate, cfg.effective_adam_epsilon());
        Rng rt = root.split(2);
        target_ = net->init(rt);
        qi_ = make_trained(make_net(cfg.arch, 1), root.split(3), cfg.aux_learning_rate, cfg.effective_adam_epsilon());
    }

    double train_step(const OfflineBuffer& buf, Rng& rng) override {
        const Minibatch mb = sample_minibatch(buf, cfg_.batch_size, rng);
        std::vector<int> next_a;
        const float loss = dqn_update(q_, mb, cfg_, &next_a);
        const int na = cfg_.arch.n_actions;
        const int h = cfg_.rnd_heads;
        const Eigen::Index bs = mb.s.cols();
        // intrinsic rewards before the predictor moves
        const Eigen::VectorXd r_int = errors(mb.s, mb.z, mb.a);
        const Eigen::VectorXd p_next = prior_ ? errors(mb.s_next, mb.z, next_a) : Eigen::VectorXd::Zero(bs);
        {
            const MatF t = pred_.net->forward(target_, mb.s, mb.z);
            MatF y(h, bs);
            std::vector<std::vector<int>> rows(static_cast<std::size_t>(bs), std::vector<int>(static_cast<std::size_t>(h)));
            for (Eigen::Index i = 0; i < bs; ++i) {
                for (int k = 0; k < h; ++k) {
                    const int r = k * na + mb.a[static_cast<std::size_t>(i)];
                    y(k, i) = t(r, i);
                    rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] = r;
                }
            }
            regress(pred_, mb.s, mb.z, rows, y);
        }
        {
            const MatF nt = qi_.net->forward(qi_.target, mb.s_next, mb.z);
            const auto gamma = static_cast<float>(cfg_.discount);
            MatF y(1, bs);
            for (Eigen::Index i = 0; i < bs; ++i) {
                const float next = nt(next_a[static_cast<std::size_t>(i)], i) + static_cast<float>(p_next(i));
                y(0, i) = static_cast<float>(r_int(i)) + gamma * mb.m(i) * next;
                if (prior_) y(0, i) -= static_cast<float>(r_int(i));
            }
            regress(qi_, mb.s, mb.z, single_rows(mb.a), y);
        }
        after_step();
        return loss;
    }

    /// eps_rnd^2 / 2 averaged over heads.
    [[nodiscard]] Eigen::VectorXd errors(const MatF& s, const MatF& z, const std::vector<int>& a) const {
        const MatF e = pred_.net->forward(pred_.params, s, z) - pred_.net->forward(target_, s, z);
        const int na = cfg_.arch.n_actions;
        Eigen::VectorXd out(s.cols());
        for (Eigen::Index i = 0; i < s.cols(); ++i) {
            double acc = 0.0;
            for (int k = 0; k < cfg_.rnd_heads; ++k) {
                const double v = e(k * na + a[static_cast<std::size_t>(i)], i);
                acc += v * v;
            }
            out(i) = 0.5 * acc / cfg_.rnd_heads;
        }
        return out;
    }
    [[nodiscard]] Eigen::VectorXd uncertainty(const MatF& s, const MatF& z, const std::vector<int>& a) const override {
        const MatF q = qi_.net->forward(qi_.params, s, z);
        Eigen::VectorXd out(s.cols());
        for (Eigen::Index i = 0; i < s.cols(); ++i) out(i) = q(a[static_cast<std::size_t>(i)], i);
        if (prior_) out += errors(s, z, a);
        return out;
    }
    [[nodiscard]] Method method() const override { return cfg_.method; }
    [[nodiscard]] std::vector<std::pair<std::string, VecF>> checkpoint() const override {
        auto c = DqnAgent::checkpoint();
        c.emplace_back("rnd_predictor", pred_.params);
        c.emplace_back("rnd_target", target_);
        c.emplace_back("q_intr", qi_.params);
        c.emplace_back("q_intr_target", qi_.target);
        return c;
    }
    void restore(const std::vector<std::pair<std::string, VecF>>& parts) override {
        DqnAgent::restore(parts);
        for (const auto& [k, v] : parts) {
            if (k == "rnd_predictor") pred_.params = v;
            if (k == "rnd_target") target_ = v;
            if (k == "q_intr") qi_.params = v;
            if (k == "q_intr_target") qi_.target = v;
        }
    }

private:
    void refresh_targets() override {
        DqnAgent::refresh_targets();
        qi_.refresh_target(cfg_.target_lambda);
    }

    bool prior_;
    TrainedNet pred_;
    VecF target_;
    TrainedNet qi_;
};

}  // namespace

std::unique_ptr<Agent> make_agent(const PracticalConfig& cfg) {
    cfg.validate();
    switch (cfg.method) {
        case Method::dqn: return std::make_unique<DqnAgent>(cfg);
        case Method::uvu: return std::make_unique<UvuAgent>(cfg);
        case Method::ensemble:
        case Method::bdqnp: return std::make_unique<EnsembleAgent>(cfg);
        case Method::rnd:
        case Method::rnd_p: return std::make_unique<RndAgent>(cfg);
    }
    throw ValidationError("make_agent: unknown method");
}

PracticalResult practical_train(Agent& agent, const OfflineBuffer& buf, const PracticalConfig& cfg) {
    cfg.validate();
    if (buf.size() == 0) throw ValidationError("practical_train: empty dataset");
    Rng rng = Rng(cfg.seed).split(1000);
    PracticalResult res;
    const auto t0 = std::chrono::steady_clock::now();
    for (long step = 0; step < cfg.n_steps; ++step) {
        const double loss = agent.train_step(buf, rng);
        if (!std::isfinite(loss) || loss > cfg.divergence_threshold) {
            throw DivergenceError("practical training diverged at step " + std::to_string(step), step, loss);
        }
        res.steps = step + 1;
        res.final_loss = loss;
        if (step % 100 == 0) res.loss_trace.push_back(loss);
    }
    res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
}

VecF dqn_offline_train(const Dataset& ds, const PracticalConfig& cfg, PracticalResult* info) {
    if (ds.empty()) throw ValidationError("dqn_offline_train: empty dataset");
    PracticalConfig c = cfg;
    c.method = Method::dqn;
    auto agent = make_agent(c);
    const PracticalResult r = practical_train(*agent, OfflineBuffer::from_dataset(ds), c);
    if (info != nullptr) *info = r;
    return agent->checkpoint().front().second;
}

int AgentPolicy::act(const GridWorld& /*env*/, const Eigen::VectorXd& obs, int task, Rng& rng) {
    if (epsilon_ > 0.0 && rng.bernoulli(epsilon_)) return static_cast<int>(rng.below(kGridActions));
    return agent_.greedy_action(obs, GridWorld::task_encoding(task));
}

namespace {

double evaluate_policy(const std::function<int(const GridWorld&, int, Rng&)>& act, int grid_size, int n_episodes,
                       std::uint64_t seed) {
    GridWorld env(grid_size, Rng(seed).split(0).key());
    Rng rng = Rng(seed).split(1);
    double total = 0.0;
    for (int e = 0; e < n_episodes; ++e) {
        env.reset();
        const auto colors = env.present_colors();
        const int task = colors[rng.below(colors.size())];
        while (!env.done()) total += env.step(act(env, task, rng), task);
    }
    return total / n_episodes;
}

}  // namespace

double evaluate_greedy_return(const Agent& agent, int grid_size, int n_episodes, std::uint64_t seed) {
    return evaluate_policy(
        [&agent](const GridWorld& env, int task, Rng&) {
            return agent.greedy_action(env.observation(), GridWorld::task_encoding(task));
        },
        grid_size, n_episodes, seed);
}

double evaluate_random_return(int grid_size, int n_episodes, std::uint64_t seed) {
    return evaluate_policy([](const GridWorld&, int, Rng& rng) { return static_cast<int>(rng.below(kGridActions)); },
                           grid_size, n_episodes, seed);
}

}  // namespace uvu
