#include "uvu/linear_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "uvu/error.hpp"

namespace uvu {

LinearFeatureModel::LinearFeatureModel(int input_dim, int n_features, int n_heads, FeatureMap phi)
    : input_dim_(input_dim), p_(n_features), heads_(n_heads), phi_(std::move(phi)) {
    if (input_dim < 1 || n_features < 1 || n_heads < 1) {
        throw ValidationError("LinearFeatureModel: dimensions must be positive");
    }
}

LinearFeatureModel LinearFeatureModel::random_relu(int input_dim, int n_features, int n_heads, std::uint64_t seed) {
    Rng rng(seed);
    Eigen::MatrixXd W(n_features, input_dim);
    Eigen::VectorXd b(n_features);
    for (Eigen::Index i = 0; i < W.size(); ++i) W.data()[i] = rng.normal();
    for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = rng.normal();
    const double scale = std::sqrt(2.0 / n_features);
    return LinearFeatureModel(input_dim, n_features, n_heads, [W, b, scale](const Eigen::VectorXd& x) {
        return Eigen::VectorXd(scale * (W * x + b).cwiseMax(0.0));
    });
}

LinearFeatureModel LinearFeatureModel::random_fourier(int input_dim, int n_features, int n_heads, std::uint64_t seed,
                                                      double bandwidth) {
    if (!(bandwidth > 0.0)) throw ValidationError("LinearFeatureModel: bandwidth must be positive");
    Rng rng(seed);
    Eigen::MatrixXd W(n_features, input_dim);
    Eigen::VectorXd b(n_features);
    for (Eigen::Index i = 0; i < W.size(); ++i) W.data()[i] = rng.normal() / bandwidth;
    for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double scale = std::sqrt(2.0 / n_features);
    return LinearFeatureModel(input_dim, n_features, n_heads, [W, b, scale](const Eigen::VectorXd& x) {
        return Eigen::VectorXd(scale * (W * x + b).array().cos());
    });
}

Eigen::MatrixXd LinearFeatureModel::features(const Eigen::MatrixXd& xs) const {
    if (xs.rows() != input_dim_) throw ValidationError("LinearFeatureModel: input dimension mismatch");
    Eigen::MatrixXd F(p_, xs.cols());
    for (Eigen::Index j = 0; j < xs.cols(); ++j) {
        Eigen::VectorXd f = phi_(xs.col(j));
        if (f.size() != p_) throw ValidationError("LinearFeatureModel: feature map returned the wrong size");
        F.col(j) = f;
    }
    return F;
}

Eigen::MatrixXd LinearFeatureModel::forward(const Eigen::VectorXd& params, const Eigen::MatrixXd& x) const {
    if (params.size() != n_params()) throw ValidationError("LinearFeatureModel: parameter vector has wrong length");
    const Eigen::Map<const Eigen::MatrixXd> theta(params.data(), p_, heads_);
    return theta.transpose() * features(x);
}

Eigen::VectorXd LinearFeatureModel::vjp(const Eigen::VectorXd& params, const Eigen::MatrixXd& x,
                                        const Eigen::MatrixXd& cotangent) const {
    if (params.size() != n_params()) throw ValidationError("LinearFeatureModel: parameter vector has wrong length");
    if (cotangent.rows() != heads_ || cotangent.cols() != x.cols()) {
        throw ValidationError("LinearFeatureModel: cotangent shape mismatch");
    }
    Eigen::VectorXd g(n_params());
    Eigen::Map<Eigen::MatrixXd>(g.data(), p_, heads_).noalias() = features(x) * cotangent.transpose();
    return g;
}

Eigen::VectorXd LinearFeatureModel::init(Rng& rng) const {
    Eigen::VectorXd p(n_params());
    for (Eigen::Index i = 0; i < p.size(); ++i) p(i) = rng.normal();
    return p;
}

KernelPair LinearFeatureModel::kernel(const Eigen::MatrixXd& xs, const Eigen::MatrixXd& ys) const {
    const Eigen::MatrixXd k = features(xs).transpose() * features(ys);
    return {k, k};
}

KernelFn LinearFeatureModel::kernel_fn() const {
    return [this](const Eigen::MatrixXd& xs, const Eigen::MatrixXd& ys) { return kernel(xs, ys); };
}

// ---------------------------------------------------------------------------

SampleMoments sample_moments(const Eigen::MatrixXd& samples) {
    const Eigen::Index d = samples.rows();
    const Eigen::Index n = samples.cols();
    if (n < 2) throw ValidationError("sample_moments: need at least two samples");
    SampleMoments m;
    m.mean = samples.rowwise().mean();
    const Eigen::MatrixXd c = samples.colwise() - m.mean;
    const double nn = static_cast<double>(n);
    m.cov = c * c.transpose() / (nn - 1.0);
    m.mean_se = (m.cov.diagonal() / nn).cwiseSqrt();
    m.cov_se.resize(d, d);
    for (Eigen::Index i = 0; i < d; ++i) {
        for (Eigen::Index j = 0; j <= i; ++j) {
            const Eigen::ArrayXd prod = c.row(i).array() * c.row(j).array();
            const double mu = prod.mean();
            const double var = (prod - mu).square().sum() / (nn - 1.0);
            m.cov_se(i, j) = m.cov_se(j, i) = std::sqrt(var / nn);
        }
    }
    return m;
}

namespace {

void check_points(const LinearFeatureModel& model, const TdPoints& pts) {
    if (pts.train.cols() < 1) throw ValidationError("linear oracle: empty training set");
    if (pts.next.cols() != pts.train.cols() || pts.bootstrap.size() != pts.train.cols()) {
        throw ValidationError("linear oracle: X, X' and bootstrap weights must have equal length");
    }
    if (pts.train.rows() != model.input_dim() || pts.next.rows() != model.input_dim() ||
        pts.test.rows() != model.input_dim()) {
        throw ValidationError("linear oracle: point dimension mismatch");
    }
}

// Converged prediction of the linear TD system for a batch of initialisations.
class ExactTdSolver {
public:
    ExactTdSolver(const LinearFeatureModel& model, const TdPoints& pts, double gamma) {
        check_points(model, pts);
        phi_x_ = model.features(pts.train);
        phi_t_ = model.features(pts.test);
        const Eigen::VectorXd g = gamma * pts.bootstrap;
        // rows: phi(x_i) - gamma_i phi(x'_i)
        td_rows_ = (phi_x_ - model.features(pts.next) * g.asDiagonal()).transpose();
        qr_.compute(td_rows_ * phi_x_);
        if (qr_.rank() < phi_x_.cols()) {
            throw SingularSystemError("linear oracle: the feature TD system is singular (duplicate or dependent features)");
        }
    }

    // theta0: p x S, rewards: N x S. Returns converged f(T), n_test x S.
    [[nodiscard]] Eigen::MatrixXd solve(const Eigen::MatrixXd& theta0, const Eigen::MatrixXd& rewards) const {
        const Eigen::MatrixXd rhs = rewards - td_rows_ * theta0;
        const Eigen::MatrixXd w = qr_.solve(rhs);
        return phi_t_.transpose() * (theta0 + phi_x_ * w);
    }

    [[nodiscard]] const Eigen::MatrixXd& phi_x() const { return phi_x_; }
    [[nodiscard]] const Eigen::MatrixXd& phi_t() const { return phi_t_; }
    [[nodiscard]] const Eigen::MatrixXd& td_rows() const { return td_rows_; }

private:
    Eigen::MatrixXd phi_x_, phi_t_, td_rows_;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr_;
};

constexpr long kChunk = 4096;

Eigen::MatrixXd gaussian_block(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
    return m;
}

}  // namespace

LinearOracleResult linear_oracle_solve(const LinearFeatureModel& model, const TdPoints& pts, double gamma,
                                       const Eigen::VectorXd& rewards, long seed_count, std::uint64_t seed) {
    if (seed_count < 2) throw ValidationError("linear_oracle_solve: seed_count must be >= 2");
    if (rewards.size() != pts.train.cols()) throw ValidationError("linear_oracle_solve: one reward per transition");
    const ExactTdSolver solver(model, pts, gamma);
    const int p = model.n_features();
    LinearOracleResult out;
    out.samples.resize(pts.test.cols(), seed_count);
    const Rng root(seed);
    for (long start = 0, chunk = 0; start < seed_count; start += kChunk, ++chunk) {
        const long n = std::min(kChunk, seed_count - start);
        Rng rng = root.split(static_cast<std::uint64_t>(chunk));
        const Eigen::MatrixXd theta0 = gaussian_block(rng, p, n);
        out.samples.middleCols(start, n) = solver.solve(theta0, rewards.replicate(1, n));
    }
    out.moments = sample_moments(out.samples);
    return out;
}

std::vector<Eigen::MatrixXd> linear_oracle_uvu_errors(const LinearFeatureModel& model, const TdPoints& pts,
                                                      double gamma, int n_heads, long seed_count, std::uint64_t seed) {
    if (n_heads < 1 || seed_count < 1) throw ValidationError("linear_oracle_uvu_errors: heads and seeds must be positive");
    const ExactTdSolver solver(model, pts, gamma);
    const int p = model.n_features();
    std::vector<Eigen::MatrixXd> eps(static_cast<std::size_t>(n_heads), Eigen::MatrixXd(pts.test.cols(), seed_count));
    const Rng root(seed);
    for (int h = 0; h < n_heads; ++h) {
        const Rng head_rng = root.split(static_cast<std::uint64_t>(h));
        for (long start = 0, chunk = 0; start < seed_count; start += kChunk, ++chunk) {
            const long n = std::min(kChunk, seed_count - start);
            Rng rng = head_rng.split(static_cast<std::uint64_t>(chunk));
            const Eigen::MatrixXd u0 = gaussian_block(rng, p, n);
            const Eigen::MatrixXd g = gaussian_block(rng, p, n);
            // r_g = g(X) - Gamma g(X') is exactly td_rows * psi.
            const Eigen::MatrixXd r = solver.td_rows() * g;
            eps[static_cast<std::size_t>(h)].middleCols(start, n) = solver.solve(u0, r) - solver.phi_t().transpose() * g;
        }
    }
    return eps;
}

}  // namespace uvu
