#include "uvu/ntk.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <numbers>

#include <boost/math/distributions/chi_squared.hpp>

#include "uvu/csv.hpp"
#include "uvu/error.hpp"

namespace uvu {

GaussianExpectation gaussian_expectation(Nonlinearity f, double k11, double k22, double k12) {
    using std::numbers::pi;
    GaussianExpectation e;
    switch (f) {
        case Nonlinearity::identity:
            e.phi_phi = k12;
            e.dphi_dphi = 1.0;
            break;
        case Nonlinearity::relu: {
            const double norm = std::sqrt(k11 * k22);
            if (norm <= 0.0) break;  // one of the variables is identically 0
            const double c = std::clamp(k12 / norm, -1.0, 1.0);
            const double th = std::acos(c);
            e.phi_phi = norm / (2.0 * pi) * (std::sin(th) + (pi - th) * c);
            e.dphi_dphi = (pi - th) / (2.0 * pi);
            break;
        }
        case Nonlinearity::erf: {
            const double a = 1.0 + 2.0 * k11;
            const double b = 1.0 + 2.0 * k22;
            e.phi_phi = 2.0 / pi * std::asin(std::clamp(2.0 * k12 / std::sqrt(a * b), -1.0, 1.0));
            e.dphi_dphi = 4.0 / pi / std::sqrt(a * b - 4.0 * k12 * k12);
            break;
        }
    }
    return e;
}

Eigen::MatrixXd normalize_columns(const Eigen::MatrixXd& xs) {
    Eigen::MatrixXd out = xs;
    for (Eigen::Index j = 0; j < xs.cols(); ++j) {
        const double n = xs.col(j).norm();
        if (n > 0.0) out.col(j) /= n;
    }
    return out;
}

namespace {

struct DiagState {
    Eigen::VectorXd kx, ky;  // kappa^l(x, x), kappa^l(y, y)
};

}  // namespace

std::vector<KernelLayerState> kernel_layers(const MlpSpec& spec, const Eigen::MatrixXd& xs_in,
                                            const Eigen::MatrixXd& ys_in, const KernelOptions& opts) {
    spec.validate();
    if (spec.parametrization != Parametrization::ntk) {
        throw ValidationError("kernel recursion requires the ntk parametrization");
    }
    if (xs_in.rows() != spec.input_dim || ys_in.rows() != spec.input_dim) {
        throw ValidationError("kernel: input dimension mismatch");
    }
    const Eigen::MatrixXd xs = opts.normalize_inputs ? normalize_columns(xs_in) : xs_in;
    const Eigen::MatrixXd ys = opts.normalize_inputs ? normalize_columns(ys_in) : ys_in;
    const double sw2 = spec.sigma_w * spec.sigma_w;
    const double sb2 = spec.sigma_b * spec.sigma_b;
    const double n0 = spec.input_dim;

    std::vector<KernelLayerState> layers;
    KernelLayerState first;
    first.kappa = (sw2 / n0) * (xs.transpose() * ys);
    first.kappa.array() += sb2;
    first.theta = first.kappa;
    DiagState d;
    d.kx = (sw2 / n0) * xs.colwise().squaredNorm().transpose();
    d.kx.array() += sb2;
    d.ky = (sw2 / n0) * ys.colwise().squaredNorm().transpose();
    d.ky.array() += sb2;
    layers.push_back(std::move(first));

    for (int l = 0; l < spec.depth(); ++l) {
        auto& prev = layers.back();
        const Eigen::Index n = prev.kappa.rows();
        const Eigen::Index m = prev.kappa.cols();
        KernelLayerState next;
        next.kappa.resize(n, m);
        prev.kappa_dot.resize(n, m);
        for (Eigen::Index j = 0; j < m; ++j) {
            for (Eigen::Index i = 0; i < n; ++i) {
                const auto e = gaussian_expectation(spec.nonlinearity, d.kx(i), d.ky(j), prev.kappa(i, j));
                next.kappa(i, j) = sb2 + sw2 * e.phi_phi;
                prev.kappa_dot(i, j) = sw2 * e.dphi_dphi;
            }
        }
        next.theta = prev.theta.cwiseProduct(prev.kappa_dot) + next.kappa;
        DiagState nd;
        nd.kx.resize(n);
        nd.ky.resize(m);
        for (Eigen::Index i = 0; i < n; ++i) {
            nd.kx(i) = sb2 + sw2 * gaussian_expectation(spec.nonlinearity, d.kx(i), d.kx(i), d.kx(i)).phi_phi;
        }
        for (Eigen::Index j = 0; j < m; ++j) {
            nd.ky(j) = sb2 + sw2 * gaussian_expectation(spec.nonlinearity, d.ky(j), d.ky(j), d.ky(j)).phi_phi;
        }
        d = std::move(nd);
        layers.push_back(std::move(next));
    }
    return layers;
}

Eigen::MatrixXd nngp_kernel(const MlpSpec& spec, const Eigen::MatrixXd& xs, const Eigen::MatrixXd& ys,
                            const KernelOptions& opts) {
    return kernel_layers(spec, xs, ys, opts).back().kappa;
}

KernelPair ntk_kernel(const MlpSpec& spec, const Eigen::MatrixXd& xs, const Eigen::MatrixXd& ys,
                      const KernelOptions& opts) {
    auto layers = kernel_layers(spec, xs, ys, opts);
    return {std::move(layers.back().theta), std::move(layers.back().kappa)};
}

KernelFn mlp_kernel_fn(const MlpSpec& spec, const KernelOptions& opts) {
    return [spec, opts](const Eigen::MatrixXd& xs, const Eigen::MatrixXd& ys) { return ntk_kernel(spec, xs, ys, opts); };
}

// ---------------------------------------------------------------------------

namespace {

Eigen::Index offset(const TdProblem& p, TdProblem::Set s) {
    switch (s) {
        case TdProblem::Set::test: return 0;
        case TdProblem::Set::train: return p.n_test;
        case TdProblem::Set::next: return p.n_test + p.n_train;
    }
    return 0;
}

Eigen::Index extent(const TdProblem& p, TdProblem::Set s) { return s == TdProblem::Set::test ? p.n_test : p.n_train; }

}  // namespace

Eigen::MatrixXd TdProblem::theta(Set rows, Set cols) const {
    return joint.theta.block(offset(*this, rows), offset(*this, cols), extent(*this, rows), extent(*this, cols));
}

Eigen::MatrixXd TdProblem::kappa(Set rows, Set cols) const {
    return joint.kappa.block(offset(*this, rows), offset(*this, cols), extent(*this, rows), extent(*this, cols));
}

void TdProblem::validate() const {
    const Eigen::Index total = n_test + 2 * n_train;
    if (n_train < 1) throw ValidationError("TdProblem: empty training set");
    if (joint.theta.rows() != total || joint.theta.cols() != total || joint.kappa.rows() != total ||
        joint.kappa.cols() != total) {
        throw ValidationError("TdProblem: kernel blocks have the wrong shape");
    }
    if (bootstrap.size() != n_train || rewards.size() != n_train) {
        throw ValidationError("TdProblem: bootstrap and reward vectors must have one entry per transition");
    }
    if (!(gamma >= 0.0 && gamma < 1.0)) throw ValidationError("TdProblem: gamma must lie in [0, 1)");
}

TdProblem make_td_problem(const KernelFn& kernel, const Eigen::MatrixXd& test, const Eigen::MatrixXd& train,
                          const Eigen::MatrixXd& next, double gamma, const Eigen::VectorXd& bootstrap,
                          const Eigen::VectorXd& rewards) {
    if (train.cols() != next.cols()) throw ValidationError("make_td_problem: X and X' differ in size");
    if (test.rows() != train.rows() || next.rows() != train.rows()) {
        throw ValidationError("make_td_problem: point dimension mismatch");
    }
    for (Eigen::Index i = 0; i < train.cols(); ++i) {
        for (Eigen::Index j = i + 1; j < train.cols(); ++j) {
            if (train.col(i) == train.col(j)) {
                throw ValidationError("make_td_problem: duplicate training inputs make Theta_XX singular");
            }
        }
    }
    Eigen::MatrixXd all(train.rows(), test.cols() + 2 * train.cols());
    all << test, train, next;
    TdProblem p;
    p.joint = kernel(all, all);
    p.n_test = test.cols();
    p.n_train = train.cols();
    p.gamma = gamma;
    p.bootstrap = bootstrap;
    p.rewards = rewards;
    p.validate();
    return p;
}

StabilityReport stability_check(const Eigen::MatrixXd& theta_XX, const Eigen::MatrixXd& theta_XpX, double gamma) {
    return stability_check(theta_XX, theta_XpX, Eigen::VectorXd::Constant(theta_XX.rows(), gamma));
}

StabilityReport stability_check(const Eigen::MatrixXd& theta_XX, const Eigen::MatrixXd& theta_XpX,
                                const Eigen::VectorXd& discounts) {
    if (theta_XX.rows() != theta_XX.cols() || theta_XpX.rows() != theta_XX.rows() ||
        theta_XpX.cols() != theta_XX.cols() || discounts.size() != theta_XX.rows()) {
        throw ValidationError("stability_check: matrices must be square and of equal size");
    }
    const Eigen::MatrixXd delta = theta_XX - discounts.asDiagonal() * theta_XpX;
    // x^T Delta x only sees the symmetric part.
    const Eigen::MatrixXd sym = 0.5 * (delta + delta.transpose());
    StabilityReport r;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym, Eigen::EigenvaluesOnly);
    r.min_eigenvalue = es.eigenvalues().minCoeff();
    r.gershgorin_lower_bound = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < sym.rows(); ++i) {
        const double radius = sym.row(i).cwiseAbs().sum() - std::abs(sym(i, i));
        r.gershgorin_lower_bound = std::min(r.gershgorin_lower_bound, sym(i, i) - radius);
    }
    r.is_pd = r.min_eigenvalue > 0.0;
    return r;
}

TdOperatorMatrices td_operators(const TdProblem& p, const SolveOptions& opts) {
    p.validate();
    using S = TdProblem::Set;
    const Eigen::VectorXd g = p.discounts();
    TdOperatorMatrices m;
    m.gamma = p.gamma;
    const Eigen::MatrixXd theta_XX = p.theta(S::train, S::train);
    const Eigen::MatrixXd theta_XpX = p.theta(S::next, S::train);
    m.stability = stability_check(theta_XX, theta_XpX, g);
    m.delta_X = theta_XX - g.asDiagonal() * theta_XpX;
    if (!m.stability.is_pd) {
        if (!opts.jitter) {
            char buf[256];
            std::snprintf(buf, sizeof buf,
                          "Delta = Theta_XX - gamma Theta_X'X is not positive definite "
                          "(min eigenvalue of symmetric part %.3e, Gershgorin bound %.3e)",
                          m.stability.min_eigenvalue, m.stability.gershgorin_lower_bound);
            throw NonPositiveDefiniteDelta(buf, m.stability.min_eigenvalue, m.stability.gershgorin_lower_bound);
        }
        m.delta_X.diagonal().array() += 1e-8 * m.delta_X.trace() / static_cast<double>(p.n_train);
        m.jittered = true;
    }
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(m.delta_X);
    m.delta_inv = lu.inverse();
    m.lambda_X = p.kappa(S::train, S::train) - g.asDiagonal() * p.kappa(S::next, S::train);
    m.lambda_Xp = p.kappa(S::train, S::next) - g.asDiagonal() * p.kappa(S::next, S::next);
    m.lambda_T = p.kappa(S::train, S::test) - g.asDiagonal() * p.kappa(S::next, S::test);
    return m;
}

TdGaussian td_posterior(const TdProblem& p, const SolveOptions& opts) {
    using S = TdProblem::Set;
    const TdOperatorMatrices m = td_operators(p, opts);
    const Eigen::VectorXd g = p.discounts();
    const Eigen::MatrixXd K = p.theta(S::test, S::train) * m.delta_inv;  // Theta_TX Delta^-1
    TdGaussian out;
    out.mean = K * p.rewards;
    const Eigen::MatrixXd cross = K * m.lambda_T;
    const Eigen::MatrixXd inner = m.lambda_X - m.lambda_Xp * g.asDiagonal();
    out.cov = p.kappa(S::test, S::test) - cross - cross.transpose() + K * inner * K.transpose();
    return out;
}

TdGaussian supervised_posterior(const Eigen::MatrixXd& theta_XX, const Eigen::MatrixXd& theta_TX,
                                const Eigen::MatrixXd& kappa_XX, const Eigen::MatrixXd& kappa_TX,
                                const Eigen::MatrixXd& kappa_TT, const Eigen::VectorXd& y) {
    Eigen::LDLT<Eigen::MatrixXd> ldlt(theta_XX);
    if (ldlt.info() != Eigen::Success) throw SingularSystemError("supervised_posterior: Theta_XX factorisation failed");
    const Eigen::MatrixXd K = ldlt.solve(theta_TX.transpose()).transpose();
    TdGaussian out;
    out.mean = K * y;
    const Eigen::MatrixXd cross = K * kappa_TX.transpose();
    out.cov = kappa_TT - cross - cross.transpose() + K * kappa_XX * K.transpose();
    return out;
}

Eigen::VectorXd post_convergence_function(const TdProblem& p, const Eigen::VectorXd& f0_test,
                                          const Eigen::VectorXd& f0_train, const Eigen::VectorXd& f0_next,
                                          const SolveOptions& opts) {
    using S = TdProblem::Set;
    if (f0_test.size() != p.n_test || f0_train.size() != p.n_train || f0_next.size() != p.n_train) {
        throw ValidationError("post_convergence_function: initial function values have the wrong size");
    }
    const TdOperatorMatrices m = td_operators(p, opts);
    const Eigen::VectorXd residual = f0_train - p.discounts().cwiseProduct(f0_next) - p.rewards;
    return f0_test - p.theta(S::test, S::train) * (m.delta_inv * residual);
}

BlockAffinePosterior block_affine_posterior(const TdProblem& p, const SolveOptions& opts) {
    using S = TdProblem::Set;
    const TdOperatorMatrices m = td_operators(p, opts);
    const Eigen::VectorXd g = p.discounts();
    const Eigen::Index nt = p.n_test;
    const Eigen::Index n = p.n_train;
    const Eigen::Index total = nt + 2 * n;

    BlockAffinePosterior out;
    out.n_test = nt;
    out.n_train = n;
    out.A = Eigen::MatrixXd::Identity(total, total);
    out.b.resize(total);
    const S sets[3] = {S::test, S::train, S::next};
    for (const S rows : sets) {
        const Eigen::Index r0 = offset(p, rows);
        const Eigen::Index nr = extent(p, rows);
        const Eigen::MatrixXd K = p.theta(rows, S::train) * m.delta_inv;
        out.A.block(r0, nt, nr, n) -= K;
        out.A.block(r0, nt + n, nr, n) += K * g.asDiagonal();
        out.b.segment(r0, nr) = K * p.rewards;
    }
    out.cov = out.A * p.joint.kappa * out.A.transpose();
    return out;
}

double UvuErrorLaw::variance(Eigen::Index i, int n_heads) const {
    const double s = sigma_q2(i);
    return 2.0 * s * s / n_heads;
}

double UvuErrorLaw::cdf(Eigen::Index i, int n_heads, double x) const {
    const double scale = sigma_q2(i) / n_heads;
    if (scale <= 0.0) return x >= 0.0 ? 1.0 : 0.0;
    if (x <= 0.0) return 0.0;
    return boost::math::cdf(boost::math::chi_squared(n_heads), x / scale);
}

UvuErrorLaw uvu_error_law(const TdGaussian& g) {
    UvuErrorLaw law;
    law.sigma_q2 = g.cov.diagonal().cwiseMax(0.0);
    return law;
}

// ---------------------------------------------------------------------------

std::string point_set_hash(const Eigen::MatrixXd& xs) {
    std::uint64_t h = 1469598103934665603ULL;
    const auto* bytes = reinterpret_cast<const unsigned char*>(xs.data());
    const std::size_t n = static_cast<std::size_t>(xs.size()) * sizeof(double);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= bytes[i];
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

namespace {

void write_manifest(const std::string& path, const nlohmann::json& manifest) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write " + path);
    out << manifest.dump(2) << '\n';
}

}  // namespace

void export_kernel_pair(const std::string& prefix, const KernelPair& kp, const nlohmann::json& manifest) {
    write_matrix_csv(prefix + "_theta.csv", kp.theta);
    write_matrix_csv(prefix + "_kappa.csv", kp.kappa);
    write_manifest(prefix + ".json", manifest);
}

void export_td_gaussian(const std::string& prefix, const TdGaussian& g, const nlohmann::json& manifest) {
    write_matrix_csv(prefix + "_mean.csv", g.mean);
    write_matrix_csv(prefix + "_cov.csv", g.cov);
    write_manifest(prefix + ".json", manifest);
}

}  // namespace uvu
