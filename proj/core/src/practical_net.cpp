#include "uvu/practical_net.hpp"

#include <cmath>

#include "uvu/error.hpp"

namespace uvu {

void PracticalArchSpec::validate() const {
    if (state_dim < 1 || task_dim < 1 || encoder_width < 1 || trunk_width < 1 || trunk_depth < 0 || n_actions < 1 ||
        n_heads < 1) {
        throw ValidationError("PracticalArchSpec: dimensions must be positive");
    }
    if (!(l2_eps > 0.0)) throw ValidationError("PracticalArchSpec: l2_eps must be positive");
}

nlohmann::json PracticalArchSpec::to_json() const {
    return {{"state_dim", state_dim},     {"task_dim", task_dim},       {"encoder_width", encoder_width},
            {"trunk_depth", trunk_depth}, {"trunk_width", trunk_width}, {"n_actions", n_actions},
            {"n_heads", n_heads},         {"l2_eps", l2_eps}};
}

PracticalArchSpec PracticalArchSpec::from_json(const nlohmann::json& j) {
    PracticalArchSpec s;
    s.state_dim = j.value("state_dim", s.state_dim);
    s.task_dim = j.value("task_dim", s.task_dim);
    s.encoder_width = j.value("encoder_width", s.encoder_width);
    s.trunk_depth = j.value("trunk_depth", s.trunk_depth);
    s.trunk_width = j.value("trunk_width", s.trunk_width);
    s.n_actions = j.value("n_actions", s.n_actions);
    s.n_heads = j.value("n_heads", s.n_heads);
    s.l2_eps = j.value("l2_eps", s.l2_eps);
    s.validate();
    return s;
}

template <typename Scalar>
PracticalNet<Scalar>::PracticalNet(PracticalArchSpec spec) : spec_(spec) {
    spec_.validate();
    Eigen::Index off = 0;
    auto block = [&](int rows, int cols) {
        Block b{off, off + static_cast<Eigen::Index>(rows) * cols, rows, cols};
        off = b.b + rows;
        return b;
    };
    enc_s_ = block(spec_.encoder_width, spec_.state_dim);
    enc_z_ = block(spec_.encoder_width, spec_.task_dim);
    int in = spec_.encoder_width;
    for (int i = 0; i < spec_.trunk_depth; ++i) {
        trunk_.push_back(block(spec_.trunk_width, in));
        in = spec_.trunk_width;
    }
    head_ = block(spec_.n_outputs(), in);
    n_params_ = off;
}

template <typename Scalar>
typename PracticalNet<Scalar>::Vec PracticalNet<Scalar>::init(Rng& rng) const {
    Vec p = Vec::Zero(n_params_);
    auto fill = [&](const Block& b) {
        const double limit = std::sqrt(6.0 / b.cols);
        for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(b.rows) * b.cols; ++i) {
            p(b.w + i) = static_cast<Scalar>(rng.uniform(-limit, limit));
        }
    };
    fill(enc_s_);
    fill(enc_z_);
    for (const auto& b : trunk_) fill(b);
    fill(head_);
    return p;
}

namespace {

template <typename Mat, typename Vec>
void l2_normalise(const Mat& x, double eps, Mat& y, Vec& norms) {
    norms = x.colwise().norm().transpose();
    y = x;
    for (Eigen::Index j = 0; j < x.cols(); ++j) y.col(j) /= (norms(j) + static_cast<typename Mat::Scalar>(eps));
}

// y = x / (|x| + eps); returns dL/dx given dL/dy.
template <typename Mat, typename Vec>
Mat l2_normalise_backward(const Mat& x, const Vec& norms, double eps, const Mat& dy) {
    using Scalar = typename Mat::Scalar;
    Mat dx(x.rows(), x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        const Scalar n = norms(j);
        const Scalar d = n + static_cast<Scalar>(eps);
        dx.col(j) = dy.col(j) / d;
        if (n > Scalar(0)) dx.col(j) -= x.col(j) * (x.col(j).dot(dy.col(j)) / (n * d * d));
    }
    return dx;
}

}  // namespace

template <typename Scalar>
typename PracticalNet<Scalar>::Mat PracticalNet<Scalar>::forward(const Vec& params, const Mat& states,
                                                                 const Mat& tasks) const {
    Cache cache;
    forward(params, states, tasks, cache);
    return std::move(cache.out);
}

template <typename Scalar>
const typename PracticalNet<Scalar>::Mat& PracticalNet<Scalar>::forward(const Vec& params, const Mat& states,
                                                                        const Mat& tasks, Cache& c) const {
    if (params.size() != n_params_) throw ValidationError("PracticalNet: parameter vector has wrong length");
    if (states.rows() != spec_.state_dim || tasks.rows() != spec_.task_dim || states.cols() != tasks.cols()) {
        throw ValidationError("PracticalNet: input shape mismatch");
    }
    auto W = [&](const Block& b) { return Eigen::Map<const Mat>(params.data() + b.w, b.rows, b.cols); };
    auto B = [&](const Block& b) { return Eigen::Map<const Vec>(params.data() + b.b, b.rows); };

    c.s = states;
    c.z = tasks;
    c.es.noalias() = W(enc_s_) * states;
    c.es.colwise() += B(enc_s_);
    c.ez.noalias() = W(enc_z_) * tasks;
    c.ez.colwise() += B(enc_z_);
    c.joint = c.es.cwiseProduct(c.ez);
    c.trunk.resize(trunk_.size() + 1);
    l2_normalise(c.joint, spec_.l2_eps, c.trunk[0], c.joint_norm);
    for (std::size_t i = 0; i < trunk_.size(); ++i) {
        Mat z;
        z.noalias() = W(trunk_[i]) * c.trunk[i];
        z.colwise() += B(trunk_[i]);
        c.trunk[i + 1] = z.cwiseMax(Scalar(0));
    }
    l2_normalise(c.trunk.back(), spec_.l2_eps, c.features, c.trunk_norm);
    c.out.noalias() = W(head_) * c.features;
    c.out.colwise() += B(head_);
    return c.out;
}

template <typename Scalar>
void PracticalNet<Scalar>::backward(const Vec& params, const Cache& c, const Mat& cot, Vec& grad) const {
    if (grad.size() != n_params_) grad = Vec::Zero(n_params_);
    auto W = [&](const Block& b) { return Eigen::Map<const Mat>(params.data() + b.w, b.rows, b.cols); };
    auto gW = [&](const Block& b) { return Eigen::Map<Mat>(grad.data() + b.w, b.rows, b.cols); };
    auto gB = [&](const Block& b) { return Eigen::Map<Vec>(grad.data() + b.b, b.rows); };

    gW(head_).noalias() += cot * c.features.transpose();
    gB(head_) += cot.rowwise().sum();
    Mat d = W(head_).transpose() * cot;
    d = l2_normalise_backward(c.trunk.back(), c.trunk_norm, spec_.l2_eps, d);
    for (std::size_t i = trunk_.size(); i-- > 0;) {
        // relu'(0) := 0
        d = d.cwiseProduct((c.trunk[i + 1].array() > Scalar(0)).template cast<Scalar>().matrix());
        gW(trunk_[i]).noalias() += d * c.trunk[i].transpose();
        gB(trunk_[i]) += d.rowwise().sum();
        d = W(trunk_[i]).transpose() * d;
    }
    d = l2_normalise_backward(c.joint, c.joint_norm, spec_.l2_eps, d);
    const Mat d_es = d.cwiseProduct(c.ez);
    const Mat d_ez = d.cwiseProduct(c.es);
    gW(enc_s_).noalias() += d_es * c.s.transpose();
    gB(enc_s_) += d_es.rowwise().sum();
    gW(enc_z_).noalias() += d_ez * c.z.transpose();
    gB(enc_z_) += d_ez.rowwise().sum();
}

template class PracticalNet<float>;
template class PracticalNet<double>;

}  // namespace uvu
