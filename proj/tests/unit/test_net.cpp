#include <cmath>
#include <filesystem>

#include <gtest/gtest.h>

#include "uvu/error.hpp"
#include "uvu/net.hpp"
#include "uvu/practical_net.hpp"

using namespace uvu;

namespace {

Eigen::MatrixXd gaussian(int r, int c, std::uint64_t seed) {
    Rng rng(seed);
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index j = 0; j < m.cols(); ++j)
        for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = rng.normal();
    return m;
}

MlpSpec small_spec(Nonlinearity f, Parametrization p = Parametrization::ntk) {
    MlpSpec s;
    s.input_dim = 5;
    s.widths = {16, 12};
    s.n_heads = 3;
    s.nonlinearity = f;
    s.sigma_w = 1.3;
    s.sigma_b = 0.2;
    s.parametrization = p;
    return s;
}

// Largest relative gap between the analytic gradient of sum(cot .* f) and
// central differences over every coordinate.
double fd_gap(const Mlp& net, const Eigen::VectorXd& params, const Eigen::MatrixXd& x, const Eigen::MatrixXd& cot) {
    const Eigen::VectorXd g = net.vjp(params, x, cot);
    const double h = 1e-6;
    double worst = 0.0;
    for (Eigen::Index i = 0; i < params.size(); ++i) {
        Eigen::VectorXd p = params;
        p(i) += h;
        const double up = (net.forward(p, x).cwiseProduct(cot)).sum();
        p(i) -= 2 * h;
        const double dn = (net.forward(p, x).cwiseProduct(cot)).sum();
        const double fd = (up - dn) / (2 * h);
        worst = std::max(worst, std::abs(fd - g(i)) / std::max({std::abs(fd), std::abs(g(i)), 1e-6}));
    }
    return worst;
}

}  // namespace

TEST(Mlp, ParameterCount) {
    MlpSpec s = small_spec(Nonlinearity::relu);
    EXPECT_EQ(s.n_params(), 16 * 6 + 12 * 17 + 3 * 13);
    EXPECT_EQ(Mlp(s).n_params(), s.n_params());
}

TEST(Mlp, ForwardMatchesHandWrittenNetwork) {
    MlpSpec s;
    s.input_dim = 3;
    s.widths = {4};
    s.n_heads = 2;
    s.sigma_w = 1.5;
    s.sigma_b = 0.3;
    Mlp net(s);
    Eigen::VectorXd p = init_params(s, 1).values();
    Eigen::MatrixXd x = gaussian(3, 5, 2);
    const auto& L = net.layers();
    Eigen::Map<const Eigen::MatrixXd> W0(p.data() + L[0].w_offset, 4, 3);
    Eigen::Map<const Eigen::VectorXd> b0(p.data() + L[0].b_offset, 4);
    Eigen::Map<const Eigen::MatrixXd> W1(p.data() + L[1].w_offset, 2, 4);
    Eigen::Map<const Eigen::VectorXd> b1(p.data() + L[1].b_offset, 2);
    Eigen::MatrixXd pre = (1.5 / std::sqrt(3.0)) * W0 * x;
    pre.colwise() += 0.3 * b0;
    Eigen::MatrixXd h = pre.cwiseMax(0.0);
    Eigen::MatrixXd out = (1.5 / std::sqrt(4.0)) * W1 * h;
    out.colwise() += 0.3 * b1;
    EXPECT_LT((net.forward(p, x) - out).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(Mlp, GradientMatchesFiniteDifferences) {
    for (auto f : {Nonlinearity::erf, Nonlinearity::identity, Nonlinearity::relu}) {
        for (auto par : {Parametrization::ntk, Parametrization::standard}) {
            MlpSpec s = small_spec(f, par);
            if (par == Parametrization::standard) s.init = InitScheme::he_uniform;
            Mlp net(s);
            Eigen::VectorXd p = init_params(s, 3).values();
            Eigen::MatrixXd x = gaussian(5, 4, 4);
            Eigen::MatrixXd cot = gaussian(3, 4, 5);
            EXPECT_LT(fd_gap(net, p, x, cot), 1e-5) << to_string(f) << " " << to_string(par);
        }
    }
}

TEST(Mlp, EmpiricalNtkIsGradientGram) {
    MlpSpec s = small_spec(Nonlinearity::relu);
    Mlp net(s);
    Eigen::VectorXd p = init_params(s, 6).values();
    Eigen::MatrixXd x = gaussian(5, 6, 7);
    for (int head = 0; head < 3; ++head) {
        Eigen::MatrixXd g(p.size(), x.cols());
        for (Eigen::Index j = 0; j < x.cols(); ++j) g.col(j) = net.grad(p, x.col(j), head);
        const Eigen::MatrixXd explicit_gram = g.transpose() * g;
        EXPECT_LT((net.empirical_ntk(p, x, head) - explicit_gram).cwiseAbs().maxCoeff(),
                  1e-10 * explicit_gram.cwiseAbs().maxCoeff());
        EXPECT_LT((gradient_gram(net, p, x, head) - explicit_gram).cwiseAbs().maxCoeff(),
                  1e-10 * explicit_gram.cwiseAbs().maxCoeff());
    }
}

TEST(Mlp, EmpiricalNngpFromLastHiddenLayer) {
    MlpSpec s;
    s.input_dim = 4;
    s.widths = {7};
    s.sigma_w = 1.2;
    s.sigma_b = 0.5;
    Mlp net(s);
    Eigen::VectorXd p = init_params(s, 2).values();
    Eigen::MatrixXd x = gaussian(4, 3, 9);
    const auto& L = net.layers();
    Eigen::Map<const Eigen::MatrixXd> W0(p.data() + L[0].w_offset, 7, 4);
    Eigen::Map<const Eigen::VectorXd> b0(p.data() + L[0].b_offset, 7);
    Eigen::MatrixXd pre = (1.2 / 2.0) * W0 * x;
    pre.colwise() += 0.5 * b0;
    Eigen::MatrixXd h = pre.cwiseMax(0.0);
    Eigen::MatrixXd k = (1.44 / 7.0) * h.transpose() * h;
    k.array() += 0.25;
    EXPECT_LT((net.empirical_nngp(p, x) - k).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Mlp, RejectsBadShapes) {
    MlpSpec s = small_spec(Nonlinearity::relu);
    Mlp net(s);
    EXPECT_THROW((void)net.forward(Eigen::VectorXd::Zero(3), gaussian(5, 1, 1)), ValidationError);
    EXPECT_THROW((void)net.forward(init_params(s, 0).values(), gaussian(4, 1, 1)), ValidationError);
    MlpSpec bad = s;
    bad.widths = {0};
    EXPECT_THROW(bad.validate(), ValidationError);
    bad = s;
    bad.sigma_w = 0.0;
    EXPECT_THROW(bad.validate(), ValidationError);
}

TEST(Mlp, SpecJsonRoundTrip) {
    MlpSpec s = small_spec(Nonlinearity::erf, Parametrization::standard);
    s.init = InitScheme::he_uniform;
    MlpSpec back = MlpSpec::from_json(s.to_json());
    EXPECT_EQ(back.to_json(), s.to_json());
}

TEST(ParamVector, FrozenRoles) {
    MlpSpec s = small_spec(Nonlinearity::relu);
    ParamVector psi = init_params(s, 1, ParamRole::psi);
    EXPECT_TRUE(psi.frozen());
    EXPECT_THROW(psi.mutable_values(), std::logic_error);
    ParamVector target = psi.with_role(ParamRole::rnd_target);
    EXPECT_THROW(target.mutable_values(), std::logic_error);
    ParamVector theta = psi.with_role(ParamRole::theta);
    theta.mutable_values()(0) = 5.0;
    EXPECT_NE(theta.values()(0), psi.values()(0));
    EXPECT_EQ(init_params(s, 4).values(), init_params(s, 4).values());
}

TEST(Checkpoint, RoundTripIsBitExact) {
    auto dir = std::filesystem::temp_directory_path() / "uvu_test_ckpt";
    std::filesystem::create_directories(dir);
    const std::string path = (dir / "p.bin").string();
    Eigen::VectorXd p = gaussian(257, 1, 3);
    p(0) = 1.0 / 3.0;
    save_checkpoint(path, p, {{"name", "p"}});
    nlohmann::json m;
    Eigen::VectorXd back = load_checkpoint(path, &m);
    EXPECT_EQ(back, p);
    EXPECT_EQ(m.at("name"), "p");
    EXPECT_THROW(load_checkpoint((dir / "none.bin").string()), ValidationError);
}

// ---------------------------------------------------------------------------

namespace {

PracticalArchSpec small_arch() {
    PracticalArchSpec a;
    a.state_dim = 6;
    a.task_dim = 3;
    a.encoder_width = 10;
    a.trunk_depth = 2;
    a.trunk_width = 8;
    a.n_actions = 4;
    a.n_heads = 2;
    return a;
}

}  // namespace

TEST(PracticalNet, FeaturesAreUnitNorm) {
    PracticalNet<double> net(small_arch());
    Rng rng(1);
    auto p = net.init(rng);
    PracticalNet<double>::Cache c;
    net.forward(p, gaussian(6, 5, 2), gaussian(3, 5, 3), c);
    // l2_eps in the denominator shifts the norm by O(eps / |x|^2)
    for (Eigen::Index j = 0; j < 5; ++j) {
        EXPECT_NEAR(c.features.col(j).norm(), 1.0, 1e-9);
        EXPECT_NEAR(c.trunk[0].col(j).norm(), 1.0, 1e-9);
        EXPECT_LT((c.joint.col(j) - c.es.col(j).cwiseProduct(c.ez.col(j))).norm(), 1e-14);
    }
    EXPECT_EQ(c.out.rows(), 8);
    EXPECT_EQ(net.output_index(3, 1), 7);
}

TEST(PracticalNet, GradientMatchesFiniteDifferences) {
    PracticalNet<double> net(small_arch());
    Rng rng(2);
    auto p = net.init(rng);
    // nonzero biases so every term of the backward pass is exercised
    for (Eigen::Index i = 0; i < p.size(); ++i) p(i) += 0.05 * rng.normal();
    const Eigen::MatrixXd s = gaussian(6, 3, 4), z = gaussian(3, 3, 5), cot = gaussian(8, 3, 6);
    PracticalNet<double>::Cache c;
    net.forward(p, s, z, c);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(p.size());
    net.backward(p, c, cot, g);
    const double h = 1e-6;
    double worst = 0.0;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        Eigen::VectorXd q = p;
        q(i) += h;
        const double up = net.forward(q, s, z).cwiseProduct(cot).sum();
        q(i) -= 2 * h;
        const double dn = net.forward(q, s, z).cwiseProduct(cot).sum();
        const double fd = (up - dn) / (2 * h);
        worst = std::max(worst, std::abs(fd - g(i)) / std::max({std::abs(fd), std::abs(g(i)), 1e-6}));
    }
    EXPECT_LT(worst, 1e-5);
}

TEST(PracticalNet, BackwardAccumulates) {
    PracticalNet<double> net(small_arch());
    Rng rng(3);
    auto p = net.init(rng);
    PracticalNet<double>::Cache c;
    net.forward(p, gaussian(6, 2, 1), gaussian(3, 2, 2), c);
    const Eigen::MatrixXd cot = gaussian(8, 2, 3);
    Eigen::VectorXd once = Eigen::VectorXd::Zero(p.size()), twice = once;
    net.backward(p, c, cot, once);
    net.backward(p, c, cot, twice);
    net.backward(p, c, cot, twice);
    EXPECT_LT((twice - 2 * once).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(PracticalNet, FloatTracksDouble) {
    PracticalNet<double> nd(small_arch());
    PracticalNet<float> nf(small_arch());
    Rng r1(4), r2(4);
    auto pd = nd.init(r1);
    auto pf = nf.init(r2);
    EXPECT_LT((pd.cast<float>() - pf).cwiseAbs().maxCoeff(), 1e-6f);
    const Eigen::MatrixXd s = gaussian(6, 4, 1), z = gaussian(3, 4, 2);
    const Eigen::MatrixXd od = nd.forward(pd, s, z);
    const Eigen::MatrixXf of = nf.forward(pf, s.cast<float>(), z.cast<float>());
    EXPECT_LT((od.cast<float>() - of).cwiseAbs().maxCoeff(), 1e-4f);
}

TEST(PracticalNet, ArchValidation) {
    PracticalArchSpec a = small_arch();
    a.trunk_depth = -1;
    EXPECT_THROW(a.validate(), ValidationError);
    EXPECT_EQ(PracticalArchSpec::from_json(small_arch().to_json()).to_json(), small_arch().to_json());
}
