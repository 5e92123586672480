#include <cmath>

#include <gtest/gtest.h>

#include "uvu/error.hpp"
#include "uvu/linear_oracle.hpp"
#include "uvu/verify.hpp"

using namespace uvu;

namespace {

Eigen::MatrixXd gaussian(int r, int c, std::uint64_t seed) {
    Rng rng(seed);
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index j = 0; j < m.cols(); ++j)
        for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = rng.normal();
    return m;
}

}  // namespace

TEST(LinearFeatureModel, KernelIsFeatureGram) {
    auto m = LinearFeatureModel::random_relu(3, 20, 2, 1);
    Eigen::MatrixXd x = gaussian(3, 5, 2);
    Eigen::MatrixXd phi = m.features(x);
    KernelPair kp = m.kernel(x, x);
    EXPECT_LT((kp.theta - phi.transpose() * phi).cwiseAbs().maxCoeff(), 1e-13);
    EXPECT_EQ(kp.theta, kp.kappa);
    EXPECT_EQ(m.n_params(), 40);
}

TEST(LinearFeatureModel, ForwardAndVjp) {
    auto m = LinearFeatureModel::random_fourier(3, 16, 3, 4, 0.5);
    Eigen::MatrixXd x = gaussian(3, 4, 5);
    Rng rng(6);
    Eigen::VectorXd p = m.init(rng);
    Eigen::MatrixXd phi = m.features(x);
    Eigen::MatrixXd out = m.forward(p, x);
    for (int h = 0; h < 3; ++h) {
        EXPECT_LT((out.row(h).transpose() - phi.transpose() * p.segment(16 * h, 16)).cwiseAbs().maxCoeff(), 1e-13);
    }
    Eigen::MatrixXd cot = gaussian(3, 4, 7);
    Eigen::VectorXd g = m.vjp(p, x, cot);
    for (int h = 0; h < 3; ++h) {
        EXPECT_LT((g.segment(16 * h, 16) - phi * cot.row(h).transpose()).cwiseAbs().maxCoeff(), 1e-13);
    }
    // Fourier features: phi(x).phi(x) averages to 1 for many features
    auto wide = LinearFeatureModel::random_fourier(3, 20000, 1, 8);
    Eigen::MatrixXd f = wide.features(x);
    for (Eigen::Index j = 0; j < 4; ++j) EXPECT_NEAR(f.col(j).squaredNorm(), 1.0, 0.05);
}

TEST(SampleMoments, KnownValues) {
    Eigen::MatrixXd s(2, 4);
    s << 1, 2, 3, 4, 2, 4, 6, 8;
    SampleMoments m = sample_moments(s);
    EXPECT_DOUBLE_EQ(m.mean(0), 2.5);
    EXPECT_DOUBLE_EQ(m.cov(0, 0), 5.0 / 3.0);
    EXPECT_DOUBLE_EQ(m.cov(0, 1), 10.0 / 3.0);
    EXPECT_DOUBLE_EQ(m.mean_se(1), std::sqrt(20.0 / 3.0 / 4.0));
    EXPECT_THROW(sample_moments(Eigen::MatrixXd::Zero(2, 1)), ValidationError);
}

TEST(LinearOracle, EverySampleSolvesTheBellmanSystem) {
    auto inst = linear_chain_instances(1, 3, 4)[0];
    TdPoints pts = inst.points;
    // query the converged function on X and X'
    pts.test.resize(pts.train.rows(), 2 * pts.train.cols());
    pts.test << inst.points.train, inst.points.next;
    const Eigen::Index n = pts.train.cols();
    auto res = linear_oracle_solve(inst.model, pts, inst.gamma, inst.rewards, 20, 9);
    const Eigen::VectorXd disc = inst.gamma * pts.bootstrap;
    for (Eigen::Index k = 0; k < 20; ++k) {
        Eigen::VectorXd f = res.samples.col(k);
        Eigen::VectorXd resid = f.head(n) - disc.cwiseProduct(f.tail(n)) - inst.rewards;
        EXPECT_LT(resid.cwiseAbs().maxCoeff(), 1e-8);
    }
}

TEST(LinearOracle, MomentsMatchTdPosterior) {
    auto inst = linear_chain_instances(1, 11, 6)[0];
    TdProblem p = make_td_problem(inst.model.kernel_fn(), inst.points.test, inst.points.train, inst.points.next,
                                  inst.gamma, inst.points.bootstrap, inst.rewards);
    TdGaussian g = td_posterior(p);
    auto res = linear_oracle_solve(inst.model, inst.points, inst.gamma, inst.rewards, 20000, 2);
    const auto& m = res.moments;
    for (Eigen::Index i = 0; i < g.mean.size(); ++i) {
        EXPECT_LE(std::abs(m.mean(i) - g.mean(i)), 4.5 * m.mean_se(i) + 1e-9);
        for (Eigen::Index j = 0; j < g.mean.size(); ++j) {
            EXPECT_LE(std::abs(m.cov(i, j) - g.cov(i, j)), 4.5 * m.cov_se(i, j) + 1e-9);
        }
    }
}

TEST(LinearOracle, MeanUvuErrorIsPosteriorVariance) {
    auto inst = linear_chain_instances(1, 5, 6)[0];
    TdProblem p = make_td_problem(inst.model.kernel_fn(), inst.points.test, inst.points.train, inst.points.next,
                                  inst.gamma, inst.points.bootstrap, inst.rewards);
    const Eigen::VectorXd expect = td_posterior(p).cov.diagonal();
    auto errs = linear_oracle_uvu_errors(inst.model, inst.points, inst.gamma, 1, 20000, 4);
    ASSERT_EQ(errs.size(), 1u);
    const Eigen::MatrixXd half = 0.5 * errs[0].cwiseAbs2();
    for (Eigen::Index i = 0; i < expect.size(); ++i) {
        const Eigen::RowVectorXd row = half.row(i);
        const double mu = row.mean();
        const double se = std::sqrt((row.array() - mu).square().sum() / (row.size() - 1.0) / row.size());
        EXPECT_LE(std::abs(mu - expect(i)), 4.5 * se + 1e-9) << "test point " << i;
    }
}

TEST(LinearOracle, RankDeficientFeaturesAreRejected) {
    auto m = LinearFeatureModel::random_relu(2, 2, 1, 1);
    TdPoints pts;
    pts.train = gaussian(2, 5, 1);
    pts.next = gaussian(2, 5, 2);
    pts.test = gaussian(2, 2, 3);
    pts.bootstrap = Eigen::VectorXd::Ones(5);
    EXPECT_THROW(linear_oracle_solve(m, pts, 0.5, Eigen::VectorXd::Ones(5), 10, 0), SingularSystemError);
}

TEST(LinearOracle, InstancesAreStableAndSmall) {
    for (const auto& inst : linear_chain_instances(4, 0)) {
        EXPECT_LE(inst.model.n_features(), 64);
        EXPECT_LE(inst.points.train.cols(), 40);
        using S = TdProblem::Set;
        TdProblem p = make_td_problem(inst.model.kernel_fn(), inst.points.test, inst.points.train, inst.points.next,
                                      inst.gamma, inst.points.bootstrap, inst.rewards);
        EXPECT_TRUE(stability_check(p.theta(S::train, S::train), p.theta(S::next, S::train), p.discounts()).is_pd);
    }
}
