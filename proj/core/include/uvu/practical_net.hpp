#pragma once

#include <Eigen/Dense>
#include <json.hpp>

#include "uvu/rng.hpp"

namespace uvu {

/// Task-conditioned Q-network: single-layer state and task encoders joined by
/// elementwise product, l2-normalised, a relu trunk, l2-normalised again, and a
/// linear readout with n_actions * n_heads outputs (head-major).
struct PracticalArchSpec {
    int state_dim = 35;
    int task_dim = 6;
    int encoder_width = 512;
    int trunk_depth = 3;
    int trunk_width = 512;
    int n_actions = 4;
    int n_heads = 1;
    double l2_eps = 1e-12;

    [[nodiscard]] int n_outputs() const noexcept { return n_actions * n_heads; }
    void validate() const;
    [[nodiscard]] nlohmann::json to_json() const;
    static PracticalArchSpec from_json(const nlohmann::json& j);
};

template <typename Scalar>
class PracticalNet {
public:
    using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
    using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

    explicit PracticalNet(PracticalArchSpec spec);

    [[nodiscard]] const PracticalArchSpec& spec() const noexcept { return spec_; }
    [[nodiscard]] Eigen::Index n_params() const noexcept { return n_params_; }

    /// He-uniform weights, zero biases.
    [[nodiscard]] Vec init(Rng& rng) const;

    struct Cache {
        Mat s, z;          // inputs
        Mat es, ez;        // encoder outputs
        Mat joint;         // es .* ez
        Vec joint_norm;
        std::vector<Mat> trunk;  // trunk[0] = normalised joint, trunk[i] = relu output of layer i
        Vec trunk_norm;
        Mat features;      // normalised trunk output
        Mat out;
    };

    /// Outputs (n_outputs x batch). `states` is state_dim x batch, `tasks` task_dim x batch.
    [[nodiscard]] Mat forward(const Vec& params, const Mat& states, const Mat& tasks) const;
    const Mat& forward(const Vec& params, const Mat& states, const Mat& tasks, Cache& cache) const;
    /// Accumulates d(sum(cot .* out))/d(params) into `grad`.
    void backward(const Vec& params, const Cache& cache, const Mat& cot, Vec& grad) const;

    /// Index of output (action, head).
    [[nodiscard]] int output_index(int action, int head) const noexcept { return head * spec_.n_actions + action; }

private:
    struct Block {
        Eigen::Index w, b;
        int rows, cols;
    };
    PracticalArchSpec spec_;
    Block enc_s_{}, enc_z_{}, head_{};
    std::vector<Block> trunk_;
    Eigen::Index n_params_ = 0;
};

extern template class PracticalNet<float>;
extern template class PracticalNet<double>;

}  // namespace uvu
