#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "uvu/rng.hpp"

namespace uvu {

enum class Nonlinearity { relu, erf, identity };
enum class Parametrization { ntk, standard };
enum class InitScheme { unit_gaussian, he_uniform };

/// Which network a parameter vector belongs to. psi and rnd_target are frozen.
enum class ParamRole { theta, vartheta, psi, rnd_predictor, rnd_target };

std::string to_string(Nonlinearity v);
std::string to_string(Parametrization v);
std::string to_string(InitScheme v);
std::string to_string(ParamRole v);
Nonlinearity nonlinearity_from_string(const std::string& s);
Parametrization parametrization_from_string(const std::string& s);
InitScheme init_scheme_from_string(const std::string& s);
ParamRole param_role_from_string(const std::string& s);

/// Flat parameter storage with a role tag. Frozen roles reject mutation.
class ParamVector {
public:
    ParamVector() = default;
    ParamVector(Eigen::VectorXd values, ParamRole role) : values_(std::move(values)), role_(role) {}

    [[nodiscard]] const Eigen::VectorXd& values() const noexcept { return values_; }
    /// Throws std::logic_error for psi / rnd_target vectors.
    Eigen::VectorXd& mutable_values();
    [[nodiscard]] ParamRole role() const noexcept { return role_; }
    [[nodiscard]] bool frozen() const noexcept { return role_ == ParamRole::psi || role_ == ParamRole::rnd_target; }
    [[nodiscard]] Eigen::Index size() const noexcept { return values_.size(); }
    /// Same values under a different role.
    [[nodiscard]] ParamVector with_role(ParamRole role) const { return {values_, role}; }

private:
    Eigen::VectorXd values_;
    ParamRole role_ = ParamRole::theta;
};

/// Differentiable model f(x; params) with n_outputs heads, used by the
/// theory-mode trainers. Inputs are column-major (input_dim x batch).
class FunctionModel {
public:
    virtual ~FunctionModel() = default;

    [[nodiscard]] virtual Eigen::Index n_params() const = 0;
    [[nodiscard]] virtual int input_dim() const = 0;
    [[nodiscard]] virtual int n_outputs() const = 0;

    /// Outputs, n_outputs x batch.
    [[nodiscard]] virtual Eigen::MatrixXd forward(const Eigen::VectorXd& params, const Eigen::MatrixXd& x) const = 0;
    /// Gradient of sum(cotangent .* forward(params, x)) with respect to params.
    [[nodiscard]] virtual Eigen::VectorXd vjp(const Eigen::VectorXd& params, const Eigen::MatrixXd& x,
                                              const Eigen::MatrixXd& cotangent) const = 0;
    [[nodiscard]] virtual Eigen::VectorXd init(Rng& rng) const = 0;
};

/// Fully connected network with L hidden layers and M linear heads.
struct MlpSpec {
    int input_dim = 1;
    std::vector<int> widths{512};
    int n_heads = 1;
    Nonlinearity nonlinearity = Nonlinearity::relu;
    double sigma_w = 1.0;
    double sigma_b = 0.0;
    Parametrization parametrization = Parametrization::ntk;
    InitScheme init = InitScheme::unit_gaussian;

    [[nodiscard]] int depth() const noexcept { return static_cast<int>(widths.size()); }
    /// Throws ValidationError when malformed.
    void validate() const;
    [[nodiscard]] Eigen::Index n_params() const;
    /// Fan-in of layer l (0-based, l == depth() is the head layer).
    [[nodiscard]] int fan_in(int layer) const { return layer == 0 ? input_dim : widths[static_cast<std::size_t>(layer - 1)]; }
    [[nodiscard]] int fan_out(int layer) const { return layer == depth() ? n_heads : widths[static_cast<std::size_t>(layer)]; }

    [[nodiscard]] nlohmann::json to_json() const;
    static MlpSpec from_json(const nlohmann::json& j);
};

ParamVector init_params(const MlpSpec& spec, std::uint64_t seed, ParamRole role = ParamRole::theta);

class Mlp final : public FunctionModel {
public:
    explicit Mlp(MlpSpec spec);

    [[nodiscard]] const MlpSpec& spec() const noexcept { return spec_; }
    [[nodiscard]] Eigen::Index n_params() const override { return n_params_; }
    [[nodiscard]] int input_dim() const override { return spec_.input_dim; }
    [[nodiscard]] int n_outputs() const override { return spec_.n_heads; }

    [[nodiscard]] Eigen::MatrixXd forward(const Eigen::VectorXd& params, const Eigen::MatrixXd& x) const override;
    [[nodiscard]] Eigen::VectorXd vjp(const Eigen::VectorXd& params, const Eigen::MatrixXd& x,
                                      const Eigen::MatrixXd& cotangent) const override;
    [[nodiscard]] Eigen::VectorXd init(Rng& rng) const override;

    /// Gradient of head `head` at a single input.
    [[nodiscard]] Eigen::VectorXd grad(const Eigen::VectorXd& params, const Eigen::VectorXd& x, int head = 0) const;

    /// Gram matrix of per-input parameter gradients of head `head`, computed
    /// layer by layer without materialising the gradients.
    [[nodiscard]] Eigen::MatrixXd empirical_ntk(const Eigen::VectorXd& params, const Eigen::MatrixXd& xs,
                                                int head = 0) const;
    /// Output covariance over a fresh draw of the head layer given the trunk:
    /// sigma_b^2 + sigma_w^2 / n_L * h(x).h(x'). Converges to the NNGP kernel with width.
    [[nodiscard]] Eigen::MatrixXd empirical_nngp(const Eigen::VectorXd& params, const Eigen::MatrixXd& xs) const;

    struct Layer {
        Eigen::Index w_offset;
        Eigen::Index b_offset;
        int rows;
        int cols;
    };
    [[nodiscard]] const std::vector<Layer>& layers() const noexcept { return layers_; }

private:
    struct Tape {
        std::vector<Eigen::MatrixXd> inputs;  // post-activation input to each layer
        std::vector<Eigen::MatrixXd> pre;     // pre-activation of each hidden layer
        Eigen::MatrixXd out;
    };
    void run(const Eigen::VectorXd& params, const Eigen::MatrixXd& x, Tape& tape) const;
    [[nodiscard]] double w_scale(int layer) const;
    [[nodiscard]] double b_scale() const;

    MlpSpec spec_;
    std::vector<Layer> layers_;
    Eigen::Index n_params_ = 0;
};

/// Elementwise activation and its derivative (relu'(0) := 0).
double activate(Nonlinearity f, double z);
double activate_grad(Nonlinearity f, double z);

/// Explicit gradient Gram matrix; reference for Mlp::empirical_ntk.
Eigen::MatrixXd gradient_gram(const Mlp& net, const Eigen::VectorXd& params, const Eigen::MatrixXd& xs, int head = 0);

// Parameter checkpoints: raw little-endian float64 vector plus a JSON manifest.
void save_checkpoint(const std::string& path, const Eigen::VectorXd& params, const nlohmann::json& manifest);
Eigen::VectorXd load_checkpoint(const std::string& path, nlohmann::json* manifest = nullptr);

}  // namespace uvu
