#include "uvu/net.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "uvu/error.hpp"

namespace uvu {

std::string to_string(Nonlinearity v) {
    switch (v) {
        case Nonlinearity::relu: return "relu";
        case Nonlinearity::erf: return "erf";
        case Nonlinearity::identity: return "identity";
    }
    return "?";
}
std::string to_string(Parametrization v) { return v == Parametrization::ntk ? "ntk" : "standard"; }
std::string to_string(InitScheme v) { return v == InitScheme::unit_gaussian ? "unit_gaussian" : "he_uniform"; }
std::string to_string(ParamRole v) {
    switch (v) {
        case ParamRole::theta: return "theta";
        case ParamRole::vartheta: return "vartheta";
        case ParamRole::psi: return "psi";
        case ParamRole::rnd_predictor: return "rnd_predictor";
        case ParamRole::rnd_target: return "rnd_target";
    }
    return "?";
}

Nonlinearity nonlinearity_from_string(const std::string& s) {
    if (s == "relu") return Nonlinearity::relu;
    if (s == "erf") return Nonlinearity::erf;
    if (s == "identity") return Nonlinearity::identity;
    throw ValidationError("unknown nonlinearity: " + s);
}
Parametrization parametrization_from_string(const std::string& s) {
    if (s == "ntk") return Parametrization::ntk;
    if (s == "standard") return Parametrization::standard;
    throw ValidationError("unknown parametrization: " + s);
}
InitScheme init_scheme_from_string(const std::string& s) {
    if (s == "unit_gaussian") return InitScheme::unit_gaussian;
    if (s == "he_uniform") return InitScheme::he_uniform;
    throw ValidationError("unknown init scheme: " + s);
}
ParamRole param_role_from_string(const std::string& s) {
    for (auto r : {ParamRole::theta, ParamRole::vartheta, ParamRole::psi, ParamRole::rnd_predictor,
                   ParamRole::rnd_target}) {
        if (to_string(r) == s) return r;
    }
    throw ValidationError("unknown parameter role: " + s);
}

Eigen::VectorXd& ParamVector::mutable_values() {
    if (frozen()) throw std::logic_error("parameter vector with role " + to_string(role_) + " is frozen");
    return values_;
}

// ---------------------------------------------------------------------------

void MlpSpec::validate() const {
    if (input_dim < 1) throw ValidationError("MlpSpec: input_dim must be positive");
    if (n_heads < 1) throw ValidationError("MlpSpec: n_heads must be >= 1");
    for (int w : widths) {
        if (w < 1) throw ValidationError("MlpSpec: widths must be positive");
    }
    if (!(sigma_w > 0.0) || sigma_b < 0.0) throw ValidationError("MlpSpec: sigma_w > 0 and sigma_b >= 0 required");
}

Eigen::Index MlpSpec::n_params() const {
    Eigen::Index n = 0;
    for (int l = 0; l <= depth(); ++l) n += static_cast<Eigen::Index>(fan_out(l)) * (fan_in(l) + 1);
    return n;
}

nlohmann::json MlpSpec::to_json() const {
    return {{"input_dim", input_dim},
            {"widths", widths},
            {"n_heads", n_heads},
            {"nonlinearity", to_string(nonlinearity)},
            {"sigma_w", sigma_w},
            {"sigma_b", sigma_b},
            {"parametrization", to_string(parametrization)},
            {"init", to_string(init)}};
}

MlpSpec MlpSpec::from_json(const nlohmann::json& j) {
    MlpSpec s;
    s.input_dim = j.at("input_dim").get<int>();
    s.widths = j.at("widths").get<std::vector<int>>();
    s.n_heads = j.value("n_heads", 1);
    s.nonlinearity = nonlinearity_from_string(j.value("nonlinearity", std::string("relu")));
    s.sigma_w = j.value("sigma_w", 1.0);
    s.sigma_b = j.value("sigma_b", 0.0);
    s.parametrization = parametrization_from_string(j.value("parametrization", std::string("ntk")));
    s.init = init_scheme_from_string(j.value("init", std::string("unit_gaussian")));
    s.validate();
    return s;
}

double activate(Nonlinearity f, double z) {
    switch (f) {
        case Nonlinearity::relu: return z > 0.0 ? z : 0.0;
        case Nonlinearity::erf: return std::erf(z);
        case Nonlinearity::identity: return z;
    }
    return z;
}

double activate_grad(Nonlinearity f, double z) {
    switch (f) {
        case Nonlinearity::relu: return z > 0.0 ? 1.0 : 0.0;
        case Nonlinearity::erf: return M_2_SQRTPI * std::exp(-z * z);
        case Nonlinearity::identity: return 1.0;
    }
    return 1.0;
}

// ---------------------------------------------------------------------------

Mlp::Mlp(MlpSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
    Eigen::Index off = 0;
    for (int l = 0; l <= spec_.depth(); ++l) {
        Layer layer{};
        layer.rows = spec_.fan_out(l);
        layer.cols = spec_.fan_in(l);
        layer.w_offset = off;
        off += static_cast<Eigen::Index>(layer.rows) * layer.cols;
        layer.b_offset = off;
        off += layer.rows;
        layers_.push_back(layer);
    }
    n_params_ = off;
}

double Mlp::w_scale(int layer) const {
    if (spec_.parametrization == Parametrization::standard) return 1.0;
    return spec_.sigma_w / std::sqrt(static_cast<double>(spec_.fan_in(layer)));
}

double Mlp::b_scale() const { return spec_.parametrization == Parametrization::standard ? 1.0 : spec_.sigma_b; }

Eigen::VectorXd Mlp::init(Rng& rng) const {
    Eigen::VectorXd p(n_params_);
    if (spec_.init == InitScheme::unit_gaussian) {
        for (Eigen::Index i = 0; i < p.size(); ++i) p(i) = rng.normal();
        return p;
    }
    p.setZero();
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const auto& L = layers_[l];
        const double limit = std::sqrt(6.0 / L.cols);
        for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(L.rows) * L.cols; ++i) {
            p(L.w_offset + i) = rng.uniform(-limit, limit);
        }
    }
    return p;
}

ParamVector init_params(const MlpSpec& spec, std::uint64_t seed, ParamRole role) {
    Rng rng(seed);
    return {Mlp(spec).init(rng), role};
}

void Mlp::run(const Eigen::VectorXd& params, const Eigen::MatrixXd& x, Tape& tape) const {
    if (params.size() != n_params_) throw ValidationError("Mlp: parameter vector has wrong length");
    if (x.rows() != spec_.input_dim) throw ValidationError("Mlp: input dimension mismatch");
    const int depth = spec_.depth();
    tape.inputs.resize(static_cast<std::size_t>(depth + 1));
    tape.pre.resize(static_cast<std::size_t>(depth));
    Eigen::MatrixXd h = x;
    for (int l = 0; l <= depth; ++l) {
        const auto& L = layers_[static_cast<std::size_t>(l)];
        Eigen::Map<const Eigen::MatrixXd> W(params.data() + L.w_offset, L.rows, L.cols);
        Eigen::Map<const Eigen::VectorXd> b(params.data() + L.b_offset, L.rows);
        Eigen::MatrixXd z = w_scale(l) * (W * h);
        z.colwise() += b_scale() * b;
        tape.inputs[static_cast<std::size_t>(l)] = std::move(h);
        if (l == depth) {
            tape.out = std::move(z);
            break;
        }
        h = z.unaryExpr([f = spec_.nonlinearity](double v) { return activate(f, v); });
        tape.pre[static_cast<std::size_t>(l)] = std::move(z);
    }
}

Eigen::MatrixXd Mlp::forward(const Eigen::VectorXd& params, const Eigen::MatrixXd& x) const {
    Tape tape;
    run(params, x, tape);
    return std::move(tape.out);
}

Eigen::VectorXd Mlp::vjp(const Eigen::VectorXd& params, const Eigen::MatrixXd& x,
                         const Eigen::MatrixXd& cotangent) const {
    Tape tape;
    run(params, x, tape);
    if (cotangent.rows() != spec_.n_heads || cotangent.cols() != x.cols()) {
        throw ValidationError("Mlp::vjp: cotangent shape mismatch");
    }
    Eigen::VectorXd g = Eigen::VectorXd::Zero(n_params_);
    Eigen::MatrixXd delta = cotangent;  // d(out)/d(pre-activation of current layer)
    for (int l = spec_.depth(); l >= 0; --l) {
        const auto& L = layers_[static_cast<std::size_t>(l)];
        Eigen::Map<Eigen::MatrixXd> gW(g.data() + L.w_offset, L.rows, L.cols);
        Eigen::Map<Eigen::VectorXd> gb(g.data() + L.b_offset, L.rows);
        gW.noalias() = w_scale(l) * (delta * tape.inputs[static_cast<std::size_t>(l)].transpose());
        gb = b_scale() * delta.rowwise().sum();
        if (l == 0) break;
        Eigen::Map<const Eigen::MatrixXd> W(params.data() + L.w_offset, L.rows, L.cols);
        Eigen::MatrixXd back = w_scale(l) * (W.transpose() * delta);
        const auto& pre = tape.pre[static_cast<std::size_t>(l - 1)];
        delta = back.cwiseProduct(pre.unaryExpr([f = spec_.nonlinearity](double v) { return activate_grad(f, v); }));
    }
    return g;
}

Eigen::VectorXd Mlp::grad(const Eigen::VectorXd& params, const Eigen::VectorXd& x, int head) const {
    if (head < 0 || head >= spec_.n_heads) throw ValidationError("Mlp::grad: head out of range");
    Eigen::MatrixXd cot = Eigen::MatrixXd::Zero(spec_.n_heads, 1);
    cot(head, 0) = 1.0;
    return vjp(params, x, cot);
}

Eigen::MatrixXd Mlp::empirical_ntk(const Eigen::VectorXd& params, const Eigen::MatrixXd& xs, int head) const {
    if (head < 0 || head >= spec_.n_heads) throw ValidationError("Mlp::empirical_ntk: head out of range");
    Tape tape;
    run(params, xs, tape);
    const Eigen::Index n = xs.cols();
    // For z = c_w W h + c_b b the gradient inner product over (W, b) is
    // (delta.delta') * (c_w^2 h.h' + c_b^2), accumulated over layers.
    Eigen::MatrixXd theta = Eigen::MatrixXd::Zero(n, n);
    Eigen::MatrixXd delta = Eigen::MatrixXd::Zero(spec_.n_heads, n);
    delta.row(head).setOnes();
    for (int l = spec_.depth(); l >= 0; --l) {
        const auto& L = layers_[static_cast<std::size_t>(l)];
        const auto& h = tape.inputs[static_cast<std::size_t>(l)];
        const double cw = w_scale(l);
        const double cb = b_scale();
        Eigen::MatrixXd hh = (cw * cw) * (h.transpose() * h);
        hh.array() += cb * cb;
        theta.array() += (delta.transpose() * delta).array() * hh.array();
        if (l == 0) break;
        Eigen::Map<const Eigen::MatrixXd> W(params.data() + L.w_offset, L.rows, L.cols);
        Eigen::MatrixXd back = cw * (W.transpose() * delta);
        const auto& pre = tape.pre[static_cast<std::size_t>(l - 1)];
        delta = back.cwiseProduct(pre.unaryExpr([f = spec_.nonlinearity](double v) { return activate_grad(f, v); }));
    }
    return theta;
}

Eigen::MatrixXd Mlp::empirical_nngp(const Eigen::VectorXd& params, const Eigen::MatrixXd& xs) const {
    Tape tape;
    run(params, xs, tape);
    const auto& h = tape.inputs.back();
    const int depth = spec_.depth();
    const double cw = spec_.parametrization == Parametrization::ntk ? spec_.sigma_w / std::sqrt(double(spec_.fan_in(depth)))
                                                                    : 1.0;
    Eigen::MatrixXd k = (cw * cw) * (h.transpose() * h);
    k.array() += b_scale() * b_scale();
    return k;
}

Eigen::MatrixXd gradient_gram(const Mlp& net, const Eigen::VectorXd& params, const Eigen::MatrixXd& xs, int head) {
    Eigen::MatrixXd G(net.n_params(), xs.cols());
    for (Eigen::Index i = 0; i < xs.cols(); ++i) G.col(i) = net.grad(params, xs.col(i), head);
    return G.transpose() * G;
}

// ---------------------------------------------------------------------------

void save_checkpoint(const std::string& path, const Eigen::VectorXd& params, const nlohmann::json& manifest) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ValidationError("cannot write checkpoint: " + path);
    os.write(reinterpret_cast<const char*>(params.data()), static_cast<std::streamsize>(params.size() * sizeof(double)));
    nlohmann::json m = manifest;
    m["n_params"] = params.size();
    m["dtype"] = "float64";
    std::ofstream ms(path + ".json");
    ms << m.dump(2) << '\n';
}

Eigen::VectorXd load_checkpoint(const std::string& path, nlohmann::json* manifest) {
    std::ifstream ms(path + ".json");
    if (!ms) throw ValidationError("missing checkpoint manifest: " + path + ".json");
    const auto m = nlohmann::json::parse(ms);
    const auto n = m.at("n_params").get<Eigen::Index>();
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ValidationError("missing checkpoint: " + path);
    Eigen::VectorXd p(n);
    is.read(reinterpret_cast<char*>(p.data()), static_cast<std::streamsize>(n * sizeof(double)));
    if (is.gcount() != static_cast<std::streamsize>(n * sizeof(double))) {
        throw ValidationError("checkpoint truncated: " + path);
    }
    if (manifest) *manifest = m;
    return p;
}

}  // namespace uvu
