#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "powerprof/common.hpp"
#include "powerprof/matrix.hpp"

namespace powerprof {

// A named parameter tensor with its gradient accumulator.
struct ParamView {
    std::string name;
    std::vector<double>* value = nullptr;
    std::vector<double>* grad = nullptr;
};

// ---------------------------------------------------------------------------
// Layers
//
// forward() caches what backward() needs; backward() consumes the most recent
// forward's cache and accumulates parameter gradients (callers zero them at
// the start of each update so multi-path losses can sum contributions).
// ---------------------------------------------------------------------------
class Layer {
public:
    virtual ~Layer() = default;
    virtual Matrix forward(const Matrix& x, bool training) = 0;
    virtual Matrix backward(const Matrix& dy) = 0;
    virtual void collect_params(std::vector<ParamView>& out, const std::string& prefix) = 0;
    virtual nlohmann::json to_json() const = 0;
    virtual std::string kind() const = 0;
};

class DenseLayer : public Layer {
public:
    // W ~ U(-sqrt(6/fan_in), +sqrt(6/fan_in)), b = 0.
    DenseLayer(std::size_t in_dim, std::size_t out_dim, Rng& rng);
    DenseLayer(std::size_t in_dim, std::size_t out_dim);  // zero-init, for deserialization

    Matrix forward(const Matrix& x, bool training) override;
    Matrix backward(const Matrix& dy) override;
    void collect_params(std::vector<ParamView>& out, const std::string& prefix) override;
    nlohmann::json to_json() const override;
    std::string kind() const override { return "dense"; }

    std::size_t in_dim() const { return in_dim_; }
    std::size_t out_dim() const { return out_dim_; }

    Matrix weight;  // out x in
    std::vector<double> bias;
    Matrix weight_grad;
    std::vector<double> bias_grad;

private:
    std::size_t in_dim_, out_dim_;
    Matrix cache_x_;
};

class ReluLayer : public Layer {
public:
    Matrix forward(const Matrix& x, bool training) override;
    Matrix backward(const Matrix& dy) override;
    void collect_params(std::vector<ParamView>&, const std::string&) override {}
    nlohmann::json to_json() const override;
    std::string kind() const override { return "relu"; }

private:
    Matrix cache_x_;
};

// Batch normalization over the batch dimension, per feature.
// Training mode uses batch statistics and updates the running estimates as
// running = momentum * running + (1 - momentum) * batch. Inference mode uses
// the running estimates, making outputs batch-size independent per sample.
class BatchNormLayer : public Layer {
public:
    explicit BatchNormLayer(std::size_t dim, double momentum = 0.9, double eps = 1e-5);

    Matrix forward(const Matrix& x, bool training) override;
    Matrix backward(const Matrix& dy) override;
    void collect_params(std::vector<ParamView>& out, const std::string& prefix) override;
    nlohmann::json to_json() const override;
    std::string kind() const override { return "batchnorm"; }

    std::size_t dim() const { return dim_; }

    std::vector<double> gamma, beta;
    std::vector<double> gamma_grad, beta_grad;
    std::vector<double> running_mean, running_var;
    double momentum, eps;

private:
    std::size_t dim_;
    // training-forward cache
    Matrix cache_xhat_;
    Matrix cache_centered_;
    std::vector<double> cache_inv_std_;
    bool cache_training_ = false;
};

// ---------------------------------------------------------------------------
// Network: an ordered layer stack.
// ---------------------------------------------------------------------------
class Network {
public:
    Network() = default;
    Network(Network&&) = default;
    Network& operator=(Network&&) = default;

    void add(std::unique_ptr<Layer> layer);
    std::size_t layer_count() const { return layers_.size(); }
    Layer& layer(std::size_t i) { return *layers_[i]; }

    // Shape mismatch against the first layer raises ConfigError.
    Matrix forward(const Matrix& x, bool training);
    // Requires a prior forward in training mode; accumulates parameter grads.
    Matrix backward(const Matrix& dy);

    std::vector<ParamView> params();
    void zero_grads();

    // Serialization: {"version": 1, "layers": [...]}. Round-trips exactly at
    // 64-bit, so a reloaded network reproduces inference outputs bitwise.
    nlohmann::json to_json() const;
    static Network from_json(const nlohmann::json& j);

private:
    std::vector<std::unique_ptr<Layer>> layers_;
    std::size_t expected_input_ = 0;  // 0 = unknown
    bool forward_done_ = false;
};

// Fully-connected stack builder: dims.front() inputs, dims.back() outputs,
// ReLU between consecutive affine layers, optional batchnorm after the first.
Network make_mlp(const std::vector<std::size_t>& dims, Rng& rng,
                 bool batchnorm_after_first = false);

// ---------------------------------------------------------------------------
// Optimizer: RMSProp.  s <- rho*s + (1-rho)*g^2 ; p <- p - lr * g/(sqrt(s)+eps)
// ---------------------------------------------------------------------------
class RmsProp {
public:
    explicit RmsProp(double lr, double rho = 0.9, double eps = 1e-8);

    // Applies one update using the accumulated gradients. The ParamView list
    // must come from the same network in the same order every call.
    void step(const std::vector<ParamView>& params);

    double lr, rho, eps;

private:
    std::vector<std::vector<double>> state_;
};

// Clamp every parameter of the network into [-c, c].
void clip_weights(Network& net, double c);

// ---------------------------------------------------------------------------
// Gradient checking against central finite differences.
// ---------------------------------------------------------------------------
struct LossEval {
    double loss = 0.0;
    Matrix dy;  // dLoss/dOutput
};

using LossFn = std::function<LossEval(const Matrix& outputs)>;

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t params_checked = 0;
};

// Runs forward+backward in training mode, then perturbs up to max_params
// randomly sampled parameters by +-h and compares the analytic gradient with
// (L(p+h) - L(p-h)) / 2h. Relative error uses max(|a|+|n|, 1e-3) in the
// denominator so near-zero gradients don't blow up the ratio.
GradCheckResult grad_check(Network& net, const LossFn& loss_fn, const Matrix& batch,
                           std::size_t max_params, Rng& rng, double h = 1e-4);

}  // namespace powerprof
