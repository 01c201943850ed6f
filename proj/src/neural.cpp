#include "powerprof/neural.hpp"

#include <algorithm>
#include <cmath>

namespace powerprof {

using nlohmann::json;

// ---------------------------------------------------------------------------
// DenseLayer
// ---------------------------------------------------------------------------

DenseLayer::DenseLayer(std::size_t in_dim, std::size_t out_dim, Rng& rng)
    : DenseLayer(in_dim, out_dim) {
    double bound = std::sqrt(6.0 / static_cast<double>(in_dim));
    for (double& v : weight.data) v = rng.uniform(-bound, bound);
}

DenseLayer::DenseLayer(std::size_t in_dim, std::size_t out_dim)
    : weight(out_dim, in_dim),
      bias(out_dim, 0.0),
      weight_grad(out_dim, in_dim),
      bias_grad(out_dim, 0.0),
      in_dim_(in_dim),
      out_dim_(out_dim) {}

Matrix DenseLayer::forward(const Matrix& x, bool training) {
    if (x.cols != in_dim_) {
        throw ConfigError("dense layer expects " + std::to_string(in_dim_) +
                          " inputs, got " + std::to_string(x.cols));
    }
    if (training) cache_x_ = x;
    return affine_forward(x, weight, bias);
}

Matrix DenseLayer::backward(const Matrix& dy) {
    if (cache_x_.rows != dy.rows) throw NumericError("dense backward without matching forward");
    affine_backward_params(dy, cache_x_, weight_grad, bias_grad);
    return affine_backward_input(dy, weight);
}

void DenseLayer::collect_params(std::vector<ParamView>& out, const std::string& prefix) {
    out.push_back({prefix + ".weight", &weight.data, &weight_grad.data});
    out.push_back({prefix + ".bias", &bias, &bias_grad});
}

json DenseLayer::to_json() const {
    return json{{"kind", "dense"},
                {"in", in_dim_},
                {"out", out_dim_},
                {"weight", weight.data},
                {"bias", bias}};
}

// ---------------------------------------------------------------------------
// ReluLayer
// ---------------------------------------------------------------------------

Matrix ReluLayer::forward(const Matrix& x, bool training) {
    if (training) cache_x_ = x;
    Matrix y = x;
    for (double& v : y.data) v = v > 0.0 ? v : 0.0;
    return y;
}

Matrix ReluLayer::backward(const Matrix& dy) {
    Matrix dx = dy;
    for (std::size_t i = 0; i < dx.data.size(); ++i) {
        if (cache_x_.data[i] <= 0.0) dx.data[i] = 0.0;
    }
    return dx;
}

json ReluLayer::to_json() const { return json{{"kind", "relu"}}; }

// ---------------------------------------------------------------------------
// BatchNormLayer
// ---------------------------------------------------------------------------

BatchNormLayer::BatchNormLayer(std::size_t dim, double momentum, double eps)
    : gamma(dim, 1.0),
      beta(dim, 0.0),
      gamma_grad(dim, 0.0),
      beta_grad(dim, 0.0),
      running_mean(dim, 0.0),
      running_var(dim, 1.0),
      momentum(momentum),
      eps(eps),
      dim_(dim) {}

Matrix BatchNormLayer::forward(const Matrix& x, bool training) {
    if (x.cols != dim_) throw ConfigError("batchnorm dimension mismatch");
    const std::size_t m = x.rows;
    Matrix y(m, dim_);
    if (training) {
        if (m < 2) throw ConfigError("batchnorm training forward needs batch size >= 2");
        std::vector<double> mean(dim_, 0.0), var(dim_, 0.0);
        for (std::size_t i = 0; i < m; ++i) {
            const double* xi = x.row(i);
            for (std::size_t j = 0; j < dim_; ++j) mean[j] += xi[j];
        }
        for (std::size_t j = 0; j < dim_; ++j) mean[j] /= static_cast<double>(m);
        for (std::size_t i = 0; i < m; ++i) {
            const double* xi = x.row(i);
            for (std::size_t j = 0; j < dim_; ++j) {
                double d = xi[j] - mean[j];
                var[j] += d * d;
            }
        }
        for (std::size_t j = 0; j < dim_; ++j) var[j] /= static_cast<double>(m);

        cache_centered_ = Matrix(m, dim_);
        cache_xhat_ = Matrix(m, dim_);
        cache_inv_std_.assign(dim_, 0.0);
        for (std::size_t j = 0; j < dim_; ++j) cache_inv_std_[j] = 1.0 / std::sqrt(var[j] + eps);
        for (std::size_t i = 0; i < m; ++i) {
            const double* xi = x.row(i);
            double* ci = cache_centered_.row(i);
            double* hi = cache_xhat_.row(i);
            double* yi = y.row(i);
            for (std::size_t j = 0; j < dim_; ++j) {
                ci[j] = xi[j] - mean[j];
                hi[j] = ci[j] * cache_inv_std_[j];
                yi[j] = gamma[j] * hi[j] + beta[j];
            }
        }
        for (std::size_t j = 0; j < dim_; ++j) {
            running_mean[j] = momentum * running_mean[j] + (1.0 - momentum) * mean[j];
            running_var[j] = momentum * running_var[j] + (1.0 - momentum) * var[j];
        }
        cache_training_ = true;
    } else {
        for (std::size_t i = 0; i < m; ++i) {
            const double* xi = x.row(i);
            double* yi = y.row(i);
            for (std::size_t j = 0; j < dim_; ++j) {
                double inv = 1.0 / std::sqrt(running_var[j] + eps);
                yi[j] = gamma[j] * (xi[j] - running_mean[j]) * inv + beta[j];
            }
        }
        cache_training_ = false;
    }
    return y;
}

Matrix BatchNormLayer::backward(const Matrix& dy) {
    if (!cache_training_ || cache_xhat_.rows != dy.rows) {
        throw NumericError("batchnorm backward without matching training forward");
    }
    const std::size_t m = dy.rows;
    const double inv_m = 1.0 / static_cast<double>(m);

    std::vector<double> sum_dy(dim_, 0.0), sum_dy_xhat(dim_, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        const double* dyi = dy.row(i);
        const double* hi = cache_xhat_.row(i);
        for (std::size_t j = 0; j < dim_; ++j) {
            sum_dy[j] += dyi[j];
            sum_dy_xhat[j] += dyi[j] * hi[j];
        }
    }
    for (std::size_t j = 0; j < dim_; ++j) {
        gamma_grad[j] += sum_dy_xhat[j];
        beta_grad[j] += sum_dy[j];
    }

    // dx = gamma * inv_std / m * (m*dy - sum(dy) - xhat * sum(dy*xhat))
    Matrix dx(m, dim_);
    for (std::size_t i = 0; i < m; ++i) {
        const double* dyi = dy.row(i);
        const double* hi = cache_xhat_.row(i);
        double* dxi = dx.row(i);
        for (std::size_t j = 0; j < dim_; ++j) {
            dxi[j] = gamma[j] * cache_inv_std_[j] * inv_m *
                     (static_cast<double>(m) * dyi[j] - sum_dy[j] - hi[j] * sum_dy_xhat[j]);
        }
    }
    return dx;
}

void BatchNormLayer::collect_params(std::vector<ParamView>& out, const std::string& prefix) {
    out.push_back({prefix + ".gamma", &gamma, &gamma_grad});
    out.push_back({prefix + ".beta", &beta, &beta_grad});
}

json BatchNormLayer::to_json() const {
    return json{{"kind", "batchnorm"}, {"dim", dim_},
                {"gamma", gamma},      {"beta", beta},
                {"running_mean", running_mean}, {"running_var", running_var},
                {"momentum", momentum}, {"eps", eps}};
}

// ---------------------------------------------------------------------------
// Network
// ---------------------------------------------------------------------------

void Network::add(std::unique_ptr<Layer> layer) { layers_.push_back(std::move(layer)); }

Matrix Network::forward(const Matrix& x, bool training) {
    Matrix cur = x;
    for (auto& layer : layers_) cur = layer->forward(cur, training);
    forward_done_ = training;
    return cur;
}

Matrix Network::backward(const Matrix& dy) {
    if (!forward_done_) throw NumericError("backward called without a training-mode forward");
    Matrix cur = dy;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) cur = (*it)->backward(cur);
    return cur;
}

std::vector<ParamView> Network::params() {
    std::vector<ParamView> out;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        layers_[i]->collect_params(out, "layer" + std::to_string(i));
    }
    return out;
}

void Network::zero_grads() {
    for (ParamView& p : params()) std::fill(p.grad->begin(), p.grad->end(), 0.0);
}

json Network::to_json() const {
    json layers = json::array();
    for (const auto& layer : layers_) layers.push_back(layer->to_json());
    return json{{"version", 1}, {"layers", layers}};
}

Network Network::from_json(const json& j) {
    if (!j.is_object() || !j.contains("version") || !j.contains("layers")) {
        throw DataError("network json: missing version/layers");
    }
    int version = j.at("version").get<int>();
    if (version != 1) {
        throw DataError("unsupported network version " + std::to_string(version));
    }
    Network net;
    for (const json& lj : j.at("layers")) {
        std::string kind = lj.at("kind").get<std::string>();
        if (kind == "dense") {
            auto layer = std::make_unique<DenseLayer>(lj.at("in").get<std::size_t>(),
                                                      lj.at("out").get<std::size_t>());
            layer->weight.data = lj.at("weight").get<std::vector<double>>();
            layer->bias = lj.at("bias").get<std::vector<double>>();
            if (layer->weight.data.size() != layer->in_dim() * layer->out_dim() ||
                layer->bias.size() != layer->out_dim()) {
                throw DataError("network json: dense parameter size mismatch");
            }
            net.add(std::move(layer));
        } else if (kind == "relu") {
            net.add(std::make_unique<ReluLayer>());
        } else if (kind == "batchnorm") {
            auto layer = std::make_unique<BatchNormLayer>(lj.at("dim").get<std::size_t>(),
                                                          lj.at("momentum").get<double>(),
                                                          lj.at("eps").get<double>());
            layer->gamma = lj.at("gamma").get<std::vector<double>>();
            layer->beta = lj.at("beta").get<std::vector<double>>();
            layer->running_mean = lj.at("running_mean").get<std::vector<double>>();
            layer->running_var = lj.at("running_var").get<std::vector<double>>();
            if (layer->gamma.size() != layer->dim() || layer->beta.size() != layer->dim() ||
                layer->running_mean.size() != layer->dim() ||
                layer->running_var.size() != layer->dim()) {
                throw DataError("network json: batchnorm parameter size mismatch");
            }
            net.add(std::move(layer));
        } else {
            throw DataError("network json: unknown layer kind '" + kind + "'");
        }
    }
    return net;
}

Network make_mlp(const std::vector<std::size_t>& dims, Rng& rng, bool batchnorm_after_first) {
    if (dims.size() < 2) throw ConfigError("make_mlp needs at least input and output dims");
    Network net;
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
        net.add(std::make_unique<DenseLayer>(dims[i], dims[i + 1], rng));
        bool last = (i + 2 == dims.size());
        if (!last) {
            if (i == 0 && batchnorm_after_first) {
                net.add(std::make_unique<BatchNormLayer>(dims[i + 1]));
            }
            net.add(std::make_unique<ReluLayer>());
        }
    }
    return net;
}

// ---------------------------------------------------------------------------
// RmsProp
// ---------------------------------------------------------------------------

RmsProp::RmsProp(double lr, double rho, double eps) : lr(lr), rho(rho), eps(eps) {
    if (lr <= 0.0) throw ConfigError("rmsprop: lr must be > 0");
    if (rho <= 0.0 || rho >= 1.0) throw ConfigError("rmsprop: rho must be in (0, 1)");
}

void RmsProp::step(const std::vector<ParamView>& params) {
    if (state_.empty()) {
        state_.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            state_[i].assign(params[i].value->size(), 0.0);
        }
    }
    if (state_.size() != params.size()) throw ConfigError("rmsprop: parameter list changed");
    for (std::size_t i = 0; i < params.size(); ++i) {
        std::vector<double>& v = *params[i].value;
        const std::vector<double>& g = *params[i].grad;
        std::vector<double>& s = state_[i];
        if (s.size() != v.size()) throw ConfigError("rmsprop: parameter shape changed");
        for (std::size_t k = 0; k < v.size(); ++k) {
            s[k] = rho * s[k] + (1.0 - rho) * g[k] * g[k];
            v[k] -= lr * g[k] / (std::sqrt(s[k]) + eps);
        }
    }
}

void clip_weights(Network& net, double c) {
    if (c <= 0.0) throw ConfigError("clip_weights: c must be > 0");
    for (ParamView& p : net.params()) {
        for (double& v : *p.value) v = std::clamp(v, -c, c);
    }
}

// ---------------------------------------------------------------------------
// Gradient check
// ---------------------------------------------------------------------------

GradCheckResult grad_check(Network& net, const LossFn& loss_fn, const Matrix& batch,
                           std::size_t max_params, Rng& rng, double h) {
    net.zero_grads();
    Matrix out = net.forward(batch, true);
    LossEval eval = loss_fn(out);
    net.backward(eval.dy);

    // snapshot analytic gradients before the FD passes disturb caches
    std::vector<ParamView> params = net.params();
    std::vector<std::vector<double>> analytic;
    std::size_t total = 0;
    for (ParamView& p : params) {
        analytic.push_back(*p.grad);
        total += p.value->size();
    }
    if (total == 0) throw ConfigError("grad_check: network has no parameters");

    std::vector<std::size_t> order = rng.permutation(total);
    std::size_t n_check = std::min(max_params, total);

    GradCheckResult result;
    for (std::size_t pick = 0; pick < n_check; ++pick) {
        std::size_t flat = order[pick];
        std::size_t ti = 0;
        while (flat >= params[ti].value->size()) {
            flat -= params[ti].value->size();
            ++ti;
        }
        double& p = (*params[ti].value)[flat];
        const double saved = p;

        p = saved + h;
        double lp = loss_fn(net.forward(batch, true)).loss;
        p = saved - h;
        double lm = loss_fn(net.forward(batch, true)).loss;
        p = saved;

        double numeric = (lp - lm) / (2.0 * h);
        double a = analytic[ti][flat];
        double rel = std::abs(a - numeric) / std::max(std::abs(a) + std::abs(numeric), 1e-3);
        result.max_rel_error = std::max(result.max_rel_error, rel);
        ++result.params_checked;
    }
    return result;
}

}  // namespace powerprof
