#include "adprog/optim.hpp"

#include <cmath>

#include "adprog/errors.hpp"

namespace adprog::num {

Tensor& ParamStore::add(const std::string& name, Tensor init) {
    if (params_.count(name)) throw ContractError("parameter already registered: " + name);
    order_.push_back(name);
    return params_[name] = std::move(init);
}

Tensor& ParamStore::at(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw ContractError("unknown parameter: " + name);
    return it->second;
}

const Tensor& ParamStore::at(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw ContractError("unknown parameter: " + name);
    return it->second;
}

std::int64_t ParamStore::count_params() const {
    std::int64_t n = 0;
    for (const auto& name : order_) n += params_.at(name).numel();
    return n;
}

Tensor& ParamStore::moment1(const std::string& name) {
    auto it = m_.find(name);
    if (it == m_.end()) it = m_.emplace(name, Tensor(at(name).shape())).first;
    return it->second;
}

Tensor& ParamStore::moment2(const std::string& name) {
    auto it = v_.find(name);
    if (it == v_.end()) it = v_.emplace(name, Tensor(at(name).shape())).first;
    return it->second;
}

std::map<std::string, Var> bind_params(Tape& tape, const ParamStore& store) {
    std::map<std::string, Var> out;
    for (const auto& name : store.names()) out[name] = tape.leaf(store.at(name), true);
    return out;
}

void adam_step(ParamStore& store, Tape& tape, const std::map<std::string, Var>& bound,
               const AdamConfig& cfg) {
    // Optional global-norm clip across every bound parameter gradient.
    double scale = 1.0;
    if (cfg.clip_norm > 0.0) {
        double sq = 0.0;
        for (const auto& name : store.names()) {
            const Tensor& g = tape.grad(bound.at(name));
            for (std::int64_t i = 0; i < g.numel(); ++i) sq += g[i] * g[i];
        }
        const double norm = std::sqrt(sq);
        if (norm > cfg.clip_norm) scale = cfg.clip_norm / norm;
    }

    store.step_ += 1;
    const double t = static_cast<double>(store.step_);
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);
    for (const auto& name : store.names()) {
        Tensor& p = store.at(name);
        Tensor& m = store.moment1(name);
        Tensor& v = store.moment2(name);
        const Tensor& g = tape.grad(bound.at(name));
        for (std::int64_t i = 0; i < p.numel(); ++i) {
            const double gi = g[i] * scale;
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    }
}

Tensor init_uniform(Rng& rng, std::vector<std::int64_t> shape, double lo, double hi) {
    Tensor t(std::move(shape));
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = lo + (hi - lo) * rng.next_unit();
    return t;
}

Tensor init_glorot(Rng& rng, std::vector<std::int64_t> shape, std::int64_t fan_in,
                   std::int64_t fan_out) {
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    return init_uniform(rng, std::move(shape), -a, a);
}

Tensor init_constant(std::vector<std::int64_t> shape, double v) {
    return Tensor::full(std::move(shape), v);
}

}  // namespace adprog::num
