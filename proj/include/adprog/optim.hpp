#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "adprog/rng.hpp"
#include "adprog/tape.hpp"
#include "adprog/tensor.hpp"

namespace adprog::num {

// Named parameter collection with Adam state. Iteration order is insertion
// order everywhere (required for reproducible updates and checkpoints).
class ParamStore {
public:
    Tensor& add(const std::string& name, Tensor init);
    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
    bool has(const std::string& name) const { return params_.count(name) != 0; }
    const std::vector<std::string>& names() const { return order_; }
    std::int64_t count_params() const;

    // Adam moment buffers, allocated on first use. Exposed for tests.
    Tensor& moment1(const std::string& name);
    Tensor& moment2(const std::string& name);
    std::int64_t step() const { return step_; }
    void set_step(std::int64_t t) { step_ = t; }

private:
    friend struct AdamConfig;
    std::vector<std::string> order_;
    std::map<std::string, Tensor> params_;
    std::map<std::string, Tensor> m_;
    std::map<std::string, Tensor> v_;
    std::int64_t step_ = 0;

    friend void adam_step(ParamStore&, Tape&, const std::map<std::string, Var>&,
                          const struct AdamConfig&);
};

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double clip_norm = 0.0;  // global gradient norm clip; 0 disables
};

// Creates one requires-grad leaf per parameter on the tape, in store order.
std::map<std::string, Var> bind_params(Tape& tape, const ParamStore& store);

// One Adam update from the gradients currently on the tape. Call after
// Tape::backward. Parameters with an all-zero gradient are still updated
// (their moments decay), matching the reference algorithm.
void adam_step(ParamStore& store, Tape& tape, const std::map<std::string, Var>& bound,
               const AdamConfig& cfg);

// Initializers. All draws come from the supplied deterministic generator.
Tensor init_uniform(Rng& rng, std::vector<std::int64_t> shape, double lo, double hi);
Tensor init_glorot(Rng& rng, std::vector<std::int64_t> shape, std::int64_t fan_in,
                   std::int64_t fan_out);
Tensor init_constant(std::vector<std::int64_t> shape, double v);

}  // namespace adprog::num
