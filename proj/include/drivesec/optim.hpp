#pragma once

#include <cmath>
#include <vector>

#include "drivesec/layers.hpp"

namespace drivesec {

// Plain SGD or adaptive (momentum + per-parameter scaling, Adam-style)
// updates over a stack of layers. Adaptive is the default trainer.
struct OptimState {
  enum class Mode { Plain, Adaptive };
  Mode mode = Mode::Adaptive;
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step_count = 0;
  std::vector<LayerGrads> m;  // first moments, lazily shaped
  std::vector<LayerGrads> v;  // second moments
};

inline OptimState make_optimizer(double learning_rate,
                                 OptimState::Mode mode = OptimState::Mode::Adaptive) {
  require(learning_rate > 0.0, "optimizer: learning rate must be positive");
  OptimState o;
  o.mode = mode;
  o.learning_rate = learning_rate;
  return o;
}

namespace detail {

inline void check_congruent(const LayerParams& p, const LayerGrads& g) {
  require(g.weights.size() == p.weights.size() &&
              g.biases.size() == p.biases.size(),
          "optimizer: gradient structure mismatch");
  for (size_t i = 0; i < g.weights.size(); ++i)
    require(g.weights[i].same_shape(p.weights[i]),
            "optimizer: weight gradient shape mismatch");
  for (size_t i = 0; i < g.biases.size(); ++i)
    require(g.biases[i].same_shape(p.biases[i]),
            "optimizer: bias gradient shape mismatch");
}

inline void sgd_tensor(Tensor& w, const Tensor& g, double lr) {
  for (long i = 0; i < w.size(); ++i) {
    if (!std::isfinite(g[i])) fail("optimizer: non-finite gradient");
    w[i] -= lr * g[i];
  }
}

inline void adam_tensor(Tensor& w, const Tensor& g, Tensor& m, Tensor& v,
                        const OptimState& o, double bc1, double bc2) {
  for (long i = 0; i < w.size(); ++i) {
    if (!std::isfinite(g[i])) fail("optimizer: non-finite gradient");
    m[i] = o.beta1 * m[i] + (1.0 - o.beta1) * g[i];
    v[i] = o.beta2 * v[i] + (1.0 - o.beta2) * g[i] * g[i];
    double mh = m[i] / bc1;
    double vh = v[i] / bc2;
    w[i] -= o.learning_rate * mh / (std::sqrt(vh) + o.eps);
  }
}

}  // namespace detail

// One update of every parameter in `params` from `grads`, in place.
inline void optimizer_step(OptimState& opt, std::vector<LayerParams>& params,
                           const std::vector<LayerGrads>& grads) {
  require(params.size() == grads.size(), "optimizer: layer count mismatch");
  for (size_t l = 0; l < params.size(); ++l)
    detail::check_congruent(params[l], grads[l]);

  if (opt.mode == OptimState::Mode::Plain) {
    for (size_t l = 0; l < params.size(); ++l) {
      for (size_t i = 0; i < params[l].weights.size(); ++i)
        detail::sgd_tensor(params[l].weights[i], grads[l].weights[i],
                           opt.learning_rate);
      for (size_t i = 0; i < params[l].biases.size(); ++i)
        detail::sgd_tensor(params[l].biases[i], grads[l].biases[i],
                           opt.learning_rate);
    }
    ++opt.step_count;
    return;
  }

  if (opt.m.empty()) {
    for (const LayerParams& p : params) {
      opt.m.push_back(zero_grads(p));
      opt.v.push_back(zero_grads(p));
    }
  }
  require(opt.m.size() == params.size(), "optimizer: moment state mismatch");
  ++opt.step_count;
  double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.step_count));
  double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.step_count));
  for (size_t l = 0; l < params.size(); ++l) {
    for (size_t i = 0; i < params[l].weights.size(); ++i)
      detail::adam_tensor(params[l].weights[i], grads[l].weights[i],
                          opt.m[l].weights[i], opt.v[l].weights[i], opt, bc1,
                          bc2);
    for (size_t i = 0; i < params[l].biases.size(); ++i)
      detail::adam_tensor(params[l].biases[i], grads[l].biases[i],
                          opt.m[l].biases[i], opt.v[l].biases[i], opt, bc1, bc2);
  }
}

}  // namespace drivesec
