#pragma once

#include <cmath>
#include <vector>

#include "drivesec/classifier.hpp"

namespace drivesec {

namespace detail {

// Relative error with an absolute floor so vanishing gradients do not turn
// roundoff noise into spurious relative error.
inline double rel_err(double a, double b) {
  double scale = std::max({std::fabs(a), std::fabs(b), 1e-4});
  return std::fabs(a - b) / scale;
}

inline std::vector<double*> param_ptrs(std::vector<LayerParams>& layers) {
  std::vector<double*> ptrs;
  for (LayerParams& p : layers) {
    for (Tensor& w : p.weights)
      for (long i = 0; i < w.size(); ++i) ptrs.push_back(&w[i]);
    for (Tensor& b : p.biases)
      for (long i = 0; i < b.size(); ++i) ptrs.push_back(&b[i]);
  }
  return ptrs;
}

inline std::vector<double> flatten_grads(const std::vector<LayerGrads>& grads) {
  std::vector<double> flat;
  for (const LayerGrads& g : grads) {
    for (const Tensor& w : g.weights)
      for (long i = 0; i < w.size(); ++i) flat.push_back(w[i]);
    for (const Tensor& b : g.biases)
      for (long i = 0; i < b.size(); ++i) flat.push_back(b[i]);
  }
  return flat;
}

}  // namespace detail

// Compare a given analytic gradient against central finite differences of
// the cross-entropy loss, parameter by parameter; returns the max relative
// error. Exposed separately from grad_check so tests can feed a corrupted
// gradient and watch the check fail.
inline double compare_to_fd(ClassifierNet net, const Tensor& window, int target,
                            const std::vector<LayerGrads>& analytic, double eps) {
  require(eps > 0.0, "invalid epsilon");
  std::vector<double> flat = detail::flatten_grads(analytic);
  std::vector<double*> ptrs = detail::param_ptrs(net.layers);
  require(flat.size() == ptrs.size(), "gradient/parameter count mismatch");

  double worst = 0.0;
  for (size_t i = 0; i < ptrs.size(); ++i) {
    double saved = *ptrs[i];
    *ptrs[i] = saved + eps;
    double up = softmax_xent(net_forward(net, window).logits, target).loss;
    *ptrs[i] = saved - eps;
    double down = softmax_xent(net_forward(net, window).logits, target).loss;
    *ptrs[i] = saved;
    double numeric = (up - down) / (2.0 * eps);
    worst = std::max(worst, detail::rel_err(flat[i], numeric));
  }
  return worst;
}

// Max relative error between the model's analytic gradients and central
// finite differences. Keep the model small (<= ~5k parameters): cost is two
// forward passes per parameter.
inline double grad_check(const ClassifierNet& net, const Tensor& window,
                         int target, double eps) {
  require(eps > 0.0, "invalid epsilon");
  NetForward fo = net_forward(net, window);
  LossOut lo = softmax_xent(fo.logits, target);
  NetBackward bo = net_backward(net, fo.cache, lo.logit_grad);
  return compare_to_fd(net, window, target, bo.grads, eps);
}

// Finite-difference check of a single layer in isolation: the loss is a
// fixed random weighting of the layer outputs (and, for recurrent cells, of
// the new state), so parameter, input, and state gradients are all covered.
inline double layer_grad_check(const LayerParams& layer, const Tensor& input,
                               std::uint64_t seed, double eps) {
  require(eps > 0.0, "invalid epsilon");
  LayerParams p = layer;
  Rng rng(derive_seed(seed, "layer_grad_check"));
  bool recurrent =
      p.kind == LayerKind::LstmCell || p.kind == LayerKind::GruCell;

  RecState state0;
  if (recurrent) {
    state0.h = Tensor({p.out});
    for (long i = 0; i < state0.h.size(); ++i) state0.h[i] = rng.uniform(-1, 1);
    if (p.kind == LayerKind::LstmCell) {
      state0.c = Tensor({p.out});
      for (long i = 0; i < state0.c.size(); ++i) state0.c[i] = rng.uniform(-1, 1);
    }
  }

  ForwardOut probe = layer_forward(p, input, recurrent ? &state0 : nullptr);
  Tensor w_out = zeros_like(probe.output);
  for (long i = 0; i < w_out.size(); ++i) w_out[i] = rng.uniform(-1, 1);
  Tensor w_c;
  if (p.kind == LayerKind::LstmCell) {
    w_c = Tensor({p.out});
    for (long i = 0; i < w_c.size(); ++i) w_c[i] = rng.uniform(-1, 1);
  }

  auto loss_of = [&](const LayerParams& lp, const Tensor& in,
                     const RecState* st) {
    ForwardOut fo = layer_forward(lp, in, st);
    double loss = 0.0;
    for (long i = 0; i < fo.output.size(); ++i) loss += w_out[i] * fo.output[i];
    if (w_c.size() > 0)
      for (long i = 0; i < w_c.size(); ++i) loss += w_c[i] * fo.state.c[i];
    return loss;
  };

  RecState state_up;
  if (p.kind == LayerKind::LstmCell) state_up.c = w_c;
  BackwardOut bo = layer_backward(p, probe.cache, w_out,
                                  recurrent ? &state_up : nullptr);

  double worst = 0.0;
  // Parameters.
  {
    std::vector<LayerParams> one = {p};
    std::vector<double*> ptrs = detail::param_ptrs(one);
    std::vector<double> flat = detail::flatten_grads({bo.grads});
    for (size_t i = 0; i < ptrs.size(); ++i) {
      double saved = *ptrs[i];
      *ptrs[i] = saved + eps;
      double up = loss_of(one[0], input, recurrent ? &state0 : nullptr);
      *ptrs[i] = saved - eps;
      double down = loss_of(one[0], input, recurrent ? &state0 : nullptr);
      *ptrs[i] = saved;
      worst = std::max(worst, detail::rel_err(flat[i], (up - down) / (2 * eps)));
    }
  }
  // Input.
  {
    Tensor in = input;
    for (long i = 0; i < in.size(); ++i) {
      double saved = in[i];
      in[i] = saved + eps;
      double up = loss_of(p, in, recurrent ? &state0 : nullptr);
      in[i] = saved - eps;
      double down = loss_of(p, in, recurrent ? &state0 : nullptr);
      in[i] = saved;
      worst = std::max(worst,
                       detail::rel_err(bo.input_grad[i], (up - down) / (2 * eps)));
    }
  }
  // Initial state.
  if (recurrent) {
    RecState st = state0;
    for (long i = 0; i < st.h.size(); ++i) {
      double saved = st.h[i];
      st.h[i] = saved + eps;
      double up = loss_of(p, input, &st);
      st.h[i] = saved - eps;
      double down = loss_of(p, input, &st);
      st.h[i] = saved;
      worst = std::max(worst,
                       detail::rel_err(bo.state_grad.h[i], (up - down) / (2 * eps)));
    }
    for (long i = 0; i < st.c.size(); ++i) {
      double saved = st.c[i];
      st.c[i] = saved + eps;
      double up = loss_of(p, input, &st);
      st.c[i] = saved - eps;
      double down = loss_of(p, input, &st);
      st.c[i] = saved;
      worst = std::max(worst,
                       detail::rel_err(bo.state_grad.c[i], (up - down) / (2 * eps)));
    }
  }
  return worst;
}

}  // namespace drivesec
