#pragma once

#include <cmath>

#include "drivesec/tensor.hpp"

namespace drivesec {

// Max-subtracted softmax; output is a probability vector.
inline Tensor softmax(const Tensor& logits) {
  require(logits.rank() == 1 && logits.size() > 0, "softmax needs a rank-1 input");
  double mx = logits[0];
  for (long i = 1; i < logits.size(); ++i) mx = std::max(mx, logits[i]);
  Tensor p({static_cast<int>(logits.size())});
  double sum = 0.0;
  for (long i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    sum += p[i];
  }
  for (long i = 0; i < p.size(); ++i) p[i] /= sum;
  return p;
}

struct LossOut {
  double loss = 0.0;
  Tensor logit_grad;
};

// Cross-entropy of softmax(logits) against a class index.
// loss = -log softmax(logits)[target]; grad = softmax(logits) - one_hot(target).
inline LossOut softmax_xent(const Tensor& logits, int target) {
  require(target >= 0 && target < logits.size(),
          "softmax_xent: target class out of range");
  Tensor p = softmax(logits);
  LossOut r;
  r.loss = -std::log(std::max(p[target], 1e-300));
  r.logit_grad = p;
  r.logit_grad[target] -= 1.0;
  return r;
}

// Cross-entropy of an externally supplied probability vector against a class
// index (used when the loss sits on averaged ensemble probabilities rather
// than on one model's logits).
inline double xent_of_probs(const Tensor& probs, int target) {
  require(target >= 0 && target < probs.size(),
          "xent_of_probs: target class out of range");
  return -std::log(std::max(probs[target], 1e-300));
}

}  // namespace drivesec
