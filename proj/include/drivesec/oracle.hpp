#pragma once

#include <vector>

#include "drivesec/ensemble.hpp"

namespace drivesec {

// How much of the authenticator the attacker can see per query.
//   FullProbs: surrogate ensemble in the attacker's hands; probabilities and
//     per-window labels, free and unlimited (GB2/WB).
//   LabelOnly: the live system as a black box; one label per batch, and every
//     query costs the 40 simulated seconds one batch spans (BB2).
enum class OracleMode { FullProbs, LabelOnly };

struct OracleResponse {
  int label = 0;
  Tensor probs;                   // FullProbs only: mean over windows+models
  std::vector<int> window_labels; // FullProbs only
};

class OracleHandle {
 public:
  OracleHandle(const Ensemble& e, OracleMode mode) : ens_(&e), mode_(mode) {}

  OracleMode mode() const { return mode_; }
  long query_count() const { return query_count_; }
  double charged_seconds() const { return charged_seconds_; }

  // Gradient access to the surrogate; black-box mode exposes nothing.
  const Ensemble* surrogate() const {
    return mode_ == OracleMode::FullProbs ? ens_ : nullptr;
  }

  OracleResponse query(const Batch& b) {
    ++query_count_;
    OracleResponse r;
    if (mode_ == OracleMode::LabelOnly) {
      charged_seconds_ += 40.0;  // decision cadence: one batch = 40 s
      r.label = ensemble_vote(*ens_, b).label;
      return r;
    }
    r.probs = Tensor({ens_->classes()});
    for (const Window& w : b.windows) {
      Tensor wp = ensemble_window_probs(*ens_, w);
      r.window_labels.push_back(argmax(wp));
      for (long i = 0; i < wp.size(); ++i) r.probs[i] += wp[i];
    }
    for (long i = 0; i < r.probs.size(); ++i)
      r.probs[i] /= static_cast<double>(b.windows.size());
    r.label = argmax(r.probs);
    return r;
  }

 private:
  const Ensemble* ens_;
  OracleMode mode_;
  long query_count_ = 0;
  double charged_seconds_ = 0.0;
};

}  // namespace drivesec
