#pragma once

#include <vector>

#include "drivesec/common.hpp"

namespace drivesec {

struct ConfusionCounts {
  long tp = 0;
  long tn = 0;
  long fp = 0;
  long fn = 0;

  long total() const { return tp + tn + fp + fn; }
};

// (TP + TN) / (TP + TN + FP + FN)
inline double accuracy(const ConfusionCounts& c) {
  require(c.total() > 0, "accuracy: no evaluated samples");
  return static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
}

// 2TP / (2TP + FP + FN); a degenerate denominator yields 0 (nothing was or
// should have been positive).
inline double f1(const ConfusionCounts& c) {
  long denom = 2 * c.tp + c.fp + c.fn;
  if (denom <= 0) return 0.0;
  return 2.0 * static_cast<double>(c.tp) / static_cast<double>(denom);
}

// Attack success rate: fraction of sent malicious batches that fooled the
// authenticator. Numerically identical to the victim's false-acceptance rate.
inline double asr(long fooled, long sent) {
  require(sent > 0, "asr: no batches sent");
  require(fooled >= 0 && fooled <= sent, "asr: fooled out of range");
  return static_cast<double>(fooled) / static_cast<double>(sent);
}

struct MetricReport {
  double accuracy = 0.0;
  double f1 = 0.0;
  double asr = 0.0;
  double far = 0.0;  // always equals asr
};

// One-vs-rest counts per class from (prediction, label) pairs.
inline std::vector<ConfusionCounts> per_class_counts(
    const std::vector<int>& predictions, const std::vector<int>& labels,
    int classes) {
  require(predictions.size() == labels.size(),
          "per_class_counts: length mismatch");
  require(classes >= 1, "per_class_counts: need at least one class");
  std::vector<ConfusionCounts> out(static_cast<size_t>(classes));
  for (size_t i = 0; i < predictions.size(); ++i) {
    int p = predictions[i], l = labels[i];
    require(p >= 0 && p < classes && l >= 0 && l < classes,
            "per_class_counts: class out of range");
    for (int c = 0; c < classes; ++c) {
      bool pred_c = (p == c), is_c = (l == c);
      ConfusionCounts& cc = out[static_cast<size_t>(c)];
      if (pred_c && is_c) ++cc.tp;
      else if (pred_c && !is_c) ++cc.fp;
      else if (!pred_c && is_c) ++cc.fn;
      else ++cc.tn;
    }
  }
  return out;
}

// Plain correct/total accuracy expressed through the micro correctness view
// (tp = correct, fn = incorrect).
inline ConfusionCounts overall_counts(const std::vector<int>& predictions,
                                      const std::vector<int>& labels) {
  require(predictions.size() == labels.size(), "overall_counts: length mismatch");
  ConfusionCounts c;
  for (size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i] == labels[i]) ++c.tp;
    else ++c.fn;
  }
  return c;
}

// Multi-class F1 is the macro average over one-vs-rest counts.
inline double macro_f1(const std::vector<int>& predictions,
                       const std::vector<int>& labels, int classes) {
  std::vector<ConfusionCounts> per = per_class_counts(predictions, labels, classes);
  double sum = 0.0;
  for (const ConfusionCounts& c : per) sum += f1(c);
  return sum / static_cast<double>(classes);
}

inline MetricReport classification_report(const std::vector<int>& predictions,
                                          const std::vector<int>& labels,
                                          int classes) {
  MetricReport r;
  r.accuracy = accuracy(overall_counts(predictions, labels));
  r.f1 = macro_f1(predictions, labels, classes);
  return r;
}

}  // namespace drivesec
