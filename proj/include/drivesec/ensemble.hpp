#pragma once

#include <functional>
#include <string>
#include <vector>

#include "drivesec/classifier.hpp"

namespace drivesec {

// The defended authenticator: three classifiers combined by majority vote.
struct Ensemble {
  std::vector<TrainedModel> models;  // exactly 3
  std::vector<std::string> feature_names;

  int classes() const { return models[0].net.arch.classes; }
  int features() const { return models[0].net.arch.features; }
  const NormStats& norm() const { return models[0].norm; }
};

inline Ensemble make_ensemble(TrainedModel a, TrainedModel b, TrainedModel c,
                              std::vector<std::string> feature_names) {
  Ensemble e;
  e.models.push_back(std::move(a));
  e.models.push_back(std::move(b));
  e.models.push_back(std::move(c));
  e.feature_names = std::move(feature_names);
  int classes = e.models[0].net.arch.classes;
  int features = e.models[0].net.arch.features;
  for (const TrainedModel& m : e.models) {
    require(m.net.arch.classes == classes, "ensemble members disagree on class count");
    require(m.net.arch.features == features,
            "ensemble members disagree on feature count");
  }
  require(static_cast<int>(e.feature_names.size()) == features,
          "ensemble feature-name list does not match feature count");
  return e;
}

// Majority label (>=2 members agree); a three-way disagreement falls back to
// the class with the highest mean probability. Probs are always the mean of
// the member probabilities.
inline Prediction ensemble_vote(const Ensemble& e, const Batch& b) {
  std::vector<Prediction> member;
  member.reserve(e.models.size());
  for (const TrainedModel& m : e.models) member.push_back(predict_batch(m, b));

  Prediction out;
  out.probs = Tensor({e.classes()});
  for (const Prediction& p : member)
    for (long i = 0; i < p.probs.size(); ++i) out.probs[i] += p.probs[i];
  for (long i = 0; i < out.probs.size(); ++i)
    out.probs[i] /= static_cast<double>(member.size());

  int majority = -1;
  for (size_t i = 0; i < member.size() && majority < 0; ++i) {
    int votes = 0;
    for (const Prediction& p : member)
      if (p.label == member[i].label) ++votes;
    if (votes >= 2) majority = member[i].label;
  }
  out.label = majority >= 0 ? majority : argmax(out.probs);
  return out;
}

// Mean member probabilities for a single window (the per-window view the
// generator attack's reward uses).
inline Tensor ensemble_window_probs(const Ensemble& e, const Window& w) {
  Tensor probs({e.classes()});
  for (const TrainedModel& m : e.models) {
    Tensor p = softmax(net_forward(m.net, w.values).logits);
    for (long i = 0; i < p.size(); ++i) probs[i] += p[i];
  }
  for (long i = 0; i < probs.size(); ++i)
    probs[i] /= static_cast<double>(e.models.size());
  return probs;
}

// --- runtime decision policy ----------------------------------------------

enum class StreamEvent { Accepted, Rejected, Ignored, Alarm };

inline std::string stream_event_name(StreamEvent e) {
  switch (e) {
    case StreamEvent::Accepted: return "accepted";
    case StreamEvent::Rejected: return "rejected";
    case StreamEvent::Ignored: return "ignored";
    case StreamEvent::Alarm: return "alarm";
  }
  return "?";
}

struct DecisionPolicy {
  int alarm_threshold = 2;  // consecutive rejections before the alarm
  std::function<bool(const Batch&)> idle_rule;  // empty -> nothing is idle
};

// Idle when the speed feature sits at (or below) `level` for every second of
// the batch. With min-max normalization, `level` is where raw zero lands.
inline std::function<bool(const Batch&)> make_speed_idle_rule(int speed_feature,
                                                              double level) {
  return [speed_feature, level](const Batch& b) {
    for (const Window& w : b.windows)
      for (int t = 0; t < w.values.dim(0); ++t)
        if (w.values.at(t, speed_feature) > level + 1e-12) return false;
    return true;
  };
}

inline DecisionPolicy make_default_policy(const Ensemble& e,
                                          const std::string& speed_feature =
                                              "Vehicle speed") {
  DecisionPolicy p;
  int idx = -1;
  for (size_t i = 0; i < e.feature_names.size(); ++i)
    if (e.feature_names[i] == speed_feature) idx = static_cast<int>(i);
  require(idx >= 0, "default policy: speed feature '" + speed_feature +
                        "' not among the model features");
  double level = normalize_value(e.norm(), idx, 0.0);
  p.idle_rule = make_speed_idle_rule(idx, level);
  return p;
}

// Deterministic state machine over a time-ordered batch stream. Idle batches
// are Ignored and leave the rejection counter untouched (neither advance nor
// reset); an accepted batch resets it; the Alarm fires once per rejection
// streak, when the count first reaches the threshold.
inline std::vector<StreamEvent> authenticate_stream(const Ensemble& e,
                                                    const DecisionPolicy& policy,
                                                    const std::vector<Batch>& batches,
                                                    int authorized) {
  require(policy.alarm_threshold >= 1, "alarm threshold must be >= 1");
  std::vector<StreamEvent> events;
  int consecutive_rejected = 0;
  for (const Batch& b : batches) {
    if (policy.idle_rule && policy.idle_rule(b)) {
      events.push_back(StreamEvent::Ignored);
      continue;
    }
    Prediction p = ensemble_vote(e, b);
    if (p.label == authorized) {
      events.push_back(StreamEvent::Accepted);
      consecutive_rejected = 0;
    } else {
      events.push_back(StreamEvent::Rejected);
      ++consecutive_rejected;
      if (consecutive_rejected == policy.alarm_threshold)
        events.push_back(StreamEvent::Alarm);
    }
  }
  return events;
}

// --- ensemble checkpointing -----------------------------------------------

inline void save_ensemble(const Ensemble& e, const std::string& dir) {
  for (size_t i = 0; i < e.models.size(); ++i)
    save_model(e.models[i], dir + "/member_" + std::to_string(i) + ".model");
  std::string manifest = "drivesec-ensemble 1\n";
  manifest += "members " + std::to_string(e.models.size()) + "\n";
  for (size_t i = 0; i < e.models.size(); ++i)
    manifest += "member_" + std::to_string(i) + ".model\n";
  manifest += "features " + std::to_string(e.feature_names.size()) + "\n";
  for (const std::string& f : e.feature_names) manifest += f + "\n";
  write_text_file(dir + "/ensemble.txt", manifest);
}

inline Ensemble load_ensemble(const std::string& dir) {
  std::vector<std::string> lines = read_lines(dir + "/ensemble.txt");
  require(!lines.empty() && lines[0] == "drivesec-ensemble 1",
          "not an ensemble manifest: " + dir);
  size_t li = 1;
  auto next = [&]() -> std::string {
    require(li < lines.size(), "ensemble manifest truncated");
    return lines[li++];
  };
  std::vector<std::string> head = split_on(next(), ' ');
  require(head.size() == 2 && head[0] == "members", "bad ensemble manifest");
  long n = parse_long(head[1]);
  require(n == 3, "ensemble must have exactly 3 members");
  std::vector<TrainedModel> models;
  for (long i = 0; i < n; ++i) models.push_back(load_model(dir + "/" + next()));
  std::vector<std::string> fh = split_on(next(), ' ');
  require(fh.size() == 2 && fh[0] == "features", "bad ensemble manifest");
  long nf = parse_long(fh[1]);
  std::vector<std::string> names;
  for (long i = 0; i < nf; ++i) names.push_back(next());
  return make_ensemble(std::move(models[0]), std::move(models[1]),
                       std::move(models[2]), std::move(names));
}

}  // namespace drivesec
