#include "drivesec/ensemble.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

using namespace drivesec;

namespace {

void zero_params(TrainedModel& m) {
  for (LayerParams& p : m.net.layers) {
    for (Tensor& w : p.weights)
      for (long i = 0; i < w.size(); ++i) w[i] = 0.0;
    for (Tensor& b : p.biases)
      for (long i = 0; i < b.size(); ++i) b[i] = 0.0;
  }
}

// With every weight zeroed an LSTM emits h = 0 for any input, so the head
// bias alone decides the logits: a member with a fixed, input-independent
// opinion. Handy for pinning down the vote rule.
TrainedModel constant_model(const std::vector<double>& logit_bias, int features) {
  ArchSpec as;
  as.kind = ArchKind::Lstm;
  as.hidden = {1};
  as.classes = static_cast<int>(logit_bias.size());
  as.features = features;
  TrainedModel m = build_model(as, 1);
  zero_params(m);
  Tensor& hb = m.net.layers.back().biases[0];
  for (size_t i = 0; i < logit_bias.size(); ++i)
    hb[static_cast<long>(i)] = logit_bias[i];
  m.norm.min.assign(static_cast<size_t>(features), 0.0);
  m.norm.max.assign(static_cast<size_t>(features), 1.0);
  return m;
}

// Two-class member that reads the sign of feature 1: positive -> class 0,
// negative -> class 1. Input gate and output gate forced open, forget gate
// shut, candidate gate wired to the identity feature.
TrainedModel ident_model(int ident_feature) {
  ArchSpec as;
  as.kind = ArchKind::Lstm;
  as.hidden = {1};
  as.classes = 2;
  as.features = 2;
  TrainedModel m = build_model(as, 2);
  zero_params(m);
  LayerParams& cell = m.net.layers[0];
  cell.weights[0].at(2, ident_feature) = 5.0;  // row 2 = candidate gate
  cell.biases[0][0] = 1000.0;                  // input gate ~1
  cell.biases[0][1] = -1000.0;                 // forget gate ~0
  cell.biases[0][3] = 1000.0;                  // output gate ~1
  LayerParams& head = m.net.layers.back();
  head.weights[0].at(0, 0) = 10.0;
  head.weights[0].at(1, 0) = -10.0;
  m.norm.min = {0.0, -1.0};
  m.norm.max = {1.0, 1.0};
  return m;
}

Ensemble constant_ensemble(const std::vector<double>& b0,
                           const std::vector<double>& b1,
                           const std::vector<double>& b2) {
  std::vector<std::string> names = {"Vehicle speed", "Ident"};
  return make_ensemble(constant_model(b0, 2), constant_model(b1, 2),
                       constant_model(b2, 2), names);
}

Ensemble ident_ensemble() {
  std::vector<std::string> names = {"Vehicle speed", "Ident"};
  return make_ensemble(ident_model(1), ident_model(1), ident_model(1), names);
}

// 'L' legit driving, 'A' attacker driving, 'I' attacker while the car idles.
Batch event_batch(char kind) {
  double speed = kind == 'I' ? 0.0 : 1.0;
  double ident = kind == 'L' ? 1.0 : -1.0;
  Batch b;
  b.driver_id = 0;
  Window w;
  w.driver_id = 0;
  w.values = Tensor({2, 2});
  for (int t = 0; t < 2; ++t) {
    w.values.at(t, 0) = speed;
    w.values.at(t, 1) = ident;
  }
  b.windows.push_back(w);
  return b;
}

std::vector<Batch> event_batches(const std::string& stream) {
  std::vector<Batch> out;
  for (char c : stream) out.push_back(event_batch(c));
  return out;
}

// Independent statement of the decision rule this suite holds the defended
// system to, written directly from its documented behavior.
std::vector<StreamEvent> oracle_events(const std::string& stream, int threshold) {
  std::vector<StreamEvent> out;
  int run = 0;
  for (char c : stream) {
    if (c == 'I') {
      out.push_back(StreamEvent::Ignored);
    } else if (c == 'L') {
      out.push_back(StreamEvent::Accepted);
      run = 0;
    } else {
      out.push_back(StreamEvent::Rejected);
      ++run;
      if (run == threshold) out.push_back(StreamEvent::Alarm);
    }
  }
  return out;
}

DecisionPolicy test_policy(int threshold) {
  DecisionPolicy p;
  p.alarm_threshold = threshold;
  p.idle_rule = make_speed_idle_rule(0, 0.25);
  return p;
}

}  // namespace

TEST(MakeEnsemble, RejectsMismatchedMembers) {
  std::vector<std::string> names = {"a", "b"};
  EXPECT_THROW(make_ensemble(constant_model({0, 0}, 2), constant_model({0, 0}, 2),
                             constant_model({0, 0, 0}, 2), names),
               Error);
  EXPECT_THROW(make_ensemble(constant_model({0, 0}, 2), constant_model({0, 0}, 3),
                             constant_model({0, 0}, 2), names),
               Error);
  std::vector<std::string> short_names = {"a"};
  EXPECT_THROW(make_ensemble(constant_model({0, 0}, 2), constant_model({0, 0}, 2),
                             constant_model({0, 0}, 2), short_names),
               Error);
}

TEST(Vote, UnanimousAndMajority) {
  Ensemble unanimous = constant_ensemble({3, 0}, {2, 0}, {1, 0});
  EXPECT_EQ(ensemble_vote(unanimous, event_batch('L')).label, 0);

  Ensemble majority = constant_ensemble({3, 0}, {3, 0}, {0, 3});
  EXPECT_EQ(ensemble_vote(majority, event_batch('L')).label, 0);
}

TEST(Vote, TwoOfThreeBeatsConfidentMinority) {
  // Two members lean class 0 mildly; the third is near-certain of class 1,
  // enough to drag the mean probability toward 1. Majority must still win.
  Ensemble e = constant_ensemble({1.0, 0.9, 0.0}, {1.0, 0.9, 0.0}, {0.0, 100.0, 0.0});
  Prediction p = ensemble_vote(e, event_batch('L'));
  EXPECT_GT(p.probs[1], p.probs[0]);  // the mean really does prefer class 1
  EXPECT_EQ(p.label, 0);              // ...but the vote does not
}

TEST(Vote, ThreeWayDisagreementUsesMeanProbabilities) {
  auto logit = [](std::vector<double> probs) {
    for (double& v : probs) v = std::log(v);
    return probs;
  };
  Ensemble e = constant_ensemble(logit({0.50, 0.45, 0.05}), logit({0.10, 0.50, 0.40}),
                                 logit({0.20, 0.30, 0.50}));
  Prediction p = ensemble_vote(e, event_batch('L'));
  EXPECT_EQ(p.label, 1);  // mean = [.2667, .4167, .3167]
  EXPECT_NEAR(p.probs[0], (0.50 + 0.10 + 0.20) / 3.0, 1e-9);
  EXPECT_NEAR(p.probs[1], (0.45 + 0.50 + 0.30) / 3.0, 1e-9);
  EXPECT_NEAR(p.probs[2], (0.05 + 0.40 + 0.50) / 3.0, 1e-9);
}

TEST(Vote, ProbsAreMeanOfMemberProbs) {
  Ensemble e = constant_ensemble({1, 2}, {0, 0}, {-1, 3});
  Batch b = event_batch('A');
  Prediction p = ensemble_vote(e, b);
  Tensor want({2});
  for (const TrainedModel& m : e.models) {
    Prediction mp = predict_batch(m, b);
    for (long i = 0; i < 2; ++i) want[i] += mp.probs[i] / 3.0;
  }
  for (long i = 0; i < 2; ++i) EXPECT_NEAR(p.probs[i], want[i], 1e-12);
  double sum = p.probs[0] + p.probs[1];
  EXPECT_NEAR(sum, 1.0, 1e-12);
}

TEST(WindowProbs, MatchMeanOfMemberSoftmax) {
  Ensemble e = constant_ensemble({1, 0}, {0, 1}, {2, 2});
  Window w = event_batch('L').windows[0];
  Tensor got = ensemble_window_probs(e, w);
  Tensor want({2});
  for (const TrainedModel& m : e.models) {
    Tensor probs = softmax(net_forward(m.net, w.values).logits);
    for (long i = 0; i < 2; ++i) want[i] += probs[i] / 3.0;
  }
  for (long i = 0; i < 2; ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
}

TEST(Rig, IdentityMemberSeparatesDrivers) {
  Ensemble e = ident_ensemble();
  EXPECT_EQ(ensemble_vote(e, event_batch('L')).label, 0);
  EXPECT_EQ(ensemble_vote(e, event_batch('A')).label, 1);
}

TEST(IdleRule, BoundaryAndViolation) {
  auto rule = make_speed_idle_rule(0, 0.25);
  Batch idle = event_batch('I');
  EXPECT_TRUE(rule(idle));
  idle.windows[0].values.at(1, 0) = 0.25;  // exactly at the level still idles
  EXPECT_TRUE(rule(idle));
  idle.windows[0].values.at(1, 0) = 0.2501;
  EXPECT_FALSE(rule(idle));
}

TEST(DefaultPolicy, RequiresSpeedFeature) {
  std::vector<std::string> names = {"Throttle", "Ident"};
  Ensemble e = make_ensemble(constant_model({1, 0}, 2), constant_model({1, 0}, 2),
                             constant_model({1, 0}, 2), names);
  EXPECT_THROW(make_default_policy(e), Error);
}

TEST(DefaultPolicy, IdleLevelIsNormalizedRawZero) {
  // Speed normalized from raw range [-2, 2]: raw zero lands at 0.5.
  Ensemble e = ident_ensemble();
  for (TrainedModel& m : e.models) {
    m.norm.min = {-2.0, -1.0};
    m.norm.max = {2.0, 1.0};
  }
  DecisionPolicy p = make_default_policy(e);
  ASSERT_TRUE(static_cast<bool>(p.idle_rule));
  Batch b = event_batch('A');
  b.windows[0].values.at(0, 0) = 0.5;
  b.windows[0].values.at(1, 0) = 0.5;
  EXPECT_TRUE(p.idle_rule(b));
  b.windows[0].values.at(1, 0) = 0.51;
  EXPECT_FALSE(p.idle_rule(b));
}

TEST(Stream, HandPickedScenarios) {
  Ensemble e = ident_ensemble();
  DecisionPolicy pol = test_policy(2);
  using E = StreamEvent;

  auto run = [&](const std::string& s) {
    return authenticate_stream(e, pol, event_batches(s), 0);
  };

  EXPECT_EQ(run("LLL"), (std::vector<E>{E::Accepted, E::Accepted, E::Accepted}));
  EXPECT_EQ(run("AA"), (std::vector<E>{E::Rejected, E::Rejected, E::Alarm}));
  // One rejection alone stays below the alarm threshold.
  EXPECT_EQ(run("AL"), (std::vector<E>{E::Rejected, E::Accepted}));
  // An accepted batch resets the rejection streak.
  EXPECT_EQ(run("ALAA"), (std::vector<E>{E::Rejected, E::Accepted, E::Rejected,
                                         E::Rejected, E::Alarm}));
  // The alarm fires once per streak, not on every further rejection.
  EXPECT_EQ(run("AAAA"), (std::vector<E>{E::Rejected, E::Rejected, E::Alarm,
                                         E::Rejected, E::Rejected}));
  // Idle batches are invisible to the streak counter.
  EXPECT_EQ(run("AIA"), (std::vector<E>{E::Rejected, E::Ignored, E::Rejected,
                                        E::Alarm}));
  EXPECT_EQ(run("IIII"), (std::vector<E>{E::Ignored, E::Ignored, E::Ignored,
                                         E::Ignored}));
}

TEST(Stream, IdleNeverContributesToAlarm) {
  Ensemble e = ident_ensemble();
  DecisionPolicy pol = test_policy(2);
  std::vector<StreamEvent> ev =
      authenticate_stream(e, pol, event_batches("IIIIIIIIII"), 0);
  for (StreamEvent s : ev) EXPECT_EQ(s, StreamEvent::Ignored);
}

TEST(Stream, ExhaustiveAgainstOracleUpToLengthSix) {
  Ensemble e = ident_ensemble();
  const char alphabet[3] = {'L', 'A', 'I'};
  for (int threshold : {1, 2, 3}) {
    DecisionPolicy pol = test_policy(threshold);
    long checked = 0;
    for (int len = 0; len <= 6; ++len) {
      long total = 1;
      for (int i = 0; i < len; ++i) total *= 3;
      for (long code = 0; code < total; ++code) {
        std::string stream;
        long c = code;
        for (int i = 0; i < len; ++i) {
          stream.push_back(alphabet[c % 3]);
          c /= 3;
        }
        std::vector<StreamEvent> got =
            authenticate_stream(e, pol, event_batches(stream), 0);
        std::vector<StreamEvent> want = oracle_events(stream, threshold);
        ASSERT_EQ(got, want) << "stream=" << stream << " threshold=" << threshold;
        ++checked;
      }
    }
    EXPECT_EQ(checked, 1093);  // 3^0 + ... + 3^6
  }
}

TEST(Stream, RejectsNonPositiveThreshold) {
  Ensemble e = ident_ensemble();
  DecisionPolicy pol = test_policy(0);
  EXPECT_THROW(authenticate_stream(e, pol, {}, 0), Error);
}

TEST(SaveLoad, RoundTripPreservesParamsAndNames) {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "drivesec_ensemble_rt";
  fs::create_directories(dir);

  Ensemble e = constant_ensemble({1, 2}, {3, 4}, {5, 6});
  save_ensemble(e, dir.string());
  Ensemble back = load_ensemble(dir.string());

  ASSERT_EQ(back.feature_names, e.feature_names);
  ASSERT_EQ(back.models.size(), 3u);
  for (size_t mi = 0; mi < 3; ++mi) {
    const auto& a = e.models[mi].net.layers;
    const auto& b = back.models[mi].net.layers;
    ASSERT_EQ(a.size(), b.size());
    for (size_t l = 0; l < a.size(); ++l)
      for (size_t w = 0; w < a[l].weights.size(); ++w)
        for (long i = 0; i < a[l].weights[w].size(); ++i)
          ASSERT_EQ(a[l].weights[w][i], b[l].weights[w][i]);
  }
  Batch b = event_batch('L');
  EXPECT_EQ(ensemble_vote(back, b).label, ensemble_vote(e, b).label);

  write_text_file((dir / "ensemble.txt").string(), "garbage\n");
  EXPECT_THROW(load_ensemble(dir.string()), Error);
  fs::remove_all(dir);
}
