#include "drivesec/synth.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace drivesec;

TEST(Synth, ShapeAndTimestamps) {
  RawDataset ds = synth_dataset(3, 50, 42);
  EXPECT_EQ(ds.num_drivers(), 3);
  EXPECT_EQ(ds.rows.size(), 150u);
  EXPECT_EQ(ds.num_features(), 54);
  // 1 Hz per-driver clocks starting at zero.
  for (int d = 0; d < 3; ++d)
    for (int t = 0; t < 50; ++t) {
      const DataRow& r = ds.rows[static_cast<size_t>(d * 50 + t)];
      EXPECT_EQ(r.driver_id, d);
      EXPECT_DOUBLE_EQ(r.timestamp, t);
    }
}

TEST(Synth, DeterministicForSeed) {
  RawDataset a = synth_dataset(2, 30, 7);
  RawDataset b = synth_dataset(2, 30, 7);
  ASSERT_EQ(a.rows.size(), b.rows.size());
  for (size_t i = 0; i < a.rows.size(); ++i)
    for (size_t f = 0; f < a.rows[i].values.size(); ++f)
      EXPECT_EQ(a.rows[i].values[f], b.rows[i].values[f]);
}

TEST(Synth, SeedChangesData) {
  RawDataset a = synth_dataset(2, 30, 7);
  RawDataset b = synth_dataset(2, 30, 8);
  bool any_diff = false;
  for (size_t i = 0; i < a.rows.size() && !any_diff; ++i)
    for (size_t f = 0; f < a.rows[i].values.size(); ++f)
      if (a.rows[i].values[f] != b.rows[i].values[f]) any_diff = true;
  EXPECT_TRUE(any_diff);
}

TEST(Synth, EightConstantColumnsSurviveUntilFiltered) {
  RawDataset raw = synth_dataset(2, 40, 11);
  Dataset ds = filter_constant_features(raw);
  EXPECT_EQ(ds.dropped_features.size(), 8u);
  EXPECT_EQ(ds.num_features(), 46);
  // What remains is exactly the active schema, order preserved.
  EXPECT_EQ(ds.feature_names, synth_active_names());
}

TEST(Synth, ActiveNamesUniqueAndStable) {
  std::vector<std::string> names = synth_active_names();
  ASSERT_EQ(names.size(), 46u);
  for (size_t i = 0; i < names.size(); ++i)
    for (size_t j = i + 1; j < names.size(); ++j)
      EXPECT_NE(names[i], names[j]);
  EXPECT_EQ(names[0], "Engine coolant temperature");
}

TEST(Synth, ClassWeightsOrderIdentityStrength) {
  // Modifiable signals carry the most driver identity; non-modifiable least.
  EXPECT_DOUBLE_EQ(synth_class_weight(SafetyClass::Modifiable), 1.0);
  EXPECT_GT(synth_class_weight(SafetyClass::Modifiable),
            synth_class_weight(SafetyClass::Borderline));
  EXPECT_GT(synth_class_weight(SafetyClass::Borderline),
            synth_class_weight(SafetyClass::NonModifiable));
}

TEST(Synth, DriversSeparateOnModifiableSignals) {
  RawDataset raw = synth_dataset(4, 400, 99);
  const std::vector<SynthFeature>& specs = synth_feature_specs();
  // Per-driver mean of the first modifiable signal; pairwise separation should
  // usually exceed the AR noise floor.
  int f = 0;
  ASSERT_FALSE(specs[static_cast<size_t>(f)].constant);
  std::vector<double> means(4, 0.0);
  for (const DataRow& r : raw.rows)
    means[static_cast<size_t>(r.driver_id)] += r.values[static_cast<size_t>(f)] / 400.0;
  int separated = 0;
  for (int a = 0; a < 4; ++a)
    for (int b = a + 1; b < 4; ++b)
      if (std::fabs(means[static_cast<size_t>(a)] - means[static_cast<size_t>(b)]) > 1.0)
        ++separated;
  EXPECT_GE(separated, 4);  // most of the 6 pairs
}

TEST(Synth, ValuesStayNearSpecRange) {
  RawDataset raw = synth_dataset(3, 300, 5);
  const std::vector<SynthFeature>& specs = synth_feature_specs();
  for (size_t f = 0; f < specs.size(); ++f) {
    if (specs[f].constant) continue;
    double span = specs[f].hi - specs[f].lo;
    for (const DataRow& r : raw.rows) {
      // AR(1) drift can poke past the nominal bounds, but not wildly.
      EXPECT_GT(r.values[f], specs[f].lo - span);
      EXPECT_LT(r.values[f], specs[f].hi + span);
    }
  }
}

TEST(Synth, RejectsDegenerateArguments) {
  EXPECT_THROW(synth_dataset(1, 100, 0), Error);
  EXPECT_THROW(synth_dataset(3, 0, 0), Error);
}

TEST(Synth, LoadableAsDataset) {
  // The synthetic output must satisfy the same invariants the CSV loader
  // enforces (strictly increasing per-driver clocks, rectangular rows).
  RawDataset raw = synth_dataset(2, 25, 3);
  for (const DataRow& r : raw.rows)
    EXPECT_EQ(r.values.size(), raw.feature_names.size());
  Dataset ds = filter_constant_features(raw);
  auto [norm, stats] = normalize(ds);
  for (const DataRow& r : norm.rows)
    for (double v : r.values) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
}
