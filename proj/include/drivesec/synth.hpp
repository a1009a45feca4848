#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "drivesec/data.hpp"
#include "drivesec/rng.hpp"
#include "drivesec/taxonomy.hpp"

namespace drivesec {

// Synthetic stand-in for a 10-driver CAN signal log: 54 columns, 8 of them
// constant (to exercise the constant-column filter), the rest driver-specific
// AR(1) processes. How strongly a signal's level separates drivers depends on
// its safety class: the modifiable signals carry most of the identity, which
// is exactly the structure the replay attacks exploit.
struct SynthFeature {
  std::string name;
  double lo = 0.0;
  double hi = 1.0;
  bool constant = false;
  SafetyClass safety = SafetyClass::Modifiable;  // meaningful when !constant
};

// Relative driver-separation strength per safety class, and the AR noise
// level as a fraction of each signal's span.
inline constexpr double kSynthWeightModifiable = 1.0;
inline constexpr double kSynthWeightBorderline = 0.45;
inline constexpr double kSynthWeightNonModifiable = 0.35;
inline constexpr double kSynthNoiseFrac = 0.18;

inline const std::vector<SynthFeature>& synth_feature_specs() {
  static const std::vector<SynthFeature> specs = {
      // 22 modifiable signals
      {"Engine coolant temperature", 70, 105, false, SafetyClass::Modifiable},
      {"Intake air pressure", 20, 101, false, SafetyClass::Modifiable},
      {"Calculated road gradient", -8, 8, false, SafetyClass::Modifiable},
      {"Fuel consumption", 0.5, 18, false, SafetyClass::Modifiable},
      {"Long term fuel trim bank 1", -10, 10, false, SafetyClass::Modifiable},
      {"Short term fuel trim bank 1", -8, 8, false, SafetyClass::Modifiable},
      {"Calculated load value", 10, 90, false, SafetyClass::Modifiable},
      {"Engine oil temperature", 75, 115, false, SafetyClass::Modifiable},
      {"Intake air temperature", 10, 45, false, SafetyClass::Modifiable},
      {"Ambient air temperature", 5, 35, false, SafetyClass::Modifiable},
      {"Barometric pressure", 95, 103, false, SafetyClass::Modifiable},
      {"Fuel pressure", 300, 420, false, SafetyClass::Modifiable},
      {"Current spark timing", -5, 40, false, SafetyClass::Modifiable},
      {"Engine idle target speed", 650, 900, false, SafetyClass::Modifiable},
      {"Torque of friction", 10, 40, false, SafetyClass::Modifiable},
      {"Torque scaling factor", 0.8, 1.2, false, SafetyClass::Modifiable},
      {"Standard torque ratio", 0.7, 1.3, false, SafetyClass::Modifiable},
      {"Engine torque after correction", 20, 220, false, SafetyClass::Modifiable},
      {"Minimum indicated engine torque", 5, 40, false, SafetyClass::Modifiable},
      {"Maximum indicated engine torque", 180, 260, false, SafetyClass::Modifiable},
      {"Battery voltage", 12.2, 14.6, false, SafetyClass::Modifiable},
      {"Alternator output current", 20, 90, false, SafetyClass::Modifiable},
      // 15 borderline signals
      {"Engine speed", 800, 4500, false, SafetyClass::Borderline},
      {"Acceleration speed - Lateral", -4, 4, false, SafetyClass::Borderline},
      {"Torque converter speed", 700, 4200, false, SafetyClass::Borderline},
      {"Acceleration speed - Longitudinal", -3.5, 3.5, false, SafetyClass::Borderline},
      {"Accelerator pedal value", 0, 80, false, SafetyClass::Borderline},
      {"Filtered accelerator pedal value", 0, 78, false, SafetyClass::Borderline},
      {"Engine torque", 15, 230, false, SafetyClass::Borderline},
      {"Flywheel torque", 10, 215, false, SafetyClass::Borderline},
      {"Torque converter turbine speed", 650, 4100, false, SafetyClass::Borderline},
      {"Wheel velocity front left-hand", 15, 95, false, SafetyClass::Borderline},
      {"Wheel velocity front right-hand", 15, 95, false, SafetyClass::Borderline},
      {"Wheel velocity rear left-hand", 15, 95, false, SafetyClass::Borderline},
      {"Wheel velocity rear right-hand", 15, 95, false, SafetyClass::Borderline},
      {"Steering wheel speed", -180, 180, false, SafetyClass::Borderline},
      {"Steering wheel angle", -120, 120, false, SafetyClass::Borderline},
      // 9 non-modifiable signals
      {"Throttle position signal", 3, 85, false, SafetyClass::NonModifiable},
      {"Current gear", 1, 6, false, SafetyClass::NonModifiable},
      {"Master cylinder pressure", 0, 60, false, SafetyClass::NonModifiable},
      {"Vehicle speed", 15, 95, false, SafetyClass::NonModifiable},
      {"Gear selection", 1, 6, false, SafetyClass::NonModifiable},
      {"Brake pedal position", 0, 70, false, SafetyClass::NonModifiable},
      {"Clutch pedal position", 0, 80, false, SafetyClass::NonModifiable},
      {"Torque converter slip ratio", 0, 0.35, false, SafetyClass::NonModifiable},
      {"Absolute throttle position", 4, 88, false, SafetyClass::NonModifiable},
      // 8 constant columns, dropped by filter_constant_features
      {"Engine fuel cut off flag", 0, 0, true},
      {"Inhibition of engine fuel cut off", 1, 1, true},
      {"Glow plug control request", 0, 0, true},
      {"Air compressor activation", 0, 0, true},
      {"Requested spark retard angle", 0, 0, true},
      {"TCU engine torque limit request", 99.2, 99.2, true},
      {"TCU requested engine RPM increase", 0, 0, true},
      {"Target engine speed lock-up module", 750, 750, true},
  };
  return specs;
}

// Names of the 46 non-constant signals, in schema order.
inline std::vector<std::string> synth_active_names() {
  std::vector<std::string> names;
  for (const SynthFeature& f : synth_feature_specs())
    if (!f.constant) names.push_back(f.name);
  return names;
}

inline double synth_class_weight(SafetyClass c) {
  switch (c) {
    case SafetyClass::Modifiable: return kSynthWeightModifiable;
    case SafetyClass::Borderline: return kSynthWeightBorderline;
    case SafetyClass::NonModifiable: return kSynthWeightNonModifiable;
  }
  return 1.0;
}

// Driver-specific AR(1) per signal:
//   x[t+1] = mu + phi (x[t] - mu) + sigma e[t]
// with mu offset from the signal midpoint by a driver-specific amount scaled
// by the safety-class weight, and phi also driver-specific.
inline RawDataset synth_dataset(int n_drivers, int seconds_per_driver,
                                std::uint64_t seed) {
  require(n_drivers >= 2, "synth_dataset: need at least 2 drivers");
  require(seconds_per_driver > 0, "synth_dataset: need a positive duration");

  const std::vector<SynthFeature>& specs = synth_feature_specs();
  RawDataset ds;
  for (const SynthFeature& f : specs) ds.feature_names.push_back(f.name);
  ds.rows.reserve(static_cast<size_t>(n_drivers) * seconds_per_driver);

  for (int d = 0; d < n_drivers; ++d) {
    // Per-feature columns generated independently, then assembled into rows.
    std::vector<std::vector<double>> cols(specs.size());
    for (size_t fi = 0; fi < specs.size(); ++fi) {
      const SynthFeature& f = specs[fi];
      std::vector<double>& col = cols[fi];
      col.resize(static_cast<size_t>(seconds_per_driver));
      if (f.constant) {
        for (double& v : col) v = f.lo;
        continue;
      }
      Rng rng(derive_seed(seed, "synth/" + f.name, static_cast<std::uint64_t>(d)));
      double center = 0.5 * (f.lo + f.hi);
      double span = 0.5 * (f.hi - f.lo);
      double weight = synth_class_weight(f.safety);
      double mu = center + weight * span * rng.uniform(-0.55, 0.55);
      double phi = 0.90 + 0.095 * rng.uniform();
      double sigma = kSynthNoiseFrac * span * std::sqrt(1.0 - phi * phi);
      double x = mu + kSynthNoiseFrac * span * rng.normal();
      for (int t = 0; t < seconds_per_driver; ++t) {
        col[static_cast<size_t>(t)] = x;
        x = mu + phi * (x - mu) + sigma * rng.normal();
      }
    }
    for (int t = 0; t < seconds_per_driver; ++t) {
      DataRow row;
      row.driver_id = d;
      row.timestamp = t;
      row.values.reserve(specs.size());
      for (size_t fi = 0; fi < specs.size(); ++fi)
        row.values.push_back(cols[fi][static_cast<size_t>(t)]);
      ds.rows.push_back(std::move(row));
    }
  }
  return ds;
}

}  // namespace drivesec
