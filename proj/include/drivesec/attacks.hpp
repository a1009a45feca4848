#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "drivesec/canbus.hpp"
#include "drivesec/generator.hpp"
#include "drivesec/metrics.hpp"

namespace drivesec {

enum class Scenario { WB, GB1, GB2, BB1, BB2 };

inline const char* scenario_name(Scenario s) {
  switch (s) {
    case Scenario::WB: return "wb";
    case Scenario::GB1: return "gb1";
    case Scenario::GB2: return "gb2";
    case Scenario::BB1: return "bb1";
    case Scenario::BB2: return "bb2";
  }
  fail("bad scenario");
}

inline Scenario parse_scenario(const std::string& s) {
  if (s == "wb") return Scenario::WB;
  if (s == "gb1") return Scenario::GB1;
  if (s == "gb2") return Scenario::GB2;
  if (s == "bb1") return Scenario::BB1;
  if (s == "bb2") return Scenario::BB2;
  fail("unknown attack scenario: " + s);
}

// --- smart replay ----------------------------------------------------------

// Victim values on the modifiable columns, attacker context everywhere else.
// Both batches must be normalized with the same stats; the merge itself is
// column selection, so it commutes with min-max scaling either way.
inline Batch smart_replay_merge(const Batch& attacker, const Batch& victim,
                                const SafetyMask& mask) {
  require(!attacker.windows.empty(), "attacker batch has no windows");
  require(attacker.windows.size() == victim.windows.size(),
          "merge: batches have different window counts");
  Batch out = attacker;
  for (size_t wi = 0; wi < out.windows.size(); ++wi) {
    const Tensor& av = attacker.windows[wi].values;
    const Tensor& vv = victim.windows[wi].values;
    require(av.same_shape(vv), "merge: window shape mismatch");
    require(static_cast<int>(mask.by_index.size()) == av.dim(1),
            "merge: taxonomy size does not match feature count");
    for (int t = 0; t < av.dim(0); ++t)
      for (int f : mask.modifiable)
        out.windows[wi].values.at(t, f) = vv.at(t, f);
  }
  return out;
}

inline Batch smart_replay_merge(const Batch& attacker, const Batch& victim,
                                const SafetyTaxonomy& tax,
                                const std::vector<std::string>& feature_names) {
  tax.validate_covers(feature_names);
  return smart_replay_merge(attacker, victim, make_mask(tax, feature_names));
}

// --- GB1: replay grid entry ------------------------------------------------

struct AsrResult {
  long fooled = 0;
  long sent = 0;
  double asr = 0.0;
};

// Pair batches index-aligned, cycling the shorter list, merge and query.
// Success = the oracle names the victim.
inline AsrResult run_gb1(const std::vector<Batch>& attacker_data,
                         const std::vector<Batch>& victim_data,
                         OracleHandle& oracle, const SafetyMask& mask) {
  require(!attacker_data.empty() && !victim_data.empty(),
          "replay needs both attacker and victim batches");
  int victim = victim_data.front().driver_id;
  size_t n = std::max(attacker_data.size(), victim_data.size());
  AsrResult r;
  for (size_t i = 0; i < n; ++i) {
    Batch merged = smart_replay_merge(attacker_data[i % attacker_data.size()],
                                      victim_data[i % victim_data.size()], mask);
    if (oracle.query(merged).label == victim) ++r.fooled;
    ++r.sent;
  }
  r.asr = asr(r.fooled, r.sent);
  return r;
}

// --- BB1: sniff-stage reconstruction --------------------------------------

// Rebuild per-second raw rows from a sniff log of legit traffic. Last frame
// per (second, signal) wins, mirroring the bus state the sampler reads.
inline std::vector<Sample> bb1_reconstruct_rows(
    const std::vector<DeliveredFrame>& log,
    const std::vector<std::string>& feature_names) {
  require(!log.empty(), "empty sniff log");
  std::map<std::string, int> col;
  for (size_t i = 0; i < feature_names.size(); ++i)
    col[feature_names[i]] = static_cast<int>(i);
  std::map<std::int64_t, Sample> rows;
  std::map<std::int64_t, std::vector<bool>> seen;
  for (const DeliveredFrame& d : log) {
    if (d.writer != Writer::Legit) continue;
    auto it = col.find(d.frame.signal_name);
    if (it == col.end()) continue;
    std::int64_t sec = d.frame.emit_time / kUsPerSecond;
    auto [ri, fresh] = rows.try_emplace(sec, Sample(feature_names.size(), 0.0));
    if (fresh) seen[sec].assign(feature_names.size(), false);
    ri->second[static_cast<size_t>(it->second)] = d.frame.value;
    seen[sec][static_cast<size_t>(it->second)] = true;
  }
  std::vector<Sample> out;
  std::int64_t expect = -1;
  for (auto& [sec, row] : rows) {
    const std::vector<bool>& sb = seen[sec];
    bool complete = std::all_of(sb.begin(), sb.end(), [](bool b) { return b; });
    if (!complete) continue;
    if (expect >= 0 && sec != expect) fail("sniff log has gaps between seconds");
    expect = sec + 1;
    out.push_back(row);
  }
  require(!out.empty(), "sniff log contains no complete second");
  return out;
}

// Sniffed victim data, trimmed to a prefix fraction, packed into the batches
// the authenticator consumes. Normalization uses the deployed model's stats.
inline std::vector<Batch> bb1_collect(const std::vector<DeliveredFrame>& log,
                                      double fraction,
                                      const std::vector<std::string>& feature_names,
                                      const NormStats& stats, int victim_id,
                                      int window_size = 16, int window_step = 8,
                                      int batch_windows = 4) {
  require(fraction > 0.0 && fraction <= 1.0, "sniff fraction must be in (0, 1]");
  std::vector<Sample> rows = bb1_reconstruct_rows(log, feature_names);
  size_t take = static_cast<size_t>(
      std::floor(fraction * static_cast<double>(rows.size())));
  rows.resize(std::min(rows.size(), std::max<size_t>(take, 1)));

  Dataset ds;
  ds.feature_names = feature_names;
  ds.norm_stats = stats;
  ds.normalized = true;
  for (size_t i = 0; i < rows.size(); ++i) {
    DataRow r;
    r.driver_id = victim_id;
    r.timestamp = static_cast<long>(i);
    r.values.reserve(rows[i].size());
    for (size_t f = 0; f < rows[i].size(); ++f)
      r.values.push_back(normalize_value(stats, static_cast<int>(f), rows[i][f]));
    ds.rows.push_back(std::move(r));
  }
  std::vector<Batch> batches =
      make_batches(make_windows(ds, window_size, window_step), batch_windows,
                   window_step);
  require(!batches.empty(), "sniff log shorter than one batch");
  return batches;
}

// --- deployment over the bus ----------------------------------------------

struct AttackTiming {
  double setup_minutes = 2.0;  // physical access + attacker ECU hookup
  double data_minutes = 0.0;
  double training_minutes = 0.0;

  double total_minutes() const {
    return setup_minutes + data_minutes + training_minutes;
  }
};

// Simulated-time cost of a query-trained attack: fixed setup plus one
// 40-second authentication round per episode.
inline double steal_time_minutes(long episodes) {
  return 2.0 + static_cast<double>(episodes) * 40.0 / 60.0;
}

struct AttackOutcome {
  Scenario scenario = Scenario::GB1;
  int attacker_id = -1;
  int victim_id = -1;
  double asr = 0.0;
  long fooled = 0;
  long sent = 0;
  int convergence_episode = -1;  // <0: not applicable / did not converge
  AttackTiming timing;
  long attacker_frames = 0;             // delivered frames written by the tap
  long non_modifiable_attacker_frames = 0;  // audit: must stay 0 with safety on
};

struct DeployInputs {
  const Ensemble* ensemble = nullptr;
  const SafetyMask* mask = nullptr;
  const SignalMap* map = nullptr;
  const NormStats* stats = nullptr;       // raw<->normalized conversion
  std::vector<std::string> feature_names; // bus signal order
  std::vector<Sample> attacker_rows;      // raw context driving, 1 Hz
  std::vector<Sample> victim_rows;        // raw victim driving (GB1 uses as-is,
                                          // BB1 replays it and sniffs)
  int attacker_id = -1;
  int victim_id = 0;
  double bb1_fraction = 1.0;
  long bb1_sniff_seconds = 0;  // > 0: listen exactly this long instead
  const GeneratorModel* generator = nullptr;  // trained (GB2 / WB / BB2)
  int convergence_episode = -1;
  double training_seconds = 0.0;  // oracle-charged time (BB2)
  bool enforce_safety = true;
  int window_size = 16;
  int window_step = 8;
  int batch_windows = 4;
  std::uint64_t seed = 0;
};

// Spread a crafted [windows, rows, signals] slice onto the one-value-per-
// second stream the bus can actually carry; later windows own the overlap.
inline std::vector<std::vector<double>> flatten_slice(const Tensor& slice,
                                                      int window_step) {
  int W = slice.dim(0), T = slice.dim(1), K = slice.dim(2);
  int span = window_step * (W - 1) + T;
  std::vector<std::vector<double>> flat(
      static_cast<size_t>(span), std::vector<double>(static_cast<size_t>(K)));
  for (int w = 0; w < W; ++w)
    for (int t = 0; t < T; ++t)
      for (int k = 0; k < K; ++k)
        flat[static_cast<size_t>(w * window_step + t)][static_cast<size_t>(k)] =
            slice.at(w, t, static_cast<long>(k));
  return flat;
}

// Drive one campaign end to end: attacker's own ECU replays their context
// driving, the tap overwrites the modifiable signals each second, and the
// sampled stream is authenticated once per 40-second session. Success = the
// ensemble names the victim.
inline AttackOutcome deploy_attack(Scenario sc, const DeployInputs& in) {
  require(in.ensemble && in.mask && in.map && in.stats, "deploy: missing component");
  require(!in.feature_names.empty(), "deploy: no signal names");
  require(!in.attacker_rows.empty(), "deploy: attacker context is empty");
  bool merge_attack = sc == Scenario::GB1 || sc == Scenario::BB1;
  bool gen_attack = sc == Scenario::GB2 || sc == Scenario::WB || sc == Scenario::BB2;
  require(merge_attack || gen_attack, "deploy: bad scenario");
  if (merge_attack)
    require(!in.victim_rows.empty(), "deploy: scenario needs victim data");
  if (gen_attack)
    require(in.generator != nullptr, "deploy: scenario needs a trained generator");

  AttackOutcome out;
  out.scenario = sc;
  out.attacker_id = in.attacker_id;
  out.victim_id = in.victim_id;
  out.convergence_episode = in.convergence_episode;

  // BB1 stage 1: listen to the victim's replayed drive, rebuild their rows.
  std::vector<Sample> victim_src;
  if (sc == Scenario::GB1) victim_src = in.victim_rows;
  if (sc == Scenario::BB1) {
    require(in.bb1_fraction > 0.0 && in.bb1_fraction <= 1.0,
            "sniff fraction must be in (0, 1]");
    long want = in.bb1_sniff_seconds > 0
                    ? in.bb1_sniff_seconds
                    : static_cast<long>(std::floor(
                          in.bb1_fraction *
                          static_cast<double>(in.victim_rows.size())));
    if (want < 1) want = 1;
    if (want > static_cast<long>(in.victim_rows.size()))
      want = static_cast<long>(in.victim_rows.size());
    CanBus sniff_bus(in.feature_names, *in.map);
    sniff_bus.add_replay_all("victim", in.victim_rows);
    AttackerTap& ear = sniff_bus.attach_tap(in.mask, in.enforce_safety);
    for (long s = 0; s < want; ++s) sample_state(sniff_bus, s);
    victim_src = bb1_reconstruct_rows(ear.sniff_log, in.feature_names);
    out.timing.data_minutes = std::ceil(static_cast<double>(want) / 60.0);
  }
  if (sc == Scenario::BB2)
    out.timing.training_minutes = in.training_seconds / 60.0;

  // Stage 2: inject over the attacker's live context, one 40 s session per
  // authentication decision.
  long span = static_cast<long>(in.window_step) * (in.batch_windows - 1) +
              in.window_size;
  long sessions = static_cast<long>(in.attacker_rows.size()) / span;
  require(sessions > 0, "deploy: attacker context shorter than one batch");

  CanBus bus(in.feature_names, *in.map);
  bus.add_replay_all("attacker", in.attacker_rows);
  AttackerTap& tap = bus.attach_tap(in.mask, in.enforce_safety);
  Rng lat_rng(derive_seed(in.seed, "deploy/latent"));

  std::vector<Sample> sampled;
  for (long k = 0; k < sessions; ++k) {
    std::vector<std::vector<double>> crafted;  // raw values, [span][modifiable]
    if (gen_attack) {
      Tensor z({in.generator->latent_dim});
      for (long i = 0; i < z.size(); ++i) z[i] = lat_rng.normal();
      crafted = flatten_slice(generator_forward(*in.generator, z).slice,
                              in.window_step);
      for (auto& row : crafted)
        for (size_t j = 0; j < row.size(); ++j) {
          int f = in.mask->modifiable[j];
          row[j] = in.stats->min[static_cast<size_t>(f)] +
                   row[j] * (in.stats->max[static_cast<size_t>(f)] -
                             in.stats->min[static_cast<size_t>(f)]);
        }
    }
    for (long t = 0; t < span; ++t) {
      long sec = k * span + t;
      std::vector<CanFrame> frames;
      for (size_t j = 0; j < in.mask->modifiable.size(); ++j) {
        int f = in.mask->modifiable[j];
        const std::string& name = in.feature_names[static_cast<size_t>(f)];
        double raw = merge_attack
                         ? victim_src[static_cast<size_t>(sec) % victim_src.size()]
                                     [static_cast<size_t>(f)]
                         : crafted[static_cast<size_t>(t)][j];
        frames.push_back(CanFrame{in.map->at(name), name, raw, 0});
      }
      inject(tap, frames);
      sampled.push_back(sample_state(bus, sec));
    }
  }

  // Authenticate each session's sampled rows.
  for (long k = 0; k < sessions; ++k) {
    Batch b;
    b.driver_id = in.attacker_id;
    for (int w = 0; w < in.batch_windows; ++w) {
      Window win;
      win.driver_id = in.attacker_id;
      win.start_time = k * span + w * in.window_step;
      win.values = Tensor({in.window_size,
                           static_cast<int>(in.feature_names.size())});
      for (int t = 0; t < in.window_size; ++t) {
        const Sample& row =
            sampled[static_cast<size_t>(k * span + w * in.window_step + t)];
        for (size_t f = 0; f < row.size(); ++f)
          win.values.at(t, static_cast<long>(f)) =
              normalize_value(*in.stats, static_cast<int>(f), row[f]);
      }
      b.windows.push_back(std::move(win));
    }
    if (ensemble_vote(*in.ensemble, b).label == in.victim_id) ++out.fooled;
    ++out.sent;
  }
  out.asr = asr(out.fooled, out.sent);

  for (const DeliveredFrame& d : tap.sniff_log) {
    if (d.writer != Writer::Attacker) continue;
    ++out.attacker_frames;
    auto it = std::find(in.feature_names.begin(), in.feature_names.end(),
                        d.frame.signal_name);
    int f = static_cast<int>(it - in.feature_names.begin());
    if (it == in.feature_names.end() || !in.mask->is_modifiable(f))
      ++out.non_modifiable_attacker_frames;
  }
  return out;
}

inline std::string outcome_csv_header() {
  return "scenario,attacker,victim,asr,convergence_episode,setup_min,data_min,"
         "training_min,total_min\n";
}

inline std::string outcome_csv_row(const AttackOutcome& o) {
  std::string row = std::string(scenario_name(o.scenario)) + "," +
                    std::to_string(o.attacker_id) + "," +
                    std::to_string(o.victim_id) + "," + format_fixed(o.asr, 6) +
                    ",";
  row += o.convergence_episode >= 0 ? std::to_string(o.convergence_episode) : "-";
  row += "," + format_fixed(o.timing.setup_minutes, 3) + "," +
         format_fixed(o.timing.data_minutes, 3) + "," +
         format_fixed(o.timing.training_minutes, 3) + "," +
         format_fixed(o.timing.total_minutes(), 3) + "\n";
  return row;
}

}  // namespace drivesec
