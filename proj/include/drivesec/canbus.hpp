#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "drivesec/common.hpp"
#include "drivesec/data.hpp"
#include "drivesec/taxonomy.hpp"

namespace drivesec {

inline constexpr std::int64_t kUsPerSecond = 1'000'000;
// The authenticator samples at the end of each second; legitimate ECUs emit
// at the start. The gap is where the attacker's guard-interval injection
// lands so that its value wins last-writer-wins at the sampling instant.
inline constexpr std::int64_t kSampleOffsetUs = 999'999;
inline constexpr std::int64_t kDefaultGuardUs = 1'000;

inline std::int64_t sample_instant_us(long second) {
  return second * kUsPerSecond + kSampleOffsetUs;
}

struct CanFrame {
  int id = 0;  // 11-bit arbitration id, lower wins
  std::string signal_name;
  double value = 0.0;
  std::int64_t emit_time = 0;  // microseconds
};

enum class Writer { Legit, Attacker };

struct DeliveredFrame {
  CanFrame frame;
  Writer writer = Writer::Legit;
};

struct BusEntry {
  double value = 0.0;
  Writer writer = Writer::Legit;
  std::int64_t write_time = 0;
};

struct BusState {
  std::map<std::string, BusEntry> last_value;
};

// signal_name -> arbitration id, from a `signal_name,can_id` file.
struct SignalMap {
  std::map<std::string, int> id_of;

  int at(const std::string& signal) const {
    auto it = id_of.find(signal);
    if (it == id_of.end()) fail("signal not in map: " + signal);
    return it->second;
  }
};

inline SignalMap load_signal_map(const std::string& path) {
  SignalMap m;
  std::map<int, std::string> seen_ids;
  size_t lineno = 0;
  for (const std::string& raw : read_lines(path)) {
    ++lineno;
    std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    size_t comma = line.rfind(',');
    if (comma == std::string::npos)
      fail("signal map line " + std::to_string(lineno) +
           ": expected 'signal_name,can_id'");
    std::string name = trim(line.substr(0, comma));
    std::string id_text = trim(line.substr(comma + 1));
    char* end = nullptr;
    long id = std::strtol(id_text.c_str(), &end, 0);
    if (end == id_text.c_str() || *end != '\0')
      fail("signal map line " + std::to_string(lineno) + ": bad id " + id_text);
    require(id >= 0 && id < 2048, "can id out of 11-bit range: " + id_text);
    if (m.id_of.count(name)) fail("signal map duplicates signal: " + name);
    auto [it, fresh] = seen_ids.emplace(static_cast<int>(id), name);
    if (!fresh)
      fail("signal map duplicates id " + id_text + " (" + it->second + ", " +
           name + ")");
    m.id_of[name] = static_cast<int>(id);
  }
  require(!m.id_of.empty(), "empty signal map: " + path);
  return m;
}

// Lowest id wins; ties broken by earliest emit_time, then by signal name.
inline const CanFrame& arbitrate(const std::vector<CanFrame>& pending) {
  require(!pending.empty(), "arbitrate: no pending frames");
  const CanFrame* best = &pending[0];
  for (const CanFrame& f : pending) {
    if (f.id < best->id ||
        (f.id == best->id && (f.emit_time < best->emit_time ||
                              (f.emit_time == best->emit_time &&
                               f.signal_name < best->signal_name))))
      best = &f;
  }
  return *best;
}

struct EcuNode {
  std::string name;
  std::vector<std::string> signals;       // owned signals
  std::vector<int> signal_ids;            // arbitration ids, parallel to signals
  std::int64_t period_us = kUsPerSecond;  // one emission per signal per period
  // Replay source: per-period rows of (signal -> value) for the owned signals.
  std::vector<std::vector<double>> rows;  // [period][signal index in `signals`]
  size_t next_row = 0;                    // emission cursor
};

struct InjectPolicy {
  std::int64_t guard_us = kDefaultGuardUs;
};

class CanBus;

// Sniffing plus injection access for the attacker ECU.
struct AttackerTap {
  std::vector<DeliveredFrame> sniff_log;  // delivery order
  bool enforce_safety = true;
  const SafetyMask* mask = nullptr;  // active taxonomy over the bus signals
  CanBus* bus = nullptr;
};

class CanBus {
 public:
  CanBus(std::vector<std::string> signal_names, SignalMap map)
      : signal_names_(std::move(signal_names)), map_(std::move(map)) {
    for (const std::string& s : signal_names_) map_.at(s);  // every signal has an id
  }

  const std::vector<std::string>& signal_names() const { return signal_names_; }
  const BusState& state() const { return state_; }
  std::int64_t now() const { return now_; }

  // A legitimate ECU that replays `rows` (full samples in bus signal order),
  // emitting its owned signals once per second at the start of the second.
  void add_replay_ecu(const std::string& name,
                      const std::vector<std::string>& owned,
                      const std::vector<Sample>& rows) {
    EcuNode node;
    node.name = name;
    node.signals = owned;
    std::vector<int> idx;
    for (const std::string& s : owned) {
      int fi = -1;
      for (size_t i = 0; i < signal_names_.size(); ++i)
        if (signal_names_[i] == s) fi = static_cast<int>(i);
      require(fi >= 0, "ecu '" + name + "' owns unknown signal: " + s);
      idx.push_back(fi);
    }
    for (const std::string& s : owned) node.signal_ids.push_back(map_.at(s));
    node.rows.reserve(rows.size());
    for (const Sample& r : rows) {
      require(r.size() == signal_names_.size(),
              "ecu replay row width mismatch for '" + name + "'");
      std::vector<double> own;
      own.reserve(idx.size());
      for (int fi : idx) own.push_back(r[static_cast<size_t>(fi)]);
      node.rows.push_back(std::move(own));
    }
    ecus_.push_back(std::move(node));
  }

  // Convenience: spread all bus signals across one replay ECU.
  void add_replay_all(const std::string& name, const std::vector<Sample>& rows) {
    add_replay_ecu(name, signal_names_, rows);
  }

  AttackerTap& attach_tap(const SafetyMask* mask, bool enforce_safety) {
    taps_.push_back(std::make_unique<AttackerTap>());
    AttackerTap& tap = *taps_.back();
    tap.mask = mask;
    tap.enforce_safety = enforce_safety;
    tap.bus = this;
    return tap;
  }

  std::int64_t next_sample_instant(std::int64_t after) const {
    // Smallest k with sample_instant_us(k) > after.
    long second = static_cast<long>((after - kSampleOffsetUs) / kUsPerSecond) + 1;
    if (second < 0) second = 0;
    while (second > 0 && sample_instant_us(second - 1) > after) --second;
    return sample_instant_us(second);
  }

  void enqueue(const CanFrame& f, Writer writer) { pending_.push_back({f, writer}); }

  // Discrete-event loop: repeatedly arbitrate the earliest-instant frames and
  // deliver the winner; delivery updates last-writer-wins state and appends
  // to every tap's sniff log.
  std::vector<DeliveredFrame> step(std::int64_t until) {
    if (until < now_) fail("bus time regression");
    // Materialize ECU emissions due by `until`; keeps the pending set small.
    for (EcuNode& node : ecus_) {
      while (node.next_row < node.rows.size() &&
             static_cast<std::int64_t>(node.next_row) * node.period_us <= until) {
        for (size_t s = 0; s < node.signals.size(); ++s) {
          CanFrame f;
          f.id = node.signal_ids[s];
          f.signal_name = node.signals[s];
          f.value = node.rows[node.next_row][s];
          f.emit_time = static_cast<std::int64_t>(node.next_row) * node.period_us;
          pending_.push_back({f, Writer::Legit});
        }
        ++node.next_row;
      }
    }
    std::vector<DeliveredFrame> delivered;
    while (true) {
      std::int64_t t = -1;
      for (const DeliveredFrame& p : pending_)
        if (p.frame.emit_time <= until && (t < 0 || p.frame.emit_time < t))
          t = p.frame.emit_time;
      if (t < 0) break;
      std::vector<CanFrame> instant;
      for (const DeliveredFrame& p : pending_)
        if (p.frame.emit_time == t) instant.push_back(p.frame);
      const CanFrame winner = arbitrate(instant);
      Writer writer = Writer::Legit;
      for (size_t i = 0; i < pending_.size(); ++i) {
        const CanFrame& f = pending_[i].frame;
        if (f.emit_time == winner.emit_time && f.id == winner.id &&
            f.signal_name == winner.signal_name && f.value == winner.value) {
          writer = pending_[i].writer;
          pending_.erase(pending_.begin() + static_cast<long>(i));
          break;
        }
      }
      state_.last_value[winner.signal_name] =
          BusEntry{winner.value, writer, winner.emit_time};
      DeliveredFrame df{winner, writer};
      for (auto& tap : taps_) tap->sniff_log.push_back(df);
      delivered.push_back(df);
    }
    now_ = std::max(now_, until);
    return delivered;
  }

  // Snapshot of every signal's last value at the sampling instant.
  Sample sample_state() const {
    Sample s;
    s.reserve(signal_names_.size());
    for (const std::string& name : signal_names_) {
      auto it = state_.last_value.find(name);
      if (it == state_.last_value.end())
        fail("cold bus: signal never written: " + name);
      s.push_back(it->second.value);
    }
    return s;
  }

 private:
  std::vector<std::string> signal_names_;
  SignalMap map_;
  std::vector<EcuNode> ecus_;
  std::vector<std::unique_ptr<AttackerTap>> taps_;
  std::vector<DeliveredFrame> pending_;
  BusState state_;
  std::int64_t now_ = 0;
};

// Advance the bus through `second` and read the authenticator's 1 Hz sample.
inline Sample sample_state(CanBus& bus, long second) {
  bus.step(sample_instant_us(second));
  return bus.sample_state();
}

// Schedule attacker frames so they win the race just before the next sample.
// Under safety enforcement only Modifiable signals may be injected.
inline std::vector<CanFrame> inject(AttackerTap& tap,
                                    const std::vector<CanFrame>& frames,
                                    const InjectPolicy& policy = {}) {
  require(tap.bus != nullptr, "tap is not attached to a bus");
  std::vector<CanFrame> scheduled;
  std::int64_t target = tap.bus->next_sample_instant(tap.bus->now());
  for (const CanFrame& f : frames) {
    if (tap.enforce_safety) {
      require(tap.mask != nullptr, "tap has no taxonomy to enforce");
      int fi = -1;
      const std::vector<std::string>& names = tap.bus->signal_names();
      for (size_t i = 0; i < names.size(); ++i)
        if (names[i] == f.signal_name) fi = static_cast<int>(i);
      require(fi >= 0, "inject: unknown signal " + f.signal_name);
      if (!tap.mask->is_modifiable(fi))
        fail("safety violation: signal '" + f.signal_name +
             "' is not modifiable");
    }
    CanFrame out = f;
    out.emit_time = target - policy.guard_us;
    tap.bus->enqueue(out, Writer::Attacker);
    scheduled.push_back(out);
  }
  return scheduled;
}

// Sniff log export: one row per delivered frame.
inline std::string sniff_log_csv(const AttackerTap& tap) {
  std::string out = "time_us,can_id,signal,value,writer\n";
  char buf[64];
  for (const DeliveredFrame& d : tap.sniff_log) {
    std::snprintf(buf, sizeof(buf), "%.17g", d.frame.value);
    out += std::to_string(d.frame.emit_time) + "," +
           std::to_string(d.frame.id) + "," + d.frame.signal_name + "," + buf +
           "," + (d.writer == Writer::Attacker ? "attacker" : "legit") + "\n";
  }
  return out;
}

}  // namespace drivesec
