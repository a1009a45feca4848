#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "drivesec/common.hpp"
#include "drivesec/tensor.hpp"

namespace drivesec {

// One second of signal values, in feature order.
using Sample = std::vector<double>;

struct DataRow {
  int driver_id = 0;
  double timestamp = 0.0;  // seconds, 1 Hz within a driver
  Sample values;
};

// As loaded from disk / the synthesizer: may still contain constant columns.
struct RawDataset {
  std::vector<std::string> feature_names;
  std::vector<DataRow> rows;

  int num_drivers() const {
    int d = 0;
    for (const DataRow& r : rows) d = std::max(d, r.driver_id + 1);
    return d;
  }
  int num_features() const { return static_cast<int>(feature_names.size()); }
};

struct NormStats {
  std::vector<double> min;
  std::vector<double> max;
  bool empty() const { return min.empty(); }
};

// Constant columns removed; optionally min-max normalized into [0,1].
struct Dataset {
  std::vector<std::string> feature_names;
  std::vector<DataRow> rows;
  NormStats norm_stats;                       // set by normalize()
  std::vector<std::string> dropped_features;  // recorded by the filter
  bool normalized = false;

  int num_drivers() const {
    int d = 0;
    for (const DataRow& r : rows) d = std::max(d, r.driver_id + 1);
    return d;
  }
  int num_features() const { return static_cast<int>(feature_names.size()); }

  int feature_index(const std::string& name) const {
    for (size_t i = 0; i < feature_names.size(); ++i)
      if (feature_names[i] == name) return static_cast<int>(i);
    fail("unknown feature: " + name);
  }
};

struct Window {
  int driver_id = 0;
  Tensor values;  // [window_size, n_features]
  double start_time = 0.0;
};

struct Batch {
  int driver_id = 0;
  std::vector<Window> windows;  // exactly batch_windows consecutive windows
};

struct SplitSpec {
  double train_frac = 0.85;
  double val_frac = 0.05;
  double test_frac = 0.10;
};

// CSV column mapping for load_dataset. An empty feature list means "all
// columns except the driver/time columns, in file order"; an empty time
// column means timestamps are synthesized per driver at 1 Hz.
struct Schema {
  std::string driver_column = "Driver";
  std::string time_column;
  std::vector<std::string> feature_columns;
};

// --- CSV ingestion --------------------------------------------------------

inline RawDataset load_dataset(const std::string& path, const Schema& schema) {
  std::vector<std::string> lines = read_lines(path);
  // Drop trailing blank lines.
  while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
  require(!lines.empty(), "no rows in dataset file: " + path);

  std::vector<std::string> header = split_on(lines[0], ',');
  for (std::string& h : header) h = trim(h);

  int driver_col = -1, time_col = -1;
  for (size_t i = 0; i < header.size(); ++i) {
    if (header[i] == schema.driver_column) driver_col = static_cast<int>(i);
    if (!schema.time_column.empty() && header[i] == schema.time_column)
      time_col = static_cast<int>(i);
  }
  require(driver_col >= 0,
          "driver label column '" + schema.driver_column + "' not in header");
  require(schema.time_column.empty() || time_col >= 0,
          "time column '" + schema.time_column + "' not in header");

  std::vector<int> feature_cols;
  RawDataset ds;
  if (schema.feature_columns.empty()) {
    for (size_t i = 0; i < header.size(); ++i) {
      if (static_cast<int>(i) == driver_col || static_cast<int>(i) == time_col)
        continue;
      feature_cols.push_back(static_cast<int>(i));
      ds.feature_names.push_back(header[i]);
    }
  } else {
    for (const std::string& name : schema.feature_columns) {
      int idx = -1;
      for (size_t i = 0; i < header.size(); ++i)
        if (header[i] == name) idx = static_cast<int>(i);
      require(idx >= 0, "feature column '" + name + "' not in header");
      feature_cols.push_back(idx);
      ds.feature_names.push_back(name);
    }
  }
  require(!ds.feature_names.empty(), "no feature columns in " + path);
  require(lines.size() > 1, "no rows in dataset file: " + path);

  // Driver labels become dense ids in order of first appearance.
  std::map<std::string, int> driver_ids;
  std::vector<double> next_ts;  // synthesized per-driver clock
  for (size_t li = 1; li < lines.size(); ++li) {
    if (trim(lines[li]).empty()) continue;
    std::vector<std::string> cells = split_on(lines[li], ',');
    if (cells.size() != header.size())
      fail("malformed row " + std::to_string(li) + " in " + path + ": expected " +
           std::to_string(header.size()) + " columns, got " +
           std::to_string(cells.size()));
    std::string label = trim(cells[static_cast<size_t>(driver_col)]);
    if (label.empty())
      fail("unknown driver label at row " + std::to_string(li) + " in " + path);
    auto it = driver_ids.find(label);
    int did;
    if (it == driver_ids.end()) {
      did = static_cast<int>(driver_ids.size());
      driver_ids.emplace(label, did);
      next_ts.push_back(0.0);
    } else {
      did = it->second;
    }
    DataRow row;
    row.driver_id = did;
    try {
      if (time_col >= 0)
        row.timestamp = parse_double(trim(cells[static_cast<size_t>(time_col)]));
      else
        row.timestamp = next_ts[static_cast<size_t>(did)]++;
      row.values.reserve(feature_cols.size());
      for (int fc : feature_cols)
        row.values.push_back(parse_double(trim(cells[static_cast<size_t>(fc)])));
    } catch (const Error& e) {
      fail("malformed row " + std::to_string(li) + " in " + path + ": " +
           e.what());
    }
    ds.rows.push_back(std::move(row));
  }
  require(!ds.rows.empty(), "no rows in dataset file: " + path);

  // Timestamps must be strictly increasing within each driver.
  std::map<int, double> last_ts;
  for (const DataRow& r : ds.rows) {
    auto it = last_ts.find(r.driver_id);
    if (it != last_ts.end())
      require(r.timestamp > it->second,
              "timestamps not strictly increasing for driver " +
                  std::to_string(r.driver_id));
    last_ts[r.driver_id] = r.timestamp;
  }
  return ds;
}

inline void save_dataset_csv(const RawDataset& ds, const std::string& path,
                             const std::string& driver_column = "Driver") {
  std::string out = driver_column;
  for (const std::string& f : ds.feature_names) out += "," + f;
  out += "\n";
  for (const DataRow& r : ds.rows) {
    out += std::to_string(r.driver_id);
    for (double v : r.values) out += "," + hex_double(v);
    out += "\n";
  }
  write_text_file(path, out);
}

// --- pipeline operations --------------------------------------------------

// Drop every column with zero variance; record the dropped names.
inline Dataset filter_constant_features(const RawDataset& raw) {
  require(!raw.rows.empty(), "filter_constant_features: empty dataset");
  int nf = raw.num_features();
  std::vector<bool> keep(static_cast<size_t>(nf), false);
  for (int f = 0; f < nf; ++f) {
    double first = raw.rows[0].values[static_cast<size_t>(f)];
    for (const DataRow& r : raw.rows) {
      if (r.values[static_cast<size_t>(f)] != first) {
        keep[static_cast<size_t>(f)] = true;
        break;
      }
    }
  }
  Dataset ds;
  for (int f = 0; f < nf; ++f) {
    if (keep[static_cast<size_t>(f)])
      ds.feature_names.push_back(raw.feature_names[static_cast<size_t>(f)]);
    else
      ds.dropped_features.push_back(raw.feature_names[static_cast<size_t>(f)]);
  }
  require(!ds.feature_names.empty(), "all columns are constant");
  ds.rows.reserve(raw.rows.size());
  for (const DataRow& r : raw.rows) {
    DataRow out;
    out.driver_id = r.driver_id;
    out.timestamp = r.timestamp;
    out.values.reserve(ds.feature_names.size());
    for (int f = 0; f < nf; ++f)
      if (keep[static_cast<size_t>(f)]) out.values.push_back(r.values[static_cast<size_t>(f)]);
    ds.rows.push_back(std::move(out));
  }
  return ds;
}

// Per-feature min-max into [0,1]. With no stats given they are computed from
// `ds` (training data); with stats given (val/test/attack data) out-of-range
// values clamp to [0,1].
inline std::pair<Dataset, NormStats> normalize(const Dataset& ds,
                                               const NormStats* stats = nullptr) {
  require(!ds.rows.empty(), "normalize: empty dataset");
  int nf = ds.num_features();
  NormStats st;
  if (stats) {
    require(static_cast<int>(stats->min.size()) == nf,
            "normalize: stats feature count mismatch");
    st = *stats;
  } else {
    st.min.assign(static_cast<size_t>(nf), 0.0);
    st.max.assign(static_cast<size_t>(nf), 0.0);
    for (int f = 0; f < nf; ++f) {
      double lo = ds.rows[0].values[static_cast<size_t>(f)], hi = lo;
      for (const DataRow& r : ds.rows) {
        lo = std::min(lo, r.values[static_cast<size_t>(f)]);
        hi = std::max(hi, r.values[static_cast<size_t>(f)]);
      }
      st.min[static_cast<size_t>(f)] = lo;
      st.max[static_cast<size_t>(f)] = hi;
    }
  }
  Dataset out = ds;
  out.norm_stats = st;
  out.normalized = true;
  for (DataRow& r : out.rows) {
    for (int f = 0; f < nf; ++f) {
      double lo = st.min[static_cast<size_t>(f)], hi = st.max[static_cast<size_t>(f)];
      double v = (hi > lo) ? (r.values[static_cast<size_t>(f)] - lo) / (hi - lo) : 0.0;
      r.values[static_cast<size_t>(f)] = std::clamp(v, 0.0, 1.0);
    }
  }
  return {out, st};
}

// Normalized position of a raw value for one feature (same clamping rule).
inline double normalize_value(const NormStats& st, int feature, double raw) {
  double lo = st.min[static_cast<size_t>(feature)];
  double hi = st.max[static_cast<size_t>(feature)];
  double v = (hi > lo) ? (raw - lo) / (hi - lo) : 0.0;
  return std::clamp(v, 0.0, 1.0);
}

// Sliding windows over each per-driver contiguous run of rows.
// A run of length N yields floor((N - window_size)/step) + 1 windows.
inline std::vector<Window> make_windows(const Dataset& ds, int window_size = 16,
                                        int step = 8) {
  require(window_size > 0 && step > 0, "make_windows: sizes must be positive");
  std::vector<Window> out;
  size_t n = ds.rows.size();
  size_t run_start = 0;
  auto flush_run = [&](size_t begin, size_t end) {
    long len = static_cast<long>(end - begin);
    for (long s = 0; s + window_size <= len; s += step) {
      Window w;
      w.driver_id = ds.rows[begin].driver_id;
      w.start_time = ds.rows[begin + static_cast<size_t>(s)].timestamp;
      w.values = Tensor({window_size, ds.num_features()});
      for (int t = 0; t < window_size; ++t) {
        const Sample& v = ds.rows[begin + static_cast<size_t>(s + t)].values;
        for (int f = 0; f < ds.num_features(); ++f) w.values.at(t, f) = v[static_cast<size_t>(f)];
      }
      out.push_back(std::move(w));
    }
  };
  for (size_t i = 1; i <= n; ++i) {
    bool boundary = (i == n) || ds.rows[i].driver_id != ds.rows[run_start].driver_id ||
                    std::abs(ds.rows[i].timestamp - ds.rows[i - 1].timestamp - 1.0) > 1e-9;
    if (boundary) {
      flush_run(run_start, i);
      run_start = i;
    }
  }
  return out;
}

// Group consecutive same-driver windows (start times step apart) into
// non-overlapping batches; the remainder is discarded.
inline std::vector<Batch> make_batches(const std::vector<Window>& ws,
                                       int batch_windows = 4, int step = 8) {
  require(batch_windows > 0, "make_batches: batch size must be positive");
  std::vector<Batch> out;
  std::vector<Window> cur;
  for (const Window& w : ws) {
    bool chains = !cur.empty() && w.driver_id == cur.back().driver_id &&
                  std::abs(w.start_time - cur.back().start_time - step) < 1e-9;
    if (!chains) cur.clear();
    cur.push_back(w);
    if (static_cast<int>(cur.size()) == batch_windows) {
      Batch b;
      b.driver_id = cur[0].driver_id;
      b.windows = cur;
      out.push_back(std::move(b));
      cur.clear();
    }
  }
  return out;
}

// Contiguous per-driver time blocks: [train | val | test] in row order, so
// windows never straddle split boundaries. The seed is part of the signature
// for interface stability; block splitting itself is deterministic.
inline std::tuple<Dataset, Dataset, Dataset> split(const Dataset& ds,
                                                   const SplitSpec& spec,
                                                   std::uint64_t /*seed*/ = 0) {
  double sum = spec.train_frac + spec.val_frac + spec.test_frac;
  require(std::abs(sum - 1.0) < 1e-9, "split fractions must sum to 1");
  require(spec.train_frac >= 0 && spec.val_frac >= 0 && spec.test_frac >= 0,
          "split fractions must be nonnegative");

  Dataset train, val, test;
  for (Dataset* part : {&train, &val, &test}) {
    part->feature_names = ds.feature_names;
    part->norm_stats = ds.norm_stats;
    part->dropped_features = ds.dropped_features;
    part->normalized = ds.normalized;
  }
  // Row indices per driver, in stream order.
  std::map<int, std::vector<size_t>> by_driver;
  for (size_t i = 0; i < ds.rows.size(); ++i)
    by_driver[ds.rows[i].driver_id].push_back(i);
  for (const auto& [driver, idx] : by_driver) {
    size_t n = idx.size();
    size_t n_train = static_cast<size_t>(std::floor(spec.train_frac * static_cast<double>(n)));
    size_t n_val = static_cast<size_t>(std::floor(spec.val_frac * static_cast<double>(n)));
    if (n_train + n_val > n) n_val = n - n_train;
    for (size_t i = 0; i < n; ++i) {
      Dataset* dst = (i < n_train) ? &train : (i < n_train + n_val) ? &val : &test;
      dst->rows.push_back(ds.rows[idx[i]]);
    }
  }
  return {train, val, test};
}

}  // namespace drivesec
