#pragma once

#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <map>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "drivesec/attacks.hpp"
#include "drivesec/synth.hpp"

namespace drivesec {

// --- configuration ---------------------------------------------------------

struct ExperimentConfig {
  std::string dataset = "synthetic";  // CSV path, or the literal "synthetic"
  std::string driver_column = "Driver";
  std::string time_column;  // empty: 1 Hz timestamps synthesized per driver
  int synthetic_drivers = 10;
  int synthetic_seconds = 4000;  // per driver

  int window_size = 16;
  int window_step = 8;
  int batch_windows = 4;
  double train_frac = 0.85;
  double val_frac = 0.05;
  double test_frac = 0.10;

  int hidden_size = 64;
  std::vector<int> conv_widths = {128, 256, 128};
  std::vector<int> conv_kernels = {8, 5, 3};
  int epochs = 120;
  double learning_rate = 0.001;
  int minibatch = 32;

  std::string taxonomy;    // signal safety classes, required
  std::string signal_map;  // signal -> CAN arbitration id, required
  std::vector<Scenario> scenarios = {Scenario::WB, Scenario::GB1, Scenario::GB2,
                                     Scenario::BB1, Scenario::BB2};

  double alpha = 0.01;
  double gamma = 0.9;
  double noise_scale = 1.0;
  int episodes = 150;           // GB2 budget
  int max_episode_length = 5;   // GB2 oracle probes per episode
  int bb2_episodes = 120;       // BB2 budget
  int bb2_max_episode_length = 1;  // one query per episode: queries == episodes
  int latent_dim = 64;
  int gen_hidden = 96;
  double gen_out_gain = 6.0;   // spread of untrained drafts across the value range
  double generator_lr = 0.08;  // GB2 (Adam through the surrogate)
  double bb2_lr = 0.03;        // BB2 (plain steps toward the anchor)

  int gb1_max_batches = 0;  // cap per grid cell, 0 = use every test batch
  int alarm_threshold = 2;
  bool enforce_safety = true;
  std::uint64_t seed = 0;
};

namespace detail {

inline std::string resolve_path(const std::string& base_dir, const std::string& p) {
  if (p.empty() || p == "synthetic") return p;
  std::filesystem::path fp(p);
  if (fp.is_absolute() || base_dir.empty()) return p;
  return (std::filesystem::path(base_dir) / fp).string();
}

inline std::vector<int> parse_int_list(const std::string& s, const std::string& key) {
  std::vector<int> out;
  for (const std::string& tok : split_on(s, ','))
    out.push_back(static_cast<int>(parse_long(trim(tok))));
  require(!out.empty(), "config key " + key + " is empty");
  return out;
}

inline bool parse_bool(const std::string& s, const std::string& key) {
  if (s == "1" || s == "true") return true;
  if (s == "0" || s == "false") return false;
  fail("config key " + key + " must be a boolean, got '" + s + "'");
}

}  // namespace detail

// Flat key=value file; '#' starts a comment; relative paths are resolved
// against the config file's directory. DRIVESEC_DATASET in the environment
// overrides the dataset. Every referenced file must exist at load time.
inline ExperimentConfig parse_config_text(const std::string& text,
                                          const std::string& base_dir) {
  ExperimentConfig cfg;
  size_t lineno = 0;
  for (const std::string& raw : split_on(text, '\n')) {
    ++lineno;
    std::string line = trim(raw);
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = trim(line.substr(0, hash));
    if (line.empty()) continue;
    size_t eq = line.find('=');
    require(eq != std::string::npos,
            "config line " + std::to_string(lineno) + ": expected key=value");
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    auto as_long = [&] { return parse_long(val); };
    auto as_double = [&] { return parse_double(val); };
    if (key == "dataset") cfg.dataset = detail::resolve_path(base_dir, val);
    else if (key == "driver_column") cfg.driver_column = val;
    else if (key == "time_column") cfg.time_column = val;
    else if (key == "synthetic_drivers") cfg.synthetic_drivers = static_cast<int>(as_long());
    else if (key == "synthetic_seconds") cfg.synthetic_seconds = static_cast<int>(as_long());
    else if (key == "window_size") cfg.window_size = static_cast<int>(as_long());
    else if (key == "window_step") cfg.window_step = static_cast<int>(as_long());
    else if (key == "batch_windows") cfg.batch_windows = static_cast<int>(as_long());
    else if (key == "train_frac") cfg.train_frac = as_double();
    else if (key == "val_frac") cfg.val_frac = as_double();
    else if (key == "test_frac") cfg.test_frac = as_double();
    else if (key == "hidden_size") cfg.hidden_size = static_cast<int>(as_long());
    else if (key == "conv_widths") cfg.conv_widths = detail::parse_int_list(val, key);
    else if (key == "conv_kernels") cfg.conv_kernels = detail::parse_int_list(val, key);
    else if (key == "epochs") cfg.epochs = static_cast<int>(as_long());
    else if (key == "learning_rate") cfg.learning_rate = as_double();
    else if (key == "minibatch") cfg.minibatch = static_cast<int>(as_long());
    else if (key == "taxonomy") cfg.taxonomy = detail::resolve_path(base_dir, val);
    else if (key == "signal_map") cfg.signal_map = detail::resolve_path(base_dir, val);
    else if (key == "scenarios") {
      cfg.scenarios.clear();
      for (const std::string& tok : split_on(val, ','))
        cfg.scenarios.push_back(parse_scenario(trim(tok)));
    } else if (key == "alpha") cfg.alpha = as_double();
    else if (key == "gamma") cfg.gamma = as_double();
    else if (key == "noise_scale") cfg.noise_scale = as_double();
    else if (key == "episodes") cfg.episodes = static_cast<int>(as_long());
    else if (key == "max_episode_length") cfg.max_episode_length = static_cast<int>(as_long());
    else if (key == "bb2_episodes") cfg.bb2_episodes = static_cast<int>(as_long());
    else if (key == "bb2_max_episode_length") cfg.bb2_max_episode_length = static_cast<int>(as_long());
    else if (key == "latent_dim") cfg.latent_dim = static_cast<int>(as_long());
    else if (key == "gen_hidden") cfg.gen_hidden = static_cast<int>(as_long());
    else if (key == "gen_out_gain") cfg.gen_out_gain = as_double();
    else if (key == "generator_lr") cfg.generator_lr = as_double();
    else if (key == "bb2_lr") cfg.bb2_lr = as_double();
    else if (key == "gb1_max_batches") cfg.gb1_max_batches = static_cast<int>(as_long());
    else if (key == "alarm_threshold") cfg.alarm_threshold = static_cast<int>(as_long());
    else if (key == "enforce_safety") cfg.enforce_safety = detail::parse_bool(val, key);
    else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(as_long());
    else fail("unknown config key: " + key);
  }
  return cfg;
}

inline void validate_config(const ExperimentConfig& cfg) {
  require(!cfg.taxonomy.empty(), "config is missing the taxonomy path");
  require(!cfg.signal_map.empty(), "config is missing the signal_map path");
  if (cfg.dataset != "synthetic")
    require(file_exists(cfg.dataset), "dataset file not found: " + cfg.dataset);
  require(file_exists(cfg.taxonomy), "taxonomy file not found: " + cfg.taxonomy);
  require(file_exists(cfg.signal_map),
          "signal map file not found: " + cfg.signal_map);
  require(cfg.window_size > 0 && cfg.window_step > 0 && cfg.batch_windows > 0,
          "window geometry must be positive");
  require(cfg.epochs >= 0 && cfg.minibatch > 0, "bad training settings");
  require(cfg.episodes > 0 && cfg.bb2_episodes > 0, "episode budgets must be positive");
  require(cfg.alpha > 0 && cfg.gamma > 0 && cfg.gamma < 1,
          "alpha must be > 0 and gamma in (0, 1)");
  require(!cfg.scenarios.empty(), "no attack scenarios selected");
}

inline ExperimentConfig load_config(const std::string& path) {
  std::string base = std::filesystem::path(path).parent_path().string();
  ExperimentConfig cfg = parse_config_text(read_text_file(path), base);
  if (const char* env = std::getenv("DRIVESEC_DATASET"))
    if (*env) cfg.dataset = env;
  validate_config(cfg);
  return cfg;
}

// --- report bundle ---------------------------------------------------------

struct StageResult {
  bool ran = false;
  bool ok = false;
  std::string error;
};

struct GenRow {
  int target = -1;
  int attacker = -1;
  double asr = 0.0;
  int convergence = -1;
  long episodes = 0;
};

struct ReportBundle {
  ExperimentConfig cfg;
  StageResult prep, baseline, gb1, gb2, bb1, bb2, deploy;

  std::vector<std::string> feature_names;
  std::vector<std::string> dropped_features;
  int drivers = 0;
  long rows_total = 0;

  std::vector<std::string> member_names;
  std::vector<std::vector<EpochStat>> histories;
  std::vector<double> member_acc;  // batch-level accuracy on the test split
  std::vector<double> member_f1;
  double ensemble_acc = 0.0;
  double ensemble_f1 = 0.0;

  std::vector<std::vector<double>> gb1_grid;  // [attacker][victim]
  double gb1_mean = 0.0;
  double gb1_control_mean = 0.0;  // same pairing, no merge

  std::vector<GenRow> gb2_rows;
  int gb2_converged = 0;
  double gb2_mean_asr = 0.0;  // over convergent targets
  double gb2_asr_std = 0.0;

  std::vector<std::pair<double, double>> bb1_sweep;  // fraction -> mean asr
  double bb1_mean = 0.0;
  double bb1_std = 0.0;
  double bb1_single_batch_asr = -1.0;

  std::vector<GenRow> bb2_rows;
  int bb2_converged = 0;
  double bb2_mean_convergence = -1.0;  // over convergent targets

  std::vector<AttackOutcome> campaigns;
};

// Heavyweight artifacts tests and the CLI want to reuse after a run.
struct ExperimentWorld {
  NormStats stats;
  SafetyTaxonomy tax;
  SafetyMask mask;
  SignalMap map;
  Ensemble ensemble;
  std::vector<Window> train_ws, val_ws;
  std::vector<std::vector<Batch>> test_batches;    // per driver
  std::vector<std::vector<Sample>> test_raw_rows;  // per driver, raw values
  GeneratorModel gb2_generator;  // trained for target 0 (deploy campaigns)
  GeneratorModel bb2_generator;
  bool have_gb2_generator = false;
  bool have_bb2_generator = false;
};

namespace detail {

template <typename F>
void run_stage(StageResult& st, F&& body) {
  st.ran = true;
  try {
    body();
    st.ok = true;
  } catch (const std::exception& ex) {
    st.ok = false;
    st.error = ex.what();
  }
}

inline bool has_scenario(const ExperimentConfig& cfg, Scenario s) {
  for (Scenario x : cfg.scenarios)
    if (x == s) return true;
  return false;
}

inline double mean_of(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

inline double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double m = mean_of(v), s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

}  // namespace detail

// --- the experiment --------------------------------------------------------

enum class RunScope { PrepOnly, BaselineOnly, Full };

inline ReportBundle run_experiment(const ExperimentConfig& cfg,
                                   ExperimentWorld* keep = nullptr,
                                   RunScope scope = RunScope::Full) {
  ReportBundle rb;
  rb.cfg = cfg;
  ExperimentWorld w;

  detail::run_stage(rb.prep, [&] {
    validate_config(cfg);
    RawDataset raw =
        cfg.dataset == "synthetic"
            ? synth_dataset(cfg.synthetic_drivers, cfg.synthetic_seconds, cfg.seed)
            : load_dataset(cfg.dataset,
                           Schema{cfg.driver_column, cfg.time_column, {}});
    Dataset filtered = filter_constant_features(raw);
    auto [norm, stats] = normalize(filtered);
    w.stats = stats;
    rb.feature_names = norm.feature_names;
    rb.dropped_features = norm.dropped_features;
    rb.drivers = norm.num_drivers();
    rb.rows_total = static_cast<long>(norm.rows.size());
    require(rb.drivers >= 2, "need at least two drivers");

    w.tax = load_taxonomy(cfg.taxonomy);
    w.mask = make_mask(w.tax, norm.feature_names);
    require(!w.mask.modifiable.empty(), "taxonomy marks nothing modifiable");
    w.map = load_signal_map(cfg.signal_map);
    for (const std::string& name : norm.feature_names) w.map.at(name);

    SplitSpec spec{cfg.train_frac, cfg.val_frac, cfg.test_frac};
    auto [train_n, val_n, test_n] = split(norm, spec);
    auto [train_r, val_r, test_r] = split(filtered, spec);
    (void)train_r;
    (void)val_r;
    w.train_ws = make_windows(train_n, cfg.window_size, cfg.window_step);
    w.val_ws = make_windows(val_n, cfg.window_size, cfg.window_step);
    require(!w.train_ws.empty(), "training split yields no windows");

    std::vector<Batch> test_b =
        make_batches(make_windows(test_n, cfg.window_size, cfg.window_step),
                     cfg.batch_windows, cfg.window_step);
    w.test_batches.assign(static_cast<size_t>(rb.drivers), {});
    for (Batch& b : test_b)
      w.test_batches[static_cast<size_t>(b.driver_id)].push_back(std::move(b));
    for (int d = 0; d < rb.drivers; ++d)
      require(!w.test_batches[static_cast<size_t>(d)].empty(),
              "driver " + std::to_string(d) + " has no test batches");
    w.test_raw_rows.assign(static_cast<size_t>(rb.drivers), {});
    for (const DataRow& r : test_r.rows)
      w.test_raw_rows[static_cast<size_t>(r.driver_id)].push_back(r.values);
  });

  const int D = rb.drivers;
  if (rb.prep.ok && scope != RunScope::PrepOnly) detail::run_stage(rb.baseline, [&] {
    std::vector<ArchKind> kinds = {ArchKind::LstmFcn, ArchKind::Lstm,
                                   ArchKind::RnnGru};
    std::vector<TrainedModel> models;
    for (size_t k = 0; k < kinds.size(); ++k) {
      ArchSpec as;
      as.kind = kinds[k];
      as.hidden = {cfg.hidden_size};
      as.conv_widths = cfg.conv_widths;
      as.conv_kernels = cfg.conv_kernels;
      as.classes = D;
      as.features = static_cast<int>(rb.feature_names.size());
      TrainedModel m = build_model(as, derive_seed(cfg.seed, "model", static_cast<long>(k)));
      m.norm = w.stats;
      m = train_model(m, w.train_ws, w.val_ws, cfg.epochs, cfg.learning_rate,
                      derive_seed(cfg.seed, "train", static_cast<long>(k)),
                      cfg.minibatch);
      rb.member_names.push_back(arch_name(kinds[k]));
      rb.histories.push_back(m.history);
      models.push_back(std::move(m));
    }
    w.ensemble = make_ensemble(models[0], models[1], models[2], rb.feature_names);

    std::vector<int> labels;
    std::vector<std::vector<int>> member_preds(models.size());
    std::vector<int> ens_preds;
    for (int d = 0; d < D; ++d)
      for (const Batch& b : w.test_batches[static_cast<size_t>(d)]) {
        labels.push_back(b.driver_id);
        for (size_t k = 0; k < models.size(); ++k)
          member_preds[k].push_back(predict_batch(w.ensemble.models[k], b).label);
        ens_preds.push_back(ensemble_vote(w.ensemble, b).label);
      }
    for (size_t k = 0; k < models.size(); ++k) {
      rb.member_acc.push_back(accuracy(overall_counts(member_preds[k], labels)));
      rb.member_f1.push_back(macro_f1(member_preds[k], labels, D));
    }
    rb.ensemble_acc = accuracy(overall_counts(ens_preds, labels));
    rb.ensemble_f1 = macro_f1(ens_preds, labels, D);
  });

  const bool base_ok =
      rb.baseline.ran && rb.baseline.ok && scope == RunScope::Full;
  auto capped = [&](const std::vector<Batch>& v) {
    if (cfg.gb1_max_batches <= 0 ||
        static_cast<int>(v.size()) <= cfg.gb1_max_batches)
      return v;
    return std::vector<Batch>(v.begin(), v.begin() + cfg.gb1_max_batches);
  };

  if (base_ok && detail::has_scenario(cfg, Scenario::GB1))
    detail::run_stage(rb.gb1, [&] {
      OracleHandle oracle(w.ensemble, OracleMode::FullProbs);
      rb.gb1_grid.assign(static_cast<size_t>(D),
                         std::vector<double>(static_cast<size_t>(D), 0.0));
      std::vector<double> cells, control_cells;
      for (int a = 0; a < D; ++a) {
        std::vector<Batch> ab = capped(w.test_batches[static_cast<size_t>(a)]);
        for (int v = 0; v < D; ++v) {
          std::vector<Batch> vb = capped(w.test_batches[static_cast<size_t>(v)]);
          AsrResult r = run_gb1(ab, vb, oracle, w.mask);
          rb.gb1_grid[static_cast<size_t>(a)][static_cast<size_t>(v)] = r.asr;
          cells.push_back(r.asr);
          // Control: same pairing, attacker batches sent unmerged.
          long fooled = 0, sent = 0;
          size_t n = std::max(ab.size(), vb.size());
          for (size_t i = 0; i < n; ++i) {
            if (oracle.query(ab[i % ab.size()]).label == v) ++fooled;
            ++sent;
          }
          control_cells.push_back(asr(fooled, sent));
        }
      }
      rb.gb1_mean = detail::mean_of(cells);
      rb.gb1_control_mean = detail::mean_of(control_cells);
    });

  if (base_ok && (detail::has_scenario(cfg, Scenario::GB2) ||
                  detail::has_scenario(cfg, Scenario::WB)))
    detail::run_stage(rb.gb2, [&] {
      std::vector<double> conv_asr;
      for (int d = 0; d < D; ++d) {
        int a = (d + 1) % D;
        GeneratorModel g = make_generator(
            cfg.latent_dim, cfg.gen_hidden, cfg.batch_windows, cfg.window_size,
            static_cast<int>(w.mask.modifiable.size()),
            derive_seed(cfg.seed, "gb2/gen", d), cfg.gen_out_gain);
        OracleHandle oracle(w.ensemble, OracleMode::FullProbs);
        RlConfig rc;
        rc.alpha = cfg.alpha;
        rc.gamma = cfg.gamma;
        rc.max_episode_length = cfg.max_episode_length;
        rc.num_episodes = cfg.episodes;
        rc.noise_scale = cfg.noise_scale;
        rc.learning_rate = cfg.generator_lr;
        TrainGenResult tr = train_generator(
            std::move(g), oracle, d, rc, w.test_batches[static_cast<size_t>(a)],
            w.mask, derive_seed(cfg.seed, "gb2/train", d));
        GenRow row;
        row.target = d;
        row.attacker = a;
        row.convergence = tr.convergence_episode;
        row.episodes = tr.episodes_run;
        row.asr = generator_asr(tr.model, w.ensemble, d,
                                w.test_batches[static_cast<size_t>(a)], w.mask,
                                derive_seed(cfg.seed, "gb2/eval", d), 3);
        if (row.convergence >= 0) {
          ++rb.gb2_converged;
          conv_asr.push_back(row.asr);
        }
        if (d == 0) {
          w.gb2_generator = tr.model;
          w.have_gb2_generator = true;
        }
        rb.gb2_rows.push_back(row);
      }
      rb.gb2_mean_asr = detail::mean_of(conv_asr);
      rb.gb2_asr_std = detail::std_of(conv_asr);
    });

  if (base_ok && detail::has_scenario(cfg, Scenario::BB1))
    detail::run_stage(rb.bb1, [&] {
      long span = static_cast<long>(cfg.window_step) * (cfg.batch_windows - 1) +
                  cfg.window_size;
      // One full sniff of each victim's test drive, reused for every fraction.
      std::vector<std::vector<DeliveredFrame>> logs(static_cast<size_t>(D));
      for (int v = 0; v < D; ++v) {
        const std::vector<Sample>& rows = w.test_raw_rows[static_cast<size_t>(v)];
        CanBus bus(rb.feature_names, w.map);
        bus.add_replay_all("victim", rows);
        AttackerTap& ear = bus.attach_tap(&w.mask, cfg.enforce_safety);
        for (long s = 0; s < static_cast<long>(rows.size()); ++s)
          sample_state(bus, s);
        logs[static_cast<size_t>(v)] = std::move(ear.sniff_log);
      }
      auto sweep_point = [&](double fraction) {
        std::vector<double> asrs;
        for (int v = 0; v < D; ++v) {
          int a = (v + 1) % D;
          std::vector<Batch> vb = bb1_collect(
              logs[static_cast<size_t>(v)], fraction, rb.feature_names, w.stats,
              v, cfg.window_size, cfg.window_step, cfg.batch_windows);
          OracleHandle oracle(w.ensemble, OracleMode::LabelOnly);
          asrs.push_back(
              run_gb1(capped(w.test_batches[static_cast<size_t>(a)]), vb,
                      oracle, w.mask)
                  .asr);
        }
        return detail::mean_of(asrs);
      };
      std::vector<double> fraction_means;
      for (int i = 1; i <= 9; ++i) {
        double f = static_cast<double>(i) / 10.0;
        double m = sweep_point(f);
        rb.bb1_sweep.emplace_back(f, m);
        fraction_means.push_back(m);
      }
      rb.bb1_mean = detail::mean_of(fraction_means);
      rb.bb1_std = detail::std_of(fraction_means);
      // Minimum-footprint variant: sniff just long enough for one batch.
      std::vector<double> single;
      for (int v = 0; v < D; ++v) {
        int a = (v + 1) % D;
        double frac = (static_cast<double>(span) + 0.5) /
                      static_cast<double>(w.test_raw_rows[static_cast<size_t>(v)].size());
        std::vector<Batch> vb = bb1_collect(
            logs[static_cast<size_t>(v)], std::min(frac, 1.0), rb.feature_names,
            w.stats, v, cfg.window_size, cfg.window_step, cfg.batch_windows);
        OracleHandle oracle(w.ensemble, OracleMode::LabelOnly);
        single.push_back(
            run_gb1(capped(w.test_batches[static_cast<size_t>(a)]), vb, oracle,
                    w.mask)
                .asr);
      }
      rb.bb1_single_batch_asr = detail::mean_of(single);
    });

  if (base_ok && detail::has_scenario(cfg, Scenario::BB2))
    detail::run_stage(rb.bb2, [&] {
      std::vector<double> convs;
      for (int d = 0; d < D; ++d) {
        int a = (d + 1) % D;
        GeneratorModel g = make_generator(
            cfg.latent_dim, cfg.gen_hidden, cfg.batch_windows, cfg.window_size,
            static_cast<int>(w.mask.modifiable.size()),
            derive_seed(cfg.seed, "bb2/gen", d), cfg.gen_out_gain);
        OracleHandle oracle(w.ensemble, OracleMode::LabelOnly);
        RlConfig rc;
        rc.alpha = cfg.alpha;
        rc.gamma = cfg.gamma;
        rc.max_episode_length = cfg.bb2_max_episode_length;
        rc.num_episodes = cfg.bb2_episodes;
        rc.noise_scale = cfg.noise_scale;
        rc.learning_rate = cfg.bb2_lr;
        TrainGenResult tr = train_generator(
            std::move(g), oracle, d, rc, w.test_batches[static_cast<size_t>(a)],
            w.mask, derive_seed(cfg.seed, "bb2/train", d));
        GenRow row;
        row.target = d;
        row.attacker = a;
        row.convergence = tr.convergence_episode;
        row.episodes = tr.episodes_run;
        row.asr = generator_asr(tr.model, w.ensemble, d,
                                w.test_batches[static_cast<size_t>(a)], w.mask,
                                derive_seed(cfg.seed, "bb2/eval", d), 3);
        if (row.convergence >= 0) {
          ++rb.bb2_converged;
          convs.push_back(static_cast<double>(row.convergence));
        }
        if (d == 0) {
          w.bb2_generator = tr.model;
          w.have_bb2_generator = true;
        }
        rb.bb2_rows.push_back(row);
      }
      if (!convs.empty()) rb.bb2_mean_convergence = detail::mean_of(convs);
    });

  if (base_ok) detail::run_stage(rb.deploy, [&] {
    long span = static_cast<long>(cfg.window_step) * (cfg.batch_windows - 1) +
                cfg.window_size;
    int victim = 0, attacker = 1 % D;
    DeployInputs base;
    base.ensemble = &w.ensemble;
    base.mask = &w.mask;
    base.map = &w.map;
    base.stats = &w.stats;
    base.feature_names = rb.feature_names;
    base.attacker_rows = w.test_raw_rows[static_cast<size_t>(attacker)];
    base.victim_rows = w.test_raw_rows[static_cast<size_t>(victim)];
    base.attacker_id = attacker;
    base.victim_id = victim;
    base.enforce_safety = cfg.enforce_safety;
    base.window_size = cfg.window_size;
    base.window_step = cfg.window_step;
    base.batch_windows = cfg.batch_windows;
    base.seed = derive_seed(cfg.seed, "deploy");

    for (Scenario sc : {Scenario::WB, Scenario::GB1, Scenario::GB2,
                        Scenario::BB1, Scenario::BB2}) {
      if (!detail::has_scenario(cfg, sc)) continue;
      DeployInputs in = base;
      if (sc == Scenario::BB1) in.bb1_sniff_seconds = span;
      if (sc == Scenario::GB2 || sc == Scenario::WB) {
        if (!w.have_gb2_generator) continue;  // its stage failed; audit skips
        in.generator = &w.gb2_generator;
        in.convergence_episode = rb.gb2_rows.empty() ? -1 : rb.gb2_rows[0].convergence;
      }
      if (sc == Scenario::BB2) {
        if (!w.have_bb2_generator) continue;
        in.generator = &w.bb2_generator;
        const GenRow& r0 = rb.bb2_rows[0];
        in.convergence_episode = r0.convergence;
        long paid = r0.convergence >= 0 ? r0.convergence : r0.episodes;
        in.training_seconds = static_cast<double>(paid) * 40.0;
      }
      rb.campaigns.push_back(deploy_attack(sc, in));
    }
  });

  if (keep) *keep = std::move(w);
  return rb;
}

// --- report emission -------------------------------------------------------

namespace detail {

inline std::string stage_line(const std::string& name, const StageResult& st) {
  std::string out = "stage." + name + "=";
  if (!st.ran) out += "skipped";
  else if (st.ok) out += "ok";
  else out += "failed: " + st.error;
  return out + "\n";
}

inline std::string history_rows(const std::vector<EpochStat>& h) {
  std::string out = "epoch,train_loss,val_accuracy\n";
  for (const EpochStat& e : h)
    out += std::to_string(e.epoch) + "," + format_fixed(e.train_loss, 6) + "," +
           format_fixed(e.val_accuracy, 6) + "\n";
  return out;
}

}  // namespace detail

// Everything derived from the bundle alone, so re-emitting an identical
// bundle writes byte-identical files; the summary timestamp is the one
// sanctioned exception.
inline std::vector<std::string> emit_reports(
    const ReportBundle& rb, const std::string& out_dir,
    const std::vector<std::string>& formats = {"csv", "txt"}) {
  std::filesystem::create_directories(out_dir);
  bool want_csv = false, want_txt = false;
  for (const std::string& f : formats) {
    if (f == "csv") want_csv = true;
    else if (f == "txt") want_txt = true;
    else fail("unknown report format: " + f);
  }
  std::vector<std::string> written;
  auto emit = [&](const std::string& name, const std::string& body) {
    std::string path = (std::filesystem::path(out_dir) / name).string();
    write_text_file(path, body);
    written.push_back(path);
  };

  if (want_txt) {
    std::string s = "drivesec run summary\nformat_version=1\n";
    char ts[64];
    std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::strftime(ts, sizeof(ts), "%Y-%m-%dT%H:%M:%SZ", &tm);
    s += std::string("timestamp=") + ts + "\n";
    s += "dataset=" + rb.cfg.dataset + "\n";
    s += "seed=" + std::to_string(rb.cfg.seed) + "\n";
    s += "drivers=" + std::to_string(rb.drivers) + "\n";
    s += "features=" + std::to_string(rb.feature_names.size()) + "\n";
    s += "rows=" + std::to_string(rb.rows_total) + "\n";
    s += detail::stage_line("prep", rb.prep);
    s += detail::stage_line("baseline", rb.baseline);
    s += detail::stage_line("gb1", rb.gb1);
    s += detail::stage_line("gb2", rb.gb2);
    s += detail::stage_line("bb1", rb.bb1);
    s += detail::stage_line("bb2", rb.bb2);
    s += detail::stage_line("deploy", rb.deploy);
    if (rb.baseline.ok) {
      for (size_t k = 0; k < rb.member_names.size(); ++k)
        s += "baseline." + rb.member_names[k] + ".accuracy=" +
             format_fixed(rb.member_acc[k], 6) + "\n" + "baseline." +
             rb.member_names[k] + ".macro_f1=" + format_fixed(rb.member_f1[k], 6) +
             "\n";
      s += "baseline.ensemble.accuracy=" + format_fixed(rb.ensemble_acc, 6) + "\n";
      s += "baseline.ensemble.macro_f1=" + format_fixed(rb.ensemble_f1, 6) + "\n";
    }
    if (rb.gb1.ok) {
      s += "gb1.mean_asr=" + format_fixed(rb.gb1_mean, 6) + "\n";
      s += "gb1.control_mean_asr=" + format_fixed(rb.gb1_control_mean, 6) + "\n";
    }
    if (rb.gb2.ok) {
      s += "gb2.converged=" + std::to_string(rb.gb2_converged) + "/" +
           std::to_string(rb.drivers) + "\n";
      s += "gb2.mean_asr=" + format_fixed(rb.gb2_mean_asr, 6) + "\n";
      s += "gb2.asr_std=" + format_fixed(rb.gb2_asr_std, 6) + "\n";
    }
    if (rb.bb1.ok) {
      s += "bb1.mean_asr=" + format_fixed(rb.bb1_mean, 6) + "\n";
      s += "bb1.asr_std=" + format_fixed(rb.bb1_std, 6) + "\n";
      s += "bb1.single_batch_asr=" + format_fixed(rb.bb1_single_batch_asr, 6) + "\n";
    }
    if (rb.bb2.ok) {
      s += "bb2.converged=" + std::to_string(rb.bb2_converged) + "/" +
           std::to_string(rb.drivers) + "\n";
      if (rb.bb2_mean_convergence >= 0)
        s += "bb2.mean_convergence_episode=" +
             format_fixed(rb.bb2_mean_convergence, 3) + "\n";
    }
    emit("summary.txt", s);
  }

  if (!want_csv) return written;

  if (rb.baseline.ok) {
    std::string m = "model,test_accuracy,macro_f1\n";
    for (size_t k = 0; k < rb.member_names.size(); ++k)
      m += rb.member_names[k] + "," + format_fixed(rb.member_acc[k], 6) + "," +
           format_fixed(rb.member_f1[k], 6) + "\n";
    m += "ensemble," + format_fixed(rb.ensemble_acc, 6) + "," +
         format_fixed(rb.ensemble_f1, 6) + "\n";
    emit("baseline_metrics.csv", m);
    for (size_t k = 0; k < rb.member_names.size(); ++k)
      emit("train_history_" + rb.member_names[k] + ".csv",
           detail::history_rows(rb.histories[k]));
  }
  if (rb.gb1.ok) {
    std::string g = "attacker\\victim";
    for (int v = 0; v < rb.drivers; ++v) g += "," + std::to_string(v);
    g += "\n";
    for (int a = 0; a < rb.drivers; ++a) {
      g += std::to_string(a);
      for (int v = 0; v < rb.drivers; ++v)
        g += "," + format_fixed(
                       rb.gb1_grid[static_cast<size_t>(a)][static_cast<size_t>(v)], 6);
      g += "\n";
    }
    emit("gb1_asr_grid.csv", g);
  }
  if (rb.gb2.ok) {
    std::string g = "target,attacker,asr,convergence_episode,episodes_run\n";
    for (const GenRow& r : rb.gb2_rows)
      g += std::to_string(r.target) + "," + std::to_string(r.attacker) + "," +
           format_fixed(r.asr, 6) + "," + std::to_string(r.convergence) + "," +
           std::to_string(r.episodes) + "\n";
    emit("gb2_asr.csv", g);
  }
  if (rb.bb1.ok) {
    std::string g = "fraction,asr\n";
    for (const auto& [f, a] : rb.bb1_sweep)
      g += format_fixed(f, 1) + "," + format_fixed(a, 6) + "\n";
    emit("bb1_sweep.csv", g);
  }
  if (rb.bb2.ok) {
    std::string g = "driver,episode\n";
    for (const GenRow& r : rb.bb2_rows)
      g += std::to_string(r.target) + "," + std::to_string(r.convergence) + "\n";
    emit("bb2_convergence.csv", g);
  }
  if (rb.deploy.ok && !rb.campaigns.empty()) {
    std::string g = outcome_csv_header();
    for (const AttackOutcome& o : rb.campaigns) g += outcome_csv_row(o);
    emit("attack_campaigns.csv", g);

    std::string t = "scenario,setup_min,data_min,training_min,total_min\n";
    for (const AttackOutcome& o : rb.campaigns) {
      AttackTiming tm = o.timing;
      if (o.scenario == Scenario::BB2 && rb.bb2_mean_convergence >= 0)
        tm.training_minutes = rb.bb2_mean_convergence * 40.0 / 60.0;
      t += std::string(scenario_name(o.scenario)) + "," +
           format_fixed(tm.setup_minutes, 3) + "," +
           format_fixed(tm.data_minutes, 3) + "," +
           format_fixed(tm.training_minutes, 3) + "," +
           format_fixed(tm.total_minutes(), 3) + "\n";
    }
    emit("steal_times.csv", t);
  }
  return written;
}

}  // namespace drivesec
