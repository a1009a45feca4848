#include "drivesec/experiment.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

using namespace drivesec;

namespace {

std::string source_dir() {
  const char* d = std::getenv("DRIVESEC_SOURCE_DIR");
  return d ? d : ".";
}

std::string temp_file(const std::string& name, const std::string& content) {
  std::string path = (std::filesystem::temp_directory_path() / name).string();
  write_text_file(path, content);
  return path;
}

// Two synthetic drivers, shrunk until a full pipeline pass takes seconds.
// The half-sized test split keeps every sniff fraction above one batch.
ExperimentConfig tiny_cfg() {
  ExperimentConfig cfg;
  cfg.synthetic_drivers = 2;
  cfg.synthetic_seconds = 800;
  cfg.train_frac = 0.4;
  cfg.val_frac = 0.1;
  cfg.test_frac = 0.5;
  cfg.hidden_size = 6;
  cfg.conv_widths = {4, 6, 4};
  cfg.conv_kernels = {3, 3, 3};
  cfg.epochs = 2;
  cfg.learning_rate = 0.01;
  cfg.minibatch = 16;
  cfg.taxonomy = source_dir() + "/data/taxonomy_default.csv";
  cfg.signal_map = source_dir() + "/data/signal_map.csv";
  cfg.episodes = 6;
  cfg.max_episode_length = 2;
  cfg.bb2_episodes = 6;
  cfg.latent_dim = 4;
  cfg.gen_hidden = 8;
  cfg.gb1_max_batches = 2;
  cfg.seed = 7;
  return cfg;
}

std::string without_timestamp(const std::string& text) {
  std::string out;
  for (const std::string& line : split_on(text, '\n'))
    if (line.rfind("timestamp=", 0) != 0) out += line + "\n";
  return out;
}

}  // namespace

TEST(ParseConfig, KeysCommentsAndLists) {
  std::string text =
      "# comment line\n"
      "dataset = synthetic\n"
      "synthetic_drivers = 4   # trailing comment\n"
      "hidden_size=12\n"
      "conv_widths = 8, 16, 8\n"
      "conv_kernels=3,5,3\n"
      "learning_rate = 0.005\n"
      "scenarios = gb1, bb2\n"
      "enforce_safety = false\n"
      "\n"
      "seed = 99\n";
  ExperimentConfig cfg = parse_config_text(text, "");
  EXPECT_EQ(cfg.dataset, "synthetic");
  EXPECT_EQ(cfg.synthetic_drivers, 4);
  EXPECT_EQ(cfg.hidden_size, 12);
  EXPECT_EQ(cfg.conv_widths, (std::vector<int>{8, 16, 8}));
  EXPECT_EQ(cfg.conv_kernels, (std::vector<int>{3, 5, 3}));
  EXPECT_EQ(cfg.learning_rate, 0.005);
  ASSERT_EQ(cfg.scenarios.size(), 2u);
  EXPECT_EQ(cfg.scenarios[0], Scenario::GB1);
  EXPECT_EQ(cfg.scenarios[1], Scenario::BB2);
  EXPECT_FALSE(cfg.enforce_safety);
  EXPECT_EQ(cfg.seed, 99u);
  // Untouched keys keep their defaults.
  EXPECT_EQ(cfg.window_size, 16);
  EXPECT_EQ(cfg.alarm_threshold, 2);

  EXPECT_THROW(parse_config_text("no_such_key = 1\n", ""), Error);
  EXPECT_THROW(parse_config_text("just a line without equals\n", ""), Error);
  EXPECT_THROW(parse_config_text("enforce_safety = maybe\n", ""), Error);
  EXPECT_THROW(parse_config_text("scenarios = gb1, nope\n", ""), Error);
}

TEST(ParseConfig, RelativePathsResolveAgainstConfigDir) {
  ExperimentConfig cfg = parse_config_text(
      "taxonomy = data/tax.csv\nsignal_map = /abs/map.csv\ndataset = drive.csv\n",
      "/cfgdir");
  EXPECT_EQ(cfg.taxonomy, "/cfgdir/data/tax.csv");
  EXPECT_EQ(cfg.signal_map, "/abs/map.csv");  // absolute path untouched
  EXPECT_EQ(cfg.dataset, "/cfgdir/drive.csv");
  // The synthetic sentinel is not a path.
  EXPECT_EQ(parse_config_text("dataset = synthetic\n", "/cfgdir").dataset,
            "synthetic");
}

TEST(ValidateConfig, ChecksFilesAndRanges) {
  ExperimentConfig cfg = tiny_cfg();
  EXPECT_NO_THROW(validate_config(cfg));

  ExperimentConfig no_tax = cfg;
  no_tax.taxonomy = "";
  EXPECT_THROW(validate_config(no_tax), Error);
  ExperimentConfig missing = cfg;
  missing.taxonomy = "/nonexistent/tax.csv";
  EXPECT_THROW(validate_config(missing), Error);
  ExperimentConfig bad_gamma = cfg;
  bad_gamma.gamma = 1.0;
  EXPECT_THROW(validate_config(bad_gamma), Error);
  ExperimentConfig no_scen = cfg;
  no_scen.scenarios.clear();
  EXPECT_THROW(validate_config(no_scen), Error);
  ExperimentConfig no_eps = cfg;
  no_eps.episodes = 0;
  EXPECT_THROW(validate_config(no_eps), Error);
  ExperimentConfig missing_data = cfg;
  missing_data.dataset = "/nonexistent/drive.csv";
  EXPECT_THROW(validate_config(missing_data), Error);
}

TEST(LoadConfig, ResolvesNeighborsAndHonorsDatasetOverride) {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "drivesec_cfg_test";
  fs::create_directories(dir);
  write_text_file((dir / "tax.csv").string(), "a,modifiable\n");
  write_text_file((dir / "map.csv").string(), "a,1\n");
  write_text_file((dir / "run.cfg").string(),
                  "taxonomy = tax.csv\nsignal_map = map.csv\n");

  ExperimentConfig cfg = load_config((dir / "run.cfg").string());
  EXPECT_EQ(cfg.taxonomy, (dir / "tax.csv").string());
  EXPECT_EQ(cfg.signal_map, (dir / "map.csv").string());
  EXPECT_EQ(cfg.dataset, "synthetic");

  write_text_file((dir / "other.csv").string(), "Driver,a\n0,1\n");
  setenv("DRIVESEC_DATASET", (dir / "other.csv").string().c_str(), 1);
  ExperimentConfig overridden = load_config((dir / "run.cfg").string());
  unsetenv("DRIVESEC_DATASET");
  EXPECT_EQ(overridden.dataset, (dir / "other.csv").string());

  fs::remove_all(dir);
}

TEST(PrepStage, BuildsTheWorld) {
  ExperimentConfig cfg = tiny_cfg();
  cfg.synthetic_seconds = 400;
  cfg.train_frac = 0.85;
  cfg.val_frac = 0.05;
  cfg.test_frac = 0.10;
  ExperimentWorld world;
  ReportBundle rb = run_experiment(cfg, &world, RunScope::PrepOnly);

  ASSERT_TRUE(rb.prep.ran);
  ASSERT_TRUE(rb.prep.ok) << rb.prep.error;
  EXPECT_FALSE(rb.baseline.ran);
  EXPECT_FALSE(rb.gb1.ran);

  EXPECT_EQ(rb.drivers, 2);
  EXPECT_EQ(rb.rows_total, 800);
  EXPECT_EQ(rb.feature_names.size(), 46u);
  EXPECT_EQ(rb.dropped_features.size(), 8u);

  EXPECT_EQ(world.mask.modifiable.size(), 22u);
  EXPECT_EQ(world.stats.min.size(), 46u);
  // 340 train rows per driver -> 41 windows each.
  EXPECT_EQ(world.train_ws.size(), 82u);
  ASSERT_EQ(world.test_batches.size(), 2u);
  EXPECT_EQ(world.test_batches[0].size(), 1u);  // 40 test rows -> 4 windows
  ASSERT_EQ(world.test_raw_rows.size(), 2u);
  EXPECT_EQ(world.test_raw_rows[0].size(), 40u);
}

TEST(PrepStage, FailureIsRecordedNotThrown) {
  ExperimentConfig cfg = tiny_cfg();
  cfg.taxonomy = temp_file("drivesec_bad_tax.csv", "NotARealSignal,modifiable\n");
  ReportBundle rb = run_experiment(cfg, nullptr, RunScope::PrepOnly);
  EXPECT_TRUE(rb.prep.ran);
  EXPECT_FALSE(rb.prep.ok);
  EXPECT_NE(rb.prep.error.find("taxonomy"), std::string::npos);
  EXPECT_FALSE(rb.baseline.ran);
  std::remove(cfg.taxonomy.c_str());
}

TEST(Experiment, TinyFullRunProducesCoherentBundle) {
  ExperimentConfig cfg = tiny_cfg();
  ExperimentWorld world;
  ReportBundle rb = run_experiment(cfg, &world, RunScope::Full);

  ASSERT_TRUE(rb.prep.ok) << rb.prep.error;
  ASSERT_TRUE(rb.baseline.ok) << rb.baseline.error;
  ASSERT_TRUE(rb.gb1.ok) << rb.gb1.error;
  ASSERT_TRUE(rb.gb2.ok) << rb.gb2.error;
  ASSERT_TRUE(rb.bb1.ok) << rb.bb1.error;
  ASSERT_TRUE(rb.bb2.ok) << rb.bb2.error;
  ASSERT_TRUE(rb.deploy.ok) << rb.deploy.error;

  EXPECT_EQ(rb.member_names.size(), 3u);
  EXPECT_EQ(rb.histories[0].size(), 2u);  // one stat per epoch
  EXPECT_GE(rb.ensemble_acc, 0.9);        // two synthetic drivers separate easily
  EXPECT_GE(rb.ensemble_f1, 0.9);

  ASSERT_EQ(rb.gb1_grid.size(), 2u);
  ASSERT_EQ(rb.gb1_grid[0].size(), 2u);
  EXPECT_EQ(rb.gb2_rows.size(), 2u);
  EXPECT_EQ(rb.bb1_sweep.size(), 9u);
  EXPECT_EQ(rb.bb1_sweep[0].first, 0.1);
  EXPECT_EQ(rb.bb1_sweep[8].first, 0.9);
  EXPECT_EQ(rb.bb2_rows.size(), 2u);

  ASSERT_EQ(rb.campaigns.size(), 5u);
  for (const AttackOutcome& o : rb.campaigns) {
    EXPECT_GT(o.attacker_frames, 0) << scenario_name(o.scenario);
    EXPECT_EQ(o.non_modifiable_attacker_frames, 0) << scenario_name(o.scenario);
    EXPECT_GT(o.sent, 0);
  }

  // Emit and check the file set.
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "drivesec_report_full";
  fs::remove_all(dir);
  std::vector<std::string> written = emit_reports(rb, dir.string());
  std::set<std::string> names;
  for (const std::string& p : written) names.insert(fs::path(p).filename().string());
  for (const char* want :
       {"summary.txt", "baseline_metrics.csv", "train_history_lstm_fcn.csv",
        "train_history_lstm.csv", "train_history_rnn_gru.csv", "gb1_asr_grid.csv",
        "gb2_asr.csv", "bb1_sweep.csv", "bb2_convergence.csv",
        "attack_campaigns.csv", "steal_times.csv"})
    EXPECT_TRUE(names.count(want)) << want;
  std::string summary = read_text_file((dir / "summary.txt").string());
  EXPECT_NE(summary.find("stage.prep=ok"), std::string::npos);
  EXPECT_NE(summary.find("stage.deploy=ok"), std::string::npos);
  EXPECT_NE(summary.find("drivers=2"), std::string::npos);
  fs::remove_all(dir);
}

TEST(Determinism, SameConfigSameSeedSameBytes) {
  ExperimentConfig cfg = tiny_cfg();
  cfg.synthetic_seconds = 400;
  cfg.train_frac = 0.85;
  cfg.val_frac = 0.05;
  cfg.test_frac = 0.10;
  cfg.scenarios = {Scenario::GB1, Scenario::BB2};

  namespace fs = std::filesystem;
  fs::path d1 = fs::temp_directory_path() / "drivesec_det_a";
  fs::path d2 = fs::temp_directory_path() / "drivesec_det_b";
  fs::remove_all(d1);
  fs::remove_all(d2);

  std::vector<std::string> w1 = emit_reports(run_experiment(cfg), d1.string());
  std::vector<std::string> w2 = emit_reports(run_experiment(cfg), d2.string());
  ASSERT_EQ(w1.size(), w2.size());
  ASSERT_GT(w1.size(), 3u);

  for (size_t i = 0; i < w1.size(); ++i) {
    ASSERT_EQ(fs::path(w1[i]).filename(), fs::path(w2[i]).filename());
    std::string a = read_text_file(w1[i]);
    std::string b = read_text_file(w2[i]);
    if (fs::path(w1[i]).filename() == "summary.txt") {
      EXPECT_NE(a.find("timestamp="), std::string::npos);
      a = without_timestamp(a);
      b = without_timestamp(b);
    }
    EXPECT_EQ(a, b) << w1[i];
  }
  fs::remove_all(d1);
  fs::remove_all(d2);
}

TEST(EmitReports, FormatsAndBb2StealTimeUsesMeanConvergence) {
  ReportBundle rb;
  rb.drivers = 3;
  rb.baseline.ran = rb.baseline.ok = true;
  rb.member_names = {"lstm_fcn", "lstm", "rnn_gru"};
  rb.histories = {{EpochStat{1, 0.5, 0.8}}, {}, {}};
  rb.member_acc = {0.9, 0.8, 0.7};
  rb.member_f1 = {0.9, 0.8, 0.7};
  rb.ensemble_acc = 0.95;
  rb.ensemble_f1 = 0.94;
  rb.deploy.ran = rb.deploy.ok = true;
  AttackOutcome bb2;
  bb2.scenario = Scenario::BB2;
  bb2.timing.training_minutes = 10.0;  // this campaign's own charge
  AttackOutcome gb1;
  gb1.scenario = Scenario::GB1;
  rb.campaigns = {bb2, gb1};
  rb.bb2.ran = rb.bb2.ok = true;
  rb.bb2_mean_convergence = 30.0;

  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "drivesec_emit_fmt";
  fs::remove_all(dir);

  std::vector<std::string> csv_only = emit_reports(rb, dir.string(), {"csv"});
  std::set<std::string> names;
  for (const std::string& p : csv_only) names.insert(fs::path(p).filename().string());
  EXPECT_TRUE(names.count("baseline_metrics.csv"));
  EXPECT_TRUE(names.count("attack_campaigns.csv"));
  EXPECT_TRUE(names.count("steal_times.csv"));
  EXPECT_FALSE(names.count("summary.txt"));

  // The fleet-level steal-time table prices BB2 training at the mean
  // convergence episode (30 episodes x 40 s = 20 min, 22 total), while the
  // campaign log keeps what this one campaign actually paid.
  std::string steal = read_text_file((dir / "steal_times.csv").string());
  EXPECT_NE(steal.find("bb2,2.000,0.000,20.000,22.000"), std::string::npos);
  std::string camp = read_text_file((dir / "attack_campaigns.csv").string());
  EXPECT_NE(camp.find("10.000"), std::string::npos);

  std::vector<std::string> txt_only = emit_reports(rb, dir.string(), {"txt"});
  ASSERT_EQ(txt_only.size(), 1u);
  std::string summary = read_text_file(txt_only[0]);
  EXPECT_NE(summary.find("format_version=1"), std::string::npos);
  EXPECT_NE(summary.find("baseline.ensemble.accuracy=0.950000"), std::string::npos);
  EXPECT_NE(summary.find("stage.gb1=skipped"), std::string::npos);

  EXPECT_THROW(emit_reports(rb, dir.string(), {"json"}), Error);
  fs::remove_all(dir);
}
