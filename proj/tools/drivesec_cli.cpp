// drivesec: behavior-based driver authentication testbed over a simulated
// CAN bus, plus the replay/generative attack suite against it.

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "drivesec/experiment.hpp"

namespace ds = drivesec;

namespace {

struct CliOpts {
  std::string config;
  std::string out = "out";
  std::string dataset;  // override: path or "synthetic"
  long seed = -1;
  bool no_safety = false;
};

ds::ExperimentConfig load_with_overrides(const CliOpts& o) {
  ds::ExperimentConfig cfg = ds::load_config(o.config);
  if (!o.dataset.empty()) {
    cfg.dataset = o.dataset;
    ds::validate_config(cfg);
  }
  if (o.seed >= 0) cfg.seed = static_cast<std::uint64_t>(o.seed);
  if (o.no_safety) cfg.enforce_safety = false;
  return cfg;
}

// 0 = success, 1 = config error, 2 = stage failure.
constexpr int kOk = 0, kConfigError = 1, kStageError = 2;

int report_stages(const ds::ReportBundle& rb) {
  struct Named {
    const char* name;
    const ds::StageResult* st;
  };
  Named stages[] = {{"prep", &rb.prep},     {"baseline", &rb.baseline},
                    {"gb1", &rb.gb1},       {"gb2", &rb.gb2},
                    {"bb1", &rb.bb1},       {"bb2", &rb.bb2},
                    {"deploy", &rb.deploy}};
  int rc = kOk;
  for (const Named& s : stages) {
    if (!s.st->ran) continue;
    if (s.st->ok) {
      std::printf("stage %-8s ok\n", s.name);
    } else {
      std::printf("stage %-8s FAILED: %s\n", s.name, s.st->error.c_str());
      rc = kStageError;
    }
  }
  return rc;
}

int emit_and_report(const ds::ReportBundle& rb, const std::string& out) {
  for (const std::string& f : ds::emit_reports(rb, out))
    std::printf("wrote %s\n", f.c_str());
  return report_stages(rb);
}

int cmd_ingest(const CliOpts& o, const ds::ExperimentConfig& cfg) {
  ds::RawDataset raw =
      cfg.dataset == "synthetic"
          ? ds::synth_dataset(cfg.synthetic_drivers, cfg.synthetic_seconds, cfg.seed)
          : ds::load_dataset(cfg.dataset,
                             ds::Schema{cfg.driver_column, cfg.time_column, {}});
  ds::Dataset filtered = ds::filter_constant_features(raw);
  auto [norm, stats] = ds::normalize(filtered);
  std::filesystem::create_directories(o.out);

  ds::RawDataset flat;
  flat.feature_names = norm.feature_names;
  flat.rows = norm.rows;
  std::string path = (std::filesystem::path(o.out) / "dataset_normalized.csv").string();
  ds::save_dataset_csv(flat, path, cfg.driver_column);
  std::printf("wrote %s\n", path.c_str());

  std::string feats;
  for (const std::string& f : norm.feature_names) feats += f + "\n";
  std::string fpath = (std::filesystem::path(o.out) / "features.txt").string();
  ds::write_text_file(fpath, feats);
  std::printf("wrote %s\n", fpath.c_str());
  std::printf("drivers=%d features=%zu rows=%zu dropped=%zu\n",
              norm.num_drivers(), norm.feature_names.size(), norm.rows.size(),
              norm.dropped_features.size());
  return kOk;
}

int cmd_train(const CliOpts& o, const ds::ExperimentConfig& cfg) {
  ds::ExperimentWorld w;
  ds::ReportBundle rb = ds::run_experiment(cfg, &w, ds::RunScope::BaselineOnly);
  int rc = report_stages(rb);
  if (rc != kOk) return rc;
  std::string dir = (std::filesystem::path(o.out) / "ensemble").string();
  ds::save_ensemble(w.ensemble, dir);
  std::printf("wrote %s\n", dir.c_str());
  for (size_t k = 0; k < rb.member_names.size(); ++k) {
    std::printf("%s val-best accuracy on test: %.4f\n", rb.member_names[k].c_str(),
                rb.member_acc[k]);
  }
  std::printf("ensemble accuracy on test: %.4f\n", rb.ensemble_acc);
  ds::emit_reports(rb, o.out);
  return kOk;
}

int cmd_eval_baseline(const CliOpts& o, const ds::ExperimentConfig& cfg) {
  ds::ReportBundle rb = ds::run_experiment(cfg, nullptr, ds::RunScope::BaselineOnly);
  int rc = emit_and_report(rb, o.out);
  if (rc != kOk) return rc;
  for (size_t k = 0; k < rb.member_names.size(); ++k)
    std::printf("%-10s accuracy=%.4f macro_f1=%.4f\n", rb.member_names[k].c_str(),
                rb.member_acc[k], rb.member_f1[k]);
  std::printf("%-10s accuracy=%.4f macro_f1=%.4f\n", "ensemble", rb.ensemble_acc,
              rb.ensemble_f1);
  return kOk;
}

int cmd_attack(const CliOpts& o, const ds::ExperimentConfig& cfg) {
  ds::ReportBundle rb = ds::run_experiment(cfg);
  int rc = emit_and_report(rb, o.out);
  if (rc != kOk) return rc;
  for (const ds::AttackOutcome& oc : rb.campaigns)
    std::printf("%s attacker=%d victim=%d asr=%.4f total=%.1f min\n",
                ds::scenario_name(oc.scenario), oc.attacker_id, oc.victim_id,
                oc.asr, oc.timing.total_minutes());
  return kOk;
}

int cmd_simulate_bus(const CliOpts& o, const ds::ExperimentConfig& cfg) {
  ds::RawDataset raw =
      cfg.dataset == "synthetic"
          ? ds::synth_dataset(cfg.synthetic_drivers, cfg.synthetic_seconds, cfg.seed)
          : ds::load_dataset(cfg.dataset,
                             ds::Schema{cfg.driver_column, cfg.time_column, {}});
  ds::Dataset filtered = ds::filter_constant_features(raw);
  ds::SafetyTaxonomy tax = ds::load_taxonomy(cfg.taxonomy);
  ds::SafetyMask mask = ds::make_mask(tax, filtered.feature_names);
  ds::SignalMap map = ds::load_signal_map(cfg.signal_map);

  std::vector<ds::Sample> rows;
  for (const ds::DataRow& r : filtered.rows)
    if (r.driver_id == 0) rows.push_back(r.values);
  long seconds = std::min<long>(static_cast<long>(rows.size()), 120);
  ds::require(seconds > 0, "driver 0 has no rows to replay");
  rows.resize(static_cast<size_t>(seconds));

  ds::CanBus bus(filtered.feature_names, map);
  bus.add_replay_all("driver0", rows);
  ds::AttackerTap& tap = bus.attach_tap(&mask, !o.no_safety);

  long exact = 0;
  for (long s = 0; s < seconds; ++s) {
    ds::Sample got = ds::sample_state(bus, s);
    if (got == rows[static_cast<size_t>(s)]) ++exact;
  }
  std::filesystem::create_directories(o.out);
  std::string spath = (std::filesystem::path(o.out) / "sniff_log.csv").string();
  ds::write_text_file(spath, ds::sniff_log_csv(tap));
  std::printf("wrote %s\n", spath.c_str());
  std::printf("replayed %ld s, %zu frames, round-trip exact for %ld/%ld samples\n",
              seconds, tap.sniff_log.size(), exact, seconds);
  return exact == seconds ? kOk : kStageError;
}

int cmd_report(const CliOpts& o, const ds::ExperimentConfig& cfg) {
  ds::ReportBundle rb = ds::run_experiment(cfg);
  return emit_and_report(rb, o.out);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"drivesec: driver authentication testbed and attack suite"};
  app.require_subcommand(1);

  CliOpts opts;
  std::string attack_scenario;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opts.config, "experiment config file")->required();
    sub->add_option("--seed", opts.seed, "root seed (overrides the config)");
    sub->add_option("--out", opts.out, "output directory (default: out)");
    sub->add_option("--dataset", opts.dataset,
                    "dataset CSV path or 'synthetic' (overrides the config)");
    sub->add_flag("--no-safety-enforcement", opts.no_safety,
                  "let the attacker tap inject any signal class");
  };

  CLI::App* ingest = app.add_subcommand("ingest", "load, filter and normalize the dataset");
  CLI::App* train = app.add_subcommand("train", "train the three classifiers and save the ensemble");
  CLI::App* evalb = app.add_subcommand("eval-baseline", "train and score the authenticator");
  CLI::App* attack = app.add_subcommand("attack", "run one attack scenario end to end");
  attack->add_option("scenario", attack_scenario, "wb|gb1|gb2|bb1|bb2")->required();
  CLI::App* bus = app.add_subcommand("simulate-bus", "replay driver 0 over the bus; verify the sample round-trip");
  CLI::App* report = app.add_subcommand("report", "full experiment: baseline, every attack, report files");
  for (CLI::App* sub : {ingest, train, evalb, attack, bus, report}) add_common(sub);

  CLI11_PARSE(app, argc, argv);

  ds::ExperimentConfig cfg;
  try {
    cfg = load_with_overrides(opts);
    if (attack->parsed()) cfg.scenarios = {ds::parse_scenario(attack_scenario)};
  } catch (const std::exception& ex) {
    std::fprintf(stderr, "config error: %s\n", ex.what());
    return kConfigError;
  }

  try {
    if (ingest->parsed()) return cmd_ingest(opts, cfg);
    if (train->parsed()) return cmd_train(opts, cfg);
    if (evalb->parsed()) return cmd_eval_baseline(opts, cfg);
    if (attack->parsed()) return cmd_attack(opts, cfg);
    if (bus->parsed()) return cmd_simulate_bus(opts, cfg);
    if (report->parsed()) return cmd_report(opts, cfg);
  } catch (const std::exception& ex) {
    std::fprintf(stderr, "error: %s\n", ex.what());
    return kStageError;
  }
  return kConfigError;
}
