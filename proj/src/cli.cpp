#include "bhealth/cli.hpp"

#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "bhealth/errors.hpp"
#include "bhealth/eval.hpp"
#include "bhealth/ica.hpp"
#include "bhealth/monitoring.hpp"
#include "bhealth/report.hpp"
#include "bhealth/run_config.hpp"
#include "bhealth/selftest.hpp"

namespace bhealth {

namespace fs = std::filesystem;

namespace {

// Options shared by the dataset-driven subcommands; flags win over the
// config file, the environment wins over the file but not over flags.
struct Common {
  std::string config_file;
  std::string dataset;
  std::string out;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* sub, Common& c, bool needs_dataset = true) {
  sub->add_option("--config", c.config_file, "JSON run configuration")->check(CLI::ExistingFile);
  if (needs_dataset) sub->add_option("--dataset", c.dataset, "Canonical dataset directory");
  sub->add_option("--out", c.out, "Output directory");
  sub->add_option("--seed", c.seed, "Seed for every stochastic component");
}

RunConfig resolve(const Common& c) {
  RunConfig cfg = c.config_file.empty() ? RunConfig::defaults() : load_run_config(c.config_file);
  apply_environment(cfg);
  if (!c.dataset.empty()) cfg.dataset_dir = c.dataset;
  if (!c.out.empty()) cfg.output_dir = c.out;
  if (c.seed) {
    cfg.seed = *c.seed;
    for (auto& r : cfg.regressors) r.seed = *c.seed;
  }
  cfg.validate();
  return cfg;
}

std::vector<CellHistory> load(const RunConfig& cfg) {
  if (cfg.dataset_dir.empty())
    throw ValidationError(std::string("no dataset given (use --dataset, the config file, or ") + kDatasetEnvVar + ")");
  auto fleet = load_fleet(cfg.dataset_dir);
  for (auto& cell : fleet) cell = label_cell(std::move(cell), cfg.strategy.soh_eol);
  return fleet;
}

std::string join_args(const std::vector<std::string>& args) {
  std::string s = "bhealth";
  for (const auto& a : args) s += " " + a;
  return s;
}

// --- features --------------------------------------------------------------

int cmd_features(const RunConfig& cfg, int curve_stride, const std::vector<std::string>& args, std::ostream& out) {
  const auto fleet = load(cfg);
  const auto rows = featurize_fleet(fleet, cfg.ica);
  const fs::path dir = cfg.output_dir;

  CsvWriter feats(dir / "features.csv", {"cell_id", "cycle_number", "f1", "f2", "f3", "f4", "f5", "soh", "rul"});
  for (const auto& r : rows) {
    feats.cell(r.cell_id).cell(r.cycle_number);
    for (int i = 0; i < kNumFeatures; ++i) feats.cell(r.features.as_array()[i]);
    feats.cell(r.soh).cell(r.rul);
    feats.end_row();
  }
  feats.close();

  // correlations on the regression datasets of each target
  CsvWriter corr(dir / "correlations.csv", {"target", "f1", "f2", "f3", "f4", "f5", "n_rows"});
  out << "target        F1        F2        F3        F4        F5\n";
  for (Target t : {Target::soh, Target::rul}) {
    const auto sel = select_rows(rows, fleet, t);
    std::vector<double> y;
    for (const auto& r : sel) y.push_back(t == Target::soh ? r.soh : r.rul);
    corr.cell(to_string(t));
    out << std::left << std::setw(6) << to_string(t) << std::right;
    for (int i = 0; i < kNumFeatures; ++i) {
      std::vector<double> f;
      for (const auto& r : sel) f.push_back(r.features.as_array()[i]);
      const double rho = spearman(f, y);
      corr.cell(rho);
      out << std::setw(10) << std::fixed << std::setprecision(4) << rho;
    }
    corr.cell(static_cast<long long>(sel.size()));
    corr.end_row();
    out << '\n';
  }
  corr.close();

  // a sample of IC curves for plotting
  const FilterSpec spec = design_lowpass(cfg.ica.filter_order, cfg.ica.cutoff_hz, cfg.ica.sample_rate_hz);
  CsvWriter curves(dir / "ic_curves.csv", {"cell_id", "cycle_number", "soh", "voltage_v", "ic_mah_per_v"});
  for (const auto& cell : fleet) {
    const std::size_t n = cell.diagnostics.size();
    for (std::size_t i = 0; i < n; ++i) {
      if (i % static_cast<std::size_t>(curve_stride) != 0 && i + 1 != n) continue;
      ICCurve c;
      try {
        c = compute_ic_curve(cell.diagnostics[i], spec, cfg.ica.smooth_window);
      } catch (const FeatureError&) {
        continue;
      }
      for (std::size_t k = 0; k < c.voltage_v.size(); ++k) {
        curves.cell(cell.cell_id).cell(cell.diagnostics[i].cycle_number).cell(cell.soh_by_diag[i])
            .cell(c.voltage_v[k]).cell(c.ic_mah_per_v[k]);
        curves.end_row();
      }
    }
  }
  curves.close();

  emit_report({join_args(args), to_json(cfg), cfg.dataset_dir, {feats.path(), corr.path(), curves.path()}}, dir);
  return kExitOk;
}

// --- evaluate --------------------------------------------------------------

int cmd_evaluate(RunConfig cfg, const std::vector<std::string>& models, const std::vector<std::string>& args,
                 std::ostream& out) {
  if (!models.empty()) {
    std::vector<RegressorSpec> keep;
    for (const auto& name : models) {
      const RegressorKind kind = parse_regressor_kind(name);
      bool found = false;
      for (const auto& r : cfg.regressors)
        if (r.kind == kind) {
          keep.push_back(r);
          found = true;
        }
      if (!found) keep.push_back(RegressorSpec::defaults(kind, cfg.seed));
    }
    cfg.regressors = keep;
  }
  if (cfg.regressors.empty()) throw ValidationError("no regressors to evaluate");
  const auto fleet = load(cfg);
  const auto rows = build_regression_dataset(fleet, cfg.target, cfg.ica);
  const auto plans = enumerate_splits(fleet_cell_ids(fleet));

  std::vector<MetricsReport> reports;
  for (const auto& spec : cfg.regressors) reports.push_back(evaluate(spec, rows, cfg.target, plans));

  const fs::path dir = cfg.output_dir;
  const std::string t = to_string(cfg.target);
  write_results_csv(reports, dir / ("results_" + t + ".csv"));
  write_summary_csv(reports, dir / ("summary_" + t + ".csv"));
  write_predictions_csv(reports, dir / ("predictions_" + t + ".csv"));

  out << "model        MAE train   MAE test   max err test   NMAE test   failed  [" << target_units(cfg.target)
      << "]\n";
  for (const auto& r : reports)
    out << std::left << std::setw(11) << r.model << std::right << std::fixed << std::setprecision(4) << std::setw(11)
        << r.mae_train << std::setw(11) << r.mae_test << std::setw(15) << r.max_error_test << std::setw(12)
        << r.nmae_test << std::setw(9) << r.failed_splits << '\n';

  emit_report({join_args(args), to_json(cfg), cfg.dataset_dir,
               {dir / ("results_" + t + ".csv"), dir / ("summary_" + t + ".csv"), dir / ("predictions_" + t + ".csv")}},
              dir);
  int failed = 0;
  for (const auto& r : reports) failed += r.succeeded_splits() == 0 ? 1 : 0;
  return failed ? kExitRuntime : kExitOk;
}

// --- monitor ---------------------------------------------------------------

int cmd_monitor(const RunConfig& cfg, const std::string& cell_id, const std::vector<std::string>& args,
                std::ostream& out) {
  const auto fleet = load(cfg);
  const CellHistory* cell = nullptr;
  std::vector<std::string> train_ids;
  for (const auto& c : fleet) {
    if (c.cell_id == cell_id)
      cell = &c;
    else
      train_ids.push_back(c.cell_id);
  }
  if (!cell) throw ValidationError("unknown cell '" + cell_id + "'");
  if (train_ids.empty()) throw ValidationError("monitor needs at least one other cell for training");

  const auto rows = featurize_fleet(fleet, cfg.ica);
  auto only = [&](Target t) {
    std::vector<LabeledSample> keep;
    for (const auto& r : select_rows(rows, fleet, t))
      if (r.cell_id != cell_id) keep.push_back(r);
    return make_training_set(keep, t);
  };
  const auto soh_model = fit_regressor(cfg.soh_estimator_spec(), only(Target::soh));
  const GPRnModel gprn = train_gprn(group_by_cell(only(Target::rul)), cfg.strategy.epochs);
  const MonitoringTrace trace = simulate(*cell, gprn, *soh_model, cfg.strategy, cfg.ica);
  const KPIReport kpi = compute_kpis(trace, *cell, cfg.strategy.soh_eol);

  const fs::path dir = cfg.output_dir;
  const fs::path trace_file = dir / ("monitor_trace_" + cell_id + ".csv");
  write_trace_csv(trace, trace_file);
  SweepResult::Entry entry;
  entry.epochs = cfg.strategy.epochs;
  entry.k = cfg.strategy.k;
  KpiSummary s{cell_id, kpi.utilization, static_cast<double>(kpi.steps), kpi.overcycled ? 1.0 : 0.0,
               kpi.delta_n_eol, kpi.delta_soh_eol, 1};
  entry.per_cell.push_back(s);
  entry.fleet = s;
  entry.fleet.cell_id.clear();
  const fs::path kpi_file = dir / ("kpi_" + format_number(cfg.strategy.k) + ".csv");
  write_kpi_csv(entry, kpi_file);

  out << "cell " << cell_id << " k=" << cfg.strategy.k << ": stop at " << trace.stop_cycle << " ("
      << to_string(trace.reason) << "), n_eol " << cell->n_eol << ", U " << kpi.utilization << ", M " << kpi.steps
      << ", overcycled " << (kpi.overcycled ? "yes" : "no") << ", dN_eol " << kpi.delta_n_eol << ", dSoH_eol "
      << kpi.delta_soh_eol << '\n';
  emit_report({join_args(args), to_json(cfg), cfg.dataset_dir, {trace_file, kpi_file}}, dir);
  return kExitOk;
}

// --- sweep -----------------------------------------------------------------

int cmd_sweep(const RunConfig& cfg, const std::vector<std::string>& args, std::ostream& out) {
  const auto fleet = load(cfg);
  const fs::path dir = cfg.output_dir;
  std::vector<fs::path> files;

  const SweepResult by_k = sweep(fleet, cfg.k_values, {cfg.strategy.epochs}, cfg.strategy, cfg.soh_estimator_spec(),
                                 cfg.ica);
  files.push_back(dir / "sweep_k.csv");
  write_sweep_csv(by_k, files.back());
  for (const auto& e : by_k.entries) {
    files.push_back(dir / ("kpi_" + format_number(e.k) + ".csv"));
    write_kpi_csv(e, files.back());
  }

  const SweepResult by_epochs =
      sweep(fleet, {cfg.strategy.k}, cfg.epoch_values, cfg.strategy, cfg.soh_estimator_spec(), cfg.ica);
  files.push_back(dir / "sweep_epochs.csv");
  write_sweep_csv(by_epochs, files.back(), true);

  out << "     k         U         M    P_over    dN_eol  dSoH_eol\n";
  for (const auto& e : by_k.entries)
    out << std::fixed << std::setprecision(3) << std::setw(6) << e.k << std::setw(10) << e.fleet.utilization
        << std::setw(10) << e.fleet.steps << std::setw(10) << e.fleet.p_over << std::setw(10) << e.fleet.delta_n_eol
        << std::setw(10) << e.fleet.delta_soh_eol << '\n';
  emit_report({join_args(args), to_json(cfg), cfg.dataset_dir, files}, dir);
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Battery SoH/RUL estimation from incremental-capacity features", "bhealth"};
  app.require_subcommand(1, 1);
  app.fallthrough(false);

  Common features_opts, eval_opts, monitor_opts, sweep_opts;
  int curve_stride = 10;
  auto* features = app.add_subcommand("features", "IC features and their rank correlations");
  add_common(features, features_opts);
  features->add_option("--curve-stride", curve_stride, "Write every n-th IC curve")->check(CLI::PositiveNumber);

  std::string target;
  std::vector<std::string> models;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Cross-cell benchmark over all 2-cell test splits");
  add_common(evaluate_cmd, eval_opts);
  evaluate_cmd->add_option("--target", target, "soh or rul");
  evaluate_cmd->add_option("--models", models, "Subset of regressors (default: all in the config)");

  std::string cell_id;
  std::optional<double> k;
  std::optional<int> epochs;
  auto* monitor = app.add_subcommand("monitor", "Replay the monitoring strategy on one held-out cell");
  add_common(monitor, monitor_opts);
  monitor->add_option("--cell", cell_id, "Cell to monitor")->required();
  monitor->add_option("--k", k, "Margin multiplier");
  monitor->add_option("--epochs", epochs, "GPRn Adam budget");

  std::vector<double> k_values;
  std::vector<int> epoch_values;
  auto* sweep_cmd = app.add_subcommand("sweep", "KPI sweeps over k and the GPRn epoch budget");
  add_common(sweep_cmd, sweep_opts);
  sweep_cmd->add_option("--k-values", k_values, "Margin multipliers");
  sweep_cmd->add_option("--epoch-values", epoch_values, "GPRn Adam budgets");

  int synth_cells = 8;
  std::uint64_t synth_seed = 7;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "Write a synthetic fleet in the canonical format");
  synth->add_option("--cells", synth_cells, "Number of cells")->check(CLI::PositiveNumber);
  synth->add_option("--seed", synth_seed, "Generator seed");
  synth->add_option("--out", synth_out, "Dataset directory")->required();

  SelftestOptions st;
  auto* selftest = app.add_subcommand("selftest", "Oracle and property suite on the synthetic fleet");
  selftest->add_option("--seed", st.seed, "Seed");
  selftest->add_option("--cells", st.cells, "Synthetic cells")->check(CLI::Range(3, 64));
  selftest->add_option("--draws", st.mc_draws, "Monte-Carlo draws per mixture")->check(CLI::Range(1000L, 100000000L));

  std::vector<std::string> argv_store{"bhealth"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : argv_store) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    const bool unknown = !args.empty() && args[0].rfind("-", 0) != 0 && !app.get_subcommand_no_throw(args[0]);
    err << "error: " << (unknown ? "unknown subcommand '" + args[0] + "'" : std::string(e.what())) << "\n\n"
        << app.help();
    return kExitValidation;
  }

  try {
    if (*features) return cmd_features(resolve(features_opts), curve_stride, args, out);
    if (*evaluate_cmd) {
      RunConfig cfg = resolve(eval_opts);
      if (!target.empty()) cfg.target = parse_target(target);
      return cmd_evaluate(cfg, models, args, out);
    }
    if (*monitor) {
      RunConfig cfg = resolve(monitor_opts);
      if (k) cfg.strategy.k = *k;
      if (epochs) cfg.strategy.epochs = *epochs;
      cfg.validate();
      return cmd_monitor(cfg, cell_id, args, out);
    }
    if (*sweep_cmd) {
      RunConfig cfg = resolve(sweep_opts);
      if (!k_values.empty()) cfg.k_values = k_values;
      if (!epoch_values.empty()) cfg.epoch_values = epoch_values;
      cfg.validate();
      return cmd_sweep(cfg, args, out);
    }
    if (*synth) {
      const auto fleet = generate_synthetic_fleet(synth_cells, synth_seed);
      write_fleet(fleet, synth_out);
      for (const auto& c : fleet)
        out << c.cell_id << ": " << c.diagnostics.size() << " diagnostics, n_eol " << format_number(c.n_eol, 6) << '\n';
      return kExitOk;
    }
    if (*selftest) {
      set_warnings_enabled(false);
      const auto results = run_selftest(st);
      set_warnings_enabled(true);
      bool ok = true;
      for (const auto& r : results) {
        out << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << '\n';
        ok = ok && r.passed;
      }
      return ok ? kExitOk : kExitRuntime;
    }
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  err << app.help();
  return kExitValidation;
}

}  // namespace bhealth
