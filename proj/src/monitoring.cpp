#include "bhealth/monitoring.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "bhealth/errors.hpp"
#include "bhealth/report.hpp"

namespace bhealth {

void StrategyConfig::validate() const {
  if (!(k >= 0.0) || !std::isfinite(k)) throw ValidationError("strategy: k must be a non-negative number");
  if (!(n_min >= 1.0)) throw ValidationError("strategy: n_min must be >= 1");
  if (!(soh_eol > 0.0 && soh_eol < 1.0)) throw ValidationError("strategy: soh_eol must lie in (0, 1)");
  if (epochs < 0) throw ValidationError("strategy: epochs must be >= 0");
  if (max_iterations < 1) throw ValidationError("strategy: max_iterations must be >= 1");
}

std::string to_string(Decision d) { return d == Decision::operate ? "operate" : "stop"; }

std::string to_string(StopReason r) {
  switch (r) {
    case StopReason::rul_threshold: return "rul_threshold";
    case StopReason::soh_threshold: return "soh_threshold";
    case StopReason::data_exhausted: return "data_exhausted";
    case StopReason::iteration_cap: return "iteration_cap";
  }
  return "unknown";
}

namespace {

// Featurized diagnostics of one cell, ascending cycle.
struct CellView {
  const CellHistory* cell = nullptr;
  std::vector<Measurement> points;
};

CellView make_view(const CellHistory& cell, const std::vector<LabeledSample>& rows) {
  if (cell.diagnostics.size() < 2)
    throw ValidationError("monitoring: cell " + cell.cell_id + " needs at least 2 diagnostics");
  std::map<int, std::size_t> index_of;
  for (std::size_t i = 0; i < cell.diagnostics.size(); ++i) index_of[cell.diagnostics[i].cycle_number] = i;
  CellView view{&cell, {}};
  for (const auto& r : rows) {
    if (r.cell_id != cell.cell_id) continue;
    const auto it = index_of.find(r.cycle_number);
    if (it == index_of.end()) continue;
    view.points.push_back({it->second, r.cycle_number, r.features});
  }
  std::sort(view.points.begin(), view.points.end(),
            [](const Measurement& a, const Measurement& b) { return a.cycle < b.cycle; });
  if (view.points.empty()) throw FeatureError("monitoring: no usable diagnostic for cell " + cell.cell_id);
  return view;
}

const Measurement& snap(const CellView& view, double cycle) {
  const auto& pts = view.points;
  auto it = std::lower_bound(pts.begin(), pts.end(), cycle,
                             [](const Measurement& m, double c) { return m.cycle < c; });
  if (it == pts.begin()) return *it;
  if (it == pts.end()) return pts.back();
  const auto prev = std::prev(it);
  // ties toward the earlier diagnostic
  return (it->cycle - cycle < cycle - prev->cycle) ? *it : *prev;
}

MonitoringTrace run(const CellView& view, const RulEstimator& rul, const SohEstimator& soh,
                    const StrategyConfig& cfg) {
  cfg.validate();
  MonitoringTrace trace;
  trace.cell_id = view.cell->cell_id;
  trace.k = cfg.k;
  const double last = view.points.back().cycle;
  double position = view.points.front().cycle;
  for (int step = 0;; ++step) {
    if (step >= cfg.max_iterations) {
      trace.reason = StopReason::iteration_cap;
      trace.stop_cycle = std::min(position, last);
      break;
    }
    if (position > last) {
      trace.reason = StopReason::data_exhausted;
      trace.stop_cycle = last;
      break;
    }
    const Measurement& m = snap(view, position);
    const RulEstimate est = rul(m);
    MonitoringEvent ev;
    ev.step = step;
    ev.requested_cycle = position;
    ev.measured_cycle = m.cycle;
    ev.rul_mean = est.mean;
    ev.rul_sigma = est.sigma;
    ev.rul_cons = est.mean - cfg.k * est.sigma;
    ev.soh_est = soh(m);
    if (!std::isfinite(ev.rul_cons) || !std::isfinite(ev.soh_est))
      throw NumericalError("monitoring: non-finite estimate for cell " + trace.cell_id);
    const bool rul_stop = ev.rul_cons <= cfg.n_min;
    const bool soh_stop = ev.soh_est <= cfg.soh_eol;
    ev.decision = (rul_stop || soh_stop) ? Decision::stop : Decision::operate;
    trace.events.push_back(ev);
    if (ev.decision == Decision::stop) {
      trace.reason = rul_stop ? StopReason::rul_threshold : StopReason::soh_threshold;
      trace.stop_cycle = position;
      break;
    }
    position += std::max(std::round(ev.rul_cons), 1.0);
  }
  return trace;
}

RulEstimator gprn_estimator(const GPRnModel& gprn) {
  return [&gprn](const Measurement& m) {
    const auto p = predict_mixture(gprn, Eigen::VectorXd(m.features.as_array()));
    return RulEstimate{p.mean, p.stddev()};
  };
}

SohEstimator soh_estimator(const FittedRegressor& model) {
  // regressors are trained on percent
  return [&model](const Measurement& m) { return model.predict(Eigen::VectorXd(m.features.as_array())) / 100.0; };
}

}  // namespace

MonitoringTrace simulate(const CellHistory& cell, const RulEstimator& rul, const SohEstimator& soh,
                         const StrategyConfig& cfg, const IcaConfig& ica) {
  return run(make_view(cell, featurize_cell(cell, ica)), rul, soh, cfg);
}

MonitoringTrace simulate(const CellHistory& cell, const GPRnModel& gprn, const FittedRegressor& soh_model,
                         const StrategyConfig& cfg, const IcaConfig& ica) {
  return simulate(cell, gprn_estimator(gprn), soh_estimator(soh_model), cfg, ica);
}

KPIReport compute_kpis(const MonitoringTrace& trace, const CellHistory& cell, double soh_eol) {
  if (!(cell.n_eol > 0.0)) throw ValidationError("compute_kpis: cell " + cell.cell_id + " has no EOL");
  if (trace.events.empty()) throw ValidationError("compute_kpis: empty trace for cell " + cell.cell_id);
  KPIReport k;
  k.utilization = trace.stop_cycle / cell.n_eol;
  k.steps = static_cast<int>(trace.events.size());
  k.overcycled = trace.stop_cycle > cell.n_eol;
  k.delta_n_eol = cell.n_eol - trace.stop_cycle;
  k.delta_soh_eol = interpolate_soh(cell, trace.stop_cycle) - soh_eol;
  return k;
}

namespace {

KpiSummary summarize(const std::string& cell_id, const std::vector<const KPIReport*>& kpis) {
  KpiSummary s;
  s.cell_id = cell_id;
  s.runs = static_cast<int>(kpis.size());
  if (kpis.empty()) return s;
  for (const KPIReport* k : kpis) {
    s.utilization += k->utilization;
    s.steps += k->steps;
    s.p_over += k->overcycled ? 1.0 : 0.0;
    s.delta_n_eol += k->delta_n_eol;
    s.delta_soh_eol += k->delta_soh_eol;
  }
  const double n = static_cast<double>(kpis.size());
  s.utilization /= n;
  s.steps /= n;
  s.p_over /= n;
  s.delta_n_eol /= n;
  s.delta_soh_eol /= n;
  return s;
}

std::vector<LabeledSample> rows_of(const std::vector<LabeledSample>& rows, const std::vector<std::string>& cells) {
  std::vector<LabeledSample> out;
  for (const auto& r : rows)
    if (std::find(cells.begin(), cells.end(), r.cell_id) != cells.end()) out.push_back(r);
  return out;
}

}  // namespace

SweepResult sweep(const std::vector<CellHistory>& fleet, const std::vector<double>& k_values,
                  const std::vector<int>& epoch_values, const StrategyConfig& base, const RegressorSpec& soh_spec,
                  const IcaConfig& ica, const std::vector<SplitPlan>& plans_in) {
  if (k_values.empty()) throw ValidationError("sweep: no k values");
  if (epoch_values.empty()) throw ValidationError("sweep: no epoch budgets");
  base.validate();
  for (double k : k_values) {
    StrategyConfig c = base;
    c.k = k;
    c.validate();
  }
  for (int e : epoch_values)
    if (e < 0) throw ValidationError("sweep: epoch budgets must be >= 0");
  soh_spec.validate();

  const auto plans = plans_in.empty() ? enumerate_splits(fleet_cell_ids(fleet)) : plans_in;
  const auto all_rows = featurize_fleet(fleet, ica);
  const auto soh_rows = select_rows(all_rows, fleet, Target::soh);
  const auto rul_rows = select_rows(all_rows, fleet, Target::rul);
  std::map<std::string, const CellHistory*> cell_by_id;
  std::map<std::string, CellView> views;
  for (const auto& c : fleet) {
    cell_by_id[c.cell_id] = &c;
    views.emplace(c.cell_id, make_view(c, all_rows));
  }

  SweepResult result;
  for (const auto& plan : plans) {
    const auto soh_model = fit_regressor(soh_spec, make_training_set(rows_of(soh_rows, plan.train_cells), Target::soh));
    const auto rul_train = group_by_cell(make_training_set(rows_of(rul_rows, plan.train_cells), Target::rul));
    for (int epochs : epoch_values) {
      const GPRnModel gprn = train_gprn(rul_train, epochs);
      for (double k : k_values) {
        StrategyConfig cfg = base;
        cfg.k = k;
        cfg.epochs = epochs;
        for (const auto& id : plan.test_cells) {
          SweepRun r;
          r.split_id = plan.id;
          r.epochs = epochs;
          r.k = k;
          r.trace = run(views.at(id), gprn_estimator(gprn), soh_estimator(*soh_model), cfg);
          r.kpi = compute_kpis(r.trace, *cell_by_id.at(id), cfg.soh_eol);
          result.runs.push_back(std::move(r));
        }
      }
    }
  }

  for (int epochs : epoch_values) {
    for (double k : k_values) {
      SweepResult::Entry entry;
      entry.epochs = epochs;
      entry.k = k;
      for (const auto& c : fleet) {
        std::vector<const KPIReport*> kpis;
        for (const auto& r : result.runs)
          if (r.epochs == epochs && r.k == k && r.trace.cell_id == c.cell_id) kpis.push_back(&r.kpi);
        if (!kpis.empty()) entry.per_cell.push_back(summarize(c.cell_id, kpis));
      }
      KpiSummary f;
      for (const auto& s : entry.per_cell) {
        f.utilization += s.utilization;
        f.steps += s.steps;
        f.p_over += s.p_over;
        f.delta_n_eol += s.delta_n_eol;
        f.delta_soh_eol += s.delta_soh_eol;
        f.runs += s.runs;
      }
      if (!entry.per_cell.empty()) {
        const double n = static_cast<double>(entry.per_cell.size());
        f.utilization /= n;
        f.steps /= n;
        f.p_over /= n;
        f.delta_n_eol /= n;
        f.delta_soh_eol /= n;
      }
      entry.fleet = f;
      result.entries.push_back(std::move(entry));
    }
  }
  return result;
}

SweepResult sweep_k(const std::vector<CellHistory>& fleet, const std::vector<double>& k_values,
                    const StrategyConfig& base, const RegressorSpec& soh_spec, const IcaConfig& ica) {
  return sweep(fleet, k_values, {base.epochs}, base, soh_spec, ica);
}

void write_trace_csv(const MonitoringTrace& trace, const std::filesystem::path& file) {
  CsvWriter csv(file, {"cell_id", "k", "step", "requested_cycle", "measured_cycle", "rul_mean", "rul_sigma",
                       "rul_cons", "soh_est", "decision", "stop_reason", "stop_cycle"});
  for (const auto& e : trace.events) {
    const bool last = &e == &trace.events.back();
    csv.cell(trace.cell_id).cell(trace.k).cell(e.step).cell(e.requested_cycle).cell(e.measured_cycle)
        .cell(e.rul_mean).cell(e.rul_sigma).cell(e.rul_cons).cell(e.soh_est).cell(to_string(e.decision))
        .cell(last ? to_string(trace.reason) : std::string()).cell(last ? format_number(trace.stop_cycle) : "");
    csv.end_row();
  }
  csv.close();
}

void write_kpi_csv(const SweepResult::Entry& entry, const std::filesystem::path& file) {
  CsvWriter csv(file, {"cell_id", "epochs", "k", "U", "M", "P_over", "dN_eol", "dSoH_eol", "runs"});
  auto row = [&](const KpiSummary& s, const std::string& id) {
    csv.cell(id).cell(entry.epochs).cell(entry.k).cell(s.utilization).cell(s.steps).cell(s.p_over)
        .cell(s.delta_n_eol).cell(s.delta_soh_eol).cell(s.runs);
    csv.end_row();
  };
  for (const auto& s : entry.per_cell) row(s, s.cell_id);
  row(entry.fleet, "fleet");
  csv.close();
}

void write_sweep_csv(const SweepResult& result, const std::filesystem::path& file, bool with_epochs) {
  std::vector<std::string> header{"k", "U", "M", "P_over", "dN_eol", "dSoH_eol"};
  if (with_epochs) header.insert(header.begin(), "epochs");
  CsvWriter csv(file, header);
  for (const auto& e : result.entries) {
    if (with_epochs) csv.cell(e.epochs);
    csv.cell(e.k).cell(e.fleet.utilization).cell(e.fleet.steps).cell(e.fleet.p_over).cell(e.fleet.delta_n_eol)
        .cell(e.fleet.delta_soh_eol);
    csv.end_row();
  }
  csv.close();
}

}  // namespace bhealth
