#include "bhealth/data_model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <sstream>

#include "bhealth/errors.hpp"
#include "bhealth/ica.hpp"

namespace fs = std::filesystem;

namespace bhealth {

std::string to_string(Target target) { return target == Target::soh ? "soh" : "rul"; }

Target parse_target(const std::string& text) {
  if (text == "soh" || text == "SoH" || text == "SOH") return Target::soh;
  if (text == "rul" || text == "RUL") return Target::rul;
  throw ValidationError("unknown target '" + text + "' (expected soh or rul)");
}

double target_value(const LabeledSample& row, Target target) {
  return target == Target::soh ? 100.0 * row.soh : row.rul;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos
                                                                     : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

double parse_double(std::string_view text, const std::string& file, std::size_t line) {
  text = trim(text);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size() || !std::isfinite(value))
    throw ParseError(file, line, "not a number: '" + std::string(text) + "'");
  return value;
}

int parse_int(std::string_view text, const std::string& file, std::size_t line) {
  text = trim(text);
  int value = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size())
    throw ParseError(file, line, "not an integer: '" + std::string(text) + "'");
  return value;
}

void expect_header(std::istream& in, const std::string& file, const std::vector<std::string>& columns) {
  std::string header;
  if (!std::getline(in, header)) throw ParseError(file, 1, "missing header row");
  const auto fields = split_fields(trim(header));
  bool ok = fields.size() == columns.size();
  for (std::size_t i = 0; ok && i < fields.size(); ++i) ok = trim(fields[i]) == columns[i];
  if (!ok) throw ParseError(file, 1, "unexpected header '" + header + "'");
}

// Shortest text that parses back to the same double.
std::string format_number(double value) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

const std::vector<std::string> kCellsColumns{"cell_id", "rated_capacity_mah"};
const std::vector<std::string> kDiagColumns{"cycle_number", "time_s",        "voltage_v",
                                            "current_a",    "charge_mah",    "temperature_c"};

std::vector<DiagnosticCycle> load_diagnostics(const fs::path& path, const std::string& cell_id) {
  const std::string file = path.string();
  std::ifstream in(path);
  if (!in) throw DatasetNotFound(file);
  expect_header(in, file, kDiagColumns);

  std::map<int, DiagnosticCycle> by_cycle;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != kDiagColumns.size())
      throw ParseError(file, line_no, "expected 6 fields, got " + std::to_string(fields.size()));
    const int cycle = parse_int(fields[0], file, line_no);
    if (cycle < 0) throw ParseError(file, line_no, "negative cycle number");
    Sample s{parse_double(fields[1], file, line_no), parse_double(fields[2], file, line_no),
             parse_double(fields[3], file, line_no), parse_double(fields[4], file, line_no),
             parse_double(fields[5], file, line_no)};
    auto& diag = by_cycle[cycle];
    if (diag.samples.empty()) {
      diag.cell_id = cell_id;
      diag.cycle_number = cycle;
    } else if (!(s.time_s > diag.samples.back().time_s)) {
      throw ValidationError(file + ":" + std::to_string(line_no) +
                            ": time not strictly increasing within cycle " + std::to_string(cycle));
    }
    diag.samples.push_back(s);
  }

  std::vector<DiagnosticCycle> out;
  out.reserve(by_cycle.size());
  for (auto& [cycle, diag] : by_cycle) {
    diag.end_of_charge_capacity_mah = diag.samples.back().charge_mah;
    if (!(diag.end_of_charge_capacity_mah > 0.0))
      throw ValidationError(file + ": cycle " + std::to_string(cycle) +
                            " has non-positive end-of-charge capacity");
    out.push_back(std::move(diag));
  }
  return out;
}

}  // namespace

std::vector<CellHistory> load_fleet(const fs::path& dataset_dir) {
  if (!fs::is_directory(dataset_dir)) throw DatasetNotFound(dataset_dir.string());
  const fs::path cells_path = dataset_dir / "cells.csv";
  std::ifstream in(cells_path);
  if (!in) throw DatasetNotFound(cells_path.string());
  const std::string file = cells_path.string();
  expect_header(in, file, kCellsColumns);

  std::vector<CellHistory> fleet;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line);
    if (fields.empty() || fields.size() > 2)
      throw ParseError(file, line_no, "expected cell_id,rated_capacity_mah");
    CellHistory cell;
    cell.cell_id = std::string(trim(fields[0]));
    if (cell.cell_id.empty()) throw ParseError(file, line_no, "empty cell_id");
    if (fields.size() == 2 && !trim(fields[1]).empty())
      cell.rated_capacity_mah = parse_double(fields[1], file, line_no);
    for (const auto& other : fleet)
      if (other.cell_id == cell.cell_id) throw ParseError(file, line_no, "duplicate cell_id " + cell.cell_id);
    cell.diagnostics = load_diagnostics(dataset_dir / ("diagnostics_" + cell.cell_id + ".csv"), cell.cell_id);
    fleet.push_back(std::move(cell));
  }
  return fleet;
}

void write_fleet(const std::vector<CellHistory>& fleet, const fs::path& dataset_dir) {
  std::error_code ec;
  fs::create_directories(dataset_dir, ec);
  if (ec) throw IoError("cannot create " + dataset_dir.string() + ": " + ec.message());

  std::ofstream cells(dataset_dir / "cells.csv", std::ios::binary);
  if (!cells) throw IoError("cannot write " + (dataset_dir / "cells.csv").string());
  cells << "cell_id,rated_capacity_mah\n";
  for (const auto& cell : fleet) {
    cells << cell.cell_id << ',' << format_number(cell.rated_capacity_mah) << '\n';

    const fs::path path = dataset_dir / ("diagnostics_" + cell.cell_id + ".csv");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << "cycle_number,time_s,voltage_v,current_a,charge_mah,temperature_c\n";
    std::string row;
    for (const auto& diag : cell.diagnostics) {
      const std::string cycle = std::to_string(diag.cycle_number);
      for (const Sample& s : diag.samples) {
        row = cycle;
        for (double v : {s.time_s, s.voltage_v, s.current_a, s.charge_mah, s.temperature_c}) {
          row += ',';
          row += format_number(v);
        }
        row += '\n';
        out << row;
      }
    }
    if (!out) throw IoError("write failed: " + path.string());
  }
  if (!cells) throw IoError("write failed: cells.csv");
}

// ---------------------------------------------------------------------------
// labels

CellHistory compute_soh_labels(CellHistory history) {
  if (!(history.rated_capacity_mah > 0.0))
    throw ValidationError("cell " + history.cell_id + ": rated capacity must be positive");
  history.soh_by_diag.clear();
  for (const auto& diag : history.diagnostics)
    history.soh_by_diag.push_back(diag.end_of_charge_capacity_mah / history.rated_capacity_mah);
  return history;
}

CellHistory compute_eol_and_rul(CellHistory history, double soh_eol) {
  const auto& diags = history.diagnostics;
  const auto& soh = history.soh_by_diag;
  if (soh.size() != diags.size())
    throw ValidationError("cell " + history.cell_id + ": SoH labels not computed");

  bool found = false;
  for (std::size_t i = 0; i < soh.size() && !found; ++i) {
    if (soh[i] == soh_eol && (i == 0 || soh[i - 1] > soh_eol)) {
      history.n_eol = diags[i].cycle_number;
      found = true;
    } else if (i > 0 && soh[i - 1] > soh_eol && soh[i] < soh_eol) {
      const double c0 = diags[i - 1].cycle_number, c1 = diags[i].cycle_number;
      history.n_eol = c0 + (soh[i - 1] - soh_eol) / (soh[i - 1] - soh[i]) * (c1 - c0);
      found = true;
    }
  }
  if (!found)
    throw EolUndetermined("cell " + history.cell_id + ": SoH never crosses " + std::to_string(soh_eol));

  history.rul_by_diag.clear();
  for (const auto& diag : diags) history.rul_by_diag.push_back(history.n_eol - diag.cycle_number);
  return history;
}

CellHistory label_cell(CellHistory history, double soh_eol) {
  return compute_eol_and_rul(compute_soh_labels(std::move(history)), soh_eol);
}

double interpolate_soh(const CellHistory& history, double cycle) {
  const auto& d = history.diagnostics;
  const auto& soh = history.soh_by_diag;
  if (d.empty() || soh.size() != d.size())
    throw ValidationError("cell " + history.cell_id + ": SoH labels not computed");
  if (cycle <= d.front().cycle_number) return soh.front();
  for (std::size_t i = 1; i < d.size(); ++i) {
    if (cycle <= d[i].cycle_number) {
      const double c0 = d[i - 1].cycle_number, c1 = d[i].cycle_number;
      const double w = (cycle - c0) / (c1 - c0);
      return soh[i - 1] + w * (soh[i] - soh[i - 1]);
    }
  }
  return soh.back();
}

// ---------------------------------------------------------------------------
// regression rows

std::vector<LabeledSample> featurize_cell(const CellHistory& history, const IcaConfig& config) {
  if (history.soh_by_diag.size() != history.diagnostics.size() ||
      history.rul_by_diag.size() != history.diagnostics.size())
    throw ValidationError("cell " + history.cell_id + ": labels not computed");
  std::vector<LabeledSample> rows;
  rows.reserve(history.diagnostics.size());
  for (std::size_t i = 0; i < history.diagnostics.size(); ++i) {
    const auto& diag = history.diagnostics[i];
    try {
      rows.push_back({history.cell_id, diag.cycle_number, featurize_cycle(diag, config),
                      history.soh_by_diag[i], history.rul_by_diag[i]});
    } catch (const FeatureError& e) {
      log_warning(std::string("skipping diagnostic: ") + e.what());
    }
  }
  return rows;
}

std::vector<LabeledSample> featurize_fleet(const std::vector<CellHistory>& fleet, const IcaConfig& config) {
  std::vector<LabeledSample> rows;
  for (const auto& cell : fleet) {
    auto cell_rows = featurize_cell(cell, config);
    rows.insert(rows.end(), std::make_move_iterator(cell_rows.begin()),
                std::make_move_iterator(cell_rows.end()));
  }
  return rows;
}

std::vector<LabeledSample> select_rows(const std::vector<LabeledSample>& rows,
                                       const std::vector<CellHistory>& fleet, Target target) {
  std::map<std::string, double> n_eol;
  for (const auto& cell : fleet) n_eol[cell.cell_id] = cell.n_eol;
  std::vector<LabeledSample> out;
  for (const auto& row : rows) {
    if (target == Target::soh) {
      if (row.soh >= kSohEol) out.push_back(row);
    } else {
      const auto it = n_eol.find(row.cell_id);
      if (it == n_eol.end()) throw ValidationError("row for unknown cell " + row.cell_id);
      if (row.cycle_number <= it->second + kRulHorizonPastEol) out.push_back(row);
    }
  }
  return out;
}

std::vector<LabeledSample> build_regression_dataset(const std::vector<CellHistory>& fleet,
                                                    Target target, const IcaConfig& config) {
  return select_rows(featurize_fleet(fleet, config), fleet, target);
}

TrainingSet make_training_set(const std::vector<LabeledSample>& rows, Target target) {
  TrainingSet data;
  const auto n = static_cast<Eigen::Index>(rows.size());
  data.x.resize(n, kNumFeatures);
  data.y.resize(n);
  data.cell_ids.reserve(rows.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = rows[static_cast<std::size_t>(i)];
    data.x.row(i) = row.features.as_array().transpose();
    data.y[i] = target_value(row, target);
    data.cell_ids.push_back(row.cell_id);
  }
  return data;
}

std::vector<CellDataset> group_by_cell(const TrainingSet& data) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<Eigen::Index>> members;
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    const auto& id = data.cell_ids[static_cast<std::size_t>(i)];
    if (!members.contains(id)) order.push_back(id);
    members[id].push_back(i);
  }
  std::vector<CellDataset> out;
  for (const auto& id : order) {
    const auto& idx = members[id];
    CellDataset cell{id, Eigen::MatrixXd(static_cast<Eigen::Index>(idx.size()), data.x.cols()),
                     Eigen::VectorXd(static_cast<Eigen::Index>(idx.size()))};
    for (std::size_t k = 0; k < idx.size(); ++k) {
      cell.x.row(static_cast<Eigen::Index>(k)) = data.x.row(idx[k]);
      cell.y[static_cast<Eigen::Index>(k)] = data.y[idx[k]];
    }
    out.push_back(std::move(cell));
  }
  return out;
}

// ---------------------------------------------------------------------------
// synthetic fleet

namespace {

constexpr double kCurrentA = 0.74;      // 1C
constexpr double kStartVoltage = 3.4;
constexpr double kCvVoltage = 4.2;
constexpr double kCvDurationS = 900.0;
constexpr double kCvTargetMah = 40.0;
constexpr double kNoiseV = 1e-3;
constexpr double kCellTemperatureC = 40.0;

double quantize(double value, double resolution) { return std::round(value / resolution) * resolution; }

// IC template in arbitrary units: flat background plus two Gaussian plateaus.
// Aging lowers and broadens both peaks and pushes them to higher voltage.
struct IcTemplate {
  double background = 0.25;
  double a1, mu1, w1;  // main plateau
  double a2, mu2, w2;  // low-voltage plateau, rising edge inside the window

  IcTemplate(double soh, double peak_shift) {
    const double age = (1.0 - soh) / 0.2;
    a1 = 1.0 - 0.35 * age;
    mu1 = 3.86 + 0.06 * age + peak_shift;
    w1 = 0.06 * (1.0 + 0.4 * age);
    a2 = 0.45 * (1.0 - 0.3 * age);
    mu2 = 3.64 + 0.04 * age;
    w2 = 0.035 * (1.0 + 0.3 * age);
  }

  double density(double v) const {
    auto g = [](double x, double mu, double w) { return std::exp(-0.5 * (x - mu) * (x - mu) / (w * w)); };
    return background + a1 * g(v, mu1, w1) + a2 * g(v, mu2, w2);
  }

  // Integral of density from kStartVoltage to v.
  double cumulative(double v) const {
    auto cg = [](double x, double mu, double w) {
      return w * std::sqrt(std::numbers::pi / 2.0) * std::erf((x - mu) / (std::numbers::sqrt2 * w));
    };
    auto raw = [&](double x) { return background * x + a1 * cg(x, mu1, w1) + a2 * cg(x, mu2, w2); };
    return raw(v) - raw(kStartVoltage);
  }

  // Voltage at which cumulative() reaches `target`.
  double invert(double target) const {
    double lo = kStartVoltage, hi = kCvVoltage;
    double v = kStartVoltage + (hi - lo) * target / cumulative(hi);
    for (int it = 0; it < 60; ++it) {
      const double f = cumulative(v) - target;
      if (std::abs(f) < 1e-13) break;
      if (f > 0) hi = v; else lo = v;
      const double step = v - f / density(v);
      v = (step > lo && step < hi) ? step : 0.5 * (lo + hi);
    }
    return v;
  }
};

DiagnosticCycle synthesize_cycle(const SyntheticCellParams& p, int cycle, std::mt19937_64& rng) {
  const double soh = p.soh_at(cycle);
  const double capacity = quantize(soh * kDefaultRatedCapacityMah, 1e-6);
  const IcTemplate shape(soh, p.peak_shift_v);
  std::normal_distribution<double> noise(0.0, kNoiseV);
  std::normal_distribution<double> temp_noise(0.0, 0.05);

  // CC duration so that the CV tail delivers about kCvTargetMah.
  const double cc_seconds = std::floor((capacity - kCvTargetMah) * 3.6 / kCurrentA);
  const double cc_charge = kCurrentA * cc_seconds / 3.6;
  const double cv_charge = capacity - cc_charge;
  const double cv_tau = cv_charge * 3.6 / kCurrentA;  // initial CV current equals the CC current
  const double cv_norm = 1.0 - std::exp(-kCvDurationS / cv_tau);
  const double scale = cc_charge / shape.cumulative(kCvVoltage);

  DiagnosticCycle diag;
  diag.cycle_number = cycle;
  diag.cell_id = p.cell_id;
  diag.samples.reserve(static_cast<std::size_t>(cc_seconds + kCvDurationS) + 1);
  for (double t = 0.0; t <= cc_seconds; t += 1.0) {
    const double q = kCurrentA * t / 3.6;
    const double v = std::min(shape.invert(q / scale), kCvVoltage);
    diag.samples.push_back({t, quantize(v + noise(rng), 1e-6), kCurrentA, quantize(q, 1e-6),
                            quantize(kCellTemperatureC + temp_noise(rng), 1e-2)});
  }
  for (double dt = 1.0; dt <= kCvDurationS; dt += 1.0) {
    const double decay = std::exp(-dt / cv_tau);
    const double q = dt == kCvDurationS ? capacity : cc_charge + cv_charge * (1.0 - decay) / cv_norm;
    const double current = cv_charge * 3.6 / (cv_tau * cv_norm) * decay;
    diag.samples.push_back({cc_seconds + dt, quantize(kCvVoltage + noise(rng), 1e-6),
                            quantize(current, 1e-6), quantize(q, 1e-6),
                            quantize(kCellTemperatureC + temp_noise(rng), 1e-2)});
  }
  diag.end_of_charge_capacity_mah = diag.samples.back().charge_mah;
  return diag;
}

}  // namespace

double SyntheticCellParams::soh_at(double cycle) const {
  return initial_soh * std::exp(-std::pow(cycle / fade_scale_cycles, fade_shape));
}

std::vector<SyntheticCellParams> synthetic_fleet_params(int n_cells, std::uint64_t seed) {
  if (n_cells < 1) throw ValidationError("synthetic fleet needs at least one cell");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  // Stratified EOL targets keep every cell's life distinct.
  std::vector<double> eol_targets;
  for (int i = 0; i < n_cells; ++i)
    eol_targets.push_back(3000.0 + 2500.0 * (i + 0.1 + 0.8 * unit(rng)) / n_cells);
  std::shuffle(eol_targets.begin(), eol_targets.end(), rng);

  std::vector<SyntheticCellParams> params;
  for (int i = 0; i < n_cells; ++i) {
    SyntheticCellParams p;
    p.cell_id = "Cell" + std::to_string(i + 1);
    p.initial_soh = 1.0 - 0.02 * unit(rng);
    p.fade_shape = 1.1 + 0.4 * unit(rng);
    p.fade_scale_cycles = eol_targets[i] / std::pow(std::log(p.initial_soh / kSohEol), 1.0 / p.fade_shape);
    p.peak_shift_v = 0.01 * (unit(rng) - 0.5);
    p.last_cycle = static_cast<int>(std::ceil((eol_targets[i] + kRulHorizonPastEol + 100.0) / 100.0)) * 100;
    params.push_back(p);
  }
  return params;
}

std::vector<CellHistory> generate_synthetic_fleet(int n_cells, std::uint64_t seed) {
  const auto params = synthetic_fleet_params(n_cells, seed);
  std::vector<CellHistory> fleet;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    std::mt19937_64 rng(seed * 1000003u + i + 1);
    CellHistory cell;
    cell.cell_id = p.cell_id;
    cell.rated_capacity_mah = kDefaultRatedCapacityMah;
    for (int cycle = 0; cycle <= p.last_cycle; cycle += 100)
      cell.diagnostics.push_back(synthesize_cycle(p, cycle, rng));
    fleet.push_back(label_cell(std::move(cell)));
  }
  return fleet;
}

}  // namespace bhealth
