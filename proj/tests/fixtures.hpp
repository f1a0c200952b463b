#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "bhealth/data_model.hpp"
#include "bhealth/report.hpp"

namespace bhealth::testing {

// Seed-7 synthetic fleet, generated once per test binary.
inline const std::vector<CellHistory>& seed7_fleet() {
  static const std::vector<CellHistory> fleet = [] {
    set_warnings_enabled(false);
    return generate_synthetic_fleet(8, 7);
  }();
  return fleet;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("bhealth_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// Labeled cell with a prescribed SoH per diagnostic and no samples.
inline CellHistory cell_with_soh(const std::string& id, const std::vector<int>& cycles, const std::vector<double>& soh,
                                 double rated = 740.0) {
  CellHistory c;
  c.cell_id = id;
  c.rated_capacity_mah = rated;
  for (std::size_t i = 0; i < cycles.size(); ++i) {
    DiagnosticCycle d;
    d.cell_id = id;
    d.cycle_number = cycles[i];
    d.end_of_charge_capacity_mah = soh[i] * rated;
    c.diagnostics.push_back(d);
  }
  return c;
}

}  // namespace bhealth::testing
