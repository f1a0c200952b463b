#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bhealth/data_model.hpp"
#include "bhealth/features.hpp"

namespace bhealth {

struct CheckResult {
  std::string name;
  bool passed = false;
  double worst = 0.0;      // worst observed error (or statistic)
  double threshold = 0.0;  // what `worst` was compared against
  std::string detail;
};

/// GP posterior and LML against dense explicit-inverse / determinant
/// formulas on `problems` random problems (n <= 10, d <= 3).
CheckResult check_gp_oracle(std::uint64_t seed, int problems = 20);

/// Analytic LML gradient vs central differences, d in {1, 2, 5}.
CheckResult check_lml_gradient(std::uint64_t seed, int problems_per_dim = 10);

/// Mixture mean/variance against Monte-Carlo draws from random 5-expert
/// mixtures; also the variance decomposition identity on each.
CheckResult check_mixture_moments(std::uint64_t seed, int mixtures = 10, long draws = 1000000);

/// Constant identity, lag-0 cross-correlation at 0.001 Hz, reversal symmetry
/// and the -3 dB point of the default filter.
CheckResult check_filter_properties();

/// Trapezoidal integral of every IC curve vs the CC charge throughput.
CheckResult check_charge_conservation(const std::vector<CellHistory>& fleet, const IcaConfig& ica = {});

/// Spearman(F1, SoH) for every cell, compared to `min_rho`.
CheckResult check_spearman_per_cell(const std::vector<CellHistory>& fleet, const IcaConfig& ica = {},
                                    double min_rho = 0.95);

/// Trains GPRn on the RUL rows of all cells but two, predicts every row of
/// the fleet and checks variance == epistemic + aleatoric.
CheckResult check_decomposition_on_fleet(const std::vector<CellHistory>& fleet, const IcaConfig& ica = {});

struct SelftestOptions {
  std::uint64_t seed = 7;
  int cells = 8;
  long mc_draws = 1000000;
  IcaConfig ica;
};

/// The dataset-free suite: every check above on the synthetic fleet.
std::vector<CheckResult> run_selftest(const SelftestOptions& options);

}  // namespace bhealth
