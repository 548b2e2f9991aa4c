#pragma once

#include <string>
#include <vector>

#include "ps2f/core/types.hpp"
#include "ps2f/filter/s2_set.hpp"

namespace ps2f {

enum class SweepParameter { kA, kM, kN, kQScale };

std::string to_string(SweepParameter p);

struct SweepEntry {
  double value{0.0};
  bool nominal_feasible{false};
  S2Grid grid;
  std::vector<Polyline> boundary;
  int true_cells{0};
  int indeterminate_cells{0};
};

struct SweepResult {
  SweepParameter parameter{SweepParameter::kA};
  std::vector<SweepEntry> entries;
  /// True→false flips between consecutive feasible entries (values ascending).
  int nesting_flips{0};
  /// Whether the sweep is one where growth in the value must not shrink the
  /// set (a and M), so flips count as a failure.
  bool monotone_expected{false};

  bool nested() const { return nesting_flips == 0; }
};

/// Rebuilds the configuration for each value, re-solves the nominal problem
/// at x and samples the S²-set. kA sets a; kM sets M; kN sets N = M = value;
/// kQScale sets Q = value·I and recomputes the LQR terminal ingredients with
/// max_ellipsoid_level (linear models only). Values are processed in
/// ascending order.
///
/// @throws std::invalid_argument for an unsupported parameter/model pairing.
SweepResult parameter_sweep_s2(const Ps2fConfig& base, const Vector& x, SweepParameter parameter,
                               std::vector<double> values, int resolution = 201, int threads = 0);

/// Default value lists for the four sweeps of the second case study.
std::vector<double> default_sweep_values(SweepParameter p);

}  // namespace ps2f
