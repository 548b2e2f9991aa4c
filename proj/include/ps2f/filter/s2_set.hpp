#pragma once

#include <iosfwd>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "ps2f/core/types.hpp"
#include "ps2f/filter/ps2f_filter.hpp"
#include "ps2f/mpc/nominal_mpc.hpp"

namespace ps2f {

using Polyline = std::vector<Eigen::Vector2d>;

/// Membership verdicts on an R×R lattice covering a two-dimensional U,
/// bounds included. Node (i, j) sits at (axis1(i), axis2(j)).
struct S2Grid {
  int resolution{0};
  Vector axis1;
  Vector axis2;
  /// Row-major: cells[i * resolution + j].
  std::vector<Membership> cells;
  /// Node nearest v*(0;x). It stands for v*(0;x) itself, which is always a
  /// member, so it is marked true regardless of the solver verdict there.
  int anchor_i{0};
  int anchor_j{0};
  Membership anchor_verdict{Membership::kIndeterminate};

  Membership at(int i, int j) const { return cells[static_cast<std::size_t>(i) * resolution + j]; }
  bool member(int i, int j) const { return at(i, j) == Membership::kTrue; }
  int count(Membership m) const;
  Eigen::Vector2d node(int i, int j) const { return {axis1(i), axis2(j)}; }
};

/// Samples s2_membership over the lattice. threads = 0 uses the hardware
/// concurrency; the result does not depend on the thread count.
///
/// @throws std::invalid_argument if m ≠ 2 or resolution < 2.
S2Grid sample_s2_set(const Ps2fConfig& cfg, const Vector& x, const NominalSolution& nominal, double a, int M,
                     int resolution = 201, int threads = 0);

/// Marching-squares contours of the true region. Closed loops repeat their
/// first vertex at the end; an isolated true node yields a one-vertex
/// polyline at that node. Vertices are clamped to the lattice extent.
std::vector<Polyline> s2_boundary(const S2Grid& grid);

/// Keeps at most max_vertices evenly spaced vertices, always including the
/// first and last.
Polyline downsample(const Polyline& line, std::size_t max_vertices = 64);

/// One CSV row per i, one column per j; 1 true, 0 false, −1 indeterminate.
void write_grid_csv(std::ostream& out, const S2Grid& grid);

/// [[[u1, u2], …], …]
nlohmann::json polylines_to_json(const std::vector<Polyline>& lines);

}  // namespace ps2f
