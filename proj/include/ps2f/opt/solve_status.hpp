#pragma once

#include <limits>
#include <string>

namespace ps2f::opt {

enum class Status { kOptimal, kInfeasible, kMaxIter, kNumericalFailure };

std::string to_string(Status status);

struct SolveStatus {
  Status status{Status::kNumericalFailure};
  double kkt_residual{std::numeric_limits<double>::infinity()};
  int iterations{0};

  bool optimal() const { return status == Status::kOptimal; }
};

}  // namespace ps2f::opt
