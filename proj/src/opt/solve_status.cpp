#include "ps2f/opt/solve_status.hpp"

namespace ps2f::opt {

std::string to_string(Status status) {
  switch (status) {
    case Status::kOptimal:
      return "optimal";
    case Status::kInfeasible:
      return "infeasible";
    case Status::kMaxIter:
      return "max_iter";
    case Status::kNumericalFailure:
      return "numerical_failure";
  }
  return "unknown";
}

}  // namespace ps2f::opt
