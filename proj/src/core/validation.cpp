#include "ps2f/core/validation.hpp"

#include <cmath>
#include <sstream>

#include <Eigen/Eigenvalues>

namespace ps2f {

namespace {

constexpr double kPdThreshold = 1e-10;
constexpr double kPsdTolerance = 1e-10;
constexpr double kInvarianceTolerance = 1e-8;
constexpr int kInvarianceSamples = 1000;

bool is_symmetric(const Matrix& S) {
  return S.rows() == S.cols() &&
         (S - S.transpose()).lpNorm<Eigen::Infinity>() <= 1e-9 * std::max(1.0, S.lpNorm<Eigen::Infinity>());
}

double min_eigenvalue(const Matrix& S) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (S + S.transpose()), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

double radical_inverse(int index, int base) {
  double result = 0.0;
  double f = 1.0 / base;
  while (index > 0) {
    result += f * (index % base);
    index /= base;
    f /= base;
  }
  return result;
}

constexpr int kPrimes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53};

}  // namespace

std::string to_string(ViolationCode code) {
  switch (code) {
    case ViolationCode::kDimensions:
      return "dimensions";
    case ViolationCode::kHorizon:
      return "horizon";
    case ViolationCode::kNegativeA:
      return "negative_a";
    case ViolationCode::kCostNotPsd:
      return "cost_not_psd";
    case ViolationCode::kInputWeightNotPd:
      return "input_weight_not_pd";
    case ViolationCode::kNotCSet:
      return "not_c_set";
    case ViolationCode::kUncontrollable:
      return "uncontrollable";
    case ViolationCode::kTerminalSet:
      return "terminal_set";
    case ViolationCode::kTerminalInvariance:
      return "terminal_invariance";
    case ViolationCode::kEquilibrium:
      return "equilibrium";
  }
  return "unknown";
}

bool ValidationReport::has(ViolationCode code) const {
  for (const auto& v : violations) {
    if (v.code == code) return true;
  }
  return false;
}

std::string ValidationReport::summary() const {
  std::ostringstream os;
  for (const auto& v : violations) os << "[" << to_string(v.code) << "] " << v.message << "\n";
  return os.str();
}

int controllability_rank(const Matrix& A, const Matrix& B, double rel_tol) {
  const int n = static_cast<int>(A.rows());
  const int m = static_cast<int>(B.cols());
  Matrix C(n, n * m);
  Matrix block = B;
  for (int i = 0; i < n; ++i) {
    C.middleCols(i * m, m) = block;
    block = A * block;
  }
  Eigen::JacobiSVD<Matrix> svd(C);
  const Vector& s = svd.singularValues();
  if (s.size() == 0 || s(0) == 0.0) return 0;
  int rank = 0;
  for (int i = 0; i < s.size(); ++i) {
    if (s(i) > rel_tol * s(0)) ++rank;
  }
  return rank;
}

std::vector<Vector> ellipsoid_boundary_samples(const Matrix& P, double gamma, int count) {
  const int n = static_cast<int>(P.rows());
  std::vector<Vector> dirs;
  dirs.reserve(count);
  if (n == 1) {
    for (int i = 0; i < count; ++i) dirs.push_back(Vector::Constant(1, i % 2 == 0 ? 1.0 : -1.0));
  } else if (n == 2) {
    for (int i = 0; i < count; ++i) {
      const double t = 2.0 * M_PI * i / count;
      Vector d(2);
      d << std::cos(t), std::sin(t);
      dirs.push_back(d);
    }
  } else {
    // Halton points in [-1, 1]^n projected onto the sphere.
    int index = 1;
    while (static_cast<int>(dirs.size()) < count) {
      Vector d(n);
      for (int j = 0; j < n; ++j) d(j) = 2.0 * radical_inverse(index, kPrimes[j % 16]) - 1.0;
      ++index;
      const double norm = d.norm();
      if (norm < 1e-3) continue;
      dirs.push_back(d / norm);
    }
  }
  Eigen::LLT<Matrix> llt(0.5 * (P + P.transpose()));
  const Matrix Lt = llt.matrixU();
  std::vector<Vector> points;
  points.reserve(dirs.size());
  for (const auto& d : dirs) {
    // x = sqrt(γ) L⁻ᵀ d gives xᵀPx = γ |d|².
    points.push_back(std::sqrt(gamma) * Lt.triangularView<Eigen::Upper>().solve(d));
  }
  return points;
}

ValidationReport validate_config(const Ps2fConfig& cfg) {
  ValidationReport report;
  auto add = [&](ViolationCode code, std::string msg) { report.violations.push_back({code, std::move(msg)}); };

  const int n = cfg.n();
  const int m = cfg.m();
  bool dims_ok = n >= 1 && m >= 1;
  if (cfg.cost.Q.rows() != n || cfg.cost.Q.cols() != n) dims_ok = false;
  if (cfg.cost.R.rows() != m || cfg.cost.R.cols() != m) dims_ok = false;
  if (cfg.cost.Pf.rows() != n || cfg.cost.Pf.cols() != n) dims_ok = false;
  if (cfg.X.lower.size() != n || cfg.X.upper.size() != n) dims_ok = false;
  if (cfg.U.lower.size() != m || cfg.U.upper.size() != m) dims_ok = false;
  if (cfg.Xf.kind == TerminalKind::kEllipsoid && (cfg.Xf.P.rows() != n || cfg.Xf.P.cols() != n)) dims_ok = false;
  if (cfg.terminal_gain.size() > 0 && (cfg.terminal_gain.rows() != m || cfg.terminal_gain.cols() != n)) {
    dims_ok = false;
  }
  if (!dims_ok) {
    add(ViolationCode::kDimensions, "matrix or set dimensions inconsistent with the model (n, m)");
    return report;
  }

  if (cfg.N < 1) add(ViolationCode::kHorizon, "N must be >= 1");
  if (cfg.M < 1 || cfg.M > cfg.N) add(ViolationCode::kHorizon, "M must satisfy 1 <= M <= N");
  if (!(cfg.a >= 0.0) || !std::isfinite(cfg.a)) add(ViolationCode::kNegativeA, "a must be finite and >= 0");

  if (!is_symmetric(cfg.cost.Q) || min_eigenvalue(cfg.cost.Q) < -kPsdTolerance) {
    add(ViolationCode::kCostNotPsd, "Q must be symmetric positive semidefinite");
  }
  if (!is_symmetric(cfg.cost.Pf) || min_eigenvalue(cfg.cost.Pf) < -kPsdTolerance) {
    add(ViolationCode::kCostNotPsd, "P_f must be symmetric positive semidefinite");
  }
  if (!is_symmetric(cfg.cost.R) || min_eigenvalue(cfg.cost.R) <= kPdThreshold) {
    add(ViolationCode::kInputWeightNotPd, "R must be symmetric positive definite");
  }

  auto check_cset = [&](const BoxSet& box, const char* name) {
    const bool finite = box.lower.allFinite() && box.upper.allFinite();
    const bool interior = (box.lower.array() < 0.0).all() && (box.upper.array() > 0.0).all();
    if (!finite || !interior) {
      add(ViolationCode::kNotCSet, std::string(name) + " must be a bounded box with the origin strictly inside");
    }
  };
  check_cset(cfg.X, "X");
  check_cset(cfg.U, "U");

  if (cfg.model.is_linear()) {
    if (controllability_rank(cfg.model.A(), cfg.model.B()) < n) {
      add(ViolationCode::kUncontrollable, "(A, B) is not controllable");
    }
  }

  const Vector f00 = cfg.model.step(Vector::Zero(n), Vector::Zero(m));
  if (f00.lpNorm<Eigen::Infinity>() > 1e-12) {
    add(ViolationCode::kEquilibrium, "f(0, 0) must be 0");
  }

  if (cfg.Xf.kind == TerminalKind::kEllipsoid) {
    const Matrix& P = cfg.Xf.P;
    bool shape_ok = is_symmetric(P) && min_eigenvalue(P) > kPdThreshold && cfg.Xf.gamma > 0.0;
    if (!shape_ok) {
      add(ViolationCode::kTerminalSet, "ellipsoid terminal set needs P > 0 and gamma > 0");
    } else {
      // X_f ⊆ X: half-width of the ellipsoid along axis i is sqrt(γ (P⁻¹)_ii).
      const Matrix Pinv = P.inverse();
      for (int i = 0; i < n; ++i) {
        const double half = std::sqrt(cfg.Xf.gamma * Pinv(i, i));
        if (half > cfg.X.upper(i) + 1e-12 || -half < cfg.X.lower(i) - 1e-12) {
          add(ViolationCode::kTerminalSet, "terminal ellipsoid is not contained in X");
          break;
        }
      }
      if (cfg.terminal_gain.size() > 0) {
        const Matrix& K = cfg.terminal_gain;
        for (const auto& x : ellipsoid_boundary_samples(P, cfg.Xf.gamma, kInvarianceSamples)) {
          const Vector u = -K * x;
          const Vector xn = cfg.model.step(x, u);
          const double lhs = cfg.cost.terminal(xn) - cfg.cost.terminal(x);
          if (lhs > -cfg.cost.stage(x, u) + kInvarianceTolerance) {
            add(ViolationCode::kTerminalInvariance,
                "V_f(f(x,-Kx)) - V_f(x) <= -l(x,-Kx) fails on the terminal ellipsoid boundary");
            break;
          }
        }
      }
    }
  }
  return report;
}

}  // namespace ps2f
