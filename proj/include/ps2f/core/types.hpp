#pragma once

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace ps2f {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class ModelKind { kLinear, kUnicycle, kCustom };

std::string to_string(ModelKind kind);

/// Discrete-time dynamics x⁺ = f(x, u).
///
/// Linear models carry (A, B). The unicycle integrates planar kinematics with
/// forward-Euler over one sampling period; state (px, py, θ), input (v, ω).
/// Custom models wrap an arbitrary callable and fall back to central finite
/// differences (step 1e-6) for derivatives.
class SystemModel {
 public:
  using Dynamics = std::function<Vector(const Vector&, const Vector&)>;

  static SystemModel linear(Matrix A, Matrix B);
  static SystemModel unicycle(double sampling_time);
  static SystemModel custom(int state_dim, int input_dim, Dynamics f);

  ModelKind kind() const { return kind_; }
  int state_dim() const { return n_; }
  int input_dim() const { return m_; }
  const Matrix& A() const { return A_; }
  const Matrix& B() const { return B_; }
  double sampling_time() const { return ts_; }
  bool is_linear() const { return kind_ == ModelKind::kLinear; }

  Vector step(const Vector& x, const Vector& u) const;

  /// Jacobians ∂f/∂x (n×n) and ∂f/∂u (n×m).
  void linearize(const Vector& x, const Vector& u, Matrix* fx, Matrix* fu) const;

  /// Σ_j w_j ∇²f_j(x, u) over the stacked variable (x, u); (n+m)×(n+m).
  Matrix weighted_hessian(const Vector& x, const Vector& u, const Vector& w) const;

 private:
  SystemModel() = default;

  ModelKind kind_ = ModelKind::kLinear;
  int n_ = 0;
  int m_ = 0;
  Matrix A_;
  Matrix B_;
  double ts_ = 0.0;
  Dynamics custom_;
};

/// Componentwise box {x | lower ≤ x ≤ upper}.
struct BoxSet {
  Vector lower;
  Vector upper;

  int dim() const { return static_cast<int>(lower.size()); }
  bool contains(const Vector& x, double tol = 0.0) const;
  /// Signed distance to each face, ordered (x_0 - lower_0, upper_0 - x_0, x_1 - lower_1, ...).
  Vector margins(const Vector& x) const;
  double min_margin(const Vector& x) const { return margins(x).minCoeff(); }
  Vector clamp(const Vector& x) const;

  static BoxSet symmetric(const Vector& bound);
  static BoxSet uniform(int dim, double lower, double upper);
};

enum class TerminalKind { kEllipsoid, kOrigin, kNone };

struct TerminalSet {
  TerminalKind kind = TerminalKind::kNone;
  Matrix P;  // ellipsoid shape, {x | xᵀPx ≤ gamma}
  double gamma = 0.0;

  static TerminalSet ellipsoid(Matrix P, double gamma);
  static TerminalSet origin();
  static TerminalSet none();

  bool contains(const Vector& x, double tol) const;
};

std::string to_string(TerminalKind kind);

/// ℓ(x,u) = xᵀQx + uᵀRu and V_f(x) = xᵀP_f x.
struct QuadraticCost {
  Matrix Q;
  Matrix R;
  Matrix Pf;

  double stage(const Vector& x, const Vector& u) const {
    return x.dot(Q * x) + u.dot(R * u);
  }
  double terminal(const Vector& x) const { return x.dot(Pf * x); }
};

struct Ps2fConfig {
  SystemModel model = SystemModel::linear(Matrix::Identity(1, 1), Matrix::Identity(1, 1));
  int N = 1;
  int M = 1;
  double a = 0.0;
  QuadraticCost cost;
  BoxSet X;
  BoxSet U;
  TerminalSet Xf;
  /// Optional terminal controller u = -K x used by the invariance spot check
  /// and by the shifted feasibility candidate. Empty when not provided.
  Matrix terminal_gain;

  int n() const { return model.state_dim(); }
  int m() const { return model.input_dim(); }
};

/// Piecewise-constant schedule of the filter parameters (a(k), M(k)).
class ModeSchedule {
 public:
  struct Piece {
    int start = 0;
    double a = 0.0;
    int M = 1;
  };

  static ModeSchedule constant(double a, int M);
  /// a(k) = a_before for k < switch_index, a_after afterwards; M fixed.
  static ModeSchedule two_phase(double a_before, double a_after, int switch_index, int M);
  static ModeSchedule from_pieces(std::vector<Piece> pieces, int switch_index);

  double a_at(int k) const;
  int M_at(int k) const;
  int switch_index() const { return ks_; }
  const std::vector<Piece>& pieces() const { return pieces_; }

  /// Smallest and largest a(k) across all pieces.
  double a_min() const;
  double a_max() const;
  /// sup_{k ≥ Ks} a(k).
  double a_sup_after_switch() const;

 private:
  std::vector<Piece> pieces_;
  int ks_ = 0;
};

}  // namespace ps2f
