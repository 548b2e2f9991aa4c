#include "ps2f/core/types.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace ps2f {

namespace {

constexpr double kFdStep = 1e-6;

}  // namespace

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::kLinear:
      return "linear";
    case ModelKind::kUnicycle:
      return "unicycle";
    case ModelKind::kCustom:
      return "custom";
  }
  return "unknown";
}

std::string to_string(TerminalKind kind) {
  switch (kind) {
    case TerminalKind::kEllipsoid:
      return "ellipsoid";
    case TerminalKind::kOrigin:
      return "origin";
    case TerminalKind::kNone:
      return "none";
  }
  return "unknown";
}

SystemModel SystemModel::linear(Matrix A, Matrix B) {
  if (A.rows() < 1 || A.rows() != A.cols()) {
    throw std::invalid_argument("linear model: A must be square and non-empty");
  }
  if (B.rows() != A.rows() || B.cols() < 1) {
    throw std::invalid_argument("linear model: B must have as many rows as A and at least one column");
  }
  SystemModel model;
  model.kind_ = ModelKind::kLinear;
  model.n_ = static_cast<int>(A.rows());
  model.m_ = static_cast<int>(B.cols());
  model.A_ = std::move(A);
  model.B_ = std::move(B);
  return model;
}

SystemModel SystemModel::unicycle(double sampling_time) {
  if (!(sampling_time > 0.0)) {
    throw std::invalid_argument("unicycle model: sampling time must be positive");
  }
  SystemModel model;
  model.kind_ = ModelKind::kUnicycle;
  model.n_ = 3;
  model.m_ = 2;
  model.ts_ = sampling_time;
  return model;
}

SystemModel SystemModel::custom(int state_dim, int input_dim, Dynamics f) {
  if (state_dim < 1 || input_dim < 1 || !f) {
    throw std::invalid_argument("custom model: dimensions must be positive and dynamics callable");
  }
  SystemModel model;
  model.kind_ = ModelKind::kCustom;
  model.n_ = state_dim;
  model.m_ = input_dim;
  model.custom_ = std::move(f);
  return model;
}

Vector SystemModel::step(const Vector& x, const Vector& u) const {
  switch (kind_) {
    case ModelKind::kLinear:
      return A_ * x + B_ * u;
    case ModelKind::kUnicycle: {
      Vector next = x;
      next(0) += ts_ * std::cos(x(2)) * u(0);
      next(1) += ts_ * std::sin(x(2)) * u(0);
      next(2) += ts_ * u(1);
      return next;
    }
    case ModelKind::kCustom:
      return custom_(x, u);
  }
  return x;
}

void SystemModel::linearize(const Vector& x, const Vector& u, Matrix* fx, Matrix* fu) const {
  switch (kind_) {
    case ModelKind::kLinear:
      if (fx) *fx = A_;
      if (fu) *fu = B_;
      return;
    case ModelKind::kUnicycle: {
      const double c = std::cos(x(2));
      const double s = std::sin(x(2));
      if (fx) {
        *fx = Matrix::Identity(3, 3);
        (*fx)(0, 2) = -ts_ * s * u(0);
        (*fx)(1, 2) = ts_ * c * u(0);
      }
      if (fu) {
        *fu = Matrix::Zero(3, 2);
        (*fu)(0, 0) = ts_ * c;
        (*fu)(1, 0) = ts_ * s;
        (*fu)(2, 1) = ts_;
      }
      return;
    }
    case ModelKind::kCustom: {
      if (fx) {
        fx->resize(n_, n_);
        for (int j = 0; j < n_; ++j) {
          Vector xp = x, xm = x;
          xp(j) += kFdStep;
          xm(j) -= kFdStep;
          fx->col(j) = (custom_(xp, u) - custom_(xm, u)) / (2.0 * kFdStep);
        }
      }
      if (fu) {
        fu->resize(n_, m_);
        for (int j = 0; j < m_; ++j) {
          Vector up = u, um = u;
          up(j) += kFdStep;
          um(j) -= kFdStep;
          fu->col(j) = (custom_(x, up) - custom_(x, um)) / (2.0 * kFdStep);
        }
      }
      return;
    }
  }
}

Matrix SystemModel::weighted_hessian(const Vector& x, const Vector& u, const Vector& w) const {
  const int d = n_ + m_;
  Matrix h = Matrix::Zero(d, d);
  switch (kind_) {
    case ModelKind::kLinear:
      return h;
    case ModelKind::kUnicycle: {
      // Variables ordered (px, py, θ, v, ω); only θθ and θv couple.
      const double c = std::cos(x(2));
      const double s = std::sin(x(2));
      h(2, 2) = -ts_ * u(0) * (w(0) * c + w(1) * s);
      const double tv = ts_ * (-w(0) * s + w(1) * c);
      h(2, 3) = tv;
      h(3, 2) = tv;
      return h;
    }
    case ModelKind::kCustom: {
      // Central differences of the weighted Jacobian.
      auto weighted_grad = [&](const Vector& xx, const Vector& uu) {
        Matrix fx, fu;
        linearize(xx, uu, &fx, &fu);
        Vector g(d);
        g.head(n_) = fx.transpose() * w;
        g.tail(m_) = fu.transpose() * w;
        return g;
      };
      const double step = 1e-4;
      for (int j = 0; j < d; ++j) {
        Vector xp = x, xm = x, up = u, um = u;
        if (j < n_) {
          xp(j) += step;
          xm(j) -= step;
        } else {
          up(j - n_) += step;
          um(j - n_) -= step;
        }
        h.col(j) = (weighted_grad(xp, up) - weighted_grad(xm, um)) / (2.0 * step);
      }
      return 0.5 * (h + h.transpose());
    }
  }
  return h;
}

bool BoxSet::contains(const Vector& x, double tol) const {
  if (x.size() != lower.size()) return false;
  return ((x - lower).array() >= -tol).all() && ((upper - x).array() >= -tol).all();
}

Vector BoxSet::margins(const Vector& x) const {
  Vector out(2 * dim());
  for (int i = 0; i < dim(); ++i) {
    out(2 * i) = x(i) - lower(i);
    out(2 * i + 1) = upper(i) - x(i);
  }
  return out;
}

Vector BoxSet::clamp(const Vector& x) const {
  return x.cwiseMax(lower).cwiseMin(upper);
}

BoxSet BoxSet::symmetric(const Vector& bound) { return BoxSet{-bound, bound}; }

BoxSet BoxSet::uniform(int dim, double lower, double upper) {
  return BoxSet{Vector::Constant(dim, lower), Vector::Constant(dim, upper)};
}

TerminalSet TerminalSet::ellipsoid(Matrix P, double gamma) {
  TerminalSet t;
  t.kind = TerminalKind::kEllipsoid;
  t.P = std::move(P);
  t.gamma = gamma;
  return t;
}

TerminalSet TerminalSet::origin() {
  TerminalSet t;
  t.kind = TerminalKind::kOrigin;
  return t;
}

TerminalSet TerminalSet::none() { return TerminalSet{}; }

bool TerminalSet::contains(const Vector& x, double tol) const {
  switch (kind) {
    case TerminalKind::kEllipsoid:
      return x.dot(P * x) <= gamma + tol;
    case TerminalKind::kOrigin:
      return x.lpNorm<Eigen::Infinity>() <= tol;
    case TerminalKind::kNone:
      return true;
  }
  return false;
}

ModeSchedule ModeSchedule::constant(double a, int M) {
  return from_pieces({Piece{0, a, M}}, 0);
}

ModeSchedule ModeSchedule::two_phase(double a_before, double a_after, int switch_index, int M) {
  if (switch_index <= 0) return from_pieces({Piece{0, a_after, M}}, 0);
  return from_pieces({Piece{0, a_before, M}, Piece{switch_index, a_after, M}}, switch_index);
}

ModeSchedule ModeSchedule::from_pieces(std::vector<Piece> pieces, int switch_index) {
  if (pieces.empty()) throw std::invalid_argument("mode schedule needs at least one piece");
  std::stable_sort(pieces.begin(), pieces.end(),
                   [](const Piece& l, const Piece& r) { return l.start < r.start; });
  if (pieces.front().start != 0) {
    throw std::invalid_argument("mode schedule must define k = 0");
  }
  for (const auto& p : pieces) {
    if (p.a < 0.0 || !std::isfinite(p.a)) throw std::invalid_argument("mode schedule: a(k) must be finite and >= 0");
    if (p.M < 1) throw std::invalid_argument("mode schedule: M(k) must be >= 1");
  }
  ModeSchedule s;
  s.pieces_ = std::move(pieces);
  s.ks_ = std::max(0, switch_index);
  return s;
}

double ModeSchedule::a_at(int k) const {
  double a = pieces_.front().a;
  for (const auto& p : pieces_) {
    if (p.start <= k) a = p.a;
  }
  return a;
}

int ModeSchedule::M_at(int k) const {
  int M = pieces_.front().M;
  for (const auto& p : pieces_) {
    if (p.start <= k) M = p.M;
  }
  return M;
}

double ModeSchedule::a_min() const {
  double v = std::numeric_limits<double>::infinity();
  for (const auto& p : pieces_) v = std::min(v, p.a);
  return v;
}

double ModeSchedule::a_max() const {
  double v = 0.0;
  for (const auto& p : pieces_) v = std::max(v, p.a);
  return v;
}

double ModeSchedule::a_sup_after_switch() const {
  double v = a_at(ks_);
  for (const auto& p : pieces_) {
    if (p.start >= ks_) v = std::max(v, p.a);
  }
  return v;
}

}  // namespace ps2f
