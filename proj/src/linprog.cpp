#include "bat/linprog.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "bat/error.hpp"

namespace bat::lp {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kPivotTol = 1e-11;
constexpr double kCostTol = 1e-12;
// Basic values this close to a bound count as on it.
constexpr double kBoundTol = 1e-13;
constexpr std::size_t kRefactorEvery = 32;
// Recomputing x_B from scratch costs O(v m), so it happens less often.
constexpr std::size_t kRecomputeEvery = 1024;
// Consecutive zero-length steps before pricing switches to Bland's rule.
constexpr std::size_t kBlandAfter = 50;

enum class VarState : unsigned char { Basic, Nonbasic, Dead };

double max_violation(const FeasibilityProgram& prog, const std::vector<double>& x) {
  const Eigen::MatrixXd& a = *prog.eq_lhs;
  Eigen::Map<const Eigen::VectorXd> xv(x.data(), static_cast<Eigen::Index>(x.size()));
  const Eigen::VectorXd ax = a * xv;
  double worst = 0.0;
  for (std::size_t r = 0; r < prog.n_rows(); ++r) {
    worst = std::max(worst, std::abs(ax[static_cast<Eigen::Index>(r)] - prog.eq_rhs[r]));
  }
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double ub = j == prog.fixed_zero ? 0.0 : prog.upper_bounds[j];
    worst = std::max({worst, -x[j], x[j] - ub});
  }
  return worst;
}

struct Breakpoint {
  double t;
  double slope_gain;
  std::size_t row;
  bool at_upper;
  std::size_t var;
};

// Phase 1 that minimizes the total bound infeasibility of the basic
// variables. Variables 0..v-1 are structural with box [0, u_j]; v..v+m-1 are
// artificials (column e_r) fixed to [0, 0]. Basic variables may leave their
// boxes, and the ratio test walks past breakpoints while the objective keeps
// falling, so one step can fix many of them.
class BoundedSimplex {
 public:
  BoundedSimplex(const FeasibilityProgram& prog)
      : prog_(prog),
        a_(*prog.eq_lhs),
        v_(prog.n_vars()),
        m_(prog.n_rows()),
        state_(v_ + m_, VarState::Nonbasic),
        value_(v_, 0.0),
        head_(m_),
        xb_(static_cast<Eigen::Index>(m_)),
        binv_(Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(m_), static_cast<Eigen::Index>(m_))) {
    const bool warm = prog.start && prog.start->size() == v_;
    for (std::size_t j = 0; j < v_; ++j) {
      if (j == prog.fixed_zero || prog.upper_bounds[j] <= 0.0) {
        state_[j] = VarState::Dead;
      } else if (warm) {
        const double x = (*prog.start)[j];
        value_[j] = std::isfinite(x) ? std::clamp(x, 0.0, prog.upper_bounds[j]) : 0.0;
      }
    }
    for (std::size_t r = 0; r < m_; ++r) {
      head_[r] = v_ + r;
      state_[v_ + r] = VarState::Basic;
    }
    xb_ = rhs_minus_nonbasic();
  }

  FeasibilityResult run(double tol) {
    const std::size_t cap = iteration_cap(prog_);
    std::size_t iterations = 0;
    std::size_t pivots = 0;
    std::size_t zero_steps = 0;
    bool bland = false;
    std::size_t cursor = 0;
    std::vector<Breakpoint> points;
    points.reserve(2 * m_);

    while (true) {
      Eigen::VectorXd cost(static_cast<Eigen::Index>(m_));
      bool infeasible = false;
      for (std::size_t r = 0; r < m_; ++r) {
        const double x = xb_[static_cast<Eigen::Index>(r)];
        double c = 0.0;
        if (x < lower(head_[r]) - kBoundTol) c = -1.0;
        if (x > upper(head_[r]) + kBoundTol) c = 1.0;
        cost[static_cast<Eigen::Index>(r)] = c;
        infeasible = infeasible || c != 0.0;
      }
      if (!infeasible) break;
      const Eigen::VectorXd y = binv_.transpose() * cost;

      // Pricing: Bland scans from 0; otherwise the scan resumes cyclically
      // where the last one stopped. d_j = -a_j . y.
      std::size_t entering = v_;
      double reduced = 0.0;
      const std::size_t first = bland ? 0 : cursor;
      for (std::size_t k = 0; k < v_; ++k) {
        std::size_t j = first + k;
        if (j >= v_) j -= v_;
        if (state_[j] != VarState::Nonbasic) continue;
        const double dj = -a_.col(static_cast<Eigen::Index>(j)).dot(y);
        if ((dj < -kCostTol && value_[j] < upper(j)) || (dj > kCostTol && value_[j] > 0.0)) {
          entering = j;
          reduced = dj;
          break;
        }
      }
      if (entering == v_) break;
      cursor = entering + 1 == v_ ? 0 : entering + 1;

      if (++iterations > cap) {
        throw SolverUnresolved("simplex exceeded " + std::to_string(cap) + " iterations");
      }

      const double direction = reduced < 0.0 ? 1.0 : -1.0;
      const Eigen::VectorXd alpha = binv_ * a_.col(static_cast<Eigen::Index>(entering));
      const double room = direction > 0.0 ? upper(entering) - value_[entering] : value_[entering];

      // Basic r moves as x_r - rate * t. Each bound it crosses raises the
      // slope of the objective by |rate|.
      points.clear();
      for (std::size_t r = 0; r < m_; ++r) {
        const double rate = direction * alpha[static_cast<Eigen::Index>(r)];
        if (std::abs(rate) <= kPivotTol) continue;
        const double x = xb_[static_cast<Eigen::Index>(r)];
        const double lo = lower(head_[r]);
        const double hi = upper(head_[r]);
        const double speed = std::abs(rate);
        auto add = [&](double bound, bool at_upper) {
          points.push_back({std::max((rate > 0.0 ? x - bound : bound - x) / speed, 0.0), speed, r, at_upper,
                            head_[r]});
        };
        if (rate > 0.0) {
          if (x > hi + kBoundTol) add(hi, true);
          if (x >= lo - kBoundTol) add(lo, false);
        } else {
          if (x < lo - kBoundTol) add(lo, false);
          if (x <= hi + kBoundTol) add(hi, true);
        }
      }
      std::sort(points.begin(), points.end(), [bland](const Breakpoint& p, const Breakpoint& q) {
        if (p.t != q.t) return p.t < q.t;
        return bland ? p.var < q.var : p.row < q.row;
      });

      double slope = -std::abs(reduced);
      const Breakpoint* leave = nullptr;
      for (const Breakpoint& bp : points) {
        if (bp.t >= room) break;
        slope += bp.slope_gain;
        if (slope >= 0.0) {
          leave = &bp;
          break;
        }
      }

      const double step = leave ? leave->t : room;
      zero_steps = step > 0.0 ? 0 : zero_steps + 1;
      if (zero_steps >= kBlandAfter) bland = true;
      xb_ -= (direction * step) * alpha;

      if (!leave) {
        // The entering variable reaches its own bound first.
        value_[entering] = direction > 0.0 ? upper(entering) : 0.0;
        continue;
      }

      const std::size_t lr = leave->row;
      const auto lri = static_cast<Eigen::Index>(lr);
      const std::size_t leaving = head_[lr];
      if (leaving >= v_) {
        state_[leaving] = VarState::Dead;
      } else {
        state_[leaving] = VarState::Nonbasic;
        value_[leaving] = leave->at_upper ? upper(leaving) : 0.0;
      }
      const double entering_value = value_[entering] + direction * step;
      head_[lr] = entering;
      state_[entering] = VarState::Basic;
      xb_[lri] = entering_value;

      const double pivot = alpha[lri];
      binv_.row(lri) /= pivot;
      for (Eigen::Index r = 0; r < static_cast<Eigen::Index>(m_); ++r) {
        if (r != lri && alpha[r] != 0.0) binv_.row(r) -= alpha[r] * binv_.row(lri);
      }
      ++pivots;
      if (pivots % kRefactorEvery == 0) refactor(pivots % kRecomputeEvery == 0);
    }

    refactor(true);
    return finish(tol, iterations);
  }

 private:
  double lower(std::size_t) const { return 0.0; }

  double upper(std::size_t j) const {
    if (j >= v_ || state_[j] == VarState::Dead) return 0.0;
    return prog_.upper_bounds[j];
  }

  Eigen::VectorXd column(std::size_t j) const {
    if (j < v_) return a_.col(static_cast<Eigen::Index>(j));
    Eigen::VectorXd e = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m_));
    e[static_cast<Eigen::Index>(j - v_)] = 1.0;
    return e;
  }

  // b - sum over nonbasic structurals of a_j x_j.
  Eigen::VectorXd rhs_minus_nonbasic() const {
    Eigen::VectorXd rhs = Eigen::Map<const Eigen::VectorXd>(prog_.eq_rhs.data(), static_cast<Eigen::Index>(m_));
    for (std::size_t j = 0; j < v_; ++j) {
      if (state_[j] == VarState::Nonbasic && value_[j] != 0.0) {
        rhs -= value_[j] * a_.col(static_cast<Eigen::Index>(j));
      }
    }
    return rhs;
  }

  void refactor(bool recompute_values) {
    const auto m = static_cast<Eigen::Index>(m_);
    Eigen::MatrixXd basis(m, m);
    for (std::size_t r = 0; r < m_; ++r) basis.col(static_cast<Eigen::Index>(r)) = column(head_[r]);
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(basis);
    binv_ = lu.inverse();
    if (recompute_values) xb_ = binv_ * rhs_minus_nonbasic();
  }

  FeasibilityResult finish(double tol, std::size_t iterations) const {
    FeasibilityResult result;
    result.iterations = iterations;

    double infeasibility = 0.0;
    std::vector<double> x(v_, 0.0);
    for (std::size_t j = 0; j < v_; ++j) {
      if (state_[j] == VarState::Nonbasic) x[j] = value_[j];
    }
    for (std::size_t r = 0; r < m_; ++r) {
      const double value = xb_[static_cast<Eigen::Index>(r)];
      const std::size_t h = head_[r];
      infeasibility += std::max({lower(h) - value, value - upper(h), 0.0});
      if (h < v_) x[h] = value;
    }
    result.phase1_objective = infeasibility;

    if (infeasibility > tol) {
      result.status = FeasStatus::Infeasible;
      result.residual = max_violation(prog_, x);
      return result;
    }

    for (std::size_t j = 0; j < v_; ++j) x[j] = std::clamp(x[j], 0.0, upper(j));
    double mass = 0.0;
    for (double xj : x) mass += xj;
    if (!(mass > 0.0)) {
      // Only possible when the simplex row itself is unsatisfiable within tol.
      result.status = FeasStatus::Infeasible;
      result.residual = max_violation(prog_, x);
      return result;
    }
    for (double& xj : x) xj /= mass;
    result.status = FeasStatus::Feasible;
    result.residual = max_violation(prog_, x);
    result.witness = Distribution::from_weights(std::move(x));
    return result;
  }

  const FeasibilityProgram& prog_;
  const Eigen::MatrixXd& a_;
  std::size_t v_;
  std::size_t m_;
  std::vector<VarState> state_;
  std::vector<double> value_;
  std::vector<std::size_t> head_;
  Eigen::VectorXd xb_;
  Eigen::MatrixXd binv_;
};

}  // namespace

void FeasibilityProgram::validate() const {
  if (!eq_lhs) throw InvalidInput("program has no constraint matrix");
  const std::size_t v = n_vars();
  if (v == 0) throw InvalidInput("program has no variables");
  if (fixed_zero >= v) throw InvalidInput("fixed_zero index out of range");
  if (n_rows() == 0 || static_cast<std::size_t>(eq_lhs->rows()) != n_rows() ||
      static_cast<std::size_t>(eq_lhs->cols()) != v) {
    throw InvalidInput("constraint matrix shape does not match program");
  }
  for (double u : upper_bounds) {
    if (!(u >= 0.0) || std::isinf(u)) throw InvalidInput("upper bounds must be finite and >= 0");
  }
  if (!eq_lhs->allFinite()) throw InvalidInput("constraint matrix is not finite");
  for (double b : eq_rhs) {
    if (!std::isfinite(b)) throw InvalidInput("right-hand side is not finite");
  }
  if (eq_rhs[0] != 1.0 || (eq_lhs->row(0).array() != 1.0).any()) {
    throw InvalidInput("row 0 must be the all-ones simplex row with rhs 1");
  }
}

std::size_t iteration_cap(const FeasibilityProgram& prog) {
  const std::size_t c = prog.n_rows() == 0 ? 0 : prog.n_rows() - 1;
  return 50 * (prog.n_vars() + c);
}

FeasibilityResult solve_feasibility(const FeasibilityProgram& prog, double tol) {
  prog.validate();
  if (!(tol > 0.0)) throw InvalidInput("tolerance must be positive");
  return BoundedSimplex(prog).run(tol);
}

}  // namespace bat::lp
