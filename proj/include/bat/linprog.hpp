#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "bat/prob_core.hpp"

namespace bat::lp {

inline constexpr double kDefaultTolerance = 1e-8;

enum class FeasStatus { Feasible, Infeasible };

/// Does a distribution p exist with p[fixed_zero] = 0, 0 <= p_j <= u_j and
/// eq_lhs * p = eq_rhs?
///
/// Row 0 of eq_lhs is the all-ones simplex row with eq_rhs[0] = 1. The
/// remaining rows are the basis-aware moment constraints. The constraint
/// matrix is shared so per-token programs over the same step only differ in
/// fixed_zero.
struct FeasibilityProgram {
  std::size_t fixed_zero = 0;
  std::vector<double> upper_bounds;
  std::shared_ptr<const Eigen::MatrixXd> eq_lhs;  // (1 + c) x v, column-major
  std::vector<double> eq_rhs;
  /// Optional starting values for the structural variables, clamped into
  /// the box. A start close to feasible saves most of the phase-1 work.
  std::shared_ptr<const std::vector<double>> start;

  std::size_t n_vars() const { return upper_bounds.size(); }
  std::size_t n_rows() const { return eq_rhs.size(); }

  /// Throws InvalidInput on shape or sign violations.
  void validate() const;
};

struct FeasibilityResult {
  FeasStatus status = FeasStatus::Infeasible;
  std::optional<Distribution> witness;  // present iff Feasible
  /// Max constraint violation of the returned witness, or of the final
  /// phase-1 point when infeasible.
  double residual = 0.0;
  /// Total bound infeasibility of the basic variables at the phase-1
  /// optimum.
  double phase1_objective = 0.0;
  std::size_t iterations = 0;

  bool feasible() const { return status == FeasStatus::Feasible; }
};

/// 50 * (v + c).
std::size_t iteration_cap(const FeasibilityProgram& prog);

/// Phase-1 bounded-variable simplex minimizing the total bound
/// infeasibility of the basic variables, with a ratio test that passes
/// breakpoints while the objective still falls. Nonbasic variables sit at
/// prog.start (or 0) and may be interior until first moved. The basis has
/// 1 + c rows and starts on artificials fixed at zero. Pricing scans
/// cyclically for an improving column and switches to Bland's rule after a
/// run of zero-length steps. Feasible iff the minimized infeasibility is
/// <= tol.
///
/// Throws SolverUnresolved when iteration_cap() is exceeded.
FeasibilityResult solve_feasibility(const FeasibilityProgram& prog,
                                    double tol = kDefaultTolerance);

}  // namespace bat::lp
