#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include <gmpxx.h>

#include "bat/linprog.hpp"

namespace bat::lp {

inline constexpr std::size_t kExactMaxVars = 64;
inline constexpr std::size_t kExactMaxConstraints = 8;

/// Rational copy of a FeasibilityProgram. Every double is a dyadic rational,
/// so conversion from floating point is exact.
struct ExactProgram {
  std::size_t fixed_zero = 0;
  std::vector<mpq_class> upper_bounds;
  std::vector<std::vector<mpq_class>> eq_lhs;  // row-major, (1 + c) x v
  std::vector<mpq_class> eq_rhs;

  static ExactProgram from(const FeasibilityProgram& prog);
};

struct ExactFeasibilityResult {
  FeasStatus status = FeasStatus::Infeasible;
  mpq_class phase1_optimum;
  std::optional<std::vector<mpq_class>> witness;
  std::size_t pivots = 0;

  bool feasible() const { return status == FeasStatus::Feasible; }
};

/// Full-tableau bounded-variable simplex over GMP rationals with Bland's
/// rule. No tolerances: feasible iff the phase-1 optimum is exactly zero.
///
/// Refuses (throws Refused) programs with more than kExactMaxVars variables
/// or kExactMaxConstraints basis-aware rows.
ExactFeasibilityResult solve_feasibility_exact(const ExactProgram& prog);

}  // namespace bat::lp
