#include "bat/linprog_exact.hpp"

#include <string>

#include "bat/error.hpp"

namespace bat::lp {

ExactProgram ExactProgram::from(const FeasibilityProgram& prog) {
  prog.validate();
  ExactProgram out;
  out.fixed_zero = prog.fixed_zero;
  out.upper_bounds.reserve(prog.n_vars());
  for (double u : prog.upper_bounds) out.upper_bounds.emplace_back(u);
  const Eigen::MatrixXd& a = *prog.eq_lhs;
  out.eq_lhs.resize(prog.n_rows());
  for (std::size_t r = 0; r < prog.n_rows(); ++r) {
    out.eq_lhs[r].reserve(prog.n_vars());
    for (std::size_t j = 0; j < prog.n_vars(); ++j) {
      out.eq_lhs[r].emplace_back(a(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)));
    }
  }
  for (double b : prog.eq_rhs) out.eq_rhs.emplace_back(b);
  return out;
}

namespace {

enum class State : unsigned char { Basic, Lower, Upper, Dead };

}  // namespace

ExactFeasibilityResult solve_feasibility_exact(const ExactProgram& prog) {
  const std::size_t v = prog.upper_bounds.size();
  const std::size_t m = prog.eq_rhs.size();
  if (v == 0 || m == 0) throw InvalidInput("exact program is empty");
  if (v > kExactMaxVars || m - 1 > kExactMaxConstraints) {
    throw Refused("exact solver is limited to " + std::to_string(kExactMaxVars) +
                  " variables and " + std::to_string(kExactMaxConstraints) + " constraints");
  }
  if (prog.eq_lhs.size() != m || prog.fixed_zero >= v) throw InvalidInput("malformed exact program");
  for (const auto& row : prog.eq_lhs) {
    if (row.size() != v) throw InvalidInput("malformed exact program");
  }

  // Columns: structural 0..v-1, artificial v..v+m-1.
  const std::size_t n = v + m;
  std::vector<std::vector<mpq_class>> tab(m, std::vector<mpq_class>(n));
  std::vector<mpq_class> xb(m);
  std::vector<mpq_class> reduced(n);
  std::vector<std::size_t> head(m);
  std::vector<State> state(n, State::Lower);

  for (std::size_t j = 0; j < v; ++j) {
    if (j == prog.fixed_zero || sgn(prog.upper_bounds[j]) <= 0) state[j] = State::Dead;
  }
  for (std::size_t r = 0; r < m; ++r) {
    // Flip rows with negative rhs so the artificial starts non-negative.
    const bool flip = sgn(prog.eq_rhs[r]) < 0;
    for (std::size_t j = 0; j < v; ++j) tab[r][j] = flip ? -prog.eq_lhs[r][j] : prog.eq_lhs[r][j];
    tab[r][v + r] = 1;
    xb[r] = flip ? -prog.eq_rhs[r] : prog.eq_rhs[r];
    head[r] = v + r;
    state[v + r] = State::Basic;
  }
  // Phase-1 cost: 1 on artificials. Reduced cost d_j = c_j - sum_r T_rj.
  for (std::size_t j = 0; j < n; ++j) {
    mpq_class d = j >= v ? 1 : 0;
    for (std::size_t r = 0; r < m; ++r) d -= tab[r][j];
    reduced[j] = d;
  }

  auto upper_of = [&](std::size_t j) -> const mpq_class* {
    return j < v ? &prog.upper_bounds[j] : nullptr;
  };

  ExactFeasibilityResult result;
  while (true) {
    std::size_t q = n;
    int dir = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (state[j] == State::Lower && sgn(reduced[j]) < 0) { q = j; dir = 1; break; }
      if (state[j] == State::Upper && sgn(reduced[j]) > 0) { q = j; dir = -1; break; }
    }
    if (q == n) break;

    std::size_t leave = m;
    bool leave_upper = false;
    mpq_class best;
    bool have_best = false;
    for (std::size_t r = 0; r < m; ++r) {
      const mpq_class rate = dir > 0 ? mpq_class(tab[r][q]) : mpq_class(-tab[r][q]);
      mpq_class step;
      bool to_upper = false;
      if (sgn(rate) > 0) {
        step = xb[r] / rate;
      } else if (sgn(rate) < 0) {
        const mpq_class* ub = upper_of(head[r]);
        if (ub == nullptr) continue;
        step = (*ub - xb[r]) / -rate;
        to_upper = true;
      } else {
        continue;
      }
      if (!have_best || step < best || (step == best && head[r] < head[leave])) {
        best = step;
        leave = r;
        leave_upper = to_upper;
        have_best = true;
      }
    }

    const mpq_class* ubq = upper_of(q);
    if (ubq != nullptr && (!have_best || *ubq <= best)) {
      for (std::size_t r = 0; r < m; ++r) xb[r] -= dir * *ubq * tab[r][q];
      state[q] = dir > 0 ? State::Upper : State::Lower;
      continue;
    }
    if (!have_best) throw NumericalError("exact phase 1 is unbounded");

    const mpq_class start = state[q] == State::Upper ? *ubq : mpq_class(0);
    for (std::size_t r = 0; r < m; ++r) xb[r] -= dir * best * tab[r][q];
    const std::size_t leaving = head[leave];
    state[leaving] = leaving >= v ? State::Dead : (leave_upper ? State::Upper : State::Lower);
    head[leave] = q;
    state[q] = State::Basic;
    xb[leave] = start + dir * best;

    const mpq_class pivot = tab[leave][q];
    for (std::size_t j = 0; j < n; ++j) tab[leave][j] /= pivot;
    for (std::size_t r = 0; r < m; ++r) {
      if (r == leave || sgn(tab[r][q]) == 0) continue;
      const mpq_class factor = tab[r][q];
      for (std::size_t j = 0; j < n; ++j) tab[r][j] -= factor * tab[leave][j];
    }
    const mpq_class zq = reduced[q];
    for (std::size_t j = 0; j < n; ++j) reduced[j] -= zq * tab[leave][j];
    ++result.pivots;
  }

  std::vector<mpq_class> x(v);
  for (std::size_t j = 0; j < v; ++j) {
    if (state[j] == State::Upper) x[j] = prog.upper_bounds[j];
  }
  mpq_class artificial = 0;
  for (std::size_t r = 0; r < m; ++r) {
    if (head[r] >= v) artificial += xb[r];
    else x[head[r]] = xb[r];
  }
  result.phase1_optimum = artificial;
  if (sgn(artificial) == 0) {
    result.status = FeasStatus::Feasible;
    result.witness = std::move(x);
  } else {
    result.status = FeasStatus::Infeasible;
  }
  return result;
}

}  // namespace bat::lp
