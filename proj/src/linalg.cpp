#include "bat/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "bat/error.hpp"

namespace bat::linalg {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

}  // namespace

SymmetricEigen symmetric_eigen(const Eigen::MatrixXd& input, int max_iter) {
  const Eigen::Index n = input.rows();
  if (input.cols() != n) throw InvalidInput("symmetric_eigen needs a square matrix");
  if (!input.allFinite()) throw InvalidInput("symmetric_eigen needs finite entries");

  Eigen::MatrixXd a = input.selfadjointView<Eigen::Lower>();
  Eigen::VectorXd d(n);
  Eigen::VectorXd e = Eigen::VectorXd::Zero(n);  // e[i] couples i and i + 1

  // Householder reduction to tridiagonal form, A = Q T Q^T.
  std::vector<Eigen::VectorXd> reflectors(static_cast<std::size_t>(std::max<Eigen::Index>(n - 2, 0)));
  std::vector<double> betas(reflectors.size(), 0.0);
  for (Eigen::Index k = 0; k + 2 < n; ++k) {
    const Eigen::Index len = n - k - 1;
    Eigen::VectorXd x = a.col(k).tail(len);
    const double tail_norm = x.tail(len - 1).norm();
    if (tail_norm == 0.0) {
      e[k] = x[0];
      continue;
    }
    const double alpha = (x[0] >= 0.0 ? -1.0 : 1.0) * std::hypot(x[0], tail_norm);
    x[0] -= alpha;
    const double beta = 2.0 / x.squaredNorm();
    auto sub = a.bottomRightCorner(len, len);
    const Eigen::VectorXd p = beta * (sub * x);
    const Eigen::VectorXd w = p - (0.5 * beta * p.dot(x)) * x;
    sub.noalias() -= x * w.transpose();
    sub.noalias() -= w * x.transpose();
    e[k] = alpha;
    reflectors[static_cast<std::size_t>(k)] = std::move(x);
    betas[static_cast<std::size_t>(k)] = beta;
  }
  if (n >= 2) e[n - 2] = a(n - 1, n - 2);
  for (Eigen::Index i = 0; i < n; ++i) d[i] = a(i, i);

  Eigen::MatrixXd z = Eigen::MatrixXd::Identity(n, n);
  for (Eigen::Index k = n - 3; k >= 0; --k) {
    const double beta = betas[static_cast<std::size_t>(k)];
    if (beta == 0.0) continue;
    const Eigen::VectorXd& x = reflectors[static_cast<std::size_t>(k)];
    auto block = z.bottomRightCorner(n - k - 1, n - k - 1);
    const Eigen::RowVectorXd xt_block = x.transpose() * block;
    block.noalias() -= (beta * x) * xt_block;
  }

  // Implicit-shift QL on the tridiagonal matrix, rotating columns of z.
  // Off-diagonals are deflated against the largest |d| + |e| seen so far,
  // so entries next to zero eigenvalues still split.
  SymmetricEigen out;
  double scale = 0.0;
  for (Eigen::Index l = 0; l < n; ++l) {
    scale = std::max(scale, std::abs(d[l]) + std::abs(e[l]));
    int iter = 0;
    Eigen::Index m = l;
    do {
      for (m = l; m + 1 < n; ++m) {
        if (std::abs(e[m]) <= kEps * scale) break;
      }
      if (m == l) break;
      if (++iter > max_iter) throw NumericalError("QL eigen iteration did not converge");
      ++out.iterations;

      double g = (d[l + 1] - d[l]) / (2.0 * e[l]);
      double r = std::hypot(g, 1.0);
      g = d[m] - d[l] + e[l] / (g + std::copysign(r, g));
      double s = 1.0, c = 1.0, p = 0.0;
      bool split = false;
      for (Eigen::Index i = m - 1; i >= l; --i) {
        double f = s * e[i];
        const double b = c * e[i];
        r = std::hypot(f, g);
        e[i + 1] = r;
        if (r == 0.0) {
          // Underflow: the matrix splits here; restart the search.
          d[i + 1] -= p;
          e[m] = 0.0;
          split = true;
          break;
        }
        s = f / r;
        c = g / r;
        g = d[i + 1] - p;
        r = (d[i] - g) * s + 2.0 * c * b;
        p = s * r;
        d[i + 1] = g + p;
        g = c * r - b;

        auto zi = z.col(i);
        auto zi1 = z.col(i + 1);
        for (Eigen::Index k = 0; k < n; ++k) {
          f = zi1[k];
          zi1[k] = s * zi[k] + c * f;
          zi[k] = c * zi[k] - s * f;
        }
      }
      if (split) continue;
      d[l] -= p;
      e[l] = g;
      e[m] = 0.0;
    } while (m != l);
  }

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&d](Eigen::Index x, Eigen::Index y) { return d[x] > d[y]; });
  out.values.resize(n);
  out.vectors.resize(n, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    out.values[k] = d[order[static_cast<std::size_t>(k)]];
    out.vectors.col(k) = z.col(order[static_cast<std::size_t>(k)]);
  }
  return out;
}

Eigen::VectorXd singular_values(const Eigen::MatrixXd& m, int max_sweeps) {
  // Orthogonalize the shorter side's vectors.
  Eigen::MatrixXd x = m.cols() <= m.rows() ? m : Eigen::MatrixXd(m.transpose());
  const Eigen::Index cols = x.cols();
  const double tol = kEps * std::sqrt(static_cast<double>(x.rows()));

  Eigen::VectorXd norms2(cols);
  for (Eigen::Index j = 0; j < cols; ++j) norms2[j] = x.col(j).squaredNorm();

  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    bool rotated = false;
    for (Eigen::Index i = 0; i < cols - 1; ++i) {
      for (Eigen::Index j = i + 1; j < cols; ++j) {
        const double alpha = norms2[i];
        const double beta = norms2[j];
        if (alpha == 0.0 || beta == 0.0) continue;
        const double gamma = x.col(i).dot(x.col(j));
        if (std::abs(gamma) <= tol * std::sqrt(alpha * beta)) continue;
        rotated = true;

        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        auto xi = x.col(i);
        auto xj = x.col(j);
        for (Eigen::Index k = 0; k < x.rows(); ++k) {
          const double a = xi[k];
          const double b = xj[k];
          xi[k] = c * a - s * b;
          xj[k] = s * a + c * b;
        }
        norms2[i] = xi.squaredNorm();
        norms2[j] = xj.squaredNorm();
      }
    }
    if (!rotated) break;
    if (sweep + 1 == max_sweeps) throw NumericalError("one-sided Jacobi SVD did not converge");
  }

  std::vector<double> sigma(static_cast<std::size_t>(cols));
  for (Eigen::Index j = 0; j < cols; ++j) sigma[static_cast<std::size_t>(j)] = std::sqrt(norms2[j]);
  std::sort(sigma.begin(), sigma.end(), std::greater<double>());
  return Eigen::Map<Eigen::VectorXd>(sigma.data(), cols);
}

std::size_t numeric_rank(const Eigen::VectorXd& sigma, double rel_tol) {
  if (sigma.size() == 0 || sigma[0] <= 0.0) return 0;
  const double cutoff = rel_tol * sigma[0];
  std::size_t rank = 0;
  for (Eigen::Index i = 0; i < sigma.size(); ++i) {
    if (sigma[i] > cutoff) ++rank;
  }
  return rank;
}

}  // namespace bat::linalg
