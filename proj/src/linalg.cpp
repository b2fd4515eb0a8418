#include "pilaw/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pilaw/error.hpp"

namespace pilaw::linalg {

namespace {

double off_diagonal_norm(const Matrix& a) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j)
      if (i != j) sum += a(i, j) * a(i, j);
  return std::sqrt(sum);
}

double frobenius(const Matrix& a) {
  double sum = 0.0;
  for (double v : a.data()) sum += v * v;
  return std::sqrt(sum);
}

}  // namespace

SymmetricEigen jacobi_eigen(const Matrix& symmetric, double tolerance, int max_sweeps) {
  if (symmetric.rows() != symmetric.cols()) {
    throw Error(ErrorCode::LengthMismatch, "jacobi_eigen needs a square matrix");
  }
  const std::size_t n = symmetric.rows();
  Matrix a = symmetric;
  // Symmetrize so tiny asymmetries from accumulation do not bias the rotations.
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) a(i, j) = a(j, i) = 0.5 * (a(i, j) + a(j, i));
  Matrix v = Matrix::identity(n);

  const double scale = std::max(1.0, frobenius(a));
  int sweep = 0;
  for (; sweep < max_sweeps && off_diagonal_norm(a) >= tolerance * scale; ++sweep) {
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = std::copysign(1.0, theta) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        a(p, q) = a(q, p) = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return a(x, x) > a(y, y); });

  SymmetricEigen out;
  out.sweeps = sweep;
  out.values.resize(n);
  out.vectors = Matrix(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t src = order[j];
    out.values[j] = a(src, src);
    std::size_t big = 0;
    for (std::size_t k = 1; k < n; ++k)
      if (std::abs(v(k, src)) > std::abs(v(big, src)) + 1e-14) big = k;
    const double sign = v(big, src) < 0.0 ? -1.0 : 1.0;
    for (std::size_t k = 0; k < n; ++k) out.vectors(k, j) = sign * v(k, src);
  }
  return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

Matrix orthonormal_rows(const Matrix& rows, double tolerance) {
  Matrix q = rows;
  for (std::size_t i = 0; i < q.rows(); ++i) {
    const double original = norm(rows.row(i));
    if (original == 0.0) throw Error(ErrorCode::DegenerateBasis, "reference basis contains a zero row");
    auto qi = q.row(i);
    for (std::size_t j = 0; j < i; ++j) {
      const double proj = dot(qi, q.row(j));
      auto qj = q.row(j);
      for (std::size_t c = 0; c < q.cols(); ++c) qi[c] -= proj * qj[c];
    }
    const double n = norm(qi);
    if (n <= tolerance * original) {
      throw Error(ErrorCode::DegenerateBasis,
                  "reference basis row " + std::to_string(i) + " is dependent on earlier rows");
    }
    for (double& x : qi) x /= n;
  }
  return q;
}

Matrix rref(Matrix m, double tolerance) {
  std::size_t lead_row = 0;
  for (std::size_t col = 0; col < m.cols() && lead_row < m.rows(); ++col) {
    std::size_t best = lead_row;
    for (std::size_t r = lead_row + 1; r < m.rows(); ++r)
      if (std::abs(m(r, col)) > std::abs(m(best, col))) best = r;
    if (std::abs(m(best, col)) <= tolerance) {
      for (std::size_t r = lead_row; r < m.rows(); ++r) m(r, col) = 0.0;
      continue;
    }
    if (best != lead_row)
      for (std::size_t c = 0; c < m.cols(); ++c) std::swap(m(best, c), m(lead_row, c));
    const double pivot = m(lead_row, col);
    for (std::size_t c = 0; c < m.cols(); ++c) m(lead_row, c) /= pivot;
    m(lead_row, col) = 1.0;
    for (std::size_t r = 0; r < m.rows(); ++r) {
      if (r == lead_row) continue;
      const double factor = m(r, col);
      if (factor == 0.0) continue;
      for (std::size_t c = 0; c < m.cols(); ++c) m(r, c) -= factor * m(lead_row, c);
      m(r, col) = 0.0;
    }
    ++lead_row;
  }
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c)
      if (std::abs(m(r, c)) <= tolerance) m(r, c) = 0.0;
  return m;
}

std::vector<double> solve(Matrix a, std::vector<double> b) {
  const std::size_t n = a.rows();
  if (a.cols() != n || b.size() != n) throw Error(ErrorCode::LengthMismatch, "solve needs a square system");
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t best = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(a(r, col)) > std::abs(a(best, col))) best = r;
    if (std::abs(a(best, col)) < 1e-300) throw Error(ErrorCode::RankDeficient, "singular system");
    if (best != col) {
      for (std::size_t c = 0; c < n; ++c) std::swap(a(best, c), a(col, c));
      std::swap(b[best], b[col]);
    }
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = a(r, col) / a(col, col);
      if (f == 0.0) continue;
      for (std::size_t c = col; c < n; ++c) a(r, c) -= f * a(col, c);
      b[r] -= f * b[col];
    }
  }
  std::vector<double> x(n);
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t c = i + 1; c < n; ++c) s -= a(i, c) * x[c];
    x[i] = s / a(i, i);
  }
  return x;
}

}  // namespace pilaw::linalg
