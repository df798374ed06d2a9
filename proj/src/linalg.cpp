#include "uls/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "uls/errors.hpp"

namespace uls {

void require_finite(const Matrix& a, const char* what) {
  if (!a.allFinite()) {
    throw ConfigInvalid(std::string(what) + " contains non-finite entries");
  }
}

void require_finite(const Vector& v, const char* what) {
  if (!v.allFinite()) {
    throw ConfigInvalid(std::string(what) + " contains non-finite entries");
  }
}

Matrix gaussian_matrix(Index rows, Index cols, Rng& rng) {
  if (rows < 1 || cols < 1) {
    throw DimensionMismatch("gaussian_matrix: sizes must be positive");
  }
  Matrix a(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) {
      a(i, j) = rng.normal();
    }
  }
  return a;
}

Vector gaussian_vector(Index n, Rng& rng) {
  Vector v(n);
  for (Index i = 0; i < n; ++i) {
    v[i] = rng.normal();
  }
  return v;
}

namespace {

void check_triangular_rank(const Matrix& qr_matrix, Index cols,
                           const char* who) {
  const Eigen::VectorXd diag = qr_matrix.topLeftCorner(cols, cols)
                                   .diagonal()
                                   .cwiseAbs();
  const double largest = diag.maxCoeff();
  const double smallest = diag.minCoeff();
  if (!(largest > 0.0) || smallest <= kRankTolerance * largest) {
    throw RankDeficient(std::string(who) + ": matrix is not full column rank");
  }
}

}  // namespace

LeastSquares::LeastSquares(const Matrix& a)
    : rows_(a.rows()), cols_(a.cols()) {
  if (a.rows() < a.cols() || a.cols() < 1) {
    throw DimensionMismatch("least squares needs rows >= cols >= 1");
  }
  qr_.compute(a);
  check_triangular_rank(qr_.matrixQR(), cols_, "qr_least_squares");
}

Vector LeastSquares::solve(const Vector& b) const {
  if (b.size() != rows_) {
    throw DimensionMismatch("qr_least_squares: rhs length mismatch");
  }
  return qr_.solve(b);
}

Vector qr_least_squares(const Matrix& a, const Vector& b) {
  return LeastSquares(a).solve(b);
}

OrthoProjectorPair OrthoProjectorPair::from_columns(const Matrix& a) {
  if (a.rows() < a.cols() || a.cols() < 1) {
    throw DimensionMismatch("projector_pair needs rows >= cols >= 1");
  }
  Eigen::HouseholderQR<Matrix> qr(a);
  check_triangular_rank(qr.matrixQR(), a.cols(), "projector_pair");
  Matrix q = qr.householderQ() * Matrix::Identity(a.rows(), a.cols());
  return OrthoProjectorPair(std::move(q));
}

Vector OrthoProjectorPair::range(const Vector& v) const {
  if (v.size() != q_.rows()) {
    throw DimensionMismatch("projector: vector length mismatch");
  }
  return q_ * (q_.transpose() * v);
}

Vector OrthoProjectorPair::complement(const Vector& v) const {
  return v - range(v);
}

namespace {

// One-sided Jacobi on the columns of `w` (square). On return the columns are
// mutually orthogonal and their norms are the singular values.
Vector jacobi_column_norms(Matrix w) {
  const Index n = w.cols();
  constexpr int kMaxSweeps = 100;
  constexpr double kOffTolerance = 1e-12;
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    double off_mass = 0.0;
    double frob2 = 0.0;
    for (Index i = 0; i < n; ++i) {
      frob2 += w.col(i).squaredNorm();
    }
    for (Index i = 0; i < n; ++i) {
      for (Index j = i + 1; j < n; ++j) {
        const double alpha = w.col(i).squaredNorm();
        const double beta = w.col(j).squaredNorm();
        const double gamma = w.col(i).dot(w.col(j));
        off_mass += 2.0 * gamma * gamma;
        if (gamma == 0.0 ||
            std::abs(gamma) <= 1e-300 + 1e-17 * std::sqrt(alpha * beta)) {
          continue;
        }
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) /
                         (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (Index r = 0; r < w.rows(); ++r) {
          const double wi = w(r, i);
          const double wj = w(r, j);
          w(r, i) = c * wi - s * wj;
          w(r, j) = s * wi + c * wj;
        }
      }
    }
    // off_mass was measured before this sweep's rotations.
    if (std::sqrt(off_mass) <= kOffTolerance * frob2) {
      Vector norms(n);
      for (Index i = 0; i < n; ++i) {
        norms[i] = w.col(i).norm();
      }
      return norms;
    }
  }
  throw NoConvergence("extreme_singular_values: Jacobi sweep budget exhausted");
}

}  // namespace

Vector singular_values(const Matrix& a) {
  if (a.rows() < a.cols() || a.cols() < 1) {
    throw DimensionMismatch("singular values need rows >= cols >= 1");
  }
  const Index n = a.cols();
  Matrix r;
  if (a.rows() == n) {
    r = a;
  } else {
    Eigen::HouseholderQR<Matrix> qr(a);
    r = qr.matrixQR().topRows(n).triangularView<Eigen::Upper>();
  }
  Vector s = jacobi_column_norms(std::move(r));
  std::sort(s.data(), s.data() + s.size(), std::greater<>());
  return s;
}

SingularValueRange extreme_singular_values(const Matrix& a) {
  const Vector s = singular_values(a);
  return {s[0], s[s.size() - 1]};
}

std::string dump_matrix(const Matrix& a) {
  std::ostringstream out;
  out.precision(17);
  for (Index i = 0; i < a.rows(); ++i) {
    for (Index j = 0; j < a.cols(); ++j) {
      if (j > 0) out << ' ';
      out << a(i, j);
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace uls
