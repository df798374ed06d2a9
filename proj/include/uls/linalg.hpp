#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>

#include "uls/rng.hpp"

namespace uls {

// Dense real storage. Eigen's default (column-major) layout is the documented
// in-memory format; text dumps and JSON are row-major.
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

// Throws ConfigInvalid if any entry is NaN or infinite.
void require_finite(const Matrix& a, const char* what);
void require_finite(const Vector& v, const char* what);

// Rows x cols matrix of i.i.d. N(0, 1) draws, filled in row-major order.
Matrix gaussian_matrix(Index rows, Index cols, Rng& rng);
Vector gaussian_vector(Index n, Rng& rng);

// Smallest |R_ii| must exceed this fraction of the largest.
inline constexpr double kRankTolerance = 1e-12;

// Householder QR of a tall matrix, cached for repeated least-squares solves
// against the same design.
class LeastSquares {
 public:
  explicit LeastSquares(const Matrix& a);

  // arg min_x ||A x - b||_2 (= A^+ b for full column rank A).
  Vector solve(const Vector& b) const;

  Index rows() const { return rows_; }
  Index cols() const { return cols_; }

 private:
  Index rows_;
  Index cols_;
  Eigen::HouseholderQR<Matrix> qr_;
};

Vector qr_least_squares(const Matrix& a, const Vector& b);

// H (range) and H-perp (complement) of the column space of a tall matrix,
// applied through a thin orthonormal basis Q. Neither projector is ever
// formed as a square matrix.
class OrthoProjectorPair {
 public:
  // Throws RankDeficient unless `a` has full column rank.
  static OrthoProjectorPair from_columns(const Matrix& a);

  // Q Q^T v
  Vector range(const Vector& v) const;
  // v - Q Q^T v
  Vector complement(const Vector& v) const;

  const Matrix& basis() const { return q_; }
  Index rank() const { return q_.cols(); }
  Index dimension() const { return q_.rows(); }

 private:
  explicit OrthoProjectorPair(Matrix q) : q_(std::move(q)) {}
  Matrix q_;
};

struct SingularValueRange {
  double max = 0.0;
  double min = 0.0;
};

// Largest and smallest singular values via QR reduction followed by one-sided
// (Hestenes) Jacobi on the triangular factor. Requires rows >= cols. Throws
// NoConvergence if 100 sweeps do not bring the off-diagonal Gram mass below
// 1e-12 of the squared Frobenius norm.
SingularValueRange extreme_singular_values(const Matrix& a);

// All singular values, descending. Same algorithm.
Vector singular_values(const Matrix& a);

// Row-major, space-separated, one row per line. Debugging aid.
std::string dump_matrix(const Matrix& a);

}  // namespace uls
