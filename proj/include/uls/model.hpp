#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "uls/linalg.hpp"
#include "uls/rng.hpp"

namespace uls {

// Permutation of {0..p-1} that displaces a small set of indices.
// Acting on a vector: (P v)[i] = v[mapping[i]].
class SparsePermutation {
 public:
  static SparsePermutation identity(Index size);

  // Validates bijectivity and that at most `budget` indices move.
  static SparsePermutation from_mapping(std::vector<Index> mapping,
                                        Index budget);

  Index size() const { return static_cast<Index>(mapping_.size()); }
  const std::vector<Index>& mapping() const { return mapping_; }
  // Sorted displaced indices.
  const std::vector<Index>& support() const { return support_; }

  Vector apply(const Vector& v) const;
  Vector apply_inverse(const Vector& v) const;

  bool operator==(const SparsePermutation&) const = default;

 private:
  SparsePermutation() = default;
  std::vector<Index> mapping_;
  std::vector<Index> support_;
};

enum class SparsityMode {
  kExact,        // exactly k indices displaced
  kUniformUpTo,  // displaced count uniform over {0, 2, 3, ..., k}
};

// Uniform k-subset, permuted by a uniform derangement (rejection sampled).
// Throws InvalidSparsity for k == 1, k < 0 or k > p.
SparsePermutation sample_sparse_permutation(Index p, Index k, Rng& rng,
                                            SparsityMode mode =
                                                SparsityMode::kExact);

struct ProblemConfig {
  Index d = 0;
  Index m = 0;
  Index p = 0;
  Index k = 0;
  // Exactly one of these is set.
  std::optional<double> noise_percent;
  std::optional<double> sigma;
  std::uint64_t seed = 0;
  SparsityMode sparsity_mode = SparsityMode::kExact;

  // Throws ConfigInvalid (m >= d, p <= d, bad noise) or InvalidSparsity.
  void validate() const;
};

struct ProblemInstance {
  Index d = 0;
  Index m = 0;
  Index p = 0;
  Index k = 0;
  std::uint64_t seed = 0;
  double sigma = 0.0;
  Matrix a1;  // m x d
  Matrix a2;  // p x d
  // Empty when the instance was loaded without ground truth.
  Vector x0;
  SparsePermutation perm = SparsePermutation::identity(0);
  Vector y1;
  Vector y2;
  Vector z0;
  Vector eps1;
  Vector eps2;

  Index n() const { return m + p; }
  bool has_ground_truth() const { return x0.size() == d; }
  // [A1; A2]
  Matrix stacked() const;
  // [y1; y2]
  Vector observations() const;
};

// P2 (A2 x0) - A2 x0.
Vector permutation_error_vector(const SparsePermutation& perm, const Matrix& a2,
                                const Vector& x0);

// (percent / 100) * mean |A x0| over all rows of A.
double noise_sigma_from_percent(double noise_percent, const Matrix& a,
                                const Vector& x0);

// Builds y1, y2, z0 and draws the noise for fixed A1, A2, x0 and permutation.
ProblemInstance assemble_instance(Matrix a1, Matrix a2, Vector x0,
                                  SparsePermutation perm, double sigma,
                                  Rng& rng);

// Draw order: A ((m+p) x d, row-major, A1 rows first), x0, permutation,
// eps1, eps2. x0 is drawn standard normal unless supplied.
ProblemInstance generate_instance(const ProblemConfig& config, Rng& rng,
                                  const std::optional<Vector>& x0 =
                                      std::nullopt);
ProblemInstance generate_instance(const ProblemConfig& config);

// Field names: d, m, p, k, sigma, seed, a1, a2, x0, mapping, y1, y2.
// Matrices are arrays of rows. x0 and mapping are optional on read.
nlohmann::json instance_to_json(const ProblemInstance& inst);
ProblemInstance instance_from_json(const nlohmann::json& doc);

}  // namespace uls
