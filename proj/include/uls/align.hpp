#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "uls/image.hpp"
#include "uls/linalg.hpp"
#include "uls/model.hpp"
#include "uls/rng.hpp"
#include "uls/solver.hpp"

namespace uls {

// First d 2-D DCT frequency pairs (u, v): u + v ascending, then u ascending.
// u indexes rows, v columns.
std::vector<std::pair<Index, Index>> dct_frequencies(Index d);

// d <= min(64, height * width / 4). Throws ConfigInvalid.
void check_basis_size(Index height, Index width, Index d);

// Rows of the orthonormal 2-D DCT-II basis at the given pixels (index
// r * width + c). Throws IndexOutOfRange.
Matrix dct_basis_rows(Index height, Index width, Index d,
                      const std::vector<Index>& pixels);

struct DctMotionModel {
  Index height = 0;
  Index width = 0;
  Index d = 0;
  Vector theta1;  // column (x) displacement
  Vector theta2;  // row (y) displacement

  void validate() const;
};

struct DisplacementField {
  Vector u1;  // column displacement per pixel
  Vector u2;  // row displacement per pixel
};

DisplacementField synth_motion(const DctMotionModel& model);

struct KeypointSet {
  Index height = 0;
  Index width = 0;
  // S1: correspondences that may be mismatched among themselves.
  std::vector<Index> s1_pixels;
  Vector s1_du;
  Vector s1_dv;
  // S2: trusted correspondences.
  std::vector<Index> s2_pixels;
  Vector s2_du;
  Vector s2_dv;
  double noise_sigma = 0.0;

  // Throws ConfigInvalid on overlapping sets or bad indices/lengths.
  void validate() const;
};

struct SimulatedKeypoints {
  KeypointSet keys;
  // Permutations applied to du and dv (the same one unless independent).
  SparsePermutation perm_u = SparsePermutation::identity(0);
  SparsePermutation perm_v = SparsePermutation::identity(0);
};

// Draws p + m distinct pixels (the first p form S1). By default one k-sparse
// permutation scrambles the (du, dv) pairs of S1; `independent_permutations`
// draws a separate one per coordinate.
SimulatedKeypoints simulate_keypoints(const DctMotionModel& model, Index p,
                                      Index m, Index k, double noise_sigma,
                                      Rng& rng,
                                      bool independent_permutations = false);

// CSV with header set,row,col,du,dv. Both throw IoError; reading also throws
// ConfigInvalid on malformed rows.
void write_keypoints_csv(const KeypointSet& keys, const std::string& path);
KeypointSet read_keypoints_csv(const std::string& path, Index height,
                               Index width, double noise_sigma);

enum class MotionMode {
  kC1,  // S1 only, through the estimator
  kC2,  // S2 only, minimum-norm least squares
  kC3,  // S1 and S2, through the estimator
};

std::string motion_mode_name(MotionMode mode);

DctMotionModel estimate_motion(const KeypointSet& keys, Index d,
                               const EstimatorConfig& cfg, MotionMode mode);

// Backward bilinear warp: out(r, c) = img(r - u2, c - u1), coordinates
// clamped to the image.
Image warp_image(const Image& img, const DisplacementField& field);

// sum (a - b)^2 / sum a^2. Throws ZeroReference for an all-zero a.
double nmse(const Image& a, const Image& b);

struct AlignDemoConfig {
  Index height = 64;
  Index width = 64;
  Index d = 10;
  Index p = 179;
  Index m = 8;
  // About half of S1 mismatched; the trusted set only matters once the
  // outliers are dense enough to bias C1.
  Index k = 90;
  double noise_sigma = 0.05;   // pixels
  double motion_rms = 2.0;     // pixels, RMS of the true field
  bool independent_permutations = false;
  std::uint64_t seed = 3;
  EstimatorConfig cfg = default_config();

  static EstimatorConfig default_config() {
    EstimatorConfig c;
    c.scale = LambdaScale::kObjective;
    return c;
  }
};

struct AlignDemoResult {
  Image base;
  Image truth;
  Image c1;
  Image c2;
  Image c3;
  double nmse_c1 = 0.0;
  double nmse_c2 = 0.0;
  double nmse_c3 = 0.0;
  DctMotionModel true_model;
};

AlignDemoResult run_align_demo(const AlignDemoConfig& config,
                               const Image* base = nullptr);

}  // namespace uls
