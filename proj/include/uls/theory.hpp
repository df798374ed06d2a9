#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "uls/linalg.hpp"

namespace uls {

// Parameters of the error bound. c1, c2 and epsilon are existence constants
// with no known values; they default to 1 and are reported with every result.
struct BoundParams {
  double sigma = 0.0;
  double d = 0.0;
  double p = 0.0;
  double m = 0.0;
  double k = 0.0;
  double big_m = 0.0;
  double alpha = 1.0;
  double c1 = 1.0;
  double c2 = 1.0;
  double epsilon_const = 1.0;
};

struct BoundResult {
  // Error with fully known correspondences.
  double term_known_corr = 0.0;
  // Excess error from the unknown permutation.
  double term_excess = 0.0;
  double total = 0.0;
  // Reported raw; <= 0 means the guarantee is vacuous.
  double prob_lower = 0.0;
  bool k_condition_ok = false;
  bool alpha_condition_ok = false;
  bool vacuous() const { return prob_lower <= 0.0; }
};

// Natural log throughout. Throws DegenerateDenominator when
// sqrt(m + p) - sqrt(d) - alpha ln p <= 0, ConfigInvalid for p <= d,
// alpha <= 0, M < 0 or negative m / k.
BoundResult theorem1_bound(const BoundParams& params);

// Evaluates the bound at every m of the grid, in ascending m order.
std::vector<BoundResult> bound_monotonicity_scan(const BoundParams& params,
                                                 std::vector<Index> m_grid);

enum class LemmaId {
  kOperatorNorm,        // P(||X||_2 >= sqrt(r) + sqrt(c) + t) <= exp(-t^2/2)
  kSigmaMin,            // P(sigma_min(X) < sqrt(r) - sqrt(c) - t) <= 2 exp(-t^2/2)
  kPseudoInverseNoise,  // P(||X^+ g||^2 > s^2 (c + 2 sqrt(c t) + 2t) / smin^2) <= exp(-t)
  kLassoError,          // outlier-stage error against its high-probability bound
};

std::string lemma_name(LemmaId id);
LemmaId lemma_from_name(const std::string& name);

struct LemmaCheckSpec {
  LemmaId id = LemmaId::kOperatorNorm;
  // Shape of X for the random-matrix lemmas (rows >= cols).
  Index rows = 50;
  Index cols = 20;
  // Deviation t (L1, L3) or M (L4).
  double t_or_m = 1.0;
  double sigma = 1.0;
  // L3 only: use the identity instead of a Gaussian X.
  bool identity_design = false;
  // L4 model: A2 is p x d, the permutation displaces k entries.
  Index d = 20;
  Index p = 200;
  Index k = 5;
  double c1 = 1.0;
  double c2 = 1.0;
  double epsilon_const = 1.0;
  Index trials = 1000;
  std::uint64_t seed = 1;
  unsigned workers = 1;
};

struct LemmaReport {
  LemmaId id = LemmaId::kOperatorNorm;
  Index trials = 0;
  Index violations = 0;
  double violation_rate = 0.0;
  // Probability the lemma allows for its event (clamped to [0, 1]).
  double bound_probability = 0.0;
  // sqrt(b (1 - b) / trials) at the bound probability b.
  double binomial_sd = 0.0;
  bool within_three_sd() const {
    return violation_rate <= bound_probability + 3.0 * binomial_sd;
  }
};

// Trial i draws from derive_seed(seed, i), so the outcome is independent of
// the worker count.
LemmaReport lemma_empirical_check(const LemmaCheckSpec& spec);

std::string bound_csv_header();
std::string bound_csv_row(const BoundParams& params, const BoundResult& result);
std::string lemma_csv_header();
std::string lemma_csv_row(const LemmaCheckSpec& spec, const LemmaReport& report);

}  // namespace uls
