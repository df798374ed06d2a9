#include "uls/theory.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "uls/errors.hpp"
#include "uls/format.hpp"
#include "uls/model.hpp"
#include "uls/parallel.hpp"
#include "uls/rng.hpp"
#include "uls/solver.hpp"

namespace uls {

BoundResult theorem1_bound(const BoundParams& b) {
  if (!(b.p > b.d) || !(b.d > 0.0)) {
    throw ConfigInvalid("bound: need p > d > 0");
  }
  if (!(b.alpha > 0.0) || !(b.big_m >= 0.0) || !(b.m >= 0.0) || !(b.k >= 0.0) ||
      !(b.sigma >= 0.0)) {
    throw ConfigInvalid("bound: need alpha > 0 and nonnegative sigma, M, m, k");
  }
  if (!(b.c1 > 0.0) || !(b.c2 > 0.0) || !(b.epsilon_const > 0.0)) {
    throw ConfigInvalid("bound: constants c1, c2, epsilon must be positive");
  }
  const double log_p = std::log(b.p);
  const double n = b.m + b.p;
  const double denom = std::sqrt(n) - std::sqrt(b.d) - b.alpha * log_p;
  if (!(denom > 0.0)) {
    throw DegenerateDenominator(
        "bound: sqrt(m + p) - sqrt(d) - alpha ln p = " + format_double(denom) +
        " is not positive");
  }

  BoundResult r;
  r.term_known_corr =
      b.sigma *
      std::sqrt(b.d + 2.0 * std::sqrt(b.d * b.alpha * log_p) +
                2.0 * b.alpha * log_p) /
      denom;
  r.term_excess = 48.0 * (1.0 + b.big_m) * b.sigma / b.epsilon_const *
                  (std::sqrt(b.p) + std::sqrt(b.d) + log_p) / (denom * denom) *
                  (b.p / (b.p - b.d)) * std::sqrt(b.k * log_p);
  r.total = r.term_known_corr + r.term_excess;

  r.prob_lower = 1.0 - 2.0 * std::exp(-b.c2 * (b.p - b.d)) -
                 2.0 * std::pow(b.p, -b.big_m * b.big_m) -
                 std::exp(-log_p * log_p / 2.0) -
                 2.0 * std::exp(-b.alpha * b.alpha * log_p * log_p / 2.0) -
                 std::exp(-b.alpha * log_p);

  if (b.k == 0.0) {
    r.k_condition_ok = true;
  } else {
    const double log_ratio = std::log(b.p / b.k);
    r.k_condition_ok =
        log_ratio <= 0.0 || b.k <= b.c1 * (b.p - b.d) / log_ratio;
  }
  r.alpha_condition_ok = b.alpha * log_p < std::sqrt(n) - std::sqrt(b.d);
  return r;
}

std::vector<BoundResult> bound_monotonicity_scan(const BoundParams& params,
                                                 std::vector<Index> m_grid) {
  std::sort(m_grid.begin(), m_grid.end());
  std::vector<BoundResult> out;
  out.reserve(m_grid.size());
  for (const Index m : m_grid) {
    BoundParams at = params;
    at.m = static_cast<double>(m);
    out.push_back(theorem1_bound(at));
  }
  return out;
}

std::string lemma_name(LemmaId id) {
  switch (id) {
    case LemmaId::kOperatorNorm:
      return "L1_opnorm";
    case LemmaId::kSigmaMin:
      return "L1_sigmamin";
    case LemmaId::kPseudoInverseNoise:
      return "L3_pinv_noise";
    case LemmaId::kLassoError:
      return "L4_lasso_error";
  }
  return "unknown";
}

LemmaId lemma_from_name(const std::string& name) {
  for (const LemmaId id : {LemmaId::kOperatorNorm, LemmaId::kSigmaMin,
                           LemmaId::kPseudoInverseNoise, LemmaId::kLassoError}) {
    if (lemma_name(id) == name) return id;
  }
  throw ConfigInvalid("unknown lemma id '" + name + "'");
}

namespace {

double lemma_bound_probability(const LemmaCheckSpec& s) {
  const double t = s.t_or_m;
  switch (s.id) {
    case LemmaId::kOperatorNorm:
      return std::exp(-t * t / 2.0);
    case LemmaId::kSigmaMin:
      return 2.0 * std::exp(-t * t / 2.0);
    case LemmaId::kPseudoInverseNoise:
      return std::exp(-t);
    case LemmaId::kLassoError: {
      const double p = static_cast<double>(s.p);
      const double d = static_cast<double>(s.d);
      return 2.0 * std::exp(-s.c2 * (p - d)) + 2.0 * std::pow(p, -t * t);
    }
  }
  return 1.0;
}

bool random_matrix_violation(const LemmaCheckSpec& s, Rng& rng) {
  const double r = static_cast<double>(s.rows);
  const double c = static_cast<double>(s.cols);
  const double t = s.t_or_m;
  switch (s.id) {
    case LemmaId::kOperatorNorm: {
      const Matrix x = gaussian_matrix(s.rows, s.cols, rng);
      return extreme_singular_values(x).max >= std::sqrt(r) + std::sqrt(c) + t;
    }
    case LemmaId::kSigmaMin: {
      const Matrix x = gaussian_matrix(s.rows, s.cols, rng);
      return extreme_singular_values(x).min < std::sqrt(r) - std::sqrt(c) - t;
    }
    case LemmaId::kPseudoInverseNoise: {
      const Matrix x = s.identity_design ? Matrix::Identity(s.rows, s.cols)
                                         : gaussian_matrix(s.rows, s.cols, rng);
      const Vector g = s.sigma * gaussian_vector(s.rows, rng);
      const double smin = extreme_singular_values(x).min;
      const double lhs = qr_least_squares(x, g).squaredNorm();
      const double rhs = s.sigma * s.sigma *
                         (c + 2.0 * std::sqrt(c * t) + 2.0 * t) / (smin * smin);
      return lhs > rhs;
    }
    case LemmaId::kLassoError:
      break;
  }
  return false;
}

bool lasso_error_violation(const LemmaCheckSpec& s, Rng& rng) {
  const Index p = s.p;
  const double pd = static_cast<double>(p);
  const Matrix a2 = gaussian_matrix(p, s.d, rng);
  Vector x0 = gaussian_vector(s.d, rng);
  SparsePermutation perm = sample_sparse_permutation(p, s.k, rng);
  ProblemInstance inst = assemble_instance(Matrix(0, s.d), a2, std::move(x0),
                                           std::move(perm), s.sigma, rng);
  EstimatorConfig cfg;
  cfg.lambda = LambdaMode::theorem(s.t_or_m);
  const double lambda = resolve_lambda(cfg, s.sigma, p, inst.y2);
  const auto proj = OrthoProjectorPair::from_columns(a2);
  const LassoResult lasso = lasso_projected(proj, inst.y2, 0, lambda, cfg);
  const Vector e0 = inst.z0 / std::sqrt(pd);
  const double bound = 48.0 * (1.0 + s.t_or_m) * s.sigma *
                       (pd / (pd - static_cast<double>(s.d))) / s.epsilon_const *
                       std::sqrt(static_cast<double>(s.k) * std::log(pd) / pd);
  return (lasso.e - e0).norm() > bound;
}

}  // namespace

LemmaReport lemma_empirical_check(const LemmaCheckSpec& spec) {
  if (spec.trials < 1) {
    throw ConfigInvalid("lemma check: trials must be >= 1");
  }
  if (spec.id == LemmaId::kLassoError) {
    if (spec.p <= spec.d || spec.d < 1) {
      throw ConfigInvalid("lemma check: L4 needs p > d >= 1");
    }
  } else if (spec.rows < spec.cols || spec.cols < 1) {
    throw ConfigInvalid("lemma check: need rows >= cols >= 1");
  }
  if (!(spec.t_or_m > 0.0) && spec.id != LemmaId::kLassoError) {
    throw ConfigInvalid("lemma check: t must be positive");
  }

  std::vector<char> violated(static_cast<std::size_t>(spec.trials), 0);
  parallel_for(violated.size(), spec.workers, [&](std::size_t i) {
    Rng rng(derive_seed(spec.seed, i));
    violated[i] = spec.id == LemmaId::kLassoError
                      ? lasso_error_violation(spec, rng)
                      : random_matrix_violation(spec, rng);
  });

  LemmaReport report;
  report.id = spec.id;
  report.trials = spec.trials;
  report.violations = std::count(violated.begin(), violated.end(), 1);
  report.violation_rate = static_cast<double>(report.violations) /
                          static_cast<double>(report.trials);
  report.bound_probability =
      std::clamp(lemma_bound_probability(spec), 0.0, 1.0);
  report.binomial_sd =
      std::sqrt(report.bound_probability * (1.0 - report.bound_probability) /
                static_cast<double>(report.trials));
  return report;
}

std::string bound_csv_header() {
  return "sigma,d,p,m,k,M,alpha,c1,c2,epsilon,term1,term2,total,prob_lower,"
         "k_condition_ok,alpha_condition_ok,vacuous";
}

std::string bound_csv_row(const BoundParams& b, const BoundResult& r) {
  std::ostringstream out;
  for (const double v : {b.sigma, b.d, b.p, b.m, b.k, b.big_m, b.alpha, b.c1,
                         b.c2, b.epsilon_const, r.term_known_corr,
                         r.term_excess, r.total, r.prob_lower}) {
    out << format_double(v) << ',';
  }
  out << (r.k_condition_ok ? 1 : 0) << ',' << (r.alpha_condition_ok ? 1 : 0)
      << ',' << (r.vacuous() ? 1 : 0);
  return out.str();
}

std::string lemma_csv_header() {
  return "lemma,rows,cols,d,p,k,t_or_M,sigma,trials,violations,violation_rate,"
         "bound_probability,binomial_sd,within_3sd";
}

std::string lemma_csv_row(const LemmaCheckSpec& s, const LemmaReport& r) {
  std::ostringstream out;
  out << lemma_name(s.id) << ',' << s.rows << ',' << s.cols << ',' << s.d << ','
      << s.p << ',' << s.k << ',' << format_double(s.t_or_m) << ','
      << format_double(s.sigma) << ',' << r.trials << ',' << r.violations << ','
      << format_double(r.violation_rate) << ','
      << format_double(r.bound_probability) << ','
      << format_double(r.binomial_sd) << ',' << (r.within_three_sd() ? 1 : 0);
  return out.str();
}

}  // namespace uls
