#include "uls/solver.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "uls/errors.hpp"

namespace uls {

void EstimatorConfig::validate() const {
  if (lambda.kind == LambdaMode::Kind::kTheorem && !(lambda.value >= 0.0)) {
    throw ConfigInvalid("theorem lambda needs M >= 0");
  }
  if (lambda.kind == LambdaMode::Kind::kExplicit && !(lambda.value > 0.0)) {
    throw ConfigInvalid("explicit lambda must be positive");
  }
  if (!(fista_tol > 0.0) || !(admm_tol > 0.0) || !(admm_rho > 0.0) ||
      !(zero_sigma_lambda_floor > 0.0)) {
    throw ConfigInvalid("solver tolerances and rho must be positive");
  }
  if (fista_max_iter < 1 || admm_max_iter < 1) {
    throw ConfigInvalid("iteration budgets must be at least 1");
  }
}

nlohmann::json result_to_json(const EstimateResult& result) {
  auto as_list = [](const Vector& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
  };
  nlohmann::json doc;
  doc["x_hat"] = as_list(result.x_hat);
  doc["z_hat"] = as_list(result.z_hat);
  doc["iterations"] = result.iterations;
  doc["final_objective"] = result.final_objective;
  doc["kkt_residual"] = result.kkt_residual;
  doc["lambda_used"] = result.lambda_used;
  doc["converged"] = result.converged;
  return doc;
}

Vector soft_threshold(const Vector& v, double t) {
  if (!(t >= 0.0)) {
    throw ConfigInvalid("soft_threshold: threshold must be nonnegative");
  }
  Vector out(v.size());
  for (Index i = 0; i < v.size(); ++i) {
    const double mag = std::abs(v[i]) - t;
    out[i] = mag > 0.0 ? std::copysign(mag, v[i]) : 0.0;
  }
  return out;
}

double lambda_from_theorem(double sigma, double p, double big_m) {
  if (!(p > 1.0)) {
    throw ConfigInvalid("lambda_from_theorem: p must exceed 1");
  }
  return 4.0 * (1.0 + big_m) * sigma * std::sqrt(2.0 * std::log(p) / p);
}

double resolve_lambda(const EstimatorConfig& cfg, double sigma, Index p,
                      const Vector& y2) {
  const double floor_value =
      cfg.zero_sigma_lambda_floor *
      (y2.size() > 0 && y2.cwiseAbs().maxCoeff() > 0.0
           ? y2.cwiseAbs().maxCoeff()
           : 1.0);
  double value = 0.0;
  switch (cfg.lambda.kind) {
    case LambdaMode::Kind::kTheorem:
      value = lambda_from_theorem(sigma, static_cast<double>(p),
                                  cfg.lambda.value);
      if (value <= 0.0) {
        value = floor_value;
      }
      break;
    case LambdaMode::Kind::kExplicit:
      value = cfg.lambda.value;
      break;
    case LambdaMode::Kind::kFloor:
      value = floor_value;
      break;
  }
  if (cfg.scale == LambdaScale::kObjective) {
    value /= std::sqrt(static_cast<double>(p));
  }
  return value;
}

double joint_objective(const Matrix& a1, const Matrix& a2, const Vector& y1,
                       const Vector& y2, const Vector& x, const Vector& z,
                       double lambda1) {
  double value = (y2 - a2 * x - z).squaredNorm() + lambda1 * z.lpNorm<1>();
  if (a1.rows() > 0) {
    value += (y1 - a1 * x).squaredNorm();
  }
  return value;
}

namespace {

double kkt_violation(const Vector& e, const Vector& grad, double lambda) {
  double worst = 0.0;
  for (Index i = 0; i < e.size(); ++i) {
    const double v = e[i] == 0.0
                         ? std::max(std::abs(grad[i]) - lambda, 0.0)
                         : std::abs(grad[i] + std::copysign(lambda, e[i]));
    worst = std::max(worst, v);
  }
  return worst;
}

// Smooth part f(e) = (1/p) ||H-perp (y - sqrt(p) J e)||^2 evaluated through
// the thin basis Q. With c = H-perp y the residual is
// c - sqrt(p) (J e - Q Q_tail^T e), and since it lies in range(H-perp) the
// gradient is -(2 / sqrt(p)) times its tail.
class ProjectedLasso {
 public:
  ProjectedLasso(const OrthoProjectorPair& proj, const Vector& y, Index offset)
      : q_(proj.basis()),
        n_(q_.rows()),
        p_(n_ - offset),
        sqrt_p_(std::sqrt(static_cast<double>(p_))),
        c_(proj.complement(y)) {}

  Index p() const { return p_; }

  double smooth(const Vector& e, Vector* grad) const {
    const auto q_tail = q_.bottomRows(p_);
    const Vector w = q_tail.transpose() * e;
    Vector resid = c_ + sqrt_p_ * (q_ * w);
    resid.tail(p_) -= sqrt_p_ * e;
    if (grad != nullptr) {
      *grad = (-2.0 / sqrt_p_) * resid.tail(p_);
    }
    return resid.squaredNorm() / static_cast<double>(p_);
  }

  double total(const Vector& e, double lambda) const {
    return smooth(e, nullptr) + lambda * e.lpNorm<1>();
  }

  // Solves the stationarity system on the sign pattern of `e`:
  //   2 G_SS e_S = (2 / sqrt(p)) b_S - lambda s,   G = I - Q_tail Q_tail^T,
  // and returns the candidate only if it keeps that sign pattern.
  std::optional<Vector> polish(const Vector& e, double lambda) const {
    std::vector<Index> support;
    for (Index i = 0; i < e.size(); ++i) {
      if (e[i] != 0.0) support.push_back(i);
    }
    const auto k = static_cast<Index>(support.size());
    if (k == 0 || k > n_ - q_.cols()) {
      return std::nullopt;
    }
    const auto q_tail = q_.bottomRows(p_);
    Matrix u(k, q_.cols());
    Vector rhs(k);
    for (Index j = 0; j < k; ++j) {
      const Index i = support[static_cast<std::size_t>(j)];
      u.row(j) = q_tail.row(i);
      rhs[j] = c_[n_ - p_ + i] / sqrt_p_ - 0.5 * std::copysign(lambda, e[i]);
    }
    const Matrix gram = Matrix::Identity(k, k) - u * u.transpose();
    const Eigen::LDLT<Matrix> ldlt(gram);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
      return std::nullopt;
    }
    const Vector sol = ldlt.solve(rhs);
    if (!sol.allFinite()) {
      return std::nullopt;
    }
    Vector out = Vector::Zero(e.size());
    for (Index j = 0; j < k; ++j) {
      const Index i = support[static_cast<std::size_t>(j)];
      if (sol[j] == 0.0 || std::signbit(sol[j]) != std::signbit(e[i])) {
        return std::nullopt;
      }
      out[i] = sol[j];
    }
    return out;
  }

 private:
  const Matrix& q_;
  Index n_;
  Index p_;
  double sqrt_p_;
  Vector c_;
};

struct StageOutcome {
  int iterations = 0;
  bool certified = false;
};

constexpr int kPolishInterval = 50;

// One continuation stage of monotone FISTA (Beck-Teboulle) at a fixed lambda.
StageOutcome run_stage(const ProjectedLasso& prob, Vector& e, double lambda,
                       double tol, int budget, bool require_certificate) {
  const double target = kkt_target(lambda);
  StageOutcome out;
  Vector x = e;
  Vector y = e;
  Vector grad;
  double fx = prob.total(x, lambda);
  double t = 1.0;

  auto certify = [&](Vector& candidate, double& f_candidate) {
    if (auto polished = prob.polish(candidate, lambda)) {
      const double f_pol = prob.total(*polished, lambda);
      if (f_pol <= f_candidate + 1e-14 * std::max(1.0, std::abs(f_candidate))) {
        Vector g;
        prob.smooth(*polished, &g);
        if (kkt_violation(*polished, g, lambda) <= target) {
          candidate = std::move(*polished);
          f_candidate = std::min(f_pol, f_candidate);
          return true;
        }
      }
    }
    Vector g;
    prob.smooth(candidate, &g);
    return kkt_violation(candidate, g, lambda) <= target;
  };

  for (int it = 1; it <= budget; ++it) {
    prob.smooth(y, &grad);
    const Vector z = soft_threshold(y - 0.5 * grad, 0.5 * lambda);
    const double fz = prob.total(z, lambda);
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    const bool accepted = fz <= fx;
    const Vector x_next = accepted ? z : x;
    y = x_next + (t / t_next) * (z - x_next) + ((t - 1.0) / t_next) * (x_next - x);
    const double f_prev = fx;
    x = x_next;
    fx = accepted ? fz : fx;
    t = t_next;
    assert(fx <= f_prev);
    out.iterations = it;

    const bool settled =
        accepted && std::abs(f_prev - fx) <=
                        tol * std::max(std::abs(fx),
                                       std::numeric_limits<double>::min());
    if (settled || it % kPolishInterval == 0) {
      if (certify(x, fx)) {
        out.certified = true;
        break;
      }
      if (settled) {
        if (!require_certificate) break;
        // Restart momentum from the current point.
        y = x;
        t = 1.0;
      }
    }
  }
  e = std::move(x);
  return out;
}

}  // namespace

LassoResult lasso_projected(const OrthoProjectorPair& proj, const Vector& y,
                            Index outlier_offset, double lambda,
                            const EstimatorConfig& cfg) {
  if (!(lambda >= 0.0)) {
    throw ConfigInvalid("lasso_projected: lambda must be nonnegative");
  }
  if (y.size() != proj.dimension() || outlier_offset < 0 ||
      outlier_offset >= y.size()) {
    throw DimensionMismatch("lasso_projected: dimension mismatch");
  }
  const ProjectedLasso prob(proj, y, outlier_offset);
  const Index p = prob.p();

  LassoResult out;
  Vector e = Vector::Zero(p);
  Vector grad;
  prob.smooth(e, &grad);
  const double lambda_max = grad.cwiseAbs().maxCoeff();

  if (lambda < lambda_max) {
    std::vector<double> stages;
    if (lambda > 0.0) {
      for (double l = 0.5 * lambda_max; l > lambda; l *= 0.5) {
        stages.push_back(l);
      }
    }
    stages.push_back(lambda);

    constexpr int kIntermediateBudget = 500;
    constexpr double kIntermediateTol = 1e-6;
    int remaining = cfg.fista_max_iter;
    for (std::size_t s = 0; s < stages.size() && remaining > 0; ++s) {
      const bool last = s + 1 == stages.size();
      const int budget = last ? remaining : std::min(remaining, kIntermediateBudget);
      const StageOutcome stage =
          run_stage(prob, e, stages[s], last ? cfg.fista_tol : kIntermediateTol,
                    budget, last);
      remaining -= stage.iterations;
      out.iterations += stage.iterations;
    }
  }

  out.objective = prob.smooth(e, &grad) + lambda * e.lpNorm<1>();
  out.kkt_residual = kkt_violation(e, grad, lambda);
  out.converged = out.kkt_residual <= kkt_target(lambda);
  if (!out.converged && out.kkt_residual > 1e-4 * (1.0 + lambda)) {
    throw NoConvergence("lasso_projected: budget exhausted, KKT residual " +
                        std::to_string(out.kkt_residual));
  }
  out.e = std::move(e);
  return out;
}

namespace {

Matrix stack_rows(const Matrix& a1, const Matrix& a2) {
  if (a1.rows() > 0 && a1.cols() != a2.cols()) {
    throw DimensionMismatch("A1 and A2 must have the same column count");
  }
  Matrix a(a1.rows() + a2.rows(), a2.cols());
  a.topRows(a1.rows()) = a1;
  a.bottomRows(a2.rows()) = a2;
  return a;
}

}  // namespace

TwoStageEstimator::TwoStageEstimator(const Matrix& a1, const Matrix& a2,
                                     EstimatorConfig cfg)
    : a1_(a1.rows() > 0 ? a1 : Matrix(0, a2.cols())),
      a2_(a2),
      cfg_(cfg),
      stacked_(stack_rows(a1_, a2_)),
      projector_(OrthoProjectorPair::from_columns(
          cfg.projection == Projection::kFullDesign ? stack_rows(a1_, a2_)
                                                    : a2_)) {
  cfg_.validate();
}

EstimateResult TwoStageEstimator::solve(const Vector& y1, const Vector& y2,
                                        double sigma) const {
  const Index m = a1_.rows();
  const Index p = a2_.rows();
  if (y1.size() != m || y2.size() != p) {
    throw DimensionMismatch("two-stage: observation length mismatch");
  }
  const double lambda = resolve_lambda(cfg_, sigma, p, y2);
  const double sqrt_p = std::sqrt(static_cast<double>(p));

  Vector y(m + p);
  y.head(m) = y1;
  y.tail(p) = y2;

  LassoResult lasso;
  Vector h;
  if (cfg_.projection == Projection::kFullDesign) {
    lasso = lasso_projected(projector_, y, m, lambda, cfg_);
    h = y;
    h.tail(p) -= sqrt_p * lasso.e;
  } else {
    lasso = lasso_projected(projector_, y2, 0, lambda, cfg_);
    h.resize(m + p);
    h.head(m) = y1;
    h.tail(p) = projector_.range(y2 - sqrt_p * lasso.e);
  }

  EstimateResult result;
  result.x_hat = stacked_.solve(h);
  result.e_hat = std::move(lasso.e);
  result.z_hat = sqrt_p * result.e_hat;
  result.iterations = lasso.iterations;
  result.kkt_residual = lasso.kkt_residual;
  result.lambda_used = lambda;
  result.converged = lasso.converged;
  result.final_objective = joint_objective(a1_, a2_, y1, y2, result.x_hat,
                                           result.z_hat, sqrt_p * lambda);
  return result;
}

EstimateResult estimate_two_stage(const ProblemInstance& inst,
                                  const EstimatorConfig& cfg) {
  return TwoStageEstimator(inst.a1, inst.a2, cfg)
      .solve(inst.y1, inst.y2, inst.sigma);
}

EstimateResult estimate_joint_altmin(const ProblemInstance& inst,
                                     const EstimatorConfig& cfg,
                                     const std::optional<Vector>& z_init) {
  cfg.validate();
  const Index m = inst.m;
  const Index p = inst.p;
  const Matrix a1 = m > 0 ? inst.a1 : Matrix(0, inst.d);
  const LeastSquares ls(stack_rows(a1, inst.a2));
  const double lambda = resolve_lambda(cfg, inst.sigma, p, inst.y2);
  const double sqrt_p = std::sqrt(static_cast<double>(p));
  const double lambda1 = sqrt_p * lambda;
  const Vector y = inst.observations();

  Vector z = z_init ? *z_init : Vector::Zero(p);
  if (z.size() != p) {
    throw DimensionMismatch("joint solver: z_init length mismatch");
  }
  auto x_given_z = [&](const Vector& zz) {
    Vector rhs = y;
    rhs.tail(p) -= zz;
    return ls.solve(rhs);
  };
  Vector x = x_given_z(z);
  double objective = joint_objective(a1, inst.a2, inst.y1, inst.y2, x, z, lambda1);

  EstimateResult result;
  bool settled = false;
  for (int it = 1; it <= cfg.fista_max_iter; ++it) {
    Vector z_next = soft_threshold(inst.y2 - inst.a2 * x, 0.5 * lambda1);
    Vector x_next = x_given_z(z_next);
    const double next =
        joint_objective(a1, inst.a2, inst.y1, inst.y2, x_next, z_next, lambda1);
    assert(next <= objective * (1.0 + 1e-12) + 1e-300);
    const double dz = (z_next - z).cwiseAbs().maxCoeff();
    const double dx = (x_next - x).cwiseAbs().maxCoeff();
    const double change = std::abs(objective - next);
    z = std::move(z_next);
    x = std::move(x_next);
    objective = next;
    result.iterations = it;
    const double z_scale = 1.0 + (p > 0 ? z.cwiseAbs().maxCoeff() : 0.0);
    const double x_scale = 1.0 + x.cwiseAbs().maxCoeff();
    if (change <= cfg.fista_tol * std::max(objective, 1e-300) &&
        dz <= 1e-12 * z_scale && dx <= 1e-12 * x_scale) {
      settled = true;
      break;
    }
  }

  // Reduced gradient in the e parameterization, with x optimal for z.
  const Vector e = z / sqrt_p;
  const Vector grad = (-2.0 / sqrt_p) * (inst.y2 - inst.a2 * x - z);
  result.kkt_residual = kkt_violation(e, grad, lambda);
  result.converged = settled || result.kkt_residual <= kkt_target(lambda);
  if (!result.converged && result.kkt_residual > 1e-4 * (1.0 + lambda)) {
    throw NoConvergence("joint solver: budget exhausted");
  }
  result.x_hat = std::move(x);
  result.z_hat = std::move(z);
  result.e_hat = e;
  result.lambda_used = lambda;
  result.final_objective = objective;
  return result;
}

L1Regression::L1Regression(const Matrix& a, EstimatorConfig cfg)
    : a_(a), cfg_(cfg), ls_(a) {
  cfg_.validate();
}

namespace {

constexpr int kCrossoverInterval = 100;

// Simplex-style descent over the vertices of the l1 regression LP. A vertex
// interpolates d linearly independent rows (the basis B). Moving off row j
// of B along sigma * A_B^{-1} e_j changes the objective with initial slope
//   1 + sum_{i not in B} (r_i != 0 ? -sign(r_i) g_i : |g_i|),  g = A delta,
// and the objective along the edge is convex piecewise linear, so the
// entering row is found by walking the sorted breakpoints r_i / g_i. The
// vertex is optimal when no edge has a negative initial slope.
struct Vertex {
  Vector x;
  double objective = 0.0;
  bool certified = false;
};

std::vector<Index> initial_basis(const Matrix& a, const Vector& y,
                                 const Vector& x_start) {
  const Index n = a.rows();
  const Index d = a.cols();
  const Vector resid = y - a * x_start;
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index i, Index j) {
    return std::abs(resid[i]) < std::abs(resid[j]);
  });

  std::vector<Index> basis(order.begin(), order.begin() + d);
  Matrix rows(d, d);
  for (Index j = 0; j < d; ++j) {
    rows.row(j) = a.row(basis[static_cast<std::size_t>(j)]);
  }
  Eigen::FullPivLU<Matrix> lu(rows);
  lu.setThreshold(1e-10);
  if (lu.rank() == d) {
    return basis;
  }
  // Dependent rows: collect greedily in residual order.
  basis.clear();
  rows.resize(0, d);
  for (const Index i : order) {
    Matrix trial(rows.rows() + 1, d);
    trial.topRows(rows.rows()) = rows;
    trial.row(rows.rows()) = a.row(i);
    Eigen::FullPivLU<Matrix> trial_lu(trial);
    trial_lu.setThreshold(1e-10);
    if (trial_lu.rank() == trial.rows()) {
      rows = std::move(trial);
      basis.push_back(i);
      if (static_cast<Index>(basis.size()) == d) break;
    }
  }
  if (static_cast<Index>(basis.size()) < d) {
    throw RankDeficient("robust_regression: design is not full column rank");
  }
  return basis;
}

Vertex vertex_descent(const Matrix& a, const Vector& y,
                      std::vector<Index> basis, int max_pivots) {
  const Index n = a.rows();
  const Index d = a.cols();
  const double zero_tol = 1e-12 * (1.0 + y.cwiseAbs().maxCoeff());
  constexpr double kSlopeTol = 1e-10;
  std::vector<bool> in_basis(static_cast<std::size_t>(n));
  Vertex v;

  for (int pivot = 0; pivot <= max_pivots; ++pivot) {
    Matrix rows(d, d);
    Vector rhs(d);
    std::fill(in_basis.begin(), in_basis.end(), false);
    for (Index j = 0; j < d; ++j) {
      const Index i = basis[static_cast<std::size_t>(j)];
      rows.row(j) = a.row(i);
      rhs[j] = y[i];
      in_basis[static_cast<std::size_t>(i)] = true;
    }
    const Eigen::PartialPivLU<Matrix> lu(rows);
    v.x = lu.solve(rhs);
    Vector r = y - a * v.x;
    for (const Index i : basis) r[i] = 0.0;
    v.objective = r.lpNorm<1>();

    // Column j of g_all is A A_B^{-1} e_j.
    const Matrix g_all = a * lu.inverse();
    Index best_j = -1;
    double best_sigma = 0.0;
    double best_slope = -kSlopeTol;
    for (Index j = 0; j < d; ++j) {
      double signed_part = 0.0;
      double zero_part = 0.0;
      for (Index i = 0; i < n; ++i) {
        if (in_basis[static_cast<std::size_t>(i)]) continue;
        if (std::abs(r[i]) <= zero_tol) {
          zero_part += std::abs(g_all(i, j));
        } else {
          signed_part -= std::copysign(1.0, r[i]) * g_all(i, j);
        }
      }
      for (const double sigma : {1.0, -1.0}) {
        const double slope = 1.0 + zero_part + sigma * signed_part;
        if (slope < best_slope) {
          best_slope = slope;
          best_j = j;
          best_sigma = sigma;
        }
      }
    }
    if (best_j < 0) {
      v.certified = true;
      return v;
    }

    std::vector<std::pair<double, Index>> breakpoints;
    for (Index i = 0; i < n; ++i) {
      if (in_basis[static_cast<std::size_t>(i)] || std::abs(r[i]) <= zero_tol) {
        continue;
      }
      const double g = best_sigma * g_all(i, best_j);
      if (g != 0.0 && r[i] / g > 0.0) {
        breakpoints.emplace_back(r[i] / g, i);
      }
    }
    std::sort(breakpoints.begin(), breakpoints.end());
    double slope = best_slope;
    Index entering = -1;
    for (const auto& [t, i] : breakpoints) {
      slope += 2.0 * std::abs(g_all(i, best_j));
      if (slope >= 0.0) {
        entering = i;
        break;
      }
    }
    if (entering < 0) {
      // Unbounded descent is impossible for a nonnegative objective.
      break;
    }
    basis[static_cast<std::size_t>(best_j)] = entering;
  }
  return v;
}

}  // namespace

L1RegressionResult L1Regression::solve(const Vector& y) const {
  const Index n = a_.rows();
  const Index d = a_.cols();
  if (y.size() != n) {
    throw DimensionMismatch("robust_regression: observation length mismatch");
  }
  const double rho = cfg_.admm_rho;
  const double tol = cfg_.admm_tol;

  Vector x = ls_.solve(y);
  Vector ax = a_ * x;
  Vector r = ax - y;
  Vector u = Vector::Zero(n);
  L1RegressionResult out;

  for (int it = 1; it <= cfg_.admm_max_iter; ++it) {
    x = ls_.solve(y + r - u);
    ax = a_ * x;
    const Vector r_old = r;
    r = soft_threshold(ax - y + u, 1.0 / rho);
    u += ax - r - y;
    out.iterations = it;

    const double primal = (ax - r - y).norm();
    const double dual = rho * (a_.transpose() * (r - r_old)).norm();
    const double eps_primal =
        std::sqrt(static_cast<double>(n)) * tol +
        tol * std::max({y.norm(), ax.norm(), r.norm()});
    const double eps_dual = std::sqrt(static_cast<double>(d)) * tol +
                            tol * rho * (a_.transpose() * u).norm();
    if (primal < eps_primal && dual < eps_dual) {
      break;
    }
    // Early exit once the nearest vertex is already optimal.
    if (it % kCrossoverInterval == 0) {
      Vertex probe = vertex_descent(a_, y, initial_basis(a_, y, x), 0);
      if (probe.certified) {
        out.x = std::move(probe.x);
        out.objective = probe.objective;
        out.certified = out.converged = true;
        return out;
      }
    }
  }

  const int max_pivots = static_cast<int>(10 * n);
  Vertex vertex = vertex_descent(a_, y, initial_basis(a_, y, x), max_pivots);
  out.x = std::move(vertex.x);
  out.objective = vertex.objective;
  out.certified = out.converged = vertex.certified;
  if (!out.converged) {
    throw NoConvergence("robust_regression: vertex descent did not terminate");
  }
  return out;
}

Vector robust_regression(const Matrix& a, const Vector& y,
                         const EstimatorConfig& cfg) {
  return L1Regression(a, cfg).solve(y).x;
}

}  // namespace uls
