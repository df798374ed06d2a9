#pragma once

#include <optional>

#include <nlohmann/json.hpp>

#include "uls/linalg.hpp"
#include "uls/model.hpp"

namespace uls {

// How the configured lambda enters the objective
//   ||y1 - A1 x||^2 + ||y2 - A2 x - z||^2 + lambda1 ||z||_1.
enum class LambdaScale {
  // lambda weighs ||e||_1 with e = z / sqrt(p); lambda1 = sqrt(p) * lambda.
  kReparameterized,
  // lambda is lambda1 itself.
  kObjective,
};

// Subspace whose complement drives the outlier (LASSO) stage.
enum class Projection {
  // Column space of the stacked design [A1; A2]. Exact for every m.
  kFullDesign,
  // Column space of A2 only. Identical to kFullDesign when m == 0; for m > 0
  // the x-stage then no longer sees the outlier stage's coupling to y1.
  kSensingBlockOnly,
};

struct LambdaMode {
  enum class Kind { kTheorem, kExplicit, kFloor };
  Kind kind = Kind::kTheorem;
  // M for kTheorem, lambda for kExplicit, unused for kFloor.
  double value = 0.0;

  static LambdaMode theorem(double big_m) { return {Kind::kTheorem, big_m}; }
  static LambdaMode explicit_value(double lambda) {
    return {Kind::kExplicit, lambda};
  }
  static LambdaMode floor() { return {Kind::kFloor, 0.0}; }
};

struct EstimatorConfig {
  LambdaMode lambda = LambdaMode::theorem(0.0);
  LambdaScale scale = LambdaScale::kReparameterized;
  Projection projection = Projection::kFullDesign;
  double fista_tol = 1e-10;
  int fista_max_iter = 20000;
  double admm_rho = 1.0;
  double admm_tol = 1e-8;
  int admm_max_iter = 5000;
  double zero_sigma_lambda_floor = 1e-8;

  // Throws ConfigInvalid.
  void validate() const;
};

struct EstimateResult {
  Vector x_hat;
  Vector z_hat;  // sqrt(p) * e_hat
  Vector e_hat;
  int iterations = 0;
  // Unscaled objective with lambda1 = sqrt(p) * lambda_used.
  double final_objective = 0.0;
  // LASSO subgradient violation in the e parameterization.
  double kkt_residual = 0.0;
  // Reparameterized lambda (weight on ||e||_1).
  double lambda_used = 0.0;
  bool converged = true;
};

nlohmann::json result_to_json(const EstimateResult& result);

// sign(v_i) * max(|v_i| - t, 0)
Vector soft_threshold(const Vector& v, double t);

// 4 (1 + M) sigma sqrt(2 ln p / p). p is real so the formula can be probed
// off the integers.
double lambda_from_theorem(double sigma, double p, double big_m);

// Reparameterized lambda for a problem with p outlier coordinates. A zero
// theorem value (sigma == 0) falls back to floor * ||y2||_inf.
double resolve_lambda(const EstimatorConfig& cfg, double sigma, Index p,
                      const Vector& y2);

// ||y1 - A1 x||^2 + ||y2 - A2 x - z||^2 + lambda1 ||z||_1
double joint_objective(const Matrix& a1, const Matrix& a2, const Vector& y1,
                       const Vector& y2, const Vector& x, const Vector& z,
                       double lambda1);

// LASSO certificate threshold for a run to count as converged.
inline double kkt_target(double lambda) { return 1e-6 * (1.0 + lambda); }

struct LassoResult {
  Vector e;
  int iterations = 0;
  double objective = 0.0;
  double kkt_residual = 0.0;
  bool converged = false;
};

// Minimizes (1/p) ||H-perp (y - sqrt(p) J e)||_2^2 + lambda ||e||_1, where the
// projector acts on length-n vectors, J embeds e into the last
// p = n - outlier_offset coordinates and H-perp is `proj.complement`.
// Pass outlier_offset = 0 with the A2 projector for the plain form.
//
// Monotone FISTA with step 1/2 (the smooth gradient is 2-Lipschitz), run
// along a geometric lambda continuation, with an active-set finishing step
// that solves the stationarity system on the current sign pattern whenever
// the iterate looks settled. Throws NoConvergence when the budget runs out
// with a KKT residual above 1e-4 (1 + lambda); below that the result is
// returned with converged = false.
LassoResult lasso_projected(const OrthoProjectorPair& proj, const Vector& y,
                            Index outlier_offset, double lambda,
                            const EstimatorConfig& cfg);

// LASSO for the outlier vector, then x = A^+ (y - [0; z]). The factorizations
// are built once per design so one estimator can serve many trials.
class TwoStageEstimator {
 public:
  TwoStageEstimator(const Matrix& a1, const Matrix& a2, EstimatorConfig cfg);

  EstimateResult solve(const Vector& y1, const Vector& y2, double sigma) const;

 private:
  Matrix a1_;
  Matrix a2_;
  EstimatorConfig cfg_;
  LeastSquares stacked_;
  // Over [y1; y2] for kFullDesign, over y2 for kSensingBlockOnly.
  OrthoProjectorPair projector_;
};

EstimateResult estimate_two_stage(const ProblemInstance& inst,
                                  const EstimatorConfig& cfg);

// Exact block coordinate descent on the joint objective: least squares in x,
// soft threshold in z. Independent oracle for the two-stage path. Stops when
// the relative objective change drops below fista_tol and the iterates have
// stopped moving (1e-12 relative).
EstimateResult estimate_joint_altmin(
    const ProblemInstance& inst, const EstimatorConfig& cfg,
    const std::optional<Vector>& z_init = std::nullopt);

struct L1RegressionResult {
  Vector x;
  double objective = 0.0;
  int iterations = 0;
  // Vertex optimality certificate from the crossover step.
  bool certified = false;
  bool converged = false;
};

// min_x ||y - A x||_1 by ADMM on r = A x - y (cached QR for the x-update,
// soft threshold at 1/rho for r, scaled dual ascent), followed by a
// crossover to the vertex interpolating the d smallest residuals.
class L1Regression {
 public:
  L1Regression(const Matrix& a, EstimatorConfig cfg);

  // Throws NoConvergence when neither the ADMM residuals nor the vertex
  // certificate are satisfied.
  L1RegressionResult solve(const Vector& y) const;

 private:
  Matrix a_;
  EstimatorConfig cfg_;
  LeastSquares ls_;
};

Vector robust_regression(const Matrix& a, const Vector& y,
                         const EstimatorConfig& cfg);

}  // namespace uls
