#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "uls/linalg.hpp"
#include "uls/solver.hpp"

namespace uls {

enum class EstimatorTag { kProposed, kRobustRegression };

std::string estimator_name(EstimatorTag tag);
EstimatorTag estimator_from_name(const std::string& name);

struct SweepSpec {
  Index d = 100;
  std::vector<Index> p_grid;
  std::vector<Index> m_grid;
  std::vector<double> perm_levels;  // k / p
  std::vector<double> noise_percents;
  Index n_perm = 10;
  Index n_noise = 50;
  std::vector<EstimatorTag> estimators = {EstimatorTag::kProposed};
  std::uint64_t base_seed = 1;
  double lambda_m = 0.0;
  LambdaScale lambda_scale = LambdaScale::kObjective;

  // Throws ConfigInvalid.
  void validate() const;
  std::size_t grid_size() const;
};

// Keys mirror the struct: d, p_grid, m_grid, perm_levels, noise_percents,
// n_perm, n_noise, estimators, base_seed, lambda_M, lambda_scale.
nlohmann::json sweep_spec_to_json(const SweepSpec& spec);
SweepSpec sweep_spec_from_json(const nlohmann::json& doc);

// Built-in figure presets: fig1a, fig1b, fig2-2pct, fig2-4pct.
std::vector<std::string> preset_names();
std::optional<SweepSpec> preset(const std::string& name);

struct SweepRecord {
  EstimatorTag estimator = EstimatorTag::kProposed;
  Index d = 0;
  Index p = 0;
  Index m = 0;
  Index k = 0;
  double perm_level = 0.0;
  double noise_percent = 0.0;
  double sigma = 0.0;
  Index n_trials = 0;
  Index n_failed = 0;
  double mean_norm_error = 0.0;
  double std_norm_error = 0.0;
  // Present only when timing was requested.
  std::optional<double> mean_wall_time_s;
  std::uint64_t base_seed = 0;
  // More than 10% of the trials failed.
  bool flagged = false;
  // Per-trial errors in (perm, noise) order; NaN marks a failed solve.
  std::vector<double> trial_errors;
};

// Fired once per (trial, estimator) with a hash of the exact inputs handed to
// that estimator.
struct TrialTrace {
  EstimatorTag estimator = EstimatorTag::kProposed;
  std::size_t grid_index = 0;
  std::size_t perm_index = 0;
  std::size_t noise_index = 0;
  std::uint64_t input_hash = 0;
};

struct SweepOptions {
  unsigned workers = 1;
  bool record_timing = false;
  // Called from worker threads; must be thread-safe.
  std::function<void(const TrialTrace&)> on_trial;
  // Human-readable progress and warnings.
  std::function<void(const std::string&)> progress;
};

// ||x_hat - x0|| / ||x0||. Throws ZeroReference for x0 == 0.
double normalized_error(const Vector& x_hat, const Vector& x0);

// round-half-to-even(level * p); a result of 1 becomes 2 (reported through
// `warn` when given).
Index permutation_count(double level, Index p,
                        const std::function<void(const std::string&)>& warn = {});

// One x0 for the whole sweep, one A per grid point, n_perm permutations times
// n_noise noise draws per point, every stream seeded from (base_seed,
// grid_index, perm_index, noise_index). All selected estimators see the same
// trial data. Output is independent of the worker count.
std::vector<SweepRecord> run_sweep(const SweepSpec& spec,
                                   const SweepOptions& options = {});

// run_sweep restricted to specs that select both estimators.
std::vector<SweepRecord> compare_estimators(const SweepSpec& spec,
                                            const SweepOptions& options = {});

std::string csv_header();
void emit_csv(const std::vector<SweepRecord>& records, std::ostream& out);
// Throws IoError.
void write_csv_file(const std::vector<SweepRecord>& records,
                    const std::string& path);

// Gnuplot script plotting mean +/- std from `csv_name` (relative path).
std::string gnuplot_script(const SweepSpec& spec, const std::string& title,
                           const std::string& csv_name);

}  // namespace uls
