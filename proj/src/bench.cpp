#include "uls/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "uls/errors.hpp"
#include "uls/format.hpp"
#include "uls/model.hpp"
#include "uls/parallel.hpp"
#include "uls/rng.hpp"

namespace uls {

std::string estimator_name(EstimatorTag tag) {
  return tag == EstimatorTag::kProposed ? "proposed" : "robust_regression";
}

EstimatorTag estimator_from_name(const std::string& name) {
  if (name == "proposed") return EstimatorTag::kProposed;
  if (name == "robust_regression") return EstimatorTag::kRobustRegression;
  throw ConfigInvalid("unknown estimator '" + name + "'");
}

void SweepSpec::validate() const {
  if (p_grid.empty() || m_grid.empty() || perm_levels.empty() ||
      noise_percents.empty() || estimators.empty()) {
    throw ConfigInvalid("sweep: every grid must be non-empty");
  }
  if (n_perm < 1 || n_noise < 1) {
    throw ConfigInvalid("sweep: n_perm and n_noise must be >= 1");
  }
  if (d < 1) {
    throw ConfigInvalid("sweep: d must be positive");
  }
  for (const Index p : p_grid) {
    if (p <= d) throw ConfigInvalid("sweep: assumption p > d violated");
  }
  for (const Index m : m_grid) {
    if (m < 0 || m >= d) throw ConfigInvalid("sweep: assumption m < d violated");
  }
  for (const double level : perm_levels) {
    if (!(level >= 0.0 && level <= 1.0)) {
      throw ConfigInvalid("sweep: permutation levels must lie in [0, 1]");
    }
  }
  for (const double noise : noise_percents) {
    if (!(noise >= 0.0)) throw ConfigInvalid("sweep: noise must be >= 0");
  }
  if (!(lambda_m >= 0.0)) throw ConfigInvalid("sweep: lambda M must be >= 0");
}

std::size_t SweepSpec::grid_size() const {
  return p_grid.size() * m_grid.size() * perm_levels.size() *
         noise_percents.size();
}

nlohmann::json sweep_spec_to_json(const SweepSpec& s) {
  nlohmann::json doc;
  doc["d"] = s.d;
  doc["p_grid"] = s.p_grid;
  doc["m_grid"] = s.m_grid;
  doc["perm_levels"] = s.perm_levels;
  doc["noise_percents"] = s.noise_percents;
  doc["n_perm"] = s.n_perm;
  doc["n_noise"] = s.n_noise;
  std::vector<std::string> names;
  for (const auto tag : s.estimators) names.push_back(estimator_name(tag));
  doc["estimators"] = names;
  doc["base_seed"] = s.base_seed;
  doc["lambda_M"] = s.lambda_m;
  doc["lambda_scale"] =
      s.lambda_scale == LambdaScale::kObjective ? "objective" : "reparameterized";
  return doc;
}

SweepSpec sweep_spec_from_json(const nlohmann::json& doc) {
  try {
    SweepSpec s;
    s.d = doc.at("d").get<Index>();
    s.p_grid = doc.at("p_grid").get<std::vector<Index>>();
    s.m_grid = doc.at("m_grid").get<std::vector<Index>>();
    s.perm_levels = doc.at("perm_levels").get<std::vector<double>>();
    s.noise_percents = doc.at("noise_percents").get<std::vector<double>>();
    s.n_perm = doc.value("n_perm", Index{10});
    s.n_noise = doc.value("n_noise", Index{50});
    if (doc.contains("estimators")) {
      s.estimators.clear();
      for (const auto& name : doc.at("estimators")) {
        s.estimators.push_back(estimator_from_name(name.get<std::string>()));
      }
    }
    s.base_seed = doc.value("base_seed", std::uint64_t{1});
    s.lambda_m = doc.value("lambda_M", 0.0);
    const std::string scale = doc.value("lambda_scale", std::string("objective"));
    if (scale == "objective") {
      s.lambda_scale = LambdaScale::kObjective;
    } else if (scale == "reparameterized") {
      s.lambda_scale = LambdaScale::kReparameterized;
    } else {
      throw ConfigInvalid("sweep: unknown lambda_scale '" + scale + "'");
    }
    for (const auto& [key, value] : doc.items()) {
      static const char* kKnown[] = {"d",          "p_grid",         "m_grid",
                                     "perm_levels", "noise_percents", "n_perm",
                                     "n_noise",     "estimators",     "base_seed",
                                     "lambda_M",    "lambda_scale"};
      if (std::none_of(std::begin(kKnown), std::end(kKnown),
                       [&](const char* k) { return key == k; })) {
        throw ConfigInvalid("sweep: unknown field '" + key + "'");
      }
    }
    s.validate();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigInvalid(std::string("sweep spec JSON: ") + e.what());
  }
}

std::vector<std::string> preset_names() {
  return {"fig1a", "fig1b", "fig2-2pct", "fig2-4pct"};
}

std::optional<SweepSpec> preset(const std::string& name) {
  SweepSpec s;
  s.d = 100;
  s.perm_levels = {0.1};
  s.noise_percents = {2.0};
  if (name == "fig1a") {
    s.p_grid = {110, 120, 130, 140, 150, 160, 170};
    s.m_grid = {0};
  } else if (name == "fig1b") {
    s.p_grid = {110, 120, 140};
    s.m_grid = {0, 10, 20, 30, 40};
  } else if (name == "fig2-2pct" || name == "fig2-4pct") {
    s.p_grid = {150};
    s.m_grid = {80};
    s.perm_levels = {0.1, 0.2, 0.3, 0.4};
    s.noise_percents = {name == "fig2-2pct" ? 2.0 : 4.0};
    s.estimators = {EstimatorTag::kProposed, EstimatorTag::kRobustRegression};
  } else {
    return std::nullopt;
  }
  return s;
}

double normalized_error(const Vector& x_hat, const Vector& x0) {
  if (x_hat.size() != x0.size()) {
    throw DimensionMismatch("normalized_error: length mismatch");
  }
  const double scale = x0.norm();
  if (scale == 0.0) {
    throw ZeroReference("normalized_error: reference vector is zero");
  }
  return (x_hat - x0).norm() / scale;
}

Index permutation_count(double level, Index p,
                        const std::function<void(const std::string&)>& warn) {
  // nearbyint rounds half to even in the default rounding mode.
  auto k = static_cast<Index>(std::nearbyint(level * static_cast<double>(p)));
  if (k == 1) {
    if (warn) {
      warn("permutation level " + format_double(level) + " at p = " +
           std::to_string(p) + " rounds to k = 1; using k = 2");
    }
    k = 2;
  }
  return std::min(k, p);
}

namespace {

// Stream identifiers for derive_seed.
enum Stream : std::uint64_t { kX0 = 1, kDesign = 2, kPerm = 3, kNoise = 4 };

std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t bytes) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < bytes; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t hash_inputs(std::uint64_t design_hash, const Vector& y) {
  return fnv1a(design_hash, y.data(),
               static_cast<std::size_t>(y.size()) * sizeof(double));
}

struct GridPoint {
  Index p, m, k;
  double level, noise;
};

std::vector<GridPoint> expand_grid(const SweepSpec& spec,
                                   const SweepOptions& options) {
  std::vector<GridPoint> grid;
  for (const Index p : spec.p_grid) {
    for (const Index m : spec.m_grid) {
      for (const double level : spec.perm_levels) {
        for (const double noise : spec.noise_percents) {
          grid.push_back(
              {p, m, permutation_count(level, p, options.progress), level, noise});
        }
      }
    }
  }
  return grid;
}

}  // namespace

std::vector<SweepRecord> run_sweep(const SweepSpec& spec,
                                   const SweepOptions& options) {
  spec.validate();
  const std::vector<GridPoint> grid = expand_grid(spec, options);
  Rng x0_rng(derive_seed(spec.base_seed, kX0));
  const Vector x0 = gaussian_vector(spec.d, x0_rng);

  EstimatorConfig cfg;
  cfg.lambda = LambdaMode::theorem(spec.lambda_m);
  cfg.scale = spec.lambda_scale;

  const auto n_trials = static_cast<std::size_t>(spec.n_perm * spec.n_noise);
  const std::size_t n_est = spec.estimators.size();
  std::vector<SweepRecord> records;

  for (std::size_t g = 0; g < grid.size(); ++g) {
    const GridPoint& pt = grid[g];
    Rng design_rng(derive_seed(spec.base_seed, kDesign, g));
    const Matrix a = gaussian_matrix(pt.m + pt.p, spec.d, design_rng);
    const Matrix a1 = a.topRows(pt.m);
    const Matrix a2 = a.bottomRows(pt.p);
    const Vector clean = a * x0;
    const Vector clean2 = clean.tail(pt.p);
    const double sigma = noise_sigma_from_percent(pt.noise, a, x0);
    const std::uint64_t design_hash =
        fnv1a(0xcbf29ce484222325ULL, a.data(),
              static_cast<std::size_t>(a.size()) * sizeof(double));

    std::optional<TwoStageEstimator> proposed;
    std::optional<L1Regression> robust;
    for (const auto tag : spec.estimators) {
      if (tag == EstimatorTag::kProposed) proposed.emplace(a1, a2, cfg);
      if (tag == EstimatorTag::kRobustRegression) robust.emplace(a, cfg);
    }

    std::vector<SparsePermutation> perms;
    perms.reserve(static_cast<std::size_t>(spec.n_perm));
    for (Index j = 0; j < spec.n_perm; ++j) {
      Rng perm_rng(derive_seed(spec.base_seed, kPerm, g, static_cast<std::uint64_t>(j)));
      perms.push_back(sample_sparse_permutation(pt.p, pt.k, perm_rng));
    }

    std::vector<double> errors(n_est * n_trials,
                               std::numeric_limits<double>::quiet_NaN());
    std::vector<double> seconds(n_est * n_trials, 0.0);
    parallel_for(n_trials, options.workers, [&](std::size_t t) {
      const auto j = t / static_cast<std::size_t>(spec.n_noise);
      const auto l = t % static_cast<std::size_t>(spec.n_noise);
      Rng noise_rng(derive_seed(spec.base_seed, kNoise, g, j, l));
      Vector y(pt.m + pt.p);
      y.head(pt.m) = clean.head(pt.m);
      y.tail(pt.p) = perms[j].apply(clean2);
      y += sigma * gaussian_vector(pt.m + pt.p, noise_rng);

      for (std::size_t e = 0; e < n_est; ++e) {
        const EstimatorTag tag = spec.estimators[e];
        if (options.on_trial) {
          options.on_trial({tag, g, j, l, hash_inputs(design_hash, y)});
        }
        const auto start = std::chrono::steady_clock::now();
        try {
          Vector x_hat;
          if (tag == EstimatorTag::kProposed) {
            x_hat = proposed->solve(y.head(pt.m), y.tail(pt.p), sigma).x_hat;
          } else {
            x_hat = robust->solve(y).x;
          }
          errors[e * n_trials + t] = normalized_error(x_hat, x0);
        } catch (const NoConvergence&) {
          // Left as NaN and counted below.
        }
        seconds[e * n_trials + t] = std::chrono::duration<double>(
                                        std::chrono::steady_clock::now() - start)
                                        .count();
      }
    });

    for (std::size_t e = 0; e < n_est; ++e) {
      SweepRecord rec;
      rec.estimator = spec.estimators[e];
      rec.d = spec.d;
      rec.p = pt.p;
      rec.m = pt.m;
      rec.k = pt.k;
      rec.perm_level = pt.level;
      rec.noise_percent = pt.noise;
      rec.sigma = sigma;
      rec.n_trials = static_cast<Index>(n_trials);
      rec.base_seed = spec.base_seed;
      rec.trial_errors.assign(errors.begin() + static_cast<std::ptrdiff_t>(e * n_trials),
                              errors.begin() + static_cast<std::ptrdiff_t>((e + 1) * n_trials));
      double sum = 0.0;
      double time_sum = 0.0;
      Index ok = 0;
      for (std::size_t t = 0; t < n_trials; ++t) {
        time_sum += seconds[e * n_trials + t];
        if (std::isnan(rec.trial_errors[t])) continue;
        sum += rec.trial_errors[t];
        ++ok;
      }
      rec.n_failed = rec.n_trials - ok;
      rec.mean_norm_error = ok > 0 ? sum / static_cast<double>(ok)
                                   : std::numeric_limits<double>::quiet_NaN();
      double sq = 0.0;
      for (const double err : rec.trial_errors) {
        if (!std::isnan(err)) sq += (err - rec.mean_norm_error) * (err - rec.mean_norm_error);
      }
      rec.std_norm_error = ok > 1 ? std::sqrt(sq / static_cast<double>(ok - 1)) : 0.0;
      if (options.record_timing) {
        rec.mean_wall_time_s = time_sum / static_cast<double>(n_trials);
      }
      rec.flagged = 10 * rec.n_failed > rec.n_trials;
      if (options.progress) {
        std::ostringstream line;
        line << "[" << (g + 1) << "/" << grid.size() << "] "
             << estimator_name(rec.estimator) << " p=" << rec.p << " m=" << rec.m
             << " k=" << rec.k << " noise=" << format_double(rec.noise_percent)
             << "% mean_err=" << format_double(rec.mean_norm_error)
             << " failed=" << rec.n_failed;
        if (rec.flagged) line << " WARNING: more than 10% of trials failed";
        options.progress(line.str());
      }
      records.push_back(std::move(rec));
    }
  }
  return records;
}

std::vector<SweepRecord> compare_estimators(const SweepSpec& spec,
                                            const SweepOptions& options) {
  const auto has = [&](EstimatorTag tag) {
    return std::find(spec.estimators.begin(), spec.estimators.end(), tag) !=
           spec.estimators.end();
  };
  if (!has(EstimatorTag::kProposed) || !has(EstimatorTag::kRobustRegression)) {
    throw ConfigInvalid("compare_estimators: spec must select both estimators");
  }
  return run_sweep(spec, options);
}

namespace {

std::string csv_field(const std::string& raw) {
  if (raw.find_first_of(",\"\r\n") == std::string::npos) return raw;
  std::string out = "\"";
  for (const char c : raw) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

}  // namespace

std::string csv_header() {
  return "estimator,d,p,m,k,perm_level,noise_percent,sigma,n_trials,n_failed,"
         "mean_norm_error,std_norm_error,mean_wall_time_s,base_seed";
}

void emit_csv(const std::vector<SweepRecord>& records, std::ostream& out) {
  out << csv_header() << '\n';
  for (const SweepRecord& r : records) {
    out << csv_field(estimator_name(r.estimator)) << ',' << r.d << ',' << r.p
        << ',' << r.m << ',' << r.k << ',' << format_double(r.perm_level) << ','
        << format_double(r.noise_percent) << ',' << format_double(r.sigma) << ','
        << r.n_trials << ',' << r.n_failed << ','
        << format_double(r.mean_norm_error) << ','
        << format_double(r.std_norm_error) << ','
        << (r.mean_wall_time_s ? format_double(*r.mean_wall_time_s) : "NA")
        << ',' << r.base_seed << '\n';
  }
}

void write_csv_file(const std::vector<SweepRecord>& records,
                    const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError("cannot open '" + path + "' for writing: " +
                  std::strerror(errno));
  }
  emit_csv(records, out);
  out.flush();
  if (!out) {
    throw IoError("write to '" + path + "' failed");
  }
}

namespace {

// CSV column numbers (1-based) as gnuplot sees them.
constexpr int kColEstimator = 1;
constexpr int kColP = 3;
constexpr int kColM = 4;
constexpr int kColLevel = 6;
constexpr int kColNoise = 7;
constexpr int kColMean = 11;
constexpr int kColStd = 12;

template <typename T>
std::string join_values(const std::vector<T>& values) {
  std::ostringstream out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i > 0) out << ' ';
    if constexpr (std::is_floating_point_v<T>) {
      out << format_double(values[i]);
    } else {
      out << values[i];
    }
  }
  return out.str();
}

}  // namespace

std::string gnuplot_script(const SweepSpec& spec, const std::string& title,
                           const std::string& csv_name) {
  int x_col = kColNoise;
  std::string x_label = "noise percent";
  if (spec.perm_levels.size() > 1) {
    x_col = kColLevel;
    x_label = "permutation level k/p";
  } else if (spec.m_grid.size() > 1) {
    x_col = kColM;
    x_label = "known correspondences m";
  } else if (spec.p_grid.size() > 1) {
    x_col = kColP;
    x_label = "measurements without correspondence p";
  }
  // Series split by p when p is not on the x axis, and by estimator.
  const bool split_p = x_col != kColP && spec.p_grid.size() > 1;

  std::ostringstream s;
  s << "# " << title << ": mean +/- std of the normalized reconstruction error\n"
    << "set datafile separator \",\"\n"
    << "set terminal pngcairo size 800,600\n"
    << "set output \"" << title << ".png\"\n"
    << "set title \"" << title << " (d = " << spec.d << ")\"\n"
    << "set xlabel \"" << x_label << "\"\n"
    << "set ylabel \"normalized reconstruction error\"\n"
    << "set key top right\n"
    << "set grid\n"
    << "file = \"" << csv_name << "\"\n"
    << "estimators = \"";
  for (std::size_t i = 0; i < spec.estimators.size(); ++i) {
    if (i > 0) s << ' ';
    s << estimator_name(spec.estimators[i]);
  }
  s << "\"\n";
  if (split_p) {
    s << "p_values = \"" << join_values(spec.p_grid) << "\"\n"
      << "plot for [est in estimators] for [pv in p_values] file every ::1 \\\n"
      << "    using ((strcol(" << kColEstimator << ") eq est && $" << kColP
      << " == real(pv)) ? $" << x_col << " : 1/0):" << kColMean << ":" << kColStd
      << " \\\n"
      << "    with yerrorlines title sprintf(\"%s, p = %s\", est, pv)\n";
  } else {
    s << "plot for [est in estimators] file every ::1 \\\n"
      << "    using ((strcol(" << kColEstimator << ") eq est) ? $" << x_col
      << " : 1/0):" << kColMean << ":" << kColStd << " \\\n"
      << "    with yerrorlines title est\n";
  }
  return s.str();
}

}  // namespace uls
