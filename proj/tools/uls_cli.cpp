// uls_cli: generate instances, solve them, run sweeps, evaluate the error
// bound, check the concentration lemmas and run the alignment demo.
//
// Exit codes: 0 ok, 1 IO, 2 invalid input, 3 solver non-convergence.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>

#include "CLI11.hpp"

#include "uls/align.hpp"
#include "uls/bench.hpp"
#include "uls/errors.hpp"
#include "uls/format.hpp"
#include "uls/image.hpp"
#include "uls/model.hpp"
#include "uls/solver.hpp"
#include "uls/theory.hpp"

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kDefaultSeed = 1;

enum ExitCode { kOk = 0, kIo = 1, kInvalid = 2, kNoConvergence = 3 };

void log_seed(std::uint64_t seed) { std::cerr << "seed=" << seed << '\n'; }

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw uls::IoError("cannot open '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw uls::ConfigInvalid("'" + path + "': " + e.what());
  }
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw uls::IoError("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw uls::IoError("write to '" + path + "' failed");
}

// ---------------------------------------------------------------- gen

struct GenArgs {
  uls::Index d = 0, m = 0, p = 0, k = 0;
  double sigma = -1.0;
  double noise_percent = -1.0;
  std::uint64_t seed = kDefaultSeed;
  std::string sparsity = "exact";
  std::string out;
};

int cmd_gen(const GenArgs& a) {
  log_seed(a.seed);
  uls::ProblemConfig cfg;
  cfg.d = a.d;
  cfg.m = a.m;
  cfg.p = a.p;
  cfg.k = a.k;
  cfg.seed = a.seed;
  if (a.sigma >= 0.0) cfg.sigma = a.sigma;
  if (a.noise_percent >= 0.0) cfg.noise_percent = a.noise_percent;
  if (!cfg.sigma && !cfg.noise_percent) cfg.sigma = 0.0;
  cfg.sparsity_mode = a.sparsity == "uniform" ? uls::SparsityMode::kUniformUpTo
                                              : uls::SparsityMode::kExact;
  const uls::ProblemInstance inst = uls::generate_instance(cfg);
  write_text(a.out, uls::instance_to_json(inst).dump(1) + "\n");
  std::cout << "d=" << inst.d << " m=" << inst.m << " p=" << inst.p
            << " k=" << inst.k << " sigma=" << uls::format_double(inst.sigma)
            << " seed=" << inst.seed << '\n';
  return kOk;
}

// ---------------------------------------------------------------- solve

struct EstimatorArgs {
  std::string lambda_mode = "theorem";
  double lambda = 0.0;
  double big_m = 0.0;
  std::string lambda_scale = "reparameterized";
  std::string projection = "full";
};

uls::EstimatorConfig make_config(const EstimatorArgs& a) {
  uls::EstimatorConfig cfg;
  if (a.lambda_mode == "theorem") {
    cfg.lambda = uls::LambdaMode::theorem(a.big_m);
  } else if (a.lambda_mode == "explicit") {
    cfg.lambda = uls::LambdaMode::explicit_value(a.lambda);
  } else {
    cfg.lambda = uls::LambdaMode::floor();
  }
  cfg.scale = a.lambda_scale == "objective" ? uls::LambdaScale::kObjective
                                            : uls::LambdaScale::kReparameterized;
  cfg.projection = a.projection == "block" ? uls::Projection::kSensingBlockOnly
                                           : uls::Projection::kFullDesign;
  cfg.validate();
  return cfg;
}

void add_estimator_flags(CLI::App* app, EstimatorArgs& a) {
  app->add_option("--lambda-mode", a.lambda_mode, "theorem | explicit | floor")
      ->check(CLI::IsMember({"theorem", "explicit", "floor"}));
  app->add_option("--lambda", a.lambda, "lambda for --lambda-mode explicit");
  app->add_option("--big-m", a.big_m, "M in the theorem lambda");
  app->add_option("--lambda-scale", a.lambda_scale, "reparameterized | objective")
      ->check(CLI::IsMember({"reparameterized", "objective"}));
  app->add_option("--projection", a.projection, "full | block")
      ->check(CLI::IsMember({"full", "block"}));
}

struct SolveArgs {
  std::string instance;
  std::string estimator = "two-stage";
  std::string out;
  EstimatorArgs est;
};

uls::EstimateResult robust_as_estimate(const uls::ProblemInstance& inst,
                                       const uls::L1RegressionResult& rr) {
  uls::EstimateResult res;
  res.x_hat = rr.x;
  res.z_hat = inst.y2 - inst.a2 * rr.x;
  res.e_hat = res.z_hat / std::sqrt(static_cast<double>(inst.p));
  res.iterations = rr.iterations;
  res.final_objective = rr.objective;
  res.converged = rr.converged;
  return res;
}

int cmd_solve(const SolveArgs& a) {
  const uls::ProblemInstance inst = uls::instance_from_json(read_json(a.instance));
  log_seed(inst.seed);
  const uls::EstimatorConfig cfg = make_config(a.est);

  uls::EstimateResult res;
  try {
    if (a.estimator == "two-stage") {
      res = uls::estimate_two_stage(inst, cfg);
    } else if (a.estimator == "joint") {
      res = uls::estimate_joint_altmin(inst, cfg);
    } else {
      res = robust_as_estimate(inst, uls::L1Regression(inst.stacked(), cfg)
                                         .solve(inst.observations()));
    }
  } catch (const uls::NoConvergence& e) {
    nlohmann::json doc;
    doc["converged"] = false;
    doc["error"] = e.what();
    doc["estimator"] = a.estimator;
    doc["seed"] = inst.seed;
    write_text(a.out, doc.dump(1) + "\n");
    std::cout << "estimator=" << a.estimator << " converged=false\n";
    std::cerr << "error: " << e.what() << '\n';
    return kNoConvergence;
  }

  nlohmann::json doc = uls::result_to_json(res);
  doc["estimator"] = a.estimator;
  doc["seed"] = inst.seed;
  std::cout << "estimator=" << a.estimator
            << " converged=" << (res.converged ? "true" : "false")
            << " objective=" << uls::format_double(res.final_objective);
  if (inst.has_ground_truth()) {
    const double err = (res.x_hat - inst.x0).norm() / inst.x0.norm();
    doc["normalized_error"] = err;
    std::cout << " normalized_error=" << uls::format_double(err);
  }
  std::cout << '\n';
  write_text(a.out, doc.dump(1) + "\n");
  return res.converged ? kOk : kNoConvergence;
}

// ---------------------------------------------------------------- sweep

struct SweepArgs {
  std::string preset;
  std::string spec;
  std::uint64_t seed = kDefaultSeed;
  bool seed_given = false;
  unsigned workers = 1;
  std::string out;
  std::string plot;
  bool timing = false;
};

int cmd_sweep(const SweepArgs& a) {
  uls::SweepSpec spec;
  std::string title;
  if (!a.preset.empty()) {
    const auto found = uls::preset(a.preset);
    if (!found) throw uls::ConfigInvalid("unknown preset '" + a.preset + "'");
    spec = *found;
    title = a.preset;
  } else {
    spec = uls::sweep_spec_from_json(read_json(a.spec));
    title = fs::path(a.spec).stem().string();
  }
  if (a.seed_given || !a.preset.empty()) spec.base_seed = a.seed;
  log_seed(spec.base_seed);

  uls::SweepOptions opts;
  opts.workers = a.workers;
  opts.record_timing = a.timing;
  opts.progress = [](const std::string& line) { std::cerr << line << '\n'; };
  const auto records = uls::run_sweep(spec, opts);

  if (a.out.empty()) {
    uls::emit_csv(records, std::cout);
    return kOk;
  }
  uls::write_csv_file(records, a.out);
  const fs::path csv_path(a.out);
  const fs::path plot_path =
      a.plot.empty() ? fs::path(csv_path).replace_extension(".gp") : fs::path(a.plot);
  const fs::path plot_dir = plot_path.parent_path().empty() ? "." : plot_path.parent_path();
  const std::string csv_rel =
      fs::relative(fs::absolute(csv_path), fs::absolute(plot_dir)).generic_string();
  write_text(plot_path.string(), uls::gnuplot_script(spec, title, csv_rel));
  std::cout << "csv=" << csv_path.string() << " plot=" << plot_path.string() << '\n';
  return kOk;
}

// ---------------------------------------------------------------- bound

struct BoundArgs {
  uls::BoundParams params;
  std::string m_scan;
};

std::vector<uls::Index> parse_scan(const std::string& text) {
  std::vector<long long> parts;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ':');) {
    try {
      std::size_t used = 0;
      parts.push_back(std::stoll(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw uls::ConfigInvalid("--m-scan expects start:stop:step integers");
    }
  }
  if (parts.size() != 3 || parts[2] <= 0 || parts[0] > parts[1]) {
    throw uls::ConfigInvalid("--m-scan expects start:stop:step with step > 0");
  }
  std::vector<uls::Index> grid;
  for (long long m = parts[0]; m <= parts[1]; m += parts[2]) grid.push_back(m);
  return grid;
}

int cmd_bound(const BoundArgs& a) {
  // Evaluate everything first so a degenerate grid point leaves stdout empty.
  std::ostringstream rows;
  if (a.m_scan.empty()) {
    rows << uls::bound_csv_row(a.params, uls::theorem1_bound(a.params)) << '\n';
  } else {
    const auto grid = parse_scan(a.m_scan);
    const auto results = uls::bound_monotonicity_scan(a.params, grid);
    for (std::size_t i = 0; i < grid.size(); ++i) {
      uls::BoundParams row = a.params;
      row.m = static_cast<double>(grid[i]);
      rows << uls::bound_csv_row(row, results[i]) << '\n';
    }
  }
  std::cout << uls::bound_csv_header() << '\n' << rows.str();
  return kOk;
}

// ---------------------------------------------------------------- lemmas

struct LemmaArgs {
  std::string lemma = "all";
  uls::LemmaCheckSpec spec;
};

int cmd_lemmas(const LemmaArgs& a) {
  log_seed(a.spec.seed);
  std::vector<uls::LemmaId> ids;
  if (a.lemma == "all") {
    ids = {uls::LemmaId::kOperatorNorm, uls::LemmaId::kSigmaMin,
           uls::LemmaId::kPseudoInverseNoise, uls::LemmaId::kLassoError};
  } else {
    ids = {uls::lemma_from_name(a.lemma)};
  }
  std::cout << uls::lemma_csv_header() << '\n';
  for (const auto id : ids) {
    uls::LemmaCheckSpec spec = a.spec;
    spec.id = id;
    std::cout << uls::lemma_csv_row(spec, uls::lemma_empirical_check(spec)) << '\n';
  }
  return kOk;
}

// ---------------------------------------------------------------- align-demo

struct AlignArgs {
  uls::AlignDemoConfig cfg;
  std::string out_dir = "align_demo";
  std::string image;
  std::string keypoints_out;
};

int cmd_align_demo(const AlignArgs& a) {
  log_seed(a.cfg.seed);
  std::optional<uls::Image> base;
  if (!a.image.empty()) base = uls::read_pgm(a.image);
  const auto res = uls::run_align_demo(a.cfg, base ? &*base : nullptr);

  std::error_code ec;
  fs::create_directories(a.out_dir, ec);
  if (ec) throw uls::IoError("cannot create '" + a.out_dir + "': " + ec.message());
  const auto path = [&](const std::string& name) {
    return (fs::path(a.out_dir) / name).string();
  };
  uls::write_pgm(res.base, path("base.pgm"));
  uls::write_pgm(res.truth, path("truth.pgm"));
  uls::write_pgm(res.c3, path("c3.pgm"));
  uls::write_pgm(res.c1, path("c1.pgm"));
  uls::write_pgm(res.c2, path("c2.pgm"));
  uls::write_overlay_ppm(res.truth, res.c1, path("overlay_c1.ppm"));
  uls::write_overlay_ppm(res.truth, res.c2, path("overlay_c2.ppm"));
  uls::write_overlay_ppm(res.truth, res.c3, path("overlay_c3.ppm"));
  if (!a.keypoints_out.empty()) {
    uls::Rng key_rng(uls::derive_seed(a.cfg.seed, 2));
    const auto sim = uls::simulate_keypoints(res.true_model, a.cfg.p, a.cfg.m, a.cfg.k,
                                             a.cfg.noise_sigma, key_rng,
                                             a.cfg.independent_permutations);
    uls::write_keypoints_csv(sim.keys, a.keypoints_out);
  }
  std::cout << "mode=C1 nmse=" << uls::format_double(res.nmse_c1) << '\n'
            << "mode=C2 nmse=" << uls::format_double(res.nmse_c2) << '\n'
            << "mode=C3 nmse=" << uls::format_double(res.nmse_c3) << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Unlabelled sensing with known correspondences"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen", "generate a problem instance");
  gen_cmd->add_option("--d", gen.d, "unknown dimension")->required();
  gen_cmd->add_option("--m", gen.m, "known-correspondence rows")->required();
  gen_cmd->add_option("--p", gen.p, "rows with unknown correspondence")->required();
  gen_cmd->add_option("--k", gen.k, "displaced rows")->required();
  auto* sigma_opt = gen_cmd->add_option("--sigma", gen.sigma, "noise standard deviation");
  gen_cmd->add_option("--noise-percent", gen.noise_percent,
                      "noise as a percentage of the mean |A x0|")
      ->excludes(sigma_opt);
  gen_cmd->add_option("--seed", gen.seed, "random seed");
  gen_cmd->add_option("--sparsity", gen.sparsity, "exact | uniform")
      ->check(CLI::IsMember({"exact", "uniform"}));
  gen_cmd->add_option("--out", gen.out, "instance JSON path")->required();

  SolveArgs solve;
  auto* solve_cmd = app.add_subcommand("solve", "estimate x from an instance file");
  solve_cmd->add_option("--instance", solve.instance, "instance JSON path")->required();
  solve_cmd->add_option("--estimator", solve.estimator, "two-stage | joint | robust")
      ->check(CLI::IsMember({"two-stage", "joint", "robust"}));
  solve_cmd->add_option("--out", solve.out, "result JSON path")->required();
  add_estimator_flags(solve_cmd, solve.est);

  SweepArgs sweep;
  auto* sweep_cmd = app.add_subcommand("sweep", "run an experiment sweep");
  auto* preset_opt = sweep_cmd->add_option("--preset", sweep.preset,
                                           "fig1a | fig1b | fig2-2pct | fig2-4pct");
  auto* spec_opt = sweep_cmd->add_option("--spec", sweep.spec, "sweep spec JSON path");
  preset_opt->excludes(spec_opt);
  sweep_cmd->add_option("--seed", sweep.seed, "base seed");
  sweep_cmd->add_option("--workers", sweep.workers, "worker threads")
      ->check(CLI::Range(1u, 1024u));
  sweep_cmd->add_option("--out", sweep.out, "CSV path (stdout when omitted)");
  sweep_cmd->add_option("--plot", sweep.plot, "gnuplot script path");
  sweep_cmd->add_flag("--timing", sweep.timing, "record mean wall time per solve");

  BoundArgs bound;
  auto* bound_cmd = app.add_subcommand("bound", "evaluate the error bound");
  bound_cmd->add_option("--sigma", bound.params.sigma)->required();
  bound_cmd->add_option("--d", bound.params.d)->required();
  bound_cmd->add_option("--p", bound.params.p)->required();
  bound_cmd->add_option("--m", bound.params.m);
  bound_cmd->add_option("--k", bound.params.k)->required();
  bound_cmd->add_option("--big-m", bound.params.big_m);
  bound_cmd->add_option("--alpha", bound.params.alpha);
  bound_cmd->add_option("--c1", bound.params.c1);
  bound_cmd->add_option("--c2", bound.params.c2);
  bound_cmd->add_option("--epsilon", bound.params.epsilon_const);
  bound_cmd->add_option("--m-scan", bound.m_scan, "start:stop:step over m");

  LemmaArgs lemmas;
  auto* lemma_cmd = app.add_subcommand("lemmas", "Monte-Carlo lemma checks");
  lemma_cmd->add_option("--lemma", lemmas.lemma,
                        "all | L1_opnorm | L1_sigmamin | L3_pinv_noise | L4_lasso_error");
  lemma_cmd->add_option("--rows", lemmas.spec.rows);
  lemma_cmd->add_option("--cols", lemmas.spec.cols);
  lemma_cmd->add_option("--t", lemmas.spec.t_or_m, "deviation t (M for L4)");
  lemma_cmd->add_option("--sigma", lemmas.spec.sigma);
  lemma_cmd->add_flag("--identity-design", lemmas.spec.identity_design);
  lemma_cmd->add_option("--d", lemmas.spec.d);
  lemma_cmd->add_option("--p", lemmas.spec.p);
  lemma_cmd->add_option("--k", lemmas.spec.k);
  lemma_cmd->add_option("--c1", lemmas.spec.c1);
  lemma_cmd->add_option("--c2", lemmas.spec.c2);
  lemma_cmd->add_option("--epsilon", lemmas.spec.epsilon_const);
  lemma_cmd->add_option("--trials", lemmas.spec.trials);
  lemma_cmd->add_option("--seed", lemmas.spec.seed);
  lemma_cmd->add_option("--workers", lemmas.spec.workers)->check(CLI::Range(1u, 1024u));

  AlignArgs align;
  auto* align_cmd = app.add_subcommand("align-demo", "DCT motion estimation demo");
  align_cmd->add_option("--seed", align.cfg.seed);
  align_cmd->add_option("--d", align.cfg.d);
  align_cmd->add_option("--p", align.cfg.p);
  align_cmd->add_option("--m", align.cfg.m);
  align_cmd->add_option("--k", align.cfg.k);
  align_cmd->add_option("--noise", align.cfg.noise_sigma, "keypoint noise (pixels)");
  align_cmd->add_option("--motion-rms", align.cfg.motion_rms, "true field RMS (pixels)");
  align_cmd->add_option("--size", align.cfg.height, "procedural image side length");
  align_cmd->add_flag("--independent-perms", align.cfg.independent_permutations,
                      "separate permutations for du and dv");
  align_cmd->add_option("--image", align.image, "base image (binary PGM)");
  align_cmd->add_option("--out-dir", align.out_dir, "output directory");
  align_cmd->add_option("--keypoints-out", align.keypoints_out, "keypoint CSV path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kInvalid;
  }

  try {
    if (*gen_cmd) return cmd_gen(gen);
    if (*solve_cmd) return cmd_solve(solve);
    if (*sweep_cmd) {
      sweep.seed_given = sweep_cmd->count("--seed") > 0;
      if (sweep.preset.empty() && sweep.spec.empty()) {
        throw uls::ConfigInvalid("sweep needs --preset or --spec");
      }
      return cmd_sweep(sweep);
    }
    if (*bound_cmd) return cmd_bound(bound);
    if (*lemma_cmd) return cmd_lemmas(lemmas);
    if (*align_cmd) {
      align.cfg.width = align.cfg.height;
      return cmd_align_demo(align);
    }
  } catch (const uls::IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIo;
  } catch (const uls::NoConvergence& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kNoConvergence;
  } catch (const uls::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInvalid;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIo;
  }
  return kInvalid;
}
