#include <gtest/gtest.h>

#include <fstream>
#include <mutex>
#include <map>
#include <set>
#include <tuple>
#include <sstream>

#include "uls/bench.hpp"
#include "uls/errors.hpp"

using namespace uls;

namespace {

SweepSpec tiny_spec() {
  SweepSpec s;
  s.d = 8;
  s.p_grid = {16, 24};
  s.m_grid = {0, 4};
  s.perm_levels = {0.25};
  s.noise_percents = {2.0};
  s.n_perm = 2;
  s.n_noise = 3;
  s.estimators = {EstimatorTag::kProposed, EstimatorTag::kRobustRegression};
  s.base_seed = 5;
  return s;
}

std::string csv_of(const std::vector<SweepRecord>& records) {
  std::ostringstream out;
  emit_csv(records, out);
  return out.str();
}

// Minimal RFC-4180 reader used to check that emitted rows parse back.
std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows(1);
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"' && i + 1 < text.size() && text[i + 1] == '"') {
        cell += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cell += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      rows.back().push_back(cell);
      cell.clear();
    } else if (c == '\n') {
      rows.back().push_back(cell);
      cell.clear();
      rows.emplace_back();
    } else {
      cell += c;
    }
  }
  if (rows.back().empty()) rows.pop_back();
  return rows;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(NormalizedError, Examples) {
  Vector x0(3);
  x0 << 1, -2, 2;
  EXPECT_EQ(normalized_error(x0, x0), 0.0);
  EXPECT_DOUBLE_EQ(normalized_error(Vector::Zero(3), x0), 1.0);
  EXPECT_DOUBLE_EQ(normalized_error(2 * x0, x0), 1.0);
  EXPECT_THROW(normalized_error(x0, Vector::Zero(3)), ZeroReference);
  EXPECT_THROW(normalized_error(Vector::Zero(2), x0), DimensionMismatch);
}

TEST(PermutationCount, RoundHalfEvenAndBump) {
  EXPECT_EQ(permutation_count(0.25, 10), 2);  // 2.5 -> 2
  EXPECT_EQ(permutation_count(0.35, 10), 4);  // 3.5 -> 4
  EXPECT_EQ(permutation_count(0.1, 140), 14);
  EXPECT_EQ(permutation_count(0.0, 140), 0);
  std::string warning;
  EXPECT_EQ(permutation_count(0.1, 10, [&](const std::string& w) { warning = w; }), 2);
  EXPECT_NE(warning.find("k = 1"), std::string::npos);
}

TEST(SweepSpec, Validation) {
  SweepSpec s = tiny_spec();
  s.p_grid = {8};
  EXPECT_THROW(s.validate(), ConfigInvalid);
  s = tiny_spec();
  s.m_grid = {8};
  EXPECT_THROW(s.validate(), ConfigInvalid);
  s = tiny_spec();
  s.n_perm = 0;
  EXPECT_THROW(s.validate(), ConfigInvalid);
  s = tiny_spec();
  s.perm_levels.clear();
  EXPECT_THROW(s.validate(), ConfigInvalid);
}

TEST(SweepSpec, JsonRoundTripAndUnknownField) {
  const SweepSpec s = tiny_spec();
  const auto doc = sweep_spec_to_json(s);
  EXPECT_EQ(sweep_spec_to_json(sweep_spec_from_json(doc)), doc);
  auto bad = doc;
  bad["n_trails"] = 3;
  EXPECT_THROW(sweep_spec_from_json(bad), ConfigInvalid);
  bad = doc;
  bad["estimators"] = {"lasso"};
  EXPECT_THROW(sweep_spec_from_json(bad), ConfigInvalid);
}

TEST(Presets, ShippedFilesMatchBuiltIns) {
  for (const auto& name : preset_names()) {
    const auto path = std::string(ULS_SOURCE_DIR) + "/presets/" + name + ".json";
    std::ifstream in(path);
    ASSERT_TRUE(in) << path;
    const SweepSpec from_file = sweep_spec_from_json(nlohmann::json::parse(in));
    EXPECT_EQ(sweep_spec_to_json(from_file), sweep_spec_to_json(*preset(name))) << name;
  }
  EXPECT_FALSE(preset("fig3").has_value());
}

TEST(Presets, Shapes) {
  EXPECT_EQ(preset("fig1b")->p_grid, (std::vector<Index>{110, 120, 140}));
  const auto fig2 = *preset("fig2-2pct");
  EXPECT_EQ(fig2.perm_levels, (std::vector<double>{0.1, 0.2, 0.3, 0.4}));
  EXPECT_EQ(fig2.estimators.size(), 2u);
  EXPECT_EQ(preset("fig2-4pct")->noise_percents, std::vector<double>{4.0});
}

TEST(Sweep, RecordsAndInvariants) {
  const auto records = run_sweep(tiny_spec());
  ASSERT_EQ(records.size(), 8u);
  for (const auto& r : records) {
    EXPECT_EQ(r.n_trials, 6);
    EXPECT_EQ(r.trial_errors.size(), 6u);
    EXPECT_EQ(r.n_failed, 0);
    EXPECT_GE(r.mean_norm_error, 0.0);
    EXPECT_GE(r.std_norm_error, 0.0);
    EXPECT_FALSE(r.mean_wall_time_s.has_value());
    EXPECT_FALSE(r.flagged);
  }
  EXPECT_EQ(records[0].estimator, EstimatorTag::kProposed);
  EXPECT_EQ(records[1].estimator, EstimatorTag::kRobustRegression);
  EXPECT_EQ(records[0].k, 4);  // 0.25 * 16
}

TEST(Sweep, DeterministicAcrossWorkerCounts) {
  SweepOptions one, three;
  three.workers = 3;
  EXPECT_EQ(csv_of(run_sweep(tiny_spec(), one)), csv_of(run_sweep(tiny_spec(), three)));
}

TEST(Sweep, SeedChangesOutput) {
  SweepSpec other = tiny_spec();
  other.base_seed = 6;
  EXPECT_NE(csv_of(run_sweep(tiny_spec())), csv_of(run_sweep(other)));
}

TEST(Sweep, NoiselessUnpermutedIsExact) {
  SweepSpec s = tiny_spec();
  s.perm_levels = {0.0};
  s.noise_percents = {0.0};
  const auto records = compare_estimators(s);
  for (std::size_t i = 0; i + 1 < records.size(); i += 2) {
    EXPECT_LT(records[i].mean_norm_error, 1e-8);
    EXPECT_LT(records[i + 1].mean_norm_error, 1e-8);
    EXPECT_LT(std::abs(records[i].mean_norm_error - records[i + 1].mean_norm_error), 1e-6);
  }
}

TEST(Sweep, PairedInputsAreIdentical) {
  std::mutex mu;
  std::map<std::tuple<std::size_t, std::size_t, std::size_t>, std::map<EstimatorTag, std::uint64_t>>
      seen;
  SweepOptions opts;
  opts.workers = 2;
  opts.on_trial = [&](const TrialTrace& t) {
    std::lock_guard lock(mu);
    seen[{t.grid_index, t.perm_index, t.noise_index}][t.estimator] = t.input_hash;
  };
  compare_estimators(tiny_spec(), opts);
  ASSERT_EQ(seen.size(), 4u * 6u);
  std::set<std::uint64_t> distinct;
  for (const auto& [key, by_est] : seen) {
    ASSERT_EQ(by_est.size(), 2u);
    EXPECT_EQ(by_est.at(EstimatorTag::kProposed), by_est.at(EstimatorTag::kRobustRegression));
    distinct.insert(by_est.at(EstimatorTag::kProposed));
  }
  EXPECT_EQ(distinct.size(), seen.size());
}

TEST(Sweep, CompareRequiresBothEstimators) {
  SweepSpec s = tiny_spec();
  s.estimators = {EstimatorTag::kProposed};
  EXPECT_THROW(compare_estimators(s), ConfigInvalid);
}

TEST(Sweep, TimingOptIn) {
  SweepSpec s = tiny_spec();
  s.p_grid = {16};
  s.m_grid = {0};
  SweepOptions opts;
  opts.record_timing = true;
  const auto records = run_sweep(s, opts);
  ASSERT_TRUE(records[0].mean_wall_time_s.has_value());
  EXPECT_GT(*records[0].mean_wall_time_s, 0.0);
}

TEST(Csv, EmptyIsHeaderOnly) {
  EXPECT_EQ(csv_of({}), csv_header() + "\n");
  EXPECT_EQ(csv_header(),
            "estimator,d,p,m,k,perm_level,noise_percent,sigma,n_trials,n_failed,"
            "mean_norm_error,std_norm_error,mean_wall_time_s,base_seed");
}

TEST(Csv, OneRecordRoundTrips) {
  SweepRecord r;
  r.estimator = EstimatorTag::kRobustRegression;
  r.d = 100;
  r.p = 150;
  r.m = 80;
  r.k = 60;
  r.perm_level = 0.4;
  r.noise_percent = 2;
  r.sigma = 0.1234567890123;
  r.n_trials = 500;
  r.n_failed = 1;
  r.mean_norm_error = 0.24;
  r.std_norm_error = 0.01;
  r.base_seed = 1;
  const auto rows = parse_csv(csv_of({r}));
  ASSERT_EQ(rows.size(), 2u);
  ASSERT_EQ(rows[1].size(), 14u);
  EXPECT_EQ(rows[1][0], "robust_regression");
  EXPECT_EQ(std::stod(rows[1][5]), 0.4);
  EXPECT_EQ(std::stod(rows[1][7]), 0.1234567890123);
  EXPECT_EQ(rows[1][12], "NA");
  r.mean_wall_time_s = 0.5;
  EXPECT_EQ(parse_csv(csv_of({r}))[1][12], "0.5");
}

TEST(Csv, UnwritablePathIsIoError) {
  EXPECT_THROW(write_csv_file({}, "/nonexistent-dir/x.csv"), IoError);
}

TEST(Gnuplot, Fig1bGolden) {
  const std::string script = gnuplot_script(*preset("fig1b"), "fig1b", "fig1b.csv");
  EXPECT_EQ(script, read_file(std::string(ULS_SOURCE_DIR) + "/tests/data/fig1b.gp"));
}

TEST(Gnuplot, AxisFollowsSweptParameter) {
  EXPECT_NE(gnuplot_script(*preset("fig1a"), "fig1a", "a.csv").find("$3 : 1/0"),
            std::string::npos);
  EXPECT_NE(gnuplot_script(*preset("fig2-2pct"), "f", "a.csv").find("$6 : 1/0"),
            std::string::npos);
}
