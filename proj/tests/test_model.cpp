#include <gtest/gtest.h>

#include <map>
#include <string>

#include "oracles.hpp"
#include "uls/errors.hpp"
#include "uls/model.hpp"

using namespace uls;

TEST(SparsePermutation, ApplyAndInverse) {
  const auto perm = SparsePermutation::from_mapping({0, 2, 1, 3}, 2);
  Vector v(4);
  v << 10, 20, 30, 40;
  const Vector pv = perm.apply(v);
  EXPECT_EQ(pv(1), 30);
  EXPECT_EQ(pv(2), 20);
  EXPECT_EQ(perm.apply_inverse(pv), v);
  EXPECT_EQ(perm.support(), (std::vector<Index>{1, 2}));
}

TEST(SparsePermutation, CycleInverse) {
  const auto perm = SparsePermutation::from_mapping({1, 2, 0, 3, 4}, 3);
  Vector v(5);
  v << 1, 2, 3, 4, 5;
  EXPECT_EQ(perm.apply(v), (Vector(5) << 2, 3, 1, 4, 5).finished());
  EXPECT_EQ(perm.apply_inverse(perm.apply(v)), v);
}

TEST(SparsePermutation, RejectsNonBijectionAndBudget) {
  EXPECT_THROW(SparsePermutation::from_mapping({0, 0, 1}, 3), ConfigInvalid);
  EXPECT_THROW(SparsePermutation::from_mapping({0, 1, 5}, 3), ConfigInvalid);
  EXPECT_THROW(SparsePermutation::from_mapping({1, 2, 0}, 2), InvalidSparsity);
}

TEST(Sampler, ExactSupportSize) {
  Rng rng(1);
  for (Index k : {0, 2, 3, 7, 20}) {
    const auto perm = sample_sparse_permutation(20, k, rng);
    EXPECT_EQ(static_cast<Index>(perm.support().size()), k);
    for (const Index i : perm.support()) EXPECT_NE(perm.mapping()[i], i);
  }
}

TEST(Sampler, KOneIsImpossible) {
  Rng rng(1);
  try {
    sample_sparse_permutation(10, 1, rng);
    FAIL() << "expected InvalidSparsity";
  } catch (const InvalidSparsity& e) {
    EXPECT_NE(std::string(e.what()).find("k = 1"), std::string::npos);
  }
  EXPECT_THROW(sample_sparse_permutation(10, 11, rng), InvalidSparsity);
  EXPECT_THROW(sample_sparse_permutation(10, -1, rng), InvalidSparsity);
}

TEST(Sampler, UniformUpToStaysInRange) {
  Rng rng(2);
  std::map<std::size_t, int> seen;
  for (int i = 0; i < 2000; ++i) {
    const auto perm = sample_sparse_permutation(12, 5, rng, SparsityMode::kUniformUpTo);
    ++seen[perm.support().size()];
  }
  EXPECT_EQ(seen.count(1), 0u);
  for (std::size_t s : {0u, 2u, 3u, 4u, 5u}) EXPECT_GT(seen[s], 250) << s;
}

// p = 5, k = 3: C(5, 3) subsets times 2 derangements of 3 = 20 outcomes.
TEST(Sampler, ChiSquareUniformOverOutcomes) {
  Rng rng(3);
  std::map<std::vector<Index>, int> counts;
  const int n = 40000;
  for (int i = 0; i < n; ++i) ++counts[sample_sparse_permutation(5, 3, rng).mapping()];
  ASSERT_EQ(counts.size(), 20u);
  const double expected = n / 20.0;
  double chi2 = 0;
  for (const auto& [key, c] : counts) chi2 += (c - expected) * (c - expected) / expected;
  EXPECT_GT(oracle::chi_square_sf(chi2, 19), 1e-4) << "chi2 = " << chi2;
}

TEST(PermutationError, SparseAndExact) {
  Rng rng(4);
  const Matrix a2 = gaussian_matrix(15, 4, rng);
  const Vector x0 = gaussian_vector(4, rng);
  const auto perm = sample_sparse_permutation(15, 4, rng);
  const Vector z = permutation_error_vector(perm, a2, x0);
  int nonzero = 0;
  for (Index i = 0; i < z.size(); ++i) nonzero += z(i) != 0.0;
  EXPECT_LE(nonzero, 4);
  EXPECT_LT((z - (perm.apply(a2 * x0) - a2 * x0)).norm(), 1e-14);
  EXPECT_EQ(permutation_error_vector(SparsePermutation::identity(15), a2, x0).norm(), 0.0);
}

TEST(NoiseCalibration, PercentOfMeanAbsMeasurement) {
  Matrix a(2, 1);
  a << 1, -3;
  Vector x(1);
  x << 2;
  // mean |A x| = 4.
  EXPECT_DOUBLE_EQ(noise_sigma_from_percent(2.0, a, x), 0.08);
  EXPECT_EQ(noise_sigma_from_percent(0.0, a, x), 0.0);
}

ProblemConfig small_config() {
  ProblemConfig c;
  c.d = 5;
  c.m = 2;
  c.p = 8;
  c.k = 2;
  c.sigma = 0.1;
  c.seed = 7;
  return c;
}

TEST(ProblemConfig, ValidationMessages) {
  ProblemConfig c = small_config();
  c.m = 6;
  try {
    c.validate();
    FAIL();
  } catch (const ConfigInvalid& e) {
    EXPECT_NE(std::string(e.what()).find("m < d"), std::string::npos);
  }
  c = small_config();
  c.p = 5;
  try {
    c.validate();
    FAIL();
  } catch (const ConfigInvalid& e) {
    EXPECT_NE(std::string(e.what()).find("p > d"), std::string::npos);
  }
  c = small_config();
  c.k = 1;
  EXPECT_THROW(c.validate(), InvalidSparsity);
  c = small_config();
  c.noise_percent = 2.0;
  EXPECT_THROW(c.validate(), ConfigInvalid);
}

TEST(GenerateInstance, ModelHolds) {
  const ProblemInstance inst = generate_instance(small_config());
  EXPECT_EQ(inst.a1.rows(), 2);
  EXPECT_EQ(inst.a2.rows(), 8);
  EXPECT_LT((inst.y1 - inst.a1 * inst.x0 - inst.eps1).norm(), 1e-14);
  EXPECT_LT((inst.y2 - inst.perm.apply(inst.a2 * inst.x0) - inst.eps2).norm(), 1e-14);
  EXPECT_LT((inst.z0 - permutation_error_vector(inst.perm, inst.a2, inst.x0)).norm(), 1e-14);
  EXPECT_EQ(static_cast<Index>(inst.perm.support().size()), 2);
}

TEST(GenerateInstance, DeterministicPerSeed) {
  const auto a = generate_instance(small_config());
  const auto b = generate_instance(small_config());
  EXPECT_EQ(a.a2, b.a2);
  EXPECT_EQ(a.y2, b.y2);
  ProblemConfig c = small_config();
  c.seed = 8;
  EXPECT_NE(generate_instance(c).y2, a.y2);
}

TEST(GenerateInstance, NoiselessUnpermuted) {
  ProblemConfig c = small_config();
  c.k = 0;
  c.sigma = 0.0;
  const auto inst = generate_instance(c);
  EXPECT_EQ(inst.y2, inst.a2 * inst.x0);
  EXPECT_EQ(inst.z0.norm(), 0.0);
}

TEST(InstanceJson, RoundTrip) {
  const auto inst = generate_instance(small_config());
  const auto back = instance_from_json(nlohmann::json::parse(instance_to_json(inst).dump()));
  EXPECT_EQ(back.a1, inst.a1);
  EXPECT_EQ(back.a2, inst.a2);
  EXPECT_EQ(back.x0, inst.x0);
  EXPECT_EQ(back.y1, inst.y1);
  EXPECT_EQ(back.y2, inst.y2);
  EXPECT_EQ(back.perm, inst.perm);
  EXPECT_EQ(back.sigma, inst.sigma);
  EXPECT_EQ(back.seed, inst.seed);
  EXPECT_LT((back.z0 - inst.z0).norm(), 1e-14);
}

TEST(InstanceJson, WithoutGroundTruth) {
  auto doc = instance_to_json(generate_instance(small_config()));
  doc.erase("x0");
  const auto back = instance_from_json(doc);
  EXPECT_FALSE(back.has_ground_truth());
}

TEST(InstanceJson, RejectsRaggedMatrix) {
  auto doc = instance_to_json(generate_instance(small_config()));
  doc["a2"][0].push_back(1.0);
  EXPECT_THROW(instance_from_json(doc), ConfigInvalid);
}
