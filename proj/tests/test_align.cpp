#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "oracles.hpp"
#include "uls/align.hpp"
#include "uls/errors.hpp"

using namespace uls;

namespace {

std::vector<Index> every_pixel(Index n) {
  std::vector<Index> px(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) px[static_cast<std::size_t>(i)] = i;
  return px;
}

DctMotionModel random_model(Index h, Index w, Index d, std::uint64_t seed, double scale) {
  Rng rng(seed);
  DctMotionModel m;
  m.height = h;
  m.width = w;
  m.d = d;
  m.theta1 = scale * gaussian_vector(d, rng);
  m.theta2 = scale * gaussian_vector(d, rng);
  return m;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("uls_test_" + name)).string();
}

}  // namespace

TEST(Dct, FrequencyOrdering) {
  const auto f = dct_frequencies(6);
  const std::vector<std::pair<Index, Index>> expected = {
      {0, 0}, {0, 1}, {1, 0}, {0, 2}, {1, 1}, {2, 0}};
  EXPECT_EQ(f, expected);
}

TEST(Dct, DcColumnIsConstant) {
  const Matrix u = dct_basis_rows(6, 5, 3, every_pixel(30));
  for (Index i = 0; i < 30; ++i) EXPECT_NEAR(u(i, 0), 1.0 / std::sqrt(30.0), 1e-15);
}

TEST(Dct, FullGridIsOrthonormal) {
  const Matrix u = dct_basis_rows(16, 12, 40, every_pixel(16 * 12));
  EXPECT_LT((u.transpose() * u - Matrix::Identity(40, 40)).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Dct, ScalarFormula) {
  // (u, v) = (1, 0) is basis index 2; pixel (0, 0) of a 4 x 4 image.
  const Matrix u = dct_basis_rows(4, 4, 3, {0});
  EXPECT_NEAR(u(0, 2), std::sqrt(2.0 / 4) * (1.0 / std::sqrt(4.0)) * std::cos(std::numbers::pi / 8),
              1e-15);
}

TEST(Dct, Errors) {
  EXPECT_THROW(dct_basis_rows(4, 4, 3, {16}), IndexOutOfRange);
  EXPECT_THROW(dct_basis_rows(4, 4, 5, {0}), ConfigInvalid);  // d > 16 / 4
  EXPECT_THROW(dct_basis_rows(40, 40, 65, {0}), ConfigInvalid);
}

TEST(SynthMotion, Examples) {
  DctMotionModel m = random_model(8, 8, 5, 1, 1.0);
  m.theta1.setZero();
  m.theta2.setZero();
  EXPECT_EQ(synth_motion(m).u1.norm(), 0.0);
  m.theta1(0) = 4.0;
  const auto f = synth_motion(m);
  for (Index i = 0; i < 64; ++i) EXPECT_NEAR(f.u1(i), 4.0 / 8.0, 1e-14);

  const DctMotionModel r = random_model(8, 8, 5, 2, 1.0);
  const std::vector<Index> subset = {3, 17, 40, 63};
  const auto full = synth_motion(r);
  const Vector restricted = dct_basis_rows(8, 8, 5, subset) * r.theta2;
  for (std::size_t i = 0; i < subset.size(); ++i) {
    EXPECT_NEAR(full.u2(subset[i]), restricted(static_cast<Index>(i)), 1e-14);
  }
}

TEST(Keypoints, NoiselessUnpermutedEqualsField) {
  const auto model = random_model(32, 32, 10, 3, 20.0);
  Rng rng(4);
  const auto sim = simulate_keypoints(model, 40, 6, 0, 0.0, rng);
  const auto field = synth_motion(model);
  for (std::size_t i = 0; i < sim.keys.s1_pixels.size(); ++i) {
    EXPECT_EQ(sim.keys.s1_du(static_cast<Index>(i)), field.u1(sim.keys.s1_pixels[i]));
    EXPECT_EQ(sim.keys.s1_dv(static_cast<Index>(i)), field.u2(sim.keys.s1_pixels[i]));
  }
  for (std::size_t i = 0; i < sim.keys.s2_pixels.size(); ++i) {
    EXPECT_EQ(sim.keys.s2_du(static_cast<Index>(i)), field.u1(sim.keys.s2_pixels[i]));
  }
  EXPECT_NO_THROW(sim.keys.validate());
}

TEST(Keypoints, TranspositionSwapsPairs) {
  const auto model = random_model(32, 32, 10, 5, 20.0);
  Rng rng(6);
  const auto sim = simulate_keypoints(model, 40, 6, 2, 0.0, rng);
  const auto field = synth_motion(model);
  std::vector<Index> moved;
  for (std::size_t i = 0; i < sim.keys.s1_pixels.size(); ++i) {
    const bool du_ok = sim.keys.s1_du(static_cast<Index>(i)) == field.u1(sim.keys.s1_pixels[i]);
    const bool dv_ok = sim.keys.s1_dv(static_cast<Index>(i)) == field.u2(sim.keys.s1_pixels[i]);
    EXPECT_EQ(du_ok, dv_ok);  // shared permutation
    if (!du_ok) moved.push_back(static_cast<Index>(i));
  }
  ASSERT_EQ(moved.size(), 2u);
  EXPECT_EQ(sim.keys.s1_du(moved[0]), field.u1(sim.keys.s1_pixels[static_cast<std::size_t>(moved[1])]));
  EXPECT_EQ(sim.perm_u, sim.perm_v);
}

TEST(Keypoints, IndependentPermutationsFlag) {
  const auto model = random_model(32, 32, 10, 5, 20.0);
  Rng rng(7);
  const auto sim = simulate_keypoints(model, 60, 6, 10, 0.0, rng, true);
  EXPECT_FALSE(sim.perm_u == sim.perm_v);
}

TEST(Keypoints, Preconditions) {
  const auto model = random_model(32, 32, 10, 5, 1.0);
  Rng rng(8);
  EXPECT_THROW(simulate_keypoints(model, 40, 10, 0, 0.0, rng), ConfigInvalid);
  EXPECT_THROW(simulate_keypoints(model, 40, 6, 1, 0.0, rng), InvalidSparsity);
}

TEST(Keypoints, CsvRoundTrip) {
  const auto model = random_model(16, 16, 6, 9, 10.0);
  Rng rng(9);
  const auto sim = simulate_keypoints(model, 20, 4, 4, 0.1, rng);
  const std::string path = temp_path("keys.csv");
  write_keypoints_csv(sim.keys, path);
  const KeypointSet back = read_keypoints_csv(path, 16, 16, 0.1);
  EXPECT_EQ(back.s1_pixels, sim.keys.s1_pixels);
  EXPECT_EQ(back.s2_pixels, sim.keys.s2_pixels);
  EXPECT_EQ(back.s1_du, sim.keys.s1_du);
  EXPECT_EQ(back.s2_dv, sim.keys.s2_dv);
  std::remove(path.c_str());
  EXPECT_THROW(read_keypoints_csv("/nonexistent/keys.csv", 16, 16, 0), IoError);
}

TEST(EstimateMotion, C3ExactWithoutNoiseOrPermutation) {
  const auto model = random_model(32, 32, 10, 11, 20.0);
  Rng rng(12);
  const auto sim = simulate_keypoints(model, 30, 8, 0, 0.0, rng);
  const auto est = estimate_motion(sim.keys, 10, {}, MotionMode::kC3);
  EXPECT_LT((est.theta1 - model.theta1).norm(), 1e-6 * model.theta1.norm());
  EXPECT_LT((est.theta2 - model.theta2).norm(), 1e-6 * model.theta2.norm());
}

TEST(EstimateMotion, C3RecoversWithSparseMismatches) {
  const auto model = random_model(32, 32, 10, 13, 20.0);
  Rng rng(14);
  const auto sim = simulate_keypoints(model, 80, 8, 8, 0.0, rng);
  EstimatorConfig cfg;
  cfg.lambda = LambdaMode::floor();
  const auto est = estimate_motion(sim.keys, 10, cfg, MotionMode::kC3);
  EXPECT_LT((est.theta1 - model.theta1).norm(), 1e-4 * model.theta1.norm());
}

TEST(EstimateMotion, C2MinimumNormInterpolates) {
  const auto model = random_model(32, 32, 10, 15, 20.0);
  Rng rng(16);
  const auto sim = simulate_keypoints(model, 30, 8, 0, 0.0, rng);
  const auto est = estimate_motion(sim.keys, 10, {}, MotionMode::kC2);
  const Matrix a = dct_basis_rows(32, 32, 10, sim.keys.s2_pixels);
  EXPECT_LT((a * est.theta1 - sim.keys.s2_du).norm(), 1e-10);
  // Minimum norm: orthogonal to the null space, i.e. in the row space.
  const Vector in_rows = a.transpose() * (a * a.transpose()).ldlt().solve(sim.keys.s2_du);
  EXPECT_LT((est.theta1 - in_rows).norm(), 1e-8);
}

TEST(EstimateMotion, C2NeedsTrustedPoints) {
  const auto model = random_model(32, 32, 10, 15, 20.0);
  Rng rng(16);
  const auto sim = simulate_keypoints(model, 30, 0, 0, 0.0, rng);
  EXPECT_THROW(estimate_motion(sim.keys, 10, {}, MotionMode::kC2), RankDeficient);
}

TEST(Warp, ZeroFieldIsIdentity) {
  const Image img = procedural_image(12, 10);
  const DisplacementField f{Vector::Zero(120), Vector::Zero(120)};
  EXPECT_EQ(warp_image(img, f).pixels, img.pixels);
}

TEST(Warp, IntegerShiftWithClampedBorder) {
  const Image img = procedural_image(8, 8);
  const DisplacementField f{Vector::Ones(64), Vector::Zero(64)};
  const Image out = warp_image(img, f);
  for (Index r = 0; r < 8; ++r) {
    EXPECT_EQ(out.at(r, 0), img.at(r, 0));
    for (Index c = 1; c < 8; ++c) EXPECT_EQ(out.at(r, c), img.at(r, c - 1));
  }
}

TEST(Warp, MatchesIndependentBilinearImplementation) {
  Rng rng(17);
  Image img = Image::filled(16, 16);
  for (auto& v : img.pixels) v = rng.uniform();
  DisplacementField f{3.0 * gaussian_vector(256, rng), 3.0 * gaussian_vector(256, rng)};
  const Image out = warp_image(img, f);
  const auto ref = oracle::bilinear_warp(img.pixels, 16, 16,
                                         std::vector<double>(f.u1.data(), f.u1.data() + 256),
                                         std::vector<double>(f.u2.data(), f.u2.data() + 256));
  Image ref_img = img;
  ref_img.pixels = ref;
  EXPECT_LT(nmse(ref_img, out), 1e-12);
}

TEST(Nmse, Examples) {
  const Image a = procedural_image(8, 8);
  EXPECT_EQ(nmse(a, a), 0.0);
  EXPECT_DOUBLE_EQ(nmse(a, Image::filled(8, 8, 0.0)), 1.0);
  Image board = Image::filled(4, 4), inverted = Image::filled(4, 4);
  for (Index r = 0; r < 4; ++r) {
    for (Index c = 0; c < 4; ++c) {
      board.at(r, c) = (r + c) % 2;
      inverted.at(r, c) = -board.at(r, c);
    }
  }
  EXPECT_DOUBLE_EQ(nmse(board, inverted), 4.0);
  EXPECT_THROW(nmse(Image::filled(4, 4, 0.0), board), ZeroReference);
  EXPECT_THROW(nmse(board, a), DimensionMismatch);
}

TEST(Pgm, BitExactRoundTrip) {
  Image img = Image::filled(7, 9);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = (i * 37 % 256) / 255.0;
  const std::string a = temp_path("a.pgm"), b = temp_path("b.pgm");
  write_pgm(img, a);
  const Image back = read_pgm(a);
  EXPECT_EQ(back.height, 7);
  EXPECT_EQ(back.width, 9);
  EXPECT_EQ(back.pixels, img.pixels);
  write_pgm(back, b);
  std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
  EXPECT_EQ(std::string(std::istreambuf_iterator<char>(fa), {}),
            std::string(std::istreambuf_iterator<char>(fb), {}));
  std::remove(a.c_str());
  std::remove(b.c_str());
}

TEST(Pgm, HeaderCommentsAndErrors) {
  const std::string path = temp_path("c.pgm");
  {
    std::ofstream out(path, std::ios::binary);
    out << "P5\n# comment\n2 1\n255\n" << char(0) << char(255);
  }
  const Image img = read_pgm(path);
  EXPECT_EQ(img.pixels, (std::vector<double>{0.0, 1.0}));
  {
    std::ofstream out(path, std::ios::binary);
    out << "P2\n2 1\n255\n0 1\n";
  }
  EXPECT_THROW(read_pgm(path), IoError);
  {
    std::ofstream out(path, std::ios::binary);
    out << "P5\n4 4\n255\nab";
  }
  EXPECT_THROW(read_pgm(path), IoError);
  std::remove(path.c_str());
  EXPECT_THROW(read_pgm("/nonexistent.pgm"), IoError);
}

TEST(Ppm, OverlayChannels) {
  Image truth = Image::filled(1, 2, 1.0), recon = Image::filled(1, 2, 0.0);
  recon.pixels[1] = 1.0;
  const std::string path = temp_path("o.ppm");
  write_overlay_ppm(truth, recon, path);
  std::ifstream in(path, std::ios::binary);
  const std::string data(std::istreambuf_iterator<char>(in), {});
  const std::string header = "P6\n2 1\n255\n";
  ASSERT_EQ(data.size(), header.size() + 6);
  EXPECT_EQ(data.substr(0, header.size()), header);
  const std::string px = data.substr(header.size());
  EXPECT_EQ(px, std::string("\xff\x00\x00\xff\xff\x00", 6));
  std::remove(path.c_str());
}

TEST(AlignDemo, C3BestOnDefaultPreset) {
  const AlignDemoResult r = run_align_demo(AlignDemoConfig{});
  EXPECT_LE(r.nmse_c3, r.nmse_c1);
  EXPECT_LE(r.nmse_c3, r.nmse_c2);
}

TEST(AlignDemo, NmseShrinksAsMismatchesVanish) {
  int ok = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    double prev = 1e300;
    bool monotone = true;
    for (const Index k : {90, 40, 10, 0}) {
      AlignDemoConfig c;
      c.seed = seed;
      c.k = k;
      const double e = run_align_demo(c).nmse_c3;
      monotone = monotone && e <= prev;
      prev = e;
    }
    ok += monotone;
  }
  EXPECT_GE(ok, 8);
}
