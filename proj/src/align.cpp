#include "uls/align.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>
#include <unordered_set>

#include <Eigen/QR>

#include "uls/errors.hpp"
#include "uls/format.hpp"

namespace uls {

std::vector<std::pair<Index, Index>> dct_frequencies(Index d) {
  std::vector<std::pair<Index, Index>> out;
  out.reserve(static_cast<std::size_t>(std::max<Index>(d, 0)));
  for (Index total = 0; static_cast<Index>(out.size()) < d; ++total) {
    for (Index u = 0; u <= total && static_cast<Index>(out.size()) < d; ++u) {
      out.emplace_back(u, total - u);
    }
  }
  return out;
}

void check_basis_size(Index height, Index width, Index d) {
  if (height < 1 || width < 1) {
    throw ConfigInvalid("DCT basis: image dimensions must be positive");
  }
  if (d < 1 || d > std::min<Index>(64, height * width / 4)) {
    throw ConfigInvalid("DCT basis: d must lie in [1, min(64, pixels / 4)]");
  }
}

Matrix dct_basis_rows(Index height, Index width, Index d,
                      const std::vector<Index>& pixels) {
  check_basis_size(height, width, d);
  const auto freqs = dct_frequencies(d);
  for (const auto& [u, v] : freqs) {
    // Only reachable for very thin images.
    if (u >= height || v >= width) {
      throw ConfigInvalid("DCT basis: frequency exceeds the image size");
    }
  }
  const double pi = std::numbers::pi;
  const auto beta = [](Index freq, Index n) {
    return std::sqrt((freq == 0 ? 1.0 : 2.0) / static_cast<double>(n));
  };
  Matrix out(static_cast<Index>(pixels.size()), d);
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    const Index px = pixels[i];
    if (px < 0 || px >= height * width) {
      throw IndexOutOfRange("DCT basis: pixel index " + std::to_string(px) +
                            " outside the image");
    }
    const Index r = px / width;
    const Index c = px % width;
    for (Index j = 0; j < d; ++j) {
      const auto [u, v] = freqs[static_cast<std::size_t>(j)];
      out(static_cast<Index>(i), j) =
          beta(u, height) * beta(v, width) *
          std::cos(pi * static_cast<double>((2 * r + 1) * u) / (2.0 * height)) *
          std::cos(pi * static_cast<double>((2 * c + 1) * v) / (2.0 * width));
    }
  }
  return out;
}

void DctMotionModel::validate() const {
  check_basis_size(height, width, d);
  if (theta1.size() != d || theta2.size() != d) {
    throw DimensionMismatch("motion model: coefficient vectors must have length d");
  }
}

namespace {

std::vector<Index> all_pixels(Index height, Index width) {
  std::vector<Index> px(static_cast<std::size_t>(height * width));
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = static_cast<Index>(i);
  return px;
}

Vector gather(const Vector& field, const std::vector<Index>& pixels) {
  Vector out(static_cast<Index>(pixels.size()));
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    out(static_cast<Index>(i)) = field(pixels[i]);
  }
  return out;
}

}  // namespace

DisplacementField synth_motion(const DctMotionModel& model) {
  model.validate();
  const Matrix u = dct_basis_rows(model.height, model.width, model.d,
                                  all_pixels(model.height, model.width));
  return {u * model.theta1, u * model.theta2};
}

void KeypointSet::validate() const {
  const auto s1 = static_cast<Index>(s1_pixels.size());
  const auto s2 = static_cast<Index>(s2_pixels.size());
  if (s1_du.size() != s1 || s1_dv.size() != s1 || s2_du.size() != s2 ||
      s2_dv.size() != s2) {
    throw ConfigInvalid("keypoints: displacement and pixel counts differ");
  }
  std::unordered_set<Index> seen;
  for (const auto* set : {&s1_pixels, &s2_pixels}) {
    for (const Index px : *set) {
      if (px < 0 || px >= height * width) {
        throw ConfigInvalid("keypoints: pixel index outside the image");
      }
      if (!seen.insert(px).second) {
        throw ConfigInvalid("keypoints: pixel " + std::to_string(px) +
                            " listed twice (S1 and S2 must be disjoint)");
      }
    }
  }
}

SimulatedKeypoints simulate_keypoints(const DctMotionModel& model, Index p,
                                      Index m, Index k, double noise_sigma,
                                      Rng& rng, bool independent_permutations) {
  model.validate();
  if (m < 0 || m >= model.d) {
    throw ConfigInvalid("keypoints: assumption m < d violated");
  }
  if (p < model.d) {
    throw ConfigInvalid("keypoints: need p >= d");
  }
  if (p + m > model.height * model.width) {
    throw ConfigInvalid("keypoints: more keypoints than pixels");
  }
  if (!(noise_sigma >= 0.0)) {
    throw ConfigInvalid("keypoints: noise sigma must be >= 0");
  }
  const DisplacementField field = synth_motion(model);

  // Partial Fisher-Yates over the pixel grid.
  std::vector<Index> px = all_pixels(model.height, model.width);
  const auto take = static_cast<std::size_t>(p + m);
  for (std::size_t i = 0; i < take; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.uniform_index(px.size() - i));
    std::swap(px[i], px[j]);
  }

  SimulatedKeypoints out;
  KeypointSet& keys = out.keys;
  keys.height = model.height;
  keys.width = model.width;
  keys.noise_sigma = noise_sigma;
  keys.s1_pixels.assign(px.begin(), px.begin() + p);
  keys.s2_pixels.assign(px.begin() + p, px.begin() + p + m);

  // Noise before the permutations, so runs that differ only in k share
  // pixels and noise.
  const auto noise = [&](Index n) { return Vector(noise_sigma * gaussian_vector(n, rng)); };
  const Vector n1u = noise(p), n1v = noise(p), n2u = noise(m), n2v = noise(m);
  out.perm_u = sample_sparse_permutation(p, k, rng);
  out.perm_v = independent_permutations ? sample_sparse_permutation(p, k, rng)
                                        : out.perm_u;
  keys.s1_du = out.perm_u.apply(gather(field.u1, keys.s1_pixels)) + n1u;
  keys.s1_dv = out.perm_v.apply(gather(field.u2, keys.s1_pixels)) + n1v;
  keys.s2_du = gather(field.u1, keys.s2_pixels) + n2u;
  keys.s2_dv = gather(field.u2, keys.s2_pixels) + n2v;
  return out;
}

void write_keypoints_csv(const KeypointSet& keys, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError("cannot open '" + path + "' for writing: " + std::strerror(errno));
  }
  out << "set,row,col,du,dv\n";
  const auto rows = [&](const char* tag, const std::vector<Index>& px,
                        const Vector& du, const Vector& dv) {
    for (std::size_t i = 0; i < px.size(); ++i) {
      const auto ii = static_cast<Index>(i);
      out << tag << ',' << px[i] / keys.width << ',' << px[i] % keys.width << ','
          << format_double(du(ii)) << ',' << format_double(dv(ii)) << '\n';
    }
  };
  rows("S1", keys.s1_pixels, keys.s1_du, keys.s1_dv);
  rows("S2", keys.s2_pixels, keys.s2_du, keys.s2_dv);
  if (!out) throw IoError("write to '" + path + "' failed");
}

KeypointSet read_keypoints_csv(const std::string& path, Index height,
                               Index width, double noise_sigma) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open '" + path + "': " + std::strerror(errno));
  }
  std::string line;
  if (!std::getline(in, line) || line.rfind("set,row,col,du,dv", 0) != 0) {
    throw ConfigInvalid("'" + path + "': expected header set,row,col,du,dv");
  }
  KeypointSet keys;
  keys.height = height;
  keys.width = width;
  keys.noise_sigma = noise_sigma;
  std::vector<double> du1, dv1, du2, dv2;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    const std::string where = "'" + path + "' line " + std::to_string(line_no);
    if (cells.size() != 5) throw ConfigInvalid(where + ": expected 5 fields");
    Index row = 0, col = 0;
    double du = 0.0, dv = 0.0;
    try {
      row = std::stoll(cells[1]);
      col = std::stoll(cells[2]);
      du = std::stod(cells[3]);
      dv = std::stod(cells[4]);
    } catch (const std::exception&) {
      throw ConfigInvalid(where + ": malformed number");
    }
    if (row < 0 || row >= height || col < 0 || col >= width) {
      throw ConfigInvalid(where + ": pixel outside the image");
    }
    if (cells[0] == "S1") {
      keys.s1_pixels.push_back(row * width + col);
      du1.push_back(du);
      dv1.push_back(dv);
    } else if (cells[0] == "S2") {
      keys.s2_pixels.push_back(row * width + col);
      du2.push_back(du);
      dv2.push_back(dv);
    } else {
      throw ConfigInvalid(where + ": set must be S1 or S2");
    }
  }
  const auto to_vec = [](const std::vector<double>& v) {
    return Vector(Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size())));
  };
  keys.s1_du = to_vec(du1);
  keys.s1_dv = to_vec(dv1);
  keys.s2_du = to_vec(du2);
  keys.s2_dv = to_vec(dv2);
  keys.validate();
  return keys;
}

std::string motion_mode_name(MotionMode mode) {
  switch (mode) {
    case MotionMode::kC1: return "C1";
    case MotionMode::kC2: return "C2";
    case MotionMode::kC3: return "C3";
  }
  return "?";
}

DctMotionModel estimate_motion(const KeypointSet& keys, Index d,
                               const EstimatorConfig& cfg, MotionMode mode) {
  keys.validate();
  check_basis_size(keys.height, keys.width, d);
  DctMotionModel out;
  out.height = keys.height;
  out.width = keys.width;
  out.d = d;

  if (mode == MotionMode::kC2) {
    if (keys.s2_pixels.empty()) {
      throw RankDeficient("C2: no trusted keypoints");
    }
    const Matrix a = dct_basis_rows(keys.height, keys.width, d, keys.s2_pixels);
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(a);
    cod.setThreshold(kRankTolerance);
    if (cod.rank() == 0) throw RankDeficient("C2: trusted design has rank 0");
    out.theta1 = cod.solve(keys.s2_du);
    out.theta2 = cod.solve(keys.s2_dv);
    return out;
  }

  const Matrix a2 = dct_basis_rows(keys.height, keys.width, d, keys.s1_pixels);
  const bool use_s2 = mode == MotionMode::kC3;
  const Matrix a1 = use_s2 ? dct_basis_rows(keys.height, keys.width, d, keys.s2_pixels)
                           : Matrix(0, d);
  const TwoStageEstimator est(a1, a2, cfg);
  const Vector y1u = use_s2 ? keys.s2_du : Vector(0);
  const Vector y1v = use_s2 ? keys.s2_dv : Vector(0);
  out.theta1 = est.solve(y1u, keys.s1_du, keys.noise_sigma).x_hat;
  out.theta2 = est.solve(y1v, keys.s1_dv, keys.noise_sigma).x_hat;
  return out;
}

Image warp_image(const Image& img, const DisplacementField& field) {
  if (field.u1.size() != img.size() || field.u2.size() != img.size()) {
    throw DimensionMismatch("warp: field length must equal the pixel count");
  }
  Image out = Image::filled(img.height, img.width);
  const double max_r = static_cast<double>(img.height - 1);
  const double max_c = static_cast<double>(img.width - 1);
  for (Index r = 0; r < img.height; ++r) {
    for (Index c = 0; c < img.width; ++c) {
      const Index i = r * img.width + c;
      const double sr = std::clamp(static_cast<double>(r) - field.u2(i), 0.0, max_r);
      const double sc = std::clamp(static_cast<double>(c) - field.u1(i), 0.0, max_c);
      const auto r0 = static_cast<Index>(std::floor(sr));
      const auto c0 = static_cast<Index>(std::floor(sc));
      const Index r1 = std::min(r0 + 1, img.height - 1);
      const Index c1 = std::min(c0 + 1, img.width - 1);
      const double fr = sr - static_cast<double>(r0);
      const double fc = sc - static_cast<double>(c0);
      const double top = (1.0 - fc) * img.at(r0, c0) + fc * img.at(r0, c1);
      const double bottom = (1.0 - fc) * img.at(r1, c0) + fc * img.at(r1, c1);
      out.at(r, c) = (1.0 - fr) * top + fr * bottom;
    }
  }
  return out;
}

double nmse(const Image& a, const Image& b) {
  if (a.height != b.height || a.width != b.width) {
    throw DimensionMismatch("nmse: image sizes differ");
  }
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    const double diff = a.pixels[i] - b.pixels[i];
    num += diff * diff;
    den += a.pixels[i] * a.pixels[i];
  }
  if (den == 0.0) throw ZeroReference("nmse: reference image is all zero");
  return num / den;
}

AlignDemoResult run_align_demo(const AlignDemoConfig& config, const Image* base) {
  AlignDemoResult out;
  out.base = base != nullptr ? *base : procedural_image(config.height, config.width);

  DctMotionModel& model = out.true_model;
  model.height = out.base.height;
  model.width = out.base.width;
  model.d = config.d;
  check_basis_size(model.height, model.width, model.d);
  Rng theta_rng(derive_seed(config.seed, 1));
  model.theta1 = gaussian_vector(config.d, theta_rng);
  model.theta2 = gaussian_vector(config.d, theta_rng);
  // Orthonormal columns: the field's mean square is ||theta||^2 / pixels.
  const double ms = (model.theta1.squaredNorm() + model.theta2.squaredNorm()) /
                    (2.0 * static_cast<double>(out.base.size()));
  const double scale = config.motion_rms / std::sqrt(ms);
  model.theta1 *= scale;
  model.theta2 *= scale;

  Rng key_rng(derive_seed(config.seed, 2));
  const SimulatedKeypoints sim =
      simulate_keypoints(model, config.p, config.m, config.k, config.noise_sigma,
                         key_rng, config.independent_permutations);

  out.truth = warp_image(out.base, synth_motion(model));
  const auto reconstruct = [&](MotionMode mode, Image& img, double& err) {
    img = warp_image(out.base,
                     synth_motion(estimate_motion(sim.keys, config.d, config.cfg, mode)));
    err = nmse(out.truth, img);
  };
  reconstruct(MotionMode::kC1, out.c1, out.nmse_c1);
  reconstruct(MotionMode::kC2, out.c2, out.nmse_c2);
  reconstruct(MotionMode::kC3, out.c3, out.nmse_c3);
  return out;
}

}  // namespace uls
