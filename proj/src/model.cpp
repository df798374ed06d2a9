#include "uls/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "uls/errors.hpp"

namespace uls {

SparsePermutation SparsePermutation::identity(Index size) {
  SparsePermutation perm;
  perm.mapping_.resize(static_cast<std::size_t>(size));
  std::iota(perm.mapping_.begin(), perm.mapping_.end(), Index{0});
  return perm;
}

SparsePermutation SparsePermutation::from_mapping(std::vector<Index> mapping,
                                                  Index budget) {
  const auto size = static_cast<Index>(mapping.size());
  std::vector<bool> seen(mapping.size(), false);
  SparsePermutation perm;
  for (Index i = 0; i < size; ++i) {
    const Index target = mapping[static_cast<std::size_t>(i)];
    if (target < 0 || target >= size || seen[static_cast<std::size_t>(target)]) {
      throw ConfigInvalid("permutation mapping is not a bijection");
    }
    seen[static_cast<std::size_t>(target)] = true;
    if (target != i) {
      perm.support_.push_back(i);
    }
  }
  if (static_cast<Index>(perm.support_.size()) > budget) {
    throw InvalidSparsity("permutation displaces " +
                          std::to_string(perm.support_.size()) +
                          " indices, budget is " + std::to_string(budget));
  }
  perm.mapping_ = std::move(mapping);
  return perm;
}

Vector SparsePermutation::apply(const Vector& v) const {
  if (v.size() != size()) {
    throw DimensionMismatch("permutation: vector length mismatch");
  }
  Vector out(v.size());
  for (Index i = 0; i < size(); ++i) {
    out[i] = v[mapping_[static_cast<std::size_t>(i)]];
  }
  return out;
}

Vector SparsePermutation::apply_inverse(const Vector& v) const {
  if (v.size() != size()) {
    throw DimensionMismatch("permutation: vector length mismatch");
  }
  Vector out(v.size());
  for (Index i = 0; i < size(); ++i) {
    out[mapping_[static_cast<std::size_t>(i)]] = v[i];
  }
  return out;
}

namespace {

void check_sparsity(Index p, Index k) {
  if (k == 1) {
    throw InvalidSparsity(
        "k = 1 is impossible: a permutation cannot displace exactly one index");
  }
  if (k < 0 || k > p) {
    throw InvalidSparsity("k must lie in [0, p]; got k = " + std::to_string(k) +
                          ", p = " + std::to_string(p));
  }
}

}  // namespace

SparsePermutation sample_sparse_permutation(Index p, Index k, Rng& rng,
                                            SparsityMode mode) {
  check_sparsity(p, k);
  if (mode == SparsityMode::kUniformUpTo && k > 0) {
    // Choices {0, 2, 3, ..., k}: k values in total.
    const auto pick = static_cast<Index>(rng.uniform_index(
        static_cast<std::uint64_t>(k)));
    k = pick == 0 ? 0 : pick + 1;
  }
  if (k == 0) {
    return SparsePermutation::identity(p);
  }

  // Partial Fisher-Yates for the subset.
  std::vector<Index> pool(static_cast<std::size_t>(p));
  std::iota(pool.begin(), pool.end(), Index{0});
  for (Index i = 0; i < k; ++i) {
    const auto j = i + static_cast<Index>(rng.uniform_index(
                           static_cast<std::uint64_t>(p - i)));
    std::swap(pool[static_cast<std::size_t>(i)],
              pool[static_cast<std::size_t>(j)]);
  }
  std::vector<Index> subset(pool.begin(), pool.begin() + k);
  std::sort(subset.begin(), subset.end());

  std::vector<Index> shuffle(static_cast<std::size_t>(k));
  bool deranged = false;
  while (!deranged) {
    std::iota(shuffle.begin(), shuffle.end(), Index{0});
    for (Index i = k - 1; i > 0; --i) {
      const auto j = static_cast<Index>(
          rng.uniform_index(static_cast<std::uint64_t>(i + 1)));
      std::swap(shuffle[static_cast<std::size_t>(i)],
                shuffle[static_cast<std::size_t>(j)]);
    }
    deranged = true;
    for (Index i = 0; i < k; ++i) {
      if (shuffle[static_cast<std::size_t>(i)] == i) {
        deranged = false;
        break;
      }
    }
  }

  std::vector<Index> mapping(static_cast<std::size_t>(p));
  std::iota(mapping.begin(), mapping.end(), Index{0});
  for (Index i = 0; i < k; ++i) {
    mapping[static_cast<std::size_t>(subset[static_cast<std::size_t>(i)])] =
        subset[static_cast<std::size_t>(shuffle[static_cast<std::size_t>(i)])];
  }
  return SparsePermutation::from_mapping(std::move(mapping), k);
}

void ProblemConfig::validate() const {
  if (d < 1) {
    throw ConfigInvalid("d must be positive");
  }
  if (m < 0 || m >= d) {
    throw ConfigInvalid("assumption m < d violated: m = " + std::to_string(m) +
                        ", d = " + std::to_string(d));
  }
  if (p <= d) {
    throw ConfigInvalid("assumption p > d violated: p = " + std::to_string(p) +
                        ", d = " + std::to_string(d));
  }
  check_sparsity(p, k);
  if (noise_percent.has_value() == sigma.has_value()) {
    throw ConfigInvalid("exactly one of noise_percent and sigma must be set");
  }
  const double level = noise_percent ? *noise_percent : *sigma;
  if (!(level >= 0.0) || !std::isfinite(level)) {
    throw ConfigInvalid("noise level must be finite and nonnegative");
  }
}

Matrix ProblemInstance::stacked() const {
  Matrix a(n(), d);
  a.topRows(m) = a1;
  a.bottomRows(p) = a2;
  return a;
}

Vector ProblemInstance::observations() const {
  Vector y(n());
  y.head(m) = y1;
  y.tail(p) = y2;
  return y;
}

Vector permutation_error_vector(const SparsePermutation& perm, const Matrix& a2,
                                const Vector& x0) {
  if (a2.cols() != x0.size() || a2.rows() != perm.size()) {
    throw DimensionMismatch("permutation_error_vector: dimension mismatch");
  }
  const Vector clean = a2 * x0;
  return perm.apply(clean) - clean;
}

double noise_sigma_from_percent(double noise_percent, const Matrix& a,
                                const Vector& x0) {
  if (!(noise_percent >= 0.0)) {
    throw ConfigInvalid("noise percent must be nonnegative");
  }
  if (a.cols() != x0.size()) {
    throw DimensionMismatch("noise_sigma_from_percent: dimension mismatch");
  }
  const Vector clean = a * x0;
  return noise_percent / 100.0 * clean.cwiseAbs().mean();
}

ProblemInstance assemble_instance(Matrix a1, Matrix a2, Vector x0,
                                  SparsePermutation perm, double sigma,
                                  Rng& rng) {
  if (a1.cols() != a2.cols() || x0.size() != a2.cols() ||
      perm.size() != a2.rows()) {
    throw DimensionMismatch("assemble_instance: dimension mismatch");
  }
  ProblemInstance inst;
  inst.d = a2.cols();
  inst.m = a1.rows();
  inst.p = a2.rows();
  inst.k = static_cast<Index>(perm.support().size());
  inst.sigma = sigma;
  const Vector clean2 = a2 * x0;
  inst.z0 = perm.apply(clean2) - clean2;
  inst.eps1 = sigma * gaussian_vector(inst.m, rng);
  inst.eps2 = sigma * gaussian_vector(inst.p, rng);
  inst.y1 = a1 * x0 + inst.eps1;
  inst.y2 = perm.apply(clean2) + inst.eps2;
  inst.a1 = std::move(a1);
  inst.a2 = std::move(a2);
  inst.x0 = std::move(x0);
  inst.perm = std::move(perm);
  return inst;
}

ProblemInstance generate_instance(const ProblemConfig& config, Rng& rng,
                                  const std::optional<Vector>& x0) {
  config.validate();
  if (x0 && x0->size() != config.d) {
    throw DimensionMismatch("supplied x0 has the wrong length");
  }
  const Matrix a = gaussian_matrix(config.m + config.p, config.d, rng);
  Vector truth = x0 ? *x0 : gaussian_vector(config.d, rng);
  SparsePermutation perm =
      sample_sparse_permutation(config.p, config.k, rng, config.sparsity_mode);
  const double sigma = config.sigma
                           ? *config.sigma
                           : noise_sigma_from_percent(*config.noise_percent, a,
                                                      truth);
  ProblemInstance inst =
      assemble_instance(a.topRows(config.m), a.bottomRows(config.p),
                        std::move(truth), std::move(perm), sigma, rng);
  inst.k = config.k;
  inst.seed = config.seed;
  return inst;
}

ProblemInstance generate_instance(const ProblemConfig& config) {
  Rng rng(config.seed);
  return generate_instance(config, rng);
}

namespace {

nlohmann::json rows_to_json(const Matrix& a) {
  nlohmann::json rows = nlohmann::json::array();
  for (Index i = 0; i < a.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Index j = 0; j < a.cols(); ++j) {
      row.push_back(a(i, j));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

nlohmann::json vector_to_json(const Vector& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

Matrix rows_from_json(const nlohmann::json& rows, Index expected_rows,
                      Index cols, const char* name) {
  if (!rows.is_array() || static_cast<Index>(rows.size()) != expected_rows) {
    throw ConfigInvalid(std::string(name) + ": expected " +
                        std::to_string(expected_rows) + " rows");
  }
  Matrix a(expected_rows, cols);
  for (Index i = 0; i < expected_rows; ++i) {
    const auto& row = rows[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Index>(row.size()) != cols) {
      throw ConfigInvalid(std::string(name) + ": ragged row " +
                          std::to_string(i));
    }
    for (Index j = 0; j < cols; ++j) {
      a(i, j) = row[static_cast<std::size_t>(j)].get<double>();
    }
  }
  require_finite(a, name);
  return a;
}

Vector vector_from_json(const nlohmann::json& values, Index expected,
                        const char* name) {
  if (!values.is_array() || static_cast<Index>(values.size()) != expected) {
    throw ConfigInvalid(std::string(name) + ": expected length " +
                        std::to_string(expected));
  }
  Vector v(expected);
  for (Index i = 0; i < expected; ++i) {
    v[i] = values[static_cast<std::size_t>(i)].get<double>();
  }
  require_finite(v, name);
  return v;
}

}  // namespace

nlohmann::json instance_to_json(const ProblemInstance& inst) {
  nlohmann::json doc;
  doc["d"] = inst.d;
  doc["m"] = inst.m;
  doc["p"] = inst.p;
  doc["k"] = inst.k;
  doc["sigma"] = inst.sigma;
  doc["seed"] = inst.seed;
  doc["a1"] = rows_to_json(inst.a1);
  doc["a2"] = rows_to_json(inst.a2);
  if (inst.has_ground_truth()) {
    doc["x0"] = vector_to_json(inst.x0);
  }
  doc["mapping"] = inst.perm.mapping();
  doc["y1"] = vector_to_json(inst.y1);
  doc["y2"] = vector_to_json(inst.y2);
  return doc;
}

ProblemInstance instance_from_json(const nlohmann::json& doc) {
  try {
    ProblemInstance inst;
    inst.d = doc.at("d").get<Index>();
    inst.m = doc.at("m").get<Index>();
    inst.p = doc.at("p").get<Index>();
    inst.k = doc.value("k", Index{0});
    inst.sigma = doc.value("sigma", 0.0);
    inst.seed = doc.value("seed", std::uint64_t{0});
    if (inst.d < 1 || inst.m < 0 || inst.p < 1) {
      throw ConfigInvalid("instance: invalid dimensions");
    }
    inst.a1 = rows_from_json(doc.at("a1"), inst.m, inst.d, "a1");
    inst.a2 = rows_from_json(doc.at("a2"), inst.p, inst.d, "a2");
    inst.y1 = vector_from_json(doc.at("y1"), inst.m, "y1");
    inst.y2 = vector_from_json(doc.at("y2"), inst.p, "y2");
    if (doc.contains("mapping")) {
      inst.perm = SparsePermutation::from_mapping(
          doc.at("mapping").get<std::vector<Index>>(), inst.p);
    } else {
      inst.perm = SparsePermutation::identity(inst.p);
    }
    if (doc.contains("x0")) {
      inst.x0 = vector_from_json(doc.at("x0"), inst.d, "x0");
      inst.z0 = permutation_error_vector(inst.perm, inst.a2, inst.x0);
      inst.eps1 = inst.y1 - inst.a1 * inst.x0;
      inst.eps2 = inst.y2 - inst.perm.apply(inst.a2 * inst.x0);
    }
    return inst;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigInvalid(std::string("instance JSON: ") + e.what());
  }
}

}  // namespace uls
