#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string_view>
#include <utility>
#include <vector>

#include "consmrf/dataset.hpp"
#include "consmrf/rng.hpp"

namespace consmrf {

enum class RelationWeightShape : std::uint32_t { identity = 0, diagonal = 1, full = 2 };

constexpr std::string_view to_string(RelationWeightShape s) noexcept {
  switch (s) {
    case RelationWeightShape::identity: return "identity";
    case RelationWeightShape::diagonal: return "diagonal";
    case RelationWeightShape::full: return "full";
  }
  return "?";
}

inline std::optional<RelationWeightShape> parse_shape(std::string_view s) {
  for (auto v : {RelationWeightShape::identity, RelationWeightShape::diagonal, RelationWeightShape::full})
    if (to_string(v) == s) return v;
  return std::nullopt;
}

/// Dense row-major matrix, one row per entity.
class FactorMatrix {
 public:
  FactorMatrix() = default;
  FactorMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  std::span<double> row(std::size_t i) noexcept { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const noexcept { return {data_.data() + i * cols_, cols_}; }
  std::span<double> row(EntityId e) noexcept { return row(to_index(e)); }
  std::span<const double> row(EntityId e) const noexcept { return row(to_index(e)); }

  double& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * cols_ + j]; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  friend bool operator==(const FactorMatrix&, const FactorMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline double frobenius_distance(const FactorMatrix& a, const FactorMatrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw std::invalid_argument("frobenius_distance: shape mismatch");
  double sum = 0.0;
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) sum += (av[i] - bv[i]) * (av[i] - bv[i]);
  return std::sqrt(sum);
}

/// Relation factor W_r. Identity carries no parameters, diagonal carries k
/// and full carries k*k (row-major).
struct RelationFactors {
  RelationWeightShape shape = RelationWeightShape::diagonal;
  std::size_t k = 0;
  std::vector<double> params;

  static constexpr std::size_t parameter_count(RelationWeightShape shape, std::size_t k) noexcept {
    switch (shape) {
      case RelationWeightShape::identity: return 0;
      case RelationWeightShape::diagonal: return k;
      case RelationWeightShape::full: return k * k;
    }
    return 0;
  }

  static RelationFactors zeros(RelationWeightShape shape, std::size_t k) {
    return {shape, k, std::vector<double>(parameter_count(shape, k), 0.0)};
  }

  std::size_t parameter_count() const noexcept { return params.size(); }

  /// Dense k x k form, mostly for tests and inspection.
  std::vector<double> dense() const {
    std::vector<double> m(k * k, 0.0);
    for (std::size_t f = 0; f < k; ++f) {
      switch (shape) {
        case RelationWeightShape::identity: m[f * k + f] = 1.0; break;
        case RelationWeightShape::diagonal: m[f * k + f] = params[f]; break;
        case RelationWeightShape::full:
          for (std::size_t g = 0; g < k; ++g) m[f * k + g] = params[f * k + g];
          break;
      }
    }
    return m;
  }

  bool all_finite() const noexcept {
    return std::all_of(params.begin(), params.end(), [](double v) { return std::isfinite(v); });
  }

  friend bool operator==(const RelationFactors&, const RelationFactors&) = default;
};

struct RelationParams {
  FactorMatrix A;
  RelationFactors W;

  friend bool operator==(const RelationParams&, const RelationParams&) = default;
};

struct ConsensusState {
  FactorMatrix Z;
  std::vector<FactorMatrix> V;

  friend bool operator==(const ConsensusState&, const ConsensusState&) = default;
};

struct Hyperparams {
  std::size_t k = 10;
  double lambda = 0.005;
  double eta = 0.5;
  double rho = 0.0005;
  double sigma_init = 0.1;
  double epsilon = 1e-4;
  /// SGD samples per round per relation; unset means |D_r|.
  std::optional<std::size_t> inner_budget;
  std::size_t max_rounds = 200;
  std::size_t eval_negatives = 100;
  std::size_t top_k = 5;
  double alpha = 0.25;
  std::uint64_t seed = 1;
  double adagrad_delta = 1e-8;
  RelationWeightShape shape = RelationWeightShape::diagonal;

  void validate() const {
    if (k < 1) throw std::invalid_argument("k must be >= 1");
    if (!(lambda >= 0 && rho >= 0 && sigma_init >= 0 && epsilon >= 0))
      throw std::invalid_argument("lambda, rho, sigma_init and epsilon must be >= 0");
    if (!(eta > 0)) throw std::invalid_argument("eta must be > 0");
    if (!(alpha >= 0)) throw std::invalid_argument("alpha must be >= 0");
  }

  std::size_t budget_for(std::size_t relation_size) const { return inner_budget.value_or(relation_size); }
};

inline void fill_gaussian(std::span<double> out, double sigma, Rng& rng) {
  if (sigma == 0.0) {
    std::fill(out.begin(), out.end(), 0.0);
    return;
  }
  std::normal_distribution<double> normal(0.0, sigma);
  for (double& v : out) v = normal(rng);
}

/// Draws A_r then W_r from the stream of relation `r`. Shared by every model
/// kind so that equal seeds give equal starting points.
inline RelationParams init_relation_params(std::size_t n_entities, std::size_t r, const Hyperparams& hp,
                                           RelationWeightShape shape) {
  RelationParams p{FactorMatrix(n_entities, hp.k), RelationFactors::zeros(shape, hp.k)};
  Rng rng = make_rng(hp.seed, {seed_tag::kInit, r});
  fill_gaussian(p.A.values(), hp.sigma_init, rng);
  fill_gaussian(p.W.params, hp.sigma_init, rng);
  return p;
}

inline std::pair<std::vector<RelationParams>, ConsensusState> init_model(std::size_t n_entities,
                                                                         std::size_t n_relations,
                                                                         const Hyperparams& hp,
                                                                         RelationWeightShape shape) {
  if (n_entities < 1 || n_relations < 1) throw std::invalid_argument("init_model: empty model");
  hp.validate();
  ConsensusState state{FactorMatrix(n_entities, hp.k), {}};
  Rng z_rng = make_rng(hp.seed, {seed_tag::kConsensus});
  fill_gaussian(state.Z.values(), hp.sigma_init, z_rng);
  std::vector<RelationParams> params;
  params.reserve(n_relations);
  for (std::size_t r = 0; r < n_relations; ++r) {
    params.push_back(init_relation_params(n_entities, r, hp, shape));
    state.V.emplace_back(n_entities, hp.k, 0.0);
  }
  return {std::move(params), std::move(state)};
}

// ---------------------------------------------------------------------------
// Bilinear kernels

/// out = (a^T W)^T
inline void left_apply(const RelationFactors& W, std::span<const double> a, std::span<double> out) {
  const std::size_t k = W.k;
  switch (W.shape) {
    case RelationWeightShape::identity:
      std::copy(a.begin(), a.end(), out.begin());
      break;
    case RelationWeightShape::diagonal:
      for (std::size_t f = 0; f < k; ++f) out[f] = a[f] * W.params[f];
      break;
    case RelationWeightShape::full:
      for (std::size_t g = 0; g < k; ++g) {
        double sum = 0.0;
        for (std::size_t f = 0; f < k; ++f) sum += a[f] * W.params[f * k + g];
        out[g] = sum;
      }
      break;
  }
}

/// out = W x
inline void right_apply(const RelationFactors& W, std::span<const double> x, std::span<double> out) {
  const std::size_t k = W.k;
  switch (W.shape) {
    case RelationWeightShape::identity:
      std::copy(x.begin(), x.end(), out.begin());
      break;
    case RelationWeightShape::diagonal:
      for (std::size_t f = 0; f < k; ++f) out[f] = W.params[f] * x[f];
      break;
    case RelationWeightShape::full:
      for (std::size_t f = 0; f < k; ++f) {
        double sum = 0.0;
        for (std::size_t g = 0; g < k; ++g) sum += W.params[f * k + g] * x[g];
        out[f] = sum;
      }
      break;
  }
}

inline double dot(std::span<const double> a, std::span<const double> b) noexcept {
  double sum = 0.0;
  for (std::size_t f = 0; f < a.size(); ++f) sum += a[f] * b[f];
  return sum;
}

/// a_s^T W a_o, accumulated as dot(a_s^T W, a_o).
inline double score(const FactorMatrix& A, const RelationFactors& W, EntityId s, EntityId o) {
  const auto as = A.row(s);
  const auto ao = A.row(o);
  const std::size_t k = W.k;
  double sum = 0.0;
  switch (W.shape) {
    case RelationWeightShape::identity:
      for (std::size_t f = 0; f < k; ++f) sum += as[f] * ao[f];
      break;
    case RelationWeightShape::diagonal:
      for (std::size_t f = 0; f < k; ++f) sum += (as[f] * W.params[f]) * ao[f];
      break;
    case RelationWeightShape::full:
      for (std::size_t g = 0; g < k; ++g) {
        double u = 0.0;
        for (std::size_t f = 0; f < k; ++f) u += as[f] * W.params[f * k + g];
        sum += u * ao[g];
      }
      break;
  }
  return sum;
}

inline double score(const RelationParams& p, EntityId s, EntityId o) { return score(p.A, p.W, s, o); }

inline std::vector<double> score_candidates(const FactorMatrix& A, const RelationFactors& W, EntityId s,
                                            std::span<const EntityId> objects) {
  std::vector<double> out;
  out.reserve(objects.size());
  if (objects.empty()) return out;
  std::vector<double> u(W.k);
  left_apply(W, A.row(s), u);
  for (EntityId o : objects) out.push_back(dot(u, A.row(o)));
  return out;
}

inline std::vector<double> score_candidates(const RelationParams& p, EntityId s, std::span<const EntityId> objects) {
  return score_candidates(p.A, p.W, s, objects);
}

}  // namespace consmrf
