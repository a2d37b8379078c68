#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "consmrf/dataset.hpp"
#include "consmrf/errors.hpp"
#include "consmrf/factors.hpp"

namespace consmrf {

/// Logistic function, evaluated on the branch that cannot overflow.
inline double sigmoid(double x) noexcept {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double z = std::exp(x);
  return z / (1.0 + z);
}

/// -ln sigmoid(y_pos - y_neg)
inline double bpr_pair_loss(double y_pos, double y_neg) noexcept {
  const double x = y_pos - y_neg;
  if (x >= 0) return std::log1p(std::exp(-x));
  return -x + std::log1p(std::exp(x));
}

/// Gradients of one BPR pair term with respect to a_s, a_o, a_o' and W.
struct GradientBundle {
  std::vector<double> g_as;
  std::vector<double> g_ao;
  std::vector<double> g_ao_prime;
  std::vector<double> g_W;
  /// d loss / d (y_pos - y_neg), i.e. -1 / (1 + exp(y_pos - y_neg)).
  double coefficient = 0.0;
};

/// Computes the pair gradients into `out`, reusing its storage.
inline void bpr_stochastic_gradients(const FactorMatrix& A, const RelationFactors& W, EntityId s, EntityId o,
                                     EntityId o_neg, GradientBundle& out) {
  const std::size_t k = W.k;
  out.g_as.resize(k);
  out.g_ao.resize(k);
  out.g_ao_prime.resize(k);
  out.g_W.resize(W.params.size());

  const auto as = A.row(s);
  const auto ao = A.row(o);
  const auto an = A.row(o_neg);
  // g_ao holds u = a_s^T W until it is scaled below.
  left_apply(W, as, out.g_ao);
  const double diff = dot(out.g_ao, ao) - dot(out.g_ao, an);
  const double c = -sigmoid(-diff);
  out.coefficient = c;

  // g_ao_prime doubles as scratch for d = a_o - a_o'.
  for (std::size_t f = 0; f < k; ++f) out.g_ao_prime[f] = ao[f] - an[f];
  right_apply(W, out.g_ao_prime, out.g_as);
  for (std::size_t f = 0; f < k; ++f) out.g_as[f] *= c;

  switch (W.shape) {
    case RelationWeightShape::identity: break;
    case RelationWeightShape::diagonal:
      for (std::size_t f = 0; f < k; ++f) out.g_W[f] = c * as[f] * out.g_ao_prime[f];
      break;
    case RelationWeightShape::full:
      for (std::size_t f = 0; f < k; ++f)
        for (std::size_t g = 0; g < k; ++g) out.g_W[f * k + g] = c * as[f] * out.g_ao_prime[g];
      break;
  }

  for (std::size_t f = 0; f < k; ++f) {
    out.g_ao[f] *= c;
    out.g_ao_prime[f] = -out.g_ao[f];
  }
}

inline GradientBundle bpr_stochastic_gradients(const RelationParams& p, EntityId s, EntityId o, EntityId o_neg) {
  GradientBundle out;
  bpr_stochastic_gradients(p.A, p.W, s, o, o_neg, out);
  return out;
}

/// Per-coordinate squared-gradient accumulators for A_r and W_r.
struct AdagradState {
  FactorMatrix entity_acc;
  std::vector<double> relation_acc;
  double delta = 1e-8;

  static AdagradState zeros(std::size_t n_entities, std::size_t k, std::size_t n_relation_params, double delta) {
    return {FactorMatrix(n_entities, k, 0.0), std::vector<double>(n_relation_params, 0.0), delta};
  }

  void reset_entities() { entity_acc.fill(0.0); }

  /// Effective step for a coordinate whose accumulator (already including the
  /// current gradient) is `acc`.
  static double step(double eta, double acc, double delta) noexcept { return eta / (std::sqrt(acc) + delta); }
};

/// Consensus coupling for the A_r rows: gradient gains v_e + rho (a_e - z_e).
struct ConsensusTerms {
  const FactorMatrix& Z;
  const FactorMatrix& V;
  double rho;
};

namespace detail {

inline void adagrad_update(double& param, double& acc, double total, double eta, double delta) noexcept {
  acc += total * total;
  param -= AdagradState::step(eta, acc, delta) * total;
}

inline void update_entity_row(FactorMatrix& A, FactorMatrix& entity_acc, EntityId e, std::span<const double> loss_grad,
                              double weight, const Hyperparams& hp, double delta, const ConsensusTerms* consensus) {
  auto row = A.row(e);
  auto acc = entity_acc.row(e);
  if (consensus) {
    const auto z = consensus->Z.row(e);
    const auto v = consensus->V.row(e);
    for (std::size_t f = 0; f < row.size(); ++f) {
      const double total = weight * loss_grad[f] + hp.lambda * row[f] + v[f] + consensus->rho * (row[f] - z[f]);
      adagrad_update(row[f], acc[f], total, hp.eta, delta);
    }
  } else {
    for (std::size_t f = 0; f < row.size(); ++f) {
      const double total = weight * loss_grad[f] + hp.lambda * row[f];
      adagrad_update(row[f], acc[f], total, hp.eta, delta);
    }
  }
}

inline bool row_finite(std::span<const double> row) noexcept {
  for (double v : row)
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace detail

/// One SGD step on (s, o, o'). The A rows are updated in the order s, o, o';
/// W gets only loss gradient plus L2. `weight` scales the loss gradient, and
/// `consensus` (optional) adds the ADMM dual and penalty terms to A rows.
/// Accumulators are passed separately so a shared A can keep one accumulator
/// while each W keeps its own.
inline void apply_sgd_step(FactorMatrix& A, FactorMatrix& entity_acc, RelationFactors& W,
                           std::span<double> relation_acc, const GradientBundle& grads, EntityId s, EntityId o,
                           EntityId o_neg, double weight, const Hyperparams& hp, double delta,
                           const ConsensusTerms* consensus) {
  detail::update_entity_row(A, entity_acc, s, grads.g_as, weight, hp, delta, consensus);
  detail::update_entity_row(A, entity_acc, o, grads.g_ao, weight, hp, delta, consensus);
  detail::update_entity_row(A, entity_acc, o_neg, grads.g_ao_prime, weight, hp, delta, consensus);
  for (std::size_t i = 0; i < W.params.size(); ++i) {
    const double total = weight * grads.g_W[i] + hp.lambda * W.params[i];
    detail::adagrad_update(W.params[i], relation_acc[i], total, hp.eta, delta);
  }
  if (!detail::row_finite(A.row(s)) || !detail::row_finite(A.row(o)) || !detail::row_finite(A.row(o_neg)) ||
      !W.all_finite())
    throw DivergenceError("non-finite parameter after SGD step on (" + std::to_string(to_index(s)) + ", " +
                          std::to_string(to_index(o)) + ", " + std::to_string(to_index(o_neg)) + ")");
}

inline void apply_sgd_step(FactorMatrix& A, RelationFactors& W, const GradientBundle& grads, EntityId s, EntityId o,
                           EntityId o_neg, double weight, const Hyperparams& hp, AdagradState& ada,
                           const ConsensusTerms* consensus) {
  apply_sgd_step(A, ada.entity_acc, W, ada.relation_acc, grads, s, o, o_neg, weight, hp, ada.delta, consensus);
}

/// The UpdateAW inner step: loss gradient + lambda*row + v_row + rho*(row - z_row)
/// on each touched A_r row, loss gradient + lambda*W on W_r.
inline void apply_admm_sgd_step(RelationParams& p, const GradientBundle& grads, EntityId s, EntityId o,
                                EntityId o_neg, const FactorMatrix& Z, const FactorMatrix& V, const Hyperparams& hp,
                                AdagradState& ada) {
  const ConsensusTerms consensus{Z, V, hp.rho};
  apply_sgd_step(p.A, p.W, grads, s, o, o_neg, 1.0, hp, ada, &consensus);
}

/// Monte-Carlo estimate of the per-pair BPR loss of one relation: positives
/// drawn uniformly from `D_r`, negatives from the objects unlinked in `D_r`.
inline double estimate_relation_loss(const RelationData& D_r, std::size_t n_entities, const FactorMatrix& A,
                                     const RelationFactors& W, Rng& rng, std::size_t n_samples) {
  const auto edges = D_r.edges();
  if (n_samples == 0 || edges.empty()) throw std::invalid_argument("estimate_relation_loss: nothing to sample");
  std::uniform_int_distribution<std::size_t> pick(0, edges.size() - 1);
  double sum = 0.0;
  for (std::size_t i = 0; i < n_samples; ++i) {
    const Edge& e = edges[pick(rng)];
    const EntityId neg = sample_unlinked_object(D_r, n_entities, e.subject, rng);
    sum += bpr_pair_loss(score(A, W, e.subject, e.object), score(A, W, e.subject, neg));
  }
  return sum / static_cast<double>(n_samples);
}

inline double estimate_relation_loss(const MultiRelationalDataset& scope, RelationId r, const RelationParams& p,
                                     Rng& rng, std::size_t n_samples) {
  return estimate_relation_loss(scope.relation(r), scope.n_entities(), p.A, p.W, rng, n_samples);
}

}  // namespace consmrf
