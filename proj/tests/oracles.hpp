#pragma once

// Test-side reference implementations. They share only the data types and
// the seed-stream convention with the library, never its arithmetic helpers.

#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <utility>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "consmrf/dataset.hpp"
#include "consmrf/factors.hpp"
#include "consmrf/rng.hpp"

namespace oracle {

using consmrf::EntityId;
using consmrf::RelationWeightShape;
using consmrf::Rng;

/// Plain single-relation BPR factorization with ADAGRAD, written out longhand.
struct BprModel {
  std::size_t n = 0;
  std::size_t k = 0;
  RelationWeightShape shape = RelationWeightShape::diagonal;
  std::vector<double> A;
  std::vector<double> W;
  std::vector<double> acc_A;
  std::vector<double> acc_W;
};

inline std::size_t weight_count(RelationWeightShape shape, std::size_t k) {
  return shape == RelationWeightShape::identity ? 0 : shape == RelationWeightShape::diagonal ? k : k * k;
}

/// A then W from the init stream of `stream`, each entry N(0, sigma^2).
inline BprModel init_model(std::size_t n, std::size_t k, RelationWeightShape shape, double sigma,
                           std::uint64_t seed, std::size_t stream) {
  BprModel m{n, k, shape, std::vector<double>(n * k), std::vector<double>(weight_count(shape, k)),
             std::vector<double>(n * k, 0.0), std::vector<double>(weight_count(shape, k), 0.0)};
  Rng rng = consmrf::make_rng(seed, {consmrf::seed_tag::kInit, stream});
  std::normal_distribution<double> normal(0.0, sigma);
  for (double& v : m.A) v = normal(rng);
  for (double& v : m.W) v = normal(rng);
  return m;
}

inline double logistic(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double z = std::exp(x);
  return z / (1.0 + z);
}

/// u = a^T W
inline std::vector<double> row_times_w(const BprModel& m, const double* a) {
  std::vector<double> u(m.k, 0.0);
  for (std::size_t g = 0; g < m.k; ++g) {
    if (m.shape == RelationWeightShape::identity) {
      u[g] = a[g];
    } else if (m.shape == RelationWeightShape::diagonal) {
      u[g] = a[g] * m.W[g];
    } else {
      double sum = 0.0;
      for (std::size_t f = 0; f < m.k; ++f) sum += a[f] * m.W[f * m.k + g];
      u[g] = sum;
    }
  }
  return u;
}

/// W x
inline std::vector<double> w_times_col(const BprModel& m, const std::vector<double>& x) {
  std::vector<double> out(m.k, 0.0);
  for (std::size_t f = 0; f < m.k; ++f) {
    if (m.shape == RelationWeightShape::identity) {
      out[f] = x[f];
    } else if (m.shape == RelationWeightShape::diagonal) {
      out[f] = m.W[f] * x[f];
    } else {
      double sum = 0.0;
      for (std::size_t g = 0; g < m.k; ++g) sum += m.W[f * m.k + g] * x[g];
      out[f] = sum;
    }
  }
  return out;
}

inline double inner(const std::vector<double>& u, const double* a) {
  double sum = 0.0;
  for (std::size_t f = 0; f < u.size(); ++f) sum += u[f] * a[f];
  return sum;
}

inline void adagrad(double& param, double& acc, double grad, double eta, double delta) {
  acc += grad * grad;
  const double step = eta / (std::sqrt(acc) + delta);
  param -= step * grad;
}

/// One draw-one-update-one step on (s, o, n): rows s, o, n in that order, then W.
inline void bpr_step(BprModel& m, std::size_t s, std::size_t o, std::size_t n, double lambda, double eta,
                     double delta) {
  const std::size_t k = m.k;
  const double* as = &m.A[s * k];
  const double* ao = &m.A[o * k];
  const double* an = &m.A[n * k];
  const auto u = row_times_w(m, as);
  const double diff = inner(u, ao) - inner(u, an);
  const double c = -logistic(-diff);
  std::vector<double> d(k);
  for (std::size_t f = 0; f < k; ++f) d[f] = ao[f] - an[f];
  auto g_s = w_times_col(m, d);
  for (double& v : g_s) v *= c;
  std::vector<double> g_w(m.W.size());
  if (m.shape == RelationWeightShape::diagonal)
    for (std::size_t f = 0; f < k; ++f) g_w[f] = c * as[f] * d[f];
  if (m.shape == RelationWeightShape::full)
    for (std::size_t f = 0; f < k; ++f)
      for (std::size_t g = 0; g < k; ++g) g_w[f * k + g] = c * as[f] * d[g];
  std::vector<double> g_o(k), g_n(k);
  for (std::size_t f = 0; f < k; ++f) {
    g_o[f] = u[f] * c;
    g_n[f] = -g_o[f];
  }
  auto update_row = [&](std::size_t e, const std::vector<double>& grad) {
    for (std::size_t f = 0; f < k; ++f) {
      double& a = m.A[e * k + f];
      adagrad(a, m.acc_A[e * k + f], grad[f] + lambda * a, eta, delta);
    }
  };
  update_row(s, g_s);
  update_row(o, g_o);
  update_row(n, g_n);
  for (std::size_t i = 0; i < m.W.size(); ++i) adagrad(m.W[i], m.acc_W[i], g_w[i] + lambda * m.W[i], eta, delta);
}

/// `budget` steps with edges drawn uniformly from `rel` and negatives by
/// plain rejection against `rel`.
inline void bpr_round(BprModel& m, const consmrf::RelationData& rel, std::size_t budget, double lambda, double eta,
                      double delta, Rng& rng) {
  const auto edges = rel.edges();
  std::uniform_int_distribution<std::size_t> pick(0, edges.size() - 1);
  std::uniform_int_distribution<std::uint32_t> entity(0, static_cast<std::uint32_t>(m.n - 1));
  for (std::size_t i = 0; i < budget; ++i) {
    const auto& e = edges[pick(rng)];
    EntityId neg{};
    do neg = EntityId{entity(rng)};
    while (rel.contains(e.subject, neg));
    bpr_step(m, consmrf::to_index(e.subject), consmrf::to_index(e.object), consmrf::to_index(neg), lambda, eta,
             delta);
  }
}

/// `n_relations` relations over `n_entities` entities, `n_triples` total,
/// relation sizes deliberately unequal.
inline consmrf::MultiRelationalDataset small_dataset(std::size_t n_entities, std::size_t n_relations,
                                                     std::size_t n_triples, std::uint64_t seed) {
  auto vocab = std::make_shared<consmrf::Vocabulary>();
  for (std::size_t e = 0; e < n_entities; ++e) vocab->entities.intern("e" + std::to_string(e));
  for (std::size_t r = 0; r < n_relations; ++r) vocab->relations.intern("r" + std::to_string(r));
  consmrf::MultiRelationalDataset ds(vocab);
  Rng rng(seed);
  std::uniform_int_distribution<std::uint32_t> entity(0, static_cast<std::uint32_t>(n_entities - 1));
  std::vector<double> weights;
  for (std::size_t r = 0; r < n_relations; ++r) weights.push_back(static_cast<double>(r + 1));
  std::discrete_distribution<std::size_t> relation(weights.begin(), weights.end());
  for (std::size_t r = 0; r < n_relations; ++r)
    ds.add({EntityId{entity(rng)}, EntityId{entity(rng)}, consmrf::relation_id(r), 1.0});
  while (ds.n_triples() < n_triples)
    ds.add({EntityId{entity(rng)}, EntityId{entity(rng)}, consmrf::relation_id(relation(rng)), 1.0});
  return ds;
}

/// Scores looked up from an explicit (relation, subject) -> per-object table.
struct TableScorer {
  std::map<std::pair<std::size_t, std::size_t>, std::vector<double>> table;

  std::vector<double> score_candidates(consmrf::RelationId r, EntityId s, std::span<const EntityId> objects) const {
    const auto& row = table.at({consmrf::to_index(r), consmrf::to_index(s)});
    std::vector<double> out;
    for (EntityId o : objects) out.push_back(row.at(consmrf::to_index(o)));
    return out;
  }
};

/// Five entities, two relations, three evaluation units. With m_neg >= 5
/// every unlinked object becomes a negative, so each unit is enumerable:
///   (r0, e0): pos {e3 .8, e4 .3}, neg {e0 .9, e2 .3}
///   (r0, e1): pos {e0 .5},        neg {e1 .5, e3 .2, e4 .7}
///   (r1, e3): pos {e0 1},         neg {e1 -1, e2 0, e3 2}
struct ToyEvaluation {
  consmrf::SplitDataset splits;
  TableScorer scorer;
};

inline ToyEvaluation toy_evaluation() {
  auto vocab = std::make_shared<consmrf::Vocabulary>();
  for (int e = 0; e < 5; ++e) vocab->entities.intern("e" + std::to_string(e));
  vocab->relations.intern("r0");
  vocab->relations.intern("r1");
  auto t = [](std::size_t s, std::size_t r, std::size_t o) {
    return consmrf::Triple{consmrf::entity_id(s), consmrf::entity_id(o), consmrf::relation_id(r), 1.0};
  };
  const std::vector<consmrf::Triple> train{t(0, 0, 1), t(1, 0, 2), t(2, 0, 3), t(3, 1, 4), t(0, 1, 2)};
  const std::vector<consmrf::Triple> valid{t(2, 0, 4)};
  const std::vector<consmrf::Triple> test{t(0, 0, 3), t(0, 0, 4), t(1, 0, 0), t(3, 1, 0)};
  TableScorer scorer;
  scorer.table[{0, 0}] = {0.9, 0.1, 0.3, 0.8, 0.3};
  scorer.table[{0, 1}] = {0.5, 0.5, 0.0, 0.2, 0.7};
  scorer.table[{1, 3}] = {1.0, -1.0, 0.0, 2.0, 0.0};
  return {consmrf::assemble_split(vocab, train, valid, test), scorer};
}

}  // namespace oracle
