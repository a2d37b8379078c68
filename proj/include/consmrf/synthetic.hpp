#pragma once

#include <algorithm>
#include <cstdint>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "consmrf/dataset.hpp"
#include "consmrf/factors.hpp"
#include "consmrf/rng.hpp"

namespace consmrf {

struct SyntheticSpec {
  std::size_t n_entities = 1000;
  std::size_t n_relations = 10;
  std::size_t k = 8;
  /// Positives per (subject, relation): the top scored objects.
  std::size_t top_n = 20;
  std::uint64_t seed = 1;
};

struct SyntheticData {
  MultiRelationalDataset dataset;
  FactorMatrix entity_factors;
  std::vector<RelationFactors> relation_factors;
};

/// Ground truth A* ~ N(0, 1) and diagonal W*_r ~ N(0, 1); every subject is
/// linked under r to its top_n objects by a_s^T W*_r a_o (ties by id).
inline SyntheticData make_synthetic(const SyntheticSpec& spec) {
  if (spec.top_n > spec.n_entities) throw std::invalid_argument("make_synthetic: top_n exceeds entity count");
  Rng rng(derive_seed(spec.seed, {0x73796eULL}));
  SyntheticData out{MultiRelationalDataset(), FactorMatrix(spec.n_entities, spec.k), {}};
  fill_gaussian(out.entity_factors.values(), 1.0, rng);
  for (std::size_t r = 0; r < spec.n_relations; ++r) {
    auto w = RelationFactors::zeros(RelationWeightShape::diagonal, spec.k);
    fill_gaussian(w.params, 1.0, rng);
    out.relation_factors.push_back(std::move(w));
  }

  auto vocab = std::make_shared<Vocabulary>();
  for (std::size_t e = 0; e < spec.n_entities; ++e) vocab->entities.intern("e" + std::to_string(e));
  for (std::size_t r = 0; r < spec.n_relations; ++r) vocab->relations.intern("r" + std::to_string(r));
  out.dataset = MultiRelationalDataset(vocab);

  std::vector<double> scores(spec.n_entities);
  std::vector<std::uint32_t> order(spec.n_entities);
  for (std::size_t r = 0; r < spec.n_relations; ++r) {
    for (std::size_t s = 0; s < spec.n_entities; ++s) {
      for (std::size_t o = 0; o < spec.n_entities; ++o)
        scores[o] = score(out.entity_factors, out.relation_factors[r], entity_id(s), entity_id(o));
      std::iota(order.begin(), order.end(), 0u);
      std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(spec.top_n), order.end(),
                        [&](std::uint32_t a, std::uint32_t b) {
                          return scores[a] != scores[b] ? scores[a] > scores[b] : a < b;
                        });
      for (std::size_t i = 0; i < spec.top_n; ++i)
        out.dataset.add({entity_id(s), EntityId{order[i]}, relation_id(r), 1.0});
    }
  }
  return out;
}

}  // namespace consmrf
