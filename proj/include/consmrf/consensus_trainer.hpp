#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <mutex>
#include <optional>
#include <ranges>
#include <span>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "consmrf/dataset.hpp"
#include "consmrf/evaluator.hpp"
#include "consmrf/factors.hpp"
#include "consmrf/objective.hpp"
#include "consmrf/training.hpp"
#include "consmrf/worker_pool.hpp"

namespace consmrf {

/// Output of the consensus trainer. Relation r is always scored with (A_r, W_r).
struct TrainedModel {
  std::vector<RelationParams> relations;
  ConsensusState consensus;
  std::size_t rounds_completed = 0;
  bool converged = false;
  /// Loss estimate of the initialized model, before round 1.
  double initial_loss = 0.0;
  LearningCurve curve;
  std::vector<RelationTiming> timings;

  std::vector<double> score_candidates(RelationId r, EntityId s, std::span<const EntityId> objects) const {
    return consmrf::score_candidates(relations.at(to_index(r)), s, objects);
  }

  /// mean_r ||A_r - Z||_F
  double mean_consensus_gap() const {
    double sum = 0.0;
    for (const auto& p : relations) sum += frobenius_distance(p.A, consensus.Z);
    return relations.empty() ? 0.0 : sum / static_cast<double>(relations.size());
  }

  ParameterCount parameter_count() const {
    ParameterCount c{relations.size() + 1, relations.size(), consensus.V.size(), consensus.Z.values().size()};
    for (const auto& p : relations) c.scalars += p.A.values().size() + p.W.params.size();
    for (const auto& v : consensus.V) c.scalars += v.values().size();
    return c;
  }
};

/// Inner ADMM solve for one relation: `budget` penalized BPR-SGD steps
/// (unset budget: |D_r|). Reads only D_r, Z and V_r; writes only p and ada.
inline void update_aw(const RelationData& D_r, std::size_t n_entities, RelationParams& p, const FactorMatrix& Z,
                      const FactorMatrix& V_r, const Hyperparams& hp, AdagradState& ada, Rng& rng) {
  const ConsensusTerms consensus{Z, V_r, hp.rho};
  run_bpr_sgd(D_r, n_entities, p.A, p.W, hp.budget_for(D_r.size()), hp, ada, rng, &consensus);
}

/// Elementwise mean of the projected matrices.
template <std::ranges::forward_range Range, class Proj = std::identity>
FactorMatrix update_z(const Range& items, Proj proj = {}) {
  auto it = std::ranges::begin(items);
  if (it == std::ranges::end(items)) throw std::invalid_argument("update_z: empty list");
  const FactorMatrix& first = std::invoke(proj, *it);
  FactorMatrix Z(first.rows(), first.cols(), 0.0);
  auto z = Z.values();
  std::size_t count = 0;
  for (const auto& item : items) {
    const FactorMatrix& A = std::invoke(proj, item);
    if (A.rows() != Z.rows() || A.cols() != Z.cols()) throw std::invalid_argument("update_z: shape mismatch");
    const auto a = A.values();
    for (std::size_t i = 0; i < z.size(); ++i) z[i] += a[i];
    ++count;
  }
  const double n = static_cast<double>(count);
  for (double& v : z) v /= n;
  return Z;
}

/// V <- V + rho (A - Z)
inline void update_v(FactorMatrix& V, const FactorMatrix& A, const FactorMatrix& Z, double rho) {
  if (V.rows() != A.rows() || V.cols() != A.cols() || Z.rows() != A.rows() || Z.cols() != A.cols())
    throw std::invalid_argument("update_v: shape mismatch");
  auto v = V.values();
  const auto a = A.values();
  const auto z = Z.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] += rho * (a[i] - z[i]);
}

namespace detail {

struct RelationScorer {
  const std::vector<RelationParams>* relations;
  std::vector<double> score_candidates(RelationId r, EntityId s, std::span<const EntityId> objects) const {
    return consmrf::score_candidates((*relations)[to_index(r)], s, objects);
  }
};

}  // namespace detail

/// Synchronous consensus ADMM. Each round: every relation worker sets
/// A_r <- Z and runs update_aw; the driver averages into Z; duals step by
/// rho (A_r - Z). Stops when the summed loss estimate moves less than
/// epsilon or after max_rounds. Results do not depend on n_workers.
inline TrainedModel train_consmrf(const MultiRelationalDataset& train, const Hyperparams& hp, std::size_t n_workers,
                                  const TrainOptions& opts = {}, const SplitDataset* validation = nullptr) {
  hp.validate();
  require_training_data(train);
  if (n_workers < 1) throw std::invalid_argument("train_consmrf: n_workers must be >= 1");
  const std::size_t n_entities = train.n_entities();
  const std::size_t R = train.n_relations();

  TrainedModel model;
  std::tie(model.relations, model.consensus) = init_model(n_entities, R, hp, hp.shape);

  std::vector<AdagradState> ada;
  std::vector<Rng> rngs;
  std::vector<std::size_t> sizes;
  for (std::size_t r = 0; r < R; ++r) {
    ada.push_back(AdagradState::zeros(n_entities, hp.k, model.relations[r].W.params.size(), hp.adagrad_delta));
    rngs.push_back(make_rng(hp.seed, {seed_tag::kTrain, r}));
    sizes.push_back(train.relation(relation_id(r)).size());
  }
  const std::size_t workers = std::min(n_workers, R);
  const auto assignment = assign_round_robin_by_load(sizes, workers);
  WorkerPool pool(workers);

  std::vector<double> losses(R, 0.0);
  auto estimate_losses = [&] {
    pool.run([&](std::size_t w) {
      for (std::size_t r : assignment[w]) {
        Rng rng = make_rng(hp.seed, {seed_tag::kLoss, r});
        losses[r] = estimate_relation_loss(train.relation(relation_id(r)), n_entities, model.relations[r].A,
                                           model.relations[r].W, rng, loss_samples(sizes[r], opts));
      }
    });
    double total = 0.0;
    for (double l : losses) total += l;
    return total;
  };

  model.initial_loss = estimate_losses();
  double prev_loss = model.initial_loss;
  double elapsed = 0.0;
  std::vector<double> relation_seconds(R, 0.0);

  for (std::size_t round = 1; round <= hp.max_rounds; ++round) {
    const Stopwatch round_clock;
    pool.run([&](std::size_t w) {
      for (std::size_t r : assignment[w]) {
        const Stopwatch clock;
        RelationParams& p = model.relations[r];
        if (opts.reset_to_consensus) {
          p.A = model.consensus.Z;
          if (opts.reset_adagrad_with_consensus) ada[r].reset_entities();
        }
        try {
          update_aw(train.relation(relation_id(r)), n_entities, p, model.consensus.Z, model.consensus.V[r], hp, ada[r],
                    rngs[r]);
        } catch (const DivergenceError& e) {
          throw DivergenceError(std::string(e.what()) + " in round " + std::to_string(round) + ", relation " +
                                    train.vocabulary().relations.name(r),
                                static_cast<long>(round), static_cast<long>(r));
        }
        relation_seconds[r] = clock.seconds();
      }
    });
    model.consensus.Z = update_z(model.relations, &RelationParams::A);
    pool.run([&](std::size_t w) {
      for (std::size_t r : assignment[w])
        update_v(model.consensus.V[r], model.relations[r].A, model.consensus.Z, hp.rho);
    });
    const double loss = estimate_losses();
    elapsed += round_clock.seconds();
    if (!std::isfinite(loss))
      throw DivergenceError("training loss became non-finite in round " + std::to_string(round),
                            static_cast<long>(round));

    for (std::size_t w = 0; w < assignment.size(); ++w)
      for (std::size_t r : assignment[w]) model.timings.push_back({round, r, w, relation_seconds[r]});

    LearningCurveRow row{round, elapsed, loss, std::nullopt};
    if (opts.track_validation && validation && validation->valid.n_triples() > 0)
      row.valid_auc = evaluate_model(detail::RelationScorer{&model.relations}, *validation, hp.eval_negatives,
                                     hp.top_k, derive_seed(hp.seed, {seed_tag::kEval}), EvalTarget::valid)
                          .macro.auc;
    model.curve.push_back(row);
    model.rounds_completed = round;
    if (opts.on_round) opts.on_round(row);

    if (check_convergence(prev_loss, loss, hp.epsilon)) {
      model.converged = true;
      break;
    }
    prev_loss = loss;
  }
  return model;
}

inline TrainedModel train_consmrf(const SplitDataset& splits, const Hyperparams& hp, std::size_t n_workers,
                                  const TrainOptions& opts = {}) {
  return train_consmrf(splits.train, hp, n_workers, opts, &splits);
}

}  // namespace consmrf
