#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "consmrf/dataset.hpp"
#include "consmrf/evaluator.hpp"
#include "consmrf/factors.hpp"
#include "consmrf/objective.hpp"
#include "consmrf/training.hpp"
#include "consmrf/worker_pool.hpp"

namespace consmrf {

/// Complete sharing (CD): one entity matrix A scored through every W_r.
struct SharedModel {
  FactorMatrix A;
  std::vector<RelationFactors> W;
  std::size_t rounds_completed = 0;
  bool converged = false;
  double initial_loss = 0.0;
  LearningCurve curve;

  std::vector<double> score_candidates(RelationId r, EntityId s, std::span<const EntityId> objects) const {
    return consmrf::score_candidates(A, W.at(to_index(r)), s, objects);
  }

  ParameterCount parameter_count() const {
    ParameterCount c{1, W.size(), 0, A.values().size()};
    for (const auto& w : W) c.scalars += w.params.size();
    return c;
  }
};

/// DMF: per-target A_t with relation factors W[t][r] for every relation r.
/// Target t predicts with (A_t, W[t][t]); W[t][r], r != t, only regularize.
struct DmfModel {
  std::vector<FactorMatrix> A;
  std::vector<std::vector<RelationFactors>> W;
  double alpha = 0.0;
  std::size_t rounds_completed = 0;
  bool converged = false;
  double initial_loss = 0.0;
  LearningCurve curve;
  std::vector<RelationTiming> timings;

  std::vector<double> score_candidates(RelationId r, EntityId s, std::span<const EntityId> objects) const {
    const auto t = to_index(r);
    return consmrf::score_candidates(A.at(t), W.at(t).at(t), s, objects);
  }

  ParameterCount parameter_count() const {
    ParameterCount c{A.size(), 0, 0, 0};
    for (const auto& a : A) c.scalars += a.values().size();
    for (const auto& row : W)
      for (const auto& w : row) {
        ++c.relation_factors;
        c.scalars += w.params.size();
      }
    return c;
  }
};

namespace detail {

/// Maps a uniform index over the concatenation of several relations back to
/// (relation, edge), which samples relations proportionally to their size.
class ConcatenatedEdges {
 public:
  ConcatenatedEdges(const MultiRelationalDataset& data, std::vector<std::size_t> relations)
      : data_(&data), relations_(std::move(relations)) {
    std::size_t total = 0;
    for (std::size_t r : relations_) {
      total += data.relation(relation_id(r)).size();
      ends_.push_back(total);
    }
  }

  std::size_t size() const noexcept { return ends_.empty() ? 0 : ends_.back(); }

  std::pair<std::size_t, Edge> at(std::size_t i) const {
    const auto pos = static_cast<std::size_t>(std::upper_bound(ends_.begin(), ends_.end(), i) - ends_.begin());
    const std::size_t begin = pos == 0 ? 0 : ends_[pos - 1];
    const std::size_t r = relations_[pos];
    return {r, data_->relation(relation_id(r)).edges()[i - begin]};
  }

 private:
  const MultiRelationalDataset* data_;
  std::vector<std::size_t> relations_;
  std::vector<std::size_t> ends_;
};

}  // namespace detail

/// Single-threaded BPR-SGD on the shared model. Each round spends the sum of
/// the per-relation budgets, drawing triples uniformly over all relations.
inline SharedModel train_cd(const MultiRelationalDataset& train, const Hyperparams& hp, std::size_t /*n_workers*/ = 1,
                            const TrainOptions& opts = {}) {
  hp.validate();
  require_training_data(train);
  const std::size_t n_entities = train.n_entities();
  const std::size_t R = train.n_relations();

  SharedModel model;
  for (std::size_t r = 0; r < R; ++r) {
    RelationParams p = init_relation_params(n_entities, r, hp, hp.shape);
    if (r == 0) model.A = std::move(p.A);
    model.W.push_back(std::move(p.W));
  }
  FactorMatrix entity_acc(n_entities, hp.k, 0.0);
  std::vector<std::vector<double>> relation_acc;
  std::size_t budget = 0;
  for (std::size_t r = 0; r < R; ++r) {
    relation_acc.emplace_back(model.W[r].params.size(), 0.0);
    budget += hp.budget_for(train.relation(relation_id(r)).size());
  }
  std::vector<std::size_t> all(R);
  std::iota(all.begin(), all.end(), std::size_t{0});
  const detail::ConcatenatedEdges edges(train, all);
  Rng rng = make_rng(hp.seed, {seed_tag::kTrain, 0});

  auto total_loss = [&] {
    double total = 0.0;
    for (std::size_t r = 0; r < R; ++r) {
      Rng loss_rng = make_rng(hp.seed, {seed_tag::kLoss, r});
      const auto& D_r = train.relation(relation_id(r));
      total += estimate_relation_loss(D_r, n_entities, model.A, model.W[r], loss_rng, loss_samples(D_r.size(), opts));
    }
    return total;
  };

  model.initial_loss = total_loss();
  double prev_loss = model.initial_loss;
  double elapsed = 0.0;
  GradientBundle grads;
  std::uniform_int_distribution<std::size_t> pick(0, edges.size() - 1);
  for (std::size_t round = 1; round <= hp.max_rounds; ++round) {
    const Stopwatch clock;
    for (std::size_t i = 0; i < budget; ++i) {
      const auto [r, e] = edges.at(pick(rng));
      const EntityId neg = sample_unlinked_object(train.relation(relation_id(r)), n_entities, e.subject, rng);
      bpr_stochastic_gradients(model.A, model.W[r], e.subject, e.object, neg, grads);
      try {
        apply_sgd_step(model.A, entity_acc, model.W[r], relation_acc[r], grads, e.subject, e.object, neg, 1.0, hp,
                       hp.adagrad_delta, nullptr);
      } catch (const DivergenceError& err) {
        throw DivergenceError(std::string(err.what()) + " in round " + std::to_string(round),
                              static_cast<long>(round), static_cast<long>(r));
      }
    }
    const double loss = total_loss();
    elapsed += clock.seconds();
    if (!std::isfinite(loss)) throw DivergenceError("training loss became non-finite", static_cast<long>(round));
    LearningCurveRow row{round, elapsed, loss, std::nullopt};
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

/// DMF with alpha_{t,t} = 1 and alpha_{t,r} = hp.alpha otherwise. Each target
/// draws triples proportionally from every relation with non-zero weight and
/// spends R times its per-relation budget per round (see TrainOptions).
inline DmfModel train_dmf(const MultiRelationalDataset& train, const Hyperparams& hp, std::size_t n_workers = 1,
                          const TrainOptions& opts = {}) {
  hp.validate();
  require_training_data(train);
  if (n_workers < 1) throw std::invalid_argument("train_dmf: n_workers must be >= 1");
  const std::size_t n_entities = train.n_entities();
  const std::size_t R = train.n_relations();
  const std::size_t factor = opts.dmf_budget_factor.value_or(R);

  DmfModel model;
  model.alpha = hp.alpha;
  struct TargetState {
    FactorMatrix entity_acc;
    std::vector<std::vector<double>> relation_acc;
    Rng rng;
    detail::ConcatenatedEdges edges;
    std::size_t budget;
  };
  std::vector<TargetState> state;
  std::vector<std::size_t> loads;
  for (std::size_t t = 0; t < R; ++t) {
    RelationParams p = init_relation_params(n_entities, t, hp, hp.shape);
    model.A.push_back(std::move(p.A));
    std::vector<RelationFactors> row;
    for (std::size_t r = 0; r < R; ++r) {
      if (r == t) {
        row.push_back(p.W);
        continue;
      }
      RelationFactors w = RelationFactors::zeros(hp.shape, hp.k);
      Rng aux = make_rng(hp.seed, {seed_tag::kAuxInit, t, r});
      fill_gaussian(w.params, hp.sigma_init, aux);
      row.push_back(std::move(w));
    }
    model.W.push_back(std::move(row));

    std::vector<std::size_t> active;
    for (std::size_t r = 0; r < R; ++r)
      if (r == t || hp.alpha != 0.0) active.push_back(r);
    std::vector<std::vector<double>> acc;
    for (std::size_t r = 0; r < R; ++r) acc.emplace_back(model.W[t][r].params.size(), 0.0);
    const std::size_t budget = hp.budget_for(train.relation(relation_id(t)).size()) * factor;
    state.push_back({FactorMatrix(n_entities, hp.k, 0.0), std::move(acc),
                     make_rng(hp.seed, {seed_tag::kTrain, t}), detail::ConcatenatedEdges(train, std::move(active)),
                     budget});
    loads.push_back(budget);
  }
  const std::size_t workers = std::min(n_workers, R);
  const auto assignment = assign_round_robin_by_load(loads, workers);
  WorkerPool pool(workers);

  std::vector<double> losses(R, 0.0);
  auto estimate_losses = [&] {
    pool.run([&](std::size_t w) {
      for (std::size_t t : assignment[w]) {
        Rng rng = make_rng(hp.seed, {seed_tag::kLoss, t});
        const auto& D_t = train.relation(relation_id(t));
        losses[t] = estimate_relation_loss(D_t, n_entities, model.A[t], model.W[t][t], rng, loss_samples(D_t.size(), opts));
      }
    });
    double total = 0.0;
    for (double l : losses) total += l;
    return total;
  };

  model.initial_loss = estimate_losses();
  double prev_loss = model.initial_loss;
  double elapsed = 0.0;
  std::vector<double> target_seconds(R, 0.0);
  for (std::size_t round = 1; round <= hp.max_rounds; ++round) {
    const Stopwatch round_clock;
    pool.run([&](std::size_t w) {
      GradientBundle grads;
      for (std::size_t t : assignment[w]) {
        const Stopwatch clock;
        TargetState& st = state[t];
        if (st.budget == 0) continue;
        std::uniform_int_distribution<std::size_t> pick(0, st.edges.size() - 1);
        for (std::size_t i = 0; i < st.budget; ++i) {
          const auto [r, e] = st.edges.at(pick(st.rng));
          const EntityId neg = sample_unlinked_object(train.relation(relation_id(r)), n_entities, e.subject, st.rng);
          RelationFactors& W = model.W[t][r];
          bpr_stochastic_gradients(model.A[t], W, e.subject, e.object, neg, grads);
          try {
            apply_sgd_step(model.A[t], st.entity_acc, W, st.relation_acc[r], grads, e.subject, e.object, neg,
                           r == t ? 1.0 : hp.alpha, hp, hp.adagrad_delta, nullptr);
          } catch (const DivergenceError& err) {
            throw DivergenceError(std::string(err.what()) + " in round " + std::to_string(round) + ", target " +
                                      train.vocabulary().relations.name(t),
                                  static_cast<long>(round), static_cast<long>(t));
          }
        }
        target_seconds[t] = clock.seconds();
      }
    });
    const double loss = estimate_losses();
    elapsed += round_clock.seconds();
    if (!std::isfinite(loss)) throw DivergenceError("training loss became non-finite", static_cast<long>(round));
    for (std::size_t w = 0; w < assignment.size(); ++w)
      for (std::size_t t : assignment[w]) model.timings.push_back({round, t, w, target_seconds[t]});
    LearningCurveRow row{round, elapsed, loss, std::nullopt};
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

}  // namespace consmrf
