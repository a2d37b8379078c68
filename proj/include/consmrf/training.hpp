#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <optional>
#include <ostream>
#include <vector>

#include "consmrf/csv.hpp"
#include "consmrf/dataset.hpp"
#include "consmrf/errors.hpp"
#include "consmrf/factors.hpp"
#include "consmrf/objective.hpp"

namespace consmrf {

struct LearningCurveRow {
  std::size_t round = 0;
  /// Cumulative training wall time at the end of the round.
  double seconds = 0.0;
  /// Sum over relations of the Monte-Carlo per-pair BPR loss estimate.
  double train_loss = 0.0;
  std::optional<double> valid_auc;
};

using LearningCurve = std::vector<LearningCurveRow>;

/// Wall time spent on one relation (or DMF target) in one round.
struct RelationTiming {
  std::size_t round = 0;
  std::size_t relation = 0;
  std::size_t worker = 0;
  double seconds = 0.0;
};

struct TrainOptions {
  /// Copy Z into A_r at the start of every ADMM round.
  bool reset_to_consensus = true;
  /// Zero the A_r ADAGRAD accumulators whenever A_r is reset to Z.
  bool reset_adagrad_with_consensus = true;
  /// Loss estimates use min(|D_r|, cap) samples per relation.
  std::size_t loss_sample_cap = 10000;
  /// Evaluate the validation split after every round (needs a SplitDataset).
  bool track_validation = false;
  /// DMF samples per target per round = per-relation budget times this; unset means R.
  std::optional<std::size_t> dmf_budget_factor;
  std::function<void(const LearningCurveRow&)> on_round;
};

/// Sizes of a trained model: matrix counts and total scalars.
struct ParameterCount {
  std::size_t entity_matrices = 0;
  std::size_t relation_factors = 0;
  std::size_t dual_matrices = 0;
  std::size_t scalars = 0;
};

/// |a - b| < epsilon on the summed training-loss estimates.
inline bool check_convergence(double prev_total_loss, double cur_total_loss, double epsilon) {
  return std::abs(cur_total_loss - prev_total_loss) < epsilon;
}

inline void require_training_data(const MultiRelationalDataset& train) {
  for (std::size_t r = 0; r < train.n_relations(); ++r)
    if (train.relation(relation_id(r)).empty()) throw SplitRejectedError(train.vocabulary().relations.name(r));
}

inline std::size_t loss_samples(std::size_t relation_size, const TrainOptions& opts) {
  return std::max<std::size_t>(1, std::min(relation_size, opts.loss_sample_cap));
}

/// `budget` draw-one-update-one BPR steps on a single relation's data.
/// `consensus` adds the ADMM coupling; without it this is plain BPR-SGD.
inline void run_bpr_sgd(const RelationData& D_r, std::size_t n_entities, FactorMatrix& A, RelationFactors& W,
                        std::size_t budget, const Hyperparams& hp, AdagradState& ada, Rng& rng,
                        const ConsensusTerms* consensus) {
  if (budget == 0) return;
  const auto edges = D_r.edges();
  if (edges.empty()) throw std::invalid_argument("run_bpr_sgd: relation has no training data");
  std::uniform_int_distribution<std::size_t> pick(0, edges.size() - 1);
  GradientBundle grads;
  for (std::size_t i = 0; i < budget; ++i) {
    const Edge& e = edges[pick(rng)];
    const EntityId neg = sample_unlinked_object(D_r, n_entities, e.subject, rng);
    bpr_stochastic_gradients(A, W, e.subject, e.object, neg, grads);
    apply_sgd_step(A, W, grads, e.subject, e.object, neg, 1.0, hp, ada, consensus);
  }
}

/// `round,seconds,train_loss,valid_auc`. With `include_seconds` false the
/// seconds column is left empty so repeated runs compare byte for byte.
inline void write_learning_curve_csv(std::ostream& out, const LearningCurve& curve, bool include_seconds = true) {
  out << "round,seconds,train_loss,valid_auc\n";
  for (const auto& row : curve) {
    out << row.round << ',';
    if (include_seconds) out << csv::number(row.seconds);
    out << ',' << csv::number(row.train_loss) << ',';
    if (row.valid_auc) out << csv::number(*row.valid_auc);
    out << '\n';
  }
}

/// `round,relation,worker,seconds`
inline void write_timing_csv(std::ostream& out, const std::vector<RelationTiming>& timings) {
  out << "round,relation,worker,seconds\n";
  for (const auto& t : timings)
    out << t.round << ',' << t.relation << ',' << t.worker << ',' << csv::number(t.seconds) << '\n';
}

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

}  // namespace consmrf
