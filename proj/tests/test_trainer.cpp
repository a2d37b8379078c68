#include <algorithm>
#include <random>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "consmrf/consensus_trainer.hpp"
#include "consmrf/synthetic.hpp"
#include "oracles.hpp"

namespace {

using namespace consmrf;

FactorMatrix filled(std::size_t rows, std::size_t cols, double v) { return FactorMatrix(rows, cols, v); }

FactorMatrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  FactorMatrix m(rows, cols);
  for (double& v : m.values()) v = normal(rng);
  return m;
}

Hyperparams small_hp() {
  Hyperparams hp;
  hp.k = 4;
  hp.max_rounds = 5;
  hp.epsilon = 0.0;
  hp.seed = 3;
  return hp;
}

TEST(UpdateZ, MeanOfOnesAndZeros) {
  const std::vector<FactorMatrix> As{filled(3, 2, 1.0), filled(3, 2, 0.0)};
  EXPECT_EQ(update_z(As), filled(3, 2, 0.5));
}

TEST(UpdateZ, SingleInputIsReturnedExactly) {
  Rng rng(1);
  const std::vector<FactorMatrix> As{random_matrix(4, 3, rng)};
  EXPECT_EQ(update_z(As), As.front());
}

TEST(UpdateZ, MatchesElementwiseMeanOracle) {
  Rng rng(2);
  std::vector<FactorMatrix> As;
  for (int r = 0; r < 5; ++r) As.push_back(random_matrix(7, 4, rng));
  const auto Z = update_z(As);
  for (std::size_t i = 0; i < 7; ++i)
    for (std::size_t f = 0; f < 4; ++f) {
      double sum = 0.0;
      for (const auto& A : As) sum += A(i, f);
      EXPECT_NEAR(Z(i, f), sum / 5.0, 1e-15);
    }
}

TEST(UpdateZ, PermutationInvariant) {
  Rng rng(3);
  std::vector<FactorMatrix> As;
  for (int r = 0; r < 6; ++r) As.push_back(random_matrix(5, 3, rng));
  const auto Z = update_z(As);
  std::shuffle(As.begin(), As.end(), rng);
  const auto Z2 = update_z(As);
  for (std::size_t i = 0; i < Z.values().size(); ++i) EXPECT_NEAR(Z.values()[i], Z2.values()[i], 1e-15);
}

TEST(UpdateZ, ProjectsFromRelationParams) {
  std::vector<RelationParams> ps{{filled(2, 2, 2.0), {}}, {filled(2, 2, 4.0), {}}};
  EXPECT_EQ(update_z(ps, &RelationParams::A), filled(2, 2, 3.0));
}

TEST(UpdateZ, RejectsEmptyOrMismatchedInput) {
  EXPECT_THROW(update_z(std::vector<FactorMatrix>{}), std::invalid_argument);
  EXPECT_THROW(update_z(std::vector<FactorMatrix>{filled(2, 2, 0), filled(3, 2, 0)}), std::invalid_argument);
}

TEST(UpdateV, Examples) {
  Rng rng(4);
  const auto Z = random_matrix(3, 3, rng);
  FactorMatrix V(3, 3, 0.0);
  update_v(V, Z, Z, 0.7);
  EXPECT_EQ(V, filled(3, 3, 0.0));

  FactorMatrix A = Z;
  for (double& v : A.values()) v += 1.0;
  FactorMatrix V2(3, 3, 0.0);
  update_v(V2, A, Z, 0.005);
  for (double v : V2.values()) EXPECT_NEAR(v, 0.005, 1e-15);
}

TEST(CheckConvergence, Examples) {
  EXPECT_TRUE(check_convergence(1.25, 1.25, 1e-9));
  EXPECT_FALSE(check_convergence(1.0, 1.1, 0.05));
  EXPECT_TRUE(check_convergence(1.0, 1.01, 0.05));
  EXPECT_FALSE(check_convergence(1.0, 1.0, 0.0));
}

TEST(UpdateAw, ZeroBudgetLeavesParametersUnchanged) {
  const auto ds = oracle::small_dataset(20, 1, 40, 1);
  Hyperparams hp = small_hp();
  hp.inner_budget = 0;
  auto [params, state] = init_model(20, 1, hp, hp.shape);
  const auto before = params[0];
  auto ada = AdagradState::zeros(20, hp.k, params[0].W.params.size(), hp.adagrad_delta);
  Rng rng(1);
  update_aw(ds.relation(relation_id(0)), 20, params[0], state.Z, state.V[0], hp, ada, rng);
  EXPECT_EQ(params[0], before);
}

TEST(UpdateAw, PenaltyDominatedRowsContractTowardConsensus) {
  const auto ds = oracle::small_dataset(30, 1, 90, 2);
  Hyperparams hp = small_hp();
  hp.lambda = 0.0;
  hp.rho = 100.0;
  hp.eta = 0.01;
  hp.inner_budget = 20;
  Rng init(5);
  RelationParams p{random_matrix(30, hp.k, init), RelationFactors::zeros(hp.shape, hp.k)};
  const FactorMatrix Z(30, hp.k, 0.0), V(30, hp.k, 0.0);
  auto ada = AdagradState::zeros(30, hp.k, hp.k, hp.adagrad_delta);
  Rng rng(6);
  double prev = frobenius_distance(p.A, Z);
  for (int call = 0; call < 20; ++call) {
    update_aw(ds.relation(relation_id(0)), 30, p, Z, V, hp, ada, rng);
    const double gap = frobenius_distance(p.A, Z);
    EXPECT_LT(gap, prev);
    prev = gap;
  }
}

TEST(UpdateAw, DeterministicForFixedSeed) {
  const auto ds = oracle::small_dataset(25, 1, 60, 3);
  Hyperparams hp = small_hp();
  auto run = [&] {
    auto [params, state] = init_model(25, 1, hp, hp.shape);
    auto ada = AdagradState::zeros(25, hp.k, params[0].W.params.size(), hp.adagrad_delta);
    Rng rng(9);
    for (int i = 0; i < 3; ++i)
      update_aw(ds.relation(relation_id(0)), 25, params[0], state.Z, state.V[0], hp, ada, rng);
    return params[0];
  };
  EXPECT_EQ(run(), run());
}

TEST(TrainConsmrf, ZeroRoundsReturnsInitializedModel) {
  const auto ds = oracle::small_dataset(20, 3, 60, 4);
  Hyperparams hp = small_hp();
  hp.max_rounds = 0;
  const auto model = train_consmrf(ds, hp, 1);
  const auto [params, state] = init_model(20, 3, hp, hp.shape);
  EXPECT_EQ(model.relations, params);
  EXPECT_EQ(model.consensus, state);
  EXPECT_TRUE(model.curve.empty());
  EXPECT_EQ(model.rounds_completed, 0u);
}

TEST(TrainConsmrf, SingleRelationZTracksAAndDualStaysZero) {
  const auto ds = oracle::small_dataset(20, 1, 50, 5);
  Hyperparams hp = small_hp();
  for (std::size_t rounds = 1; rounds <= 4; ++rounds) {
    hp.max_rounds = rounds;
    const auto model = train_consmrf(ds, hp, 1);
    EXPECT_EQ(model.consensus.Z, model.relations[0].A);
    EXPECT_EQ(model.consensus.V[0], FactorMatrix(20, hp.k, 0.0));
  }
}

TEST(TrainConsmrf, FirstRoundDualsMatchClosedForm) {
  const auto ds = oracle::small_dataset(30, 4, 200, 6);
  Hyperparams hp = small_hp();
  hp.max_rounds = 1;
  hp.rho = 0.05;
  const auto model = train_consmrf(ds, hp, 1);
  std::vector<FactorMatrix> As;
  for (const auto& p : model.relations) As.push_back(p.A);
  EXPECT_EQ(model.consensus.Z, update_z(As));
  for (std::size_t r = 0; r < 4; ++r) {
    const auto& A = model.relations[r].A;
    for (std::size_t i = 0; i < A.values().size(); ++i) {
      double mean = 0.0;
      for (const auto& other : As) mean += other.values()[i];
      mean /= 4.0;
      EXPECT_NEAR(model.consensus.V[r].values()[i], hp.rho * (A.values()[i] - mean), 1e-15);
    }
  }
}

TEST(TrainConsmrf, DeterministicAndIndependentOfWorkerCount) {
  const auto ds = oracle::small_dataset(40, 5, 300, 7);
  const Hyperparams hp = small_hp();
  const auto a = train_consmrf(ds, hp, 1);
  const auto b = train_consmrf(ds, hp, 1);
  const auto c = train_consmrf(ds, hp, 3);
  EXPECT_EQ(a.relations, b.relations);
  EXPECT_EQ(a.consensus, b.consensus);
  EXPECT_EQ(a.relations, c.relations);
  EXPECT_EQ(a.consensus, c.consensus);
  ASSERT_EQ(a.curve.size(), c.curve.size());
  for (std::size_t i = 0; i < a.curve.size(); ++i) EXPECT_EQ(a.curve[i].train_loss, c.curve[i].train_loss);
}

TEST(TrainConsmrf, DecouplesIntoIndependentBprWithoutConsensus) {
  const auto ds = oracle::small_dataset(40, 4, 200, 8);
  Hyperparams hp = small_hp();
  hp.rho = 0.0;
  TrainOptions opts;
  opts.reset_to_consensus = false;
  for (std::size_t rounds = 1; rounds <= 3; ++rounds) {
    hp.max_rounds = rounds;
    const auto model = train_consmrf(ds, hp, 1, opts);
    for (std::size_t r = 0; r < 4; ++r) {
      auto ref = oracle::init_model(40, hp.k, hp.shape, hp.sigma_init, hp.seed, r);
      Rng rng = make_rng(hp.seed, {seed_tag::kTrain, r});
      const auto& rel = ds.relation(relation_id(r));
      for (std::size_t t = 0; t < rounds; ++t) oracle::bpr_round(ref, rel, rel.size(), hp.lambda, hp.eta, hp.adagrad_delta, rng);
      const auto a = model.relations[r].A.values();
      EXPECT_TRUE(std::equal(a.begin(), a.end(), ref.A.begin(), ref.A.end())) << "relation " << r;
      EXPECT_EQ(model.relations[r].W.params, ref.W) << "relation " << r;
    }
  }
}

TEST(TrainConsmrf, TrainingLossDecreasesOnSyntheticData) {
  SyntheticSpec spec;
  spec.n_entities = 200;
  spec.n_relations = 4;
  spec.top_n = 10;
  const auto data = make_synthetic(spec);
  Hyperparams hp;
  hp.k = 8;
  hp.max_rounds = 50;
  const auto model = train_consmrf(data.dataset, hp, 1);
  ASSERT_FALSE(model.curve.empty());
  EXPECT_LT(model.curve.back().train_loss, model.initial_loss);
  for (std::size_t i = 1; i < model.curve.size(); ++i) EXPECT_GE(model.curve[i].seconds, model.curve[i - 1].seconds);
}

TEST(TrainConsmrf, StopsEarlyWhenLossPlateaus) {
  const auto ds = oracle::small_dataset(20, 2, 40, 9);
  Hyperparams hp = small_hp();
  hp.max_rounds = 200;
  hp.epsilon = 1e9;
  const auto model = train_consmrf(ds, hp, 1);
  EXPECT_TRUE(model.converged);
  EXPECT_EQ(model.rounds_completed, 1u);
}

TEST(TrainConsmrf, RecordsValidationAucWhenRequested) {
  SyntheticSpec spec;
  spec.n_entities = 100;
  spec.n_relations = 3;
  spec.top_n = 8;
  const auto splits = split_dataset(make_synthetic(spec).dataset, 0.1, 0.1, 1);
  Hyperparams hp = small_hp();
  hp.max_rounds = 3;
  TrainOptions opts;
  opts.track_validation = true;
  const auto model = train_consmrf(splits, hp, 1, opts);
  ASSERT_EQ(model.curve.size(), 3u);
  for (const auto& row : model.curve) {
    ASSERT_TRUE(row.valid_auc.has_value());
    EXPECT_GE(*row.valid_auc, 0.0);
    EXPECT_LE(*row.valid_auc, 1.0);
  }
}

TEST(TrainConsmrf, RelationWithoutTrainingDataIsRejected) {
  auto vocab = std::make_shared<Vocabulary>();
  vocab->entities.intern("a");
  vocab->entities.intern("b");
  vocab->relations.intern("p");
  vocab->relations.intern("empty");
  MultiRelationalDataset ds(vocab);
  ds.add({entity_id(0), entity_id(1), relation_id(0), 1.0});
  EXPECT_THROW(train_consmrf(ds, small_hp(), 1), SplitRejectedError);
}

TEST(TrainConsmrf, OverflowingStepDiverges) {
  const auto ds = oracle::small_dataset(30, 3, 120, 10);
  Hyperparams hp = small_hp();
  hp.eta = 1e200;
  try {
    train_consmrf(ds, hp, 1);
    FAIL() << "expected DivergenceError";
  } catch (const DivergenceError& e) {
    EXPECT_EQ(e.round(), 1);
  }
}

TEST(TrainConsmrf, HugePenaltyStaysFiniteUnderAdagrad) {
  // ADAGRAD steps are bounded by eta whatever the gradient scale, so the
  // penalty only pins A_r to Z; the duals oscillate instead of overflowing.
  const auto ds = oracle::small_dataset(30, 3, 120, 10);
  Hyperparams hp = small_hp();
  hp.rho = 1e308;
  hp.max_rounds = 20;
  const auto model = train_consmrf(ds, hp, 1);
  for (const auto& p : model.relations)
    for (double v : p.A.values()) EXPECT_TRUE(std::isfinite(v));
}

TEST(TrainConsmrf, TimingLogCoversEveryRelationEveryRound) {
  const auto ds = oracle::small_dataset(30, 4, 150, 11);
  Hyperparams hp = small_hp();
  hp.max_rounds = 3;
  const auto model = train_consmrf(ds, hp, 2);
  EXPECT_EQ(model.timings.size(), 12u);
  std::ostringstream out;
  write_timing_csv(out, model.timings);
  EXPECT_EQ(out.str().substr(0, out.str().find('\n')), "round,relation,worker,seconds");
}

TEST(LearningCurveCsv, HeaderAndOptionalColumns) {
  LearningCurve curve{{1, 0.5, 2.0, std::nullopt}, {2, 1.25, 1.5, 0.75}};
  std::ostringstream with, without;
  write_learning_curve_csv(with, curve);
  write_learning_curve_csv(without, curve, false);
  EXPECT_EQ(with.str(), "round,seconds,train_loss,valid_auc\n1,0.5,2,\n2,1.25,1.5,0.75\n");
  EXPECT_EQ(without.str(), "round,seconds,train_loss,valid_auc\n1,,2,\n2,,1.5,0.75\n");
}

TEST(WorkerAssignment, LongestFirstRoundRobin) {
  const std::vector<std::size_t> loads{5, 50, 20, 40, 10};
  const auto a = assign_round_robin_by_load(loads, 2);
  ASSERT_EQ(a.size(), 2u);
  EXPECT_EQ(a[0], (std::vector<std::size_t>{1, 2, 0}));
  EXPECT_EQ(a[1], (std::vector<std::size_t>{3, 4}));
}

TEST(WorkerPool, RunsEveryWorkerAndPropagatesExceptions) {
  WorkerPool pool(3);
  std::vector<int> hits(3, 0);
  for (int round = 0; round < 5; ++round) pool.run([&](std::size_t w) { ++hits[w]; });
  EXPECT_EQ(hits, (std::vector<int>{5, 5, 5}));
  EXPECT_THROW(pool.run([](std::size_t w) {
    if (w == 1) throw std::runtime_error("boom");
  }),
               std::runtime_error);
  pool.run([&](std::size_t w) { ++hits[w]; });
  EXPECT_EQ(hits, (std::vector<int>{6, 6, 6}));
}

}  // namespace
