#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <unordered_set>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "consmrf/csv.hpp"
#include "consmrf/dataset.hpp"
#include "consmrf/errors.hpp"
#include "consmrf/rng.hpp"
#include "consmrf/worker_pool.hpp"

namespace consmrf {

/// Anything that scores a batch of objects for one (relation, subject).
template <class M>
concept RankingModel = requires(const M& m, RelationId r, EntityId s, std::span<const EntityId> objects) {
  { m.score_candidates(r, s, objects) } -> std::convertible_to<std::vector<double>>;
};

enum class EvalTarget { test, valid };

struct CandidateSet {
  RelationId relation{};
  EntityId subject{};
  std::vector<EntityId> positives;
  std::vector<EntityId> negatives;
};

struct RankMetrics {
  double auc = 0.0;
  double precision_at_k = 0.0;
  double recall_at_k = 0.0;
};

/// AUC counts ties as one half. The top-k list orders by descending score;
/// equal scores put negatives ahead of positives, then keep input order.
inline RankMetrics rank_metrics(std::span<const double> pos, std::span<const double> neg, std::size_t k) {
  if (pos.empty() || neg.empty()) throw std::invalid_argument("rank_metrics: empty positive or negative list");
  if (k == 0) throw std::invalid_argument("rank_metrics: k must be >= 1");
  double wins = 0.0;
  for (double p : pos)
    for (double n : neg) wins += p > n ? 1.0 : (p == n ? 0.5 : 0.0);

  // Candidate key: negatives 0..N-1, positives N..N+P-1.
  const std::size_t n_neg = neg.size();
  const std::size_t total = n_neg + pos.size();
  auto value = [&](std::size_t i) { return i < n_neg ? neg[i] : pos[i - n_neg]; };
  std::vector<std::size_t> order(total);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t depth = std::min(k, total);
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(depth), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      const double va = value(a), vb = value(b);
                      if (va != vb) return va > vb;
                      return a < b;
                    });
  std::size_t hits = 0;
  for (std::size_t i = 0; i < depth; ++i) hits += order[i] >= n_neg ? 1 : 0;

  return {wins / (static_cast<double>(pos.size()) * static_cast<double>(neg.size())),
          static_cast<double>(hits) / static_cast<double>(k),
          static_cast<double>(hits) / static_cast<double>(pos.size())};
}

/// Up to `m_neg` distinct objects unlinked to `s` under `r` in every split.
/// Fewer are returned only when fewer exist.
inline std::vector<EntityId> draw_negatives(const SplitDataset& splits, RelationId r, EntityId s, std::size_t m_neg,
                                            Rng& rng) {
  const MultiRelationalDataset& all = splits.all;
  const std::size_t n = all.n_entities();
  const std::size_t degree = all.relation(r).degree(s);
  const std::size_t available = n > degree ? n - degree : 0;
  if (available == 0)
    throw SaturationError("subject " + std::to_string(to_index(s)) + " is linked to every object under relation " +
                          std::to_string(to_index(r)));
  const std::size_t m = std::min(m_neg, available);
  std::vector<EntityId> out;
  out.reserve(m);
  if (2 * m <= available) {
    std::unordered_set<std::uint32_t> seen;
    while (out.size() < m) {
      const EntityId o = sample_unlinked_object(splits, s, r, Membership::all_splits, rng);
      if (seen.insert(static_cast<std::uint32_t>(o)).second) out.push_back(o);
    }
  } else {
    // Dense case: draw without replacement from the enumerated pool.
    std::vector<EntityId> pool;
    pool.reserve(available);
    for (std::size_t o = 0; o < n; ++o)
      if (!all.contains(s, r, entity_id(o))) pool.push_back(entity_id(o));
    std::shuffle(pool.begin(), pool.end(), rng);
    out.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(m));
  }
  return out;
}

inline const MultiRelationalDataset& target_split(const SplitDataset& splits, EvalTarget target) {
  return target == EvalTarget::test ? splits.test : splits.valid;
}

inline CandidateSet build_candidate_set(const SplitDataset& splits, RelationId r, EntityId s, std::size_t m_neg,
                                        Rng& rng, EvalTarget target = EvalTarget::test) {
  CandidateSet out{r, s, {}, {}};
  for (const Edge& e : target_split(splits, target).relation(r).edges())
    if (e.subject == s) out.positives.push_back(e.object);
  if (out.positives.empty()) throw std::invalid_argument("build_candidate_set: subject has no held-out positives");
  out.negatives = draw_negatives(splits, r, s, m_neg, rng);
  return out;
}

struct UnitMetrics {
  RelationId relation{};
  EntityId subject{};
  std::size_t n_positives = 0;
  std::size_t n_negatives = 0;
  RankMetrics metrics;
};

struct RelationSummary {
  std::size_t units = 0;
  RankMetrics mean;
};

struct EvalReport {
  RankMetrics macro;
  std::vector<UnitMetrics> units;
  std::vector<RelationSummary> per_relation;
  std::size_t skipped_units = 0;
  std::size_t k = 5;
  std::size_t m_neg = 100;

  std::size_t unit_count() const noexcept { return units.size(); }
};

/// One ranking unit per (relation, subject) with held-out positives; the
/// report holds unweighted means over units. Units whose negatives cannot be
/// drawn are skipped and counted.
template <RankingModel M>
EvalReport evaluate_model(const M& model, const SplitDataset& splits, std::size_t m_neg, std::size_t k,
                          std::uint64_t seed, EvalTarget target = EvalTarget::test, std::size_t n_workers = 1) {
  const MultiRelationalDataset& held_out = target_split(splits, target);
  if (held_out.n_triples() == 0) throw std::invalid_argument("evaluate_model: evaluation split is empty");

  struct Unit {
    RelationId r;
    EntityId s;
    std::vector<EntityId> positives;
  };
  std::vector<Unit> units;
  for (std::size_t r = 0; r < held_out.n_relations(); ++r) {
    std::map<std::uint32_t, std::vector<EntityId>> by_subject;
    for (const Edge& e : held_out.relation(relation_id(r)).edges())
      by_subject[static_cast<std::uint32_t>(e.subject)].push_back(e.object);
    for (auto& [s, objs] : by_subject) units.push_back({relation_id(r), EntityId{s}, std::move(objs)});
  }

  std::vector<std::optional<UnitMetrics>> results(units.size());
  auto evaluate_unit = [&](std::size_t i) {
    const Unit& u = units[i];
    Rng rng = make_rng(seed, {seed_tag::kEval, to_index(u.r), to_index(u.s)});
    std::vector<EntityId> candidates = u.positives;
    try {
      const auto negatives = draw_negatives(splits, u.r, u.s, m_neg, rng);
      candidates.insert(candidates.end(), negatives.begin(), negatives.end());
    } catch (const SaturationError&) {
      return;
    }
    const std::vector<double> scores = model.score_candidates(u.r, u.s, candidates);
    const std::span<const double> all(scores);
    const auto n_pos = u.positives.size();
    results[i] = UnitMetrics{u.r, u.s, n_pos, candidates.size() - n_pos,
                             rank_metrics(all.first(n_pos), all.subspan(n_pos), k)};
  };
  if (n_workers <= 1) {
    for (std::size_t i = 0; i < units.size(); ++i) evaluate_unit(i);
  } else {
    WorkerPool pool(n_workers);
    pool.run([&](std::size_t w) {
      for (std::size_t i = w; i < units.size(); i += n_workers) evaluate_unit(i);
    });
  }

  EvalReport report;
  report.k = k;
  report.m_neg = m_neg;
  report.per_relation.resize(held_out.n_relations());
  for (auto& res : results) {
    if (!res) {
      ++report.skipped_units;
      continue;
    }
    auto& rel = report.per_relation[to_index(res->relation)];
    ++rel.units;
    rel.mean.auc += res->metrics.auc;
    rel.mean.precision_at_k += res->metrics.precision_at_k;
    rel.mean.recall_at_k += res->metrics.recall_at_k;
    report.macro.auc += res->metrics.auc;
    report.macro.precision_at_k += res->metrics.precision_at_k;
    report.macro.recall_at_k += res->metrics.recall_at_k;
    report.units.push_back(*res);
  }
  auto normalize = [](RankMetrics& m, std::size_t n) {
    if (n == 0) return;
    m.auc /= static_cast<double>(n);
    m.precision_at_k /= static_cast<double>(n);
    m.recall_at_k /= static_cast<double>(n);
  };
  normalize(report.macro, report.units.size());
  for (auto& rel : report.per_relation) normalize(rel.mean, rel.units);
  return report;
}

/// `relation,units,auc,precision_at_k,recall_at_k` plus a `__macro__` row.
/// Relations without units have empty metric fields.
inline void write_report_csv(std::ostream& out, const EvalReport& report, const Vocabulary& vocab) {
  out << "relation,units,auc,precision_at_k,recall_at_k\n";
  auto row = [&](const std::string& name, std::size_t units, const RankMetrics& m) {
    out << csv::escape(name) << ',' << units;
    if (units == 0)
      out << ",,,\n";
    else
      out << ',' << csv::number(m.auc) << ',' << csv::number(m.precision_at_k) << ',' << csv::number(m.recall_at_k)
          << '\n';
  };
  for (std::size_t r = 0; r < report.per_relation.size(); ++r)
    row(vocab.relations.name(r), report.per_relation[r].units, report.per_relation[r].mean);
  row("__macro__", report.units.size(), report.macro);
}

inline void write_report_summary(std::ostream& out, const EvalReport& report) {
  out << "units: " << report.units.size() << " (skipped: " << report.skipped_units << ")\n"
      << "negatives per unit: " << report.m_neg << "\n"
      << "AUC: " << report.macro.auc << "\n"
      << "precision@" << report.k << ": " << report.macro.precision_at_k << "\n"
      << "recall@" << report.k << ": " << report.macro.recall_at_k << "\n";
}

// ---------------------------------------------------------------------------
// Cross-validation

struct FoldOptions {
  double test_frac = 0.1;
  double valid_frac = 0.1;
  /// Partition the triples into disjoint test folds instead of resampling.
  bool disjoint = false;
};

inline std::vector<SplitDataset> make_folds(const MultiRelationalDataset& ds, std::size_t n_folds, std::uint64_t seed,
                                            FoldOptions options = {}) {
  if (n_folds < 2) throw std::invalid_argument("make_folds: need at least 2 folds");
  std::vector<SplitDataset> folds;
  folds.reserve(n_folds);
  if (!options.disjoint) {
    for (std::size_t i = 0; i < n_folds; ++i)
      folds.push_back(split_dataset(ds, options.test_frac, options.valid_frac, derive_seed(seed, {seed_tag::kFold, i})));
    return folds;
  }
  const std::vector<Triple> all = ds.triples();
  std::vector<std::size_t> idx(all.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng = make_rng(seed, {seed_tag::kFold});
  std::shuffle(idx.begin(), idx.end(), rng);
  const std::size_t n = all.size();
  for (std::size_t i = 0; i < n_folds; ++i) {
    const std::size_t lo = i * n / n_folds, hi = (i + 1) * n / n_folds;
    std::vector<Triple> test, rest;
    for (std::size_t j = 0; j < n; ++j) (j >= lo && j < hi ? test : rest).push_back(all[idx[j]]);
    Rng fold_rng = make_rng(seed, {seed_tag::kFold, i});
    std::shuffle(rest.begin(), rest.end(), fold_rng);
    const auto n_valid = static_cast<std::size_t>(std::floor(options.valid_frac * static_cast<double>(rest.size())));
    const std::span<const Triple> r(rest);
    folds.push_back(assemble_split(ds.shared_vocabulary(), r.subspan(n_valid), r.first(n_valid), test));
  }
  return folds;
}

struct ConfidenceInterval {
  double mean = 0.0;
  double half_width = 0.0;
  std::size_t n = 0;
};

/// Mean and Student-t half-width at `level` (two-sided).
inline ConfidenceInterval confidence_interval(std::span<const double> values, double level = 0.99) {
  ConfidenceInterval ci{0.0, 0.0, values.size()};
  if (values.empty()) return ci;
  ci.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  if (values.size() < 2) return ci;
  double ss = 0.0;
  for (double v : values) ss += (v - ci.mean) * (v - ci.mean);
  const double sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
  const boost::math::students_t dist(static_cast<double>(values.size() - 1));
  const double t = boost::math::quantile(dist, 0.5 + level / 2.0);
  ci.half_width = t * sd / std::sqrt(static_cast<double>(values.size()));
  return ci;
}

/// `metric,mean,ci99_half_width,folds`
inline void write_fold_summary_csv(std::ostream& out, std::span<const EvalReport> folds) {
  out << "metric,mean,ci99_half_width,folds\n";
  auto emit = [&](const char* name, auto field) {
    std::vector<double> vals;
    for (const auto& f : folds) vals.push_back(field(f.macro));
    const auto ci = confidence_interval(vals, 0.99);
    out << name << ',' << csv::number(ci.mean) << ',' << csv::number(ci.half_width) << ',' << ci.n << '\n';
  };
  emit("auc", [](const RankMetrics& m) { return m.auc; });
  emit("precision_at_k", [](const RankMetrics& m) { return m.precision_at_k; });
  emit("recall_at_k", [](const RankMetrics& m) { return m.recall_at_k; });
}

}  // namespace consmrf
