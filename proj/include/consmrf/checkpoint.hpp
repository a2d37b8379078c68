#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <variant>

#include "consmrf/baselines.hpp"
#include "consmrf/consensus_trainer.hpp"
#include "consmrf/errors.hpp"
#include "consmrf/factors.hpp"

namespace consmrf {

enum class ModelKind : std::uint32_t { consmrf = 0, cd = 1, dmf = 2 };

constexpr std::string_view to_string(ModelKind k) noexcept {
  switch (k) {
    case ModelKind::consmrf: return "consmrf";
    case ModelKind::cd: return "cd";
    case ModelKind::dmf: return "dmf";
  }
  return "?";
}

using AnyModel = std::variant<TrainedModel, SharedModel, DmfModel>;

struct CheckpointHeader {
  ModelKind kind = ModelKind::consmrf;
  std::size_t k = 0;
  std::size_t n_relations = 0;
  std::size_t n_entities = 0;
  RelationWeightShape shape = RelationWeightShape::diagonal;
  Hyperparams hp;
  std::size_t rounds_completed = 0;
};

struct Checkpoint {
  CheckpointHeader header;
  AnyModel model;
};

inline constexpr std::array<char, 8> kCheckpointMagic = {'C', 'O', 'N', 'S', 'M', 'R', 'F', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

/// Little-endian primitive I/O.
class LeWriter {
 public:
  explicit LeWriter(std::ostream& out) : out_(out) {}

  void u32(std::uint32_t v) { put(v); }
  void u64(std::uint64_t v) { put(v); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v)); }
  void f64s(std::span<const double> vs) {
    for (double v : vs) f64(v);
  }
  void bytes(std::span<const char> b) { out_.write(b.data(), static_cast<std::streamsize>(b.size())); }

 private:
  template <class T>
  void put(T v) {
    char buf[sizeof(T)];
    for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out_.write(buf, sizeof(T));
  }
  std::ostream& out_;
};

class LeReader {
 public:
  explicit LeReader(std::istream& in) : in_(in) {}

  std::uint32_t u32() { return get<std::uint32_t>(); }
  std::uint64_t u64() { return get<std::uint64_t>(); }
  double f64() { return std::bit_cast<double>(get<std::uint64_t>()); }
  void f64s(std::span<double> vs) {
    for (double& v : vs) v = f64();
  }
  void bytes(std::span<char> b) {
    if (!in_.read(b.data(), static_cast<std::streamsize>(b.size()))) throw Error("checkpoint truncated");
  }

 private:
  template <class T>
  T get() {
    unsigned char buf[sizeof(T)];
    if (!in_.read(reinterpret_cast<char*>(buf), sizeof(T))) throw Error("checkpoint truncated");
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(buf[i]) << (8 * i);
    return v;
  }
  std::istream& in_;
};

inline constexpr std::uint64_t kUnsetBudget = std::numeric_limits<std::uint64_t>::max();

inline void write_header(LeWriter& w, const CheckpointHeader& h) {
  w.bytes(kCheckpointMagic);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(h.kind));
  w.u64(h.k);
  w.u64(h.n_relations);
  w.u64(h.n_entities);
  w.u32(static_cast<std::uint32_t>(h.shape));
  w.f64(h.hp.lambda);
  w.f64(h.hp.eta);
  w.f64(h.hp.rho);
  w.f64(h.hp.sigma_init);
  w.f64(h.hp.epsilon);
  w.f64(h.hp.alpha);
  w.f64(h.hp.adagrad_delta);
  w.u64(h.hp.inner_budget ? *h.hp.inner_budget : kUnsetBudget);
  w.u64(h.hp.max_rounds);
  w.u64(h.hp.eval_negatives);
  w.u64(h.hp.top_k);
  w.u64(h.hp.seed);
  w.u64(h.rounds_completed);
}

inline CheckpointHeader read_header(LeReader& r) {
  std::array<char, 8> magic{};
  r.bytes(magic);
  if (magic != kCheckpointMagic) throw Error("not a checkpoint file");
  if (const auto v = r.u32(); v != kCheckpointVersion) throw Error("unsupported checkpoint version " + std::to_string(v));
  CheckpointHeader h;
  const auto kind = r.u32();
  if (kind > 2) throw Error("unknown model kind in checkpoint");
  h.kind = static_cast<ModelKind>(kind);
  h.k = r.u64();
  h.n_relations = r.u64();
  h.n_entities = r.u64();
  const auto shape = r.u32();
  if (shape > 2) throw Error("unknown relation shape in checkpoint");
  h.shape = static_cast<RelationWeightShape>(shape);
  h.hp.k = h.k;
  h.hp.shape = h.shape;
  h.hp.lambda = r.f64();
  h.hp.eta = r.f64();
  h.hp.rho = r.f64();
  h.hp.sigma_init = r.f64();
  h.hp.epsilon = r.f64();
  h.hp.alpha = r.f64();
  h.hp.adagrad_delta = r.f64();
  if (const auto b = r.u64(); b != kUnsetBudget) h.hp.inner_budget = b;
  h.hp.max_rounds = r.u64();
  h.hp.eval_negatives = r.u64();
  h.hp.top_k = r.u64();
  h.hp.seed = r.u64();
  h.rounds_completed = r.u64();
  return h;
}

inline FactorMatrix read_matrix(LeReader& r, std::size_t rows, std::size_t cols) {
  FactorMatrix m(rows, cols);
  r.f64s(m.values());
  return m;
}

inline RelationFactors read_relation(LeReader& r, const CheckpointHeader& h) {
  auto w = RelationFactors::zeros(h.shape, h.k);
  r.f64s(w.params);
  return w;
}

}  // namespace detail

/// Header (magic, version, kind, k, R, |E|, shape, hyperparameters, rounds),
/// then little-endian f64 payload:
///   consmrf: Z, then per relation A_r, W_r, V_r
///   cd:      A, then per relation W_r
///   dmf:     per target A_t, then W[t][r] for every (t, r) row-major
inline void save_checkpoint(std::ostream& out, const AnyModel& model, const Hyperparams& hp) {
  detail::LeWriter w(out);
  CheckpointHeader h;
  h.k = hp.k;
  h.shape = hp.shape;
  h.hp = hp;
  std::visit(
      [&](const auto& m) {
        using M = std::decay_t<decltype(m)>;
        h.rounds_completed = m.rounds_completed;
        if constexpr (std::is_same_v<M, TrainedModel>) {
          h.kind = ModelKind::consmrf;
          h.n_relations = m.relations.size();
          h.n_entities = m.consensus.Z.rows();
          detail::write_header(w, h);
          w.f64s(m.consensus.Z.values());
          for (std::size_t r = 0; r < m.relations.size(); ++r) {
            w.f64s(m.relations[r].A.values());
            w.f64s(m.relations[r].W.params);
            w.f64s(m.consensus.V[r].values());
          }
        } else if constexpr (std::is_same_v<M, SharedModel>) {
          h.kind = ModelKind::cd;
          h.n_relations = m.W.size();
          h.n_entities = m.A.rows();
          detail::write_header(w, h);
          w.f64s(m.A.values());
          for (const auto& rel : m.W) w.f64s(rel.params);
        } else {
          h.kind = ModelKind::dmf;
          h.n_relations = m.A.size();
          h.n_entities = m.A.empty() ? 0 : m.A.front().rows();
          detail::write_header(w, h);
          for (const auto& a : m.A) w.f64s(a.values());
          for (const auto& row : m.W)
            for (const auto& rel : row) w.f64s(rel.params);
        }
      },
      model);
  if (!out) throw Error("failed to write checkpoint");
}

inline Checkpoint load_checkpoint(std::istream& in) {
  detail::LeReader r(in);
  Checkpoint cp{detail::read_header(r), TrainedModel{}};
  const auto& h = cp.header;
  switch (h.kind) {
    case ModelKind::consmrf: {
      TrainedModel m;
      m.rounds_completed = h.rounds_completed;
      m.consensus.Z = detail::read_matrix(r, h.n_entities, h.k);
      for (std::size_t i = 0; i < h.n_relations; ++i) {
        RelationParams p;
        p.A = detail::read_matrix(r, h.n_entities, h.k);
        p.W = detail::read_relation(r, h);
        m.relations.push_back(std::move(p));
        m.consensus.V.push_back(detail::read_matrix(r, h.n_entities, h.k));
      }
      cp.model = std::move(m);
      break;
    }
    case ModelKind::cd: {
      SharedModel m;
      m.rounds_completed = h.rounds_completed;
      m.A = detail::read_matrix(r, h.n_entities, h.k);
      for (std::size_t i = 0; i < h.n_relations; ++i) m.W.push_back(detail::read_relation(r, h));
      cp.model = std::move(m);
      break;
    }
    case ModelKind::dmf: {
      DmfModel m;
      m.rounds_completed = h.rounds_completed;
      m.alpha = h.hp.alpha;
      for (std::size_t t = 0; t < h.n_relations; ++t) m.A.push_back(detail::read_matrix(r, h.n_entities, h.k));
      for (std::size_t t = 0; t < h.n_relations; ++t) {
        std::vector<RelationFactors> row;
        for (std::size_t i = 0; i < h.n_relations; ++i) row.push_back(detail::read_relation(r, h));
        m.W.push_back(std::move(row));
      }
      cp.model = std::move(m);
      break;
    }
  }
  return cp;
}

inline void save_checkpoint(const std::string& path, const AnyModel& model, const Hyperparams& hp) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  save_checkpoint(out, model, hp);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return load_checkpoint(in);
}

/// Scoring adapter over whichever model a checkpoint holds.
struct AnyModelScorer {
  const AnyModel* model;
  std::vector<double> score_candidates(RelationId r, EntityId s, std::span<const EntityId> objects) const {
    return std::visit([&](const auto& m) { return m.score_candidates(r, s, objects); }, *model);
  }
};

}  // namespace consmrf
