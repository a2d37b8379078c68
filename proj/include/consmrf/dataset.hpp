#pragma once

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstdint>
#include <fstream>
#include <istream>
#include <memory>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "consmrf/csv.hpp"
#include "consmrf/errors.hpp"
#include "consmrf/rng.hpp"

namespace consmrf {

enum class EntityId : std::uint32_t {};
enum class RelationId : std::uint32_t {};

constexpr std::size_t to_index(EntityId e) noexcept { return static_cast<std::size_t>(e); }
constexpr std::size_t to_index(RelationId r) noexcept { return static_cast<std::size_t>(r); }
constexpr EntityId entity_id(std::size_t i) noexcept { return EntityId{static_cast<std::uint32_t>(i)}; }
constexpr RelationId relation_id(std::size_t i) noexcept { return RelationId{static_cast<std::uint32_t>(i)}; }

struct Triple {
  EntityId subject{};
  EntityId object{};
  RelationId relation{};
  double value = 1.0;

  friend bool operator==(const Triple&, const Triple&) = default;
};

/// Subject/object pair stored per relation.
struct Edge {
  EntityId subject{};
  EntityId object{};

  friend bool operator==(const Edge&, const Edge&) = default;
};

/// Bidirectional name <-> dense id map. Ids are assigned in first-appearance order.
class Dictionary {
 public:
  std::uint32_t intern(std::string_view name) {
    auto it = ids_.find(std::string(name));
    if (it != ids_.end()) return it->second;
    const auto id = static_cast<std::uint32_t>(names_.size());
    names_.emplace_back(name);
    ids_.emplace(names_.back(), id);
    return id;
  }

  std::optional<std::uint32_t> find(std::string_view name) const {
    auto it = ids_.find(std::string(name));
    if (it == ids_.end()) return std::nullopt;
    return it->second;
  }

  const std::string& name(std::size_t id) const { return names_.at(id); }
  std::size_t size() const noexcept { return names_.size(); }
  const std::vector<std::string>& names() const noexcept { return names_; }

  friend bool operator==(const Dictionary& a, const Dictionary& b) { return a.names_ == b.names_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::uint32_t> ids_;
};

struct Vocabulary {
  Dictionary entities;
  Dictionary relations;

  friend bool operator==(const Vocabulary&, const Vocabulary&) = default;
};

/// Positive pairs of one relation with O(1) expected membership.
class RelationData {
 public:
  bool add(EntityId s, EntityId o) {
    if (!index_.insert(key(s, o)).second) return false;
    edges_.push_back({s, o});
    ++degree_[static_cast<std::uint32_t>(s)];
    return true;
  }

  bool contains(EntityId s, EntityId o) const { return index_.contains(key(s, o)); }

  /// Number of distinct objects linked to `s`.
  std::size_t degree(EntityId s) const {
    auto it = degree_.find(static_cast<std::uint32_t>(s));
    return it == degree_.end() ? 0 : it->second;
  }

  std::span<const Edge> edges() const noexcept { return edges_; }
  std::size_t size() const noexcept { return edges_.size(); }
  bool empty() const noexcept { return edges_.empty(); }

  friend bool operator==(const RelationData& a, const RelationData& b) { return a.edges_ == b.edges_; }

 private:
  static std::uint64_t key(EntityId s, EntityId o) noexcept {
    return (static_cast<std::uint64_t>(s) << 32) | static_cast<std::uint64_t>(o);
  }

  std::vector<Edge> edges_;
  std::unordered_set<std::uint64_t> index_;
  std::unordered_map<std::uint32_t, std::uint32_t> degree_;
};

/// Entity/relation dictionaries plus one positive-pair set per relation.
/// Immutable once built; safe to share across threads.
class MultiRelationalDataset {
 public:
  MultiRelationalDataset() : vocab_(std::make_shared<Vocabulary>()) {}

  explicit MultiRelationalDataset(std::shared_ptr<const Vocabulary> vocab)
      : vocab_(std::move(vocab)), relations_(vocab_->relations.size()) {}

  /// Adds a triple; returns false for a duplicate.
  bool add(const Triple& t) {
    if (to_index(t.subject) >= n_entities() || to_index(t.object) >= n_entities() ||
        to_index(t.relation) >= n_relations())
      throw std::out_of_range("triple references an id missing from the dictionary");
    const bool inserted = relations_[to_index(t.relation)].add(t.subject, t.object);
    n_triples_ += inserted ? 1 : 0;
    return inserted;
  }

  std::size_t n_entities() const noexcept { return vocab_->entities.size(); }
  std::size_t n_relations() const noexcept { return relations_.size(); }
  std::size_t n_triples() const noexcept { return n_triples_; }

  const RelationData& relation(RelationId r) const { return relations_.at(to_index(r)); }

  bool contains(EntityId s, RelationId r, EntityId o) const { return relation(r).contains(s, o); }

  const Vocabulary& vocabulary() const noexcept { return *vocab_; }
  const std::shared_ptr<const Vocabulary>& shared_vocabulary() const noexcept { return vocab_; }

  /// All triples, relation-major, insertion order within a relation.
  std::vector<Triple> triples() const {
    std::vector<Triple> out;
    out.reserve(n_triples_);
    for (std::size_t r = 0; r < relations_.size(); ++r)
      for (const Edge& e : relations_[r].edges()) out.push_back({e.subject, e.object, relation_id(r), 1.0});
    return out;
  }

  friend bool operator==(const MultiRelationalDataset& a, const MultiRelationalDataset& b) {
    return a.vocabulary() == b.vocabulary() && a.relations_ == b.relations_;
  }

 private:
  std::shared_ptr<const Vocabulary> vocab_;
  std::vector<RelationData> relations_;
  std::size_t n_triples_ = 0;
};

enum class Membership { train_only, all_splits };

/// Train/valid/test views sharing one vocabulary. `all` holds the union and
/// serves membership queries over every split.
struct SplitDataset {
  MultiRelationalDataset train;
  MultiRelationalDataset valid;
  MultiRelationalDataset test;
  MultiRelationalDataset all;

  const MultiRelationalDataset& scope(Membership which) const {
    return which == Membership::train_only ? train : all;
  }
};

inline bool contains(const MultiRelationalDataset& ds, EntityId s, RelationId r, EntityId o,
                     Membership = Membership::all_splits) {
  return ds.contains(s, r, o);
}

inline bool contains(const SplitDataset& splits, EntityId s, RelationId r, EntityId o, Membership which) {
  return splits.scope(which).contains(s, r, o);
}

/// Largest number of draws the rejection sampler makes for a subject of degree `degree`.
constexpr std::size_t max_sampling_attempts(std::size_t n_entities, std::size_t degree) noexcept {
  const std::size_t free = n_entities > degree ? n_entities - degree : 0;
  return std::max<std::size_t>(100, 20 * n_entities / std::max<std::size_t>(1, free));
}

/// Draws an object uniformly from the `n_entities` entities, rejecting objects
/// linked to `s` in `rel`. Throws SaturationError once the attempt cap is hit.
inline EntityId sample_unlinked_object(const RelationData& rel, std::size_t n_entities, EntityId s, Rng& rng) {
  std::uniform_int_distribution<std::uint32_t> pick(0, static_cast<std::uint32_t>(n_entities - 1));
  std::size_t attempts = 0;
  std::size_t cap = 100;
  for (;;) {
    const EntityId o{pick(rng)};
    if (!rel.contains(s, o)) return o;
    if (++attempts == cap) {
      // Degree lookup is deferred past the common case.
      const std::size_t degree = rel.degree(s);
      const std::size_t full_cap = max_sampling_attempts(n_entities, degree);
      if (degree >= n_entities || attempts >= full_cap)
        throw SaturationError("no unlinked object found for subject " + std::to_string(to_index(s)) + " after " +
                              std::to_string(attempts) + " draws");
      cap = full_cap;
    }
  }
}

inline EntityId sample_unlinked_object(const MultiRelationalDataset& scope, EntityId s, RelationId r, Rng& rng) {
  return sample_unlinked_object(scope.relation(r), scope.n_entities(), s, rng);
}

inline EntityId sample_unlinked_object(const SplitDataset& splits, EntityId s, RelationId r, Membership which,
                                       Rng& rng) {
  return sample_unlinked_object(splits.scope(which), s, r, rng);
}

// ---------------------------------------------------------------------------
// Ingestion

enum class TripleFormat { tsv };

/// Parses "subject<TAB>relation<TAB>object" lines. Blank lines and lines
/// starting with '#' are skipped; duplicates are dropped.
inline MultiRelationalDataset parse_triples(std::istream& in, const std::string& source = "<stream>",
                                            TripleFormat = TripleFormat::tsv) {
  auto vocab = std::make_shared<Vocabulary>();
  struct Raw {
    std::uint32_t s, r, o;
  };
  std::vector<Raw> raw;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos || line.front() == '#') continue;
    std::string_view rest(line);
    std::string_view fields[3];
    std::size_t n_fields = 0;
    for (;;) {
      const auto tab = rest.find('\t');
      if (n_fields < 3) fields[n_fields] = rest.substr(0, tab);
      ++n_fields;
      if (tab == std::string_view::npos) break;
      rest.remove_prefix(tab + 1);
    }
    if (n_fields != 3)
      throw ParseError(source, lineno, "expected 3 tab-separated fields, found " + std::to_string(n_fields));
    for (auto f : fields)
      if (f.empty()) throw ParseError(source, lineno, "empty field");
    const auto s = vocab->entities.intern(fields[0]);
    const auto r = vocab->relations.intern(fields[1]);
    const auto o = vocab->entities.intern(fields[2]);
    raw.push_back({s, r, o});
  }
  if (raw.empty()) throw EmptyDatasetError(source + ": no triples");
  MultiRelationalDataset ds(vocab);
  for (const Raw& t : raw) ds.add({EntityId{t.s}, EntityId{t.o}, RelationId{t.r}, 1.0});
  return ds;
}

inline MultiRelationalDataset parse_triples(const std::string& path, TripleFormat format = TripleFormat::tsv) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  return parse_triples(in, path, format);
}

inline constexpr std::string_view kDatasetCacheMagic = "consmrf-dataset";
inline constexpr int kDatasetCacheVersion = 1;

/// Line-oriented cache: dictionaries in id order, then "r s o" id rows.
inline void write_dataset_cache(std::ostream& out, const MultiRelationalDataset& ds) {
  const Vocabulary& v = ds.vocabulary();
  out << kDatasetCacheMagic << ' ' << kDatasetCacheVersion << '\n';
  out << "entities " << v.entities.size() << '\n';
  for (const auto& n : v.entities.names()) out << n << '\n';
  out << "relations " << v.relations.size() << '\n';
  for (const auto& n : v.relations.names()) out << n << '\n';
  out << "triples " << ds.n_triples() << '\n';
  for (const Triple& t : ds.triples())
    out << to_index(t.relation) << ' ' << to_index(t.subject) << ' ' << to_index(t.object) << '\n';
}

inline MultiRelationalDataset read_dataset_cache(std::istream& in) {
  auto fail = [](const std::string& what) { return Error("bad dataset cache: " + what); };
  std::string line;
  std::string magic;
  int version = 0;
  if (!std::getline(in, line)) throw fail("missing header");
  std::istringstream(line) >> magic >> version;
  if (magic != kDatasetCacheMagic || version != kDatasetCacheVersion) throw fail("unsupported header '" + line + "'");

  auto read_count = [&](std::string_view label) {
    if (!std::getline(in, line)) throw fail("missing " + std::string(label));
    std::istringstream ls(line);
    std::string got;
    std::size_t n = 0;
    ls >> got >> n;
    if (got != label || !ls) throw fail("expected '" + std::string(label) + "'");
    return n;
  };
  auto vocab = std::make_shared<Vocabulary>();
  for (std::size_t i = 0, n = read_count("entities"); i < n; ++i) {
    if (!std::getline(in, line)) throw fail("truncated entities");
    vocab->entities.intern(line);
  }
  for (std::size_t i = 0, n = read_count("relations"); i < n; ++i) {
    if (!std::getline(in, line)) throw fail("truncated relations");
    vocab->relations.intern(line);
  }
  MultiRelationalDataset ds(vocab);
  for (std::size_t i = 0, n = read_count("triples"); i < n; ++i) {
    std::uint32_t r = 0, s = 0, o = 0;
    if (!(in >> r >> s >> o)) throw fail("truncated triples");
    ds.add({EntityId{s}, EntityId{o}, RelationId{r}, 1.0});
  }
  return ds;
}

/// Stats summary as CSV: `section,name,count`.
inline void write_stats_csv(std::ostream& out, const MultiRelationalDataset& ds) {
  out << "section,name,count\n";
  out << "summary,entities," << ds.n_entities() << '\n';
  out << "summary,relations," << ds.n_relations() << '\n';
  out << "summary,triples," << ds.n_triples() << '\n';
  for (std::size_t r = 0; r < ds.n_relations(); ++r)
    out << "relation," << csv::escape(ds.vocabulary().relations.name(r)) << ',' << ds.relation(relation_id(r)).size()
        << '\n';
}

// ---------------------------------------------------------------------------
// Splitting

struct SplitOptions {
  /// Apply the fractions within each relation instead of over all triples.
  bool stratified = false;
};

/// Builds a SplitDataset from explicit parts. Throws SplitRejectedError when a
/// relation has no training triple.
inline SplitDataset assemble_split(const std::shared_ptr<const Vocabulary>& vocab, std::span<const Triple> train,
                                   std::span<const Triple> valid, std::span<const Triple> test) {
  SplitDataset out{MultiRelationalDataset(vocab), MultiRelationalDataset(vocab), MultiRelationalDataset(vocab),
                   MultiRelationalDataset(vocab)};
  for (const auto& t : train) out.train.add(t);
  for (const auto& t : valid) out.valid.add(t);
  for (const auto& t : test) out.test.add(t);
  for (auto part : {train, valid, test})
    for (const auto& t : part)
      if (!out.all.add(t)) throw std::invalid_argument("split parts overlap or contain duplicates");
  for (std::size_t r = 0; r < out.train.n_relations(); ++r)
    if (out.train.relation(relation_id(r)).empty()) throw SplitRejectedError(vocab->relations.name(r));
  return out;
}

/// Sends floor(test_frac*N) triples to test, then floor(valid_frac*remaining)
/// to valid; the rest is train. Deterministic in `seed`.
inline SplitDataset split_dataset(const MultiRelationalDataset& ds, double test_frac, double valid_frac,
                                  std::uint64_t seed, SplitOptions options = {}) {
  if (!(test_frac >= 0 && valid_frac >= 0 && test_frac + (1 - test_frac) * valid_frac < 1))
    throw std::invalid_argument("split fractions must satisfy test + (1 - test) * valid < 1");
  const std::vector<Triple> all = ds.triples();
  enum class Part : unsigned char { train, valid, test };
  std::vector<Part> label(all.size(), Part::train);
  Rng rng = make_rng(seed, {seed_tag::kSplit});

  auto assign = [&](std::vector<std::size_t> idx) {
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto n = idx.size();
    const auto n_test = static_cast<std::size_t>(std::floor(test_frac * static_cast<double>(n)));
    const auto n_valid = static_cast<std::size_t>(std::floor(valid_frac * static_cast<double>(n - n_test)));
    for (std::size_t i = 0; i < n_test; ++i) label[idx[i]] = Part::test;
    for (std::size_t i = n_test; i < n_test + n_valid; ++i) label[idx[i]] = Part::valid;
  };
  if (options.stratified) {
    std::size_t begin = 0;
    for (std::size_t r = 0; r < ds.n_relations(); ++r) {
      const auto n = ds.relation(relation_id(r)).size();
      std::vector<std::size_t> idx(n);
      std::iota(idx.begin(), idx.end(), begin);
      assign(std::move(idx));
      begin += n;
    }
  } else {
    std::vector<std::size_t> idx(all.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    assign(std::move(idx));
  }

  std::vector<Triple> train, valid, test;
  for (std::size_t i = 0; i < all.size(); ++i) {
    switch (label[i]) {
      case Part::train: train.push_back(all[i]); break;
      case Part::valid: valid.push_back(all[i]); break;
      case Part::test: test.push_back(all[i]); break;
    }
  }
  return assemble_split(ds.shared_vocabulary(), train, valid, test);
}

}  // namespace consmrf
