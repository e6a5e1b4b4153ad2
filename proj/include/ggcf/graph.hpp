#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace ggcf {

using Index = std::uint32_t;
using RawId = std::int64_t;
using Rng = std::mt19937_64;

struct Interaction {
  Index user;
  Index item;
  friend auto operator<=>(const Interaction&, const Interaction&) = default;
};

// Dense, zero-based user/item interactions plus the tables mapping dense
// indices back to the IDs found in the source files. Both ID tables are sorted
// ascending, so dense order follows raw-ID order.
class InteractionSet {
 public:
  InteractionSet() = default;

  // Deduplicates and reindexes raw (user, item) ID pairs.
  static InteractionSet from_raw(std::span<const std::pair<RawId, RawId>> raw);

  // Pairs over an existing ID space; pairs are sorted and deduplicated.
  InteractionSet(std::vector<RawId> user_ids, std::vector<RawId> item_ids,
                 std::vector<Interaction> pairs);

  std::size_t user_count() const { return user_ids_.size(); }
  std::size_t item_count() const { return item_ids_.size(); }
  std::size_t size() const { return pairs_.size(); }
  bool empty() const { return pairs_.empty(); }

  // Sorted by (user, item).
  std::span<const Interaction> pairs() const { return pairs_; }

  const std::vector<RawId>& user_ids() const { return user_ids_; }
  const std::vector<RawId>& item_ids() const { return item_ids_; }

  RawId user_id(Index u) const { return user_ids_.at(u); }
  RawId item_id(Index i) const { return item_ids_.at(i); }
  // Throws DimensionError for unknown IDs.
  Index user_index(RawId id) const;
  Index item_index(RawId id) const;

  // Items of user u, ascending.
  std::span<const Interaction> user_pairs(Index u) const;
  std::vector<std::size_t> user_degrees() const;

  bool same_id_space(const InteractionSet& other) const {
    return user_ids_ == other.user_ids_ && item_ids_ == other.item_ids_;
  }

  friend bool operator==(const InteractionSet&, const InteractionSet&) = default;

 private:
  std::vector<RawId> user_ids_;
  std::vector<RawId> item_ids_;
  std::vector<Interaction> pairs_;
  std::vector<std::size_t> user_offsets_;
};

// `userId,movieId,rating,timestamp` with one header line. Every rating counts.
InteractionSet load_movielens(const std::filesystem::path& path);
// `userID<TAB>artistID<TAB>weight` with one header line. Listen counts ignored.
InteractionSet load_lastfm(const std::filesystem::path& path);

// First column of every data line of a catalogue file (movies.csv,
// artists.dat), header skipped.
std::vector<RawId> load_catalog(const std::filesystem::path& path, char delim);

// Same pairs over an item table widened by `extra` items.
InteractionSet with_items(const InteractionSet& data, std::span<const RawId> extra);

struct Split {
  InteractionSet train;
  InteractionSet test;
};

// Per user: floor(train_fraction * n) interactions (at least one) go to train.
Split split(const InteractionSet& data, double train_fraction, std::uint64_t seed);

// `u<TAB>i<TAB>{train|test}` per line, raw IDs. Items without any pair are
// listed as `-<TAB>i<TAB>catalog` so the item table survives a round trip.
void write_split(const std::filesystem::path& path, const Split& split);
Split read_split(const std::filesystem::path& path);
std::string format_split(const Split& split);

// Bipartite adjacency in compressed sparse form with w_ui = 1/sqrt(|N_u| |N_i|).
class InteractionGraph {
 public:
  struct Edge {
    Index node;
    double weight;
  };

  explicit InteractionGraph(const InteractionSet& train);

  std::size_t user_count() const { return user_offsets_.size() - 1; }
  std::size_t item_count() const { return item_offsets_.size() - 1; }
  std::size_t edge_count() const { return user_edges_.size(); }

  // Neighbours sorted by index.
  std::span<const Edge> user_neighbors(Index u) const {
    return {user_edges_.data() + user_offsets_[u], user_offsets_[u + 1] - user_offsets_[u]};
  }
  std::span<const Edge> item_neighbors(Index i) const {
    return {item_edges_.data() + item_offsets_[i], item_offsets_[i + 1] - item_offsets_[i]};
  }

  std::size_t user_degree(Index u) const { return user_offsets_[u + 1] - user_offsets_[u]; }
  std::size_t item_degree(Index i) const { return item_offsets_[i + 1] - item_offsets_[i]; }

  bool has_edge(Index u, Index i) const;

  // Edges are numbered in user-major order.
  Interaction edge(std::size_t e) const;

 private:
  std::vector<std::size_t> user_offsets_;
  std::vector<Edge> user_edges_;
  std::vector<std::size_t> item_offsets_;
  std::vector<Edge> item_edges_;
};

InteractionGraph build_graph(const InteractionSet& train);

struct BprTriple {
  Index user;
  Index pos_item;
  Index neg_item;
  friend bool operator==(const BprTriple&, const BprTriple&) = default;
};

struct TripleBatch {
  std::vector<BprTriple> triples;
  // Draws dropped because the user has no unobserved item.
  std::size_t skipped = 0;
};

// Uniform integer in [0, n), independent of the standard library's
// distribution implementation.
std::uint64_t uniform_index(Rng& rng, std::uint64_t n);

// `count` positives drawn uniformly with replacement from the training edges,
// each paired with a uniformly drawn unobserved item.
TripleBatch sample_triples(const InteractionGraph& graph, std::size_t count, Rng& rng);

// One epoch: every training edge once in shuffled order, one negative each.
TripleBatch epoch_triples(const InteractionGraph& graph, Rng& rng);

}  // namespace ggcf
