#include "ggcf/graph.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>
#include <string_view>

#include "ggcf/error.hpp"

namespace ggcf {

namespace {

std::vector<RawId> sorted_unique(std::vector<RawId> ids) {
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

Index lookup(const std::vector<RawId>& ids, RawId id, const char* what) {
  auto it = std::lower_bound(ids.begin(), ids.end(), id);
  if (it == ids.end() || *it != id) {
    throw DimensionError(std::string("unknown ") + what + " id " + std::to_string(id));
  }
  return static_cast<Index>(it - ids.begin());
}

std::vector<std::string_view> split_fields(std::string_view line, char delim) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(delim, start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\n')) s.remove_suffix(1);
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  return s;
}

bool parse_int(std::string_view s, RawId& out) {
  s = trim(s);
  if (s.empty()) return false;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

bool parse_real(std::string_view s) {
  s = trim(s);
  if (s.empty()) return false;
  // from_chars for double is unavailable on older libstdc++; strtod works on
  // a NUL-terminated copy.
  std::string copy(s);
  char* end = nullptr;
  const double v = std::strtod(copy.c_str(), &end);
  return end == copy.c_str() + copy.size() && std::isfinite(v);
}

InteractionSet load_delimited(const std::filesystem::path& path, char delim,
                              std::size_t min_fields) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  const std::string name = path.string();
  std::vector<std::pair<RawId, RawId>> raw;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1) continue;  // header
    const std::string_view view = trim(line);
    if (view.empty()) continue;
    const auto fields = split_fields(view, delim);
    if (fields.size() < min_fields) {
      throw ParseError(name, line_no, "expected " + std::to_string(min_fields) + " fields, got " +
                                          std::to_string(fields.size()));
    }
    RawId user = 0;
    RawId item = 0;
    if (!parse_int(fields[0], user)) throw ParseError(name, line_no, "bad user id");
    if (!parse_int(fields[1], item)) throw ParseError(name, line_no, "bad item id");
    if (!parse_real(fields[2])) throw ParseError(name, line_no, "bad value field");
    raw.emplace_back(user, item);
  }
  if (raw.empty()) throw EmptyDatasetError(name + ": no interactions");
  return InteractionSet::from_raw(raw);
}

}  // namespace

InteractionSet InteractionSet::from_raw(std::span<const std::pair<RawId, RawId>> raw) {
  std::vector<RawId> users;
  std::vector<RawId> items;
  users.reserve(raw.size());
  items.reserve(raw.size());
  for (const auto& [u, i] : raw) {
    users.push_back(u);
    items.push_back(i);
  }
  users = sorted_unique(std::move(users));
  items = sorted_unique(std::move(items));
  std::vector<Interaction> pairs;
  pairs.reserve(raw.size());
  for (const auto& [u, i] : raw) {
    pairs.push_back({lookup(users, u, "user"), lookup(items, i, "item")});
  }
  return InteractionSet(std::move(users), std::move(items), std::move(pairs));
}

InteractionSet::InteractionSet(std::vector<RawId> user_ids, std::vector<RawId> item_ids,
                               std::vector<Interaction> pairs)
    : user_ids_(std::move(user_ids)), item_ids_(std::move(item_ids)), pairs_(std::move(pairs)) {
  if (!std::is_sorted(user_ids_.begin(), user_ids_.end()) ||
      !std::is_sorted(item_ids_.begin(), item_ids_.end())) {
    throw DimensionError("InteractionSet: ID tables must be sorted");
  }
  std::sort(pairs_.begin(), pairs_.end());
  pairs_.erase(std::unique(pairs_.begin(), pairs_.end()), pairs_.end());
  user_offsets_.assign(user_ids_.size() + 1, 0);
  for (const auto& p : pairs_) {
    if (p.user >= user_ids_.size() || p.item >= item_ids_.size()) {
      throw DimensionError("InteractionSet: index out of range");
    }
    ++user_offsets_[p.user + 1];
  }
  for (std::size_t u = 0; u < user_ids_.size(); ++u) user_offsets_[u + 1] += user_offsets_[u];
}

Index InteractionSet::user_index(RawId id) const { return lookup(user_ids_, id, "user"); }

Index InteractionSet::item_index(RawId id) const { return lookup(item_ids_, id, "item"); }

std::span<const Interaction> InteractionSet::user_pairs(Index u) const {
  return {pairs_.data() + user_offsets_.at(u), user_offsets_.at(u + 1) - user_offsets_.at(u)};
}

std::vector<std::size_t> InteractionSet::user_degrees() const {
  std::vector<std::size_t> deg(user_count());
  for (std::size_t u = 0; u < deg.size(); ++u) deg[u] = user_offsets_[u + 1] - user_offsets_[u];
  return deg;
}

InteractionSet load_movielens(const std::filesystem::path& path) {
  return load_delimited(path, ',', 4);
}

InteractionSet load_lastfm(const std::filesystem::path& path) {
  return load_delimited(path, '\t', 3);
}

std::vector<RawId> load_catalog(const std::filesystem::path& path, char delim) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<RawId> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1) continue;
    const std::string_view view = trim(line);
    if (view.empty()) continue;
    RawId id = 0;
    if (!parse_int(view.substr(0, view.find(delim)), id)) throw ParseError(path.string(), line_no, "bad id");
    ids.push_back(id);
  }
  return ids;
}

InteractionSet with_items(const InteractionSet& data, std::span<const RawId> extra) {
  std::vector<RawId> items = data.item_ids();
  items.insert(items.end(), extra.begin(), extra.end());
  items = sorted_unique(std::move(items));
  std::vector<Interaction> pairs;
  pairs.reserve(data.size());
  for (const auto& p : data.pairs()) pairs.push_back({p.user, lookup(items, data.item_id(p.item), "item")});
  return InteractionSet(data.user_ids(), std::move(items), std::move(pairs));
}

std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
  // Rejection keeps the draw unbiased: discard the short tail below 2^64 mod n.
  const std::uint64_t threshold = (0 - n) % n;
  std::uint64_t x = rng();
  while (x < threshold) x = rng();
  return x % n;
}

Split split(const InteractionSet& data, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ConfigError("train_fraction must lie in (0, 1)");
  }
  Rng rng(seed);
  std::vector<Interaction> train;
  std::vector<Interaction> test;
  for (Index u = 0; u < data.user_count(); ++u) {
    const auto pairs = data.user_pairs(u);
    std::vector<Interaction> shuffled(pairs.begin(), pairs.end());
    for (std::size_t j = shuffled.size(); j > 1; --j) {
      std::swap(shuffled[j - 1], shuffled[uniform_index(rng, j)]);
    }
    if (shuffled.empty()) continue;
    const auto n_train = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(shuffled.size()))));
    train.insert(train.end(), shuffled.begin(), shuffled.begin() + n_train);
    test.insert(test.end(), shuffled.begin() + n_train, shuffled.end());
  }
  return {InteractionSet(data.user_ids(), data.item_ids(), std::move(train)),
          InteractionSet(data.user_ids(), data.item_ids(), std::move(test))};
}

std::string format_split(const Split& s) {
  std::vector<std::pair<Interaction, bool>> rows;
  rows.reserve(s.train.size() + s.test.size());
  for (const auto& p : s.train.pairs()) rows.emplace_back(p, true);
  for (const auto& p : s.test.pairs()) rows.emplace_back(p, false);
  std::sort(rows.begin(), rows.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<bool> seen(s.train.item_count(), false);
  std::ostringstream out;
  for (const auto& [p, is_train] : rows) {
    out << s.train.user_id(p.user) << '\t' << s.train.item_id(p.item) << '\t'
        << (is_train ? "train" : "test") << '\n';
    seen[p.item] = true;
  }
  for (Index i = 0; i < seen.size(); ++i) {
    if (!seen[i]) out << "-\t" << s.train.item_id(i) << "\tcatalog\n";
  }
  return out.str();
}

void write_split(const std::filesystem::path& path, const Split& s) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << format_split(s);
  if (!out) throw IoError("write failed for " + path.string());
}

Split read_split(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  const std::string name = path.string();
  std::vector<std::pair<RawId, RawId>> all;
  std::vector<bool> is_train;
  std::vector<RawId> catalog;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view view = trim(line);
    if (view.empty()) continue;
    const auto fields = split_fields(view, '\t');
    if (fields.size() != 3) throw ParseError(name, line_no, "expected 3 tab-separated fields");
    const std::string_view tag = trim(fields[2]);
    RawId u = 0;
    RawId i = 0;
    if (tag == "catalog" && trim(fields[0]) == "-") {
      if (!parse_int(fields[1], i)) throw ParseError(name, line_no, "bad id");
      catalog.push_back(i);
      continue;
    }
    if (!parse_int(fields[0], u) || !parse_int(fields[1], i)) {
      throw ParseError(name, line_no, "bad id");
    }
    if (tag != "train" && tag != "test") throw ParseError(name, line_no, "tag must be train or test");
    all.emplace_back(u, i);
    is_train.push_back(tag == "train");
  }
  if (all.empty()) throw EmptyDatasetError(name + ": no interactions");
  const InteractionSet full = with_items(InteractionSet::from_raw(all), catalog);
  std::vector<Interaction> train;
  std::vector<Interaction> test;
  for (std::size_t j = 0; j < all.size(); ++j) {
    const Interaction p{full.user_index(all[j].first), full.item_index(all[j].second)};
    (is_train[j] ? train : test).push_back(p);
  }
  return {InteractionSet(full.user_ids(), full.item_ids(), std::move(train)),
          InteractionSet(full.user_ids(), full.item_ids(), std::move(test))};
}

InteractionGraph::InteractionGraph(const InteractionSet& train) {
  if (train.empty()) throw DegenerateInputError("build_graph: empty training set");
  const std::size_t users = train.user_count();
  const std::size_t items = train.item_count();
  user_offsets_.assign(users + 1, 0);
  item_offsets_.assign(items + 1, 0);
  for (const auto& p : train.pairs()) {
    ++user_offsets_[p.user + 1];
    ++item_offsets_[p.item + 1];
  }
  for (std::size_t u = 0; u < users; ++u) user_offsets_[u + 1] += user_offsets_[u];
  for (std::size_t i = 0; i < items; ++i) item_offsets_[i + 1] += item_offsets_[i];

  user_edges_.resize(train.size());
  item_edges_.resize(train.size());
  std::vector<std::size_t> item_fill(item_offsets_.begin(), item_offsets_.end() - 1);
  std::size_t e = 0;
  // Pairs are sorted by (user, item), so both adjacency rows come out sorted.
  for (const auto& p : train.pairs()) {
    const double w = 1.0 / (std::sqrt(static_cast<double>(user_degree(p.user))) *
                            std::sqrt(static_cast<double>(item_degree(p.item))));
    user_edges_[e++] = {p.item, w};
    item_edges_[item_fill[p.item]++] = {p.user, w};
  }
}

bool InteractionGraph::has_edge(Index u, Index i) const {
  const auto row = user_neighbors(u);
  auto it = std::lower_bound(row.begin(), row.end(), i,
                             [](const Edge& e, Index v) { return e.node < v; });
  return it != row.end() && it->node == i;
}

Interaction InteractionGraph::edge(std::size_t e) const {
  auto it = std::upper_bound(user_offsets_.begin(), user_offsets_.end(), e);
  const auto u = static_cast<Index>(it - user_offsets_.begin() - 1);
  return {u, user_edges_[e].node};
}

InteractionGraph build_graph(const InteractionSet& train) { return InteractionGraph(train); }

namespace {

// Returns false when u has no unobserved item.
bool draw_negative(const InteractionGraph& graph, Index u, Rng& rng, Index& out) {
  const std::size_t items = graph.item_count();
  if (graph.user_degree(u) >= items) return false;
  do {
    out = static_cast<Index>(uniform_index(rng, items));
  } while (graph.has_edge(u, out));
  return true;
}

}  // namespace

TripleBatch sample_triples(const InteractionGraph& graph, std::size_t count, Rng& rng) {
  TripleBatch batch;
  batch.triples.reserve(count);
  const std::size_t edges = graph.edge_count();
  for (std::size_t n = 0; n < count; ++n) {
    const Interaction pos = graph.edge(uniform_index(rng, edges));
    Index neg = 0;
    if (!draw_negative(graph, pos.user, rng, neg)) {
      ++batch.skipped;
      continue;
    }
    batch.triples.push_back({pos.user, pos.item, neg});
  }
  return batch;
}

TripleBatch epoch_triples(const InteractionGraph& graph, Rng& rng) {
  const std::size_t edges = graph.edge_count();
  std::vector<std::size_t> order(edges);
  for (std::size_t e = 0; e < edges; ++e) order[e] = e;
  for (std::size_t j = edges; j > 1; --j) std::swap(order[j - 1], order[uniform_index(rng, j)]);
  TripleBatch batch;
  batch.triples.reserve(edges);
  for (std::size_t e : order) {
    const Interaction pos = graph.edge(e);
    Index neg = 0;
    if (!draw_negative(graph, pos.user, rng, neg)) {
      ++batch.skipped;
      continue;
    }
    batch.triples.push_back({pos.user, pos.item, neg});
  }
  return batch;
}

}  // namespace ggcf
