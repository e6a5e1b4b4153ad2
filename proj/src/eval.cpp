#include "ggcf/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ggcf/error.hpp"
#include "ggcf/spatial.hpp"

namespace ggcf {

namespace {

bool contains(std::span<const Index> sorted, Index x) {
  return std::binary_search(sorted.begin(), sorted.end(), x);
}

std::vector<double> masked_scores(std::span<const double> scores, std::span<const Index> masked) {
  std::vector<double> s(scores.begin(), scores.end());
  for (Index i : masked) {
    if (i < s.size()) s[i] = -std::numeric_limits<double>::infinity();
  }
  return s;
}

// Descending score, then ascending index. NaN-free input assumed.
auto ranking_order(const std::vector<double>& s) {
  return [&s](Index a, Index b) { return s[a] > s[b] || (s[a] == s[b] && a < b); };
}

// Pairwise summation keeps the aggregate independent of blocking to ~1e-16.
double pairwise_sum(std::span<const double> v) {
  if (v.size() <= 8) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  const std::size_t half = v.size() / 2;
  return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

std::vector<Index> items_of(const InteractionSet& set, Index u) {
  std::vector<Index> out;
  for (const auto& p : set.user_pairs(u)) out.push_back(p.item);
  return out;
}

void require_k(int k) {
  if (k < 1) throw ConfigError("k must be >= 1");
}

}  // namespace

std::vector<Index> rank_scores(std::span<const double> scores, std::span<const Index> masked) {
  return top_k_scores(scores, masked, scores.size());
}

std::vector<Index> top_k_scores(std::span<const double> scores, std::span<const Index> masked,
                                std::size_t k) {
  const std::vector<double> s = masked_scores(scores, masked);
  std::vector<Index> order(s.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<Index>(i);
  const std::size_t n = std::min(k, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n), order.end(),
                    ranking_order(s));
  order.resize(n);
  return order;
}

std::vector<Index> rank_items(const LayerState& final_state, Index user,
                              std::span<const Index> train_positives, double lambda) {
  std::vector<double> s(final_state.euclid_item.rows());
  for (Index i = 0; i < s.size(); ++i) s[i] = score(final_state, user, i, lambda);
  return rank_scores(s, train_positives);
}

double recall_at_k(std::span<const Index> ranked, std::span<const Index> test_positives, int k) {
  require_k(k);
  if (test_positives.empty()) return 0.0;
  const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(k), ranked.size());
  std::size_t hits = 0;
  for (std::size_t p = 0; p < n; ++p) hits += contains(test_positives, ranked[p]) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(test_positives.size());
}

double ndcg_at_k(std::span<const Index> ranked, std::span<const Index> test_positives, int k) {
  require_k(k);
  if (test_positives.empty()) return 0.0;
  const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(k), ranked.size());
  double dcg = 0.0;
  for (std::size_t p = 0; p < n; ++p) {
    if (contains(test_positives, ranked[p])) dcg += 1.0 / std::log2(static_cast<double>(p) + 2.0);
  }
  const std::size_t ideal = std::min<std::size_t>(static_cast<std::size_t>(k), test_positives.size());
  double idcg = 0.0;
  for (std::size_t p = 0; p < ideal; ++p) idcg += 1.0 / std::log2(static_cast<double>(p) + 2.0);
  return dcg / idcg;
}

EvalReport evaluate_scores(const ScoreFn& scores, const InteractionSet& train,
                           const InteractionSet& test, int k, bool keep_per_user) {
  require_k(k);
  if (test.empty()) throw DegenerateInputError("evaluate: empty test set");
  if (train.item_count() != test.item_count() || train.user_count() != test.user_count()) {
    throw DimensionError("evaluate: train and test cover different catalogues");
  }
  EvalReport report;
  report.k = k;
  std::vector<double> recalls;
  std::vector<double> ndcgs;
  std::vector<double> s(train.item_count());
  for (Index u = 0; u < test.user_count(); ++u) {
    const std::vector<Index> held_out = items_of(test, u);
    if (held_out.empty()) continue;
    const std::vector<Index> seen = items_of(train, u);
    scores(u, s);
    const auto top = top_k_scores(s, seen, static_cast<std::size_t>(k));
    recalls.push_back(recall_at_k(top, held_out, k));
    ndcgs.push_back(ndcg_at_k(top, held_out, k));
    if (keep_per_user) report.per_user.push_back({u, recalls.back(), ndcgs.back()});
  }
  report.users_evaluated = recalls.size();
  report.recall = pairwise_sum(recalls) / static_cast<double>(recalls.size());
  report.ndcg = pairwise_sum(ndcgs) / static_cast<double>(ndcgs.size());
  return report;
}

EvalReport evaluate(const LayerState& final_state, const InteractionSet& train,
                    const InteractionSet& test, int k, double lambda, bool keep_per_user) {
  if (final_state.euclid_user.rows() != train.user_count() ||
      final_state.euclid_item.rows() != train.item_count()) {
    throw DimensionError("evaluate: feature tables do not match the interaction sets");
  }
  const ScoreFn fn = [&](Index u, std::span<double> out) {
    const auto fu = final_state.euclid_user.row(u);
    const auto hu = final_state.hyper_user.row(u);
    for (Index i = 0; i < out.size(); ++i) {
      double v = spatial::dot(fu, final_state.euclid_item.row(i));
      if (lambda != 0.0) v += lambda * lorentz::linner(hu, final_state.hyper_item.row(i));
      out[i] = v;
    }
  };
  return evaluate_scores(fn, train, test, k, keep_per_user);
}

}  // namespace ggcf
