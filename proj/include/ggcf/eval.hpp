#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "ggcf/graph.hpp"
#include "ggcf/model.hpp"

namespace ggcf {

struct UserMetrics {
  Index user;
  double recall;
  double ndcg;
};

struct EvalReport {
  int k = 20;
  double recall = 0.0;
  double ndcg = 0.0;
  std::size_t users_evaluated = 0;
  std::vector<UserMetrics> per_user;
};

// Full catalogue in descending score order, ties by ascending item index.
// Items in `masked` (sorted ascending) are ranked below every other item.
std::vector<Index> rank_scores(std::span<const double> scores, std::span<const Index> masked);

// Only the first min(k, catalogue) entries of rank_scores.
std::vector<Index> top_k_scores(std::span<const double> scores, std::span<const Index> masked,
                                std::size_t k);

std::vector<Index> rank_items(const LayerState& final_state, Index user,
                              std::span<const Index> train_positives, double lambda);

// Fraction of test items found in the first k entries of `ranked`.
double recall_at_k(std::span<const Index> ranked, std::span<const Index> test_positives, int k);

// Binary-relevance NDCG with the ideal DCG truncated at min(k, |test|).
double ndcg_at_k(std::span<const Index> ranked, std::span<const Index> test_positives, int k);

// Scores every item for one user into `out`.
using ScoreFn = std::function<void(Index user, std::span<double> out)>;

EvalReport evaluate_scores(const ScoreFn& scores, const InteractionSet& train,
                           const InteractionSet& test, int k, bool keep_per_user = false);

EvalReport evaluate(const LayerState& final_state, const InteractionSet& train,
                    const InteractionSet& test, int k, double lambda, bool keep_per_user = false);

}  // namespace ggcf
