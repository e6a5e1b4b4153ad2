#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>

#include <json.hpp>

#include "ggcf/error.hpp"
#include "ggcf/eval.hpp"
#include "support.hpp"

using namespace ggcf;
using doctest::Approx;

namespace {

using Items = std::vector<Index>;

struct MetricFixture {
  int k = 0;
  std::vector<std::vector<double>> scores;
  InteractionSet train, test;
  std::vector<double> recall, ndcg;
  double mean_recall = 0.0, mean_ndcg = 0.0;
};

MetricFixture load_metric_fixture() {
  std::ifstream in(testing::fixture("metrics_4user.json"));
  const nlohmann::json j = nlohmann::json::parse(in);
  MetricFixture f;
  f.k = j.at("k");
  const std::size_t items = j.at("items");
  std::vector<Interaction> tr, te;
  Index u = 0;
  for (const auto& user : j.at("users")) {
    f.scores.push_back(user.at("scores").get<std::vector<double>>());
    for (Index i : user.at("train").get<Items>()) tr.push_back({u, i});
    for (Index i : user.at("test").get<Items>()) te.push_back({u, i});
    f.recall.push_back(user.at("recall"));
    f.ndcg.push_back(user.at("ndcg"));
    ++u;
  }
  std::vector<RawId> uid(u), iid(items);
  for (std::size_t n = 0; n < uid.size(); ++n) uid[n] = static_cast<RawId>(n);
  for (std::size_t n = 0; n < iid.size(); ++n) iid[n] = static_cast<RawId>(n);
  f.train = InteractionSet(uid, iid, tr);
  f.test = InteractionSet(uid, iid, te);
  f.mean_recall = j.at("recall");
  f.mean_ndcg = j.at("ndcg");
  return f;
}

ScoreFn table_scores(const std::vector<std::vector<double>>& s) {
  return [&s](Index u, std::span<double> out) { std::copy(s[u].begin(), s[u].end(), out.begin()); };
}

}  // namespace

TEST_CASE("rank_scores") {
  CHECK(rank_scores(std::vector<double>{0.9, 0.1}, Items{}) == Items{0, 1});
  CHECK(rank_scores(std::vector<double>{0.1, 0.9}, Items{}) == Items{1, 0});
  CHECK(rank_scores(std::vector<double>{2, 2, 2}, Items{}) == Items{0, 1, 2});
  CHECK(rank_scores(std::vector<double>{5, 1, 3, 4}, Items{0, 3}) == Items{2, 1, 0, 3});
  CHECK(top_k_scores(std::vector<double>{5, 1, 3, 4}, Items{0}, 2) == Items{3, 2});
  CHECK(top_k_scores(std::vector<double>{5, 1}, Items{}, 10) == Items{0, 1});

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> s(30);
    for (double& x : s) x = u(rng);
    Items mask;
    for (Index i = 0; i < 30; ++i) {
      if (rng() % 4 == 0) mask.push_back(i);
    }
    const Items r = rank_scores(s, mask);
    const std::size_t free = 30 - mask.size();
    for (std::size_t p = 0; p < free; ++p) CHECK(!std::binary_search(mask.begin(), mask.end(), r[p]));
    // Strictly increasing transform leaves the ranking alone.
    std::vector<double> t2(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) t2[i] = std::exp(3.0 * s[i]) - 7.0;
    CHECK(rank_scores(t2, mask) == r);
  }
}

TEST_CASE("rank_items uses the model score") {
  LayerState s;
  s.euclid_user = Table(1, 1, 1.0);
  s.euclid_item = Table(3, 1);
  s.euclid_item(0, 0) = 0.2;
  s.euclid_item(1, 0) = 0.7;
  s.euclid_item(2, 0) = 0.5;
  s.hyper_user = Table(1, 2);
  s.hyper_item = Table(3, 2);
  s.hyper_user(0, 0) = 1.0;
  for (Index i = 0; i < 3; ++i) s.hyper_item(i, 0) = 1.0;
  CHECK(rank_items(s, 0, Items{}, 1.0) == Items{1, 2, 0});
  CHECK(rank_items(s, 0, Items{1}, 1.0) == Items{2, 0, 1});
}

TEST_CASE("recall_at_k") {
  const Items ranked = {4, 7, 1, 9, 0};
  CHECK(recall_at_k(ranked, Items{1, 8}, 20) == 0.5);
  CHECK(recall_at_k(ranked, Items{4, 9}, 5) == 1.0);
  CHECK(recall_at_k(ranked, Items{3, 8}, 5) == 0.0);
  CHECK(recall_at_k(ranked, Items{9}, 3) == 0.0);
  CHECK_THROWS_AS(recall_at_k(ranked, Items{1}, 0), ConfigError);
}

TEST_CASE("ndcg_at_k") {
  const Items ranked = {4, 7, 1, 9, 0};
  CHECK(ndcg_at_k(ranked, Items{4}, 20) == 1.0);
  // Rank 3: (1 / log2 4) / (1 / log2 2).
  CHECK(ndcg_at_k(ranked, Items{1}, 20) == Approx(0.5).epsilon(1e-15));
  CHECK(ndcg_at_k(ranked, Items{3}, 20) == 0.0);
  // Ideal DCG counts only min(k, |test|) slots.
  CHECK(ndcg_at_k(ranked, Items{4, 7, 1}, 2) == Approx(1.0).epsilon(1e-15));
  CHECK_THROWS_AS(ndcg_at_k(ranked, Items{1}, -2), ConfigError);

  std::mt19937_64 rng(8);
  for (int t = 0; t < 200; ++t) {
    Items r(15);
    for (Index i = 0; i < 15; ++i) r[i] = i;
    std::shuffle(r.begin(), r.end(), rng);
    Items test;
    for (Index i = 0; i < 15; ++i) {
      if (rng() % 3 == 0) test.push_back(i);
    }
    const double n = ndcg_at_k(r, test, 6);
    CHECK(n >= 0.0);
    CHECK(n <= 1.0 + 1e-15);
    double prev = 0.0;
    for (int k = 1; k <= 15; ++k) {
      const double rc = recall_at_k(r, test, k);
      CHECK(rc >= prev);
      prev = rc;
    }
  }
}

TEST_CASE("evaluate_scores") {
  SUBCASE("committed 4-user fixture") {
    const MetricFixture f = load_metric_fixture();
    const EvalReport r = evaluate_scores(table_scores(f.scores), f.train, f.test, f.k, true);
    CHECK(r.users_evaluated == 4);
    REQUIRE(r.per_user.size() == 4);
    for (std::size_t u = 0; u < 4; ++u) {
      CAPTURE(u);
      CHECK(std::abs(r.per_user[u].recall - f.recall[u]) <= 1e-12);
      CHECK(std::abs(r.per_user[u].ndcg - f.ndcg[u]) <= 1e-12);
    }
    CHECK(std::abs(r.recall - f.mean_recall) <= 1e-12);
    CHECK(std::abs(r.ndcg - f.mean_ndcg) <= 1e-12);
  }
  SUBCASE("unweighted mean over users with test items") {
    const std::vector<std::vector<double>> s = {{0.9, 0.1, 0.0}, {0.9, 0.1, 0.0}, {0.0, 0.0, 1.0}};
    const InteractionSet train({1, 2, 3}, {1, 2, 3}, {{0, 2}, {1, 2}, {2, 0}});
    const InteractionSet test({1, 2, 3}, {1, 2, 3}, {{0, 0}, {1, 1}});
    const EvalReport r = evaluate_scores(table_scores(s), train, test, 1);
    CHECK(r.users_evaluated == 2);
    CHECK(r.recall == 0.5);
    CHECK(r.ndcg == 0.5);
  }
  SUBCASE("errors") {
    const InteractionSet train({1}, {1, 2}, {{0, 0}});
    const std::vector<std::vector<double>> s = {{0.0, 0.0}};
    CHECK_THROWS_AS(evaluate_scores(table_scores(s), train, InteractionSet({1}, {1, 2}, {}), 20),
                    DegenerateInputError);
    CHECK_THROWS_AS(evaluate_scores(table_scores(s), train, InteractionSet({1}, {1, 2}, {{0, 1}}), 0),
                    ConfigError);
  }
}

TEST_CASE("evaluate on model features") {
  const Split sp = split(load_movielens(testing::fixture("toy_ratings.csv")), 0.8, 1);
  const InteractionGraph g = build_graph(sp.train);
  const ParamSet p = init_params(g.user_count(), g.item_count(), 4, 2);
  const LayerState f = forward(g, p, 2, {});
  const EvalReport r = evaluate(f, sp.train, sp.test, 10, 1.0, true);
  for (const auto& m : r.per_user) {
    std::vector<Index> seen, held;
    for (const auto& e : sp.train.user_pairs(m.user)) seen.push_back(e.item);
    for (const auto& e : sp.test.user_pairs(m.user)) held.push_back(e.item);
    const auto ranked = rank_items(f, m.user, seen, 1.0);
    CHECK(m.recall == Approx(recall_at_k(ranked, held, 10)).epsilon(1e-15));
    CHECK(m.ndcg == Approx(ndcg_at_k(ranked, held, 10)).epsilon(1e-15));
    // No training positive appears ahead of an unseen item.
    for (std::size_t pos = 0; pos < ranked.size() - seen.size(); ++pos) {
      CHECK(!std::binary_search(seen.begin(), seen.end(), ranked[pos]));
    }
  }
  CHECK(evaluate(f, sp.train, sp.test, 20, 1.0).recall >= r.recall);
}
