#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "ggcf/error.hpp"
#include "ggcf/eval.hpp"
#include "ggcf/model.hpp"
#include "support.hpp"

using namespace ggcf;
using namespace ggcf::lorentz;
using doctest::Approx;

namespace {

ParamSet random_params(const InteractionGraph& g, std::size_t d, std::uint64_t seed, double scale) {
  ParamSet p = init_params(g.user_count(), g.item_count(), d, seed);
  std::mt19937_64 rng(seed + 1);
  p.for_each_table([&](Table& t) {
    for (double& x : t.flat()) x *= scale / 0.1;
  });
  p.gamma = std::uniform_real_distribution<double>(-1.0, 1.0)(rng);
  p.gamma_prime = std::uniform_real_distribution<double>(-1.0, 1.0)(rng);
  p.lambda = std::uniform_real_distribution<double>(0.2, 1.5)(rng);
  return p;
}

bool bitwise_equal(const LayerState& a, const LayerState& b) {
  return a.euclid_user == b.euclid_user && a.euclid_item == b.euclid_item && a.hyper_user == b.hyper_user &&
         a.hyper_item == b.hyper_item;
}

double max_manifold_residual(const Table& t) {
  double m = 0.0;
  for (std::size_t r = 0; r < t.rows(); ++r) m = std::max(m, std::abs(linner(t.row(r), t.row(r)) + 1.0));
  return m;
}

}  // namespace

TEST_CASE("init_params") {
  const ParamSet a = init_params(2, 3, 4, 9);
  CHECK(a.tangent_user.rows() == 2);
  CHECK(a.tangent_user.cols() == 4);
  CHECK(a.euclid_item.rows() == 3);
  CHECK(a.gamma == 0.0);
  CHECK(a.gamma_prime == 0.0);
  CHECK(a.lambda == 1.0);
  CHECK(a == init_params(2, 3, 4, 9));
  CHECK(!(a == init_params(2, 3, 4, 10)));
  // Two embedding tables per geometry plus three scalars.
  CHECK(a.parameter_count() == 2 * (2 + 3) * 4 + 3);

  const ParamSet big = init_params(200, 300, 16, 1);
  double sum = 0.0, sq = 0.0;
  std::size_t n = 0;
  for (const Table* t : {&big.euclid_user, &big.euclid_item, &big.tangent_user, &big.tangent_item}) {
    for (double x : t->flat()) {
      sum += x;
      sq += x * x;
      ++n;
    }
  }
  CHECK(std::abs(sum / n) < 0.005);
  CHECK(std::sqrt(sq / n) == Approx(0.1).epsilon(0.02));
  CHECK_THROWS_AS(init_params(2, 2, 0, 1), ConfigError);
}

TEST_CASE("ablation flags") {
  CHECK(parse_ablation("full") == AblationFlags{});
  CHECK(parse_ablation("no-interaction").disable_interaction);
  CHECK(parse_ablation("euclidean-only").euclidean_only);
  CHECK(parse_ablation("hyperbolic-only").hyperbolic_only);
  for (const char* n : {"full", "no-interaction", "euclidean-only", "hyperbolic-only"}) {
    CHECK(ablation_name(parse_ablation(n)) == n);
  }
  CHECK_THROWS_AS(parse_ablation("both"), ConfigError);
  AblationFlags bad;
  bad.euclidean_only = bad.hyperbolic_only = true;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("propagate_euclidean") {
  SUBCASE("single neighbour with unit weight") {
    const InteractionGraph g = build_graph(InteractionSet({1}, {1}, {{0, 0}}));
    Table u(1, 2), i(1, 2);
    i(0, 0) = 3.0;
    i(0, 1) = -1.0;
    const auto [hu, hi] = propagate_euclidean(g, u, i);
    CHECK(hu(0, 0) == 3.0);
    CHECK(hu(0, 1) == -1.0);
  }
  SUBCASE("isolated item gets zero") {
    const InteractionGraph g = build_graph(testing::toy_set());
    Table u(3, 2), i(4, 2);
    u.fill(1.0);
    const auto [hu, hi] = propagate_euclidean(g, u, i);
    CHECK(hi(3, 0) == 0.0);
    CHECK(hi(3, 1) == 0.0);
  }
  SUBCASE("complete 2x2 graph") {
    const InteractionGraph g =
        build_graph(InteractionSet({1, 2}, {1, 2}, {{0, 0}, {0, 1}, {1, 0}, {1, 1}}));
    Table u(2, 2), i(2, 2);
    i(0, 0) = 1.0;
    i(0, 1) = 1.0;
    i(1, 0) = 1.0;
    i(1, 1) = 1.0;
    const auto [hu, hi] = propagate_euclidean(g, u, i);
    // Each weight is 1/(sqrt 2 sqrt 2) = 1/2; two unit neighbours.
    for (Index r = 0; r < 2; ++r) {
      CHECK(hu(r, 0) == Approx(1.0).epsilon(1e-15));
      CHECK(hu(r, 1) == Approx(1.0).epsilon(1e-15));
    }
  }
  const InteractionGraph g = build_graph(testing::toy_set());
  CHECK_THROWS_AS(propagate_euclidean(g, Table(2, 2), Table(4, 2)), DimensionError);
}

TEST_CASE("propagate_hyperbolic") {
  const InteractionGraph g = build_graph(testing::toy_set());
  Table u(3, 3), i(4, 3);
  for (std::size_t r = 0; r < 3; ++r) u(r, 0) = 1.0;
  std::mt19937_64 rng(2);
  std::vector<HPoint> pts;
  for (std::size_t r = 0; r < 4; ++r) {
    pts.push_back(testing::random_point(rng, 2, 1.5));
    std::copy(pts.back().coords().begin(), pts.back().coords().end(), i.row(r).begin());
  }
  const auto [hu, hi] = propagate_hyperbolic(g, u, i);
  // User 0 has items 0 and 1 with equal weights 1/(sqrt2 sqrt2).
  const HPoint c = centroid(std::vector<double>{0.5, 0.5}, std::vector<HPoint>{pts[0], pts[1]});
  CHECK(testing::max_abs_diff(hu.row(0), c.coords()) < 1e-14);
  CHECK(hi(3, 0) == 1.0);
  CHECK(hi(3, 1) == 0.0);

  SUBCASE("single neighbour returns that point") {
    const InteractionGraph g1 = build_graph(InteractionSet({1}, {1}, {{0, 0}}));
    Table uu(1, 3), ii(1, 3);
    uu(0, 0) = 1.0;
    std::copy(pts[2].coords().begin(), pts[2].coords().end(), ii.row(0).begin());
    CHECK(testing::max_abs_diff(propagate_hyperbolic(g1, uu, ii).first.row(0), pts[2].coords()) < 1e-14);
  }
  SUBCASE("antipodal neighbours average to the origin") {
    const InteractionGraph g2 = build_graph(InteractionSet({1}, {1, 2}, {{0, 0}, {0, 1}}));
    Table uu(1, 3), ii(2, 3);
    uu(0, 0) = 1.0;
    const HPoint a = exp0(TangentCoords({0.8, -0.4}));
    const HPoint b = exp0(TangentCoords({-0.8, 0.4}));
    std::copy(a.coords().begin(), a.coords().end(), ii.row(0).begin());
    std::copy(b.coords().begin(), b.coords().end(), ii.row(1).begin());
    const auto h = propagate_hyperbolic(g2, uu, ii).first;
    CHECK(testing::max_abs_diff(h.row(0), HPoint::origin(2).coords()) < 1e-15);
  }
}

TEST_CASE("interact") {
  std::mt19937_64 rng(4);
  const HPoint hH = testing::random_point(rng, 3, 1.5);
  const std::vector<double> hR = testing::random_vector(rng, 3, 0.7);

  SUBCASE("zero scales are the identity") {
    const auto r = interact(hR, hH, 0.0, 0.0);
    CHECK(r.euclid == hR);
    CHECK(r.hyper == hH);
  }
  SUBCASE("Euclidean feature equal to log0 of the point") {
    const auto lg = log0(hH);
    const std::vector<double> same(lg.coords().begin(), lg.coords().end());
    const auto r = interact(same, hH, 0.9, 0.0);
    CHECK(testing::max_abs_diff(r.euclid, same) < 1e-15);
  }
  SUBCASE("one-axis case evaluated by hand") {
    const auto r = interact(std::vector<double>{1.0, 0.0}, exp0(TangentCoords({0.2, 0.0})), 0.5, 0.0);
    // d_R = |1 - 0.2| = 0.8, so fR = 1 + 0.5 * 0.8 * 0.2.
    CHECK(r.euclid[0] == Approx(1.08).epsilon(1e-14));
    CHECK(r.euclid[1] == 0.0);
  }
  SUBCASE("matches the straight-line formulas") {
    for (int t = 0; t < 50; ++t) {
      const HPoint h = testing::random_point(rng, 4, 2.0);
      const auto e = testing::random_vector(rng, 4, 0.6);
      const double g1 = std::uniform_real_distribution<double>(-1, 1)(rng);
      const double g2 = std::uniform_real_distribution<double>(-1, 1)(rng);
      const auto r = interact(e, h, g1, g2);
      const auto [fr, fh] = oracle::interact(e, oracle::Vec(h.coords().begin(), h.coords().end()), g1, g2);
      CHECK(testing::max_abs_diff(r.euclid, fr) < 1e-12);
      CHECK(testing::max_abs_diff(r.hyper.coords(), fh) < 1e-11 * fh[0]);
    }
  }
  CHECK_THROWS_AS(interact(std::vector<double>{1.0}, hH, 0.1, 0.1), DimensionError);
}

TEST_CASE("fuse_layers") {
  auto layer = [](double a, double b) {
    LayerState s;
    s.euclid_user = Table(1, 2);
    s.euclid_item = Table(1, 2);
    s.euclid_user(0, 0) = a;
    s.euclid_user(0, 1) = b;
    s.hyper_user = Table(1, 3);
    s.hyper_item = Table(1, 3);
    s.hyper_user(0, 0) = s.hyper_item(0, 0) = 1.0;
    return s;
  };
  const std::vector<LayerState> one = {layer(0.3, 0.4)};
  CHECK(bitwise_equal(fuse_layers(one), one[0]));
  const std::vector<LayerState> same = {layer(0.3, 0.4), layer(0.3, 0.4), layer(0.3, 0.4)};
  const LayerState f = fuse_layers(same);
  CHECK(f.euclid_user(0, 0) == Approx(0.3).epsilon(1e-15));
  const std::vector<LayerState> two = {layer(1, 0), layer(0, 1)};
  const LayerState m = fuse_layers(two);
  CHECK(m.euclid_user(0, 0) == 0.5);
  CHECK(m.euclid_user(0, 1) == 0.5);
  CHECK_THROWS_AS(fuse_layers(std::vector<LayerState>{}), DimensionError);
}

TEST_CASE("score") {
  LayerState s;
  s.euclid_user = Table(1, 2);
  s.euclid_item = Table(1, 2);
  s.hyper_user = Table(1, 3);
  s.hyper_item = Table(1, 3);
  s.hyper_user(0, 0) = s.hyper_item(0, 0) = 1.0;
  CHECK(score(s, 0, 0, 1.0) == -1.0);
  s.euclid_user(0, 0) = 2.0;
  s.euclid_item(0, 0) = 3.0;
  CHECK(score(s, 0, 0, 0.0) == 6.0);
  CHECK(score(s, 0, 0, 0.5) == 5.5);
  CHECK_THROWS_AS(score(s, 1, 0, 1.0), DimensionError);
}

TEST_CASE("forward") {
  const InteractionGraph g = build_graph(testing::toy_set());

  SUBCASE("K = 0 gives the raw and lifted embeddings") {
    const ParamSet p = random_params(g, 3, 5, 0.3);
    const LayerState f = forward(g, p, 0, {});
    CHECK(f.euclid_user == p.euclid_user);
    for (std::size_t r = 0; r < 4; ++r) {
      const HPoint e = exp0(TangentCoords(std::vector<double>(p.tangent_item.row(r).begin(),
                                                              p.tangent_item.row(r).end())));
      CHECK(testing::max_abs_diff(f.hyper_item.row(r), e.coords()) < 1e-15);
    }
  }
  SUBCASE("disabled interaction equals zero scales") {
    ParamSet p = random_params(g, 3, 6, 0.3);
    const LayerState off = forward(g, p, 2, parse_ablation("no-interaction"));
    p.gamma = p.gamma_prime = 0.0;
    CHECK(bitwise_equal(off, forward(g, p, 2, {})));
    CHECK(bitwise_equal(off, forward(g, p, 2, parse_ablation("no-interaction"))));
  }
  SUBCASE("single-geometry ablations") {
    const ParamSet p = random_params(g, 3, 7, 0.3);
    const LayerState e = forward(g, p, 2, parse_ablation("euclidean-only"));
    for (std::size_t r = 0; r < 3; ++r) CHECK(e.hyper_user(r, 0) == 1.0);
    CHECK(scoring_lambda(p, parse_ablation("euclidean-only")) == 0.0);
    const LayerState h = forward(g, p, 2, parse_ablation("hyperbolic-only"));
    for (double x : h.euclid_item.flat()) CHECK(x == 0.0);
    CHECK(scoring_lambda(p, parse_ablation("hyperbolic-only")) == p.lambda);
  }
  SUBCASE("manifold preserved at every layer") {
    const InteractionSet big = load_movielens(testing::fixture("toy_ratings.csv"));
    const InteractionGraph bg = build_graph(big);
    ParamSet p = random_params(bg, 8, 8, 1.0);
    const ForwardTrace tr = forward_trace(bg, p, 4, {});
    for (const auto& l : tr.layers) {
      CHECK(max_manifold_residual(l.hyper_user) <= 1e-8);
      CHECK(max_manifold_residual(l.hyper_item) <= 1e-8);
    }
    CHECK(max_manifold_residual(tr.final_state.hyper_user) <= 1e-8);
  }
  SUBCASE("errors") {
    const ParamSet p = random_params(g, 3, 9, 0.3);
    CHECK_THROWS_AS(forward(g, p, -1, {}), ConfigError);
    ParamSet wrong = init_params(2, 4, 3, 1);
    CHECK_THROWS_AS(forward(g, wrong, 1, {}), DimensionError);
    ParamSet huge = p;
    huge.gamma = 1e308;
    huge.gamma_prime = 1e308;
    CHECK_THROWS_AS(forward(g, huge, 2, {}), NumericError);
  }
}

TEST_CASE("forward agrees with the straight-line oracle") {
  const InteractionSet s = testing::toy_set();
  const InteractionGraph g = build_graph(s);
  for (const char* name : {"full", "no-interaction", "euclidean-only", "hyperbolic-only"}) {
    CAPTURE(name);
    const AblationFlags flags = parse_ablation(name);
    const ParamSet p = random_params(g, 3, 2024, 0.4);
    const LayerState f = forward(g, p, 2, flags);
    const oracle::Output o = oracle::forward(3, 4, testing::edge_list(s), testing::to_oracle(p), 2,
                                             testing::to_oracle(flags));
    double worst = 0.0;
    for (std::size_t u = 0; u < 3; ++u) {
      worst = std::max(worst, testing::max_abs_diff(f.euclid_user.row(u), o.euclid_user[u]));
      worst = std::max(worst, testing::max_abs_diff(f.hyper_user.row(u), o.hyper_user[u]));
      for (Index i = 0; i < 4; ++i) {
        worst = std::max(worst, std::abs(score(f, u, i, scoring_lambda(p, flags)) - o.scores[u][i]));
      }
    }
    for (std::size_t i = 0; i < 4; ++i) {
      worst = std::max(worst, testing::max_abs_diff(f.euclid_item.row(i), o.euclid_item[i]));
      worst = std::max(worst, testing::max_abs_diff(f.hyper_item.row(i), o.hyper_item[i]));
    }
    CHECK(worst <= 1e-10);
  }
}

TEST_CASE("permutation equivariance") {
  std::mt19937_64 rng(31);
  const InteractionSet s = testing::random_set(rng, 5, 7);
  const InteractionGraph g = build_graph(s);
  const ParamSet p = random_params(g, 3, 12, 0.4);

  std::vector<Index> pu(5), pi(7);
  std::iota(pu.begin(), pu.end(), 0);
  std::iota(pi.begin(), pi.end(), 0);
  std::shuffle(pu.begin(), pu.end(), rng);
  std::shuffle(pi.begin(), pi.end(), rng);
  std::vector<Interaction> pairs;
  for (const auto& e : s.pairs()) pairs.push_back({pu[e.user], pi[e.item]});
  const InteractionGraph gp = build_graph(InteractionSet(s.user_ids(), s.item_ids(), pairs));
  ParamSet pp = p;
  for (Index u = 0; u < 5; ++u) {
    std::copy(p.euclid_user.row(u).begin(), p.euclid_user.row(u).end(), pp.euclid_user.row(pu[u]).begin());
    std::copy(p.tangent_user.row(u).begin(), p.tangent_user.row(u).end(), pp.tangent_user.row(pu[u]).begin());
  }
  for (Index i = 0; i < 7; ++i) {
    std::copy(p.euclid_item.row(i).begin(), p.euclid_item.row(i).end(), pp.euclid_item.row(pi[i]).begin());
    std::copy(p.tangent_item.row(i).begin(), p.tangent_item.row(i).end(), pp.tangent_item.row(pi[i]).begin());
  }
  const LayerState a = forward(g, p, 2, {});
  const LayerState b = forward(gp, pp, 2, {});
  for (Index u = 0; u < 5; ++u) {
    CHECK(testing::max_abs_diff(a.euclid_user.row(u), b.euclid_user.row(pu[u])) < 1e-13);
    CHECK(testing::max_abs_diff(a.hyper_user.row(u), b.hyper_user.row(pu[u])) < 1e-13);
  }
  for (Index i = 0; i < 7; ++i) {
    CHECK(testing::max_abs_diff(a.hyper_item.row(i), b.hyper_item.row(pi[i])) < 1e-13);
  }
}

TEST_CASE("ranking is invariant to positive scaling of Euclidean features") {
  const InteractionSet s = load_movielens(testing::fixture("toy_ratings.csv"));
  const InteractionGraph g = build_graph(s);
  const ParamSet p = random_params(g, 4, 13, 0.3);
  LayerState f = forward(g, p, 1, {});
  LayerState scaled = f;
  for (double& x : scaled.euclid_user.flat()) x *= 3.0;
  for (double& x : scaled.euclid_item.flat()) x *= 3.0;
  CHECK(score(scaled, 2, 5, 0.0) == Approx(9.0 * score(f, 2, 5, 0.0)).epsilon(1e-13));
  for (Index u = 0; u < 5; ++u) {
    std::vector<Index> mask;
    for (const auto& e : s.user_pairs(u)) mask.push_back(e.item);
    CHECK(rank_items(f, u, mask, 0.0) == rank_items(scaled, u, mask, 0.0));
  }
}
