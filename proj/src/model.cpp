#include "ggcf/model.hpp"

#include <cmath>
#include <random>
#include <string>

#include "ggcf/error.hpp"
#include "ggcf/spatial.hpp"

namespace ggcf {

namespace sp = spatial;

void AblationFlags::validate() const {
  if (euclidean_only && hyperbolic_only) {
    throw ConfigError("euclidean_only and hyperbolic_only are mutually exclusive");
  }
}

AblationFlags parse_ablation(const std::string& name) {
  if (name == "full") return {};
  if (name == "no-interaction") return {.disable_interaction = true};
  if (name == "euclidean-only") return {.euclidean_only = true};
  if (name == "hyperbolic-only") return {.hyperbolic_only = true};
  throw ConfigError("unknown ablation '" + name +
                    "' (expected full, no-interaction, euclidean-only, hyperbolic-only)");
}

std::string ablation_name(const AblationFlags& flags) {
  if (flags.euclidean_only) return "euclidean-only";
  if (flags.hyperbolic_only) return "hyperbolic-only";
  if (flags.disable_interaction) return "no-interaction";
  return "full";
}

GradSet zero_grads_like(const ParamSet& params) {
  GradSet g;
  g.euclid_user = Table(params.euclid_user.rows(), params.euclid_user.cols());
  g.euclid_item = Table(params.euclid_item.rows(), params.euclid_item.cols());
  g.tangent_user = Table(params.tangent_user.rows(), params.tangent_user.cols());
  g.tangent_item = Table(params.tangent_item.rows(), params.tangent_item.cols());
  return g;
}

ParamSet init_params(std::size_t user_count, std::size_t item_count, std::size_t dim,
                     std::uint64_t seed) {
  if (dim < 1) throw ConfigError("embedding dimension must be >= 1");
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 0.1);
  ParamSet p;
  p.euclid_user = Table(user_count, dim);
  p.euclid_item = Table(item_count, dim);
  p.tangent_user = Table(user_count, dim);
  p.tangent_item = Table(item_count, dim);
  p.for_each_table([&](Table& t) {
    for (double& x : t.flat()) x = normal(rng);
  });
  p.gamma = 0.0;
  p.gamma_prime = 0.0;
  p.lambda = 1.0;
  return p;
}

namespace {

void set_origin_rows(Table& t) {
  t.fill(0.0);
  for (std::size_t r = 0; r < t.rows(); ++r) t(r, 0) = 1.0;
}

void write_time(std::span<double> row) { row[0] = sp::time_of(row.subspan(1)); }

void check_rows(const Table& t, int layer, const char* what) {
  for (double x : t.flat()) {
    if (!std::isfinite(x)) {
      throw NumericError("layer " + std::to_string(layer) + ": non-finite value in " + what);
    }
  }
}

// Lorentzian centroid over one adjacency row, written projected.
template <class Neighbors>
double centroid_row(const Neighbors& nbrs, const Table& points, std::span<double> out) {
  std::fill(out.begin(), out.end(), 0.0);
  if (nbrs.empty()) {
    out[0] = 1.0;
    return 0.0;
  }
  for (const auto& e : nbrs) sp::axpy(e.weight, points.row(e.node), out);
  const double norm = std::sqrt(std::abs(lorentz::linner(out, out)));
  for (std::size_t c = 1; c < out.size(); ++c) out[c] /= norm;
  write_time(out);
  return norm;
}

void require_rows(const Table& t, std::size_t rows, const char* what) {
  if (t.rows() != rows) {
    throw DimensionError(std::string(what) + ": expected " + std::to_string(rows) + " rows, got " +
                         std::to_string(t.rows()));
  }
}

PropagatedLayer propagate(const InteractionGraph& graph, const LayerState& in,
                          const AblationFlags& flags) {
  PropagatedLayer out;
  const std::size_t users = graph.user_count();
  const std::size_t items = graph.item_count();
  const std::size_t d = in.dim();
  if (flags.hyperbolic_only) {
    out.euclid_user = Table(users, d);
    out.euclid_item = Table(items, d);
  } else {
    std::tie(out.euclid_user, out.euclid_item) =
        propagate_euclidean(graph, in.euclid_user, in.euclid_item);
  }
  out.hyper_user = Table(users, d + 1);
  out.hyper_item = Table(items, d + 1);
  out.user_norm.assign(users, 0.0);
  out.item_norm.assign(items, 0.0);
  if (flags.euclidean_only) {
    set_origin_rows(out.hyper_user);
    set_origin_rows(out.hyper_item);
  } else {
    for (Index u = 0; u < users; ++u) {
      out.user_norm[u] = centroid_row(graph.user_neighbors(u), in.hyper_item, out.hyper_user.row(u));
    }
    for (Index i = 0; i < items; ++i) {
      out.item_norm[i] = centroid_row(graph.item_neighbors(i), in.hyper_user, out.hyper_item.row(i));
    }
  }
  return out;
}

void interact_table(const Table& h_euclid, const Table& h_hyper, double gamma, double gamma_prime,
                    Table& f_euclid, Table& f_hyper) {
  f_euclid = Table(h_euclid.rows(), h_euclid.cols());
  f_hyper = Table(h_hyper.rows(), h_hyper.cols());
  for (std::size_t r = 0; r < h_euclid.rows(); ++r) {
    auto out_h = f_hyper.row(r);
    kernel::interact_row(h_euclid.row(r), h_hyper.row(r).subspan(1), gamma, gamma_prime,
                         f_euclid.row(r), out_h.subspan(1));
    write_time(out_h);
  }
}

void fuse_hyper(const std::vector<LayerState>& layers, Table LayerState::*table,
                const Table& shape, Table& out, std::vector<double>& norms) {
  const double weight = 1.0 / static_cast<double>(layers.size());
  out = Table(shape.rows(), shape.cols());
  norms.assign(shape.rows(), 0.0);
  for (std::size_t r = 0; r < shape.rows(); ++r) {
    auto row = out.row(r);
    for (const auto& layer : layers) sp::axpy(weight, (layer.*table).row(r), row);
    const double norm = std::sqrt(std::abs(lorentz::linner(row, row)));
    for (std::size_t c = 1; c < row.size(); ++c) row[c] /= norm;
    write_time(row);
    norms[r] = norm;
  }
}

}  // namespace

std::pair<Table, Table> propagate_euclidean(const InteractionGraph& graph, const Table& user_feats,
                                            const Table& item_feats) {
  require_rows(user_feats, graph.user_count(), "propagate_euclidean users");
  require_rows(item_feats, graph.item_count(), "propagate_euclidean items");
  if (user_feats.cols() != item_feats.cols()) {
    throw DimensionError("propagate_euclidean: user and item feature widths differ");
  }
  Table users(user_feats.rows(), user_feats.cols());
  Table items(item_feats.rows(), item_feats.cols());
  for (Index u = 0; u < users.rows(); ++u) {
    for (const auto& e : graph.user_neighbors(u)) sp::axpy(e.weight, item_feats.row(e.node), users.row(u));
  }
  for (Index i = 0; i < items.rows(); ++i) {
    for (const auto& e : graph.item_neighbors(i)) sp::axpy(e.weight, user_feats.row(e.node), items.row(i));
  }
  return {std::move(users), std::move(items)};
}

std::pair<Table, Table> propagate_hyperbolic(const InteractionGraph& graph,
                                             const Table& user_points, const Table& item_points) {
  require_rows(user_points, graph.user_count(), "propagate_hyperbolic users");
  require_rows(item_points, graph.item_count(), "propagate_hyperbolic items");
  if (user_points.cols() != item_points.cols() || user_points.cols() < 2) {
    throw DimensionError("propagate_hyperbolic: bad point widths");
  }
  Table users(user_points.rows(), user_points.cols());
  Table items(item_points.rows(), item_points.cols());
  for (Index u = 0; u < users.rows(); ++u) centroid_row(graph.user_neighbors(u), item_points, users.row(u));
  for (Index i = 0; i < items.rows(); ++i) centroid_row(graph.item_neighbors(i), user_points, items.row(i));
  return {std::move(users), std::move(items)};
}

namespace kernel {

// exp_0(s * log_0(exp_0 hR)) feeds straight into the tangent form of (+), so
// the log_0 . exp_0 round trips reduce to cap_norm.
void interact_row(std::span<const double> h_euclid, std::span<const double> h_hyper, double gamma,
                  double gamma_prime, std::span<double> f_euclid, std::span<double> f_hyper) {
  const std::size_t d = h_euclid.size();
  auto lg = sp::scratch(4, d), diff = sp::scratch(5, d), es = sp::scratch(6, d);
  auto le = sp::scratch(7, d), t = sp::scratch(8, d), tc = sp::scratch(9, d);

  sp::log0(h_hyper, lg);
  for (std::size_t c = 0; c < d; ++c) diff[c] = h_euclid[c] - lg[c];
  const double d_euclid = sp::norm(diff);
  for (std::size_t c = 0; c < d; ++c) f_euclid[c] = h_euclid[c] + gamma * d_euclid * lg[c];

  sp::exp0(h_euclid, es);
  const double scale = gamma_prime * sp::dist(h_hyper, es);
  sp::cap_norm(h_euclid, le);
  for (std::size_t c = 0; c < d; ++c) t[c] = scale * le[c];
  sp::cap_norm(t, tc);
  sp::madd_tangent(h_hyper, tc, f_hyper);
}

InteractGrad interact_row_vjp(std::span<const double> h_euclid, std::span<const double> h_hyper,
                              double gamma, double gamma_prime, std::span<const double> g_euclid,
                              std::span<const double> g_hyper, std::span<double> gh_euclid,
                              std::span<double> gh_hyper) {
  const std::size_t d = h_euclid.size();
  auto lg = sp::scratch(4, d), diff = sp::scratch(5, d), es = sp::scratch(6, d);
  auto le = sp::scratch(7, d), t = sp::scratch(8, d), tc = sp::scratch(9, d);
  sp::log0(h_hyper, lg);
  for (std::size_t c = 0; c < d; ++c) diff[c] = h_euclid[c] - lg[c];
  const double d_euclid = sp::norm(diff);
  sp::exp0(h_euclid, es);
  const double d_hyper = sp::dist(h_hyper, es);
  const double scale = gamma_prime * d_hyper;
  sp::cap_norm(h_euclid, le);
  for (std::size_t c = 0; c < d; ++c) t[c] = scale * le[c];
  sp::cap_norm(t, tc);

  InteractGrad g;
  auto g_lg = sp::zeroed_scratch(10, d), g_es = sp::zeroed_scratch(11, d);
  auto g_le = sp::zeroed_scratch(12, d), g_t = sp::zeroed_scratch(13, d);
  auto g_tc = sp::zeroed_scratch(14, d);

  // f_euclid = h_euclid + gamma * |h_euclid - lg| * lg
  const double lg_g = sp::dot(lg, g_euclid);
  g.gamma += d_euclid * lg_g;
  const double g_dist = gamma * lg_g;
  for (std::size_t c = 0; c < d; ++c) {
    gh_euclid[c] += g_euclid[c];
    g_lg[c] += gamma * d_euclid * g_euclid[c];
  }
  if (d_euclid > 0.0) {
    for (std::size_t c = 0; c < d; ++c) {
      const double g_diff = g_dist * diff[c] / d_euclid;
      gh_euclid[c] += g_diff;
      g_lg[c] -= g_diff;
    }
  }

  // f_hyper = h_hyper (+) exp_0(scale * log_0(exp_0(h_euclid)))
  sp::madd_tangent_vjp(h_hyper, tc, g_hyper, gh_hyper, g_tc);
  sp::cap_norm_vjp(t, g_tc, g_t);
  const double g_scale = sp::dot(le, g_t);
  for (std::size_t c = 0; c < d; ++c) g_le[c] = scale * g_t[c];
  sp::cap_norm_vjp(h_euclid, g_le, gh_euclid);
  g.gamma_prime += d_hyper * g_scale;
  sp::dist_vjp(h_hyper, es, gamma_prime * g_scale, gh_hyper, g_es);
  sp::exp0_vjp(h_euclid, g_es, gh_euclid);
  sp::log0_vjp(h_hyper, g_lg, gh_hyper);
  return g;
}

}  // namespace kernel

InteractionResult interact(std::span<const double> h_euclid, const lorentz::HPoint& h_hyper,
                           double gamma, double gamma_prime) {
  if (h_euclid.size() != h_hyper.dim()) {
    throw DimensionError("interact: Euclidean and hyperbolic widths differ");
  }
  if (!std::isfinite(gamma) || !std::isfinite(gamma_prime)) {
    throw NumericError("interact: non-finite scale");
  }
  // HPoint guarantees the manifold constraint; recompute x0 so the spatial
  // kernel sees a projected point.
  std::vector<double> f_euclid(h_euclid.size());
  std::vector<double> f_hyper(h_hyper.coords().size());
  kernel::interact_row(h_euclid, h_hyper.spatial(), gamma, gamma_prime, f_euclid,
                       std::span<double>(f_hyper).subspan(1));
  return {std::move(f_euclid), lorentz::project(lorentz::AmbientVec(std::move(f_hyper)))};
}

LayerState fuse_layers(std::span<const LayerState> states) {
  if (states.empty()) throw DimensionError("fuse_layers: no layers");
  std::vector<LayerState> layers(states.begin(), states.end());
  const LayerState& first = layers.front();
  LayerState out;
  out.layer_index = static_cast<int>(layers.size()) - 1;
  const double weight = 1.0 / static_cast<double>(layers.size());
  out.euclid_user = Table(first.euclid_user.rows(), first.euclid_user.cols());
  out.euclid_item = Table(first.euclid_item.rows(), first.euclid_item.cols());
  for (const auto& layer : layers) {
    if (!layer.euclid_user.same_shape(first.euclid_user) ||
        !layer.hyper_item.same_shape(first.hyper_item)) {
      throw DimensionError("fuse_layers: layer shapes differ");
    }
    sp::axpy(weight, layer.euclid_user.flat(), out.euclid_user.flat());
    sp::axpy(weight, layer.euclid_item.flat(), out.euclid_item.flat());
  }
  std::vector<double> norms;
  fuse_hyper(layers, &LayerState::hyper_user, first.hyper_user, out.hyper_user, norms);
  fuse_hyper(layers, &LayerState::hyper_item, first.hyper_item, out.hyper_item, norms);
  return out;
}

double score(const LayerState& final_state, Index user, Index item, double lambda) {
  if (user >= final_state.euclid_user.rows() || item >= final_state.euclid_item.rows()) {
    throw DimensionError("score: index out of range");
  }
  const double euclid = sp::dot(final_state.euclid_user.row(user), final_state.euclid_item.row(item));
  if (lambda == 0.0) return euclid;
  return euclid +
         lambda * lorentz::linner(final_state.hyper_user.row(user), final_state.hyper_item.row(item));
}

double scoring_lambda(const ParamSet& params, const AblationFlags& flags) {
  return flags.euclidean_only ? 0.0 : params.lambda;
}

ForwardTrace forward_trace(const InteractionGraph& graph, const ParamSet& params, int layers,
                           const AblationFlags& flags) {
  if (layers < 0) throw ConfigError("layer count must be >= 0");
  flags.validate();
  const std::size_t users = graph.user_count();
  const std::size_t items = graph.item_count();
  require_rows(params.euclid_user, users, "params.euclid_user");
  require_rows(params.euclid_item, items, "params.euclid_item");
  require_rows(params.tangent_user, users, "params.tangent_user");
  require_rows(params.tangent_item, items, "params.tangent_item");
  const std::size_t d = params.dim();

  ForwardTrace trace;
  trace.layers.reserve(static_cast<std::size_t>(layers) + 1);
  LayerState base;
  base.layer_index = 0;
  if (flags.hyperbolic_only) {
    base.euclid_user = Table(users, d);
    base.euclid_item = Table(items, d);
  } else {
    base.euclid_user = params.euclid_user;
    base.euclid_item = params.euclid_item;
  }
  base.hyper_user = Table(users, d + 1);
  base.hyper_item = Table(items, d + 1);
  if (flags.euclidean_only) {
    set_origin_rows(base.hyper_user);
    set_origin_rows(base.hyper_item);
  } else {
    auto lift = [](const Table& tangent, Table& points) {
      for (std::size_t r = 0; r < tangent.rows(); ++r) {
        auto row = points.row(r);
        sp::exp0(tangent.row(r), row.subspan(1));
        write_time(row);
      }
    };
    lift(params.tangent_user, base.hyper_user);
    lift(params.tangent_item, base.hyper_item);
  }
  check_rows(base.hyper_user, 0, "exp_0 of user tangents");
  check_rows(base.hyper_item, 0, "exp_0 of item tangents");
  trace.layers.push_back(std::move(base));

  const bool interaction = !flags.disable_interaction && !flags.euclidean_only && !flags.hyperbolic_only;
  for (int k = 1; k <= layers; ++k) {
    PropagatedLayer h = propagate(graph, trace.layers.back(), flags);
    check_rows(h.hyper_user, k, "user centroids");
    check_rows(h.hyper_item, k, "item centroids");
    LayerState f;
    f.layer_index = k;
    if (interaction) {
      interact_table(h.euclid_user, h.hyper_user, params.gamma, params.gamma_prime, f.euclid_user,
                     f.hyper_user);
      interact_table(h.euclid_item, h.hyper_item, params.gamma, params.gamma_prime, f.euclid_item,
                     f.hyper_item);
      check_rows(f.euclid_user, k, "user interaction");
      check_rows(f.hyper_user, k, "user interaction");
      check_rows(f.euclid_item, k, "item interaction");
      check_rows(f.hyper_item, k, "item interaction");
    } else {
      f.euclid_user = h.euclid_user;
      f.euclid_item = h.euclid_item;
      f.hyper_user = h.hyper_user;
      f.hyper_item = h.hyper_item;
    }
    trace.propagated.push_back(std::move(h));
    trace.layers.push_back(std::move(f));
  }

  LayerState& fin = trace.final_state;
  fin.layer_index = layers;
  const double weight = 1.0 / static_cast<double>(trace.layers.size());
  fin.euclid_user = Table(users, d);
  fin.euclid_item = Table(items, d);
  for (const auto& layer : trace.layers) {
    sp::axpy(weight, layer.euclid_user.flat(), fin.euclid_user.flat());
    sp::axpy(weight, layer.euclid_item.flat(), fin.euclid_item.flat());
  }
  fuse_hyper(trace.layers, &LayerState::hyper_user, trace.layers[0].hyper_user, fin.hyper_user,
             trace.fuse_user_norm);
  fuse_hyper(trace.layers, &LayerState::hyper_item, trace.layers[0].hyper_item, fin.hyper_item,
             trace.fuse_item_norm);
  check_rows(fin.euclid_user, layers, "fused user features");
  check_rows(fin.hyper_user, layers, "fused user features");
  check_rows(fin.euclid_item, layers, "fused item features");
  check_rows(fin.hyper_item, layers, "fused item features");
  return trace;
}

LayerState forward(const InteractionGraph& graph, const ParamSet& params, int layers,
                   const AblationFlags& flags) {
  return std::move(forward_trace(graph, params, layers, flags).final_state);
}

FinalGrad zero_final_grad(const LayerState& s) {
  return {Table(s.euclid_user.rows(), s.euclid_user.cols()),
          Table(s.euclid_item.rows(), s.euclid_item.cols()),
          Table(s.hyper_user.rows(), s.hyper_user.cols()),
          Table(s.hyper_item.rows(), s.hyper_item.cols())};
}

}  // namespace ggcf
