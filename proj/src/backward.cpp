#include <cmath>
#include <vector>

#include "ggcf/error.hpp"
#include "ggcf/model.hpp"
#include "ggcf/spatial.hpp"

namespace ggcf {

namespace sp = spatial;

namespace {

// Gradients for one layer: Euclidean rows, and hyperbolic rows in spatial
// coordinates (x0 is a function of the spatial part for projected points).
struct LayerGrad {
  Table euclid_user;
  Table euclid_item;
  Table hyper_user;
  Table hyper_item;

  LayerGrad(std::size_t users, std::size_t items, std::size_t d)
      : euclid_user(users, d), euclid_item(items, d), hyper_user(users, d), hyper_item(items, d) {}
};

// Reverse of out = project(z / | ||z||_L |) with z = sum_j w_j p_j, given the
// gradient g_out on the spatial part of out. Writes the pieces shared by all
// summands: d/dz_s into g_zs and returns d/dz_0.
double centroid_grad(std::span<const double> out, double norm, std::span<const double> g_out,
                     std::span<double> g_zs) {
  const auto o_s = out.subspan(1);
  const double og = sp::dot(o_s, g_out);
  for (std::size_t c = 0; c < g_zs.size(); ++c) g_zs[c] = (g_out[c] + og * o_s[c]) / norm;
  return -og * out[0] / norm;
}

// Accumulates w * d/dp_s for a projected summand p.
void scatter_point(double w, std::span<const double> g_zs, double g_z0, std::span<const double> p,
                   std::span<double> g_p) {
  const double t = g_z0 * w / p[0];
  for (std::size_t c = 0; c < g_zs.size(); ++c) g_p[c] += w * g_zs[c] + t * p[c + 1];
}

template <class Neighbors>
void centroid_row_vjp(const Neighbors& nbrs, std::span<const double> out, double norm,
                      std::span<const double> g_out, const Table& points, Table& g_points,
                      std::vector<double>& scratch) {
  if (nbrs.empty() || norm == 0.0) return;
  const double g_z0 = centroid_grad(out, norm, g_out, scratch);
  for (const auto& e : nbrs) scatter_point(e.weight, scratch, g_z0, points.row(e.node), g_points.row(e.node));
}

void check_finite(const Table& t, int layer, const char* what) {
  for (double x : t.flat()) {
    if (!std::isfinite(x)) {
      throw NumericError("backward, layer " + std::to_string(layer) + ": non-finite gradient in " + what);
    }
  }
}

}  // namespace

GradSet backward(const InteractionGraph& graph, const ParamSet& params, const ForwardTrace& trace,
                 const AblationFlags& flags, const FinalGrad& grad) {
  const std::size_t users = graph.user_count();
  const std::size_t items = graph.item_count();
  const std::size_t d = params.dim();
  const std::size_t layer_count = trace.layers.size();
  const int K = static_cast<int>(layer_count) - 1;
  const double weight = 1.0 / static_cast<double>(layer_count);
  const bool use_euclid = !flags.hyperbolic_only;
  const bool use_hyper = !flags.euclidean_only;
  const bool interaction = !flags.disable_interaction && use_euclid && use_hyper;

  std::vector<LayerGrad> g;
  g.reserve(layer_count);
  for (std::size_t k = 0; k < layer_count; ++k) g.emplace_back(users, items, d);
  std::vector<double> scratch(d);
  std::vector<double> g_out(d);

  // Layer fusion.
  if (use_euclid) {
    for (auto& lg : g) {
      sp::axpy(weight, grad.euclid_user.flat(), lg.euclid_user.flat());
      sp::axpy(weight, grad.euclid_item.flat(), lg.euclid_item.flat());
    }
  }
  if (use_hyper) {
    auto fuse_side = [&](const Table& fused, const std::vector<double>& norms, const Table& g_fused,
                         Table LayerState::*points, Table LayerGrad::*g_points) {
      for (std::size_t r = 0; r < fused.rows(); ++r) {
        const auto out = fused.row(r);
        const auto gr = g_fused.row(r);
        // Fold d/dx0 into the spatial gradient: x0 = sqrt(1 + |x_s|^2).
        for (std::size_t c = 0; c < d; ++c) g_out[c] = gr[c + 1] + gr[0] * out[c + 1] / out[0];
        const double g_z0 = centroid_grad(out, norms[r], g_out, scratch);
        for (std::size_t k = 0; k < layer_count; ++k) {
          scatter_point(weight, scratch, g_z0, (trace.layers[k].*points).row(r), (g[k].*g_points).row(r));
        }
      }
    };
    fuse_side(trace.final_state.hyper_user, trace.fuse_user_norm, grad.hyper_user,
              &LayerState::hyper_user, &LayerGrad::hyper_user);
    fuse_side(trace.final_state.hyper_item, trace.fuse_item_norm, grad.hyper_item,
              &LayerState::hyper_item, &LayerGrad::hyper_item);
  }

  GradSet out = zero_grads_like(params);

  for (int k = K; k >= 1; --k) {
    const PropagatedLayer& h = trace.propagated[static_cast<std::size_t>(k - 1)];
    const LayerState& prev = trace.layers[static_cast<std::size_t>(k - 1)];
    LayerGrad& gf = g[static_cast<std::size_t>(k)];
    LayerGrad& gp = g[static_cast<std::size_t>(k - 1)];

    // Interaction: gradient w.r.t. h^(k) replaces the one w.r.t. f^(k).
    if (interaction) {
      LayerGrad gh(users, items, d);
      auto side = [&](const Table& he, const Table& hh, const Table& ge, const Table& gH, Table& ghe,
                      Table& ghh) {
        for (std::size_t r = 0; r < he.rows(); ++r) {
          const auto ig = kernel::interact_row_vjp(he.row(r), hh.row(r).subspan(1), params.gamma,
                                                   params.gamma_prime, ge.row(r), gH.row(r),
                                                   ghe.row(r), ghh.row(r));
          out.gamma += ig.gamma;
          out.gamma_prime += ig.gamma_prime;
        }
      };
      side(h.euclid_user, h.hyper_user, gf.euclid_user, gf.hyper_user, gh.euclid_user, gh.hyper_user);
      side(h.euclid_item, h.hyper_item, gf.euclid_item, gf.hyper_item, gh.euclid_item, gh.hyper_item);
      gf = std::move(gh);
    }

    if (use_euclid) {
      for (Index u = 0; u < users; ++u) {
        for (const auto& e : graph.user_neighbors(u)) {
          sp::axpy(e.weight, gf.euclid_user.row(u), gp.euclid_item.row(e.node));
        }
      }
      for (Index i = 0; i < items; ++i) {
        for (const auto& e : graph.item_neighbors(i)) {
          sp::axpy(e.weight, gf.euclid_item.row(i), gp.euclid_user.row(e.node));
        }
      }
    }
    if (use_hyper) {
      for (Index u = 0; u < users; ++u) {
        centroid_row_vjp(graph.user_neighbors(u), h.hyper_user.row(u), h.user_norm[u],
                         gf.hyper_user.row(u), prev.hyper_item, gp.hyper_item, scratch);
      }
      for (Index i = 0; i < items; ++i) {
        centroid_row_vjp(graph.item_neighbors(i), h.hyper_item.row(i), h.item_norm[i],
                         gf.hyper_item.row(i), prev.hyper_user, gp.hyper_user, scratch);
      }
    }
    check_finite(gp.euclid_user, k, "user features");
    check_finite(gp.euclid_item, k, "item features");
    check_finite(gp.hyper_user, k, "user points");
    check_finite(gp.hyper_item, k, "item points");
  }

  if (use_euclid) {
    out.euclid_user = std::move(g[0].euclid_user);
    out.euclid_item = std::move(g[0].euclid_item);
  }
  if (use_hyper) {
    for (std::size_t r = 0; r < users; ++r) {
      sp::exp0_vjp(params.tangent_user.row(r), g[0].hyper_user.row(r), out.tangent_user.row(r));
    }
    for (std::size_t r = 0; r < items; ++r) {
      sp::exp0_vjp(params.tangent_item.row(r), g[0].hyper_item.row(r), out.tangent_item.row(r));
    }
  }
  return out;
}

}  // namespace ggcf
