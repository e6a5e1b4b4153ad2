#pragma once

// Dual-geometry graph collaborative filtering forward pass.
//
// Each layer propagates Euclidean features by a normalised weighted sum and
// hyperbolic features by the Lorentzian centroid over the same bipartite
// graph, then lets each geometry adjust the other according to their
// disagreement. Layers are averaged (arithmetically / by centroid) and a pair
// is scored by <f_u, f_i> + lambda * <f_u, f_i>_L.

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ggcf/graph.hpp"
#include "ggcf/lorentz.hpp"
#include "ggcf/table.hpp"

namespace ggcf {

struct AblationFlags {
  bool disable_interaction = false;
  bool euclidean_only = false;
  bool hyperbolic_only = false;

  // Throws ConfigError when both single-geometry flags are set.
  void validate() const;

  friend bool operator==(const AblationFlags&, const AblationFlags&) = default;
};

// Accepts full, no-interaction, euclidean-only, hyperbolic-only.
AblationFlags parse_ablation(const std::string& name);
std::string ablation_name(const AblationFlags& flags);

// Trainable state. Tables are (count x d); the tangent tables hold the
// origin-tangent coordinates that exp_0 lifts onto the hyperboloid.
template <class Tag>
struct ParamTables {
  Table euclid_user;
  Table euclid_item;
  Table tangent_user;
  Table tangent_item;
  double gamma = 0.0;
  double gamma_prime = 0.0;
  double lambda = 0.0;

  std::size_t user_count() const { return euclid_user.rows(); }
  std::size_t item_count() const { return euclid_item.rows(); }
  std::size_t dim() const { return euclid_user.cols(); }
  std::size_t parameter_count() const {
    return euclid_user.size() + euclid_item.size() + tangent_user.size() + tangent_item.size() + 3;
  }

  template <class Fn>
  void for_each_table(Fn&& fn) {
    fn(euclid_user);
    fn(euclid_item);
    fn(tangent_user);
    fn(tangent_item);
  }

  friend bool operator==(const ParamTables&, const ParamTables&) = default;
};

struct ParamTag;
struct GradTag;
using ParamSet = ParamTables<ParamTag>;
using GradSet = ParamTables<GradTag>;

GradSet zero_grads_like(const ParamSet& params);

// Gaussian(0, 0.1) tables, gamma = gamma' = 0, lambda = 1.
ParamSet init_params(std::size_t user_count, std::size_t item_count, std::size_t dim,
                     std::uint64_t seed);

// Fused features of one layer. Hyperbolic tables have d+1 columns and every
// row is a projected hyperboloid point.
struct LayerState {
  Table euclid_user;
  Table euclid_item;
  Table hyper_user;
  Table hyper_item;
  int layer_index = 0;

  std::size_t dim() const { return euclid_user.cols(); }
};

std::pair<Table, Table> propagate_euclidean(const InteractionGraph& graph, const Table& user_feats,
                                            const Table& item_feats);

std::pair<Table, Table> propagate_hyperbolic(const InteractionGraph& graph,
                                             const Table& user_points, const Table& item_points);

struct InteractionResult {
  std::vector<double> euclid;
  lorentz::HPoint hyper;
};

// Cross-geometry adjustment of one node's features.
InteractionResult interact(std::span<const double> h_euclid, const lorentz::HPoint& h_hyper,
                           double gamma, double gamma_prime);

LayerState fuse_layers(std::span<const LayerState> states);

double score(const LayerState& final_state, Index user, Index item, double lambda);

// lambda used for scoring under the given ablation (zero when the
// hyperbolic branch is disabled).
double scoring_lambda(const ParamSet& params, const AblationFlags& flags);

// Per-layer intermediates kept for the backward pass.
struct PropagatedLayer {
  Table euclid_user;
  Table euclid_item;
  Table hyper_user;
  Table hyper_item;
  // | ||z||_L | of each unnormalised centroid sum; 0 for isolated nodes.
  std::vector<double> user_norm;
  std::vector<double> item_norm;
};

struct ForwardTrace {
  // layers[k] is f^(k); layers[0] holds the raw / exp_0-lifted embeddings.
  std::vector<LayerState> layers;
  // propagated[k-1] holds the aggregated h^(k) for k = 1..K.
  std::vector<PropagatedLayer> propagated;
  std::vector<double> fuse_user_norm;
  std::vector<double> fuse_item_norm;
  LayerState final_state;
};

ForwardTrace forward_trace(const InteractionGraph& graph, const ParamSet& params, int layers,
                           const AblationFlags& flags);

LayerState forward(const InteractionGraph& graph, const ParamSet& params, int layers,
                   const AblationFlags& flags);

// Gradients of a scalar objective with respect to the final fused features.
// The hyperbolic tables carry d+1 columns: d/dx0 in column 0.
struct FinalGrad {
  Table euclid_user;
  Table euclid_item;
  Table hyper_user;
  Table hyper_item;
};

FinalGrad zero_final_grad(const LayerState& final_state);

// Reverse pass through fusion, interaction, propagation, and exp_0. lambda is
// not touched; the caller owns the score-level gradient.
GradSet backward(const InteractionGraph& graph, const ParamSet& params, const ForwardTrace& trace,
                 const AblationFlags& flags, const FinalGrad& grad);

namespace kernel {

// Spatial-form interaction used by the forward pass. Inputs and outputs are
// d-dimensional; hyperbolic rows are spatial coordinates of projected points.
void interact_row(std::span<const double> h_euclid, std::span<const double> h_hyper, double gamma,
                  double gamma_prime, std::span<double> f_euclid, std::span<double> f_hyper);

struct InteractGrad {
  double gamma = 0.0;
  double gamma_prime = 0.0;
};

InteractGrad interact_row_vjp(std::span<const double> h_euclid, std::span<const double> h_hyper,
                              double gamma, double gamma_prime, std::span<const double> g_euclid,
                              std::span<const double> g_hyper, std::span<double> gh_euclid,
                              std::span<double> gh_hyper);

}  // namespace kernel

}  // namespace ggcf
