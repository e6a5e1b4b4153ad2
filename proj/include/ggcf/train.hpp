#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "ggcf/eval.hpp"
#include "ggcf/graph.hpp"
#include "ggcf/model.hpp"

namespace ggcf {

struct TrainConfig {
  double learning_rate = 1e-3;
  double l2_weight = 1e-4;
  std::size_t batch_size = 1024;
  int epochs = 400;
  int layers = 3;
  std::size_t dim = 64;
  std::uint64_t seed = 2024;
  int eval_every = 10;
  int k = 20;

  // Throws ConfigError on violated invariants.
  void validate() const;
};

// Mean over the batch of -ln sigmoid(pos - neg), in softplus form.
double bpr_loss(std::span<const double> pos_scores, std::span<const double> neg_scores);

// (l2_weight / |batch|) * sum of squared norms of the layer-0 rows of u, i, j
// in every table the ablation keeps active.
double l2_penalty(const ParamSet& params, std::span<const BprTriple> batch, double l2_weight,
                  const AblationFlags& flags = {});

struct LossGrad {
  double bpr = 0.0;
  double l2 = 0.0;
  GradSet grads;

  double total() const { return bpr + l2; }
};

// bpr_loss + l2_penalty and its exact gradient.
LossGrad gradients(const InteractionGraph& graph, const ParamSet& params,
                   std::span<const BprTriple> batch, const TrainConfig& config,
                   const AblationFlags& flags);

// Loss only; same value as gradients(...).total().
double objective(const InteractionGraph& graph, const ParamSet& params,
                 std::span<const BprTriple> batch, const TrainConfig& config,
                 const AblationFlags& flags);

struct AdamState {
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEpsilon = 1e-8;

  GradSet first_moment;
  GradSet second_moment;
  std::uint64_t step = 0;

  static AdamState for_params(const ParamSet& params);
};

// Throws NumericError (and leaves params untouched) on a non-finite gradient.
void adam_step(ParamSet& params, const GradSet& grads, AdamState& state, double learning_rate);

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;
  std::optional<EvalReport> metrics;
  double seconds = 0.0;
};

struct FitResult {
  ParamSet params;
  std::vector<EpochRecord> history;
};

using EpochCallback = std::function<void(const EpochRecord&, const ParamSet&)>;

// `test` may be empty, in which case no evaluation runs. `initial` overrides
// the seeded initialisation.
FitResult fit(const InteractionGraph& graph, const InteractionSet& train, const InteractionSet& test,
              const TrainConfig& config, const AblationFlags& flags,
              const EpochCallback& on_epoch = {}, std::optional<ParamSet> initial = std::nullopt);

}  // namespace ggcf
