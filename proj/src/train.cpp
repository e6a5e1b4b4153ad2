#include "ggcf/train.hpp"

#include <chrono>
#include <cmath>
#include <mutex>
#include <string>

#ifdef __GLIBC__
#include <malloc.h>
#endif

#include "ggcf/error.hpp"
#include "ggcf/spatial.hpp"

namespace ggcf {

namespace sp = spatial;

namespace {

// ln(1 + e^x) without overflow.
double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

// 1 / (1 + e^x)
double logistic_neg(double x) {
  if (x >= 0.0) {
    const double e = std::exp(-x);
    return e / (1.0 + e);
  }
  return 1.0 / (1.0 + std::exp(x));
}

double row_sq(const Table& t, Index r) {
  const auto row = t.row(r);
  return sp::dot(row, row);
}

// Accumulates g * d<a,b>_L/da into the d+1 column gradient row.
void linner_grad(double g, std::span<const double> b, std::span<double> g_a) {
  g_a[0] -= g * b[0];
  for (std::size_t c = 1; c < b.size(); ++c) g_a[c] += g * b[c];
}

struct BatchScores {
  std::vector<double> pos;
  std::vector<double> neg;
};

BatchScores batch_scores(const LayerState& fin, std::span<const BprTriple> batch, double lambda) {
  BatchScores s;
  s.pos.reserve(batch.size());
  s.neg.reserve(batch.size());
  for (const auto& t : batch) {
    s.pos.push_back(score(fin, t.user, t.pos_item, lambda));
    s.neg.push_back(score(fin, t.user, t.neg_item, lambda));
  }
  return s;
}

// Each step allocates and frees several multi-megabyte tables. glibc serves
// those with mmap and returns them immediately, so every step pays for fresh
// zeroed pages; keeping them on the heap removes that cost.
void keep_large_blocks() {
#ifdef __GLIBC__
  static std::once_flag once;
  std::call_once(once, [] {
    mallopt(M_MMAP_THRESHOLD, 32 * 1024 * 1024);
    mallopt(M_TRIM_THRESHOLD, 512 * 1024 * 1024);
  });
#endif
}

void require_batch(std::span<const BprTriple> batch) {
  if (batch.empty()) throw DegenerateInputError("empty training batch");
}

void check_grads_finite(const GradSet& g) {
  auto check = [](const Table& t, const char* name) {
    for (double x : t.flat()) {
      if (!std::isfinite(x)) throw NumericError(std::string("adam_step: non-finite gradient in ") + name);
    }
  };
  check(g.euclid_user, "euclid_user");
  check(g.euclid_item, "euclid_item");
  check(g.tangent_user, "tangent_user");
  check(g.tangent_item, "tangent_item");
  if (!std::isfinite(g.gamma) || !std::isfinite(g.gamma_prime) || !std::isfinite(g.lambda)) {
    throw NumericError("adam_step: non-finite scalar gradient (gamma=" + std::to_string(g.gamma) +
                       ", gamma_prime=" + std::to_string(g.gamma_prime) +
                       ", lambda=" + std::to_string(g.lambda) + ")");
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (!(l2_weight >= 0.0)) throw ConfigError("l2_weight must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (layers < 0) throw ConfigError("layers must be >= 0");
  if (dim < 1) throw ConfigError("dim must be >= 1");
  if (eval_every < 1) throw ConfigError("eval_every must be >= 1");
  if (k < 1) throw ConfigError("k must be >= 1");
}

double bpr_loss(std::span<const double> pos_scores, std::span<const double> neg_scores) {
  if (pos_scores.size() != neg_scores.size()) throw DimensionError("bpr_loss: batch lengths differ");
  if (pos_scores.empty()) throw DegenerateInputError("bpr_loss: empty batch");
  double total = 0.0;
  for (std::size_t b = 0; b < pos_scores.size(); ++b) total += softplus(neg_scores[b] - pos_scores[b]);
  return total / static_cast<double>(pos_scores.size());
}

double l2_penalty(const ParamSet& params, std::span<const BprTriple> batch, double l2_weight,
                  const AblationFlags& flags) {
  if (batch.empty() || l2_weight == 0.0) return 0.0;
  double total = 0.0;
  for (const auto& t : batch) {
    if (!flags.hyperbolic_only) {
      total += row_sq(params.euclid_user, t.user) + row_sq(params.euclid_item, t.pos_item) +
               row_sq(params.euclid_item, t.neg_item);
    }
    if (!flags.euclidean_only) {
      total += row_sq(params.tangent_user, t.user) + row_sq(params.tangent_item, t.pos_item) +
               row_sq(params.tangent_item, t.neg_item);
    }
  }
  return l2_weight / static_cast<double>(batch.size()) * total;
}

double objective(const InteractionGraph& graph, const ParamSet& params,
                 std::span<const BprTriple> batch, const TrainConfig& config,
                 const AblationFlags& flags) {
  require_batch(batch);
  const LayerState fin = forward(graph, params, config.layers, flags);
  const BatchScores s = batch_scores(fin, batch, scoring_lambda(params, flags));
  return bpr_loss(s.pos, s.neg) + l2_penalty(params, batch, config.l2_weight, flags);
}

LossGrad gradients(const InteractionGraph& graph, const ParamSet& params,
                   std::span<const BprTriple> batch, const TrainConfig& config,
                   const AblationFlags& flags) {
  require_batch(batch);
  const ForwardTrace trace = forward_trace(graph, params, config.layers, flags);
  const LayerState& fin = trace.final_state;
  const double lambda = scoring_lambda(params, flags);
  const BatchScores s = batch_scores(fin, batch, lambda);

  LossGrad out;
  out.bpr = bpr_loss(s.pos, s.neg);
  out.l2 = l2_penalty(params, batch, config.l2_weight, flags);

  FinalGrad g = zero_final_grad(fin);
  const double inv_batch = 1.0 / static_cast<double>(batch.size());
  double g_lambda = 0.0;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const BprTriple& t = batch[b];
    // d/d(margin) of softplus(-margin), averaged.
    const double gm = -logistic_neg(s.pos[b] - s.neg[b]) * inv_batch;
    if (!flags.hyperbolic_only) {
      const auto fu = fin.euclid_user.row(t.user);
      const auto fi = fin.euclid_item.row(t.pos_item);
      const auto fj = fin.euclid_item.row(t.neg_item);
      auto gu = g.euclid_user.row(t.user);
      for (std::size_t c = 0; c < fu.size(); ++c) gu[c] += gm * (fi[c] - fj[c]);
      sp::axpy(gm, fu, g.euclid_item.row(t.pos_item));
      sp::axpy(-gm, fu, g.euclid_item.row(t.neg_item));
    }
    if (!flags.euclidean_only) {
      const auto hu = fin.hyper_user.row(t.user);
      const auto hi = fin.hyper_item.row(t.pos_item);
      const auto hj = fin.hyper_item.row(t.neg_item);
      g_lambda += gm * (lorentz::linner(hu, hi) - lorentz::linner(hu, hj));
      const double gl = gm * lambda;
      linner_grad(gl, hi, g.hyper_user.row(t.user));
      linner_grad(-gl, hj, g.hyper_user.row(t.user));
      linner_grad(gl, hu, g.hyper_item.row(t.pos_item));
      linner_grad(-gl, hu, g.hyper_item.row(t.neg_item));
    }
  }

  out.grads = backward(graph, params, trace, flags, g);
  out.grads.lambda = g_lambda;

  if (config.l2_weight != 0.0) {
    const double c = 2.0 * config.l2_weight * inv_batch;
    for (const auto& t : batch) {
      if (!flags.hyperbolic_only) {
        sp::axpy(c, params.euclid_user.row(t.user), out.grads.euclid_user.row(t.user));
        sp::axpy(c, params.euclid_item.row(t.pos_item), out.grads.euclid_item.row(t.pos_item));
        sp::axpy(c, params.euclid_item.row(t.neg_item), out.grads.euclid_item.row(t.neg_item));
      }
      if (!flags.euclidean_only) {
        sp::axpy(c, params.tangent_user.row(t.user), out.grads.tangent_user.row(t.user));
        sp::axpy(c, params.tangent_item.row(t.pos_item), out.grads.tangent_item.row(t.pos_item));
        sp::axpy(c, params.tangent_item.row(t.neg_item), out.grads.tangent_item.row(t.neg_item));
      }
    }
  }
  return out;
}

AdamState AdamState::for_params(const ParamSet& params) {
  AdamState s;
  s.first_moment = zero_grads_like(params);
  s.second_moment = zero_grads_like(params);
  return s;
}

void adam_step(ParamSet& params, const GradSet& grads, AdamState& state, double learning_rate) {
  check_grads_finite(grads);
  if (!grads.euclid_user.same_shape(params.euclid_user) ||
      !grads.tangent_item.same_shape(params.tangent_item) ||
      !state.first_moment.euclid_user.same_shape(params.euclid_user)) {
    throw DimensionError("adam_step: gradient or state shape mismatch");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(AdamState::kBeta1, t);
  const double bias2 = 1.0 - std::pow(AdamState::kBeta2, t);
  auto update = [&](double& p, double g, double& m, double& v) {
    m = AdamState::kBeta1 * m + (1.0 - AdamState::kBeta1) * g;
    v = AdamState::kBeta2 * v + (1.0 - AdamState::kBeta2) * g * g;
    p -= learning_rate * (m / bias1) / (std::sqrt(v / bias2) + AdamState::kEpsilon);
  };
  auto update_table = [&](Table& p, const Table& g, Table& m, Table& v) {
    auto pf = p.flat();
    auto gf = g.flat();
    auto mf = m.flat();
    auto vf = v.flat();
    for (std::size_t n = 0; n < pf.size(); ++n) update(pf[n], gf[n], mf[n], vf[n]);
  };
  GradSet& m = state.first_moment;
  GradSet& v = state.second_moment;
  update_table(params.euclid_user, grads.euclid_user, m.euclid_user, v.euclid_user);
  update_table(params.euclid_item, grads.euclid_item, m.euclid_item, v.euclid_item);
  update_table(params.tangent_user, grads.tangent_user, m.tangent_user, v.tangent_user);
  update_table(params.tangent_item, grads.tangent_item, m.tangent_item, v.tangent_item);
  update(params.gamma, grads.gamma, m.gamma, v.gamma);
  update(params.gamma_prime, grads.gamma_prime, m.gamma_prime, v.gamma_prime);
  update(params.lambda, grads.lambda, m.lambda, v.lambda);
}

FitResult fit(const InteractionGraph& graph, const InteractionSet& train, const InteractionSet& test,
              const TrainConfig& config, const AblationFlags& flags, const EpochCallback& on_epoch,
              std::optional<ParamSet> initial) {
  config.validate();
  flags.validate();
  keep_large_blocks();
  FitResult result;
  result.params = initial ? std::move(*initial)
                          : init_params(graph.user_count(), graph.item_count(), config.dim, config.seed);
  AdamState adam = AdamState::for_params(result.params);
  // Sampling gets its own stream so initialisation and sampling stay decoupled.
  Rng rng(config.seed ^ 0x9e3779b97f4a7c15ULL);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    const TripleBatch triples = epoch_triples(graph, rng);
    const std::span<const BprTriple> all(triples.triples);
    double loss_sum = 0.0;
    for (std::size_t offset = 0; offset < all.size(); offset += config.batch_size) {
      const auto batch = all.subspan(offset, std::min(config.batch_size, all.size() - offset));
      const LossGrad lg = gradients(graph, result.params, batch, config, flags);
      adam_step(result.params, lg.grads, adam, config.learning_rate);
      loss_sum += lg.total() * static_cast<double>(batch.size());
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss = all.empty() ? 0.0 : loss_sum / static_cast<double>(all.size());
    const bool eval_now = epoch % config.eval_every == 0 || epoch == config.epochs;
    if (eval_now && !test.empty()) {
      const LayerState fin = forward(graph, result.params, config.layers, flags);
      rec.metrics = evaluate(fin, train, test, config.k, scoring_lambda(result.params, flags));
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec, result.params);
  }
  return result;
}

}  // namespace ggcf
