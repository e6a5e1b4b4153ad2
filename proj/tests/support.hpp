#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <unistd.h>
#include <string>
#include <utility>
#include <vector>

#include "ggcf/graph.hpp"
#include "ggcf/lorentz.hpp"
#include "ggcf/model.hpp"
#include "ggcf/train.hpp"
#include "oracles/naive_ggcf.hpp"

namespace testing {

namespace fs = std::filesystem;

inline fs::path fixture(const std::string& name) { return fs::path(GGCF_FIXTURE_DIR) / name; }

// Fresh directory under the build tree, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = fs::temp_directory_path() /
            ("ggcf-test-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline std::vector<double> random_vector(std::mt19937_64& rng, std::size_t d, double scale) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> v(d);
  for (double& x : v) x = scale * n(rng);
  return v;
}

// Random direction with norm drawn uniformly from [0, max_norm].
inline std::vector<double> random_tangent(std::mt19937_64& rng, std::size_t d, double max_norm) {
  std::vector<double> v = random_vector(rng, d, 1.0);
  double n = 0.0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  const double target = std::uniform_real_distribution<double>(0.0, max_norm)(rng);
  for (double& x : v) x *= target / n;
  return v;
}

inline ggcf::lorentz::HPoint random_point(std::mt19937_64& rng, std::size_t d, double max_dist) {
  return ggcf::lorentz::exp0(ggcf::lorentz::TangentCoords(random_tangent(rng, d, max_dist)));
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// 3 users, 4 items; item 3 is isolated.
inline ggcf::InteractionSet toy_set() {
  std::vector<ggcf::Interaction> pairs = {{0, 0}, {0, 1}, {1, 1}, {1, 2}, {2, 0}, {2, 2}};
  return ggcf::InteractionSet({10, 20, 30}, {100, 200, 300, 400}, pairs);
}

// Connected random graph: every user keeps at least one item.
inline ggcf::InteractionSet random_set(std::mt19937_64& rng, std::size_t users, std::size_t items) {
  std::vector<ggcf::Interaction> pairs;
  std::bernoulli_distribution keep(0.45);
  for (ggcf::Index u = 0; u < users; ++u) {
    bool any = false;
    for (ggcf::Index i = 0; i < items; ++i) {
      if (keep(rng)) {
        pairs.push_back({u, i});
        any = true;
      }
    }
    if (!any) pairs.push_back({u, static_cast<ggcf::Index>(rng() % items)});
  }
  std::vector<ggcf::RawId> uid(users), iid(items);
  for (std::size_t u = 0; u < users; ++u) uid[u] = static_cast<ggcf::RawId>(u);
  for (std::size_t i = 0; i < items; ++i) iid[i] = static_cast<ggcf::RawId>(i);
  return ggcf::InteractionSet(uid, iid, pairs);
}

inline oracle::Mat to_mat(const ggcf::Table& t) {
  oracle::Mat m(t.rows(), oracle::Vec(t.cols()));
  for (std::size_t r = 0; r < t.rows(); ++r) {
    for (std::size_t c = 0; c < t.cols(); ++c) m[r][c] = t(r, c);
  }
  return m;
}

inline oracle::Params to_oracle(const ggcf::ParamSet& p) {
  return {to_mat(p.euclid_user), to_mat(p.euclid_item), to_mat(p.tangent_user), to_mat(p.tangent_item),
          p.gamma,               p.gamma_prime,         p.lambda};
}

inline oracle::Flags to_oracle(const ggcf::AblationFlags& f) {
  return {f.disable_interaction, f.euclidean_only, f.hyperbolic_only};
}

inline std::vector<std::pair<std::size_t, std::size_t>> edge_list(const ggcf::InteractionSet& s) {
  std::vector<std::pair<std::size_t, std::size_t>> e;
  for (const auto& p : s.pairs()) e.emplace_back(p.user, p.item);
  return e;
}

// Central finite differences of the training objective against the
// analytic gradient. The error of one coordinate is
// |a - f| / max(|a|, |f|, floor).
struct GradCheck {
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
  std::string worst;
};

inline constexpr double kFdStep = 1e-5;
inline constexpr double kRelFloor = 1e-4;

inline GradCheck check_gradients(const ggcf::InteractionGraph& graph, const ggcf::ParamSet& params,
                                 std::span<const ggcf::BprTriple> batch,
                                 const ggcf::TrainConfig& config, const ggcf::AblationFlags& flags) {
  const ggcf::LossGrad analytic = ggcf::gradients(graph, params, batch, config, flags);
  GradCheck out;
  ggcf::ParamSet p = params;
  auto probe = [&](double& slot, double a, const std::string& name) {
    const double saved = slot;
    slot = saved + kFdStep;
    const double fp = ggcf::objective(graph, p, batch, config, flags);
    slot = saved - kFdStep;
    const double fm = ggcf::objective(graph, p, batch, config, flags);
    slot = saved;
    const double f = (fp - fm) / (2.0 * kFdStep);
    const double err = std::abs(a - f) / std::max({std::abs(a), std::abs(f), kRelFloor});
    ++out.coordinates;
    if (err > out.max_rel_error) {
      out.max_rel_error = err;
      std::ostringstream s;
      s << name << " analytic=" << a << " fd=" << f;
      out.worst = s.str();
    }
  };
  auto tables = [&](ggcf::Table& t, const ggcf::Table& g, const char* name) {
    for (std::size_t r = 0; r < t.rows(); ++r) {
      for (std::size_t c = 0; c < t.cols(); ++c) {
        probe(t(r, c), g(r, c), std::string(name) + "[" + std::to_string(r) + "," + std::to_string(c) + "]");
      }
    }
  };
  tables(p.euclid_user, analytic.grads.euclid_user, "euclid_user");
  tables(p.euclid_item, analytic.grads.euclid_item, "euclid_item");
  tables(p.tangent_user, analytic.grads.tangent_user, "tangent_user");
  tables(p.tangent_item, analytic.grads.tangent_item, "tangent_item");
  probe(p.gamma, analytic.grads.gamma, "gamma");
  probe(p.gamma_prime, analytic.grads.gamma_prime, "gamma_prime");
  probe(p.lambda, analytic.grads.lambda, "lambda");
  return out;
}

// Smallest |z - 1| over the arcosh arguments of every interaction distance
// in the forward pass; instances inside the clamp band are not comparable
// by finite differences. Isolated nodes are skipped: their propagated
// features are constants.
inline double clamp_margin(const ggcf::InteractionGraph& graph, const ggcf::ParamSet& params, int K,
                           const ggcf::AblationFlags& flags) {
  const ggcf::ForwardTrace tr = ggcf::forward_trace(graph, params, K, flags);
  double m = 1e300;
  for (const auto& h : tr.propagated) {
    auto side = [&](const ggcf::Table& e, const ggcf::Table& hh, auto degree) {
      for (std::size_t r = 0; r < e.rows(); ++r) {
        if (degree(static_cast<ggcf::Index>(r)) == 0) continue;
        const auto ev = ggcf::lorentz::exp0(ggcf::lorentz::TangentCoords(
            std::vector<double>(e.row(r).begin(), e.row(r).end())));
        const double z = -ggcf::lorentz::linner(ev.coords(), hh.row(r));
        m = std::min(m, std::abs(z - 1.0));
      }
    };
    side(h.euclid_user, h.hyper_user, [&](ggcf::Index u) { return graph.user_degree(u); });
    side(h.euclid_item, h.hyper_item, [&](ggcf::Index i) { return graph.item_degree(i); });
  }
  return m;
}

}  // namespace testing
