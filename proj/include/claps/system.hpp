#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "claps/absgraph.hpp"
#include "claps/geometry.hpp"
#include "claps/mlp.hpp"
#include "claps/spectrl.hpp"

namespace claps::sys {

/// Per-dimension symmetric triangular distribution with support [-c, c] and
/// mode 0. A zero scale denotes a deterministic (point-mass) dimension.
class TriangularNoise {
 public:
  explicit TriangularNoise(std::vector<double> scales);
  static TriangularNoise none(std::size_t dims);

  std::size_t dims() const { return scales_.size(); }
  const std::vector<double>& scales() const { return scales_; }
  bool is_deterministic() const;

  double cdf(std::size_t dim, double z) const;
  /// Exact probability mass of a per-dimension interval (product form).
  double mass(const nn::Interval& cell) const;
  std::vector<double> sample(std::mt19937_64& rng) const;
  nn::Interval support() const;

 private:
  std::vector<double> scales_;
};

/// Discrete-time stochastic system x' = f(x, u, w), with f clamping back
/// into the state space. Descriptions are immutable; all methods are const
/// and thread-safe.
class StochasticSystem {
 public:
  StochasticSystem(Box state_space, Box action_space, TriangularNoise noise, double lipschitz_f,
                   double max_step)
      : state_space_(std::move(state_space)),
        action_space_(std::move(action_space)),
        noise_(std::move(noise)),
        lipschitz_f_(lipschitz_f),
        max_step_(max_step) {}
  virtual ~StochasticSystem() = default;

  const Box& state_space() const { return state_space_; }
  const Box& action_space() const { return action_space_; }
  const TriangularNoise& noise() const { return noise_; }
  /// Declared Lipschitz constant of f under the combined L1 input norm.
  double lipschitz_f() const { return lipschitz_f_; }
  /// Declared bound on the one-step L1 displacement under any admissible
  /// action and noise draw.
  double max_step() const { return max_step_; }

  /// One step; result always lies in the state space.
  std::vector<double> step(std::span<const double> x, std::span<const double> u,
                           std::span<const double> w) const;

  /// Sound enclosure of f(x, u, w) over w ranging in `noise_cell`.
  virtual nn::Interval step_enclosure(std::span<const double> x, std::span<const double> u,
                                      const nn::Interval& noise_cell) const = 0;

  /// Chain rule through the dynamics: accumulate dL/du given dL/dx'
  /// (almost-everywhere derivative; clamped/clipped coordinates gate to 0).
  virtual void backprop_action(std::span<const double> x, std::span<const double> u,
                               std::span<const double> w, std::span<const double> dxprime,
                               std::span<double> du) const = 0;

  virtual std::string describe() const = 0;

 protected:
  virtual std::vector<double> step_raw(std::span<const double> x, std::span<const double> u,
                                       std::span<const double> w) const = 0;

 private:
  Box state_space_;
  Box action_space_;
  TriangularNoise noise_;
  double lipschitz_f_;
  double max_step_;
};

/// x' = clamp(x + drift_scale * clip(u, -1, 1) + noise_scale * w).
class ClippedAffineSystem final : public StochasticSystem {
 public:
  ClippedAffineSystem(Box state_space, Box action_space, TriangularNoise noise,
                      double drift_scale, double noise_scale);

  nn::Interval step_enclosure(std::span<const double> x, std::span<const double> u,
                              const nn::Interval& noise_cell) const override;
  void backprop_action(std::span<const double> x, std::span<const double> u,
                       std::span<const double> w, std::span<const double> dxprime,
                       std::span<double> du) const override;
  std::string describe() const override;

  double drift_scale() const { return drift_scale_; }
  double noise_scale() const { return noise_scale_; }

 protected:
  std::vector<double> step_raw(std::span<const double> x, std::span<const double> u,
                               std::span<const double> w) const override;

 private:
  double drift_scale_;
  double noise_scale_;
};

/// x' = clamp(rate * x); the action is ignored (useful as an analytic
/// verification target).
class ContractionSystem final : public StochasticSystem {
 public:
  ContractionSystem(Box state_space, Box action_space, double rate);

  nn::Interval step_enclosure(std::span<const double> x, std::span<const double> u,
                              const nn::Interval& noise_cell) const override;
  void backprop_action(std::span<const double> x, std::span<const double> u,
                       std::span<const double> w, std::span<const double> dxprime,
                       std::span<double> du) const override;
  std::string describe() const override;

  double rate() const { return rate_; }

 protected:
  std::vector<double> step_raw(std::span<const double> x, std::span<const double> u,
                               std::span<const double> w) const override;

 private:
  double rate_;
};

/// Reach the target region while never touching the unsafe region.
struct ReachAvoidTask {
  Region init;
  Region target;
  Region unsafe;

  /// Throws DomainError when the initial region meets the unsafe region.
  ReachAvoidTask(Region init_, Region target_, Region unsafe_);
};

using Policy = std::function<std::vector<double>(std::span<const double>)>;

Policy policy_from_net(const nn::Mlp& net);

struct McResult {
  double estimate = 0;
  double ci_lo = 0;
  double ci_hi = 1;
  std::size_t successes = 0;
  std::size_t episodes = 0;
};

/// Monte Carlo estimate of the reach-avoid probability with an exact
/// (Clopper-Pearson) binomial confidence interval at level 1 - alpha.
/// Episodes with neither event within the horizon count as failures.
/// Per-episode seeds derive deterministically from (seed, episode index), so
/// results do not depend on scheduling.
McResult mc_reach_avoid(const StochasticSystem& system, const Policy& policy,
                        const ReachAvoidTask& task, std::size_t horizon, std::size_t episodes,
                        std::uint64_t seed, double alpha = 0.01);

/// Exact binomial (Clopper-Pearson) interval for k successes in n trials.
std::pair<double, double> binomial_confidence(std::size_t k, std::size_t n, double alpha);

/// Regularized incomplete beta function I_x(a, b).
double regularized_incomplete_beta(double a, double b, double x);

/// One rollout; returns the visited states (horizon + 1 entries unless an
/// absorbing event ends it early is *not* applied here: rollouts run the full
/// horizon so trajectory dumps and reachability checks see whole traces).
std::vector<std::vector<double>> rollout(const StochasticSystem& system, const Policy& policy,
                                         std::span<const double> x0, std::size_t horizon,
                                         std::uint64_t seed);

// -- Stochastic Nine Rooms ----------------------------------------------------

struct NineRoomsEnv {
  std::shared_ptr<StochasticSystem> system;
  Region walls;
  std::array<std::array<Box, 3>, 3> rooms;  // subgoal boxes indexed [x][y]
  Box init_box;                             // room (0,0) subgoal
  Box goal_box;                             // room (2,2) subgoal
  spectrl::RegionTable regions;             // init, goal, walls, safe, room_<x>_<y>
  std::vector<std::pair<std::pair<int, int>, std::pair<int, int>>> graph_edges;

  ReachAvoidTask task() const;
};

/// The bundled 3x3 rooms environment: state space [0,3]^2, drift 0.1,
/// triangular noise, walls with doorways between connected rooms.
NineRoomsEnv nine_rooms(double noise_c = 0.5);

/// Room-subgoal abstract graph over the environment's edge list. Edge regions
/// are the wall-free corridor within the bounding box of the two rooms.
absgraph::AbstractGraph nine_rooms_graph(const NineRoomsEnv& env);

}  // namespace claps::sys
