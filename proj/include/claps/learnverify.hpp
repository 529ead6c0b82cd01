#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "claps/mlp.hpp"
#include "claps/rasm.hpp"
#include "claps/system.hpp"

namespace claps::learnverify {

/// Training / verification knobs. All values positive; the wall-clock
/// timeout is honored by the learner-verifier loop.
struct TrainConfig {
  double learning_rate = 3e-3;
  std::size_t batch_size = 256;
  std::size_t noise_samples = 8;       // per decrease term in the loss
  double lipschitz_threshold = 4.0;    // rho
  double lipschitz_weight = 0.05;      // regularization constant t
  std::size_t max_iterations = 40;     // learner-verifier rounds per lambda
  std::size_t steps_per_iteration = 400;
  double mesh = 0.01;                  // tau
  std::size_t noise_partition = 8;     // M cells per noise dimension
  std::uint64_t seed = 1;
  double timeout_seconds = 1200;

  std::size_t hidden_width = 64;
  std::size_t hidden_layers = 2;

  // pretraining (episodic policy gradient)
  std::size_t pretrain_episodes = 3000;
  std::size_t pretrain_horizon = 120;
  std::size_t pretrain_batch = 16;
  double pretrain_sigma = 0.35;
  double pretrain_floor = 0.6;  // Monte Carlo estimate to stop early at

  // lambda schedule
  double lambda_decay = 0.7;          // lambda <- 1 + (lambda-1)*decay on failure
  std::size_t min_schedule_steps = 5;

  // binary search (Policy+RASM probing)
  double search_precision = 0.02;
  std::size_t max_probes = 8;
  double bracket_high = 0.999;

  std::size_t max_counterexamples = 200;  // per condition per round
  std::size_t max_grid_vertices = 2'000'000;

  std::string csv_log_path;  // per-iteration log; empty disables
};

/// Regular grid whose vertices cover the state space with L1 covering radius
/// at most the mesh.
class Discretization {
 public:
  Discretization(const Box& space, double mesh, std::size_t max_vertices);

  double mesh() const { return mesh_; }
  const Box& space() const { return space_; }

  std::size_t vertex_count() const { return vertex_total_; }
  std::size_t cell_count() const { return cell_total_; }
  std::vector<double> vertex(std::size_t index) const;
  Box cell(std::size_t index) const;
  /// Cells incident to a vertex (up to 2^dims).
  std::vector<std::size_t> cells_adjacent_to_vertex(std::size_t vertex_index) const;

  /// Nearest grid vertex (for counterexample coverage checks).
  std::size_t nearest_vertex(std::span<const double> x) const;

 private:
  Box space_;
  double mesh_;
  std::vector<std::size_t> vertex_counts_;  // per-dim vertex counts
  std::vector<std::size_t> cell_counts_;    // per-dim cell counts
  std::vector<double> spacing_;
  std::size_t vertex_total_ = 1;
  std::size_t cell_total_ = 1;
};

/// Counterexample pools; members lie in the initial, unsafe and non-target
/// sets respectively.
struct CounterexampleSets {
  std::vector<std::vector<double>> init;
  std::vector<std::vector<double>> unsafe;
  std::vector<std::vector<double>> decrease;

  std::size_t total() const { return init.size() + unsafe.size() + decrease.size(); }
  void append_capped(const CounterexampleSets& extra, std::size_t cap_per_set);
};

struct LossTerms {
  double init = 0;
  double unsafe = 0;
  double decrease = 0;
  double lipschitz = 0;
  double total() const { return init + unsafe + decrease + lipschitz; }
};

/// Empirical loss terms: hinge of V-1 over initial counterexamples, hinge of
/// lambda-V over unsafe ones, sampled one-step expected-decrease hinges with
/// mesh slack, and the layer-product Lipschitz regularizer above the
/// threshold.
LossTerms compute_losses(const nn::Mlp& value, const nn::Mlp& policy,
                         const sys::StochasticSystem& system, const CounterexampleSets& sets,
                         double lambda, const TrainConfig& config, std::uint64_t seed);

/// Certified upper bound on E_w[ V(f(x, pi(x), w)) ]: the noise support is
/// partitioned into partition^dims cells; each cell contributes its exact
/// probability mass times an interval-propagated supremum of V over the
/// image enclosure.
double expected_value_upper(const nn::Mlp& value, const sys::StochasticSystem& system,
                            const nn::Mlp& policy, std::span<const double> grid_vertex,
                            std::size_t partition);

struct VerifyOutcome {
  bool certified = false;
  rasm::Certificate certificate;  // populated when certified
  CounterexampleSets counterexamples;
  double min_margin = 0;                     // over checked decrease vertices
  std::vector<double> min_margin_point;      // vertex attaining it (if any checked)
  std::size_t checked_vertices = 0;
  std::size_t init_cells = 0;
  std::size_t unsafe_cells = 0;
};

/// Formal check of the certificate conditions over the discretization.
/// Decrease is checked at every grid vertex adjacent to a cell that meets a
/// non-target state and over whose adjacent cells V's interval lower bound
/// is at most lambda; initial cells need sup V <= 1 and unsafe cells need
/// inf V >= lambda (interval propagation). Non-softplus certificate heads
/// additionally get a nonnegativity sweep. Cell sweeps run in parallel with
/// an order-independent margin reduction.
VerifyOutcome verify_candidate(const sys::StochasticSystem& system, const nn::Mlp& policy,
                               const nn::Mlp& value, double lambda,
                               const sys::ReachAvoidTask& task, const Discretization& disc,
                               const TrainConfig& config);

struct PretrainResult {
  nn::Mlp policy;
  double mc_estimate = 0;
  bool reached_floor = false;  // best-effort warning flag when false
};

/// Episodic policy-gradient pretraining against a shaped reward
/// (distance-to-target plus unsafe-proximity penalty). Deterministic for a
/// fixed config and seed.
PretrainResult pretrain_policy(const sys::StochasticSystem& system,
                               const sys::ReachAvoidTask& task, const TrainConfig& config);

struct SolveResult {
  bool success = false;
  nn::Mlp policy;
  nn::Mlp value;
  rasm::Certificate certificate;  // valid when success
  double best_margin = 0;
  std::size_t iterations = 0;
  std::size_t schedule_steps = 0;
  std::string failure_reason;
};

struct WarmStart {
  std::optional<nn::Mlp> policy;
  std::optional<nn::Mlp> value;
  std::optional<double> margin_hint;  // last verified minimal margin
};

/// The learner-verifier loop wrapped in the lambda schedule: train against
/// the losses, verify on the grid, append counterexamples, and lower lambda
/// geometrically when a level fails. On success the certificate bound is at
/// least `target_probability`.
SolveResult policy_plus_rasm(const sys::StochasticSystem& system, const sys::ReachAvoidTask& task,
                             double target_probability, const TrainConfig& config,
                             const WarmStart& warm = {});

using ProbabilitySolver = std::function<SolveResult(double target_probability)>;

struct MaxProbResult {
  bool any_success = false;
  double probability = 0;  // highest certified target
  nn::Mlp policy;
  nn::Mlp value;
  rasm::Certificate certificate;
  std::vector<std::pair<double, bool>> probes;  // (target, success) log
  std::string failure_reason;
};

/// Binary search for the largest certifiable probability, reusing the last
/// successful networks as warm starts. The first probe is the bracket top, so
/// an always-succeeding solver returns it immediately.
MaxProbResult max_verified_probability(const sys::StochasticSystem& system,
                                       const sys::ReachAvoidTask& task, double precision,
                                       const TrainConfig& config);

/// Same search against an injected solver (test seam).
MaxProbResult max_verified_probability_with(const ProbabilitySolver& solver, double precision,
                                            const TrainConfig& config);

}  // namespace claps::learnverify
