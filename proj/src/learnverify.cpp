#include "claps/learnverify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <future>
#include <limits>
#include <numeric>
#include <sstream>

#include "claps/util.hpp"

namespace claps::learnverify {

using nn::Gradients;
using nn::Interval;
using nn::Mlp;
using sys::ReachAvoidTask;
using sys::StochasticSystem;

// -- Discretization -------------------------------------------------------------

Discretization::Discretization(const Box& space, double mesh, std::size_t max_vertices)
    : space_(space), mesh_(mesh) {
  if (!(mesh > 0)) throw DomainError("mesh must be positive");
  const std::size_t n = space.dims();
  std::size_t live_dims = 0;
  for (std::size_t d = 0; d < n; ++d)
    if (space.hi[d] > space.lo[d]) ++live_dims;
  if (live_dims == 0) live_dims = 1;
  // Per-dimension spacing h so the farthest point of a cell is within L1
  // distance mesh of a grid vertex: sum_d h_d/2 <= mesh.
  const double h = 2.0 * mesh / double(live_dims);

  vertex_counts_.resize(n);
  cell_counts_.resize(n);
  spacing_.resize(n);
  for (std::size_t d = 0; d < n; ++d) {
    double extent = space.hi[d] - space.lo[d];
    if (extent == 0) {
      vertex_counts_[d] = 1;
      cell_counts_[d] = 1;
      spacing_[d] = 0;
      continue;
    }
    std::size_t steps = std::size_t(std::ceil(extent / h));
    vertex_counts_[d] = steps + 1;
    cell_counts_[d] = steps;
    spacing_[d] = extent / double(steps);
    if (vertex_total_ > max_vertices / vertex_counts_[d])
      throw ResourceError(
          "discretization grid exceeds the memory budget; use a larger mesh (tau)");
    vertex_total_ *= vertex_counts_[d];
  }
  cell_total_ = 1;
  for (std::size_t d = 0; d < n; ++d) cell_total_ *= cell_counts_[d];
}

std::vector<double> Discretization::vertex(std::size_t index) const {
  std::vector<double> x(space_.dims());
  for (std::size_t d = 0; d < space_.dims(); ++d) {
    std::size_t i = index % vertex_counts_[d];
    index /= vertex_counts_[d];
    x[d] = std::min(space_.lo[d] + double(i) * spacing_[d], space_.hi[d]);
  }
  return x;
}

Box Discretization::cell(std::size_t index) const {
  std::vector<double> lo(space_.dims()), hi(space_.dims());
  for (std::size_t d = 0; d < space_.dims(); ++d) {
    std::size_t i = index % cell_counts_[d];
    index /= cell_counts_[d];
    lo[d] = space_.lo[d] + double(i) * spacing_[d];
    hi[d] = spacing_[d] == 0 ? space_.hi[d]
                             : std::min(space_.lo[d] + double(i + 1) * spacing_[d], space_.hi[d]);
  }
  return Box(std::move(lo), std::move(hi));
}

std::vector<std::size_t> Discretization::cells_adjacent_to_vertex(std::size_t vertex_index) const {
  const std::size_t n = space_.dims();
  std::vector<std::size_t> vi(n);
  for (std::size_t d = 0; d < n; ++d) {
    vi[d] = vertex_index % vertex_counts_[d];
    vertex_index /= vertex_counts_[d];
  }
  std::vector<std::size_t> cells;
  std::vector<std::size_t> choice(n, 0);
  while (true) {
    // choice[d] = 0 -> cell index vi[d]-1, 1 -> vi[d]
    bool valid = true;
    std::size_t cell = 0, mult = 1;
    for (std::size_t d = 0; d < n && valid; ++d) {
      std::size_t ci;
      if (cell_counts_[d] == 1) {
        ci = 0;
        if (choice[d] == 1) valid = false;  // single slab: one choice only
      } else if (choice[d] == 0) {
        if (vi[d] == 0) valid = false;
        else ci = vi[d] - 1;
      } else {
        if (vi[d] >= cell_counts_[d]) valid = false;
        else ci = vi[d];
      }
      if (valid) {
        cell += ci * mult;
        mult *= cell_counts_[d];
      }
    }
    if (valid) cells.push_back(cell);
    std::size_t d = 0;
    for (; d < n; ++d) {
      if (choice[d] == 0) {
        choice[d] = 1;
        break;
      }
      choice[d] = 0;
    }
    if (d == n) break;
  }
  std::sort(cells.begin(), cells.end());
  cells.erase(std::unique(cells.begin(), cells.end()), cells.end());
  return cells;
}

std::size_t Discretization::nearest_vertex(std::span<const double> x) const {
  std::size_t index = 0, mult = 1;
  for (std::size_t d = 0; d < space_.dims(); ++d) {
    std::size_t i = 0;
    if (spacing_[d] > 0) {
      double pos = (x[d] - space_.lo[d]) / spacing_[d];
      long r = std::lround(pos);
      i = std::size_t(std::clamp<long>(r, 0, long(vertex_counts_[d] - 1)));
    }
    index += i * mult;
    mult *= vertex_counts_[d];
  }
  return index;
}

// -- Counterexample sets ----------------------------------------------------------

void CounterexampleSets::append_capped(const CounterexampleSets& extra, std::size_t cap) {
  auto take = [cap](std::vector<std::vector<double>>& dst,
                    const std::vector<std::vector<double>>& src) {
    for (std::size_t i = 0; i < src.size() && i < cap; ++i) dst.push_back(src[i]);
  };
  take(init, extra.init);
  take(unsafe, extra.unsafe);
  take(decrease, extra.decrease);
}

// -- Expected value upper bound ----------------------------------------------------

namespace {

/// Iterates the noise partition cells (deterministic dims use one cell).
template <typename Fn>
void for_each_noise_cell(const sys::TriangularNoise& noise, std::size_t partition, Fn&& fn) {
  const std::size_t p = noise.dims();
  std::vector<std::size_t> counts(p);
  for (std::size_t d = 0; d < p; ++d) counts[d] = noise.scales()[d] == 0 ? 1 : partition;
  std::vector<std::size_t> idx(p, 0);
  std::vector<double> lo(p), hi(p);
  while (true) {
    for (std::size_t d = 0; d < p; ++d) {
      double c = noise.scales()[d];
      if (c == 0) {
        lo[d] = 0;
        hi[d] = 0;
      } else {
        double w = 2 * c / double(counts[d]);
        lo[d] = -c + double(idx[d]) * w;
        hi[d] = idx[d] + 1 == counts[d] ? c : -c + double(idx[d] + 1) * w;
      }
    }
    fn(Interval(lo, hi));
    std::size_t d = 0;
    for (; d < p; ++d) {
      if (++idx[d] < counts[d]) break;
      idx[d] = 0;
    }
    if (d == p) break;
  }
}

}  // namespace

double expected_value_upper(const Mlp& value, const StochasticSystem& system, const Mlp& policy,
                            std::span<const double> grid_vertex, std::size_t partition) {
  if (partition < 1) throw DomainError("noise partition resolution must be >= 1");
  std::vector<double> u = policy.forward(grid_vertex);
  double acc = 0;
  for_each_noise_cell(system.noise(), partition, [&](const Interval& cell) {
    double mass = system.noise().mass(cell);
    if (mass <= 0) return;
    Interval image = system.step_enclosure(grid_vertex, u, cell);
    acc += mass * value.ibp_forward(image).hi[0];
  });
  return acc;
}

// -- Losses -------------------------------------------------------------------------

LossTerms compute_losses(const Mlp& value, const Mlp& policy, const StochasticSystem& system,
                         const CounterexampleSets& sets, double lambda, const TrainConfig& config,
                         std::uint64_t seed) {
  LossTerms terms;
  for (const auto& x : sets.init)
    terms.init = std::max(terms.init, std::max(value.forward(x)[0] - 1.0, 0.0));
  for (const auto& x : sets.unsafe)
    terms.unsafe = std::max(terms.unsafe, std::max(lambda - value.forward(x)[0], 0.0));

  if (!sets.decrease.empty()) {
    const double tau_k =
        config.mesh * value.lipschitz_bound() *
        (system.lipschitz_f() * (policy.lipschitz_bound() + 1) + 1);
    auto rng = make_rng(seed, 0xdec);
    double acc = 0;
    for (const auto& x : sets.decrease) {
      std::vector<double> u = policy.forward(x);
      double mean = 0;
      for (std::size_t i = 0; i < config.noise_samples; ++i) {
        std::vector<double> w = system.noise().sample(rng);
        mean += value.forward(system.step(x, u, w))[0];
      }
      mean /= double(config.noise_samples);
      acc += std::max(mean - value.forward(x)[0] + tau_k, 0.0);
    }
    terms.decrease = acc / double(sets.decrease.size());
  }

  double lip_excess_v = std::max(value.lipschitz_bound() - config.lipschitz_threshold, 0.0);
  double lip_excess_pi = std::max(policy.lipschitz_bound() - config.lipschitz_threshold, 0.0);
  terms.lipschitz = config.lipschitz_weight * (lip_excess_v + lip_excess_pi);
  return terms;
}

// -- Adam ---------------------------------------------------------------------------

namespace {

class Adam {
 public:
  Adam(const Mlp& net, double lr) : lr_(lr), m_(net.zero_gradients()), v_(net.zero_gradients()) {}

  void step(Mlp& net, const Gradients& grad) {
    ++t_;
    Gradients update = net.zero_gradients();
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    double bc1 = 1 - std::pow(b1, double(t_));
    double bc2 = 1 - std::pow(b2, double(t_));
    for (std::size_t l = 0; l < update.layers.size(); ++l) {
      auto upd = [&](std::vector<double>& m, std::vector<double>& v, const std::vector<double>& g,
                     std::vector<double>& out) {
        for (std::size_t k = 0; k < g.size(); ++k) {
          m[k] = b1 * m[k] + (1 - b1) * g[k];
          v[k] = b2 * v[k] + (1 - b2) * g[k] * g[k];
          out[k] = -lr_ * (m[k] / bc1) / (std::sqrt(v[k] / bc2) + eps);
        }
      };
      upd(m_.layers[l].w, v_.layers[l].w, grad.layers[l].w, update.layers[l].w);
      upd(m_.layers[l].b, v_.layers[l].b, grad.layers[l].b, update.layers[l].b);
    }
    net.apply_update(update);
  }

 private:
  double lr_;
  long t_ = 0;
  Gradients m_, v_;
};

/// Subgradient of the layer-product column-norm bound above the threshold.
void add_lipschitz_gradient(const Mlp& net, double weight, double threshold, Gradients& grads) {
  const auto& layers = net.layers();
  std::vector<double> col_norms(layers.size());
  std::vector<std::size_t> argmax_col(layers.size());
  double product = 1;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    double best = 0;
    std::size_t best_c = 0;
    for (std::size_t c = 0; c < layers[l].cols; ++c) {
      double s = 0;
      for (std::size_t r = 0; r < layers[l].rows; ++r) s += std::abs(layers[l].at(r, c));
      if (s > best) {
        best = s;
        best_c = c;
      }
    }
    col_norms[l] = best;
    argmax_col[l] = best_c;
    product *= best;
  }
  if (net.head() == nn::OutputHead::TanhBox) {
    double half = 0;
    for (std::size_t i = 0; i < net.action_box().dims(); ++i)
      half = std::max(half, 0.5 * (net.action_box().hi[i] - net.action_box().lo[i]));
    product *= half;
  }
  if (product <= threshold) return;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (col_norms[l] <= 0) return;  // zero layer: product is zero anyway
  }
  for (std::size_t l = 0; l < layers.size(); ++l) {
    // d(product)/d|W[r, c*]| = product / col_norm_l
    double factor = weight * product / col_norms[l];
    std::size_t c = argmax_col[l];
    for (std::size_t r = 0; r < layers[l].rows; ++r) {
      double w = layers[l].at(r, c);
      double sign = w > 0 ? 1.0 : (w < 0 ? -1.0 : 0.0);
      grads.layers[l].w[r * layers[l].cols + c] += factor * sign;
    }
  }
}

struct Batches {
  std::vector<std::size_t> init, unsafe, decrease;
};

Batches pick_batches(const CounterexampleSets& sets, std::size_t batch, std::mt19937_64& rng) {
  auto pick = [&rng, batch](std::size_t n) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    if (n > batch) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(batch);
    }
    return idx;
  };
  return Batches{pick(sets.init.size()), pick(sets.unsafe.size()), pick(sets.decrease.size())};
}

/// One optimizer step for both networks on the sampled batches.
void train_step(Mlp& value, Mlp& policy, Adam& value_opt, Adam& policy_opt,
                const StochasticSystem& system, const CounterexampleSets& sets, double lambda,
                const TrainConfig& config, std::mt19937_64& rng) {
  Gradients value_grads = value.zero_gradients();
  Gradients policy_grads = policy.zero_gradients();
  Batches batches = pick_batches(sets, config.batch_size, rng);

  // L_init: hinge at the worst initial point in the batch
  double worst = 0;
  const std::vector<double>* worst_x = nullptr;
  for (std::size_t i : batches.init) {
    double v = value.forward(sets.init[i])[0];
    if (v - 1.0 > worst) {
      worst = v - 1.0;
      worst_x = &sets.init[i];
    }
  }
  if (worst_x) {
    nn::Tape tape = value.forward_tape(*worst_x);
    std::vector<double> dout = {1.0};
    value_grads.add(value.backward(tape, dout));
  }

  // L_unsafe: hinge at the worst unsafe point in the batch
  worst = 0;
  worst_x = nullptr;
  for (std::size_t i : batches.unsafe) {
    double v = value.forward(sets.unsafe[i])[0];
    if (lambda - v > worst) {
      worst = lambda - v;
      worst_x = &sets.unsafe[i];
    }
  }
  if (worst_x) {
    nn::Tape tape = value.forward_tape(*worst_x);
    std::vector<double> dout = {-1.0};
    value_grads.add(value.backward(tape, dout));
  }

  // L_decrease: mean hinge over the batch of sampled one-step expectations
  if (!batches.decrease.empty()) {
    const double tau_k = config.mesh * value.lipschitz_bound() *
                         (system.lipschitz_f() * (policy.lipschitz_bound() + 1) + 1);
    const double inv_batch = 1.0 / double(batches.decrease.size());
    const double inv_samples = 1.0 / double(config.noise_samples);
    for (std::size_t i : batches.decrease) {
      const auto& x = sets.decrease[i];
      nn::Tape pi_tape = policy.forward_tape(x);
      const std::vector<double>& u = pi_tape.output;
      std::vector<std::vector<double>> draws(config.noise_samples);
      std::vector<nn::Tape> next_tapes(config.noise_samples);
      double mean = 0;
      for (std::size_t s = 0; s < config.noise_samples; ++s) {
        draws[s] = system.noise().sample(rng);
        next_tapes[s] = value.forward_tape(system.step(x, u, draws[s]));
        mean += next_tapes[s].output[0];
      }
      mean *= inv_samples;
      nn::Tape here_tape = value.forward_tape(x);
      if (mean - here_tape.output[0] + tau_k <= 0) continue;  // inactive hinge
      // d/dV at next states (+), at x (-)
      std::vector<double> du_total(u.size(), 0.0);
      for (std::size_t s = 0; s < config.noise_samples; ++s) {
        std::vector<double> dout = {inv_batch * inv_samples};
        std::vector<double> dnext;
        value_grads.add(value.backward(next_tapes[s], dout, &dnext));
        system.backprop_action(x, u, draws[s],
                               std::span<const double>(dnext),
                               std::span<double>(du_total));
      }
      // du_total already carries the 1/(batch * samples) factor through dnext
      std::vector<double> dout_here = {-inv_batch};
      value_grads.add(value.backward(here_tape, dout_here));
      policy_grads.add(policy.backward(pi_tape, du_total));
    }
  }

  add_lipschitz_gradient(value, config.lipschitz_weight, config.lipschitz_threshold, value_grads);
  add_lipschitz_gradient(policy, config.lipschitz_weight, config.lipschitz_threshold,
                         policy_grads);

  value_opt.step(value, value_grads);
  policy_opt.step(policy, policy_grads);
}

}  // namespace

// -- Verifier ------------------------------------------------------------------------

namespace {

struct Violation {
  std::vector<double> point;
  double magnitude;
  std::size_t index;  // grid index, for deterministic ties
};

void sort_violations(std::vector<Violation>& v) {
  std::sort(v.begin(), v.end(), [](const Violation& a, const Violation& b) {
    if (a.magnitude != b.magnitude) return a.magnitude > b.magnitude;
    return a.index < b.index;
  });
}

std::vector<std::vector<double>> take_points(std::vector<Violation> v, std::size_t cap) {
  sort_violations(v);
  if (v.size() > cap) v.resize(cap);
  std::vector<std::vector<double>> out;
  out.reserve(v.size());
  for (auto& e : v) out.push_back(std::move(e.point));
  return out;
}

template <typename Fn>
void parallel_chunks(std::size_t total, Fn&& fn) {
  const unsigned workers = std::max(1u, std::min(thread_count(), unsigned((total + 1023) / 1024)));
  if (workers == 1) {
    fn(0, std::size_t(0), total);
    return;
  }
  std::vector<std::future<void>> futures;
  const std::size_t chunk = (total + workers - 1) / workers;
  for (unsigned w = 0; w < workers; ++w) {
    std::size_t begin = w * chunk, end = std::min(total, begin + chunk);
    if (begin >= end) break;
    futures.push_back(std::async(std::launch::async, [&fn, w, begin, end] { fn(w, begin, end); }));
  }
  for (auto& f : futures) f.get();
}

}  // namespace

VerifyOutcome verify_candidate(const StochasticSystem& system, const Mlp& policy, const Mlp& value,
                               double lambda, const ReachAvoidTask& task,
                               const Discretization& disc, const TrainConfig& config) {
  if (!(lambda > 1)) throw DomainError("lambda must exceed 1");
  VerifyOutcome out;

  const double lip_v = value.lipschitz_bound();
  const double lip_pi = policy.lipschitz_bound();
  const double lip_f = system.lipschitz_f();
  const double slack_k = lip_v * (lip_f * (lip_pi + 1) + 1);
  const double tau = disc.mesh();

  const std::size_t cells = disc.cell_count();
  const unsigned workers = thread_count();

  // Cell sweep: interval bounds of V per cell, initial/unsafe/nonnegativity
  // checks, plus the per-cell data the decrease trigger needs.
  std::vector<double> cell_lower(cells);
  std::vector<std::uint8_t> cell_nontarget(cells);
  std::vector<std::vector<Violation>> init_v(workers), unsafe_v(workers);
  std::vector<std::size_t> init_count(workers, 0), unsafe_count(workers, 0);
  const bool check_nonneg = value.head() != nn::OutputHead::Softplus;

  parallel_chunks(cells, [&](unsigned w, std::size_t begin, std::size_t end) {
    for (std::size_t ci = begin; ci < end; ++ci) {
      Box cell = disc.cell(ci);
      Interval cell_iv(cell.lo, cell.hi);
      Interval bounds = value.ibp_forward(cell_iv);
      cell_lower[ci] = bounds.lo[0];
      cell_nontarget[ci] = task.target.covers_box(cell) ? 0 : 1;

      bool meets_init = false;
      for (const auto& b : task.init.boxes())
        if (b.intersects(cell)) {
          meets_init = true;
          break;
        }
      if (meets_init) {
        ++init_count[w];
        if (bounds.hi[0] > 1.0)
          init_v[w].push_back({cell.center(), bounds.hi[0] - 1.0, ci});
      }
      bool meets_unsafe = false;
      for (const auto& b : task.unsafe.boxes())
        if (b.intersects(cell)) {
          meets_unsafe = true;
          break;
        }
      if (meets_unsafe) {
        ++unsafe_count[w];
        if (bounds.lo[0] < lambda)
          unsafe_v[w].push_back({cell.center(), lambda - bounds.lo[0], ci});
      }
      if (check_nonneg && bounds.lo[0] < 0.0)
        unsafe_v[w].push_back({cell.center(), -bounds.lo[0], ci});
    }
  });

  // Vertex sweep: decrease condition with mesh slack at triggered vertices.
  const std::size_t verts = disc.vertex_count();
  std::vector<std::vector<Violation>> dec_v(workers);
  std::vector<double> min_margin(workers, std::numeric_limits<double>::infinity());
  std::vector<std::size_t> min_margin_vertex(workers, SIZE_MAX);
  std::vector<std::size_t> checked(workers, 0);

  parallel_chunks(verts, [&](unsigned w, std::size_t begin, std::size_t end) {
    for (std::size_t vi = begin; vi < end; ++vi) {
      bool touches_nontarget = false;
      double lower = std::numeric_limits<double>::infinity();
      for (std::size_t ci : disc.cells_adjacent_to_vertex(vi)) {
        touches_nontarget = touches_nontarget || cell_nontarget[ci];
        lower = std::min(lower, cell_lower[ci]);
      }
      if (!touches_nontarget || lower > lambda) continue;
      ++checked[w];
      std::vector<double> x = disc.vertex(vi);
      double here = value.forward(x)[0];
      double expect = expected_value_upper(value, system, policy, x, config.noise_partition);
      double margin = here - tau * slack_k - expect;
      if (margin < min_margin[w]) {
        min_margin[w] = margin;
        min_margin_vertex[w] = vi;
      }
      if (margin <= 0) dec_v[w].push_back({std::move(x), -margin, vi});
    }
  });

  auto merge = [](std::vector<std::vector<Violation>>& per_worker) {
    std::vector<Violation> all;
    for (auto& v : per_worker)
      for (auto& e : v) all.push_back(std::move(e));
    return all;
  };
  std::vector<Violation> init_all = merge(init_v);
  std::vector<Violation> unsafe_all = merge(unsafe_v);
  std::vector<Violation> dec_all = merge(dec_v);

  out.init_cells = std::accumulate(init_count.begin(), init_count.end(), std::size_t(0));
  out.unsafe_cells = std::accumulate(unsafe_count.begin(), unsafe_count.end(), std::size_t(0));
  out.checked_vertices = std::accumulate(checked.begin(), checked.end(), std::size_t(0));
  out.min_margin = std::numeric_limits<double>::infinity();
  for (unsigned w = 0; w < workers; ++w) {
    if (min_margin[w] < out.min_margin) {
      out.min_margin = min_margin[w];
      if (min_margin_vertex[w] != SIZE_MAX) out.min_margin_point = disc.vertex(min_margin_vertex[w]);
    }
  }

  if (init_all.empty() && unsafe_all.empty() && dec_all.empty()) {
    out.certified = true;
    // A fully pruned decrease sweep leaves an infinite margin; the extraction
    // clamps delta below lambda.
    double margin = std::isfinite(out.min_margin) ? out.min_margin : lambda;
    out.certificate = rasm::Certificate::from_verification(
        lambda, margin, tau, lip_v, lip_f, lip_pi, system.max_step());
    return out;
  }
  out.counterexamples.init = take_points(std::move(init_all), config.max_counterexamples);
  out.counterexamples.unsafe = take_points(std::move(unsafe_all), config.max_counterexamples);
  out.counterexamples.decrease = take_points(std::move(dec_all), config.max_counterexamples);
  return out;
}

// -- Pretraining -----------------------------------------------------------------------

namespace {

double shaped_reward(const ReachAvoidTask& task, std::span<const double> x) {
  double d_goal = l1_distance(task.target, x);
  double r = -d_goal;
  if (!task.unsafe.is_empty()) {
    double d_unsafe = l1_distance(task.unsafe, x);
    r -= 4.0 * std::max(0.0, 1.0 - d_unsafe / 0.1);
  }
  return r;
}

std::vector<std::size_t> net_dims(std::size_t in, std::size_t out, const TrainConfig& config) {
  std::vector<std::size_t> dims = {in};
  for (std::size_t i = 0; i < config.hidden_layers; ++i) dims.push_back(config.hidden_width);
  dims.push_back(out);
  return dims;
}

}  // namespace

PretrainResult pretrain_policy(const StochasticSystem& system, const ReachAvoidTask& task,
                               const TrainConfig& config) {
  const std::size_t n = system.state_space().dims();
  const std::size_t m = system.action_space().dims();
  Mlp policy(net_dims(n, m, config), nn::OutputHead::TanhBox, mix_seed(config.seed, 0x9019),
             &system.action_space());
  Adam opt(policy, config.learning_rate);

  const double sigma = config.pretrain_sigma;
  const double discount = 0.98;
  auto rng = make_rng(config.seed, 0x9e7);

  Mlp best = policy;
  double best_mc = -1;
  bool reached = false;

  auto evaluate = [&](const Mlp& net) {
    return sys::mc_reach_avoid(system, sys::policy_from_net(net), task, config.pretrain_horizon,
                               200, mix_seed(config.seed, 0xe7a))
        .estimate;
  };

  std::size_t episodes_done = 0;
  while (episodes_done < config.pretrain_episodes) {
    // one batch of rollouts with Gaussian exploration on the squashed action
    struct Step {
      nn::Tape tape;
      std::vector<double> noise_dir;  // (a - mean)
      double reward;
    };
    std::vector<std::vector<Step>> batch;
    for (std::size_t b = 0; b < config.pretrain_batch && episodes_done < config.pretrain_episodes;
         ++b, ++episodes_done) {
      std::vector<Step> episode;
      std::vector<double> x = task.init.sample(rng);
      std::normal_distribution<double> gauss(0.0, sigma);
      for (std::size_t t = 0; t < config.pretrain_horizon; ++t) {
        nn::Tape tape = policy.forward_tape(x);
        std::vector<double> a(m);
        std::vector<double> dir(m);
        for (std::size_t d = 0; d < m; ++d) {
          dir[d] = gauss(rng);
          a[d] = tape.output[d] + dir[d];
        }
        std::vector<double> w = system.noise().sample(rng);
        std::vector<double> next = system.step(x, a, w);
        double r = shaped_reward(task, next);
        bool hit_target = task.target.contains(next);
        bool hit_unsafe = task.unsafe.contains(next);
        if (hit_target) r += 50.0;
        if (hit_unsafe) r -= 50.0;
        episode.push_back({std::move(tape), std::move(dir), r});
        x = std::move(next);
        if (hit_target || hit_unsafe) break;
      }
      batch.push_back(std::move(episode));
    }

    // returns-to-go, batch-normalized advantages
    std::vector<double> returns;
    for (auto& ep : batch) {
      double g = 0;
      for (std::size_t t = ep.size(); t-- > 0;) {
        g = ep[t].reward + discount * g;
        ep[t].reward = g;  // reuse as return
        returns.push_back(g);
      }
    }
    if (returns.empty()) continue;
    double mean = std::accumulate(returns.begin(), returns.end(), 0.0) / double(returns.size());
    double var = 0;
    for (double g : returns) var += (g - mean) * (g - mean);
    double stdev = std::sqrt(var / double(returns.size())) + 1e-6;

    Gradients grads = policy.zero_gradients();
    double scale = 1.0 / double(batch.size());
    for (auto& ep : batch) {
      for (auto& st : ep) {
        double adv = (st.reward - mean) / stdev;
        std::vector<double> dout(m);
        for (std::size_t d = 0; d < m; ++d)
          dout[d] = -scale * adv * st.noise_dir[d] / (sigma * sigma);  // ascent
        grads.add(policy.backward(st.tape, dout));
      }
    }
    opt.step(policy, grads);

    if (episodes_done % (config.pretrain_batch * 8) < config.pretrain_batch) {
      double mc = evaluate(policy);
      if (mc > best_mc) {
        best_mc = mc;
        best = policy;
      }
      if (mc >= config.pretrain_floor) {
        reached = true;
        break;
      }
    }
  }
  if (!reached) {
    double mc = evaluate(policy);
    if (mc > best_mc) {
      best_mc = mc;
      best = policy;
    }
    reached = best_mc >= config.pretrain_floor;
  }
  return PretrainResult{std::move(best), best_mc, reached};
}

// -- Policy + certificate loop ------------------------------------------------------------

namespace {

/// Supervised warm start for the certificate net: small near the target,
/// about one on the initial set, above lambda near the unsafe set.
Mlp fit_value_shape(const StochasticSystem& system, const ReachAvoidTask& task, double lambda,
                    const TrainConfig& config) {
  const std::size_t n = system.state_space().dims();
  Mlp value(net_dims(n, 1, config), nn::OutputHead::Softplus, mix_seed(config.seed, 0x7a1));
  Adam opt(value, 1e-2);
  auto rng = make_rng(config.seed, 0xf17);

  double far = 0;
  for (const auto& b : task.init.boxes()) {
    double d = l1_distance(task.target, b.center());
    far = std::max(far, d);
  }
  if (far <= 0) far = 1.0;
  const double slope = 0.55 / far;  // init sits near 0.85

  const std::size_t steps = 400, batch = 128;
  for (std::size_t s = 0; s < steps; ++s) {
    Gradients grads = value.zero_gradients();
    for (std::size_t i = 0; i < batch; ++i) {
      std::vector<double> x = system.state_space().sample(rng);
      double y = 0.3 + slope * l1_distance(task.target, x);
      if (!task.unsafe.is_empty()) {
        double du = l1_distance(task.unsafe, x);
        y += 1.4 * lambda * std::max(0.0, 1.0 - du / 0.2);
      }
      y = std::min(y, 1.6 * lambda);
      nn::Tape tape = value.forward_tape(x);
      double err = tape.output[0] - y;
      std::vector<double> dout = {2.0 * err / double(batch)};
      grads.add(value.backward(tape, dout));
    }
    opt.step(value, grads);
  }
  return value;
}

CounterexampleSets seed_counterexamples(const StochasticSystem& system, const ReachAvoidTask& task,
                                        const TrainConfig& config) {
  CounterexampleSets sets;
  auto rng = make_rng(config.seed, 0x5eed);
  auto sample_region = [&rng](const Region& region, std::size_t count,
                              std::vector<std::vector<double>>& out) {
    if (region.is_empty()) return;
    for (std::size_t i = 0; i < count; ++i) out.push_back(region.sample(rng));
  };
  sample_region(task.init, 128, sets.init);
  sample_region(task.unsafe, 256, sets.unsafe);
  for (std::size_t i = 0; i < 1024;) {
    std::vector<double> x = system.state_space().sample(rng);
    if (task.target.contains(x)) continue;
    sets.decrease.push_back(std::move(x));
    ++i;
  }
  return sets;
}

double initial_lambda(double target_probability, const std::optional<double>& margin_hint,
                      double lip_v_est, double max_step) {
  double fallback = std::min(1.0 / (1.0 - target_probability), 1e6);
  if (!margin_hint || !(*margin_hint > 0)) return fallback;
  // smallest lambda on the decay ladder whose estimated bound still clears
  // the target, exploiting the gamma^N factor
  double best = fallback;
  for (int k = 20; k >= 0; --k) {
    double lambda = 1 + (fallback - 1) * std::pow(0.7, double(k));
    if (!(lambda > 1)) continue;
    double gamma = std::max(1e-9, 1.0 - std::min(*margin_hint, lambda) / lambda);
    double bound = rasm::compute_bound(lambda, gamma, std::max(lip_v_est, 1e-6), max_step).bound;
    if (bound >= target_probability) {
      best = lambda;
      break;
    }
  }
  return best;
}

}  // namespace

SolveResult policy_plus_rasm(const StochasticSystem& system, const ReachAvoidTask& task,
                             double target_probability, const TrainConfig& config,
                             const WarmStart& warm) {
  if (!(target_probability > 0 && target_probability < 1))
    throw DomainError("target probability must lie in (0, 1)");

  const std::string system_hash =
      sha256_hex(system.describe() + "|init " + task.init.describe() + "|target " +
                 task.target.describe() + "|unsafe " + task.unsafe.describe());

  SolveResult result;

  // Initial-in-target tasks hold with probability one at step zero.
  if (task.target.covers(task.init)) {
    result.success = true;
    result.policy = warm.policy ? *warm.policy
                                : Mlp(net_dims(system.state_space().dims(),
                                               system.action_space().dims(), config),
                                      nn::OutputHead::TanhBox, mix_seed(config.seed, 0x9019),
                                      &system.action_space());
    result.value = warm.value ? *warm.value
                              : Mlp(net_dims(system.state_space().dims(), 1, config),
                                    nn::OutputHead::Softplus, mix_seed(config.seed, 0x7a1));
    result.certificate = rasm::Certificate::trivial_certificate(system_hash);
    return result;
  }

  const auto deadline = std::chrono::steady_clock::now() +
                        std::chrono::duration<double>(config.timeout_seconds);
  auto timed_out = [&deadline] { return std::chrono::steady_clock::now() >= deadline; };

  Mlp policy = warm.policy ? *warm.policy : pretrain_policy(system, task, config).policy;
  double lambda = initial_lambda(target_probability, warm.margin_hint,
                                 warm.value ? warm.value->lipschitz_bound()
                                            : config.lipschitz_threshold,
                                 system.max_step());
  Mlp value = warm.value ? *warm.value : fit_value_shape(system, task, lambda, config);

  Discretization disc(system.state_space(), config.mesh, config.max_grid_vertices);
  CounterexampleSets sets = seed_counterexamples(system, task, config);

  std::ofstream log;
  if (!config.csv_log_path.empty()) {
    log.open(config.csv_log_path, std::ios::trunc);
    log << "schedule,lambda,iteration,loss_init,loss_unsafe,loss_decrease,loss_lipschitz,"
           "margin,counterexamples\n";
  }

  Adam value_opt(value, config.learning_rate);
  Adam policy_opt(policy, config.learning_rate);
  auto rng = make_rng(config.seed, 0x11ab);

  result.best_margin = -std::numeric_limits<double>::infinity();
  const std::size_t schedule_budget = std::max<std::size_t>(config.min_schedule_steps, 1);

  for (std::size_t schedule = 0; schedule < schedule_budget; ++schedule) {
    for (std::size_t iter = 0; iter < config.max_iterations; ++iter) {
      if (timed_out()) {
        result.failure_reason = "timeout";
        result.schedule_steps = schedule;
        return result;
      }
      for (std::size_t s = 0; s < config.steps_per_iteration; ++s) {
        train_step(value, policy, value_opt, policy_opt, system, sets, lambda, config, rng);
        if (s % 64 == 63 &&
            compute_losses(value, policy, system, sets, lambda, config, config.seed).total() == 0)
          break;
      }
      ++result.iterations;

      VerifyOutcome outcome = verify_candidate(system, policy, value, lambda, task, disc, config);
      if (std::isfinite(outcome.min_margin))
        result.best_margin = std::max(result.best_margin, outcome.min_margin);
      if (log.is_open()) {
        LossTerms lt = compute_losses(value, policy, system, sets, lambda, config, config.seed);
        log << schedule << ',' << format_double(lambda) << ',' << iter << ','
            << format_double(lt.init) << ',' << format_double(lt.unsafe) << ','
            << format_double(lt.decrease) << ',' << format_double(lt.lipschitz) << ','
            << format_double(outcome.min_margin) << ',' << outcome.counterexamples.total()
            << '\n'
            << std::flush;
      }

      if (outcome.certified) {
        outcome.certificate.system_hash = system_hash;
        if (outcome.certificate.bound >= target_probability) {
          result.success = true;
          result.policy = std::move(policy);
          result.value = std::move(value);
          result.certificate = outcome.certificate;
          result.schedule_steps = schedule;
          return result;
        }
        // Certified but short of the target: focus training where the margin
        // is worst and keep going.
        if (!outcome.min_margin_point.empty())
          sets.decrease.push_back(outcome.min_margin_point);
      } else {
        sets.append_capped(outcome.counterexamples, config.max_counterexamples);
      }
    }
    lambda = 1 + (lambda - 1) * config.lambda_decay;
    result.schedule_steps = schedule + 1;
  }
  result.failure_reason = "iteration budget exhausted";
  return result;
}

MaxProbResult max_verified_probability_with(const ProbabilitySolver& solver, double precision,
                                            const TrainConfig& config) {
  if (!(precision > 0 && precision < 0.5)) throw DomainError("precision must lie in (0, 0.5)");
  MaxProbResult result;
  double lo = 0.0;
  double hi = config.bracket_high;

  auto probe = [&](double p) {
    SolveResult s = solver(p);
    result.probes.emplace_back(p, s.success);
    if (s.success) {
      result.any_success = true;
      result.probability = p;
      result.policy = std::move(s.policy);
      result.value = std::move(s.value);
      result.certificate = s.certificate;
    }
    return s.success;
  };

  if (probe(hi)) return result;
  std::size_t probes_used = 1;
  while (probes_used < config.max_probes && hi - lo > precision) {
    double mid = 0.5 * (lo + hi);
    if (probe(mid))
      lo = mid;
    else
      hi = mid;
    ++probes_used;
  }
  if (!result.any_success) {
    result.probability = 0;
    result.failure_reason = "no probe produced a certificate";
  }
  return result;
}

MaxProbResult max_verified_probability(const StochasticSystem& system, const ReachAvoidTask& task,
                                       double precision, const TrainConfig& config) {
  WarmStart warm;
  ProbabilitySolver solver = [&](double p) {
    SolveResult s = policy_plus_rasm(system, task, p, config, warm);
    if (s.success) {
      warm.policy = s.policy;
      warm.value = s.value;
      if (!s.certificate.trivial) warm.margin_hint = s.certificate.min_margin;
    }
    return s;
  };
  return max_verified_probability_with(solver, precision, config);
}

}  // namespace claps::learnverify
