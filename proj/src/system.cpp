#include "claps/system.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <sstream>

#include "claps/util.hpp"

namespace claps::sys {

// -- TriangularNoise -----------------------------------------------------------

TriangularNoise::TriangularNoise(std::vector<double> scales) : scales_(std::move(scales)) {
  if (scales_.empty()) throw DomainError("noise needs at least one dimension");
  for (double c : scales_)
    if (c < 0 || !std::isfinite(c)) throw DomainError("noise scale must be finite and >= 0");
}

TriangularNoise TriangularNoise::none(std::size_t dims) {
  return TriangularNoise(std::vector<double>(dims, 0.0));
}

bool TriangularNoise::is_deterministic() const {
  return std::all_of(scales_.begin(), scales_.end(), [](double c) { return c == 0.0; });
}

double TriangularNoise::cdf(std::size_t dim, double z) const {
  double c = scales_.at(dim);
  if (c == 0.0) return z < 0 ? 0.0 : 1.0;  // point mass at 0
  if (z <= -c) return 0.0;
  if (z >= c) return 1.0;
  if (z <= 0) {
    double t = z + c;
    return t * t / (2 * c * c);
  }
  double t = c - z;
  return 1.0 - t * t / (2 * c * c);
}

double TriangularNoise::mass(const nn::Interval& cell) const {
  if (cell.dims() != dims()) throw DomainError("noise cell dimension mismatch");
  double m = 1.0;
  for (std::size_t d = 0; d < dims(); ++d) {
    if (scales_[d] == 0.0) {
      // point mass: the interval either contains 0 or it does not
      m *= (cell.lo[d] <= 0.0 && cell.hi[d] >= 0.0) ? 1.0 : 0.0;
    } else {
      m *= cdf(d, cell.hi[d]) - cdf(d, cell.lo[d]);
    }
  }
  return m;
}

std::vector<double> TriangularNoise::sample(std::mt19937_64& rng) const {
  std::vector<double> w(dims());
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (std::size_t d = 0; d < dims(); ++d) {
    double c = scales_[d];
    if (c == 0.0) {
      w[d] = 0.0;
      continue;
    }
    // inverse-CDF sampling
    double u = uni(rng);
    w[d] = u < 0.5 ? -c + c * std::sqrt(2 * u) : c - c * std::sqrt(2 * (1 - u));
  }
  return w;
}

nn::Interval TriangularNoise::support() const {
  std::vector<double> lo(dims()), hi(dims());
  for (std::size_t d = 0; d < dims(); ++d) {
    lo[d] = -scales_[d];
    hi[d] = scales_[d];
  }
  return nn::Interval(std::move(lo), std::move(hi));
}

// -- StochasticSystem ----------------------------------------------------------

std::vector<double> StochasticSystem::step(std::span<const double> x, std::span<const double> u,
                                           std::span<const double> w) const {
  std::vector<double> next = step_raw(x, u, w);
  state_space_.clamp(next);
  return next;
}

// -- ClippedAffineSystem -------------------------------------------------------

namespace {

double max_step_clipped_affine(const Box& state_space, const TriangularNoise& noise,
                               double drift_scale, double noise_scale) {
  double delta = 0;
  for (std::size_t d = 0; d < state_space.dims(); ++d)
    delta += drift_scale * 1.0 + noise_scale * noise.scales()[d];
  return delta;
}

}  // namespace

ClippedAffineSystem::ClippedAffineSystem(Box state_space, Box action_space, TriangularNoise noise,
                                         double drift_scale, double noise_scale)
    : StochasticSystem(state_space, action_space, noise,
                       /*lipschitz_f=*/std::max({1.0, drift_scale, noise_scale}),
                       max_step_clipped_affine(state_space, noise, drift_scale, noise_scale)),
      drift_scale_(drift_scale),
      noise_scale_(noise_scale) {
  if (state_space.dims() != action_space.dims())
    throw DomainError("clipped-affine system needs matching state/action dimensions");
  if (noise.dims() != state_space.dims())
    throw DomainError("clipped-affine system needs matching noise dimensions");
  if (drift_scale <= 0) throw DomainError("drift scale must be positive");
}

std::vector<double> ClippedAffineSystem::step_raw(std::span<const double> x,
                                                  std::span<const double> u,
                                                  std::span<const double> w) const {
  std::vector<double> next(x.begin(), x.end());
  for (std::size_t d = 0; d < next.size(); ++d)
    next[d] += drift_scale_ * std::clamp(u[d], -1.0, 1.0) + noise_scale_ * w[d];
  return next;
}

nn::Interval ClippedAffineSystem::step_enclosure(std::span<const double> x,
                                                 std::span<const double> u,
                                                 const nn::Interval& noise_cell) const {
  const Box& space = state_space();
  std::vector<double> lo(x.size()), hi(x.size());
  for (std::size_t d = 0; d < x.size(); ++d) {
    double drift = x[d] + drift_scale_ * std::clamp(u[d], -1.0, 1.0);
    lo[d] = std::clamp(drift + noise_scale_ * noise_cell.lo[d], space.lo[d], space.hi[d]);
    hi[d] = std::clamp(drift + noise_scale_ * noise_cell.hi[d], space.lo[d], space.hi[d]);
  }
  return nn::Interval(std::move(lo), std::move(hi));
}

void ClippedAffineSystem::backprop_action(std::span<const double> x, std::span<const double> u,
                                          std::span<const double> w,
                                          std::span<const double> dxprime,
                                          std::span<double> du) const {
  const Box& space = state_space();
  for (std::size_t d = 0; d < u.size(); ++d) {
    double pre = x[d] + drift_scale_ * std::clamp(u[d], -1.0, 1.0) + noise_scale_ * w[d];
    bool clamped = pre < space.lo[d] || pre > space.hi[d];
    bool clipped = u[d] < -1.0 || u[d] > 1.0;
    du[d] += (clamped || clipped) ? 0.0 : drift_scale_ * dxprime[d];
  }
}

std::string ClippedAffineSystem::describe() const {
  std::ostringstream ss;
  ss << "clipped-affine drift=" << format_double(drift_scale_)
     << " noise=" << format_double(noise_scale_) << " space=" << state_space().describe();
  return ss.str();
}

// -- ContractionSystem ---------------------------------------------------------

namespace {

double max_step_contraction(const Box& space, double rate) {
  double delta = 0;
  for (std::size_t d = 0; d < space.dims(); ++d) {
    double mag = std::max(std::abs(space.lo[d]), std::abs(space.hi[d]));
    delta += (1 - rate) * mag;
  }
  return std::max(delta, 1e-12);
}

}  // namespace

ContractionSystem::ContractionSystem(Box state_space, Box action_space, double rate)
    : StochasticSystem(state_space, action_space, TriangularNoise::none(state_space.dims()),
                       /*lipschitz_f=*/rate, max_step_contraction(state_space, rate)),
      rate_(rate) {
  if (rate <= 0 || rate >= 1) throw DomainError("contraction rate must lie in (0, 1)");
}

std::vector<double> ContractionSystem::step_raw(std::span<const double> x,
                                                std::span<const double> /*u*/,
                                                std::span<const double> /*w*/) const {
  std::vector<double> next(x.begin(), x.end());
  for (auto& v : next) v *= rate_;
  return next;
}

nn::Interval ContractionSystem::step_enclosure(std::span<const double> x,
                                               std::span<const double> /*u*/,
                                               const nn::Interval& /*noise_cell*/) const {
  std::vector<double> lo(x.size()), hi(x.size());
  const Box& space = state_space();
  for (std::size_t d = 0; d < x.size(); ++d) {
    double v = std::clamp(rate_ * x[d], space.lo[d], space.hi[d]);
    lo[d] = v;
    hi[d] = v;
  }
  return nn::Interval(std::move(lo), std::move(hi));
}

void ContractionSystem::backprop_action(std::span<const double>, std::span<const double>,
                                        std::span<const double>, std::span<const double>,
                                        std::span<double>) const {
  // the action has no effect on this system
}

std::string ContractionSystem::describe() const {
  return "contraction rate=" + format_double(rate_) + " space=" + state_space().describe();
}

// -- ReachAvoidTask ------------------------------------------------------------

ReachAvoidTask::ReachAvoidTask(Region init_, Region target_, Region unsafe_)
    : init(std::move(init_)), target(std::move(target_)), unsafe(std::move(unsafe_)) {
  if (init.dims() != target.dims() || init.dims() != unsafe.dims())
    throw DomainError("reach-avoid task regions must share one dimension count");
  if (init.is_empty()) throw DomainError("reach-avoid task needs a nonempty initial region");
  if (!unsafe.is_empty() && !init.intersected(unsafe).is_empty()) {
    // a zero-volume overlap is a boundary contact, which we still reject
    throw DomainError("reach-avoid task rejected: initial region meets the unsafe region");
  }
}

Policy policy_from_net(const nn::Mlp& net) {
  return [&net](std::span<const double> x) { return net.forward(x); };
}

// -- Exact binomial interval ----------------------------------------------------

double regularized_incomplete_beta(double a, double b, double x) {
  if (x <= 0) return 0;
  if (x >= 1) return 1;
  // continued fraction (Lentz), with the symmetry transform for convergence
  auto cont_frac = [](double a_, double b_, double x_) {
    const double tiny = 1e-300;
    double qab = a_ + b_, qap = a_ + 1, qam = a_ - 1;
    double c = 1.0, d = 1.0 - qab * x_ / qap;
    if (std::abs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= 300; ++m) {
      int m2 = 2 * m;
      double aa = m * (b_ - m) * x_ / ((qam + m2) * (a_ + m2));
      d = 1.0 + aa * d;
      if (std::abs(d) < tiny) d = tiny;
      c = 1.0 + aa / c;
      if (std::abs(c) < tiny) c = tiny;
      d = 1.0 / d;
      h *= d * c;
      aa = -(a_ + m) * (qab + m) * x_ / ((a_ + m2) * (qap + m2));
      d = 1.0 + aa * d;
      if (std::abs(d) < tiny) d = tiny;
      c = 1.0 + aa / c;
      if (std::abs(c) < tiny) c = tiny;
      d = 1.0 / d;
      double del = d * c;
      h *= del;
      if (std::abs(del - 1.0) < 1e-15) break;
    }
    return h;
  };
  double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) +
                    b * std::log1p(-x);
  double front = std::exp(ln_front);
  if (x < (a + 1) / (a + b + 2)) return front * cont_frac(a, b, x) / a;
  return 1.0 - std::exp(std::lgamma(a + b) - std::lgamma(b) - std::lgamma(a) +
                        b * std::log1p(-x) + a * std::log(x)) *
                   cont_frac(b, a, 1 - x) / b;
}

namespace {

double beta_inv(double p, double a, double b) {
  double lo = 0, hi = 1;
  for (int i = 0; i < 200; ++i) {
    double mid = 0.5 * (lo + hi);
    if (regularized_incomplete_beta(a, b, mid) < p)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

std::pair<double, double> binomial_confidence(std::size_t k, std::size_t n, double alpha) {
  if (n == 0) throw DomainError("binomial interval needs at least one trial");
  if (k > n) throw DomainError("successes cannot exceed trials");
  double lo = k == 0 ? 0.0 : beta_inv(alpha / 2, double(k), double(n - k + 1));
  double hi = k == n ? 1.0 : beta_inv(1 - alpha / 2, double(k + 1), double(n - k));
  return {lo, hi};
}

// -- Monte Carlo ----------------------------------------------------------------

namespace {

bool episode_success(const StochasticSystem& system, const Policy& policy,
                     const ReachAvoidTask& task, std::size_t horizon, std::mt19937_64& rng) {
  std::vector<double> x = task.init.sample(rng);
  for (std::size_t t = 0;; ++t) {
    if (task.unsafe.contains(x)) return false;
    if (task.target.contains(x)) return true;
    if (t == horizon) return false;  // no event within the horizon: count as failure
    std::vector<double> u = policy(x);
    std::vector<double> w = system.noise().sample(rng);
    x = system.step(x, u, w);
  }
}

}  // namespace

McResult mc_reach_avoid(const StochasticSystem& system, const Policy& policy,
                        const ReachAvoidTask& task, std::size_t horizon, std::size_t episodes,
                        std::uint64_t seed, double alpha) {
  if (horizon < 1) throw DomainError("horizon must be >= 1");
  if (episodes < 1) throw DomainError("episodes must be >= 1");

  const unsigned workers = std::min<unsigned>(thread_count(), unsigned(episodes));
  std::vector<std::future<std::size_t>> futures;
  const std::size_t chunk = (episodes + workers - 1) / workers;
  for (unsigned wi = 0; wi < workers; ++wi) {
    std::size_t begin = wi * chunk;
    std::size_t end = std::min(episodes, begin + chunk);
    if (begin >= end) break;
    futures.push_back(std::async(std::launch::async, [&, begin, end]() {
      std::size_t wins = 0;
      for (std::size_t ep = begin; ep < end; ++ep) {
        auto rng = make_rng(seed, ep);
        if (episode_success(system, policy, task, horizon, rng)) ++wins;
      }
      return wins;
    }));
  }
  std::size_t successes = 0;
  for (auto& f : futures) successes += f.get();

  McResult r;
  r.successes = successes;
  r.episodes = episodes;
  r.estimate = double(successes) / double(episodes);
  std::tie(r.ci_lo, r.ci_hi) = binomial_confidence(successes, episodes, alpha);
  return r;
}

std::vector<std::vector<double>> rollout(const StochasticSystem& system, const Policy& policy,
                                         std::span<const double> x0, std::size_t horizon,
                                         std::uint64_t seed) {
  auto rng = make_rng(seed);
  std::vector<std::vector<double>> states;
  states.emplace_back(x0.begin(), x0.end());
  for (std::size_t t = 0; t < horizon; ++t) {
    std::vector<double> u = policy(states.back());
    std::vector<double> w = system.noise().sample(rng);
    states.push_back(system.step(states.back(), u, w));
  }
  return states;
}

// -- Stochastic Nine Rooms -------------------------------------------------------

namespace {

struct Doorway {
  int ax, ay, bx, by;  // connected rooms (b is right of or above a)
};

// Doorways between adjacent rooms, matching the bundled wall layout. All
// remaining shared sides are fully walled.
const std::vector<Doorway> kDoorways = {
    {0, 0, 1, 0}, {1, 0, 2, 0}, {0, 1, 1, 1}, {1, 1, 2, 1},  // horizontal neighbors
    {0, 0, 0, 1}, {1, 1, 1, 2}, {2, 1, 2, 2},                // vertical neighbors
};

constexpr double kWallHalf = 0.05;   // wall thickness 0.1
constexpr double kDoorLo = 0.3;      // doorway spans [0.3, 0.7] of the shared side
constexpr double kDoorHi = 0.7;

bool has_doorway(int ax, int ay, int bx, int by) {
  for (const auto& d : kDoorways)
    if (d.ax == ax && d.ay == ay && d.bx == bx && d.by == by) return true;
  return false;
}

}  // namespace

NineRoomsEnv nine_rooms(double noise_c) {
  if (noise_c < 0) throw DomainError("noise scale must be >= 0");
  NineRoomsEnv env;

  Box space({0.0, 0.0}, {3.0, 3.0});
  Box actions({-1.0, -1.0}, {1.0, 1.0});
  TriangularNoise noise({noise_c, noise_c});
  env.system = std::make_shared<ClippedAffineSystem>(space, actions, noise, 0.1, 0.1);

  for (int x = 0; x < 3; ++x)
    for (int y = 0; y < 3; ++y)
      env.rooms[x][y] = Box({0.4 + x, 0.4 + y}, {0.6 + x, 0.6 + y});
  env.init_box = env.rooms[0][0];
  env.goal_box = env.rooms[2][2];

  // Walls: the two interior vertical lines and two interior horizontal lines,
  // opened where a doorway exists.
  std::vector<Box> walls;
  for (int line = 1; line <= 2; ++line) {
    double c = double(line);
    for (int cell = 0; cell < 3; ++cell) {
      double base = double(cell);
      // vertical wall between rooms (line-1, cell) and (line, cell)
      if (has_doorway(line - 1, cell, line, cell)) {
        walls.push_back(Box({c - kWallHalf, base}, {c + kWallHalf, base + kDoorLo}));
        walls.push_back(Box({c - kWallHalf, base + kDoorHi}, {c + kWallHalf, base + 1}));
      } else {
        walls.push_back(Box({c - kWallHalf, base}, {c + kWallHalf, base + 1}));
      }
      // horizontal wall between rooms (cell, line-1) and (cell, line)
      if (has_doorway(cell, line - 1, cell, line)) {
        walls.push_back(Box({base, c - kWallHalf}, {base + kDoorLo, c + kWallHalf}));
        walls.push_back(Box({base + kDoorHi, c - kWallHalf}, {base + 1, c + kWallHalf}));
      } else {
        walls.push_back(Box({base, c - kWallHalf}, {base + 1, c + kWallHalf}));
      }
    }
  }
  env.walls = Region(2, std::move(walls));

  env.regions.define("init", Region(env.init_box));
  env.regions.define("goal", Region(env.goal_box));
  env.regions.define("walls", env.walls);
  env.regions.define("safe", env.walls.complement_within(space));
  for (int x = 0; x < 3; ++x)
    for (int y = 0; y < 3; ++y)
      env.regions.define("room_" + std::to_string(x) + "_" + std::to_string(y),
                         Region(env.rooms[x][y]));

  env.graph_edges = {
      {{0, 0}, {1, 0}}, {{0, 0}, {2, 0}}, {{0, 0}, {0, 1}},
      {{1, 0}, {2, 0}}, {{0, 1}, {2, 1}}, {{0, 1}, {1, 1}},
      {{1, 1}, {1, 2}}, {{1, 2}, {2, 1}}, {{2, 1}, {2, 2}},
  };
  return env;
}

ReachAvoidTask NineRoomsEnv::task() const {
  return ReachAvoidTask(Region(init_box), Region(goal_box), walls);
}

absgraph::AbstractGraph nine_rooms_graph(const NineRoomsEnv& env) {
  absgraph::AbstractGraph g;
  g.state_space = env.system->state_space();

  auto vid = [](int x, int y) { return std::size_t(y * 3 + x); };
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 3; ++x) {
      g.vertex_regions.push_back(Region(env.rooms[x][y]));
      g.vertex_names.push_back("(" + std::to_string(x) + "," + std::to_string(y) + ")");
    }
  g.source = vid(0, 0);
  g.target = vid(2, 2);

  for (const auto& [a, b] : env.graph_edges) {
    // corridor: the two rooms' bounding box with the walls carved out
    Box bbox({std::min(double(a.first), double(b.first)), std::min(double(a.second), double(b.second))},
             {std::max(double(a.first), double(b.first)) + 1.0,
              std::max(double(a.second), double(b.second)) + 1.0});
    absgraph::Edge e;
    e.tail = vid(a.first, a.second);
    e.head = vid(b.first, b.second);
    e.region = env.walls.complement_within(bbox);
    g.edges.push_back(std::move(e));
  }
  g.validate();
  return g;
}

}  // namespace claps::sys
