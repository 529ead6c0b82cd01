#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "claps/geometry.hpp"

namespace claps::nn {

/// Per-coordinate interval enclosure.
struct Interval {
  std::vector<double> lo;
  std::vector<double> hi;

  Interval() = default;
  Interval(std::vector<double> lo_, std::vector<double> hi_);
  static Interval point(std::span<const double> x);

  std::size_t dims() const { return lo.size(); }
  bool contains(std::span<const double> x, double slack = 0.0) const;
  double max_width() const;
};

enum class OutputHead : std::uint8_t {
  Identity = 0,
  /// softplus keeps certificate networks nonnegative by construction
  Softplus = 1,
  /// tanh squashing scaled/shifted into an action box (policy networks)
  TanhBox = 2,
};

struct Layer {
  // row-major, rows = outputs, cols = inputs
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> w;
  std::vector<double> b;

  double& at(std::size_t r, std::size_t c) { return w[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return w[r * cols + c]; }
};

/// Evaluation tape for reverse mode: pre-activations per layer plus input.
struct Tape {
  std::vector<double> input;
  std::vector<std::vector<double>> pre;  // pre-activation of each layer
  std::vector<double> output;            // after the head
};

/// Gradients with the same shapes as the network parameters.
struct Gradients {
  std::vector<Layer> layers;  // w/b hold gradient values

  void scale(double s);
  void add(const Gradients& other, double s = 1.0);
  double l2norm() const;
};

/// Small feed-forward network with ReLU hidden activations and a
/// configurable output head. Immutable during evaluation; training mutates a
/// single owner. forward / ibp_forward / lipschitz_bound are pure.
class Mlp {
 public:
  Mlp() = default;
  /// dims = {in, h1, ..., out}. TanhBox head requires `action_box` with
  /// dims.back() dimensions.
  Mlp(std::vector<std::size_t> dims, OutputHead head, std::uint64_t seed,
      const Box* action_box = nullptr);

  std::size_t input_dims() const { return layers_.front().cols; }
  std::size_t output_dims() const { return layers_.back().rows; }
  OutputHead head() const { return head_; }
  const Box& action_box() const { return action_box_; }
  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& mutable_layers() { return layers_; }

  std::vector<double> forward(std::span<const double> x) const;
  Tape forward_tape(std::span<const double> x) const;

  /// Reverse pass from d(loss)/d(output). Returns parameter gradients and
  /// writes d(loss)/d(input) to `dinput` when non-null.
  Gradients backward(const Tape& tape, std::span<const double> doutput,
                     std::vector<double>* dinput = nullptr) const;

  Gradients zero_gradients() const;
  void apply_update(const Gradients& delta);  // in-place parameter += delta

  /// Upper bound on the L1->L1 Lipschitz constant: product over layers of the
  /// maximum column absolute sum; activation slopes are at most one, and the
  /// TanhBox head contributes its largest half-width.
  double lipschitz_bound() const;

  /// Sound interval enclosure of forward over an input box.
  Interval ibp_forward(const Interval& in) const;

  bool operator==(const Mlp&) const = default;

 private:
  std::vector<Layer> layers_;
  OutputHead head_ = OutputHead::Identity;
  Box action_box_;  // meaningful only for TanhBox
};

double softplus(double z);
double softplus_grad(double z);

/// Bit-exact little-endian weight file (magic, version, head, dims, f64 data).
void save_net(const Mlp& net, const std::filesystem::path& path);
Mlp load_net(const std::filesystem::path& path);

}  // namespace claps::nn
