#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace claps {

/// Axis-aligned closed box: per-dimension intervals [lo_d, hi_d].
struct Box {
  std::vector<double> lo;
  std::vector<double> hi;

  Box() = default;
  /// Throws DomainError unless lo.size() == hi.size() and lo <= hi everywhere.
  Box(std::vector<double> lo_, std::vector<double> hi_);

  static Box interval(double lo, double hi) { return Box({lo}, {hi}); }

  std::size_t dims() const { return lo.size(); }
  bool contains(std::span<const double> x) const;
  double volume() const;
  std::vector<double> center() const;

  /// Largest box contained in both; empty optional-like flag via valid().
  /// Intersection may be a degenerate (zero-width) box, which still counts.
  bool intersects(const Box& other) const;
  Box intersection(const Box& other) const;  // pre: intersects(other)

  bool contains_box(const Box& inner) const;

  /// Uniform sample (componentwise).
  std::vector<double> sample(std::mt19937_64& rng) const;

  /// Clamp a point into the box, componentwise.
  void clamp(std::span<double> x) const;

  std::string describe() const;

  bool operator==(const Box&) const = default;
};

/// Finite union of same-dimension boxes. The empty union is a valid region;
/// its dimension count is carried explicitly.
class Region {
 public:
  Region() = default;
  explicit Region(std::size_t dims) : dims_(dims) {}
  explicit Region(Box box);
  Region(std::size_t dims, std::vector<Box> boxes);

  static Region empty(std::size_t dims) { return Region(dims); }

  std::size_t dims() const { return dims_; }
  bool is_empty() const { return boxes_.empty(); }
  const std::vector<Box>& boxes() const { return boxes_; }

  bool contains(std::span<const double> x) const;

  /// Exact pointwise union/intersection over box unions.
  Region unioned(const Region& other) const;
  Region intersected(const Region& other) const;
  Region intersected(const Box& box) const;

  /// Set complement restricted to `space`, returned as disjoint boxes
  /// produced by a coordinate-sweep grid decomposition. Closed-boundary
  /// convention: shared boundaries may lie in both the region and its
  /// complement (measure zero).
  Region complement_within(const Box& space) const;

  /// True iff `inner` is covered by this union of boxes.
  bool covers_box(const Box& inner) const;
  bool covers(const Region& inner) const;

  double volume_upper() const;  // sum of box volumes (over-counts overlap)

  /// Uniform-ish sample: box chosen by volume weight, then uniform inside.
  /// Degenerate (all-zero-volume) unions fall back to box centers.
  std::vector<double> sample(std::mt19937_64& rng) const;

  std::string describe() const;

  bool operator==(const Region&) const = default;

 private:
  void check_dims(std::size_t d, const char* what) const;

  std::size_t dims_ = 0;
  std::vector<Box> boxes_;
};

/// L1 distance from a point to a box (0 inside).
double l1_distance(const Box& box, std::span<const double> x);

/// L1 distance from a point to a region (infinity for the empty region).
double l1_distance(const Region& region, std::span<const double> x);

}  // namespace claps
