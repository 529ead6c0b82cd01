#pragma once

#include <string>
#include <vector>

#include "claps/geometry.hpp"

namespace claps::svg {

/// Minimal 2D scene writer: region rectangles plus trajectory polylines,
/// rendered into a standalone SVG document. Only the first two state
/// dimensions are drawn.
class Scene {
 public:
  explicit Scene(const Box& viewport, double pixels_per_unit = 200);

  void add_region(const Region& region, const std::string& fill, double opacity = 0.8);
  void add_trajectory(const std::vector<std::vector<double>>& states, const std::string& stroke);

  std::string render() const;

 private:
  Box viewport_;
  double scale_;
  std::string body_;

  double px(double x) const;
  double py(double y) const;  // y axis flipped (SVG grows downward)
};

}  // namespace claps::svg
