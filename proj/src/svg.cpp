#include "claps/svg.hpp"

#include <sstream>

#include "claps/util.hpp"

namespace claps::svg {

Scene::Scene(const Box& viewport, double pixels_per_unit)
    : viewport_(viewport), scale_(pixels_per_unit) {
  if (viewport.dims() < 2) throw DomainError("svg scene needs at least two dimensions");
}

double Scene::px(double x) const { return (x - viewport_.lo[0]) * scale_; }
double Scene::py(double y) const { return (viewport_.hi[1] - y) * scale_; }

void Scene::add_region(const Region& region, const std::string& fill, double opacity) {
  std::ostringstream ss;
  for (const auto& b : region.boxes()) {
    ss << "  <rect x=\"" << format_double(px(b.lo[0])) << "\" y=\"" << format_double(py(b.hi[1]))
       << "\" width=\"" << format_double((b.hi[0] - b.lo[0]) * scale_) << "\" height=\""
       << format_double((b.hi[1] - b.lo[1]) * scale_) << "\" fill=\"" << fill << "\" opacity=\""
       << format_double(opacity) << "\"/>\n";
  }
  body_ += ss.str();
}

void Scene::add_trajectory(const std::vector<std::vector<double>>& states,
                           const std::string& stroke) {
  if (states.empty()) return;
  std::ostringstream ss;
  ss << "  <polyline fill=\"none\" stroke=\"" << stroke << "\" stroke-width=\"1.5\" points=\"";
  for (std::size_t i = 0; i < states.size(); ++i) {
    if (i) ss << " ";
    ss << format_double(px(states[i][0])) << "," << format_double(py(states[i][1]));
  }
  ss << "\"/>\n";
  body_ += ss.str();
}

std::string Scene::render() const {
  double w = (viewport_.hi[0] - viewport_.lo[0]) * scale_;
  double h = (viewport_.hi[1] - viewport_.lo[1]) * scale_;
  std::ostringstream ss;
  ss << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << format_double(w) << "\" height=\""
     << format_double(h) << "\" viewBox=\"0 0 " << format_double(w) << " " << format_double(h)
     << "\">\n";
  ss << "  <rect x=\"0\" y=\"0\" width=\"" << format_double(w) << "\" height=\""
     << format_double(h) << "\" fill=\"white\"/>\n";
  ss << body_;
  ss << "</svg>\n";
  return ss.str();
}

}  // namespace claps::svg
