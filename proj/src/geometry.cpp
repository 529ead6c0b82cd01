#include "claps/geometry.hpp"

#include <algorithm>
#include <limits>
#include <sstream>

#include "claps/util.hpp"

namespace claps {

Box::Box(std::vector<double> lo_, std::vector<double> hi_)
    : lo(std::move(lo_)), hi(std::move(hi_)) {
  if (lo.size() != hi.size()) throw DomainError("box lo/hi dimension mismatch");
  if (lo.empty()) throw DomainError("box must have at least one dimension");
  for (std::size_t d = 0; d < lo.size(); ++d)
    if (!(lo[d] <= hi[d])) throw DomainError("box requires lo <= hi in every dimension");
}

bool Box::contains(std::span<const double> x) const {
  if (x.size() != dims()) throw DomainError("point dimension mismatch");
  for (std::size_t d = 0; d < dims(); ++d)
    if (x[d] < lo[d] || x[d] > hi[d]) return false;
  return true;
}

double Box::volume() const {
  double v = 1.0;
  for (std::size_t d = 0; d < dims(); ++d) v *= hi[d] - lo[d];
  return v;
}

std::vector<double> Box::center() const {
  std::vector<double> c(dims());
  for (std::size_t d = 0; d < dims(); ++d) c[d] = 0.5 * (lo[d] + hi[d]);
  return c;
}

bool Box::intersects(const Box& other) const {
  if (other.dims() != dims()) throw DomainError("box dimension mismatch");
  for (std::size_t d = 0; d < dims(); ++d)
    if (lo[d] > other.hi[d] || other.lo[d] > hi[d]) return false;
  return true;
}

Box Box::intersection(const Box& other) const {
  std::vector<double> l(dims()), h(dims());
  for (std::size_t d = 0; d < dims(); ++d) {
    l[d] = std::max(lo[d], other.lo[d]);
    h[d] = std::min(hi[d], other.hi[d]);
  }
  return Box(std::move(l), std::move(h));
}

bool Box::contains_box(const Box& inner) const {
  if (inner.dims() != dims()) throw DomainError("box dimension mismatch");
  for (std::size_t d = 0; d < dims(); ++d)
    if (inner.lo[d] < lo[d] || inner.hi[d] > hi[d]) return false;
  return true;
}

std::vector<double> Box::sample(std::mt19937_64& rng) const {
  std::vector<double> x(dims());
  for (std::size_t d = 0; d < dims(); ++d) {
    std::uniform_real_distribution<double> u(lo[d], hi[d]);
    x[d] = lo[d] == hi[d] ? lo[d] : u(rng);
  }
  return x;
}

void Box::clamp(std::span<double> x) const {
  if (x.size() != dims()) throw DomainError("point dimension mismatch");
  for (std::size_t d = 0; d < dims(); ++d) x[d] = std::clamp(x[d], lo[d], hi[d]);
}

std::string Box::describe() const {
  std::ostringstream ss;
  for (std::size_t d = 0; d < dims(); ++d) {
    if (d) ss << "x";
    ss << "[" << format_double(lo[d]) << "," << format_double(hi[d]) << "]";
  }
  return ss.str();
}

Region::Region(Box box) : dims_(box.dims()) { boxes_.push_back(std::move(box)); }

Region::Region(std::size_t dims, std::vector<Box> boxes) : dims_(dims), boxes_(std::move(boxes)) {
  for (const auto& b : boxes_)
    if (b.dims() != dims_) throw DomainError("region boxes must share one dimension count");
}

void Region::check_dims(std::size_t d, const char* what) const {
  if (d != dims_) throw DomainError(std::string("region dimension mismatch in ") + what);
}

bool Region::contains(std::span<const double> x) const {
  check_dims(x.size(), "contains");
  for (const auto& b : boxes_)
    if (b.contains(x)) return true;
  return false;
}

Region Region::unioned(const Region& other) const {
  check_dims(other.dims(), "union");
  std::vector<Box> out = boxes_;
  out.insert(out.end(), other.boxes_.begin(), other.boxes_.end());
  return Region(dims_, std::move(out));
}

Region Region::intersected(const Region& other) const {
  check_dims(other.dims(), "intersect");
  std::vector<Box> out;
  for (const auto& a : boxes_)
    for (const auto& b : other.boxes_)
      if (a.intersects(b)) out.push_back(a.intersection(b));
  return Region(dims_, std::move(out));
}

Region Region::intersected(const Box& box) const { return intersected(Region(box)); }

Region Region::complement_within(const Box& space) const {
  check_dims(space.dims(), "complement");
  const std::size_t n = dims_;

  // Coordinate sweep: cut the space along every box face, classify each grid
  // cell by its center.
  std::vector<std::vector<double>> cuts(n);
  for (std::size_t d = 0; d < n; ++d) {
    cuts[d].push_back(space.lo[d]);
    cuts[d].push_back(space.hi[d]);
    for (const auto& b : boxes_) {
      if (b.lo[d] > space.lo[d] && b.lo[d] < space.hi[d]) cuts[d].push_back(b.lo[d]);
      if (b.hi[d] > space.lo[d] && b.hi[d] < space.hi[d]) cuts[d].push_back(b.hi[d]);
    }
    std::sort(cuts[d].begin(), cuts[d].end());
    cuts[d].erase(std::unique(cuts[d].begin(), cuts[d].end()), cuts[d].end());
  }

  std::vector<std::size_t> cell_counts(n);
  std::size_t total = 1;
  for (std::size_t d = 0; d < n; ++d) {
    cell_counts[d] = cuts[d].size() - 1;
    if (cell_counts[d] == 0) return Region::empty(n);  // degenerate space slice
    total *= cell_counts[d];
  }
  if (total > 4'000'000)
    throw ResourceError("complement decomposition too large (" + std::to_string(total) +
                        " cells); simplify the region");

  std::vector<Box> out;
  std::vector<std::size_t> idx(n, 0);
  std::vector<double> lo(n), hi(n), c(n);
  for (std::size_t cell = 0; cell < total; ++cell) {
    for (std::size_t d = 0; d < n; ++d) {
      lo[d] = cuts[d][idx[d]];
      hi[d] = cuts[d][idx[d] + 1];
      c[d] = 0.5 * (lo[d] + hi[d]);
    }
    if (!contains(c)) out.emplace_back(lo, hi);
    for (std::size_t d = 0; d < n; ++d) {
      if (++idx[d] < cell_counts[d]) break;
      idx[d] = 0;
    }
  }

  // Merge runs along dimension 0 to keep the box count down.
  std::sort(out.begin(), out.end(), [](const Box& a, const Box& b) {
    for (std::size_t d = a.dims(); d-- > 1;) {
      if (a.lo[d] != b.lo[d]) return a.lo[d] < b.lo[d];
      if (a.hi[d] != b.hi[d]) return a.hi[d] < b.hi[d];
    }
    return a.lo[0] < b.lo[0];
  });
  std::vector<Box> merged;
  for (auto& b : out) {
    if (!merged.empty()) {
      Box& m = merged.back();
      bool same_rest = true;
      for (std::size_t d = 1; d < n; ++d)
        if (m.lo[d] != b.lo[d] || m.hi[d] != b.hi[d]) same_rest = false;
      if (same_rest && m.hi[0] == b.lo[0]) {
        m.hi[0] = b.hi[0];
        continue;
      }
    }
    merged.push_back(std::move(b));
  }
  return Region(n, std::move(merged));
}

bool Region::covers_box(const Box& inner) const {
  check_dims(inner.dims(), "covers_box");
  // inner ⊆ union  iff  inner ∩ complement(union within inner) has no interior
  Region comp = complement_within(inner);
  for (const auto& b : comp.boxes())
    if (b.volume() > 0) return false;
  // Zero-volume leftovers are boundary slivers; check their centers.
  for (const auto& b : comp.boxes())
    if (!contains(b.center())) return false;
  return true;
}

bool Region::covers(const Region& inner) const {
  for (const auto& b : inner.boxes())
    if (!covers_box(b)) return false;
  return true;
}

double Region::volume_upper() const {
  double v = 0;
  for (const auto& b : boxes_) v += b.volume();
  return v;
}

std::vector<double> Region::sample(std::mt19937_64& rng) const {
  if (boxes_.empty()) throw DomainError("cannot sample from an empty region");
  double total = volume_upper();
  if (total <= 0) {
    std::uniform_int_distribution<std::size_t> pick(0, boxes_.size() - 1);
    return boxes_[pick(rng)].center();
  }
  std::uniform_real_distribution<double> u(0.0, total);
  double r = u(rng);
  for (const auto& b : boxes_) {
    r -= b.volume();
    if (r <= 0) return b.sample(rng);
  }
  return boxes_.back().sample(rng);
}

std::string Region::describe() const {
  if (boxes_.empty()) return "{}";
  std::ostringstream ss;
  for (std::size_t i = 0; i < boxes_.size(); ++i) {
    if (i) ss << " u ";
    ss << boxes_[i].describe();
  }
  return ss.str();
}

double l1_distance(const Box& box, std::span<const double> x) {
  double d = 0;
  for (std::size_t i = 0; i < box.dims(); ++i) {
    if (x[i] < box.lo[i]) d += box.lo[i] - x[i];
    else if (x[i] > box.hi[i]) d += x[i] - box.hi[i];
  }
  return d;
}

double l1_distance(const Region& region, std::span<const double> x) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& b : region.boxes()) best = std::min(best, l1_distance(b, x));
  return best;
}

}  // namespace claps
