#include "claps/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "claps/util.hpp"

namespace claps::nn {

Interval::Interval(std::vector<double> lo_, std::vector<double> hi_)
    : lo(std::move(lo_)), hi(std::move(hi_)) {
  if (lo.size() != hi.size()) throw DomainError("interval lo/hi dimension mismatch");
  for (std::size_t i = 0; i < lo.size(); ++i)
    if (!(lo[i] <= hi[i])) throw DomainError("interval requires lo <= hi");
}

Interval Interval::point(std::span<const double> x) {
  return Interval(std::vector<double>(x.begin(), x.end()), std::vector<double>(x.begin(), x.end()));
}

bool Interval::contains(std::span<const double> x, double slack) const {
  if (x.size() != dims()) return false;
  for (std::size_t i = 0; i < dims(); ++i)
    if (x[i] < lo[i] - slack || x[i] > hi[i] + slack) return false;
  return true;
}

double Interval::max_width() const {
  double w = 0;
  for (std::size_t i = 0; i < dims(); ++i) w = std::max(w, hi[i] - lo[i]);
  return w;
}

double softplus(double z) {
  // ln(1 + e^z), stable at both tails
  if (z > 30) return z;
  if (z < -30) return std::exp(z);
  return std::log1p(std::exp(z));
}

double softplus_grad(double z) { return 1.0 / (1.0 + std::exp(-z)); }

void Gradients::scale(double s) {
  for (auto& l : layers) {
    for (auto& v : l.w) v *= s;
    for (auto& v : l.b) v *= s;
  }
}

void Gradients::add(const Gradients& other, double s) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    for (std::size_t k = 0; k < layers[i].w.size(); ++k) layers[i].w[k] += s * other.layers[i].w[k];
    for (std::size_t k = 0; k < layers[i].b.size(); ++k) layers[i].b[k] += s * other.layers[i].b[k];
  }
}

double Gradients::l2norm() const {
  double acc = 0;
  for (const auto& l : layers) {
    for (double v : l.w) acc += v * v;
    for (double v : l.b) acc += v * v;
  }
  return std::sqrt(acc);
}

Mlp::Mlp(std::vector<std::size_t> dims, OutputHead head, std::uint64_t seed, const Box* action_box)
    : head_(head) {
  if (dims.size() < 2) throw DomainError("network needs at least one layer");
  if (head == OutputHead::TanhBox) {
    if (!action_box) throw DomainError("TanhBox head requires an action box");
    if (action_box->dims() != dims.back())
      throw DomainError("action box dimension must match network output");
    action_box_ = *action_box;
  }
  auto rng = make_rng(seed);
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    Layer l;
    l.rows = dims[i + 1];
    l.cols = dims[i];
    l.w.resize(l.rows * l.cols);
    l.b.assign(l.rows, 0.0);
    // He-style init for the ReLU stack
    double scale = std::sqrt(2.0 / double(l.cols));
    std::normal_distribution<double> dist(0.0, scale);
    for (auto& v : l.w) v = dist(rng);
    layers_.push_back(std::move(l));
  }
}

namespace {

void affine(const Layer& l, std::span<const double> x, std::vector<double>& out) {
  out.assign(l.rows, 0.0);
  for (std::size_t r = 0; r < l.rows; ++r) {
    double acc = l.b[r];
    const double* wr = l.w.data() + r * l.cols;
    for (std::size_t c = 0; c < l.cols; ++c) acc += wr[c] * x[c];
    out[r] = acc;
  }
}

}  // namespace

std::vector<double> Mlp::forward(std::span<const double> x) const {
  if (x.size() != input_dims()) throw DomainError("network input dimension mismatch");
  std::vector<double> cur(x.begin(), x.end());
  std::vector<double> next;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    affine(layers_[i], cur, next);
    if (i + 1 < layers_.size())
      for (auto& v : next) v = std::max(v, 0.0);
    cur.swap(next);
  }
  switch (head_) {
    case OutputHead::Identity: break;
    case OutputHead::Softplus:
      for (auto& v : cur) v = softplus(v);
      break;
    case OutputHead::TanhBox:
      for (std::size_t i = 0; i < cur.size(); ++i) {
        double mid = 0.5 * (action_box_.lo[i] + action_box_.hi[i]);
        double half = 0.5 * (action_box_.hi[i] - action_box_.lo[i]);
        cur[i] = mid + half * std::tanh(cur[i]);
      }
      break;
  }
  return cur;
}

Tape Mlp::forward_tape(std::span<const double> x) const {
  if (x.size() != input_dims()) throw DomainError("network input dimension mismatch");
  Tape tape;
  tape.input.assign(x.begin(), x.end());
  std::vector<double> cur(x.begin(), x.end());
  std::vector<double> pre;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    affine(layers_[i], cur, pre);
    tape.pre.push_back(pre);
    if (i + 1 < layers_.size())
      for (auto& v : pre) v = std::max(v, 0.0);
    cur.swap(pre);
  }
  tape.output = cur;
  switch (head_) {
    case OutputHead::Identity: break;
    case OutputHead::Softplus:
      for (auto& v : tape.output) v = softplus(v);
      break;
    case OutputHead::TanhBox:
      for (std::size_t i = 0; i < tape.output.size(); ++i) {
        double mid = 0.5 * (action_box_.lo[i] + action_box_.hi[i]);
        double half = 0.5 * (action_box_.hi[i] - action_box_.lo[i]);
        tape.output[i] = mid + half * std::tanh(tape.output[i]);
      }
      break;
  }
  return tape;
}

Gradients Mlp::backward(const Tape& tape, std::span<const double> doutput,
                        std::vector<double>* dinput) const {
  if (doutput.size() != output_dims()) throw DomainError("gradient dimension mismatch");
  Gradients g = zero_gradients();

  // head backward
  std::vector<double> delta(doutput.begin(), doutput.end());
  const auto& last_pre = tape.pre.back();
  switch (head_) {
    case OutputHead::Identity: break;
    case OutputHead::Softplus:
      for (std::size_t i = 0; i < delta.size(); ++i) delta[i] *= softplus_grad(last_pre[i]);
      break;
    case OutputHead::TanhBox:
      for (std::size_t i = 0; i < delta.size(); ++i) {
        double half = 0.5 * (action_box_.hi[i] - action_box_.lo[i]);
        double th = std::tanh(last_pre[i]);
        delta[i] *= half * (1.0 - th * th);
      }
      break;
  }

  for (std::size_t li = layers_.size(); li-- > 0;) {
    const Layer& l = layers_[li];
    // activations feeding this layer
    std::vector<double> act;
    if (li == 0) {
      act = tape.input;
    } else {
      act = tape.pre[li - 1];
      for (auto& v : act) v = std::max(v, 0.0);
    }
    Layer& gl = g.layers[li];
    for (std::size_t r = 0; r < l.rows; ++r) {
      gl.b[r] += delta[r];
      double* gw = gl.w.data() + r * l.cols;
      for (std::size_t c = 0; c < l.cols; ++c) gw[c] += delta[r] * act[c];
    }
    // propagate to previous layer (or input)
    std::vector<double> prev(l.cols, 0.0);
    for (std::size_t r = 0; r < l.rows; ++r) {
      const double* wr = l.w.data() + r * l.cols;
      for (std::size_t c = 0; c < l.cols; ++c) prev[c] += wr[c] * delta[r];
    }
    if (li > 0) {
      const auto& pre_prev = tape.pre[li - 1];
      for (std::size_t c = 0; c < prev.size(); ++c)
        if (pre_prev[c] <= 0) prev[c] = 0.0;  // ReLU gate
    }
    delta.swap(prev);
  }
  if (dinput) *dinput = delta;
  return g;
}

Gradients Mlp::zero_gradients() const {
  Gradients g;
  for (const auto& l : layers_) {
    Layer z;
    z.rows = l.rows;
    z.cols = l.cols;
    z.w.assign(l.w.size(), 0.0);
    z.b.assign(l.b.size(), 0.0);
    g.layers.push_back(std::move(z));
  }
  return g;
}

void Mlp::apply_update(const Gradients& delta) {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    for (std::size_t k = 0; k < layers_[i].w.size(); ++k) layers_[i].w[k] += delta.layers[i].w[k];
    for (std::size_t k = 0; k < layers_[i].b.size(); ++k) layers_[i].b[k] += delta.layers[i].b[k];
  }
}

double Mlp::lipschitz_bound() const {
  double bound = 1.0;
  for (const auto& l : layers_) {
    double max_col = 0.0;
    for (std::size_t c = 0; c < l.cols; ++c) {
      double col = 0.0;
      for (std::size_t r = 0; r < l.rows; ++r) col += std::abs(l.at(r, c));
      max_col = std::max(max_col, col);
    }
    bound *= max_col;
  }
  if (head_ == OutputHead::TanhBox) {
    double half = 0.0;
    for (std::size_t i = 0; i < action_box_.dims(); ++i)
      half = std::max(half, 0.5 * (action_box_.hi[i] - action_box_.lo[i]));
    bound *= half;
  }
  return bound;
}

Interval Mlp::ibp_forward(const Interval& in) const {
  if (in.dims() != input_dims()) throw DomainError("interval dimension mismatch");
  std::vector<double> lo = in.lo, hi = in.hi;
  std::vector<double> nlo, nhi;
  for (std::size_t li = 0; li < layers_.size(); ++li) {
    const Layer& l = layers_[li];
    nlo.assign(l.rows, 0.0);
    nhi.assign(l.rows, 0.0);
    for (std::size_t r = 0; r < l.rows; ++r) {
      double alo = l.b[r], ahi = l.b[r];
      const double* wr = l.w.data() + r * l.cols;
      for (std::size_t c = 0; c < l.cols; ++c) {
        double w = wr[c];
        if (w >= 0) {
          alo += w * lo[c];
          ahi += w * hi[c];
        } else {
          alo += w * hi[c];
          ahi += w * lo[c];
        }
      }
      nlo[r] = alo;
      nhi[r] = ahi;
    }
    if (li + 1 < layers_.size()) {
      for (auto& v : nlo) v = std::max(v, 0.0);
      for (auto& v : nhi) v = std::max(v, 0.0);
    }
    lo.swap(nlo);
    hi.swap(nhi);
  }
  switch (head_) {
    case OutputHead::Identity: break;
    case OutputHead::Softplus:
      for (auto& v : lo) v = softplus(v);
      for (auto& v : hi) v = softplus(v);
      break;
    case OutputHead::TanhBox:
      for (std::size_t i = 0; i < lo.size(); ++i) {
        double mid = 0.5 * (action_box_.lo[i] + action_box_.hi[i]);
        double half = 0.5 * (action_box_.hi[i] - action_box_.lo[i]);
        lo[i] = mid + half * std::tanh(lo[i]);
        hi[i] = mid + half * std::tanh(hi[i]);
      }
      break;
  }
  return Interval(std::move(lo), std::move(hi));
}

// -- Serialization -------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'M', 'L', 'P', 'W'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  for (int i = 0; i < 8; ++i) out.push_back(char((bits >> (8 * i)) & 0xff));
}

struct Reader {
  const std::string& data;
  std::size_t pos = 0;

  void need(std::size_t n) {
    if (pos + n > data.size()) throw FormatError("weight file truncated");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(std::uint8_t(data[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= std::uint64_t(std::uint8_t(data[pos + i])) << (8 * i);
    pos += 8;
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
};

}  // namespace

void save_net(const Mlp& net, const std::filesystem::path& path) {
  std::string out;
  out.append(kMagic, 4);
  put_u32(out, kVersion);
  put_u32(out, std::uint32_t(net.head()));
  put_u32(out, std::uint32_t(net.layers().size()));
  for (const auto& l : net.layers()) {
    put_u32(out, std::uint32_t(l.rows));
    put_u32(out, std::uint32_t(l.cols));
  }
  if (net.head() == OutputHead::TanhBox) {
    for (double v : net.action_box().lo) put_f64(out, v);
    for (double v : net.action_box().hi) put_f64(out, v);
  }
  for (const auto& l : net.layers()) {
    for (double v : l.w) put_f64(out, v);
    for (double v : l.b) put_f64(out, v);
  }
  atomic_write_file(path, out);
}

Mlp load_net(const std::filesystem::path& path) {
  std::string data = read_file(path);
  Reader r{data};
  r.need(4);
  if (std::memcmp(data.data(), kMagic, 4) != 0)
    throw FormatError("corrupt weight file (bad magic): " + path.string());
  r.pos = 4;
  std::uint32_t version = r.u32();
  if (version != kVersion)
    throw FormatError("unsupported weight file version " + std::to_string(version));
  std::uint32_t head_raw = r.u32();
  if (head_raw > 2) throw FormatError("corrupt weight file (bad head)");
  auto head = OutputHead(head_raw);
  std::uint32_t nlayers = r.u32();
  if (nlayers == 0 || nlayers > 64) throw FormatError("corrupt weight file (layer count)");
  std::vector<std::size_t> dims;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> shapes;
  for (std::uint32_t i = 0; i < nlayers; ++i) {
    std::uint32_t rows = r.u32(), cols = r.u32();
    if (rows == 0 || cols == 0 || rows > 1'000'000 || cols > 1'000'000)
      throw FormatError("corrupt weight file (layer shape)");
    if (i == 0) dims.push_back(cols);
    else if (cols != shapes.back().first)
      throw FormatError("corrupt weight file (layer dimension chain)");
    shapes.emplace_back(rows, cols);
    dims.push_back(rows);
  }
  Box action_box;
  if (head == OutputHead::TanhBox) {
    std::size_t out = shapes.back().first;
    std::vector<double> lo(out), hi(out);
    for (auto& v : lo) v = r.f64();
    for (auto& v : hi) v = r.f64();
    action_box = Box(std::move(lo), std::move(hi));
  }
  Mlp net(dims, head, /*seed=*/0, head == OutputHead::TanhBox ? &action_box : nullptr);
  for (auto& l : net.mutable_layers()) {
    for (auto& v : l.w) v = r.f64();
    for (auto& v : l.b) v = r.f64();
  }
  if (r.pos != data.size()) throw FormatError("weight file has trailing bytes");
  return net;
}

}  // namespace claps::nn
