#include "core/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace reachbench {

namespace {

using MatMap = Eigen::Map<
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstMatMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic,
                                                   Eigen::Dynamic, Eigen::RowMajor>>;

[[noreturn]] void shape_error(const std::string& op, const Array& a,
                              const Array& b) {
  throw std::invalid_argument(op + ": shape mismatch " + a.shape_str() +
                              " vs " + b.shape_str());
}

[[noreturn]] void shape_error(const std::string& op, const Array& a) {
  throw std::invalid_argument(op + ": bad shape " + a.shape_str());
}

int64_t last_dim(const Array& a) {
  if (a.shape.empty()) shape_error("last_dim", a);
  return a.shape.back();
}

}  // namespace

Array::Array(std::vector<int64_t> s, std::vector<double> d)
    : shape(std::move(s)), data(std::move(d)) {
  if (numel() != static_cast<int64_t>(data.size()))
    throw std::invalid_argument("Array: data length " +
                                std::to_string(data.size()) +
                                " does not match shape " + shape_str());
}

Array Array::zeros(std::vector<int64_t> shape) {
  Array a;
  a.shape = std::move(shape);
  a.data.assign(static_cast<size_t>(a.numel()), 0.0);
  return a;
}

Array Array::full(std::vector<int64_t> shape, double value) {
  Array a = zeros(std::move(shape));
  std::fill(a.data.begin(), a.data.end(), value);
  return a;
}

Array Array::scalar(double value) { return Array({1}, {value}); }

Array Array::vector(std::vector<double> values) {
  Array a;
  a.shape = {static_cast<int64_t>(values.size())};
  a.data = std::move(values);
  return a;
}

int64_t Array::numel() const {
  int64_t n = 1;
  for (int64_t e : shape) {
    if (e <= 0) throw std::invalid_argument("Array: nonpositive extent in " + shape_str());
    n *= e;
  }
  return n;
}

bool Array::same_shape(const Array& other) const { return shape == other.shape; }

bool Array::all_finite() const {
  for (double v : data)
    if (!std::isfinite(v)) return false;
  return true;
}

std::string Array::shape_str() const { return reachbench::shape_str(shape); }

std::string shape_str(const std::vector<int64_t>& shape) {
  std::string s = "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

int NetParams::add(const std::string& name, Array init) {
  if (find(name) != nullptr)
    throw std::invalid_argument("NetParams: duplicate name " + name);
  Entry e;
  e.name = name;
  e.grad = Array::zeros(init.shape);
  e.m = Array::zeros(init.shape);
  e.v = Array::zeros(init.shape);
  e.value = std::move(init);
  entries_.push_back(std::move(e));
  return static_cast<int>(entries_.size()) - 1;
}

NetParams::Entry* NetParams::find(const std::string& name) {
  for (auto& e : entries_)
    if (e.name == name) return &e;
  return nullptr;
}

const NetParams::Entry* NetParams::find(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return &e;
  return nullptr;
}

void NetParams::zero_grads() {
  for (auto& e : entries_) std::fill(e.grad.data.begin(), e.grad.data.end(), 0.0);
}

void adam_step(NetParams& params, double lr, double beta1, double beta2,
               double eps) {
  params.adam_steps += 1;
  const double t = static_cast<double>(params.adam_steps);
  const double bc1 = 1.0 - std::pow(beta1, t);
  const double bc2 = 1.0 - std::pow(beta2, t);
  for (int i = 0; i < params.size(); ++i) {
    auto& e = params.entry(i);
    for (size_t j = 0; j < e.value.data.size(); ++j) {
      const double g = e.grad.data[j];
      if (!std::isfinite(g))
        throw std::runtime_error("adam_step: non-finite gradient in parameter " + e.name);
      e.m.data[j] = beta1 * e.m.data[j] + (1.0 - beta1) * g;
      e.v.data[j] = beta2 * e.v.data[j] + (1.0 - beta2) * g * g;
      const double mhat = e.m.data[j] / bc1;
      const double vhat = e.v.data[j] / bc2;
      e.value.data[j] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
    std::fill(e.grad.data.begin(), e.grad.data.end(), 0.0);
  }
}

void polyak_update(NetParams& target, const NetParams& online, double tau) {
  if (target.size() != online.size())
    throw std::invalid_argument("polyak_update: store sizes differ");
  for (int i = 0; i < target.size(); ++i) {
    auto& t = target.entry(i);
    const auto& o = online.entry(i);
    if (!t.value.same_shape(o.value))
      throw std::invalid_argument("polyak_update: shape mismatch for " + t.name +
                                  ": " + t.value.shape_str() + " vs " +
                                  o.value.shape_str());
    for (size_t j = 0; j < t.value.data.size(); ++j)
      t.value.data[j] = (1.0 - tau) * t.value.data[j] + tau * o.value.data[j];
  }
}

namespace {
constexpr char kCkptHeader[] = "reachbench-ckpt-v1\n";

template <typename T>
void write_raw(std::ofstream& f, const T& v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::ifstream& f) {
  T v;
  f.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!f) throw std::runtime_error("checkpoint: truncated file");
  return v;
}
}  // namespace

void save_checkpoint(const NetParams& params, const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
  f.write(kCkptHeader, sizeof(kCkptHeader) - 1);
  write_raw<uint64_t>(f, static_cast<uint64_t>(params.size()));
  for (int i = 0; i < params.size(); ++i) {
    const auto& e = params.entry(i);
    write_raw<uint64_t>(f, e.name.size());
    f.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    write_raw<uint64_t>(f, e.value.shape.size());
    for (int64_t ext : e.value.shape) write_raw<uint64_t>(f, static_cast<uint64_t>(ext));
    f.write(reinterpret_cast<const char*>(e.value.data.data()),
            static_cast<std::streamsize>(e.value.data.size() * sizeof(double)));
  }
  if (!f) throw std::runtime_error("checkpoint: write failed for " + path);
}

void load_checkpoint(NetParams& params, const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
  char header[sizeof(kCkptHeader) - 1];
  f.read(header, sizeof(header));
  if (!f || std::memcmp(header, kCkptHeader, sizeof(header)) != 0)
    throw std::runtime_error("checkpoint: bad header in " + path);
  const uint64_t count = read_raw<uint64_t>(f);
  if (count != static_cast<uint64_t>(params.size()))
    throw std::runtime_error("checkpoint: entry count mismatch in " + path);
  for (uint64_t i = 0; i < count; ++i) {
    const uint64_t name_len = read_raw<uint64_t>(f);
    std::string name(name_len, '\0');
    f.read(name.data(), static_cast<std::streamsize>(name_len));
    const uint64_t rank = read_raw<uint64_t>(f);
    std::vector<int64_t> shape(rank);
    for (uint64_t r = 0; r < rank; ++r)
      shape[r] = static_cast<int64_t>(read_raw<uint64_t>(f));
    auto* e = params.find(name);
    if (e == nullptr)
      throw std::runtime_error("checkpoint: unknown parameter " + name + " in " + path);
    if (e->value.shape != shape)
      throw std::runtime_error("checkpoint: shape mismatch for " + name + ": have " +
                               e->value.shape_str() + ", file has " + shape_str(shape));
    f.read(reinterpret_cast<char*>(e->value.data.data()),
           static_cast<std::streamsize>(e->value.data.size() * sizeof(double)));
    if (!f) throw std::runtime_error("checkpoint: truncated values in " + path);
  }
}

NodeId Tape::push(Array value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Tape::constant(Array value) { return push(std::move(value)); }

NodeId Tape::param(NetParams& store, int entry_idx) {
  NodeId id = push(store.entry(entry_idx).value);
  node(id).bound = &store.entry(entry_idx);
  return id;
}

const Array& Tape::value(NodeId id) const {
  return nodes_[static_cast<size_t>(id)].value;
}

const Array& Tape::grad(NodeId id) const {
  // Materialize zeros on demand so untouched nodes still report a gradient.
  Node& n = const_cast<Tape*>(this)->node(id);
  if (!n.grad_alive) {
    n.grad = Array::zeros(n.value.shape);
    n.grad_alive = true;
  }
  return n.grad;
}

Array& Tape::grad_buf(NodeId id) {
  Node& n = node(id);
  if (!n.grad_alive) {
    n.grad = Array::zeros(n.value.shape);
    n.grad_alive = true;
  }
  return n.grad;
}

void Tape::backward(NodeId root) {
  Node& r = node(root);
  if (r.value.numel() != 1)
    throw std::invalid_argument("backward: root must be scalar, got " +
                                r.value.shape_str());
  if (!std::isfinite(r.value.data[0]))
    throw std::runtime_error("backward: non-finite root value");
  for (auto& n : nodes_) {
    n.grad_alive = false;
  }
  grad_buf(root).data[0] = 1.0;
  for (int64_t i = static_cast<int64_t>(nodes_.size()) - 1; i >= 0; --i) {
    Node& n = nodes_[static_cast<size_t>(i)];
    if (!n.grad_alive) continue;
    if (n.backprop) n.backprop();
    if (n.bound != nullptr) {
      auto& g = n.bound->grad.data;
      const auto& src = n.grad.data;
      for (size_t j = 0; j < g.size(); ++j) g[j] += src[j];
    }
  }
}

NodeId Tape::add(NodeId a, NodeId b) {
  const Array& va = value(a);
  const Array& vb = value(b);
  if (!va.same_shape(vb)) shape_error("add", va, vb);
  Array out = va;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += vb.data[i];
  NodeId id = push(std::move(out));
  node(id).backprop = [this, id, a, b]() {
    const auto& g = node(id).grad.data;
    auto& ga = grad_buf(a).data;
    auto& gb = grad_buf(b).data;
    for (size_t i = 0; i < g.size(); ++i) {
      ga[i] += g[i];
      gb[i] += g[i];
    }
  };
  return id;
}

NodeId Tape::sub(NodeId a, NodeId b) {
  const Array& va = value(a);
  const Array& vb = value(b);
  if (!va.same_shape(vb)) shape_error("sub", va, vb);
  Array out = va;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] -= vb.data[i];
  NodeId id = push(std::move(out));
  node(id).backprop = [this, id, a, b]() {
    const auto& g = node(id).grad.data;
    auto& ga = grad_buf(a).data;
    auto& gb = grad_buf(b).data;
    for (size_t i = 0; i < g.size(); ++i) {
      ga[i] += g[i];
      gb[i] -= g[i];
    }
  };
  return id;
}

NodeId Tape::mul(NodeId a, NodeId b) {
  const Array& va = value(a);
  const Array& vb = value(b);
  if (!va.same_shape(vb)) shape_error("mul", va, vb);
  Array out = va;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= vb.data[i];
  NodeId id = push(std::move(out));
  node(id).backprop = [this, id, a, b]() {
    const auto& g = node(id).grad.data;
    const auto& xa = node(a).value.data;
    const auto& xb = node(b).value.data;
    auto& ga = grad_buf(a).data;
    auto& gb = grad_buf(b).data;
    for (size_t i = 0; i < g.size(); ++i) {
      ga[i] += g[i] * xb[i];
      gb[i] += g[i] * xa[i];
    }
  };
  return id;
}

NodeId Tape::add_rowvec(NodeId a, NodeId b) {
  const Array& va = value(a);
  const Array& vb = value(b);
  if (va.shape.size() != 2 || vb.shape.size() != 1 || va.shape[1] != vb.shape[0])
    shape_error("add_rowvec", va, vb);
  Array out = va;
  const int64_t n = va.shape[0], d = va.shape[1];
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < d; ++j) out.data[static_cast<size_t>(i * d + j)] += vb.data[static_cast<size_t>(j)];
  NodeId id = push(std::move(out));
  node(id).backprop = [this, id, a, b, n, d]() {
    const auto& g = node(id).grad.data;
    auto& ga = grad_buf(a).data;
    auto& gb = grad_buf(b).data;
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < d; ++j) {
        ga[static_cast<size_t>(i * d + j)] += g[static_cast<size_t>(i * d + j)];
        gb[static_cast<size_t>(j)] += g[static_cast<size_t>(i * d + j)];
      }
  };
  return id;
}

NodeId Tape::add_chanvec(NodeId a, NodeId b) {
  const Array& va = value(a);
  const Array& vb = value(b);
  if (va.shape.size() != 4 || vb.shape.size() != 1 || va.shape[1] != vb.shape[0])
    shape_error("add_chanvec", va, vb);
  Array out = va;
  const int64_t n = va.shape[0], c = va.shape[1], hw = va.shape[2] * va.shape[3];
  for (int64_t i = 0; i < n; ++i)
    for (int64_t ch = 0; ch < c; ++ch) {
      double bias = vb.data[static_cast<size_t>(ch)];
      double* p = out.data.data() + (i * c + ch) * hw;
      for (int64_t k = 0; k < hw; ++k) p[k] += bias;
    }
  NodeId id = push(std::move(out));
  node(id).backprop = [this, id, a, b, n, c, hw]() {
    const auto& g = node(id).grad.data;
    auto& ga = grad_buf(a).data;
    auto& gb = grad_buf(b).data;
    for (int64_t i = 0; i < n; ++i)
      for (int64_t ch = 0; ch < c; ++ch) {
        const double* gp = g.data() + (i * c + ch) * hw;
        double* gap = ga.data() + (i * c + ch) * hw;
        double acc = 0.0;
        for (int64_t k = 0; k < hw; ++k) {
          gap[k] += gp[k];
          acc += gp[k];
        }
        gb[static_cast<size_t>(ch)] += acc;
      }
  };
  return id;
}

NodeId Tape::scale(NodeId a, double s) {
  Array out = value(a);
  for (double& v : out.data) v *= s;
  NodeId id = push(std::move(out));
  node(id).backprop = [this, id, a, s]() {
    const auto& g = node(id).grad.data;
    auto& ga = grad_buf(a).data;
    for (size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
  };
  return id;
}

NodeId Tape::add_scalar(NodeId a, double s) {
  Array out = value(a);
  for (double& v : out.data) v += s;
  NodeId id = push(std::move(out));
  node(id).backprop = [this, id, a]() {
    const auto& g = node(id).grad.data;
    auto& ga = grad_buf(a).data;
    for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  };
  return id;
}

NodeId Tape::neg(NodeId a) { return scale(a, -1.0); }

NodeId Tape::matmul(NodeId a, NodeId b) {
  const Array& va = value(a);
  const Array& vb = value(b);
  if (va.shape.size() != 2 || vb.shape.size() != 2 || va.shape[1] != vb.shape[0])
    shape_error("matmul", va, vb);
  const int64_t n = va.shape[0], k = va.shape[1], m = vb.shape[1];
  Array out = Array::zeros({n, m});
  {
    ConstMatMap A(va.data.data(), n, k);
    ConstMatMap B(vb.data.data(), k, m);
    MatMap C(out.data.data(), n, m);
    C.noalias() = A * B;
  }
  NodeId id = push(std::move(out));
  node(id).backprop = [this, id, a, b, n, k, m]() {
    ConstMatMap G(node(id).grad.data.data(), n, m);
    ConstMatMap A(node(a).value.data.data(), n, k);
    ConstMatMap B(node(b).value.data.data(), k, m);
    MatMap GA(grad_buf(a).data.data(), n, k);
    MatMap GB(grad_buf(b).data.data(), k, m);
    GA.noalias() += G * B.transpose();
    GB.noalias() += A.transpose() * G;
  };
  return id;
}

namespace {

// Scatters columns of a [C*kh*kw, oh*ow] patch matrix back into an image.
void col2im_accum(const double* col, double* img, int64_t c, int64_t h,
                  int64_t w, int64_t kh, int64_t kw, int64_t oh, int64_t ow,
                  int stride) {
  for (int64_t ch = 0; ch < c; ++ch)
    for (int64_t ky = 0; ky < kh; ++ky)
      for (int64_t kx = 0; kx < kw; ++kx) {
        const int64_t row = (ch * kh + ky) * kw + kx;
        for (int64_t oy = 0; oy < oh; ++oy) {
          const int64_t iy = oy * stride + ky;
          for (int64_t ox = 0; ox < ow; ++ox) {
            const int64_t ix = ox * stride + kx;
            img[(ch * h + iy) * w + ix] += col[row * (oh * ow) + oy * ow + ox];
          }
        }
      }
}

void im2col(const double* img, double* col, int64_t c, int64_t h, int64_t w,
            int64_t kh, int64_t kw, int64_t oh, int64_t ow, int stride) {
  for (int64_t ch = 0; ch < c; ++ch)
    for (int64_t ky = 0; ky < kh; ++ky)
      for (int64_t kx = 0; kx < kw; ++kx) {
        const int64_t row = (ch * kh + ky) * kw + kx;
        for (int64_t oy = 0; oy < oh; ++oy) {
          const int64_t iy = oy * stride + ky;
          for (int64_t ox = 0; ox < ow; ++ox) {
            const int64_t ix = ox * stride + kx;
            col[row * (oh * ow) + oy * ow + ox] = img[(ch * h + iy) * w + ix];
          }
        }
      }
}

}  // namespace

NodeId Tape::conv2d(NodeId x, NodeId k, int stride) {
  const Array& vx = value(x);
  const Array& vk = value(k);
  if (vx.shape.size() != 4 || vk.shape.size() != 4 || vx.shape[1] != vk.shape[1])
    shape_error("conv2d", vx, vk);
  if (stride < 1) throw std::invalid_argument("conv2d: stride must be >= 1");
  const int64_t n = vx.shape[0], c = vx.shape[1], h = vx.shape[2], w = vx.shape[3];
  const int64_t f = vk.shape[0], kh = vk.shape[2], kw = vk.shape[3];
  if (kh > h || kw > w) shape_error("conv2d", vx, vk);
  const int64_t oh = (h - kh) / stride + 1;
  const int64_t ow = (w - kw) / stride + 1;
  const int64_t patch = c * kh * kw;
  Array out = Array::zeros({n, f, oh, ow});
  std::vector<double> col(static_cast<size_t>(patch * oh * ow));
  ConstMatMap K(vk.data.data(), f, patch);
  for (int64_t i = 0; i < n; ++i) {
    im2col(vx.data.data() + i * c * h * w, col.data(), c, h, w, kh, kw, oh, ow, stride);
    ConstMatMap Col(col.data(), patch, oh * ow);
    MatMap O(out.data.data() + i * f * oh * ow, f, oh * ow);
    O.noalias() = K * Col;
  }
  NodeId id = push(std::move(out));
  node(id).backprop = [this, id, x, k, stride, n, c, h, w, f, kh, kw, oh, ow,
                       patch]() {
    const Array& gx_out = node(id).grad;
    const Array& vx2 = node(x).value;
    const Array& vk2 = node(k).value;
    Array& gx = grad_buf(x);
    Array& gk = grad_buf(k);
    std::vector<double> col(static_cast<size_t>(patch * oh * ow));
    ConstMatMap K(vk2.data.data(), f, patch);
    MatMap GK(gk.data.data(), f, patch);
    for (int64_t i = 0; i < n; ++i) {
      ConstMatMap GO(gx_out.data.data() + i * f * oh * ow, f, oh * ow);
      // dK += GO * col(x)^T
      im2col(vx2.data.data() + i * c * h * w, col.data(), c, h, w, kh, kw, oh, ow, stride);
      ConstMatMap Col(col.data(), patch, oh * ow);
      GK.noalias() += GO * Col.transpose();
      // dX += col2im(K^T * GO)
      MatMap ColG(col.data(), patch, oh * ow);
      ColG.noalias() = K.transpose() * GO;
      col2im_accum(col.data(), gx.data.data() + i * c * h * w, c, h, w, kh, kw, oh, ow, stride);
    }
  };
  return id;
}

NodeId Tape::relu(NodeId a) {
  Array out = value(a);
  for (double& v : out.data) v = v > 0.0 ? v : 0.0;
  NodeId id = push(std::move(out));
  node(id).backprop = [this, id, a]() {
    const auto& g = node(id).grad.data;
    const auto& x = node(a).value.data;
    auto& ga = grad_buf(a).data;
    for (size_t i = 0; i < g.size(); ++i)
      if (x[i] > 0.0) ga[i] += g[i];
  };
  return id;
}

NodeId Tape::tanh(NodeId a) {
  Array out = value(a);
  for (double& v : out.data) v = std::tanh(v);
  NodeId id = push(std::move(out));
  node(id).backprop = [this, id, a]() {
    const auto& g = node(id).grad.data;
    const auto& y = node(id).value.data;
    auto& ga = grad_buf(a).data;
    for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
  };
  return id;
}

NodeId Tape::exp(NodeId a) {
  Array out = value(a);
  for (double& v : out.data) v = std::exp(v);
  NodeId id = push(std::move(out));
  node(id).backprop = [this, id, a]() {
    const auto& g = node(id).grad.data;
    const auto& y = node(id).value.data;
    auto& ga = grad_buf(a).data;
    for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
  };
  return id;
}

NodeId Tape::log(NodeId a) {
  Array out = value(a);
  for (double& v : out.data) v = std::log(v);
  NodeId id = push(std::move(out));
  node(id).backprop = [this, id, a]() {
    const auto& g = node(id).grad.data;
    const auto& x = node(a).value.data;
    auto& ga = grad_buf(a).data;
    for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / x[i];
  };
  return id;
}

NodeId Tape::square(NodeId a) {
  Array out = value(a);
  for (double& v : out.data) v = v * v;
  NodeId id = push(std::move(out));
  node(id).backprop = [this, id, a]() {
    const auto& g = node(id).grad.data;
    const auto& x = node(a).value.data;
    auto& ga = grad_buf(a).data;
    for (size_t i = 0; i < g.size(); ++i) ga[i] += 2.0 * x[i] * g[i];
  };
  return id;
}

NodeId Tape::abs(NodeId a) {
  Array out = value(a);
  for (double& v : out.data) v = std::fabs(v);
  NodeId id = push(std::move(out));
  node(id).backprop = [this, id, a]() {
    const auto& g = node(id).grad.data;
    const auto& x = node(a).value.data;
    auto& ga = grad_buf(a).data;
    for (size_t i = 0; i < g.size(); ++i)
      ga[i] += g[i] * (x[i] > 0.0 ? 1.0 : (x[i] < 0.0 ? -1.0 : 0.0));
  };
  return id;
}

NodeId Tape::clamp(NodeId a, double lo, double hi) {
  Array out = value(a);
  for (double& v : out.data) v = std::min(std::max(v, lo), hi);
  NodeId id = push(std::move(out));
  node(id).backprop = [this, id, a, lo, hi]() {
    const auto& g = node(id).grad.data;
    const auto& x = node(a).value.data;
    auto& ga = grad_buf(a).data;
    for (size_t i = 0; i < g.size(); ++i)
      if (x[i] >= lo && x[i] <= hi) ga[i] += g[i];
  };
  return id;
}

NodeId Tape::minimum(NodeId a, NodeId b) {
  const Array& va = value(a);
  const Array& vb = value(b);
  if (!va.same_shape(vb)) shape_error("minimum", va, vb);
  Array out = va;
  for (size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = std::min(va.data[i], vb.data[i]);
  NodeId id = push(std::move(out));
  node(id).backprop = [this, id, a, b]() {
    const auto& g = node(id).grad.data;
    const auto& xa = node(a).value.data;
    const auto& xb = node(b).value.data;
    auto& ga = grad_buf(a).data;
    auto& gb = grad_buf(b).data;
    for (size_t i = 0; i < g.size(); ++i) {
      if (xa[i] <= xb[i])
        ga[i] += g[i];
      else
        gb[i] += g[i];
    }
  };
  return id;
}

NodeId Tape::softmax_lastdim(NodeId a) {
  const Array& va = value(a);
  const int64_t k = last_dim(va);
  const int64_t rows = va.numel() / k;
  Array out = va;
  for (int64_t r = 0; r < rows; ++r) {
    double* p = out.data.data() + r * k;
    double mx = p[0];
    for (int64_t j = 1; j < k; ++j) mx = std::max(mx, p[j]);
    double s = 0.0;
    for (int64_t j = 0; j < k; ++j) {
      p[j] = std::exp(p[j] - mx);
      s += p[j];
    }
    for (int64_t j = 0; j < k; ++j) p[j] /= s;
  }
  NodeId id = push(std::move(out));
  node(id).backprop = [this, id, a, rows, k]() {
    const auto& g = node(id).grad.data;
    const auto& y = node(id).value.data;
    auto& ga = grad_buf(a).data;
    for (int64_t r = 0; r < rows; ++r) {
      const double* gp = g.data() + r * k;
      const double* yp = y.data() + r * k;
      double dot = 0.0;
      for (int64_t j = 0; j < k; ++j) dot += gp[j] * yp[j];
      double* gap = ga.data() + r * k;
      for (int64_t j = 0; j < k; ++j) gap[j] += yp[j] * (gp[j] - dot);
    }
  };
  return id;
}

NodeId Tape::logsumexp_lastdim(NodeId a) {
  const Array& va = value(a);
  const int64_t k = last_dim(va);
  const int64_t rows = va.numel() / k;
  std::vector<int64_t> out_shape = va.shape;
  out_shape.back() = 1;
  Array out = Array::zeros(out_shape);
  for (int64_t r = 0; r < rows; ++r) {
    const double* p = va.data.data() + r * k;
    double mx = p[0];
    for (int64_t j = 1; j < k; ++j) mx = std::max(mx, p[j]);
    double s = 0.0;
    for (int64_t j = 0; j < k; ++j) s += std::exp(p[j] - mx);
    out.data[static_cast<size_t>(r)] = mx + std::log(s);
  }
  NodeId id = push(std::move(out));
  node(id).backprop = [this, id, a, rows, k]() {
    const auto& g = node(id).grad.data;
    const auto& x = node(a).value.data;
    const auto& y = node(id).value.data;
    auto& ga = grad_buf(a).data;
    for (int64_t r = 0; r < rows; ++r) {
      const double lse = y[static_cast<size_t>(r)];
      const double gr = g[static_cast<size_t>(r)];
      const double* xp = x.data() + r * k;
      double* gap = ga.data() + r * k;
      for (int64_t j = 0; j < k; ++j) gap[j] += gr * std::exp(xp[j] - lse);
    }
  };
  return id;
}

NodeId Tape::sum(NodeId a) {
  const Array& va = value(a);
  double s = 0.0;
  for (double v : va.data) s += v;
  NodeId id = push(Array::scalar(s));
  node(id).backprop = [this, id, a]() {
    const double g = node(id).grad.data[0];
    auto& ga = grad_buf(a).data;
    for (double& v : ga) v += g;
  };
  return id;
}

NodeId Tape::mean(NodeId a) {
  const Array& va = value(a);
  const double inv = 1.0 / static_cast<double>(va.numel());
  double s = 0.0;
  for (double v : va.data) s += v;
  NodeId id = push(Array::scalar(s * inv));
  node(id).backprop = [this, id, a, inv]() {
    const double g = node(id).grad.data[0] * inv;
    auto& ga = grad_buf(a).data;
    for (double& v : ga) v += g;
  };
  return id;
}

NodeId Tape::sum_lastdim(NodeId a) {
  const Array& va = value(a);
  const int64_t k = last_dim(va);
  const int64_t rows = va.numel() / k;
  std::vector<int64_t> out_shape = va.shape;
  out_shape.back() = 1;
  Array out = Array::zeros(out_shape);
  for (int64_t r = 0; r < rows; ++r) {
    const double* p = va.data.data() + r * k;
    double s = 0.0;
    for (int64_t j = 0; j < k; ++j) s += p[j];
    out.data[static_cast<size_t>(r)] = s;
  }
  NodeId id = push(std::move(out));
  node(id).backprop = [this, id, a, rows, k]() {
    const auto& g = node(id).grad.data;
    auto& ga = grad_buf(a).data;
    for (int64_t r = 0; r < rows; ++r) {
      const double gr = g[static_cast<size_t>(r)];
      double* gap = ga.data() + r * k;
      for (int64_t j = 0; j < k; ++j) gap[j] += gr;
    }
  };
  return id;
}

NodeId Tape::slice_lastdim(NodeId a, int64_t start, int64_t len) {
  const Array& va = value(a);
  const int64_t k = last_dim(va);
  if (start < 0 || len <= 0 || start + len > k)
    throw std::invalid_argument("slice_lastdim: range [" + std::to_string(start) +
                                "," + std::to_string(start + len) +
                                ") out of bounds for " + va.shape_str());
  const int64_t rows = va.numel() / k;
  std::vector<int64_t> out_shape = va.shape;
  out_shape.back() = len;
  Array out = Array::zeros(out_shape);
  for (int64_t r = 0; r < rows; ++r)
    std::copy_n(va.data.data() + r * k + start, len, out.data.data() + r * len);
  NodeId id = push(std::move(out));
  node(id).backprop = [this, id, a, rows, k, start, len]() {
    const auto& g = node(id).grad.data;
    auto& ga = grad_buf(a).data;
    for (int64_t r = 0; r < rows; ++r)
      for (int64_t j = 0; j < len; ++j)
        ga[static_cast<size_t>(r * k + start + j)] += g[static_cast<size_t>(r * len + j)];
  };
  return id;
}

NodeId Tape::concat_lastdim(NodeId a, NodeId b) {
  const Array& va = value(a);
  const Array& vb = value(b);
  if (va.shape.size() != vb.shape.size() || va.shape.empty())
    shape_error("concat_lastdim", va, vb);
  for (size_t i = 0; i + 1 < va.shape.size(); ++i)
    if (va.shape[i] != vb.shape[i]) shape_error("concat_lastdim", va, vb);
  const int64_t ka = va.shape.back(), kb = vb.shape.back();
  const int64_t rows = va.numel() / ka;
  std::vector<int64_t> out_shape = va.shape;
  out_shape.back() = ka + kb;
  Array out = Array::zeros(out_shape);
  for (int64_t r = 0; r < rows; ++r) {
    std::copy_n(va.data.data() + r * ka, ka, out.data.data() + r * (ka + kb));
    std::copy_n(vb.data.data() + r * kb, kb, out.data.data() + r * (ka + kb) + ka);
  }
  NodeId id = push(std::move(out));
  node(id).backprop = [this, id, a, b, rows, ka, kb]() {
    const auto& g = node(id).grad.data;
    auto& ga = grad_buf(a).data;
    auto& gb = grad_buf(b).data;
    for (int64_t r = 0; r < rows; ++r) {
      for (int64_t j = 0; j < ka; ++j)
        ga[static_cast<size_t>(r * ka + j)] += g[static_cast<size_t>(r * (ka + kb) + j)];
      for (int64_t j = 0; j < kb; ++j)
        gb[static_cast<size_t>(r * kb + j)] += g[static_cast<size_t>(r * (ka + kb) + ka + j)];
    }
  };
  return id;
}

NodeId Tape::reshape(NodeId a, std::vector<int64_t> shape) {
  const Array& va = value(a);
  Array out;
  out.shape = std::move(shape);
  if (out.numel() != va.numel())
    throw std::invalid_argument("reshape: cannot reshape " + va.shape_str() +
                                " to " + shape_str(out.shape));
  out.data = va.data;
  NodeId id = push(std::move(out));
  node(id).backprop = [this, id, a]() {
    const auto& g = node(id).grad.data;
    auto& ga = grad_buf(a).data;
    for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  };
  return id;
}

}  // namespace reachbench
