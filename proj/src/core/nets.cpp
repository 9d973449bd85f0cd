#include "core/nets.hpp"

#include <cmath>
#include <stdexcept>

namespace reachbench {

Array dense_init(Rng& rng, int64_t in, int64_t out, double scale) {
  const double lim = scale * std::sqrt(6.0 / static_cast<double>(in + out));
  Array a = Array::zeros({in, out});
  for (double& v : a.data) v = rng.uniform(-lim, lim);
  return a;
}

Array conv_init(Rng& rng, int64_t out_ch, int64_t in_ch, int64_t kh, int64_t kw,
                double scale) {
  const double fan_in = static_cast<double>(in_ch * kh * kw);
  const double fan_out = static_cast<double>(out_ch * kh * kw);
  const double lim = scale * std::sqrt(6.0 / (fan_in + fan_out));
  Array a = Array::zeros({out_ch, in_ch, kh, kw});
  for (double& v : a.data) v = rng.uniform(-lim, lim);
  return a;
}

void Mlp::init(NetParams& p, Rng& rng, double final_scale) {
  if (dims.size() < 2) throw std::invalid_argument("Mlp: need at least input and output dims");
  weights.clear();
  biases.clear();
  for (size_t l = 0; l + 1 < dims.size(); ++l) {
    const bool last = (l + 2 == dims.size());
    const double s = last ? final_scale : 1.0;
    weights.push_back(p.add(prefix + ".w" + std::to_string(l),
                            dense_init(rng, dims[l], dims[l + 1], s)));
    biases.push_back(p.add(prefix + ".b" + std::to_string(l),
                           Array::zeros({dims[l + 1]})));
  }
}

NodeId Mlp::forward(Tape& t, NetParams& p, NodeId x, bool as_constant) const {
  NodeId h = x;
  for (size_t l = 0; l < weights.size(); ++l) {
    h = t.add_rowvec(t.matmul(h, bind(t, p, weights[l], as_constant)),
                     bind(t, p, biases[l], as_constant));
    if (l + 1 < weights.size()) h = t.relu(h);
  }
  return h;
}

std::vector<double> Mlp::forward_row(const NetParams& p,
                                     const std::vector<double>& x) const {
  std::vector<double> h = x;
  for (size_t l = 0; l < weights.size(); ++l) {
    const Array& w = p.entry(weights[l]).value;
    const Array& b = p.entry(biases[l]).value;
    const int64_t in = w.shape[0], out = w.shape[1];
    if (static_cast<int64_t>(h.size()) != in)
      throw std::invalid_argument("Mlp::forward_row: input size " +
                                  std::to_string(h.size()) + " expected " +
                                  std::to_string(in));
    std::vector<double> next(static_cast<size_t>(out));
    for (int64_t j = 0; j < out; ++j) {
      double acc = b.data[static_cast<size_t>(j)];
      for (int64_t i = 0; i < in; ++i)
        acc += h[static_cast<size_t>(i)] * w.data[static_cast<size_t>(i * out + j)];
      next[static_cast<size_t>(j)] = acc;
    }
    if (l + 1 < weights.size())
      for (double& v : next) v = v > 0.0 ? v : 0.0;
    h = std::move(next);
  }
  return h;
}

}  // namespace reachbench
