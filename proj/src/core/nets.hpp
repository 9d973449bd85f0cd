#pragma once

#include <string>
#include <vector>

#include "core/autodiff.hpp"
#include "core/common.hpp"

namespace reachbench {

/// Uniform init in ±sqrt(6 / (fan_in + fan_out)), optionally rescaled.
Array dense_init(Rng& rng, int64_t in, int64_t out, double scale = 1.0);
/// Conv kernels use receptive-field fan: fan_in = in_ch*kh*kw, fan_out = out_ch*kh*kw.
Array conv_init(Rng& rng, int64_t out_ch, int64_t in_ch, int64_t kh, int64_t kw,
                double scale = 1.0);

/// Fully connected stack, relu between layers, linear head. Parameters are
/// registered in the owning store under "<prefix>.w<i>" / "<prefix>.b<i>".
struct Mlp {
  std::string prefix;
  std::vector<int64_t> dims;  // input, hidden..., output
  std::vector<int> weights;   // entry indices in the owning store
  std::vector<int> biases;

  // final_scale shrinks the head layer init (policy heads start near zero).
  void init(NetParams& p, Rng& rng, double final_scale = 1.0);
  /// x: [N, dims.front()] -> [N, dims.back()]. With as_constant the weights
  /// enter the tape as constants and receive no gradient.
  NodeId forward(Tape& t, NetParams& p, NodeId x, bool as_constant = false) const;
  /// Value-only forward for single rows outside any tape (action selection).
  std::vector<double> forward_row(const NetParams& p,
                                  const std::vector<double>& x) const;
};

/// Binds a store entry either as a trainable param or a constant.
inline NodeId bind(Tape& t, NetParams& p, int idx, bool as_constant) {
  return as_constant ? t.constant(p.entry(idx).value) : t.param(p, idx);
}

}  // namespace reachbench
