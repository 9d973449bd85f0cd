#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace reachbench {

/// Dense row-major array of doubles.
struct Array {
  std::vector<int64_t> shape;
  std::vector<double> data;

  Array() = default;
  Array(std::vector<int64_t> s, std::vector<double> d);

  static Array zeros(std::vector<int64_t> shape);
  static Array full(std::vector<int64_t> shape, double value);
  static Array scalar(double value);
  static Array vector(std::vector<double> values);

  int64_t numel() const;
  bool same_shape(const Array& other) const;
  bool all_finite() const;
  std::string shape_str() const;
};

std::string shape_str(const std::vector<int64_t>& shape);

/// Named parameter store. Each entry owns its value, gradient and Adam
/// moment accumulators; names are unique within a store.
class NetParams {
 public:
  struct Entry {
    std::string name;
    Array value;
    Array grad;
    Array m;  // first moment
    Array v;  // second moment
  };

  int add(const std::string& name, Array init);
  Entry& entry(int idx) { return entries_[idx]; }
  const Entry& entry(int idx) const { return entries_[idx]; }
  Entry* find(const std::string& name);
  const Entry* find(const std::string& name) const;
  int size() const { return static_cast<int>(entries_.size()); }
  void zero_grads();
  int64_t adam_steps = 0;

 private:
  std::vector<Entry> entries_;
};

/// One Adam update over every entry of the store: bias-corrected first and
/// second moments, then gradients are zeroed. Throws if a gradient is
/// non-finite, naming the parameter.
void adam_step(NetParams& params, double lr, double beta1 = 0.9,
               double beta2 = 0.999, double eps = 1e-8);

/// Moves every entry of `target` toward the same-named entry of `online`:
/// target <- (1 - tau) * target + tau * online.
void polyak_update(NetParams& target, const NetParams& online, double tau);

/// Checkpoint format: "reachbench-ckpt-v1\n", u64 entry count, then per
/// entry u64 name length, name bytes, u64 rank, u64 extents, row-major f64
/// little-endian values. Bit-exact round trip.
void save_checkpoint(const NetParams& params, const std::string& path);
/// Loads values into an existing store; names and shapes must match.
void load_checkpoint(NetParams& params, const std::string& path);

using NodeId = int32_t;

/// Reverse-mode tape over Arrays. Ops evaluate eagerly; backward() walks the
/// recorded nodes once in reverse creation order (creation order is already
/// topological) and accumulates into bound parameter gradients.
class Tape {
 public:
  NodeId constant(Array value);
  NodeId param(NetParams& store, int entry_idx);

  NodeId add(NodeId a, NodeId b);          // same shape
  NodeId sub(NodeId a, NodeId b);          // same shape
  NodeId mul(NodeId a, NodeId b);          // elementwise, same shape
  NodeId add_rowvec(NodeId a, NodeId b);   // [N,D] + [D]
  NodeId add_chanvec(NodeId a, NodeId b);  // [N,C,H,W] + [C]
  NodeId scale(NodeId a, double s);
  NodeId add_scalar(NodeId a, double s);
  NodeId neg(NodeId a);
  NodeId matmul(NodeId a, NodeId b);  // [N,K] x [K,M]
  NodeId conv2d(NodeId x, NodeId k, int stride);  // valid padding
  NodeId relu(NodeId a);
  NodeId tanh(NodeId a);
  NodeId exp(NodeId a);
  NodeId log(NodeId a);
  NodeId square(NodeId a);
  NodeId abs(NodeId a);
  NodeId clamp(NodeId a, double lo, double hi);
  NodeId minimum(NodeId a, NodeId b);
  NodeId softmax_lastdim(NodeId a);
  NodeId logsumexp_lastdim(NodeId a);  // [..,K] -> [..,1]
  NodeId sum(NodeId a);                // -> [1]
  NodeId mean(NodeId a);               // -> [1]
  NodeId sum_lastdim(NodeId a);        // [..,K] -> [..,1]
  NodeId slice_lastdim(NodeId a, int64_t start, int64_t len);
  NodeId concat_lastdim(NodeId a, NodeId b);
  NodeId reshape(NodeId a, std::vector<int64_t> shape);

  const Array& value(NodeId id) const;
  /// Gradient of the last backward() root w.r.t. this node (zeros if the
  /// node did not participate).
  const Array& grad(NodeId id) const;

  /// Root must be scalar. Node grads are reset per call; parameter grads
  /// accumulate across calls.
  void backward(NodeId root);

  int64_t num_nodes() const { return static_cast<int64_t>(nodes_.size()); }

 private:
  struct Node {
    Array value;
    Array grad;
    bool grad_alive = false;
    NetParams::Entry* bound = nullptr;
    std::function<void()> backprop;  // empty for leaves
  };

  NodeId push(Array value);
  Node& node(NodeId id) { return nodes_[static_cast<size_t>(id)]; }
  Array& grad_buf(NodeId id);

  std::vector<Node> nodes_;
};

}  // namespace reachbench
