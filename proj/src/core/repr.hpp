#pragma once

#include <vector>

#include "core/autodiff.hpp"
#include "core/nets.hpp"
#include "core/render.hpp"

namespace reachbench {

/// Stacks channel-planar frames into a [N, C, H, W] batch. All frames must
/// share one geometry.
Array images_to_array(const std::vector<Image>& frames);

struct CropSpec {
  int source_size = 64;
  int crop_size = 56;
  bool upscale_back = true;  // nearest-neighbor resize back to source_size
};

/// Uniformly positioned square crop, identical offsets for every channel.
Image random_crop(const Image& img, const CropSpec& spec, Rng& rng);

/// conv(C->16, 5x5, s2) -> relu -> conv(16->32, 5x5, s2) -> flatten
/// -> dense(5408->512) -> relu -> dense(512->3000). The end-to-end feature
/// stack for the raw-image pipeline; the critic loss trains it.
struct RawCnn {
  std::string prefix = "raw";
  int in_channels = 6;
  int k1 = -1, b1 = -1, k2 = -1, b2 = -1;
  Mlp head;

  int64_t out_dim() const { return 3000; }
  void init(NetParams& p, Rng& rng);
  /// images: [N, in_channels, 64, 64] -> [N, 3000]
  NodeId forward(Tape& t, NetParams& p, NodeId images, bool as_constant = false) const;
};

/// conv(C->16, 5x5, s2) -> relu -> conv(16->32, 5x5, s2) -> relu -> flatten
/// -> dense(5408->50).
struct ContrastiveEncoder {
  std::string prefix = "enc";
  int in_channels = 6;
  int k1 = -1, b1 = -1, k2 = -1, b2 = -1;
  Mlp head;

  int64_t out_dim() const { return 50; }
  void init(NetParams& p, Rng& rng);
  NodeId forward(Tape& t, NetParams& p, NodeId images, bool as_constant = false) const;
  /// Value-only forward (key encodings never carry gradients).
  Array forward_value(NetParams& p, const Array& images) const;
};

/// key <- m*key + (1-m)*query, matched by entry name; entries private to the
/// key store (none here) are left alone, every key entry must exist in query.
void momentum_update(NetParams& key, const NetParams& query, double m = 0.99);

/// -log( exp(q^T W k+) / (exp(q^T W k+) + sum_p exp(q^T W k_p)) ),
/// max-subtracted. q, k_pos, negatives: [1, D] rows; w: [D, D].
NodeId info_nce_node(Tape& t, NodeId q, NodeId k_pos,
                     const std::vector<NodeId>& negatives, NodeId w);
double info_nce(const Array& q, const Array& k_pos,
                const std::vector<Array>& negatives, const Array& w);

/// Batched form: logits = Q W K^T with the matched key on the diagonal,
/// mean cross-entropy against the diagonal. q: [B, D]; k_transposed: [D, B].
/// Equals the mean of row-wise info_nce with the other keys as negatives.
NodeId batch_info_nce_node(Tape& t, NodeId q, NodeId w, NodeId k_transposed);

/// Query/key encoder pair with a learnable bilinear similarity, trained by
/// instance discrimination over random crops.
struct ContrastiveLearner {
  // W lives in its own store: the agent's critic step sweeps query_params
  // with its own adam schedule, and W belongs to the contrastive loss only.
  NetParams query_params;  // encoder entries
  NetParams key_params;
  NetParams w_params;  // single "<prefix>.W" entry, initialized to identity
  ContrastiveEncoder query_net;
  ContrastiveEncoder key_net;
  int w_entry = -1;
  double momentum = 0.99;
  CropSpec crop;

  void init(Rng& rng, int in_channels = 6);
  /// Two crops per frame; queries encode crop 1 on the tape, keys encode
  /// crop 2 outside it; one adam step on the query store; then the momentum
  /// update. Returns the loss. batch.size() >= 2 (the other keys are the
  /// negatives).
  double step(const std::vector<Image>& batch, Rng& rng, double lr);
  /// Inference features for a [N, C, 64, 64] batch, no crop, on the tape.
  NodeId encode(Tape& t, NodeId images, bool as_constant = false);
};

}  // namespace reachbench
