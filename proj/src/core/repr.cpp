#include "core/repr.hpp"

#include <cmath>
#include <stdexcept>

namespace reachbench {

Array images_to_array(const std::vector<Image>& frames) {
  if (frames.empty()) throw std::invalid_argument("images_to_array: empty batch");
  const Image& f0 = frames.front();
  Array out = Array::zeros({static_cast<int64_t>(frames.size()), f0.channels,
                            f0.height, f0.width});
  const size_t per = f0.data.size();
  for (size_t i = 0; i < frames.size(); ++i) {
    const Image& f = frames[i];
    if (f.channels != f0.channels || f.width != f0.width || f.height != f0.height)
      throw std::invalid_argument("images_to_array: mixed frame geometry");
    std::copy(f.data.begin(), f.data.end(), out.data.begin() + static_cast<int64_t>(i * per));
  }
  return out;
}

Image random_crop(const Image& img, const CropSpec& spec, Rng& rng) {
  if (spec.crop_size <= 0 || spec.crop_size > spec.source_size)
    throw std::invalid_argument("random_crop: crop_size outside (0, source_size]");
  if (img.width != spec.source_size || img.height != spec.source_size)
    throw std::invalid_argument("random_crop: image does not match source_size");
  const int span = spec.source_size - spec.crop_size + 1;
  const int ox = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(span)));
  const int oy = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(span)));

  Image out;
  out.channels = img.channels;
  if (spec.upscale_back) {
    out.width = spec.source_size;
    out.height = spec.source_size;
    out.data.resize(static_cast<size_t>(out.channels) * out.height * out.width);
    for (int c = 0; c < out.channels; ++c)
      for (int y = 0; y < out.height; ++y) {
        const int sy = oy + static_cast<int>(static_cast<int64_t>(y) * spec.crop_size / out.height);
        for (int x = 0; x < out.width; ++x) {
          const int sx = ox + static_cast<int>(static_cast<int64_t>(x) * spec.crop_size / out.width);
          out.at(c, y, x) = img.at(c, sy, sx);
        }
      }
  } else {
    out.width = spec.crop_size;
    out.height = spec.crop_size;
    out.data.resize(static_cast<size_t>(out.channels) * out.height * out.width);
    for (int c = 0; c < out.channels; ++c)
      for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x) out.at(c, y, x) = img.at(c, oy + y, ox + x);
  }
  return out;
}

namespace {

// 64 -> 30 -> 13 under valid 5x5 stride-2 convs
constexpr int64_t kFlatDim = 32 * 13 * 13;

void init_trunk(NetParams& p, Rng& rng, const std::string& prefix, int in_channels,
                int& k1, int& b1, int& k2, int& b2) {
  k1 = p.add(prefix + ".k1", conv_init(rng, 16, in_channels, 5, 5));
  b1 = p.add(prefix + ".b1", Array::zeros({16}));
  k2 = p.add(prefix + ".k2", conv_init(rng, 32, 16, 5, 5));
  b2 = p.add(prefix + ".b2", Array::zeros({32}));
}

}  // namespace

void RawCnn::init(NetParams& p, Rng& rng) {
  init_trunk(p, rng, prefix, in_channels, k1, b1, k2, b2);
  head.prefix = prefix + ".head";
  head.dims = {kFlatDim, 512, 3000};
  head.init(p, rng);
}

NodeId RawCnn::forward(Tape& t, NetParams& p, NodeId images, bool as_constant) const {
  NodeId h = t.relu(t.add_chanvec(t.conv2d(images, bind(t, p, k1, as_constant), 2),
                                  bind(t, p, b1, as_constant)));
  h = t.add_chanvec(t.conv2d(h, bind(t, p, k2, as_constant), 2), bind(t, p, b2, as_constant));
  h = t.reshape(h, {t.value(h).shape[0], kFlatDim});
  return head.forward(t, p, h, as_constant);
}

void ContrastiveEncoder::init(NetParams& p, Rng& rng) {
  init_trunk(p, rng, prefix, in_channels, k1, b1, k2, b2);
  head.prefix = prefix + ".head";
  head.dims = {kFlatDim, 50};
  head.init(p, rng);
}

NodeId ContrastiveEncoder::forward(Tape& t, NetParams& p, NodeId images,
                                   bool as_constant) const {
  NodeId h = t.relu(t.add_chanvec(t.conv2d(images, bind(t, p, k1, as_constant), 2),
                                  bind(t, p, b1, as_constant)));
  h = t.relu(t.add_chanvec(t.conv2d(h, bind(t, p, k2, as_constant), 2),
                           bind(t, p, b2, as_constant)));
  h = t.reshape(h, {t.value(h).shape[0], kFlatDim});
  return head.forward(t, p, h, as_constant);
}

Array ContrastiveEncoder::forward_value(NetParams& p, const Array& images) const {
  Tape t;
  return t.value(forward(t, p, t.constant(images), true));
}

void momentum_update(NetParams& key, const NetParams& query, double m) {
  for (int i = 0; i < key.size(); ++i) {
    auto& k = key.entry(i);
    const NetParams::Entry* q = query.find(k.name);
    if (!q)
      throw std::invalid_argument("momentum_update: '" + k.name + "' missing from query store");
    if (!k.value.same_shape(q->value))
      throw std::invalid_argument("momentum_update: shape mismatch for " + k.name + ": " +
                                  k.value.shape_str() + " vs " + q->value.shape_str());
    for (size_t j = 0; j < k.value.data.size(); ++j)
      k.value.data[j] = m * k.value.data[j] + (1.0 - m) * q->value.data[j];
  }
}

NodeId info_nce_node(Tape& t, NodeId q, NodeId k_pos,
                     const std::vector<NodeId>& negatives, NodeId w) {
  if (negatives.empty())
    throw std::invalid_argument("info_nce: at least one negative required");
  NodeId qw = t.matmul(q, w);  // [1, D]
  NodeId logits = t.sum_lastdim(t.mul(qw, k_pos));  // [1, 1], the positive
  for (NodeId neg : negatives)
    logits = t.concat_lastdim(logits, t.sum_lastdim(t.mul(qw, neg)));
  NodeId pos = t.slice_lastdim(logits, 0, 1);
  return t.sum(t.sub(t.logsumexp_lastdim(logits), pos));
}

double info_nce(const Array& q, const Array& k_pos, const std::vector<Array>& negatives,
                const Array& w) {
  Tape t;
  std::vector<NodeId> negs;
  negs.reserve(negatives.size());
  for (const Array& n : negatives) negs.push_back(t.constant(n));
  return t.value(info_nce_node(t, t.constant(q), t.constant(k_pos), negs, t.constant(w)))
      .data[0];
}

NodeId batch_info_nce_node(Tape& t, NodeId q, NodeId w, NodeId k_transposed) {
  const Array& vq = t.value(q);
  const Array& vk = t.value(k_transposed);
  if (vq.shape.size() != 2 || vk.shape.size() != 2 || vq.shape[0] != vk.shape[1])
    throw std::invalid_argument("batch_info_nce: queries " + vq.shape_str() +
                                " vs transposed keys " + vk.shape_str());
  const int64_t b = vq.shape[0];
  if (b < 2) throw std::invalid_argument("batch_info_nce: batch of " + std::to_string(b) +
                                         " leaves no negatives");
  NodeId logits = t.matmul(t.matmul(q, w), k_transposed);  // [B, B]
  Array eye = Array::zeros({b, b});
  for (int64_t i = 0; i < b; ++i) eye.data[static_cast<size_t>(i * b + i)] = 1.0;
  NodeId diag = t.sum(t.mul(logits, t.constant(std::move(eye))));
  return t.scale(t.sub(t.sum(t.logsumexp_lastdim(logits)), diag), 1.0 / static_cast<double>(b));
}

void ContrastiveLearner::init(Rng& rng, int in_channels) {
  query_net.in_channels = in_channels;
  query_net.init(query_params, rng);
  Array eye = Array::zeros({50, 50});
  for (int64_t i = 0; i < 50; ++i) eye.data[static_cast<size_t>(i * 50 + i)] = 1.0;
  w_entry = w_params.add(query_net.prefix + ".W", std::move(eye));

  key_net.prefix = query_net.prefix;
  key_net.in_channels = in_channels;
  Rng scratch(0);  // placeholder values, overwritten by the copy below
  key_net.init(key_params, scratch);
  momentum_update(key_params, query_params, 0.0);
}

double ContrastiveLearner::step(const std::vector<Image>& batch, Rng& rng, double lr) {
  if (batch.size() < 2)
    throw std::invalid_argument("contrastive step: batch of " +
                                std::to_string(batch.size()) + " leaves no negatives");
  std::vector<Image> crops_q, crops_k;
  crops_q.reserve(batch.size());
  crops_k.reserve(batch.size());
  for (const Image& img : batch) {
    crops_q.push_back(random_crop(img, crop, rng));
    crops_k.push_back(random_crop(img, crop, rng));
  }
  const Array keys = key_net.forward_value(key_params, images_to_array(crops_k));
  const int64_t b = keys.shape[0], d = keys.shape[1];
  Array keys_t = Array::zeros({d, b});
  for (int64_t i = 0; i < b; ++i)
    for (int64_t j = 0; j < d; ++j)
      keys_t.data[static_cast<size_t>(j * b + i)] = keys.data[static_cast<size_t>(i * d + j)];

  Tape t;
  NodeId q = query_net.forward(t, query_params, t.constant(images_to_array(crops_q)));
  NodeId loss = batch_info_nce_node(t, q, t.param(w_params, w_entry),
                                    t.constant(std::move(keys_t)));
  const double value = t.value(loss).data[0];
  t.backward(loss);
  adam_step(query_params, lr);
  adam_step(w_params, lr);
  momentum_update(key_params, query_params, momentum);
  return value;
}

NodeId ContrastiveLearner::encode(Tape& t, NodeId images, bool as_constant) {
  return query_net.forward(t, query_params, images, as_constant);
}

}  // namespace reachbench
