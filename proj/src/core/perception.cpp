#include "core/perception.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace reachbench {

namespace {

bool pixel_matches(const Image& img, int y, int x, const ColorSpec& c) {
  const double v = img.at(c.channel, y, x);
  if (v < c.min_value) return false;
  for (int ch = 0; ch < 3; ++ch)
    if (ch != c.channel && v < img.at(ch, y, x) + c.margin) return false;
  return true;
}

std::optional<Detection> detect_class(const Image& img, const ColorSpec& color,
                                      ObjectClass cls, int min_pixels) {
  const int w = img.width, h = img.height;
  std::vector<uint8_t> mask(static_cast<size_t>(w * h), 0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      mask[static_cast<size_t>(y * w + x)] = pixel_matches(img, y, x, color) ? 1 : 0;

  std::vector<int> stack;
  std::optional<Detection> best;
  int best_area = 0;
  for (int start = 0; start < w * h; ++start) {
    if (!mask[static_cast<size_t>(start)]) continue;
    // flood fill one 4-connected component
    int area = 0, min_x = w, max_x = -1, min_y = h, max_y = -1;
    stack.assign(1, start);
    mask[static_cast<size_t>(start)] = 0;
    while (!stack.empty()) {
      const int p = stack.back();
      stack.pop_back();
      const int y = p / w, x = p % w;
      ++area;
      min_x = std::min(min_x, x);
      max_x = std::max(max_x, x);
      min_y = std::min(min_y, y);
      max_y = std::max(max_y, y);
      const int nb[4] = {p - w, p + w, p - 1, p + 1};
      const bool ok[4] = {y > 0, y + 1 < h, x > 0, x + 1 < w};
      for (int k = 0; k < 4; ++k)
        if (ok[k] && mask[static_cast<size_t>(nb[k])]) {
          mask[static_cast<size_t>(nb[k])] = 0;
          stack.push_back(nb[k]);
        }
    }
    if (area < min_pixels || area <= best_area) continue;
    best_area = area;
    Detection d;
    d.class_id = cls;
    d.box = {static_cast<double>(min_x) / w, static_cast<double>(min_y) / h,
             static_cast<double>(max_x + 1) / w, static_cast<double>(max_y + 1) / h};
    d.score = clamp(10.0 * area / static_cast<double>(w * h), 0.0, 1.0);
    best = d;
  }
  return best;
}

}  // namespace

std::vector<Detection> detect(const Image& img, const DetectorSpec& spec) {
  if (img.channels != 3)
    throw std::invalid_argument("detect: expected a C=3 image");
  std::vector<Detection> out;
  if (auto d = detect_class(img, spec.ball, ObjectClass::ball, spec.min_pixels))
    out.push_back(*d);
  if (auto d = detect_class(img, spec.head, ObjectClass::head, spec.min_pixels))
    out.push_back(*d);
  return out;
}

double iou(const NormBox& a, const NormBox& b) {
  const double ix = std::max(0.0, std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min));
  const double iy = std::max(0.0, std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min));
  const double inter = ix * iy;
  const double area_a = (a.x_max - a.x_min) * (a.y_max - a.y_min);
  const double area_b = (b.x_max - b.x_min) * (b.y_max - b.y_min);
  const double uni = area_a + area_b - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

std::vector<Detection> nms(std::vector<Detection> dets, double iou_threshold) {
  std::stable_sort(dets.begin(), dets.end(),
                   [](const Detection& a, const Detection& b) { return a.score > b.score; });
  std::vector<Detection> kept;
  for (const Detection& d : dets) {
    bool suppressed = false;
    for (const Detection& k : kept)
      if (k.class_id == d.class_id && iou(k.box, d.box) >= iou_threshold) {
        suppressed = true;
        break;
      }
    if (!suppressed) kept.push_back(d);
  }
  return kept;
}

Matching match_default_boxes(const std::vector<NormBox>& defaults,
                             const std::vector<GroundTruthBox>& gts,
                             double threshold) {
  if (defaults.empty())
    throw std::invalid_argument("match_default_boxes: no default boxes");
  Matching m;
  m.gt_of_default.assign(defaults.size(), -1);

  // forced matches: each ground truth claims its best still-free default
  for (size_t j = 0; j < gts.size(); ++j) {
    int best = -1;
    double best_iou = -1.0;
    for (size_t i = 0; i < defaults.size(); ++i) {
      if (m.gt_of_default[i] != -1) continue;
      const double v = iou(defaults[i], gts[j].box);
      if (v > best_iou) {
        best_iou = v;
        best = static_cast<int>(i);
      }
    }
    if (best >= 0) m.gt_of_default[static_cast<size_t>(best)] = static_cast<int>(j);
  }

  // threshold matches for the rest
  for (size_t i = 0; i < defaults.size(); ++i) {
    if (m.gt_of_default[i] != -1) continue;
    int best = -1;
    double best_iou = -1.0;
    for (size_t j = 0; j < gts.size(); ++j) {
      const double v = iou(defaults[i], gts[j].box);
      if (v > best_iou) {
        best_iou = v;
        best = static_cast<int>(j);
      }
    }
    if (best >= 0 && best_iou >= threshold)
      m.gt_of_default[i] = best;
  }

  for (int g : m.gt_of_default)
    if (g >= 0) ++m.matched;
  return m;
}

NodeId multibox_loss_node(Tape& t, const Matching& match, NodeId class_logits,
                          NodeId pred_boxes,
                          const std::vector<GroundTruthBox>& gts,
                          double alpha_loc) {
  if (match.matched < 1)
    throw std::domain_error("multibox_loss: no matched boxes (N = 0)");
  const Array& logits = t.value(class_logits);
  const Array& preds = t.value(pred_boxes);
  if (logits.shape.size() != 2 || preds.shape.size() != 2 || preds.shape[1] != 4 ||
      logits.shape[0] != preds.shape[0])
    throw std::invalid_argument("multibox_loss: logits " + logits.shape_str() +
                                " vs boxes " + preds.shape_str());
  const int64_t d = logits.shape[0];
  const int64_t k = logits.shape[1];  // classes + background
  if (static_cast<size_t>(d) != match.gt_of_default.size())
    throw std::invalid_argument("multibox_loss: matching covers " +
                                std::to_string(match.gt_of_default.size()) +
                                " defaults, logits have " + std::to_string(d));

  Array onehot = Array::zeros({d, k});
  Array loc_mask = Array::zeros({d, 4});
  Array gt_boxes = Array::zeros({d, 4});
  for (int64_t i = 0; i < d; ++i) {
    const int g = match.gt_of_default[static_cast<size_t>(i)];
    const int64_t cls = g >= 0
        ? static_cast<int64_t>(gts[static_cast<size_t>(g)].class_id)
        : k - 1;  // background is the last column
    if (cls < 0 || cls >= k)
      throw std::invalid_argument("multibox_loss: class id out of range");
    onehot.data[static_cast<size_t>(i * k + cls)] = 1.0;
    if (g >= 0) {
      const NormBox& b = gts[static_cast<size_t>(g)].box;
      const double vals[4] = {b.x_min, b.y_min, b.x_max, b.y_max};
      for (int c = 0; c < 4; ++c) {
        loc_mask.data[static_cast<size_t>(i * 4 + c)] = 1.0;
        gt_boxes.data[static_cast<size_t>(i * 4 + c)] = vals[c];
      }
    }
  }

  // L_conf = sum_i [logsumexp(logits_i) - logits_i[target_i]]
  NodeId lse = t.sum(t.logsumexp_lastdim(class_logits));
  NodeId picked = t.sum(t.mul(class_logits, t.constant(std::move(onehot))));
  NodeId conf = t.sub(lse, picked);
  // L_loc = sum over matched rows of |pred - gt|_1
  NodeId masked_pred = t.mul(pred_boxes, t.constant(std::move(loc_mask)));
  NodeId loc = t.sum(t.abs(t.sub(masked_pred, t.constant(std::move(gt_boxes)))));
  return t.scale(t.add(conf, t.scale(loc, alpha_loc)), 1.0 / match.matched);
}

double multibox_loss(const Matching& match, const Array& class_logits,
                     const Array& pred_boxes,
                     const std::vector<GroundTruthBox>& gts, double alpha_loc) {
  Tape t;
  NodeId c = t.constant(class_logits);
  NodeId p = t.constant(pred_boxes);
  return t.value(multibox_loss_node(t, match, c, p, gts, alpha_loc)).data[0];
}

void DistanceRing::push(double d) {
  slots_[static_cast<size_t>(cursor_)] = clamp(d, 0.0, 1.0);
  cursor_ = (cursor_ + 1) % 5;
}

std::array<double, 5> DistanceRing::ordered() const {
  std::array<double, 5> out;
  for (int i = 0; i < 5; ++i) out[static_cast<size_t>(i)] = slots_[static_cast<size_t>((cursor_ + i) % 5)];
  return out;
}

std::optional<double> ball_head_distance(const std::vector<Detection>& dets) {
  const Detection* ball = nullptr;
  const Detection* head = nullptr;
  for (const Detection& d : dets) {
    if (d.class_id == ObjectClass::ball && !ball) ball = &d;
    if (d.class_id == ObjectClass::head && !head) head = &d;
  }
  if (!ball || !head) return std::nullopt;
  const auto cb = ball->box.center();
  const auto ch = head->box.center();
  const double dx = cb[0] - ch[0], dy = cb[1] - ch[1];
  return std::sqrt(dx * dx + dy * dy) / std::sqrt(2.0);
}

std::optional<std::array<double, 2>> ball_center(const Image& front,
                                                 const DetectorSpec& spec) {
  for (const Detection& d : detect(front, spec))
    if (d.class_id == ObjectClass::ball) return d.box.center();
  return std::nullopt;
}

std::string format_annotations(const std::vector<GroundTruthBox>& boxes) {
  std::ostringstream out;
  out.precision(17);
  for (const GroundTruthBox& b : boxes)
    out << static_cast<int>(b.class_id) << ' ' << b.box.x_min << ' '
        << b.box.y_min << ' ' << b.box.x_max << ' ' << b.box.y_max << '\n';
  return out.str();
}

std::vector<GroundTruthBox> parse_annotations(const std::string& text) {
  std::vector<GroundTruthBox> out;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const size_t first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream row(line);
    int cls = -1;
    GroundTruthBox b;
    if (!(row >> cls >> b.box.x_min >> b.box.y_min >> b.box.x_max >> b.box.y_max) ||
        (cls != 0 && cls != 1))
      throw std::invalid_argument("annotation line " + std::to_string(line_no) +
                                  ": expected 'class x_min y_min x_max y_max'");
    std::string rest;
    if (row >> rest)
      throw std::invalid_argument("annotation line " + std::to_string(line_no) +
                                  ": trailing content '" + rest + "'");
    b.class_id = static_cast<ObjectClass>(cls);
    out.push_back(b);
  }
  return out;
}

}  // namespace reachbench
