#pragma once

#include <optional>
#include <vector>

#include "core/autodiff.hpp"
#include "core/render.hpp"

namespace reachbench {

enum class ObjectClass : int { ball = 0, head = 1 };

/// Axis-aligned box in normalized [0,1] image coordinates.
struct NormBox {
  double x_min = 0.0, y_min = 0.0, x_max = 0.0, y_max = 0.0;
  std::array<double, 2> center() const {
    return {0.5 * (x_min + x_max), 0.5 * (y_min + y_max)};
  }
};

struct Detection {
  ObjectClass class_id = ObjectClass::ball;
  NormBox box;
  double score = 0.0;
};

struct GroundTruthBox {
  ObjectClass class_id = ObjectClass::ball;
  NormBox box;
};

/// Pixel belongs to a class when its dominant channel exceeds min_value and
/// beats both other channels by margin.
struct ColorSpec {
  int channel = 0;
  double min_value = 0.5;
  double margin = 0.2;
};

struct DetectorSpec {
  ColorSpec ball{0, 0.5, 0.2};
  ColorSpec head{2, 0.5, 0.2};
  int min_pixels = 4;
};

/// Blob detector with the detector-interface shape: per class, threshold by
/// color, take 4-connected components of at least min_pixels, keep the
/// largest as a tight normalized box; score = 10 * area fraction clamped to
/// [0,1]. Empty result models detection failure.
std::vector<Detection> detect(const Image& img, const DetectorSpec& spec = {});

double iou(const NormBox& a, const NormBox& b);

/// Greedy: score descending, keep a detection iff IoU with every kept
/// detection of the same class is < threshold.
std::vector<Detection> nms(std::vector<Detection> dets, double iou_threshold);

struct Matching {
  std::vector<int> gt_of_default;  // ground-truth index or -1
  int matched = 0;                 // N of the loss
};

/// Every ground truth is first force-matched (in index order) to its
/// best-IoU still-unmatched default; then every remaining default with
/// IoU >= threshold joins its argmax ground truth. Ties break to the lowest
/// index.
Matching match_default_boxes(const std::vector<NormBox>& defaults,
                             const std::vector<GroundTruthBox>& gts,
                             double threshold = 0.5);

/// (L_conf + alpha_loc * L_loc) / N on the tape. class_logits: [D, K+1]
/// with background last; pred_boxes: [D, 4] as (x_min,y_min,x_max,y_max).
/// L_conf: softmax cross-entropy, matched rows against their ground-truth
/// class, unmatched rows against background. L_loc: L1 over matched rows.
NodeId multibox_loss_node(Tape& t, const Matching& match, NodeId class_logits,
                          NodeId pred_boxes,
                          const std::vector<GroundTruthBox>& gts,
                          double alpha_loc = 1.0);

/// Value-only convenience wrapper over multibox_loss_node.
double multibox_loss(const Matching& match, const Array& class_logits,
                     const Array& pred_boxes,
                     const std::vector<GroundTruthBox>& gts,
                     double alpha_loc = 1.0);

/// Five most recent normalized distances, zeros until filled; a failed
/// detection pushes nothing and does not move the cursor.
class DistanceRing {
 public:
  void reset() { slots_.fill(0.0); cursor_ = 0; }
  void push(double d);
  std::array<double, 5> ordered() const;  // oldest to newest

 private:
  std::array<double, 5> slots_{};
  int cursor_ = 0;
};

/// Center distance between the ball and head detections, normalized by the
/// image diagonal so opposite corners give exactly 1. Empty when either
/// class is missing.
std::optional<double> ball_head_distance(const std::vector<Detection>& dets);

/// Normalized (x, y) center of the ball detection, when present.
std::optional<std::array<double, 2>> ball_center(const Image& front,
                                                 const DetectorSpec& spec = {});

/// Annotation interchange, one box per line: "class x_min y_min x_max y_max"
/// in normalized coordinates. Blank lines and #-comments are skipped.
std::string format_annotations(const std::vector<GroundTruthBox>& boxes);
std::vector<GroundTruthBox> parse_annotations(const std::string& text);

}  // namespace reachbench
