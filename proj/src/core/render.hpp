#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "core/arm_env.hpp"
#include "core/common.hpp"

namespace reachbench {

struct Camera {
  Vec3 position = Vec3::Zero();
  /// Columns are the camera axes in world coordinates: x = image right,
  /// y = image down, z = viewing direction.
  Mat3 orientation = Mat3::Identity();
  double focal_px = 96.0;
  double pu = 32.0;  // principal point, continuous pixel coords
  double pv = 32.0;

  /// Camera at `position` looking toward `target`, world +z up.
  static Camera look_at(const Vec3& position, const Vec3& target,
                        double focal_px = 96.0);
};

/// Channel-planar frame: data[(c*height + y)*width + x], values in [0,1].
struct Image {
  int width = 64;
  int height = 64;
  int channels = 3;
  std::vector<double> data;

  static Image filled(int channels, double value);
  double at(int c, int y, int x) const {
    return data[static_cast<size_t>((c * height + y) * width + x)];
  }
  double& at(int c, int y, int x) {
    return data[static_cast<size_t>((c * height + y) * width + x)];
  }
};

/// Flat palette; the detector relies on the ball/head channels dominating.
struct SceneStyle {
  std::array<double, 3> background{0.55, 0.55, 0.55};
  std::array<double, 3> link{0.25, 0.25, 0.25};
  std::array<double, 3> ball{0.90, 0.05, 0.05};
  std::array<double, 3> head{0.05, 0.05, 0.90};
  double link_halfwidth_px = 1.0;  // 2-px wide segments
  double head_radius_m = 0.03;
};

/// Pinhole projection to continuous pixel coordinates; nullopt marks points
/// at or behind the camera plane (z <= 0 in camera frame).
std::optional<std::array<double, 2>> project(const Camera& cam, const Vec3& point);

/// Painter's order: background, links, ball (world radius = ball_radius_m),
/// head at the tool tip. No anti-aliasing: a pixel is covered iff its center
/// is inside the primitive.
Image render(const ArmState& state, const KinematicChain& chain,
             const Camera& cam, double ball_radius_m,
             const SceneStyle& style = SceneStyle{});

/// Camera riding the tool: positioned at the tip, looking along the final
/// link's z axis.
Camera wrist_camera(const Pose& tip_pose, double focal_px = 96.0);

/// Channels 0-2 from front, 3-5 from wrist.
Image concat_channels(const Image& front, const Image& wrist);

/// Debug dump as binary portable pixmap (P6). C=3 images only.
void write_ppm(const Image& img, const std::string& path);

}  // namespace reachbench
