#include "core/render.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace reachbench {

Camera Camera::look_at(const Vec3& position, const Vec3& target, double focal_px) {
  Camera c;
  c.position = position;
  c.focal_px = focal_px;
  const Vec3 forward = (target - position).normalized();
  Vec3 right = forward.cross(Vec3::UnitZ());
  if (right.norm() < 1e-9) right = Vec3::UnitX();  // looking straight up/down
  right.normalize();
  const Vec3 down = forward.cross(right);
  c.orientation.col(0) = right;
  c.orientation.col(1) = down;
  c.orientation.col(2) = forward;
  return c;
}

Image Image::filled(int channels, double value) {
  Image img;
  img.channels = channels;
  img.data.assign(static_cast<size_t>(64 * 64 * channels), value);
  return img;
}

std::optional<std::array<double, 2>> project(const Camera& cam, const Vec3& point) {
  const Vec3 p = cam.orientation.transpose() * (point - cam.position);
  if (p[2] <= 0.0) return std::nullopt;
  return std::array<double, 2>{cam.pu + cam.focal_px * p[0] / p[2],
                               cam.pv + cam.focal_px * p[1] / p[2]};
}

namespace {

void set_px(Image& img, int x, int y, const std::array<double, 3>& color) {
  for (int c = 0; c < 3; ++c) img.at(c, y, x) = color[c];
}

void draw_disk(Image& img, const std::array<double, 2>& center, double radius,
               const std::array<double, 3>& color) {
  if (radius <= 0.0) return;
  const int x0 = std::max(0, static_cast<int>(std::floor(center[0] - radius - 1)));
  const int x1 = std::min(63, static_cast<int>(std::ceil(center[0] + radius)));
  const int y0 = std::max(0, static_cast<int>(std::floor(center[1] - radius - 1)));
  const int y1 = std::min(63, static_cast<int>(std::ceil(center[1] + radius)));
  const double r2 = radius * radius;
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      const double dx = (x + 0.5) - center[0];
      const double dy = (y + 0.5) - center[1];
      if (dx * dx + dy * dy < r2) set_px(img, x, y, color);
    }
}

void draw_segment(Image& img, const std::array<double, 2>& a,
                  const std::array<double, 2>& b, double halfwidth,
                  const std::array<double, 3>& color) {
  const double pad = halfwidth + 1.0;
  const int x0 = std::max(0, static_cast<int>(std::floor(std::min(a[0], b[0]) - pad)));
  const int x1 = std::min(63, static_cast<int>(std::ceil(std::max(a[0], b[0]) + pad)));
  const int y0 = std::max(0, static_cast<int>(std::floor(std::min(a[1], b[1]) - pad)));
  const int y1 = std::min(63, static_cast<int>(std::ceil(std::max(a[1], b[1]) + pad)));
  const double vx = b[0] - a[0], vy = b[1] - a[1];
  const double len2 = vx * vx + vy * vy;
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      const double px = (x + 0.5) - a[0];
      const double py = (y + 0.5) - a[1];
      double t = len2 > 0.0 ? (px * vx + py * vy) / len2 : 0.0;
      t = clamp(t, 0.0, 1.0);
      const double dx = px - t * vx, dy = py - t * vy;
      if (dx * dx + dy * dy <= halfwidth * halfwidth) set_px(img, x, y, color);
    }
}

}  // namespace

Image render(const ArmState& state, const KinematicChain& chain,
             const Camera& cam, double ball_radius_m, const SceneStyle& style) {
  Image img = Image::filled(3, 0.0);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) set_px(img, x, y, style.background);

  // joint-frame origins along the chain, base included
  std::array<Vec3, 7> pts;
  pts[0] = Vec3::Zero();
  {
    Mat4 t = Mat4::Identity();
    for (int j = 0; j < 6; ++j) {
      const DhRow& r = chain.rows[j];
      const double ct = std::cos(state.joints[j] + r.theta_offset);
      const double st = std::sin(state.joints[j] + r.theta_offset);
      const double ca = std::cos(r.alpha), sa = std::sin(r.alpha);
      Mat4 step;
      step << ct, -st * ca, st * sa, r.a * ct,
              st, ct * ca, -ct * sa, r.a * st,
              0.0, sa, ca, r.d,
              0.0, 0.0, 0.0, 1.0;
      t = t * step;
      pts[j + 1] = t.block<3, 1>(0, 3);
    }
  }
  for (int j = 0; j < 6; ++j) {
    auto a = project(cam, pts[j]);
    auto b = project(cam, pts[j + 1]);
    if (a && b) draw_segment(img, *a, *b, style.link_halfwidth_px, style.link);
  }

  {
    const Vec3 p = cam.orientation.transpose() * (state.target - cam.position);
    if (p[2] > 0.0) {
      auto c = project(cam, state.target);
      draw_disk(img, *c, cam.focal_px * ball_radius_m / p[2], style.ball);
    }
  }
  {
    const Vec3 p = cam.orientation.transpose() * (state.tip - cam.position);
    if (p[2] > 0.0) {
      auto c = project(cam, state.tip);
      draw_disk(img, *c, cam.focal_px * style.head_radius_m / p[2], style.head);
    }
  }
  return img;
}

Camera wrist_camera(const Pose& tip_pose, double focal_px) {
  Camera c;
  c.position = tip_pose.position;
  c.orientation = tip_pose.rotation;
  c.focal_px = focal_px;
  return c;
}

Image concat_channels(const Image& front, const Image& wrist) {
  if (front.width != wrist.width || front.height != wrist.height)
    throw std::invalid_argument("concat_channels: resolution mismatch");
  if (front.channels != 3 || wrist.channels != 3)
    throw std::invalid_argument("concat_channels: expected two C=3 images");
  Image out = Image::filled(6, 0.0);
  std::copy(front.data.begin(), front.data.end(), out.data.begin());
  std::copy(wrist.data.begin(), wrist.data.end(),
            out.data.begin() + front.data.size());
  return out;
}

void write_ppm(const Image& img, const std::string& path) {
  if (img.channels != 3)
    throw std::invalid_argument("write_ppm: C=3 images only");
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("write_ppm: cannot open " + path);
  f << "P6\n" << img.width << " " << img.height << "\n255\n";
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c) {
        const double v = clamp(img.at(c, y, x), 0.0, 1.0);
        f.put(static_cast<char>(std::lround(v * 255.0)));
      }
  if (!f) throw std::runtime_error("write_ppm: write failed for " + path);
}

}  // namespace reachbench
