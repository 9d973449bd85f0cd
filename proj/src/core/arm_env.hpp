#pragma once

#include <array>
#include <string>

#include "core/common.hpp"

namespace reachbench {

/// Standard DH row; the joint transform is
/// Rz(theta + theta_offset) * Tz(d) * Tx(a) * Rx(alpha).
struct DhRow {
  double a = 0.0;
  double d = 0.0;
  double alpha = 0.0;
  double theta_offset = 0.0;
};

struct KinematicChain {
  std::array<DhRow, 6> rows;
  std::array<std::array<double, 2>, 6> joint_limits;  // {lo, hi}, radians
  std::array<double, 6> home;                         // reset configuration
  double v_max = 1.0;   // rad/s per joint
  double dt = 0.05;     // s per control step
  int active_joints = 6;  // trailing joints stay at home when < 6

  /// Published UR3 table geometry with a reaching home pose.
  static KinematicChain ur3();
  void validate() const;  // limits ordered, v_max/dt positive
};

enum class RewardKind { sparse, continuous };

struct TaskConfig {
  double epsilon = 0.05;  // success radius, m
  // 0.3 m cube in front of the arm (front = -x for the ur3 home pose),
  // validated reachable from home at startup.
  Vec3 target_box_min = Vec3(-0.44, -0.15, 0.00);
  Vec3 target_box_max = Vec3(-0.14, 0.15, 0.30);
  RewardKind reward_kind = RewardKind::continuous;
  double success_bonus = 100.0;
  bool terminate_on_success = true;
};

struct ArmState {
  std::array<double, 6> joints{};
  Vec3 tip = Vec3::Zero();
  Pose tip_pose;
  Vec3 target = Vec3::Zero();
  int step_index = 0;
  int episode_len = 100;  // T
};

/// Tool pose from the six DH transforms. Throws std::domain_error when a
/// joint sits outside its limits.
Pose forward_kinematics(const KinematicChain& chain,
                        const std::array<double, 6>& joints);

/// Central finite differences of the tip position, step h radians.
/// Row r, column j = d tip_r / d joint_j. Probes may cross joint limits.
Eigen::Matrix<double, 3, 6> jacobian(const KinematicChain& chain,
                                     const std::array<double, 6>& joints,
                                     double h = 1e-5);

double sparse_reward(const Vec3& tip, const Vec3& target, double epsilon);
double continuous_reward(const Vec3& tip, const Vec3& target, double epsilon,
                         double bonus);

/// Damped-least-squares reach step toward the target, normalized to the
/// action convention: clamp(dq / (v_max*dt), -1, 1). Columns of locked
/// joints are zeroed so the command stays achievable.
struct ExpertAction {
  std::array<double, 6> action{};
  bool degenerate = false;  // solver fell back to zero action
};
ExpertAction expert_action(const KinematicChain& chain,
                           const std::array<double, 6>& joints,
                           const Vec3& target, double lambda = 0.05);

class ReachEnv {
 public:
  ReachEnv(KinematicChain chain, TaskConfig task, int episode_len);

  const KinematicChain& chain() const { return chain_; }
  const TaskConfig& task() const { return task_; }
  const ArmState& state() const { return state_; }

  const ArmState& reset(Rng& rng);
  /// Draws a fresh target without touching the arm (detector retry path).
  void resample_target(Rng& rng);

  struct StepResult {
    double reward = 0.0;
    bool done = false;
    bool success = false;
  };
  StepResult step(const std::array<double, 6>& action);

  double distance() const { return (state_.tip - state_.target).norm(); }
  bool success() const { return distance() < task_.epsilon; }

  /// Startup reachability check: expert rollouts from home must get within
  /// tol of the box corners and center. Throws on failure.
  void validate_target_box(double tol = 0.02, int max_steps = 400) const;

 private:
  void recompute_tip();
  KinematicChain chain_;
  TaskConfig task_;
  ArmState state_;
};

}  // namespace reachbench
