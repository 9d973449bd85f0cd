#include "core/arm_env.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

namespace reachbench {

namespace {

Mat4 dh_transform(const DhRow& row, double theta) {
  const double ct = std::cos(theta + row.theta_offset);
  const double st = std::sin(theta + row.theta_offset);
  const double ca = std::cos(row.alpha);
  const double sa = std::sin(row.alpha);
  Mat4 t;
  // Rz(theta) * Tz(d) * Tx(a) * Rx(alpha), composed by hand.
  t << ct, -st * ca, st * sa, row.a * ct,
       st, ct * ca, -ct * sa, row.a * st,
       0.0, sa, ca, row.d,
       0.0, 0.0, 0.0, 1.0;
  return t;
}

Pose fk_unchecked(const KinematicChain& chain, const std::array<double, 6>& joints) {
  Mat4 t = Mat4::Identity();
  for (int j = 0; j < 6; ++j) t = t * dh_transform(chain.rows[j], joints[j]);
  Pose p;
  p.rotation = t.block<3, 3>(0, 0);
  p.position = t.block<3, 1>(0, 3);
  return p;
}

}  // namespace

KinematicChain KinematicChain::ur3() {
  KinematicChain c;
  const double pi2 = kPi / 2.0;
  c.rows[0] = {0.0, 0.1519, pi2, 0.0};
  c.rows[1] = {-0.24365, 0.0, 0.0, 0.0};
  c.rows[2] = {-0.21325, 0.0, 0.0, 0.0};
  c.rows[3] = {0.0, 0.11235, pi2, 0.0};
  c.rows[4] = {0.0, 0.08535, -pi2, 0.0};
  c.rows[5] = {0.0, 0.0819, 0.0, 0.0};
  for (auto& lim : c.joint_limits) lim = {-kPi, kPi};
  // Elbow-up reach toward +x; wrist angles keep the tool clear of the arm.
  c.home = {0.0, -1.2, 1.0, -1.4, -kPi / 2.0, 0.0};
  c.v_max = 1.0;
  c.dt = 0.05;
  c.active_joints = 6;
  return c;
}

void KinematicChain::validate() const {
  for (int j = 0; j < 6; ++j) {
    if (!(joint_limits[j][0] < joint_limits[j][1]))
      throw std::invalid_argument("chain: joint " + std::to_string(j) +
                                  " limits must satisfy lo < hi");
    if (home[j] < joint_limits[j][0] || home[j] > joint_limits[j][1])
      throw std::invalid_argument("chain: home joint " + std::to_string(j) +
                                  " outside limits");
  }
  if (v_max <= 0.0) throw std::invalid_argument("chain: v_max must be > 0");
  if (dt <= 0.0) throw std::invalid_argument("chain: dt must be > 0");
  if (active_joints < 1 || active_joints > 6)
    throw std::invalid_argument("chain: active_joints must be in [1,6]");
}

Pose forward_kinematics(const KinematicChain& chain,
                        const std::array<double, 6>& joints) {
  for (int j = 0; j < 6; ++j) {
    if (joints[j] < chain.joint_limits[j][0] || joints[j] > chain.joint_limits[j][1])
      throw std::domain_error("forward_kinematics: joint " + std::to_string(j) +
                              " = " + std::to_string(joints[j]) +
                              " outside limits [" +
                              std::to_string(chain.joint_limits[j][0]) + ", " +
                              std::to_string(chain.joint_limits[j][1]) + "]");
  }
  return fk_unchecked(chain, joints);
}

Eigen::Matrix<double, 3, 6> jacobian(const KinematicChain& chain,
                                     const std::array<double, 6>& joints,
                                     double h) {
  Eigen::Matrix<double, 3, 6> j;
  std::array<double, 6> probe = joints;
  for (int c = 0; c < 6; ++c) {
    probe[c] = joints[c] + h;
    const Vec3 plus = fk_unchecked(chain, probe).position;
    probe[c] = joints[c] - h;
    const Vec3 minus = fk_unchecked(chain, probe).position;
    probe[c] = joints[c];
    j.col(c) = (plus - minus) / (2.0 * h);
  }
  return j;
}

double sparse_reward(const Vec3& tip, const Vec3& target, double epsilon) {
  return (tip - target).norm() < epsilon ? 1.0 : 0.0;
}

double continuous_reward(const Vec3& tip, const Vec3& target, double epsilon,
                         double bonus) {
  const double d = (tip - target).norm();
  return std::exp(-d) + (d < epsilon ? bonus : 0.0);
}

ExpertAction expert_action(const KinematicChain& chain,
                           const std::array<double, 6>& joints,
                           const Vec3& target, double lambda) {
  Eigen::Matrix<double, 3, 6> j = jacobian(chain, joints);
  for (int c = chain.active_joints; c < 6; ++c) j.col(c).setZero();
  const Vec3 err = target - fk_unchecked(chain, joints).position;

  Mat3 a = j * j.transpose() + lambda * lambda * Mat3::Identity();
  Eigen::LDLT<Mat3> solver(a);
  ExpertAction out;
  if (solver.info() != Eigen::Success) {
    out.degenerate = true;
    return out;
  }
  const Vec3 y = solver.solve(err);
  if (!y.allFinite()) {
    out.degenerate = true;
    return out;
  }
  const Eigen::Matrix<double, 6, 1> dq = j.transpose() * y;
  const double step = chain.v_max * chain.dt;
  for (int c = 0; c < 6; ++c) out.action[c] = clamp(dq[c] / step, -1.0, 1.0);
  return out;
}

ReachEnv::ReachEnv(KinematicChain chain, TaskConfig task, int episode_len)
    : chain_(std::move(chain)), task_(std::move(task)) {
  chain_.validate();
  if (task_.epsilon <= 0.0) throw std::invalid_argument("task: epsilon must be > 0");
  for (int i = 0; i < 3; ++i)
    if (!(task_.target_box_min[i] <= task_.target_box_max[i]))
      throw std::invalid_argument("task: target box min must not exceed max");
  if (episode_len < 1) throw std::invalid_argument("episode_len must be >= 1");
  state_.episode_len = episode_len;
  state_.joints = chain_.home;
  recompute_tip();
  state_.target = 0.5 * (task_.target_box_min + task_.target_box_max);
}

void ReachEnv::recompute_tip() {
  state_.tip_pose = fk_unchecked(chain_, state_.joints);
  state_.tip = state_.tip_pose.position;
}

const ArmState& ReachEnv::reset(Rng& rng) {
  state_.joints = chain_.home;
  recompute_tip();
  resample_target(rng);
  state_.step_index = 0;
  return state_;
}

void ReachEnv::resample_target(Rng& rng) {
  for (int i = 0; i < 3; ++i)
    state_.target[i] =
        rng.uniform(task_.target_box_min[i], task_.target_box_max[i]);
}

ReachEnv::StepResult ReachEnv::step(const std::array<double, 6>& action) {
  for (double a : action)
    if (!std::isfinite(a))
      throw std::invalid_argument("step: non-finite action component");
  const double scale = chain_.v_max * chain_.dt;
  for (int j = 0; j < chain_.active_joints; ++j) {
    const double dq = clamp(action[j], -1.0, 1.0) * scale;
    state_.joints[j] =
        clamp(state_.joints[j] + dq, chain_.joint_limits[j][0], chain_.joint_limits[j][1]);
  }
  recompute_tip();
  state_.step_index += 1;

  StepResult r;
  r.success = success();
  switch (task_.reward_kind) {
    case RewardKind::sparse:
      r.reward = sparse_reward(state_.tip, state_.target, task_.epsilon);
      break;
    case RewardKind::continuous:
      r.reward = continuous_reward(state_.tip, state_.target, task_.epsilon,
                                   task_.success_bonus);
      break;
  }
  r.done = (state_.step_index >= state_.episode_len) ||
           (task_.terminate_on_success && r.success);
  return r;
}

void ReachEnv::validate_target_box(double tol, int max_steps) const {
  std::array<Vec3, 9> goals;
  int n = 0;
  for (int cx = 0; cx < 2; ++cx)
    for (int cy = 0; cy < 2; ++cy)
      for (int cz = 0; cz < 2; ++cz)
        goals[n++] = Vec3(cx ? task_.target_box_max[0] : task_.target_box_min[0],
                          cy ? task_.target_box_max[1] : task_.target_box_min[1],
                          cz ? task_.target_box_max[2] : task_.target_box_min[2]);
  goals[n++] = 0.5 * (task_.target_box_min + task_.target_box_max);

  for (const Vec3& goal : goals) {
    std::array<double, 6> q = chain_.home;
    const double scale = chain_.v_max * chain_.dt;
    double best = (fk_unchecked(chain_, q).position - goal).norm();
    for (int s = 0; s < max_steps && best > tol; ++s) {
      const ExpertAction ea = expert_action(chain_, q, goal);
      for (int j = 0; j < chain_.active_joints; ++j)
        q[j] = clamp(q[j] + clamp(ea.action[j], -1.0, 1.0) * scale,
                     chain_.joint_limits[j][0], chain_.joint_limits[j][1]);
      best = std::min(best, (fk_unchecked(chain_, q).position - goal).norm());
    }
    if (best > tol)
      throw std::runtime_error(
          "target box unreachable: expert stalled at distance " +
          std::to_string(best) + " from corner (" + std::to_string(goal[0]) +
          ", " + std::to_string(goal[1]) + ", " + std::to_string(goal[2]) + ")");
  }
}

}  // namespace reachbench
