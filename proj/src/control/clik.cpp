#include "otv/arm_control.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

namespace otv {

namespace {

constexpr double kMaxCondition = 1e12;
// Singular values at or below this count as null directions of the arm Jacobian.
constexpr double kNullSingularValue = 1e-7;
constexpr int kStallWindow = 40;
constexpr int kNullspaceHalvings = 6;
constexpr int kRestartCandidates = 16;
constexpr std::uint64_t kRestartSeed = 0x0a11ce5eedULL;

// Body-frame twist from current to target. At exactly half a turn the log is
// undefined; any axis of the flip works, so take the quaternion's own.
Vec6 body_error(const Pose& current, const Pose& target) {
    const Pose rel = compose(inverse(current), target);
    try {
        return log(rel).vector();
    } catch (const AngleNearPi&) {
        Vec3 axis = rel.rotation.vec();
        axis = axis.norm() > 0.0 ? axis.normalized() : Vec3::UnitX();
        Vec6 e;
        e << axis * (std::numbers::pi - 1e-3), rel.translation;
        return e;
    }
}

JointVector clamp_to_limits(const RobotModel& model, const JointVector& q) {
    return q.cwiseMax(model.lower_limits()).cwiseMin(model.upper_limits());
}

JointVector scatter(const RobotModel& model, const std::vector<int>& dofs, const Eigen::VectorXd& v) {
    JointVector out = JointVector::Zero(model.dof());
    for (std::size_t i = 0; i < dofs.size(); ++i) out[dofs[i]] = v[static_cast<Eigen::Index>(i)];
    return out;
}

Eigen::VectorXd gather(const std::vector<int>& dofs, const JointVector& q) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(dofs.size()));
    for (std::size_t i = 0; i < dofs.size(); ++i) out[static_cast<Eigen::Index>(i)] = q[dofs[i]];
    return out;
}

// Damped least squares on the chain. Dofs in `locked` keep a zero column.
Eigen::VectorXd damped_solve(const Jacobian& j, const Vec6& e, const IkConfig& cfg, const std::vector<bool>& locked) {
    Jacobian jl = j;
    for (std::size_t c = 0; c < locked.size(); ++c)
        if (locked[c]) jl.col(static_cast<Eigen::Index>(c)).setZero();
    const Eigen::Matrix<double, 6, 6> a =
        jl * jl.transpose() + cfg.damping * cfg.damping * Eigen::Matrix<double, 6, 6>::Identity();
    const Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 6, 6>> es(a, Eigen::EigenvaluesOnly);
    const double lo = es.eigenvalues().minCoeff();
    const double hi = es.eigenvalues().maxCoeff();
    if (!(lo > 0.0) || !std::isfinite(hi) || hi / lo > kMaxCondition)
        throw NumericalFailure("damped IK system is ill-conditioned");
    Eigen::VectorXd dq = jl.transpose() * a.ldlt().solve(cfg.gain * e);
    const double peak = dq.cwiseAbs().maxCoeff();
    if (peak > cfg.step_clamp) dq *= cfg.step_clamp / peak;
    if (!dq.allFinite()) throw NumericalFailure("IK step is not finite");
    return dq;
}

// As damped_solve, but dofs the step would drive through a joint limit they
// already sit on are locked and the rest re-solved, so the remaining joints
// take over their share of the motion.
Eigen::VectorXd limit_aware_solve(const RobotModel& model, const JointVector& q, const ArmChain& chain,
                                  const Jacobian& j, const Vec6& e, const IkConfig& cfg) {
    std::vector<bool> locked(chain.dofs.size(), false);
    Eigen::VectorXd dq = damped_solve(j, e, cfg, locked);
    for (std::size_t round = 0; round < chain.dofs.size(); ++round) {
        bool changed = false;
        for (std::size_t c = 0; c < chain.dofs.size(); ++c) {
            const int d = chain.dofs[c];
            const double v = dq[static_cast<Eigen::Index>(c)];
            if (locked[c]) continue;
            if ((q[d] <= model.lower_limits()[d] && v < 0.0) || (q[d] >= model.upper_limits()[d] && v > 0.0)) {
                locked[c] = true;
                changed = true;
            }
        }
        if (!changed) break;
        dq = damped_solve(j, e, cfg, locked);
    }
    return dq;
}

double score(const PoseError& e, const IkConfig& cfg) {
    return e.position / cfg.position_tolerance + e.rotation / cfg.rotation_tolerance;
}

// Best of a handful of seeded postures, judged by their initial pose error.
JointVector restart_posture(const RobotModel& model, const ArmChain& chain, const JointVector& q,
                            const Pose& target, const IkConfig& cfg, std::mt19937_64& rng) {
    JointVector best = q;
    double best_score = std::numeric_limits<double>::infinity();
    for (int k = 0; k < kRestartCandidates; ++k) {
        JointVector c = q;
        for (int d : chain.dofs) {
            const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
            c[d] = model.lower_limits()[d] + u * (model.upper_limits()[d] - model.lower_limits()[d]);
        }
        const double sc = score(pose_error(KinematicState(model, c).frame_pose(chain.frame), target), cfg);
        if (sc < best_score) {
            best_score = sc;
            best = std::move(c);
        }
    }
    return best;
}

bool within(const PoseError& e, const IkConfig& cfg) {
    return e.position < cfg.position_tolerance && e.rotation < cfg.rotation_tolerance;
}


}  // namespace

void IkConfig::validate() const {
    if (!(damping > 0.0 && step_clamp > 0.0 && step_clamp <= std::numbers::pi && gain > 0.0 &&
          max_iterations > 0 && position_tolerance > 0.0 && rotation_tolerance > 0.0 &&
          manipulability_threshold > 0.0 && nullspace_gain > 0.0))
        throw std::invalid_argument("IK parameters must be positive, with step clamp at most pi");
}

ArmChain ArmChain::of(const RobotModel& model, const ArmProfile& arm) {
    return {model.frame_index(arm.ee_frame), arm.dofs};
}

PoseError pose_error(const Pose& current, const Pose& target) {
    return {(target.translation - current.translation).norm(),
            rotation_angle(current.rotation.conjugate() * target.rotation)};
}

JointVector clik_step(const RobotModel& model, const JointVector& q, const ArmChain& chain, const Pose& target,
                      const IkConfig& cfg) {
    const KinematicState ks(model, q);
    const Jacobian j = select_columns(ks.jacobian(chain.frame), chain.dofs);
    const Vec6 e = body_error(ks.frame_pose(chain.frame), target);
    return scatter(model, chain.dofs, damped_solve(j, e, cfg, std::vector<bool>(chain.dofs.size(), false)));
}

JointVector nullspace_correction(const RobotModel& model, const JointVector& q, const JointVector& q_ref,
                                 const ArmChain& chain, const Jacobian& j, const IkConfig& cfg) {
    if (manipulability(j) >= cfg.manipulability_threshold) return JointVector::Zero(model.dof());
    const Eigen::Index n = j.cols();
    const Eigen::JacobiSVD<Eigen::MatrixXd> svd(j, Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    Eigen::MatrixXd basis(n, 0);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (i < sv.size() && sv[i] > kNullSingularValue) continue;
        basis.conservativeResize(n, basis.cols() + 1);
        basis.col(basis.cols() - 1) = svd.matrixV().col(i);
    }
    const Eigen::VectorXd pull = cfg.nullspace_gain * gather(chain.dofs, q_ref - q);
    const Eigen::VectorXd v = basis * (basis.transpose() * pull);
    return scatter(model, chain.dofs, v);
}

ArmSolution solve_arm(const RobotModel& model, const JointVector& q0, const ArmChain& chain, const Pose& target,
                      const IkConfig& cfg, const JointVector& q_ref) {
    ArmSolution out;
    JointVector q = clamp_to_limits(model, q0);
    KinematicState ks(model, q);
    PoseError err = pose_error(ks.frame_pose(chain.frame), target);
    out.q = q;
    out.error = err;
    double best = score(err, cfg);

    // Offline budgets restart from fixed seed postures when progress stalls;
    // the per-tick budget is far shorter than the stall window.
    std::mt19937_64 seeds(kRestartSeed);
    double window_ref = best;
    double window_best = best;
    int window_start = 0;

    for (int it = 0; it < cfg.max_iterations && !within(err, cfg); ++it) {
        if (it - window_start >= kStallWindow) {
            if (window_best > 0.5 * window_ref) {
                q = restart_posture(model, chain, q, target, cfg, seeds);
                ks = KinematicState(model, q);
                err = pose_error(ks.frame_pose(chain.frame), target);
            }
            window_start = it;
            window_ref = score(err, cfg);
            window_best = window_ref;
        }

        const Jacobian j = select_columns(ks.jacobian(chain.frame), chain.dofs);
        const Vec6 e = body_error(ks.frame_pose(chain.frame), target);
        const JointVector step = scatter(model, chain.dofs, limit_aware_solve(model, q, chain, j, e, cfg));
        JointVector ns = nullspace_correction(model, q, q_ref, chain, j, cfg);

        JointVector next_q = clamp_to_limits(model, q + step);
        KinematicState next_ks(model, next_q);
        PoseError next_err = pose_error(next_ks.frame_pose(chain.frame), target);
        if (ns.cwiseAbs().maxCoeff() > 0.0) {
            // Halve the pull until its second-order effect on the pose stays
            // inside the convergence tolerance.
            const PoseError plain = next_err;
            for (int k = 0; k < kNullspaceHalvings; ++k, ns *= 0.5) {
                JointVector trial_q = clamp_to_limits(model, q + step + ns);
                KinematicState trial(model, trial_q);
                const PoseError te = pose_error(trial.frame_pose(chain.frame), target);
                const double dp = te.position - plain.position;
                const double dr = te.rotation - plain.rotation;
                if (dp <= cfg.position_tolerance && dr <= cfg.rotation_tolerance) {
                    ++out.nullspace_steps;
                    out.worst_nullspace_penalty.position = std::max(out.worst_nullspace_penalty.position, dp);
                    out.worst_nullspace_penalty.rotation = std::max(out.worst_nullspace_penalty.rotation, dr);
                    next_q = std::move(trial_q);
                    next_ks = std::move(trial);
                    next_err = te;
                    break;
                }
            }
        }
        q = std::move(next_q);
        ks = std::move(next_ks);
        err = next_err;
        out.iterations = it + 1;
        const double s = score(err, cfg);
        window_best = std::min(window_best, s);
        if (s < best) {
            best = s;
            out.q = q;
            out.error = err;
        }
    }
    out.converged = within(out.error, cfg);
    return out;
}

}  // namespace otv
