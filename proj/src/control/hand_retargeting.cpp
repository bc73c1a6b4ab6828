#include "otv/hand_retargeting.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>

namespace otv {

namespace {

std::string frame_name(Side side, const char* suffix) { return std::string(side_name(side)) + "_" + suffix; }

}  // namespace

VectorSpec dexterous_spec(Side side) {
    const std::string ee = frame_name(side, "ee");
    return {
        {Keypoint::wrist, Keypoint::thumb_tip, ee, frame_name(side, "thumb_tip")},
        {Keypoint::wrist, Keypoint::index_tip, ee, frame_name(side, "index_tip")},
        {Keypoint::wrist, Keypoint::middle_tip, ee, frame_name(side, "middle_tip")},
        {Keypoint::wrist, Keypoint::ring_tip, ee, frame_name(side, "ring_tip")},
        {Keypoint::wrist, Keypoint::pinky_tip, ee, frame_name(side, "pinky_tip")},
        {Keypoint::thumb_tip, Keypoint::index_tip, frame_name(side, "thumb_tip"), frame_name(side, "index_tip")},
        {Keypoint::thumb_tip, Keypoint::middle_tip, frame_name(side, "thumb_tip"), frame_name(side, "middle_tip")},
    };
}

VectorSpec gripper_spec(Side side) {
    return {{Keypoint::thumb_tip, Keypoint::index_tip, frame_name(side, "gripper_upper"),
             frame_name(side, "gripper_lower")}};
}

VectorSpec spec_for(const HandProfile& hand, Side side) {
    return hand.kind == HandKind::gripper ? gripper_spec(side) : dexterous_spec(side);
}

RetargetingConfig RetargetingConfig::for_hand(HandKind kind) {
    RetargetingConfig c;
    c.alpha = kind == HandKind::gripper ? 1.0 : 1.1;
    return c;
}

void RetargetingConfig::validate() const {
    if (!(alpha > 0.0)) throw std::invalid_argument("retargeting alpha must be positive");
    if (!(beta >= 0.0)) throw std::invalid_argument("retargeting beta must be non-negative");
    if (max_iterations < 1 || !(step_tolerance > 0.0) || !(damping > 0.0) || !(step_clamp > 0.0))
        throw std::invalid_argument("retargeting solver caps must be positive");
}

std::vector<Vec3> compute_human_vectors(const HandKeypoints& hand, const Pose& wrist, const VectorSpec& spec,
                                        double alpha) {
    for (const Vec3& p : hand.points)
        if (!p.allFinite()) throw MissingKeypoint("hand keypoints are not finite");
    const Quat to_local = wrist.rotation.conjugate();
    std::vector<Vec3> out;
    out.reserve(spec.size());
    for (const VectorDef& v : spec) out.push_back(alpha * (to_local * (hand[v.human_to] - hand[v.human_from])));
    return out;
}

HandChain::HandChain(const RobotModel& model, const HandProfile& hand, VectorSpec spec)
    : model_(&model), spec_(std::move(spec)), dofs_(hand.dofs), root_frame_(model.frame_index(hand.root_frame)) {
    for (const VectorDef& v : spec_) frames_.emplace_back(model.frame_index(v.robot_from), model.frame_index(v.robot_to));
    lower_.resize(size());
    upper_.resize(size());
    for (int i = 0; i < size(); ++i) {
        lower_[i] = model.lower_limits()[dofs_[static_cast<std::size_t>(i)]];
        upper_[i] = model.upper_limits()[dofs_[static_cast<std::size_t>(i)]];
    }
}

JointVector HandChain::full(const Eigen::VectorXd& q_hand) const {
    JointVector q = JointVector::Zero(model_->dof());
    scatter(q_hand, q);
    return q;
}

Eigen::VectorXd HandChain::gather(const JointVector& q) const {
    Eigen::VectorXd out(size());
    for (int i = 0; i < size(); ++i) out[i] = q[dofs_[static_cast<std::size_t>(i)]];
    return out;
}

void HandChain::scatter(const Eigen::VectorXd& q_hand, JointVector& q) const {
    for (int i = 0; i < size(); ++i) q[dofs_[static_cast<std::size_t>(i)]] = q_hand[i];
}

std::vector<Vec3> HandChain::vectors(const Eigen::VectorXd& q_hand) const {
    const KinematicState ks(*model_, full(q_hand));
    const Pose root_inv = inverse(ks.frame_pose(root_frame_));
    std::vector<Vec3> out;
    out.reserve(frames_.size());
    for (const auto& [from, to] : frames_)
        out.push_back(root_inv.rotation * (ks.frame_pose(to).translation - ks.frame_pose(from).translation));
    return out;
}

Eigen::MatrixXd HandChain::vector_jacobian(const Eigen::VectorXd& q_hand) const {
    const KinematicState ks(*model_, full(q_hand));
    const Mat3 rt = ks.frame_pose(root_frame_).rotation_matrix().transpose();
    Eigen::MatrixXd out(3 * static_cast<Eigen::Index>(frames_.size()), size());
    for (std::size_t i = 0; i < frames_.size(); ++i) {
        const auto diff = ks.position_jacobian(frames_[i].second) - ks.position_jacobian(frames_[i].first);
        for (int c = 0; c < size(); ++c)
            out.block<3, 1>(3 * static_cast<Eigen::Index>(i), c) = rt * diff.col(dofs_[static_cast<std::size_t>(c)]);
    }
    return out;
}

double vector_residual(const Eigen::VectorXd& q, const RetargetingProblem& prob) {
    const std::vector<Vec3> f = prob.chain->vectors(q);
    double sum = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) sum += (prob.targets[i] - f[i]).squaredNorm();
    return std::sqrt(sum);
}

double objective(const Eigen::VectorXd& q, const RetargetingProblem& prob, const RetargetingConfig& cfg) {
    const double r = vector_residual(q, prob);
    return r * r + cfg.beta * (q - prob.q_prev).squaredNorm();
}

RetargetResult retarget_step(const RetargetingProblem& prob, const RetargetingConfig& cfg) {
    const HandChain& chain = *prob.chain;
    if (prob.targets.size() != chain.spec().size()) throw std::invalid_argument("target count does not match spec");
    const int n = chain.size();

    RetargetResult out;
    out.q = prob.q_prev.cwiseMax(chain.lower()).cwiseMin(chain.upper());
    out.objective = objective(out.q, prob, cfg);
    const auto fail = [&] {
        RetargetResult r;
        r.q = prob.q_prev;
        r.iterations = out.iterations;
        r.objective = objective(prob.q_prev, prob, cfg);
        r.numerical_failure = true;
        return r;
    };
    for (const Vec3& t : prob.targets)
        if (!t.allFinite()) return fail();
    if (!std::isfinite(out.objective)) return fail();

    double lambda = cfg.damping;
    for (int it = 0; it < cfg.max_iterations; ++it) {
        out.iterations = it + 1;
        const std::vector<Vec3> f = chain.vectors(out.q);
        const Eigen::MatrixXd jf = chain.vector_jacobian(out.q);
        Eigen::VectorXd r(jf.rows());
        for (std::size_t i = 0; i < f.size(); ++i)
            r.segment<3>(3 * static_cast<Eigen::Index>(i)) = prob.targets[i] - f[i];

        // Gradient of 0.5 * objective and its Gauss-Newton Hessian.
        const Eigen::VectorXd g = -jf.transpose() * r + cfg.beta * (out.q - prob.q_prev);
        Eigen::MatrixXd h = jf.transpose() * jf;
        h.diagonal().array() += cfg.beta;

        // Dofs held at a bound by the gradient stay fixed this iteration.
        Eigen::VectorXd rhs = -g;
        for (int i = 0; i < n; ++i) {
            const bool pinned = (out.q[i] <= chain.lower()[i] && g[i] > 0.0) ||
                                (out.q[i] >= chain.upper()[i] && g[i] < 0.0);
            if (!pinned) continue;
            h.row(i).setZero();
            h.col(i).setZero();
            h(i, i) = 1.0;
            rhs[i] = 0.0;
        }

        Eigen::MatrixXd damped = h;
        damped.diagonal().array() += lambda;
        Eigen::VectorXd step = damped.ldlt().solve(rhs);
        if (!step.allFinite()) return fail();
        const double peak = step.cwiseAbs().maxCoeff();
        if (peak > cfg.step_clamp) step *= cfg.step_clamp / peak;

        const Eigen::VectorXd candidate = (out.q + step).cwiseMax(chain.lower()).cwiseMin(chain.upper());
        const double value = objective(candidate, prob, cfg);
        if (!std::isfinite(value)) return fail();
        const double moved = (candidate - out.q).cwiseAbs().maxCoeff();
        if (value < out.objective) {
            out.q = candidate;
            out.objective = value;
            lambda = std::max(lambda / 3.0, 1e-12);
            if (moved < cfg.step_tolerance) break;
        } else {
            lambda *= 4.0;
            if (moved < cfg.step_tolerance) break;
        }
    }
    return out;
}

std::vector<Eigen::VectorXd> retarget_sequence(const HandChain& chain, const std::vector<HandKeypoints>& hands,
                                               const std::vector<Pose>& wrists, const RetargetingConfig& cfg,
                                               const Eigen::VectorXd& q_initial) {
    if (hands.size() != wrists.size()) throw std::invalid_argument("hand and wrist streams differ in length");
    std::vector<Eigen::VectorXd> out;
    out.reserve(hands.size());
    RetargetingProblem prob{&chain, {}, q_initial};
    for (std::size_t i = 0; i < hands.size(); ++i) {
        prob.targets = compute_human_vectors(hands[i], wrists[i], chain.spec(), cfg.alpha);
        prob.q_prev = retarget_step(prob, cfg).q;
        out.push_back(prob.q_prev);
    }
    return out;
}

}  // namespace otv
