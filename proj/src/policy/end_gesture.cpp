#include "otv/policy.hpp"

#include <cmath>

namespace otv {

EndGesture EndGesture::from_profile(const RobotProfile& profile) {
    EndGesture g;
    g.dofs = profile.end_gesture_dofs;
    g.reference = profile.end_gesture;
    return g;
}

EndGestureDetector::EndGestureDetector(EndGesture g) : gesture_(std::move(g)) {
    for (int d : gesture_.dofs)
        if (d < 0 || d >= gesture_.reference.size()) throw std::invalid_argument("end gesture dof out of range");
    if (!(gesture_.tolerance > 0.0) || gesture_.hold_ticks < 1)
        throw std::invalid_argument("end gesture needs a positive tolerance and hold");
}

bool EndGestureDetector::matches(const JointVector& q) const {
    if (q.size() != gesture_.reference.size()) return false;
    for (int d : gesture_.dofs)
        if (!(std::abs(q[d] - gesture_.reference[d]) <= gesture_.tolerance)) return false;
    return true;
}

bool EndGestureDetector::update(const JointVector& q) {
    if (matches(q)) {
        if (held_ < gesture_.hold_ticks) ++held_;
    } else {
        held_ = 0;
    }
    return detected();
}

}  // namespace otv
