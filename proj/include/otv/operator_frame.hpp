#pragma once

// One tracking sample from the operator. All poses and keypoints are in the
// operator's world frame, which is z-up. Head and wrist frames use the same
// axes as the robot: heads look along +x, wrists point +x toward the
// fingers with +z out of the back of the hand.

#include "otv/se3.hpp"

#include <array>
#include <cstdint>

namespace otv {

enum class Keypoint : std::uint8_t { wrist = 0, thumb_tip, index_tip, middle_tip, ring_tip, pinky_tip };
inline constexpr int kKeypointCount = 6;

struct HandKeypoints {
    // Eigen leaves Vec3 uninitialized, so zero explicitly.
    std::array<Vec3, kKeypointCount> points = zeros();

    static std::array<Vec3, kKeypointCount> zeros() {
        std::array<Vec3, kKeypointCount> a;
        a.fill(Vec3::Zero());
        return a;
    }

    const Vec3& operator[](Keypoint k) const { return points[static_cast<std::size_t>(k)]; }
    Vec3& operator[](Keypoint k) { return points[static_cast<std::size_t>(k)]; }

    /// Finite and no two points further apart than 0.4 m.
    bool plausible() const;
};

namespace valid {
inline constexpr std::uint8_t head = 1u << 0;
inline constexpr std::uint8_t left_wrist = 1u << 1;
inline constexpr std::uint8_t right_wrist = 1u << 2;
inline constexpr std::uint8_t left_hand = 1u << 3;
inline constexpr std::uint8_t right_hand = 1u << 4;
inline constexpr std::uint8_t all = 0x1f;
}  // namespace valid

struct OperatorFrame {
    double timestamp = 0.0;
    Pose head;
    std::array<Pose, 2> wrists;         // left, right
    std::array<HandKeypoints, 2> hands; // left, right
    std::uint8_t validity = 0;

    bool has(std::uint8_t bits) const { return (validity & bits) == bits; }
};

inline std::uint8_t wrist_bit(std::size_t side) { return side == 0 ? valid::left_wrist : valid::right_wrist; }
inline std::uint8_t hand_bit(std::size_t side) { return side == 0 ? valid::left_hand : valid::right_hand; }

}  // namespace otv
