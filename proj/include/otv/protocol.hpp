#pragma once

// Binary WebSocket protocol. Every message is one binary frame whose first
// byte is the type tag; the rest is the payload, little-endian:
//
//   0x01 HELLO           UTF-8 JSON object
//   0x02 OPERATOR_FRAME  f64 t, head/left wrist/right wrist as 7 f32
//                        (qw qx qy qz tx ty tz), 2 x 6 keypoints x 3 f32,
//                        u8 validity
//   0x03 JOINT_STATE     f64 t, u16 n, n f32 commanded, n f32 measured
//   0x04 SCENE_STATE     u16 count, per object u32 id, u8 shape, 3 f32 dims,
//                        7 f32 pose, 4 u8 rgba, u8 flags (bit0 attached)
//   0x05 STEREO_FRAME    u16 width, u16 height, u8 encoding (0 = RGB8),
//                        left image then right
//   0x06 CONTROL         UTF-8 JSON object
//   0x07 STATS           UTF-8 JSON object
//
// Operator-frame floats are f32 on the wire, so a frame survives a round
// trip exactly when its values are f32-representable.

#include "otv/operator_frame.hpp"

#include <json.hpp>

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace otv {

inline constexpr int kProtocolVersion = 1;
inline constexpr std::size_t kOperatorFrameSize = 1 + 8 + 3 * 28 + 2 * 72 + 1;

enum class MessageType : std::uint8_t {
    hello = 0x01,
    operator_frame = 0x02,
    joint_state = 0x03,
    scene_state = 0x04,
    stereo_frame = 0x05,
    control = 0x06,
    stats = 0x07,
};

class ProtocolError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};
class UnknownTag : public ProtocolError {
public:
    using ProtocolError::ProtocolError;
};
class TruncatedPayload : public ProtocolError {
public:
    using ProtocolError::ProtocolError;
};
class BadUtf8 : public ProtocolError {
public:
    using ProtocolError::ProtocolError;
};
class NonUnitQuaternion : public ProtocolError {
public:
    using ProtocolError::ProtocolError;
};
/// Trailing bytes, bad JSON, unknown flag or encoding values.
class MalformedPayload : public ProtocolError {
public:
    using ProtocolError::ProtocolError;
};

struct HelloMsg {
    nlohmann::json body = nlohmann::json::object();
    bool operator==(const HelloMsg&) const = default;
};
struct ControlMsg {
    nlohmann::json body = nlohmann::json::object();
    bool operator==(const ControlMsg&) const = default;
};
struct StatsMsg {
    nlohmann::json body = nlohmann::json::object();
    bool operator==(const StatsMsg&) const = default;
};

struct OperatorFrameMsg {
    OperatorFrame frame;
    bool operator==(const OperatorFrameMsg& o) const;
};

struct JointStateMsg {
    double timestamp = 0.0;
    std::vector<float> commanded;
    std::vector<float> measured;
    bool operator==(const JointStateMsg&) const = default;
};

struct ObjectState {
    std::uint32_t id = 0;
    std::uint8_t shape = 0;
    std::array<float, 3> dims{};
    std::array<float, 7> pose{};   // qw qx qy qz tx ty tz
    std::array<std::uint8_t, 4> rgba{};
    std::uint8_t flags = 0;
    bool operator==(const ObjectState&) const = default;
};

struct SceneStateMsg {
    std::vector<ObjectState> objects;
    bool operator==(const SceneStateMsg&) const = default;
};

struct StereoFrameMsg {
    std::uint16_t width = 0;
    std::uint16_t height = 0;
    std::uint8_t encoding = 0;
    std::string pixels;   // 2 * width * height * 3 bytes
    bool operator==(const StereoFrameMsg&) const = default;
};

using Message = std::variant<HelloMsg, OperatorFrameMsg, JointStateMsg, SceneStateMsg, StereoFrameMsg, ControlMsg, StatsMsg>;

MessageType type_of(const Message& m);
const char* type_name(MessageType t);

/// std::invalid_argument when a message cannot be represented (more than
/// 65535 entries, pixel count not matching the size).
std::string encode_message(const Message& m);
/// Total over arbitrary bytes: every failure is a ProtocolError.
Message decode_message(std::string_view bytes);

bool valid_utf8(std::string_view s);

}  // namespace otv
