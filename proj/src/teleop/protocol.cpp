#include "otv/protocol.hpp"

#include "otv/bytes.hpp"

#include <bit>
#include <cmath>
#include <limits>

namespace otv {
namespace {

constexpr double kQuatTolerance = 1e-3;

bool same_bits(double a, double b) { return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b); }

bool same_pose(const Pose& a, const Pose& b) {
    for (int i = 0; i < 4; ++i)
        if (!same_bits(a.rotation.coeffs()[i], b.rotation.coeffs()[i])) return false;
    for (int i = 0; i < 3; ++i)
        if (!same_bits(a.translation[i], b.translation[i])) return false;
    return true;
}

std::uint16_t checked_count(std::size_t n, const char* what) {
    if (n > std::numeric_limits<std::uint16_t>::max())
        throw std::invalid_argument(std::string(what) + " does not fit a u16 count");
    return static_cast<std::uint16_t>(n);
}

void put_pose(ByteWriter& w, const Pose& p) {
    const Quat& q = p.rotation;
    for (double v : {q.w(), q.x(), q.y(), q.z()}) w.put(static_cast<float>(v));
    for (int i = 0; i < 3; ++i) w.put(static_cast<float>(p.translation[i]));
}

// Stored as read: no canonicalization, so the round trip stays bitwise.
Pose get_pose(ByteReader& r) {
    Pose p;
    const double w = r.get<float>(), x = r.get<float>(), y = r.get<float>(), z = r.get<float>();
    p.rotation = Quat(w, x, y, z);
    for (int i = 0; i < 3; ++i) p.translation[i] = r.get<float>();
    return p;
}

void check_unit(const Pose& p, const char* what) {
    const double n = p.rotation.norm();
    if (!(std::abs(n - 1.0) <= kQuatTolerance))
        throw NonUnitQuaternion(std::string(what) + " quaternion has norm " + std::to_string(n));
}

std::string encode_json(MessageType t, const nlohmann::json& body) {
    std::string out(1, static_cast<char>(t));
    out += body.dump();
    return out;
}

nlohmann::json decode_json(std::string_view payload, const char* what) {
    if (!valid_utf8(payload)) throw BadUtf8(std::string(what) + " payload is not valid UTF-8");
    nlohmann::json j = nlohmann::json::parse(payload.begin(), payload.end(), nullptr, false);
    if (j.is_discarded()) throw MalformedPayload(std::string(what) + " payload is not JSON");
    if (!j.is_object()) throw MalformedPayload(std::string(what) + " payload must be a JSON object");
    return j;
}

struct Encoder {
    ByteWriter w;

    void operator()(const HelloMsg& m) { w.put_bytes(encode_json(MessageType::hello, m.body)); }
    void operator()(const ControlMsg& m) { w.put_bytes(encode_json(MessageType::control, m.body)); }
    void operator()(const StatsMsg& m) { w.put_bytes(encode_json(MessageType::stats, m.body)); }

    void operator()(const OperatorFrameMsg& m) {
        const OperatorFrame& f = m.frame;
        w.put(static_cast<std::uint8_t>(MessageType::operator_frame));
        w.put(f.timestamp);
        put_pose(w, f.head);
        for (const Pose& p : f.wrists) put_pose(w, p);
        for (const HandKeypoints& h : f.hands)
            for (const Vec3& p : h.points)
                for (int i = 0; i < 3; ++i) w.put(static_cast<float>(p[i]));
        w.put(f.validity);
    }

    void operator()(const JointStateMsg& m) {
        if (m.commanded.size() != m.measured.size())
            throw std::invalid_argument("JOINT_STATE commanded and measured differ in length");
        w.put(static_cast<std::uint8_t>(MessageType::joint_state));
        w.put(m.timestamp);
        w.put(checked_count(m.commanded.size(), "JOINT_STATE"));
        for (float v : m.commanded) w.put(v);
        for (float v : m.measured) w.put(v);
    }

    void operator()(const SceneStateMsg& m) {
        w.put(static_cast<std::uint8_t>(MessageType::scene_state));
        w.put(checked_count(m.objects.size(), "SCENE_STATE"));
        for (const ObjectState& o : m.objects) {
            w.put(o.id);
            w.put(o.shape);
            for (float v : o.dims) w.put(v);
            for (float v : o.pose) w.put(v);
            for (std::uint8_t c : o.rgba) w.put(c);
            w.put(o.flags);
        }
    }

    void operator()(const StereoFrameMsg& m) {
        const std::size_t expect = 2u * m.width * m.height * 3u;
        if (m.pixels.size() != expect)
            throw std::invalid_argument("STEREO_FRAME pixel data does not match " + std::to_string(m.width) + "x" +
                                        std::to_string(m.height));
        w.put(static_cast<std::uint8_t>(MessageType::stereo_frame));
        w.put(m.width);
        w.put(m.height);
        w.put(m.encoding);
        w.put_bytes(m.pixels);
    }
};

OperatorFrameMsg decode_operator_frame(ByteReader& r) {
    OperatorFrameMsg m;
    OperatorFrame& f = m.frame;
    f.timestamp = r.get<double>();
    f.head = get_pose(r);
    for (Pose& p : f.wrists) p = get_pose(r);
    for (HandKeypoints& h : f.hands)
        for (Vec3& p : h.points)
            for (int i = 0; i < 3; ++i) p[i] = r.get<float>();
    f.validity = r.get<std::uint8_t>();
    if (f.validity & ~valid::all) throw MalformedPayload("OPERATOR_FRAME validity has unknown bits set");
    if (f.has(valid::head)) check_unit(f.head, "head");
    if (f.has(valid::left_wrist)) check_unit(f.wrists[0], "left wrist");
    if (f.has(valid::right_wrist)) check_unit(f.wrists[1], "right wrist");
    return m;
}

JointStateMsg decode_joint_state(ByteReader& r) {
    JointStateMsg m;
    m.timestamp = r.get<double>();
    const std::uint16_t n = r.get<std::uint16_t>();
    if (r.remaining() < 8u * n) throw TruncatedPayload("JOINT_STATE shorter than its count");
    m.commanded.resize(n);
    m.measured.resize(n);
    for (float& v : m.commanded) v = r.get<float>();
    for (float& v : m.measured) v = r.get<float>();
    return m;
}

SceneStateMsg decode_scene_state(ByteReader& r) {
    constexpr std::size_t kObjectBytes = 4 + 1 + 12 + 28 + 4 + 1;
    SceneStateMsg m;
    const std::uint16_t n = r.get<std::uint16_t>();
    if (r.remaining() < kObjectBytes * n) throw TruncatedPayload("SCENE_STATE shorter than its count");
    m.objects.resize(n);
    for (ObjectState& o : m.objects) {
        o.id = r.get<std::uint32_t>();
        o.shape = r.get<std::uint8_t>();
        if (o.shape > 1) throw MalformedPayload("SCENE_STATE shape " + std::to_string(o.shape) + " is unknown");
        for (float& v : o.dims) v = r.get<float>();
        for (float& v : o.pose) v = r.get<float>();
        for (std::uint8_t& c : o.rgba) c = r.get<std::uint8_t>();
        o.flags = r.get<std::uint8_t>();
    }
    return m;
}

StereoFrameMsg decode_stereo_frame(ByteReader& r) {
    StereoFrameMsg m;
    m.width = r.get<std::uint16_t>();
    m.height = r.get<std::uint16_t>();
    m.encoding = r.get<std::uint8_t>();
    if (m.encoding != 0) throw MalformedPayload("STEREO_FRAME encoding " + std::to_string(m.encoding) + " is unknown");
    const std::size_t n = 2u * m.width * m.height * 3u;
    if (r.remaining() < n) throw TruncatedPayload("STEREO_FRAME shorter than its image size");
    m.pixels = std::string(r.get_bytes(n));
    return m;
}

Message decode_body(MessageType t, ByteReader& r, std::string_view payload) {
    switch (t) {
        case MessageType::hello: return HelloMsg{decode_json(payload, "HELLO")};
        case MessageType::control: return ControlMsg{decode_json(payload, "CONTROL")};
        case MessageType::stats: return StatsMsg{decode_json(payload, "STATS")};
        case MessageType::operator_frame: return decode_operator_frame(r);
        case MessageType::joint_state: return decode_joint_state(r);
        case MessageType::scene_state: return decode_scene_state(r);
        case MessageType::stereo_frame: return decode_stereo_frame(r);
    }
    throw UnknownTag("unreachable");
}

}  // namespace

bool OperatorFrameMsg::operator==(const OperatorFrameMsg& o) const {
    const OperatorFrame& a = frame;
    const OperatorFrame& b = o.frame;
    if (!same_bits(a.timestamp, b.timestamp) || a.validity != b.validity || !same_pose(a.head, b.head)) return false;
    for (std::size_t s = 0; s < 2; ++s) {
        if (!same_pose(a.wrists[s], b.wrists[s])) return false;
        for (std::size_t k = 0; k < a.hands[s].points.size(); ++k)
            for (int i = 0; i < 3; ++i)
                if (!same_bits(a.hands[s].points[k][i], b.hands[s].points[k][i])) return false;
    }
    return true;
}

MessageType type_of(const Message& m) {
    static constexpr MessageType kTypes[] = {MessageType::hello,        MessageType::operator_frame,
                                             MessageType::joint_state,  MessageType::scene_state,
                                             MessageType::stereo_frame, MessageType::control,
                                             MessageType::stats};
    return kTypes[m.index()];
}

const char* type_name(MessageType t) {
    switch (t) {
        case MessageType::hello: return "HELLO";
        case MessageType::operator_frame: return "OPERATOR_FRAME";
        case MessageType::joint_state: return "JOINT_STATE";
        case MessageType::scene_state: return "SCENE_STATE";
        case MessageType::stereo_frame: return "STEREO_FRAME";
        case MessageType::control: return "CONTROL";
        case MessageType::stats: return "STATS";
    }
    return "?";
}

std::string encode_message(const Message& m) {
    Encoder e;
    std::visit(e, m);
    return e.w.take();
}

Message decode_message(std::string_view bytes) {
    if (bytes.empty()) throw TruncatedPayload("empty message");
    const auto tag = static_cast<std::uint8_t>(bytes[0]);
    if (tag < 0x01 || tag > 0x07) throw UnknownTag("unknown message tag " + std::to_string(tag));
    const auto type = static_cast<MessageType>(tag);
    const std::string_view payload = bytes.substr(1);
    ByteReader r(payload);
    Message m;
    try {
        m = decode_body(type, r, payload);
    } catch (const ShortRead& e) {
        throw TruncatedPayload(std::string(type_name(type)) + ": " + e.what());
    }
    const bool json = type == MessageType::hello || type == MessageType::control || type == MessageType::stats;
    if (!json && r.remaining() != 0)
        throw MalformedPayload(std::string(type_name(type)) + " has " + std::to_string(r.remaining()) +
                               " trailing bytes");
    return m;
}

// RFC 3629: no overlongs, no surrogates, nothing above U+10FFFF.
bool valid_utf8(std::string_view s) {
    std::size_t i = 0;
    while (i < s.size()) {
        const auto c = static_cast<unsigned char>(s[i]);
        std::size_t len;
        unsigned char lo = 0x80, hi = 0xbf;
        if (c < 0x80) {
            ++i;
            continue;
        } else if (c >= 0xc2 && c <= 0xdf) {
            len = 2;
        } else if (c >= 0xe0 && c <= 0xef) {
            len = 3;
            if (c == 0xe0) lo = 0xa0;
            if (c == 0xed) hi = 0x9f;
        } else if (c >= 0xf0 && c <= 0xf4) {
            len = 4;
            if (c == 0xf0) lo = 0x90;
            if (c == 0xf4) hi = 0x8f;
        } else {
            return false;
        }
        if (s.size() - i < len) return false;
        for (std::size_t k = 1; k < len; ++k) {
            const auto b = static_cast<unsigned char>(s[i + k]);
            if (b < (k == 1 ? lo : 0x80) || b > (k == 1 ? hi : 0xbf)) return false;
        }
        i += len;
    }
    return true;
}

}  // namespace otv
