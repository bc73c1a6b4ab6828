#include "otv/episode.hpp"

#include "otv/bytes.hpp"

#include <json.hpp>

#include <cstdio>
#include <sstream>

namespace otv {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr char kMagic[4] = {'O', 'T', 'V', 'E'};
constexpr std::size_t kHeaderSize = 8;

void put_pose(std::array<float, OperatorBlock::kFloats>& v, std::size_t& at, const Pose& p) {
    const Quat& q = p.rotation;
    for (double x : {q.w(), q.x(), q.y(), q.z(), p.translation.x(), p.translation.y(), p.translation.z()})
        v[at++] = static_cast<float>(x);
}

Pose get_pose(const std::array<float, OperatorBlock::kFloats>& v, std::size_t& at) {
    Pose p;
    p.rotation = Quat(v[at], v[at + 1], v[at + 2], v[at + 3]);
    p.translation = Vec3(v[at + 4], v[at + 5], v[at + 6]);
    at += 7;
    return p;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cannot open " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

OperatorBlock OperatorBlock::from_frame(const OperatorFrame& f) {
    OperatorBlock b;
    b.validity = f.validity;
    std::size_t at = 0;
    put_pose(b.values, at, f.head);
    for (const Pose& w : f.wrists) put_pose(b.values, at, w);
    for (const HandKeypoints& h : f.hands)
        for (const Vec3& p : h.points)
            for (int i = 0; i < 3; ++i) b.values[at++] = static_cast<float>(p[i]);
    return b;
}

OperatorFrame OperatorBlock::to_frame(double timestamp) const {
    OperatorFrame f;
    f.timestamp = timestamp;
    f.validity = validity;
    std::size_t at = 0;
    f.head = get_pose(values, at);
    for (Pose& w : f.wrists) w = get_pose(values, at);
    for (HandKeypoints& h : f.hands)
        for (Vec3& p : h.points) {
            p = Vec3(values[at], values[at + 1], values[at + 2]);
            at += 3;
        }
    return f;
}

std::size_t record_size(int action_dim, std::uint16_t flags) {
    std::size_t n = 8 + 8 + 2 * 4 * static_cast<std::size_t>(action_dim);
    if (flags & episode_flags::operator_block) n += 1 + 4 * OperatorBlock::kFloats;
    if (flags & episode_flags::frame_index) n += 4;
    return n;
}

std::string frame_file_name(std::uint32_t index, bool left) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%06u_%s.ppm", index, left ? "left" : "right");
    return buf;
}

EpisodeWriter::EpisodeWriter(fs::path dir, EpisodeMeta meta, std::uint16_t flags)
    : dir_(std::move(dir)), meta_(std::move(meta)), flags_(flags) {
    meta_.num_steps = 0;
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw IoError("cannot create " + dir_.string() + ": " + ec.message());
    if (flags_ & episode_flags::frame_index) {
        fs::create_directories(dir_ / "frames", ec);
        if (ec) throw IoError("cannot create frames directory: " + ec.message());
    }
    steps_.open(dir_ / "steps.bin", std::ios::binary | std::ios::trunc);
    if (!steps_) throw IoError("cannot open " + (dir_ / "steps.bin").string());
    ByteWriter w;
    w.put_bytes(std::string_view(kMagic, 4));
    w.put(kEpisodeVersion);
    w.put(flags_);
    steps_.write(w.bytes().data(), static_cast<std::streamsize>(w.size()));
}

EpisodeWriter::~EpisodeWriter() {
    try {
        finalize();
    } catch (...) {
    }
}

void EpisodeWriter::record(const StepRecord& step) {
    if (finalized_) throw IoError("episode already finalized");
    const auto n = static_cast<std::size_t>(meta_.action_dim);
    if (step.observed.size() != n || step.commanded.size() != n)
        throw IoError("step record width does not match action_dim");
    if (step.operator_block.has_value() != bool(flags_ & episode_flags::operator_block) ||
        step.frame.has_value() != bool(flags_ & episode_flags::frame_index))
        throw IoError("step record optional blocks do not match the header flags");
    ByteWriter w;
    w.put(step.tick);
    w.put(step.time);
    for (float v : step.observed) w.put(v);
    for (float v : step.commanded) w.put(v);
    if (step.operator_block) {
        w.put(step.operator_block->validity);
        for (float v : step.operator_block->values) w.put(v);
    }
    if (step.frame) w.put(*step.frame);
    steps_.write(w.bytes().data(), static_cast<std::streamsize>(w.size()));
    if (!steps_) throw IoError("write failed on steps.bin");
    ++meta_.num_steps;
}

void EpisodeWriter::write_frame(std::uint32_t index, const StereoImage& frame) {
    for (bool left : {true, false}) {
        const fs::path p = dir_ / "frames" / frame_file_name(index, left);
        std::ofstream out(p, std::ios::binary | std::ios::trunc);
        const std::string ppm = encode_ppm(left ? frame.left : frame.right);
        out.write(ppm.data(), static_cast<std::streamsize>(ppm.size()));
        if (!out) throw IoError("cannot write " + p.string());
    }
}

void EpisodeWriter::finalize() {
    if (finalized_) return;
    finalized_ = true;
    steps_.close();
    const json meta = {{"robot", meta_.robot},         {"action_dim", meta_.action_dim}, {"rate_hz", meta_.rate_hz},
                       {"num_steps", meta_.num_steps}, {"task", meta_.task},             {"created", meta_.created},
                       {"flags", flags_}};
    std::ofstream out(dir_ / "meta.json", std::ios::binary | std::ios::trunc);
    out << meta.dump(2) << '\n';
    if (!out) throw IoError("cannot write meta.json");
}

Episode load_episode(const fs::path& dir) {
    Episode ep;
    json meta;
    try {
        meta = json::parse(read_file(dir / "meta.json"));
        ep.meta.robot = meta.at("robot").get<std::string>();
        ep.meta.action_dim = meta.at("action_dim").get<int>();
        ep.meta.rate_hz = meta.at("rate_hz").get<double>();
        ep.meta.num_steps = meta.at("num_steps").get<std::uint64_t>();
        ep.meta.task = meta.value("task", "");
        ep.meta.created = meta.value("created", "");
    } catch (const json::exception& e) {
        throw CorruptEpisode(std::string("meta.json: ") + e.what());
    }
    if (ep.meta.action_dim <= 0 || ep.meta.action_dim > 4096) throw CorruptEpisode("meta.json: bad action_dim");
    if (!(ep.meta.rate_hz > 0.0)) throw CorruptEpisode("meta.json: rate_hz must be positive");

    const std::string data = read_file(dir / "steps.bin");
    ByteReader r(data);
    try {
        if (r.get_bytes(4) != std::string_view(kMagic, 4)) throw CorruptEpisode("steps.bin: bad magic");
        if (r.get<std::uint16_t>() != kEpisodeVersion) throw CorruptEpisode("steps.bin: unsupported version");
        ep.flags = r.get<std::uint16_t>();
    } catch (const ShortRead&) {
        throw CorruptEpisode("steps.bin: truncated header");
    }
    if (ep.flags & ~(episode_flags::operator_block | episode_flags::frame_index))
        throw CorruptEpisode("steps.bin: unknown flags");
    if (meta.contains("flags") && meta["flags"] != ep.flags) throw CorruptEpisode("meta.json flags disagree with steps.bin");

    const std::size_t len = record_size(ep.meta.action_dim, ep.flags);
    const std::size_t body = data.size() - kHeaderSize;
    if (body % len != 0) throw CorruptEpisode("steps.bin: truncated record");
    if (body / len != ep.meta.num_steps) throw CorruptEpisode("steps.bin: record count disagrees with meta.json");

    const auto n = static_cast<std::size_t>(ep.meta.action_dim);
    ep.steps.resize(body / len);
    for (StepRecord& s : ep.steps) {
        s.tick = r.get<std::uint64_t>();
        s.time = r.get<double>();
        s.observed.resize(n);
        s.commanded.resize(n);
        for (float& v : s.observed) v = r.get<float>();
        for (float& v : s.commanded) v = r.get<float>();
        if (ep.flags & episode_flags::operator_block) {
            OperatorBlock b;
            b.validity = r.get<std::uint8_t>();
            for (float& v : b.values) v = r.get<float>();
            s.operator_block = b;
        }
        if (ep.flags & episode_flags::frame_index) s.frame = r.get<std::uint32_t>();
    }
    return ep;
}

}  // namespace otv
