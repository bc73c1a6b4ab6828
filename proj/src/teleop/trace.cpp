#include "otv/trace.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

namespace otv {
namespace {

using nlohmann::json;

constexpr const char* kFormat = "otv-trace";
constexpr int kVersion = 1;

double round6(double v) { return std::round(v * 1e6) / 1e6; }

json pose_array(const Pose& p) {
    const Quat& q = p.rotation;
    return json::array({round6(q.w()), round6(q.x()), round6(q.y()), round6(q.z()), round6(p.translation.x()),
                        round6(p.translation.y()), round6(p.translation.z())});
}

json points_array(const HandKeypoints& h) {
    json a = json::array();
    for (const Vec3& p : h.points)
        for (int i = 0; i < 3; ++i) a.push_back(round6(p[i]));
    return a;
}

std::vector<double> numbers(const json& j, const char* key, std::size_t n) {
    if (!j.contains(key)) throw TraceError(std::string("frame is missing '") + key + "'");
    const json& a = j.at(key);
    if (!a.is_array() || a.size() != n) throw TraceError(std::string("'") + key + "' needs " + std::to_string(n) + " numbers");
    std::vector<double> v;
    for (const json& x : a) {
        if (!x.is_number()) throw TraceError(std::string("'") + key + "' holds a non-number");
        v.push_back(x.get<double>());
    }
    return v;
}

Pose read_pose(const json& j, const char* key) {
    const auto v = numbers(j, key, 7);
    Pose p;
    p.rotation = Quat(v[0], v[1], v[2], v[3]);
    p.translation = Vec3(v[4], v[5], v[6]);
    return p;
}

HandKeypoints read_hand(const json& j, const char* key) {
    const auto v = numbers(j, key, 3 * kKeypointCount);
    HandKeypoints h;
    for (int k = 0; k < kKeypointCount; ++k) h.points[static_cast<std::size_t>(k)] = Vec3(v[3 * k], v[3 * k + 1], v[3 * k + 2]);
    return h;
}

// Robot frame standing in for each human keypoint of a hand's vector spec.
std::map<Keypoint, std::string> keypoint_frames(const VectorSpec& spec) {
    std::map<Keypoint, std::string> out;
    for (const VectorDef& d : spec) {
        out.emplace(d.human_from, d.robot_from);
        out.emplace(d.human_to, d.robot_to);
    }
    return out;
}

// Bundled data is written relative to the data directory so traces move
// between checkouts.
std::filesystem::path portable(const std::filesystem::path& p) {
    if (!p.is_absolute()) return p;
    std::error_code ec;
    const auto root = std::filesystem::weakly_canonical(data_dir(), ec);
    const auto rel = std::filesystem::weakly_canonical(p, ec).lexically_relative(root);
    if (ec || rel.empty() || *rel.begin() == "..") return p;
    return rel;
}

}  // namespace

json trace_to_json(const Trace& trace) {
    json events = json::array();
    for (const TraceEvent& e : trace.events) {
        json ev = {{"t", e.t}};
        if (e.frame) {
            const OperatorFrame& f = *e.frame;
            ev["frame"] = {{"validity", f.validity},
                           {"head", pose_array(f.head)},
                           {"left_wrist", pose_array(f.wrists[0])},
                           {"right_wrist", pose_array(f.wrists[1])},
                           {"left_hand", points_array(f.hands[0])},
                           {"right_hand", points_array(f.hands[1])}};
        } else {
            ev["control"] = e.control;
        }
        events.push_back(std::move(ev));
    }
    return {{"format", kFormat},       {"version", kVersion},    {"robot", trace.robot},
            {"scene", portable(trace.scene).generic_string()}, {"seed", trace.seed}, {"rate_hz", trace.rate_hz},
            {"ticks", trace.ticks},    {"events", std::move(events)}};
}

Trace parse_trace(const json& j, const std::filesystem::path& base_dir) {
    try {
        if (!j.is_object() || j.value("format", std::string{}) != kFormat) throw TraceError("not an otv trace");
        if (j.value("version", 0) != kVersion) throw TraceError("unsupported trace version");
        Trace t;
        t.robot = j.value("robot", t.robot);
        t.scene = resolve_path(j.value("scene", t.scene.string()), base_dir);
        t.seed = j.value("seed", t.seed);
        t.rate_hz = j.value("rate_hz", t.rate_hz);
        t.ticks = j.at("ticks").get<std::int64_t>();
        if (!(t.rate_hz > 0.0) || t.ticks < 0) throw TraceError("trace needs a positive rate and tick count");
        double last = -1e300;
        for (const json& e : j.at("events")) {
            TraceEvent ev;
            ev.t = e.at("t").get<double>();
            if (!std::isfinite(ev.t) || ev.t < last) throw TraceError("trace event times must be finite and non-decreasing");
            last = ev.t;
            if (e.contains("frame")) {
                const json& fj = e.at("frame");
                OperatorFrame f;
                f.timestamp = ev.t;
                f.validity = fj.at("validity").get<std::uint8_t>();
                f.head = read_pose(fj, "head");
                f.wrists[0] = read_pose(fj, "left_wrist");
                f.wrists[1] = read_pose(fj, "right_wrist");
                f.hands[0] = read_hand(fj, "left_hand");
                f.hands[1] = read_hand(fj, "right_hand");
                ev.frame = f;
            } else if (e.contains("control")) {
                ev.control = e.at("control");
            } else {
                throw TraceError("trace event needs 'frame' or 'control'");
            }
            t.events.push_back(std::move(ev));
        }
        return t;
    } catch (const json::exception& e) {
        throw TraceError(std::string("malformed trace: ") + e.what());
    }
}

Trace load_trace(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw TraceError("cannot open trace " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    const json j = json::parse(ss.str(), nullptr, false);
    if (j.is_discarded()) throw TraceError(path.string() + " is not valid JSON");
    return parse_trace(j, path.parent_path());
}

void save_trace(const Trace& trace, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw TraceError("cannot write trace " + path.string());
    // One event per line keeps diffs of the bundled trace readable.
    json j = trace_to_json(trace);
    json events = std::move(j["events"]);
    j.erase("events");
    std::string head = j.dump();
    head.pop_back();
    out << head << ",\"events\":[\n";
    for (std::size_t i = 0; i < events.size(); ++i) out << events[i].dump() << (i + 1 < events.size() ? ",\n" : "\n");
    out << "]}\n";
}

Trace synthesize_wave_trace(const RobotModel& model, const std::string& robot, double duration_s) {
    using std::numbers::pi;
    const RobotProfile profile = derive_profile(model);
    const KinematicState home(model, profile.home);
    const Pose head_home = home.frame_pose(model.frame_index(profile.head_frame));

    Trace t;
    t.robot = robot;
    t.scene = "scenes/can_sorting.json";
    t.ticks = std::llround(duration_s * t.rate_hz);
    const double switch_time = duration_s - 2.0;

    const Vec3 op_head(0.0, 0.0, 1.6);
    std::array<Pose, 2> ee_home;
    std::array<VectorSpec, 2> specs;
    std::array<double, 2> alpha{};
    for (Side s : kSides) {
        const std::size_t i = side_index(s);
        ee_home[i] = home.frame_pose(model.frame_index(profile.arm(s).ee_frame));
        specs[i] = spec_for(profile.hand(s), s);
        alpha[i] = RetargetingConfig::for_hand(profile.hand(s).kind).alpha;
    }

    const auto frame_at = [&](double time) {
        const double ramp = std::min(1.0, time / 1.0);
        const double ease = ramp * ramp * (3.0 - 2.0 * ramp);
        OperatorFrame f;
        f.timestamp = time;
        f.validity = valid::all;
        const double yaw = 0.5 * ease * std::sin(2.0 * pi * 0.25 * time);
        const double pitch = 0.25 * ease * std::sin(2.0 * pi * 0.2 * time);
        f.head = Pose(quat_from_axis_angle(Vec3::UnitZ(), yaw) * quat_from_axis_angle(Vec3::UnitY(), pitch), op_head);

        const double closure = 0.5 - 0.5 * std::cos(2.0 * pi * 0.4 * time);
        for (Side s : kSides) {
            const std::size_t i = side_index(s);
            const double sign = s == Side::left ? 1.0 : -1.0;
            const double phase = 2.0 * pi * 0.3 * time;
            Vec3 offset;
            if (s == Side::left) {
                offset = Vec3(0.05 * std::sin(phase), 0.05 * (1.0 - std::cos(phase)), 0.0);
            } else {
                offset = Vec3(0.04 * std::sin(2.0 * pi * 0.5 * time), 0.0, 0.06 * (1.0 - std::cos(phase)));
            }
            const Quat wobble = quat_from_axis_angle(Vec3::UnitX(), sign * 0.25 * std::sin(2.0 * pi * 0.5 * time));
            const Pose wrist(ee_home[i].rotation * wobble,
                             op_head + (ee_home[i].translation - head_home.translation) + ease * offset);
            f.wrists[i] = wrist;

            // Human keypoints: the robot hand's own frames at this closure,
            // scaled down by alpha and hung off the operator wrist.
            const HandProfile& hand = profile.hand(s);
            JointVector q = profile.home;
            for (std::size_t k = 0; k < hand.dofs.size(); ++k) {
                const auto e = static_cast<Eigen::Index>(k);
                q[hand.dofs[k]] = hand.open[e] + closure * (hand.closed[e] - hand.open[e]);
            }
            const KinematicState ks(model, effective_configuration(model, q));
            const Pose root_inv = inverse(ks.frame_pose(model.frame_index(hand.root_frame)));
            const auto frames = keypoint_frames(specs[i]);
            for (int k = 0; k < kKeypointCount; ++k) {
                const auto key = static_cast<Keypoint>(k);
                Vec3 local;
                if (auto it = frames.find(key); it != frames.end()) {
                    local = (root_inv * ks.frame_pose(model.frame_index(it->second))).translation / alpha[i];
                } else {
                    // Unused by this hand's vectors; laid out along the palm.
                    local = Vec3(0.02 * k, 0.0, -0.01);
                }
                f.hands[i].points[static_cast<std::size_t>(k)] = wrist.transform_point(local);
            }
        }
        return f;
    };

    const auto control = [&](double time, json body) {
        TraceEvent e;
        e.t = time;
        e.control = std::move(body);
        t.events.push_back(std::move(e));
    };

    bool switched = false;
    for (std::int64_t i = 0; i + 1 < t.ticks; ++i) {
        const double time = round6((static_cast<double>(i) + 0.5) / t.rate_hz);
        if (!switched && time >= switch_time) {
            control(time, {{"cmd", "set_mode"}, {"mode", "autonomous"}});
            switched = true;
        }
        TraceEvent e;
        e.t = time;
        e.frame = frame_at(time);
        e.frame->timestamp = time;
        t.events.push_back(std::move(e));
        if (i == 0) {
            control(time, {{"cmd", "calibrate"}});
            control(time, {{"cmd", "set_mode"}, {"mode", "teleop"}});
            control(time, {{"cmd", "start_recording"}, {"task", "wave"}});
        }
    }
    control(round6((static_cast<double>(t.ticks) - 1.5) / t.rate_hz), {{"cmd", "stop_recording"}});
    // Round trip through the file representation so a synthesized trace and
    // its saved copy replay identically.
    return parse_trace(trace_to_json(t));
}

TraceRun run_trace(const Trace& trace, const RobotModel& model, SessionConfig cfg,
                   const std::filesystem::path& work_dir) {
    cfg.rate_hz = trace.rate_hz;
    cfg.scene_seed = trace.seed;
    cfg.record_dir = work_dir;
    if (cfg.created.empty()) cfg.created = "trace";
    Session session(model, cfg, load_scene(trace.scene));

    TraceRun run;
    std::size_t next = 0;
    Mode previous = session.mode();
    for (std::int64_t i = 0; i < trace.ticks; ++i) {
        const double now = static_cast<double>(i) / trace.rate_hz;
        while (next < trace.events.size() && trace.events[next].t <= now) {
            const TraceEvent& e = trace.events[next++];
            if (e.frame) session.submit(*e.frame);
            else session.control(e.control);
        }
        const Mode before = session.mode();
        TickResult r = session.tick(now);
        if (before == Mode::autonomous && previous == Mode::teleop && !run.commands.empty()) {
            run.max_switch_jump = std::max(run.max_switch_jump, (r.command - run.commands.back()).cwiseAbs().maxCoeff());
            ++run.switches;
        }
        previous = before;
        run.commands.push_back(r.command);
        run.modes.push_back(r.mode);
    }
    session.shutdown();

    run.nonfinite_commands = session.stats().nonfinite_commands();
    run.mean_tick_ms = session.stats().mean_tick_ms();
    run.p99_tick_ms = session.stats().p99_tick_ms();
    run.errors = session.stats().error_count();
    run.episode = session.last_episode();
    if (!run.episode.empty()) {
        std::ifstream in(run.episode / "steps.bin", std::ios::binary);
        std::stringstream ss;
        ss << in.rdbuf();
        run.steps_bin = ss.str();
    }
    return run;
}

}  // namespace otv
