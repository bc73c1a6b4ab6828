#include "teleop_support.hpp"

#include "otv/config.hpp"
#include "otv/latency.hpp"
#include "otv/loop_stats.hpp"
#include "otv/protocol.hpp"
#include "otv/session.hpp"
#include "otv/trace.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <limits>

using namespace otv;
using otv::testing::h1;
using otv::testing::gr1;
using otv::testing::calibration_frame;
using otv::testing::random_frame;
using otv::testing::random_message;
using otv::testing::random_json;
using otv::testing::random_utf8;
using otv::testing::f32;

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr double kDt = 1.0 / 60.0;

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("otv_teleop_" + tag + "_" + std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

// ---- session helpers ------------------------------------------------------

SessionConfig quiet_config() {
    SessionConfig c;
    c.frame_stride = 0;
    return c;
}

const SceneSpec& sorting_scene() {
    static const SceneSpec s = load_scene(otv::testing::data_dir() / "scenes" / "can_sorting.json");
    return s;
}

OperatorFrame perturbed(const OperatorFrame& base, std::mt19937_64& rng, double scale) {
    OperatorFrame f = base;
    const auto jiggle = [&](Pose& p) {
        p = Pose(p.rotation * quat_from_axis_angle(otv::testing::random_vec(rng, 1.0).normalized(), scale),
                 p.translation + otv::testing::random_vec(rng, 0.2 * scale));
    };
    jiggle(f.head);
    for (Pose& w : f.wrists) jiggle(w);
    for (HandKeypoints& h : f.hands)
        for (Vec3& p : h.points) p += otv::testing::random_vec(rng, 0.05 * scale);
    return f;
}

bool within_limits(const RobotModel& m, const Eigen::VectorXd& action) {
    const auto& layout = m.action_layout();
    for (std::size_t i = 0; i < layout.size(); ++i) {
        const int d = layout[i];
        const double v = action[static_cast<Eigen::Index>(i)];
        if (!std::isfinite(v) || v < m.lower_limits()[d] - 1e-12 || v > m.upper_limits()[d] + 1e-12) return false;
    }
    return true;
}

int count_type(const std::vector<Message>& msgs, MessageType t) {
    int n = 0;
    for (const Message& m : msgs) n += type_of(m) == t;
    return n;
}

}  // namespace

// ---- protocol -------------------------------------------------------------

TEST_CASE("operator frame layout: identity poses encode to the exact byte count and round-trip") {
    OperatorFrameMsg m;
    m.frame.timestamp = 12.5;
    m.frame.validity = valid::all;
    const std::string bytes = encode_message(m);
    CHECK(bytes.size() == 1 + 8 + 3 * 28 + 2 * 72 + 1);
    CHECK(bytes.size() == kOperatorFrameSize);
    CHECK(static_cast<std::uint8_t>(bytes[0]) == 0x02);
    const Message back = decode_message(bytes);
    REQUIRE(std::holds_alternative<OperatorFrameMsg>(back));
    CHECK(std::get<OperatorFrameMsg>(back) == m);
    CHECK(encode_message(back) == bytes);
}

TEST_CASE("wire layouts of the fixed-size messages") {
    JointStateMsg js;
    js.timestamp = 1.0;
    js.commanded = {1.0f, 2.0f, 3.0f};
    js.measured = {4.0f, 5.0f, 6.0f};
    const std::string b = encode_message(js);
    CHECK(b.size() == 1 + 8 + 2 + 3 * 4 * 2);
    CHECK(static_cast<unsigned char>(b[9]) == 3);
    CHECK(static_cast<unsigned char>(b[10]) == 0);

    SceneStateMsg ss;
    ss.objects.resize(2);
    CHECK(encode_message(ss).size() == 1 + 2 + 2 * (4 + 1 + 12 + 28 + 4 + 1));

    StereoFrameMsg st;
    st.width = 3;
    st.height = 2;
    st.pixels.assign(36, '\x7f');
    CHECK(encode_message(st).size() == 1 + 5 + 36);
    st.pixels.pop_back();
    CHECK_THROWS_AS(encode_message(st), std::invalid_argument);

    JointStateMsg uneven;
    uneven.commanded = {1.0f};
    CHECK_THROWS_AS(encode_message(uneven), std::invalid_argument);
}

TEST_CASE("round trip identity over property-generated messages") {
    std::mt19937_64 rng(7);
    int seen[8] = {};
    for (int i = 0; i < 20000; ++i) {
        const Message m = random_message(rng);
        const std::string bytes = encode_message(m);
        Message back;
        try {
            back = decode_message(bytes);
        } catch (const NonUnitQuaternion&) {
            FAIL("generator produced a non-unit valid quaternion");
        }
        REQUIRE(back.index() == m.index());
        CHECK(back == m);
        CHECK(encode_message(back) == bytes);
        ++seen[static_cast<int>(type_of(m))];
    }
    for (int t = 1; t <= 7; ++t) CHECK(seen[t] > 2000);
}

TEST_CASE("decode errors are typed") {
    CHECK_THROWS_AS(decode_message(""), TruncatedPayload);
    for (int tag : {0x00, 0x08, 0x42, 0xff}) CHECK_THROWS_AS(decode_message(std::string(1, static_cast<char>(tag))), UnknownTag);

    // Every proper prefix of a binary message is truncated; one extra byte is malformed.
    std::mt19937_64 rng(3);
    for (int i = 0; i < 200; ++i) {
        const Message m = random_message(rng);
        if (std::holds_alternative<HelloMsg>(m) || std::holds_alternative<ControlMsg>(m) ||
            std::holds_alternative<StatsMsg>(m))
            continue;
        const std::string b = encode_message(m);
        for (std::size_t n = 1; n < b.size(); ++n) CHECK_THROWS_AS(decode_message(b.substr(0, n)), TruncatedPayload);
        CHECK_THROWS_AS(decode_message(b + "x"), MalformedPayload);
    }

    SceneStateMsg bad_shape;
    bad_shape.objects.resize(1);
    bad_shape.objects[0].shape = 1;
    std::string b = encode_message(bad_shape);
    b[1 + 2 + 4] = 2;
    CHECK_THROWS_AS(decode_message(b), MalformedPayload);

    StereoFrameMsg enc;
    b = encode_message(enc);
    b[5] = 1;
    CHECK_THROWS_AS(decode_message(b), MalformedPayload);
}

TEST_CASE("quaternion norm is checked on valid components only") {
    OperatorFrameMsg m;
    m.frame.validity = valid::all;
    m.frame.head.rotation = Quat(1.0005, 0, 0, 0);   // within 1e-3
    CHECK_NOTHROW(decode_message(encode_message(m)));
    m.frame.head.rotation = Quat(1.01, 0, 0, 0);
    CHECK_THROWS_AS(decode_message(encode_message(m)), NonUnitQuaternion);
    m.frame.validity = valid::all & ~valid::head;
    CHECK_NOTHROW(decode_message(encode_message(m)));

    m.frame.validity = valid::right_wrist;
    m.frame.wrists[1].rotation = Quat(0, 0, 0, 0);
    CHECK_THROWS_AS(decode_message(encode_message(m)), NonUnitQuaternion);
    m.frame.wrists[1].rotation = Quat(std::nan(""), 0, 0, 0);
    CHECK_THROWS_AS(decode_message(encode_message(m)), NonUnitQuaternion);
    m.frame.validity = valid::left_hand;
    CHECK_NOTHROW(decode_message(encode_message(m)));

    std::string bytes = encode_message(OperatorFrameMsg{});
    bytes.back() = static_cast<char>(0x20);
    CHECK_THROWS_AS(decode_message(bytes), MalformedPayload);
}

TEST_CASE("JSON payloads: UTF-8 is validated, objects are required") {
    const auto hello = [](std::string payload) { return std::string(1, '\x01') + payload; };
    CHECK(std::get<HelloMsg>(decode_message(hello(R"({"role":"operator","name":"é é € 𝄞"})"))).body["role"] ==
          "operator");
    CHECK_THROWS_AS(decode_message(hello("{\"a\":\"\xff\"}")), BadUtf8);
    CHECK_THROWS_AS(decode_message(hello("{\"a\":\"\xc0\xaf\"}")), BadUtf8);      // overlong
    CHECK_THROWS_AS(decode_message(hello("{\"a\":\"\xed\xa0\x80\"}")), BadUtf8);  // surrogate
    CHECK_THROWS_AS(decode_message(hello("{\"a\":\"\xf4\x90\x80\x80\"}")), BadUtf8);  // > U+10FFFF
    CHECK_THROWS_AS(decode_message(hello("{\"a\":\"\xe2\x82\"}")), BadUtf8);      // cut short
    CHECK_THROWS_AS(decode_message(hello("")), MalformedPayload);
    CHECK_THROWS_AS(decode_message(hello("[1,2]")), MalformedPayload);
    CHECK_THROWS_AS(decode_message(hello("{\"a\":")), MalformedPayload);
    CHECK_THROWS_AS(decode_message(std::string(1, '\x06') + "42"), MalformedPayload);

    CHECK(valid_utf8(""));
    CHECK(valid_utf8("plain"));
    CHECK(valid_utf8("\xf0\x9f\x98\x80"));
    CHECK_FALSE(valid_utf8("\x80"));
    CHECK_FALSE(valid_utf8("\xf5\x80\x80\x80"));
}

TEST_CASE("fuzz: 100000 random and mutated byte strings decode or fail with a ProtocolError") {
    std::mt19937_64 rng(20240);
    std::vector<std::string> seeds;
    for (int i = 0; i < 64; ++i) seeds.push_back(encode_message(random_message(rng)));
    int decoded = 0, rejected = 0;
    for (int i = 0; i < 100000; ++i) {
        std::string b;
        switch (i % 3) {
            case 0: {
                b.resize(rng() % 300);
                for (char& c : b) c = static_cast<char>(rng());
                if (!b.empty() && (rng() & 1)) b[0] = static_cast<char>(1 + rng() % 7);
                break;
            }
            case 1: {
                b = seeds[rng() % seeds.size()];
                for (int k = 0, n = 1 + static_cast<int>(rng() % 4); k < n && !b.empty(); ++k)
                    b[rng() % b.size()] = static_cast<char>(rng());
                break;
            }
            default: {
                b = seeds[rng() % seeds.size()];
                b.resize(rng() % (b.size() + 8), static_cast<char>(rng()));
                break;
            }
        }
        try {
            const Message m = decode_message(b);
            // Whatever decodes must re-encode to something that decodes again.
            CHECK_NOTHROW(decode_message(encode_message(m)));
            ++decoded;
        } catch (const ProtocolError&) {
            ++rejected;
        }
    }
    CHECK(decoded + rejected == 100000);
    CHECK(decoded > 1000);
    CHECK(rejected > 1000);

    // Deep nesting is a classic parser crash.
    CHECK_THROWS_AS(decode_message("\x06" + std::string(100000, '[')), MalformedPayload);
}

// ---- config ---------------------------------------------------------------

TEST_CASE("config: the bundled default parses and resolves its paths") {
    const SessionConfig c = load_config(fs::path(OTV_TEST_DATA_DIR) / ".." / "config" / "default.json");
    CHECK(fs::exists(c.robot_model));
    CHECK(fs::exists(c.scene));
    CHECK(c.host == "127.0.0.1");
    CHECK(c.port == 8080);
    CHECK(c.ik.max_iterations == 3);
    CHECK(c.chunk_size == 60);
    CHECK(c.aggregation_m == doctest::Approx(0.01));
    CHECK(c.filter_lambda == doctest::Approx(0.6));
    CHECK(c.frame_stride == 2);
    CHECK(c.latency.delay_ms == 0.0);
}

TEST_CASE("config: typos, wrong types and bad values are ConfigError") {
    CHECK_NOTHROW(parse_config(json::object()));
    CHECK_THROWS_AS(parse_config({{"robot_modle", "x"}}), ConfigError);
    CHECK_THROWS_AS(parse_config({{"ik", {{"dampign", 0.1}}}}), ConfigError);
    CHECK_THROWS_AS(parse_config({{"port", "8080"}}), ConfigError);
    CHECK_THROWS_AS(parse_config({{"port", 70000}}), ConfigError);
    CHECK_THROWS_AS(parse_config({{"ik", 3}}), ConfigError);
    CHECK_THROWS_AS(parse_config({{"aggregator", {{"chunk_size", 0}}}}), ConfigError);
    CHECK_THROWS_AS(parse_config({{"aggregator", {{"chunk_size", 1.5}}}}), ConfigError);
    CHECK_THROWS_AS(parse_config({{"filter", {{"lambda", 0.0}}}}), ConfigError);
    CHECK_THROWS_AS(parse_config({{"retargeting", {{"alpha", -1.0}}}}), ConfigError);
    CHECK_THROWS_AS(parse_config({{"latency", {{"delay_ms", -5}}}}), ConfigError);
    CHECK_THROWS_AS(parse_config({{"render", {{"width", 8}}}}), ConfigError);
    CHECK_THROWS_AS(parse_config(json::array()), ConfigError);
    CHECK_THROWS_AS(load_config("/nonexistent/cfg.json"), ConfigError);

    const SessionConfig c = parse_config({{"retargeting", {{"beta", 2.0}}}, {"latency", {{"delay_ms", 40}}}});
    CHECK(c.retargeting.apply({}).beta == 2.0);
    CHECK(c.retargeting.apply(RetargetingConfig::for_hand(HandKind::gripper)).alpha == 1.0);
    CHECK(c.latency.delay_ms == 40.0);
}

// ---- latency ----------------------------------------------------------------

TEST_CASE("latency: zero delay delivers immediately") {
    LatencyHarness h;
    h.push("a", 1.0);
    h.push("b", 1.0);
    CHECK(h.drain(1.0) == std::vector<std::string>{"a", "b"});
    CHECK(h.pending() == 0);
}

TEST_CASE("latency: nothing arrives before enqueue + delay, order is preserved under jitter") {
    LatencyHarness fixed(40.0);
    fixed.push("x", 0.0);
    CHECK(fixed.drain(0.0399).empty());
    CHECK(fixed.drain(0.040).size() == 1);

    LatencyHarness h(40.0, 30.0, 5);
    std::vector<double> sent;
    std::vector<std::pair<double, int>> got;
    for (int i = 0; i < 500; ++i) {
        const double t = i * 0.004;
        sent.push_back(t);
        h.push(std::to_string(i), t);
        for (const std::string& s : h.drain(t)) got.emplace_back(t, std::stoi(s));
    }
    for (double t = 2.0; h.pending(); t += 0.001)
        for (const std::string& s : h.drain(t)) got.emplace_back(t, std::stoi(s));
    REQUIRE(got.size() == 500);
    for (std::size_t k = 0; k < got.size(); ++k) {
        CHECK(got[k].second == static_cast<int>(k));
        CHECK(got[k].first >= sent[k] + 0.040 - 1e-12);
    }
}

TEST_CASE("latency: the jitter schedule is a function of the seed") {
    const auto schedule = [](std::uint64_t seed) {
        LatencyHarness h(10.0, 20.0, seed);
        std::vector<double> when;
        for (int i = 0; i < 100; ++i) h.push("m", i * 0.001);
        for (double t = 0.0; h.pending(); t += 0.0005)
            for (std::size_t k = h.drain(t).size(); k > 0; --k) when.push_back(t);
        return when;
    };
    CHECK(schedule(9) == schedule(9));
    CHECK(schedule(9) != schedule(10));
    CHECK_THROWS_AS(LatencyHarness(-1.0), std::invalid_argument);
}

// ---- loop stats -------------------------------------------------------------

TEST_CASE("loop stats: nearest-rank p99, means and counters") {
    LoopStats s;
    CHECK(s.p99_tick_ms() == 0.0);
    for (int i = 1; i <= 100; ++i) s.record_tick(i, true);
    CHECK(s.p99_tick_ms() == 99.0);
    CHECK(s.mean_tick_ms() == doctest::Approx(50.5));
    CHECK(s.p99_tick_ms() >= s.mean_tick_ms());
    CHECK(s.max_tick_ms() == 100.0);
    s.ik_attempt(true, 3);
    s.ik_attempt(false, 3);
    s.retarget(4);
    s.retarget(6);
    s.error("ik", "boom");
    const json j = s.to_json();
    CHECK(j["ik_convergence_rate"] == 0.5);
    CHECK(j["retarget_iterations_mean"] == 5.0);
    CHECK(j["errors"]["ik"] == 1);
    CHECK(j["last_error"] == "ik: boom");

    // p99 is an order statistic: a single outlier in 100 samples moves the
    // mean above it.
    LoopStats skewed;
    for (int i = 0; i < 99; ++i) skewed.record_tick(1.0, true);
    skewed.record_tick(1000.0, true);
    CHECK(skewed.p99_tick_ms() == 1.0);
    CHECK(skewed.mean_tick_ms() > skewed.p99_tick_ms());
}

// ---- session ----------------------------------------------------------------

TEST_CASE("session: with no operator frame the command stays at the initial posture") {
    for (const RobotModel* m : {&h1(), &gr1()}) {
        Session s(*m, quiet_config(), sorting_scene());
        const Eigen::VectorXd home = to_action(*m, s.profile().home);
        s.control({{"cmd", "set_mode"}, {"mode", "teleop"}});
        for (int t = 0; t < 120; ++t) {
            const TickResult r = s.tick(t * kDt);
            CHECK(r.command == home);
        }
        CHECK(s.stats().frames_dropped() == 0);
        CHECK(s.stats().frames_received() == 0);
    }
}

TEST_CASE("session: emits JOINT_STATE and SCENE_STATE every tick, STEREO_FRAME every stride, STATS each second") {
    SessionConfig cfg;
    cfg.frame_stride = 3;
    Session s(h1(), cfg, sorting_scene());
    int joint = 0, scene = 0, stereo = 0, stats = 0;
    for (int t = 0; t < 120; ++t) {
        const TickResult r = s.tick(t * kDt);
        joint += count_type(r.outbound, MessageType::joint_state);
        scene += count_type(r.outbound, MessageType::scene_state);
        stereo += count_type(r.outbound, MessageType::stereo_frame);
        stats += count_type(r.outbound, MessageType::stats);
        for (const Message& m : r.outbound) CHECK_NOTHROW(decode_message(encode_message(m)));
        if (const auto* js = std::get_if<JointStateMsg>(&r.outbound.front())) {
            CHECK(js->commanded.size() == h1().action_layout().size());
            CHECK(js->timestamp == t * kDt);
        }
    }
    CHECK(joint == 120);
    CHECK(scene == 120);
    CHECK(stereo == 40);
    CHECK(stats == 2);
}

TEST_CASE("session: between ticks only the newest operator frame matters") {
    const RobotModel& m = h1();
    const OperatorFrame calib = calibration_frame(m);
    const auto run = [&](bool flood) {
        Session s(m, quiet_config(), sorting_scene());
        s.submit(calib);
        REQUIRE(s.control({{"cmd", "calibrate"}})["ok"] == true);
        s.control({{"cmd", "set_mode"}, {"mode", "teleop"}});
        std::mt19937_64 rng(11);
        std::vector<Eigen::VectorXd> out;
        for (int t = 0; t < 60; ++t) {
            std::vector<OperatorFrame> frames;
            for (int k = 0; k < 5; ++k) frames.push_back(perturbed(calib, rng, 0.2));
            if (flood)
                for (const OperatorFrame& f : frames) s.submit(f);
            else
                s.submit(frames.back());
            out.push_back(s.tick(t * kDt).command);
        }
        return std::make_pair(out, s.stats().frames_dropped());
    };
    const auto [flooded, dropped] = run(true);
    const auto [single, none] = run(false);
    CHECK(flooded == single);
    CHECK(dropped == 4 * 60 + 1);   // plus the calibration frame
    CHECK(none == 1);
}

TEST_CASE("session: teleop follows the head and wrists, hands track the pinch") {
    const RobotModel& m = h1();
    const RobotProfile p = derive_profile(m);
    OperatorFrame f = calibration_frame(m);
    Session s(m, quiet_config(), sorting_scene());
    s.submit(f);
    s.control({{"cmd", "calibrate"}});
    s.control({{"cmd", "set_mode"}, {"mode", "teleop"}});
    s.tick(0.0);

    // A head turn shows up in the very next command.
    f.head = Pose(quat_from_axis_angle(Vec3::UnitZ(), 0.3), f.head.translation);
    s.submit(f);
    const TickResult r = s.tick(kDt);
    const JointVector q = from_action(m, r.command, p.home);
    CHECK(q[p.neck.yaw] == doctest::Approx(0.3).epsilon(1e-9));
    CHECK(q[p.neck.pitch] == doctest::Approx(0.0).scale(1.0).epsilon(1e-9));

    // Full right turn saturates at the joint limit.
    f.head = Pose(quat_from_axis_angle(Vec3::UnitZ(), -2.0), f.head.translation);
    s.submit(f);
    const JointVector q2 = from_action(m, s.tick(2 * kDt).command, p.home);
    CHECK(q2[p.neck.yaw] == m.lower_limits()[p.neck.yaw]);

    // Move the right wrist 5 cm forward; after a few ticks the ee is there.
    OperatorFrame g = calibration_frame(m);
    g.wrists[1].translation += Vec3(0.05, 0.0, 0.0);
    const Pose ee0 = forward_kinematics(m, p.home, p.arm(Side::right).ee_frame);
    for (int t = 3; t < 60; ++t) {
        s.submit(g);
        s.tick(t * kDt);
    }
    const Pose ee = forward_kinematics(m, s.sim().q_measured, p.arm(Side::right).ee_frame);
    CHECK((ee.translation - (ee0.translation + Vec3(0.05, 0, 0))).norm() < 2e-3);
    CHECK(s.stats().ik_convergence_rate() > 0.5);
    CHECK(s.stats().mean_retarget_iterations() > 0.0);
}

TEST_CASE("session: fuzzed and malformed frames never produce non-finite or out-of-limit commands") {
    for (const RobotModel* m : {&h1(), &gr1()}) {
        const OperatorFrame calib = calibration_frame(*m);
        Session s(*m, quiet_config(), sorting_scene());
        s.submit(calib);
        s.control({{"cmd", "calibrate"}});
        s.control({{"cmd", "set_mode"}, {"mode", "teleop"}});
        std::mt19937_64 rng(99);
        const double nan = std::numeric_limits<double>::quiet_NaN();
        const double inf = std::numeric_limits<double>::infinity();
        for (int t = 0; t < 400; ++t) {
            OperatorFrame f;
            switch (t % 5) {
                case 0: f = random_frame(rng); break;
                case 1: {
                    f = perturbed(calib, rng, 2.0);
                    f.wrists[rng() % 2].translation[rng() % 3] = (rng() & 1) ? nan : inf;
                    break;
                }
                case 2: {
                    f = calib;
                    f.head.rotation = Quat(0, 0, 0, 0);
                    f.hands[rng() % 2].points[rng() % 6] = Vec3(nan, 0, 0);
                    break;
                }
                case 3: {
                    f = perturbed(calib, rng, 3.0);
                    f.wrists[0].translation += Vec3(5.0, -7.0, 9.0);
                    f.hands[1].points[2] += Vec3(3.0, 0, 0);
                    break;
                }
                default: f = perturbed(calib, rng, 0.5); break;
            }
            f.validity = static_cast<std::uint8_t>(rng());
            s.submit(f);
            const TickResult r = s.tick(t * kDt);
            REQUIRE(within_limits(*m, r.command));
        }
        CHECK(s.stats().nonfinite_commands() == 0);
    }
}

TEST_CASE("session: CONTROL commands and their failures") {
    Session s(h1(), quiet_config(), sorting_scene());
    CHECK(s.control({{"cmd", "ping"}, {"t", 4.5}}) == json{{"reply", "ping"}, {"ok", true}, {"tick", 0}, {"t", 4.5}});
    CHECK(s.control({{"cmd", "calibrate"}})["ok"] == false);
    OperatorFrame partial = calibration_frame(h1());
    partial.validity = valid::head;
    s.submit(partial);
    CHECK(s.control({{"cmd", "calibrate"}})["ok"] == false);
    CHECK(s.control({{"cmd", "set_mode"}, {"mode", "flying"}})["ok"] == false);
    CHECK(s.control({{"cmd", "teleport"}})["ok"] == false);
    CHECK(s.control(json::array())["ok"] == false);
    CHECK(s.control({{"cmd", "start_recording"}})["ok"] == false);   // no record dir
    CHECK(s.control({{"cmd", "stop_recording"}})["ok"] == false);
    CHECK(s.mode() == Mode::idle);
    CHECK(s.control({{"cmd", "set_mode"}, {"mode", "teleop"}})["mode"] == "teleop");
    CHECK(s.mode() == Mode::teleop);
    CHECK(s.control({{"cmd", "reset_scene"}, {"seed", 4}})["seed"] == 4);
    CHECK(s.sim().seed == 4);

    const json off = s.control({{"cmd", "stats"}});
    CHECK_FALSE(off["stats"].contains("frame_poses"));
    s.control({{"cmd", "debug"}, {"enabled", true}});
    const json dbg = s.control({{"cmd", "stats"}})["stats"];
    REQUIRE(dbg.contains("frame_poses"));
    const Pose ee = forward_kinematics(h1(), s.sim().q_measured, "right_ee");
    const json& a = dbg["frame_poses"]["right_ee"];
    CHECK((Vec3(a[4], a[5], a[6]) - ee.translation).norm() < 1e-12);
}

TEST_CASE("session: recording writes a loadable episode with operator data") {
    TempDir tmp("rec");
    SessionConfig cfg = quiet_config();
    cfg.record_dir = tmp.path;
    cfg.created = "fixed";
    const OperatorFrame calib = calibration_frame(h1());
    Session s(h1(), cfg, sorting_scene());
    s.submit(calib);
    s.control({{"cmd", "calibrate"}});
    s.control({{"cmd", "set_mode"}, {"mode", "teleop"}});
    const json started = s.control({{"cmd", "start_recording"}, {"task", "unit"}, {"frames", true}});
    REQUIRE(started["ok"] == true);
    std::vector<Eigen::VectorXd> sent;
    for (int t = 0; t < 20; ++t) {
        s.submit(calib);
        sent.push_back(s.tick(t * kDt).command);
    }
    const json stopped = s.control({{"cmd", "stop_recording"}});
    CHECK(stopped["num_steps"] == 20);

    const Episode ep = load_episode(stopped["episode"].get<std::string>());
    CHECK(ep.meta.task == "unit");
    CHECK(ep.meta.created == "fixed");
    CHECK(ep.meta.robot == h1().name());
    CHECK(ep.flags == (episode_flags::operator_block | episode_flags::frame_index));
    REQUIRE(ep.steps.size() == 20);
    for (std::size_t i = 0; i < 20; ++i) {
        CHECK(ep.steps[i].tick == i);
        REQUIRE(ep.steps[i].operator_block);
        CHECK(ep.steps[i].operator_block->validity == valid::all);
        for (std::size_t k = 0; k < ep.steps[i].commanded.size(); ++k)
            CHECK(ep.steps[i].commanded[k] == static_cast<float>(sent[i][static_cast<Eigen::Index>(k)]));
        CHECK(fs::exists(fs::path(stopped["episode"].get<std::string>()) / "frames" / frame_file_name(static_cast<std::uint32_t>(i), true)));
    }

    // A second recording gets its own directory.
    s.control({{"cmd", "start_recording"}});
    s.tick(1.0);
    s.shutdown();
    CHECK(fs::exists(tmp.path / "episode_001" / "meta.json"));
}

TEST_CASE("session: autonomous sorting ends in the gesture, recording stops, mode drops to idle") {
    TempDir tmp("auto");
    SessionConfig cfg = quiet_config();
    cfg.record_dir = tmp.path;
    Session s(h1(), cfg, sorting_scene());
    s.control({{"cmd", "set_mode"}, {"mode", "autonomous"}});
    s.control({{"cmd", "start_recording"}, {"task", "sort"}});
    bool gesture = false;
    Eigen::VectorXd prev = s.last_command();
    const double step = cfg.sim.v_max * kDt;
    for (int t = 0; t < 60 * 60 && !gesture; ++t) {
        const TickResult r = s.tick(t * kDt);
        CHECK((r.command - prev).cwiseAbs().maxCoeff() <= step + 1e-12);
        prev = r.command;
        for (const Message& msg : r.outbound)
            if (const auto* c = std::get_if<ControlMsg>(&msg))
                if (c->body.value("event", "") == "end_gesture") gesture = true;
    }
    REQUIRE(gesture);
    CHECK(s.mode() == Mode::idle);
    CHECK_FALSE(s.recording());
    for (const SceneObject& o : s.sim().objects) {
        if (o.target.empty()) continue;
        const auto bin = std::find_if(s.sim().objects.begin(), s.sim().objects.end(),
                                      [&](const SceneObject& b) { return b.name == o.target; });
        CHECK(bin->covers(o.pose.translation.x(), o.pose.translation.y()));
    }
    const Episode ep = load_episode(s.last_episode());
    CHECK(ep.meta.task == "sort");
    CHECK(ep.steps.size() == static_cast<std::size_t>(s.tick_count()));

    // Replaying the recording reproduces its commands once the continuity
    // seed has aged out of the aggregator.
    Session replay(h1(), quiet_config(), sorting_scene());
    replay.set_producer_factory([&](std::int64_t start) { return std::make_unique<EpisodeProducer>(ep, 60, start); });
    replay.control({{"cmd", "set_mode"}, {"mode", "autonomous"}});
    double late_error = 0.0;
    bool finished = false;
    for (std::size_t t = 0; t < ep.steps.size() + 5 && !finished; ++t) {
        const TickResult r = replay.tick(t * kDt);
        for (const Message& msg : r.outbound)
            if (const auto* c = std::get_if<ControlMsg>(&msg)) {
                // The recording ends in the gesture, so the replay usually
                // trips the detector a few ticks before it runs out.
                const std::string ev = c->body.value("event", "");
                finished |= ev == "replay_finished" || ev == "end_gesture";
            }
        if (t + 100 >= ep.steps.size() && t < ep.steps.size())
            for (std::size_t k = 0; k < ep.steps[t].commanded.size(); ++k)
                late_error = std::max(late_error, std::abs(r.command[static_cast<Eigen::Index>(k)] - ep.steps[t].commanded[k]));
    }
    CHECK(finished);
    CHECK(replay.mode() == Mode::idle);
    CHECK(late_error < 1e-5);
}

TEST_CASE("session: frame sanitation clears unusable components") {
    OperatorFrame f = calibration_frame(h1());
    f.head.rotation = Quat(0.5, 0, 0, 0);
    f.wrists[0].translation.x() = std::nan("");
    f.hands[1].points[3] += Vec3(1.0, 0, 0);
    f.validity = 0xff;
    const OperatorFrame s = sanitize_frame(f);
    CHECK(s.validity == (valid::right_wrist | valid::left_hand));
    OperatorFrame g = calibration_frame(h1());
    g.wrists[1].rotation = Quat(-1.0002, 0, 0, 0);
    const OperatorFrame t = sanitize_frame(g);
    CHECK(t.has(valid::right_wrist));
    CHECK(t.wrists[1].rotation.w() == doctest::Approx(1.0));
    CHECK(t.wrists[1].rotation.norm() == doctest::Approx(1.0).epsilon(1e-15));
}

// ---- traces -------------------------------------------------------------------

TEST_CASE("trace: files round-trip, malformed ones are rejected") {
    TempDir tmp("trace_io");
    const Trace t = synthesize_wave_trace(h1(), "h1", 1.0);
    CHECK(t.ticks == 60);
    save_trace(t, tmp.path / "t.json");
    const Trace back = load_trace(tmp.path / "t.json");
    CHECK(trace_to_json(back) == trace_to_json(t));
    CHECK_THROWS_AS(parse_trace(json::object()), TraceError);
    CHECK_THROWS_AS(parse_trace({{"format", "otv-trace"}, {"version", 2}, {"ticks", 1}, {"events", json::array()}}), TraceError);
    CHECK_THROWS_AS(parse_trace({{"format", "otv-trace"}, {"version", 1}, {"ticks", 1},
                                 {"events", {{{"t", 1.0}, {"control", json::object()}}, {{"t", 0.5}, {"control", json::object()}}}}}),
                    TraceError);
    CHECK_THROWS_AS(parse_trace({{"format", "otv-trace"}, {"version", 1}, {"ticks", 1},
                                 {"events", {{{"t", 0.0}, {"frame", {{"validity", 1}}}}}}}),
                    TraceError);
    CHECK_THROWS_AS(load_trace(tmp.path / "missing.json"), TraceError);
}

TEST_CASE("trace: replaying the wave trace is deterministic and continuous across the mode switch") {
    TempDir a("wave_a"), b("wave_b");
    const Trace t = load_trace(otv::testing::data_dir() / "traces" / "wave.json");
    SessionConfig cfg = quiet_config();
    const TraceRun r1 = run_trace(t, h1(), cfg, a.path);
    const TraceRun r2 = run_trace(t, h1(), cfg, b.path);
    REQUIRE(!r1.steps_bin.empty());
    CHECK(r1.steps_bin == r2.steps_bin);
    CHECK(r1.switches == 1);
    CHECK(r1.max_switch_jump <= cfg.sim.v_max * kDt + 1e-12);
    CHECK(r1.nonfinite_commands == 0);
    for (const Eigen::VectorXd& c : r1.commands) REQUIRE(within_limits(h1(), c));

    const Episode ep = load_episode(r1.episode);
    CHECK(ep.meta.task == "wave");
    CHECK(ep.meta.created == "trace");
    CHECK(ep.steps.size() > 500);

    // The operator moved: the recorded neck and arms are not frozen at home.
    const RobotProfile p = derive_profile(h1());
    double yaw_span = 0.0;
    for (const StepRecord& s : ep.steps) {
        const JointVector q = from_action(h1(), Eigen::Map<const Eigen::VectorXf>(s.commanded.data(),
                                          static_cast<Eigen::Index>(s.commanded.size())).cast<double>(), p.home);
        yaw_span = std::max(yaw_span, std::abs(q[p.neck.yaw]));
    }
    CHECK(yaw_span > 0.3);
}

TEST_CASE("trace: the bundled wave trace matches the generator and its golden recording") {
    const Trace bundled = load_trace(otv::testing::data_dir() / "traces" / "wave.json");
    CHECK(trace_to_json(bundled) == trace_to_json(synthesize_wave_trace(h1(), "h1")));

    TempDir tmp("golden");
    const TraceRun r = run_trace(bundled, h1(), quiet_config(), tmp.path);
    const std::string golden = otv::testing::read_text(otv::testing::data_dir() / "golden" / "wave_h1.steps.bin");
    REQUIRE(!golden.empty());
    CHECK(r.steps_bin.size() == golden.size());
    CHECK(r.steps_bin == golden);
}
