// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// line fails. Tolerances are pinned below; nothing here is tuned per run.

#include "teleop_support.hpp"

#include "otv/episode.hpp"
#include "otv/kinematics.hpp"
#include "otv/latency.hpp"
#include "otv/policy.hpp"
#include "otv/session.hpp"
#include "otv/trace.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <thread>
#include <unistd.h>

namespace fs = std::filesystem;
using namespace otv;
using otv::testing::calibration_frame;
using otv::testing::gr1;
using otv::testing::h1;
using otv::testing::keypoints_from_robot;
using otv::testing::random_arm;
using otv::testing::random_configuration;
using otv::testing::random_hand;

namespace {

// ---- pinned tolerances --------------------------------------------------------

constexpr double kJacobianTol = 1e-5;
constexpr double kKinematicsSeconds = 5.0;
constexpr int kIkRequired = 99;
constexpr double kIkPosTol = 1e-3;
constexpr double kIkRotTol = 1e-2;
constexpr int kIkMaxIterations = 300;
constexpr double kNullspaceRel = 1e-6;
constexpr int kRetargetRequired = 95;
constexpr double kRetargetResidual = 1e-3;
constexpr double kRetargetAlpha = 1.1;
constexpr double kBetaPinTol = 1e-4;
constexpr double kOracleTol = 1e-9;
constexpr int kHistories = 10000;
constexpr int kFuzzCases = 100000;
constexpr double kSortSeconds = 60.0;
constexpr double kTickBudgetMs = 16.6;
constexpr double kOneWayDelayMs = 40.0;

constexpr double kDt = 1.0 / 60.0;

struct Outcome {
    bool pass = false;
    std::string detail;
};

using clock_type = std::chrono::steady_clock;

double seconds_since(clock_type::time_point t0) {
    return std::chrono::duration<double>(clock_type::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

const SceneSpec& sorting_scene() {
    static const SceneSpec s = load_scene(otv::testing::data_dir() / "scenes" / "can_sorting.json");
    return s;
}

fs::path scratch(const std::string& tag) {
    const fs::path p = fs::temp_directory_path() / ("otv_acceptance_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

// ---- kinematics -----------------------------------------------------------------

Jacobian central_difference(const RobotModel& m, const JointVector& q, int frame, double h) {
    const Pose t0_inv = inverse(KinematicState(m, q).frame_pose(frame));
    Jacobian out(6, m.dof());
    for (int d = 0; d < m.dof(); ++d) {
        JointVector qp = q, qm = q;
        qp[d] += h;
        qm[d] -= h;
        const Vec6 plus = log(compose(t0_inv, KinematicState(m, qp).frame_pose(frame))).vector();
        const Vec6 minus = log(compose(t0_inv, KinematicState(m, qm).frame_pose(frame))).vector();
        out.col(d) = (plus - minus) / (2.0 * h);
    }
    return out;
}

Outcome kinematics() {
    const auto t0 = clock_type::now();
    std::mt19937_64 rng(1);
    double worst = 0.0;
    for (const RobotModel* m : {&h1(), &gr1()}) {
        for (int trial = 0; trial < 100; ++trial) {
            const JointVector q = random_configuration(*m, rng, 1e-3);
            const KinematicState ks(*m, q);
            for (int f = 0; f < static_cast<int>(m->frames().size()); ++f)
                worst = std::max(worst, (ks.jacobian(f) - central_difference(*m, q, f, 1e-6)).cwiseAbs().maxCoeff());
        }
    }
    const double secs = seconds_since(t0);
    return {worst < kJacobianTol && secs < kKinematicsSeconds,
            fmt("max |J - FD| %.2e (< %.0e), 2 models x 100 configs x all frames, %.2f s (< %.0f s)", worst,
                kJacobianTol, secs, kKinematicsSeconds)};
}

// ---- IK -------------------------------------------------------------------------------

Outcome inverse_kinematics() {
    int worst_ok = 100;
    std::string per_arm;
    for (const RobotModel* m : {&h1(), &gr1()}) {
        const RobotProfile p = derive_profile(*m);
        for (Side s : kSides) {
            const ArmChain chain = ArmChain::of(*m, p.arm(s));
            IkConfig cfg;
            cfg.max_iterations = kIkMaxIterations;
            std::mt19937_64 rng(1000);
            int ok = 0;
            for (int seed = 0; seed < 100; ++seed) {
                const JointVector q_star = random_arm(*m, chain, p.home, rng, 0.05);
                const Pose target = KinematicState(*m, q_star).frame_pose(chain.frame);
                const ArmSolution sol = solve_arm(*m, p.home, chain, target, cfg, p.reference);
                const PoseError e = pose_error(KinematicState(*m, sol.q).frame_pose(chain.frame), target);
                ok += e.position < kIkPosTol && e.rotation < kIkRotTol && sol.iterations <= kIkMaxIterations;
            }
            worst_ok = std::min(worst_ok, ok);
            per_arm += fmt(" %s/%s %d", m->name().c_str(), side_name(s), ok);
        }
    }

    // Nullspace: every correction the solver could apply, including near the
    // straight-elbow singularity where the guard is active.
    double worst_ratio = 0.0;
    int active = 0;
    for (const RobotModel* m : {&h1(), &gr1()}) {
        const RobotProfile p = derive_profile(*m);
        for (Side s : kSides) {
            const ArmChain chain = ArmChain::of(*m, p.arm(s));
            IkConfig cfg;
            std::mt19937_64 rng(22);
            std::uniform_real_distribution<double> elbow(-0.02, 0.09);
            for (int i = 0; i < 200; ++i) {
                JointVector q = random_arm(*m, chain, p.home, rng, 0.05);
                if (i % 2 == 0) q[chain.dofs[3]] = std::clamp(elbow(rng), m->lower_limits()[chain.dofs[3]],
                                                              m->upper_limits()[chain.dofs[3]]);
                const Jacobian j = select_columns(jacobian(*m, q, p.arm(s).ee_frame), chain.dofs);
                const JointVector v = nullspace_correction(*m, q, p.reference, chain, j, cfg);
                Eigen::VectorXd vc(static_cast<Eigen::Index>(chain.dofs.size()));
                for (std::size_t k = 0; k < chain.dofs.size(); ++k) vc[static_cast<Eigen::Index>(k)] = v[chain.dofs[k]];
                active += vc.norm() > 0.0;
                worst_ratio = std::max(worst_ratio, (j * vc).norm() / std::max(vc.norm(), 1e-9));
            }
        }
    }
    return {worst_ok >= kIkRequired && worst_ratio <= kNullspaceRel,
            fmt("converged (pos < %.0e m, rot < %.0e rad, <= %d iters):%s (need >= %d each); "
                "nullspace max |Jv|/max(|v|,1e-9) %.1e over %d active corrections (<= %.0e)",
                kIkPosTol, kIkRotTol, kIkMaxIterations, per_arm.c_str(), kIkRequired, worst_ratio, active,
                kNullspaceRel)};
}

// ---- retargeting ------------------------------------------------------------------------

Outcome retargeting() {
    const RobotModel& m = h1();
    const RobotProfile p = derive_profile(m);
    int worst_ok = 100;
    std::string per_hand;
    for (Side s : kSides) {
        const HandChain chain(m, p.hand(s), spec_for(p.hand(s), s));
        RetargetingConfig cfg;
        cfg.alpha = kRetargetAlpha;
        cfg.beta = 0.0;   // recovery is a property of the vector term; see the README
        std::mt19937_64 rng(33);
        std::uniform_real_distribution<double> jitter(-0.05, 0.05);
        int ok = 0;
        for (int seed = 0; seed < 100; ++seed) {
            const Eigen::VectorXd q_star = random_hand(chain, rng, 0.05);
            JointVector q_full = p.home;
            chain.scatter(q_star, q_full);
            const Pose wrist = otv::testing::random_pose(rng);
            const HandKeypoints kp = keypoints_from_robot(m, s, q_full, wrist, cfg.alpha);
            Eigen::VectorXd q_prev = q_star;
            for (Eigen::Index i = 0; i < q_prev.size(); ++i) q_prev[i] += jitter(rng);
            q_prev = q_prev.cwiseMax(chain.lower()).cwiseMin(chain.upper());
            const RetargetingProblem prob{&chain, compute_human_vectors(kp, wrist, chain.spec(), cfg.alpha), q_prev};
            ok += vector_residual(retarget_step(prob, cfg).q, prob) < kRetargetResidual;
        }
        worst_ok = std::min(worst_ok, ok);
        per_hand += fmt(" %s %d", side_name(s), ok);
    }

    // beta = 1e6 pins the output.
    double pin = 0.0;
    {
        const HandChain chain(m, p.hand(Side::left), spec_for(p.hand(Side::left), Side::left));
        RetargetingConfig cfg;
        cfg.beta = 1e6;
        std::mt19937_64 rng(34);
        for (int trial = 0; trial < 100; ++trial) {
            const RetargetingProblem prob{&chain, chain.vectors(random_hand(chain, rng)), random_hand(chain, rng)};
            pin = std::max(pin, (retarget_step(prob, cfg).q - prob.q_prev).cwiseAbs().maxCoeff());
        }
    }

    // Gripper pinch sweep 0 -> 0.12 m on the gripper model, both hands.
    bool monotone = true;
    double open_limit_pinch = 0.0;
    {
        const RobotProfile gp = derive_profile(gr1());
        for (Side s : kSides) {
            const HandChain chain(gr1(), gp.hand(s), spec_for(gp.hand(s), s));
            const RetargetingConfig cfg = RetargetingConfig::for_hand(HandKind::gripper);
            Eigen::VectorXd q = chain.lower();
            double prev = -1.0;
            bool saturated = false;
            for (int i = 0; i <= 120; ++i) {
                const double pinch = 0.001 * i;
                HandKeypoints kp;
                kp[Keypoint::thumb_tip] = Vec3(0.1, 0.0, -0.5 * pinch);
                kp[Keypoint::index_tip] = Vec3(0.1, 0.0, 0.5 * pinch);
                const RetargetingProblem prob{&chain, compute_human_vectors(kp, Pose::identity(), chain.spec(), cfg.alpha),
                                              q};
                q = retarget_step(prob, cfg).q;
                // Strict until the jaw reaches its open limit, then held there.
                if (!saturated) monotone &= q[0] > prev || i == 0;
                else monotone &= q[0] == prev;
                if (!saturated && q[0] >= chain.upper()[0]) {
                    saturated = true;
                    open_limit_pinch = pinch;
                }
                prev = q[0];
            }
        }
    }
    return {worst_ok >= kRetargetRequired && pin < kBetaPinTol && monotone,
            fmt("round trip (alpha %.1f) residual < %.0e:%s (need >= %d); beta 1e6 max |q - q_prev| %.1e (< %.0e); "
                "pinch 0->0.12 m strictly increasing up to the %.3f m open limit: %s",
                kRetargetAlpha, kRetargetResidual, per_hand.c_str(), kRetargetRequired, pin, kBetaPinTol,
                open_limit_pinch, monotone ? "yes" : "no")};
}

// ---- aggregation ---------------------------------------------------------------------------

Eigen::VectorXd brute_force(const std::vector<ActionChunk>& history, std::int64_t tick, int k, double m) {
    std::vector<const ActionChunk*> covering;
    for (const ActionChunk& c : history)
        if (tick >= c.start_tick && tick < c.start_tick + c.actions.rows()) covering.push_back(&c);
    if (covering.size() > static_cast<std::size_t>(k)) covering.erase(covering.begin(), covering.end() - k);
    Eigen::VectorXd num = Eigen::VectorXd::Zero(history.front().actions.cols());
    double den = 0.0;
    for (std::size_t i = 0; i < covering.size(); ++i) {
        const double w = std::exp(-m * static_cast<double>(i));
        num += w * covering[i]->actions.row(tick - covering[i]->start_tick).transpose();
        den += w;
    }
    return num / den;
}

Outcome aggregation() {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    double worst = 0.0;
    int histories = 0;
    const double ms[] = {0.0, 0.005, 0.01, 0.05};
    const int ks[] = {1, 60, 100};
    for (int h = 0; h < kHistories; ++h, ++histories) {
        const double m = ms[h % 4];
        const int k = ks[(h / 4) % 3];
        const int n = 1 + static_cast<int>(rng() % 26);
        TemporalAggregator agg(n, k, m);
        std::vector<ActionChunk> history;
        std::int64_t start = static_cast<std::int64_t>(rng() % 50);
        const int pushes = 1 + static_cast<int>(rng() % 150);
        for (int p = 0; p < pushes; ++p) {
            start += static_cast<std::int64_t>(rng() % 3);
            ActionChunk c;
            c.start_tick = start;
            c.actions.resize(k, n);
            for (Eigen::Index i = 0; i < c.actions.size(); ++i) c.actions.data()[i] = u(rng);
            history.push_back(c);
            agg.push(std::move(c));
        }
        for (int probe = 0; probe < 4; ++probe) {
            const std::int64_t tick = start + static_cast<std::int64_t>(rng() % static_cast<unsigned>(k));
            worst = std::max(worst, (agg.aggregate(tick) - brute_force(history, tick, k, m)).cwiseAbs().maxCoeff());
        }
    }
    return {worst < kOracleTol && histories == kHistories,
            fmt("max |aggregate - oracle| %.2e (< %.0e) over %d histories, m in {0,0.005,0.01,0.05}, k in {1,60,100}",
                worst, kOracleTol, histories)};
}

// ---- protocol ------------------------------------------------------------------------------

Outcome protocol() {
    std::mt19937_64 rng(7);
    int mismatches = 0;
    const int round_trips = 20000;
    for (int i = 0; i < round_trips; ++i) {
        const Message m = otv::testing::random_message(rng);
        const std::string bytes = encode_message(m);
        try {
            const Message back = decode_message(bytes);
            mismatches += !(back == m) || encode_message(back) != bytes;
        } catch (const std::exception&) {
            ++mismatches;
        }
    }

    std::vector<std::string> seeds;
    for (int i = 0; i < 64; ++i) seeds.push_back(encode_message(otv::testing::random_message(rng)));
    int decoded = 0, rejected = 0, crashed = 0;
    for (int i = 0; i < kFuzzCases; ++i) {
        std::string b;
        if (i % 3 == 0) {
            b.resize(rng() % 300);
            for (char& c : b) c = static_cast<char>(rng());
            if (!b.empty() && (rng() & 1)) b[0] = static_cast<char>(1 + rng() % 7);
        } else if (i % 3 == 1) {
            b = seeds[rng() % seeds.size()];
            for (int k = 0, n = 1 + static_cast<int>(rng() % 4); k < n && !b.empty(); ++k)
                b[rng() % b.size()] = static_cast<char>(rng());
        } else {
            b = seeds[rng() % seeds.size()];
            b.resize(rng() % (b.size() + 8), static_cast<char>(rng()));
        }
        try {
            decode_message(encode_message(decode_message(b)));
            ++decoded;
        } catch (const ProtocolError&) {
            ++rejected;
        } catch (...) {
            ++crashed;
        }
    }
    return {mismatches == 0 && crashed == 0,
            fmt("%d/%d generated messages round-trip bitwise; fuzz %d cases: %d decoded, %d typed rejections, "
                "%d other failures",
                round_trips - mismatches, round_trips, kFuzzCases, decoded, rejected, crashed)};
}

// ---- end to end -------------------------------------------------------------------------------

Outcome end_to_end() {
    const Trace trace = load_trace(otv::testing::data_dir() / "traces" / "wave.json");
    const std::string golden = otv::testing::read_text(otv::testing::data_dir() / "golden" / "wave_h1.steps.bin");
    SessionConfig cfg;
    cfg.frame_stride = 0;
    const fs::path a = scratch("e2e_a"), b = scratch("e2e_b");
    const TraceRun r1 = run_trace(trace, h1(), cfg, a);
    const TraceRun r2 = run_trace(trace, h1(), cfg, b);
    fs::remove_all(a);
    fs::remove_all(b);

    // Recompute the switch discontinuity directly from the command stream.
    double jump = 0.0;
    int switches = 0;
    for (std::size_t i = 1; i < r1.commands.size(); ++i)
        if (r1.modes[i] != r1.modes[i - 1]) {
            ++switches;
            jump = std::max(jump, (r1.commands[i] - r1.commands[i - 1]).cwiseAbs().maxCoeff());
        }
    const double bound = cfg.sim.v_max * kDt;
    const bool same = !r1.steps_bin.empty() && r1.steps_bin == r2.steps_bin;
    const bool matches_golden = r1.steps_bin == golden;
    return {same && matches_golden && switches >= 1 && jump <= bound + 1e-12,
            fmt("two runs identical: %s; equal to bundled golden (%zu bytes): %s; %d mode switches, max jump %.4f rad "
                "(<= v_max*dt = %.4f)",
                same ? "yes" : "no", golden.size(), matches_golden ? "yes" : "no", switches, jump, bound)};
}

// ---- autonomous sorting ----------------------------------------------------------------------------

Outcome autonomous_sort() {
    const auto t0 = clock_type::now();
    int passed = 0, runs = 0;
    std::string failures;
    for (const RobotModel* m : {&h1(), &gr1()}) {
        for (std::uint64_t seed = 0; seed < 10; ++seed, ++runs) {
            SessionConfig cfg;
            cfg.frame_stride = 0;
            cfg.scene_seed = seed;
            Session s(*m, cfg, sorting_scene());
            s.control({{"cmd", "set_mode"}, {"mode", "autonomous"}});
            std::vector<bool> held(s.sim().objects.size(), false);
            bool gesture = false;
            for (int t = 0; t < 60 * 120 && !gesture; ++t) {
                const TickResult r = s.tick(t * kDt);
                for (std::size_t i = 0; i < held.size(); ++i) held[i] = held[i] || s.sim().attachments[i].has_value();
                for (const Message& msg : r.outbound)
                    if (const auto* c = std::get_if<ControlMsg>(&msg))
                        gesture |= c->body.value("event", "") == "end_gesture";
            }
            bool ok = gesture;
            const auto& objs = s.sim().objects;
            for (std::size_t i = 0; i < objs.size(); ++i) {
                if (!objs[i].graspable) continue;
                const auto bin = std::find_if(objs.begin(), objs.end(),
                                              [&](const SceneObject& o) { return o.name == objs[i].target; });
                ok &= held[i] && !s.sim().attachments[i] && bin != objs.end() &&
                      bin->covers(objs[i].pose.translation.x(), objs[i].pose.translation.y());
            }
            passed += ok;
            if (!ok) failures += fmt(" %s/seed%llu", m->name().c_str(), static_cast<unsigned long long>(seed));
        }
    }
    const double secs = seconds_since(t0);
    // The criterion is 10/10 seeds; both bundled robots are run.
    return {passed == runs && secs < kSortSeconds,
            fmt("%d/%d runs (10 seeds x h1-like, gr1-like) sorted every can into its bin and ended in the gesture%s%s; "
                "%.1f s (< %.0f s)",
                passed, runs, failures.empty() ? "" : "; failed:", failures.c_str(), secs, kSortSeconds)};
}

// ---- loop budget ---------------------------------------------------------------------------------

Outcome loop_budget() {
    // The wave operator trace paced at 60 Hz on the wall clock for 10 s,
    // with rendering and STEREO_FRAME encoding at the default stride.
    const Trace trace = load_trace(otv::testing::data_dir() / "traces" / "wave.json");
    SessionConfig cfg;
    const fs::path dir = scratch("budget");
    cfg.record_dir = dir;
    Session s(h1(), cfg, sorting_scene());
    const auto start = clock_type::now();
    const auto period = std::chrono::duration_cast<clock_type::duration>(std::chrono::duration<double>(kDt));
    std::size_t next_event = 0;
    double total_ms = 0.0, worst_ms = 0.0;
    std::uint64_t nan_commands = 0;
    int ticks = 0;
    for (; ticks < 600; ++ticks) {
        std::this_thread::sleep_until(start + ticks * period);
        const auto t0 = clock_type::now();
        const double now = ticks * kDt;
        for (; next_event < trace.events.size() && trace.events[next_event].t <= now; ++next_event) {
            const TraceEvent& e = trace.events[next_event];
            if (e.frame) s.submit(*e.frame);
            if (!e.control.is_null()) s.control(e.control);
        }
        const TickResult r = s.tick(now);
        std::size_t bytes = 0;
        for (const Message& m : r.outbound) bytes += encode_message(m).size();
        (void)bytes;
        nan_commands += !r.command.allFinite();
        const double ms = std::chrono::duration<double, std::milli>(clock_type::now() - t0).count();
        total_ms += ms;
        worst_ms = std::max(worst_ms, ms);
    }
    const double wall = seconds_since(start);
    s.shutdown();
    fs::remove_all(dir);
    const double mean = total_ms / ticks;
    return {mean < kTickBudgetMs && nan_commands == 0,
            fmt("%d ticks paced at 60 Hz over %.2f s: mean tick %.3f ms (< %.1f), worst %.3f ms, p99 %.3f ms, "
                "%llu non-finite commands",
                ticks, wall, mean, kTickBudgetMs, worst_ms, s.stats().p99_tick_ms(),
                static_cast<unsigned long long>(nan_commands))};
}

// ---- latency --------------------------------------------------------------------------------------

// One trial: the operator turns its head at `t_step` (seconds, virtual
// clock). Frames travel through the uplink harness, JOINT_STATE through the
// downlink; latency is the time until the operator sees the neck command.
double head_turn_latency_ms(double t_step, std::uint64_t seed) {
    const RobotModel& m = h1();
    SessionConfig cfg;
    cfg.frame_stride = 0;
    Session s(m, cfg, sorting_scene());
    LatencyHarness up(kOneWayDelayMs, 0.0, seed), down(kOneWayDelayMs, 0.0, seed + 1);
    const OperatorFrame calib = calibration_frame(m);
    s.submit(calib);
    s.control({{"cmd", "calibrate"}});
    s.control({{"cmd", "set_mode"}, {"mode", "teleop"}});

    const RobotProfile& p = s.profile();
    const auto& layout = m.action_layout();
    const auto yaw_slot = static_cast<std::size_t>(std::find(layout.begin(), layout.end(), p.neck.yaw) - layout.begin());
    const double yaw = 0.3;
    OperatorFrame turned = calib;
    turned.head.rotation = quat_from_axis_angle(Vec3::UnitZ(), yaw) * calib.head.rotation;

    // 0.1 ms virtual resolution; the operator streams at 90 Hz, the loop ticks at 60.
    constexpr double res = 1e-4;
    std::int64_t next_tick = 0, next_frame = 0;
    for (std::int64_t i = 0; i * res < t_step + 1.0; ++i) {
        const double now = static_cast<double>(i) * res;
        if (now >= next_frame / 90.0 - 1e-12) {
            OperatorFrame f = now >= t_step ? turned : calib;
            f.timestamp = now;
            up.push(encode_message(OperatorFrameMsg{f}), now);
            ++next_frame;
        }
        // The step itself is sent the instant it happens.
        if (now < t_step && now + res > t_step) {
            OperatorFrame f = turned;
            f.timestamp = t_step;
            up.push(encode_message(OperatorFrameMsg{f}), t_step);
        }
        for (const std::string& b : up.drain(now)) s.submit(std::get<OperatorFrameMsg>(decode_message(b)).frame);
        if (now >= next_tick * kDt - 1e-12) {
            const TickResult r = s.tick(now);
            for (const Message& msg : r.outbound)
                if (std::holds_alternative<JointStateMsg>(msg)) down.push(encode_message(msg), now);
            ++next_tick;
        }
        for (const std::string& b : down.drain(now)) {
            const auto js = std::get<JointStateMsg>(decode_message(b));
            if (now >= t_step && js.commanded[yaw_slot] > 0.5 * yaw) return (now - t_step) * 1000.0;
        }
    }
    return std::numeric_limits<double>::infinity();
}

Outcome latency() {
    const double lo = 2 * kOneWayDelayMs, hi = 2 * kOneWayDelayMs + 2 * 1000.0 * kDt;
    double min_ms = std::numeric_limits<double>::infinity(), max_ms = 0.0;
    const int trials = 24;
    for (int k = 0; k < trials; ++k) {
        // Spread the step over one tick period so every phase is exercised.
        const double t_step = 0.5 + k * kDt / trials + 1.3e-4;
        const double ms = head_turn_latency_ms(t_step, 100 + static_cast<std::uint64_t>(k));
        min_ms = std::min(min_ms, ms);
        max_ms = std::max(max_ms, ms);
    }
    return {min_ms >= lo - 1e-9 && max_ms <= hi + 1e-9,
            fmt("%.0f ms each way, %d step phases: operator->command latency %.2f..%.2f ms (within [%.0f, %.1f])",
                kOneWayDelayMs, trials, min_ms, max_ms, lo, hi)};
}

}  // namespace

int main() {
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
        {"kinematics", kinematics},         {"ik", inverse_kinematics},  {"retargeting", retargeting},
        {"aggregation", aggregation},       {"protocol", protocol},      {"end-to-end", end_to_end},
        {"autonomous-sort", autonomous_sort}, {"loop-budget", loop_budget}, {"latency", latency},
    };
    int failed = 0;
    for (const auto& [name, run] : criteria) {
        Outcome o;
        try {
            o = run();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        failed += !o.pass;
        std::printf("%s %-16s %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
