// otv: run, replay and check the teleoperation stack from the command line.

#include "otv/arm_control.hpp"
#include "otv/config.hpp"
#include "otv/episode.hpp"
#include "otv/hand_retargeting.hpp"
#include "otv/kinematics.hpp"
#include "otv/robot_profile.hpp"
#include "otv/server.hpp"
#include "otv/session.hpp"
#include "otv/sim_world.hpp"
#include "otv/trace.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <random>
#include <thread>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace otv;

namespace {

std::atomic<bool> g_interrupted{false};

void on_signal(int) { g_interrupted = true; }

double ms_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

JointVector random_configuration(const RobotModel& m, std::mt19937_64& rng) {
    JointVector q(m.dof());
    for (int d = 0; d < m.dof(); ++d) {
        std::uniform_real_distribution<double> u(m.lower_limits()[d], m.upper_limits()[d]);
        q[d] = u(rng);
    }
    return effective_configuration(m, q);
}

// ---- serve ------------------------------------------------------------------

struct ServeArgs {
    std::string config;
    int port = -1;
    std::string robot;
    std::string scene;
    double latency_ms = -1.0;
    double jitter_ms = -1.0;
    std::string record;
    bool frames = false;
    std::string static_dir;
    double duration_s = 0.0;
};

int serve(const ServeArgs& a) {
    SessionConfig cfg = a.config.empty() ? parse_config(json::object()) : load_config(a.config);
    if (a.port >= 0) cfg.port = static_cast<std::uint16_t>(a.port);
    if (!a.robot.empty()) cfg.robot_model = robot_model_path(a.robot);
    if (!a.scene.empty()) cfg.scene = resolve_path(a.scene, fs::current_path());
    if (a.latency_ms >= 0) cfg.latency.delay_ms = a.latency_ms;
    if (a.jitter_ms >= 0) cfg.latency.jitter_ms = a.jitter_ms;
    if (!a.record.empty()) cfg.record_dir = a.record;
    if (a.frames) cfg.record_frames = true;
    cfg.validate();

    const RobotModel model = load_robot_model(cfg.robot_model);
    const SceneSpec scene = load_scene(cfg.scene);
    Server server(model, cfg, scene, a.static_dir);
    server.start();
    std::printf("otv: serving %s on http://%s:%u/ (ws on the same port)\n", model.name().c_str(), cfg.host.c_str(),
                server.port());
    std::fflush(stdout);

    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    const auto t0 = std::chrono::steady_clock::now();
    while (!g_interrupted && (a.duration_s <= 0 || ms_since(t0) < a.duration_s * 1000.0))
        std::this_thread::sleep_for(std::chrono::milliseconds(50));

    json stats;
    server.with_session([&](Session& s) { stats = s.stats_body(); });
    server.stop();
    std::printf("otv: stopped\n%s\n", stats.dump(2).c_str());
    return 0;
}

// ---- replay -----------------------------------------------------------------

// Open loop: recorded commands go straight into the sim. Autonomous: the
// episode is served as chunks through the session's aggregator, as a
// learned policy would be.
int replay(const std::string& dir, const std::string& scene_path, int chunk, bool autonomous) {
    const Episode ep = load_episode(dir);
    const RobotModel model = load_robot_model(robot_model_path(ep.meta.robot == "h1-like"  ? "h1"
                                                               : ep.meta.robot == "gr1-like" ? "gr1"
                                                                                             : ep.meta.robot));
    SessionConfig cfg;
    cfg.frame_stride = 0;
    cfg.rate_hz = ep.meta.rate_hz;
    const SceneSpec scene = load_scene(scene_path.empty() ? resolve_path(cfg.scene, {}) : fs::path(scene_path));
    const double dt = 1.0 / cfg.rate_hz;

    if (!autonomous) {
        const RobotProfile profile = derive_profile(model);
        SimState sim = reset_scene(model, profile, scene, cfg.scene_seed);
        double worst = 0.0;
        for (const StepRecord& s : ep.steps) {
            const Eigen::VectorXd cmd = Eigen::Map<const Eigen::VectorXf>(s.commanded.data(),
                                                                          static_cast<Eigen::Index>(s.commanded.size()))
                                            .cast<double>();
            step_sim(sim, cmd, dt, cfg.sim);
            update_grasp(sim, cfg.sim);
            const Eigen::VectorXd measured = to_action(model, sim.q_measured);
            worst = std::max(worst, (measured - cmd).cwiseAbs().maxCoeff());
        }
        int attached = 0;
        for (const auto& a : sim.attachments) attached += a.has_value();
        std::printf("replayed %zu steps open loop; max |measured - commanded| %.3g rad; objects held at the end: %d\n",
                    ep.steps.size(), worst, attached);
        return 0;
    }

    Session s(model, cfg, scene);
    s.set_producer_factory([&](std::int64_t start) { return std::make_unique<EpisodeProducer>(ep, chunk, start); });
    s.control({{"cmd", "set_mode"}, {"mode", "autonomous"}});

    double worst = 0.0;
    std::size_t t = 0;
    std::string ended = "steps exhausted";
    for (; t < ep.steps.size() + static_cast<std::size_t>(chunk); ++t) {
        const TickResult r = s.tick(static_cast<double>(t) * dt);
        if (t < ep.steps.size())
            for (std::size_t k = 0; k < ep.steps[t].commanded.size(); ++k)
                worst = std::max(worst, std::abs(r.command[static_cast<Eigen::Index>(k)] - ep.steps[t].commanded[k]));
        if (s.mode() == Mode::idle) {
            ended = s.end_gesture_detected() ? "end gesture" : "end of episode";
            ++t;
            break;
        }
    }
    std::printf("%zu recorded steps served through the aggregator, idle after %zu ticks (%s); "
                "max |command - recorded| %.3g rad\n",
                ep.steps.size(), t, ended.c_str(), worst);
    std::printf("(the first %d ticks blend from the starting posture)\n", chunk);
    return 0;
}

// ---- bench ------------------------------------------------------------------

int bench_ik(const RobotModel& model, int iters, std::uint64_t seed) {
    const RobotProfile p = derive_profile(model);
    std::mt19937_64 rng(seed);
    IkConfig cfg;
    cfg.max_iterations = 300;
    int converged = 0;
    long total_iters = 0;
    double worst_ms = 0.0;
    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < iters; ++i) {
        const Side side = i % 2 == 0 ? Side::left : Side::right;
        const ArmChain chain = ArmChain::of(model, p.arm(side));
        const JointVector goal = random_configuration(model, rng);
        const Pose target = KinematicState(model, goal).frame_pose(model.frame_index(p.arm(side).ee_frame));
        const auto t1 = std::chrono::steady_clock::now();
        const ArmSolution sol = solve_arm(model, p.home, chain, target, cfg, p.reference);
        worst_ms = std::max(worst_ms, ms_since(t1));
        converged += sol.converged;
        total_iters += sol.iterations;
    }
    const double total = ms_since(t0);
    std::printf("ik %s: %d/%d converged, mean %.1f iterations, %.3f ms/solve (worst %.3f ms)\n", model.name().c_str(),
                converged, iters, static_cast<double>(total_iters) / iters, total / iters, worst_ms);
    return 0;
}

int bench_retarget(const RobotModel& model, int iters, std::uint64_t seed) {
    const RobotProfile p = derive_profile(model);
    std::mt19937_64 rng(seed);
    int solved = 0;
    long total_iters = 0;
    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < iters; ++i) {
        const Side side = i % 2 == 0 ? Side::left : Side::right;
        const HandProfile& hand = p.hand(side);
        const HandChain chain(model, hand, spec_for(hand, side));
        const RetargetingConfig cfg = RetargetingConfig::for_hand(hand.kind);
        const Eigen::VectorXd goal = chain.gather(random_configuration(model, rng));
        RetargetingProblem prob{&chain, chain.vectors(goal), chain.gather(p.home)};
        const RetargetResult r = retarget_step(prob, cfg);
        solved += vector_residual(r.q, prob) < 1e-3;
        total_iters += r.iterations;
    }
    const double total = ms_since(t0);
    std::printf("retarget %s: %d/%d single steps from home below 1e-3 residual (session config, smoothing on), "
                "mean %.1f iterations, %.3f ms/step\n",
                model.name().c_str(), solved, iters, static_cast<double>(total_iters) / iters, total / iters);
    return 0;
}

// ---- check-model ------------------------------------------------------------

int check_model(const std::string& path) {
    const RobotModel m = load_robot_model(path);
    std::printf("%s: %zu joints, %d dofs, %zu frames, %zu couplings, %zu commanded\n", m.name().c_str(),
                m.joints().size(), m.dof(), m.frames().size(), m.couplings().size(), m.action_layout().size());
    try {
        const RobotProfile p = derive_profile(m);
        for (Side s : {Side::left, Side::right})
            std::printf("  %s arm -> %s, hand %zu dofs\n", side_name(s), p.arm(s).ee_frame.c_str(),
                        p.hand(s).dofs.size());
        std::printf("  profile ok\n");
    } catch (const ModelError& e) {
        std::printf("  parses, but is not teleoperable: %s\n", e.what());
        return 2;
    }
    return 0;
}

// ---- trace ------------------------------------------------------------------

int trace_cmd(const std::string& in, const std::string& synthesize, const std::string& golden, bool verify,
              double duration, const std::string& keep) {
    if (!synthesize.empty()) {
        const RobotModel model = load_robot_model(robot_model_path("h1"));
        save_trace(synthesize_wave_trace(model, "h1", duration), synthesize);
        std::printf("wrote %s\n", synthesize.c_str());
        if (in.empty()) return 0;
    }
    if (in.empty()) throw CLI::ValidationError("--in", "a trace is required");
    const Trace t = load_trace(in);
    const RobotModel model = load_robot_model(robot_model_path(t.robot));
    const fs::path work =
        keep.empty() ? fs::temp_directory_path() / ("otv_trace_" + std::to_string(std::random_device{}())) : fs::path(keep);
    SessionConfig cfg;
    cfg.frame_stride = 0;
    const TraceRun r = run_trace(t, model, cfg, work);
    std::printf("%ld ticks, switches into autonomous: %d, max switch jump %.3g rad (bound %.3g), mean tick %.3f ms, p99 %.3f ms, "
                "%llu errors\n",
                static_cast<long>(t.ticks), r.switches, r.max_switch_jump, cfg.sim.v_max / cfg.rate_hz, r.mean_tick_ms, r.p99_tick_ms,
                static_cast<unsigned long long>(r.errors));
    if (keep.empty()) fs::remove_all(work);
    else std::printf("episode kept in %s\n", r.episode.string().c_str());
    if (golden.empty()) return 0;
    if (!verify) {
        std::ofstream(golden, std::ios::binary) << r.steps_bin;
        std::printf("wrote %s (%zu bytes)\n", golden.c_str(), r.steps_bin.size());
        return 0;
    }
    std::ifstream f(golden, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + golden);
    const std::string expect((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (expect == r.steps_bin) {
        std::printf("golden match (%zu bytes)\n", expect.size());
        return 0;
    }
    std::size_t i = 0;
    while (i < expect.size() && i < r.steps_bin.size() && expect[i] == r.steps_bin[i]) ++i;
    std::printf("golden MISMATCH: %zu vs %zu bytes, first difference at byte %zu\n", r.steps_bin.size(), expect.size(),
                i);
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Humanoid teleoperation middleware"};
    app.require_subcommand(1);

    ServeArgs sa;
    auto* serve_cmd = app.add_subcommand("serve", "Run the WebSocket/HTTP server");
    serve_cmd->add_option("--config", sa.config, "Session config JSON")->check(CLI::ExistingFile);
    serve_cmd->add_option("--port", sa.port, "Listen port (0 picks one)");
    serve_cmd->add_option("--robot", sa.robot, "h1, gr1 or a model file");
    serve_cmd->add_option("--scene", sa.scene, "Scene file");
    serve_cmd->add_option("--latency-ms", sa.latency_ms, "Injected one-way delay");
    serve_cmd->add_option("--jitter-ms", sa.jitter_ms, "Uniform extra delay bound");
    serve_cmd->add_option("--record", sa.record, "Directory for recorded episodes");
    serve_cmd->add_flag("--frames", sa.frames, "Record rendered frames too");
    serve_cmd->add_option("--static", sa.static_dir, "Serve console assets from this directory");
    serve_cmd->add_option("--duration", sa.duration_s, "Stop after this many seconds");

    std::string episode, replay_scene;
    int chunk = 60;
    auto* replay_cmd = app.add_subcommand("replay", "Drive a session from a recorded episode");
    replay_cmd->add_option("--episode", episode, "Episode directory")->required()->check(CLI::ExistingDirectory);
    replay_cmd->add_option("--scene", replay_scene, "Scene file");
    replay_cmd->add_option("--chunk", chunk, "Chunk length k")->check(CLI::PositiveNumber);
    bool replay_autonomous = false;
    replay_cmd->add_flag("--autonomous", replay_autonomous, "Serve the episode through the aggregator");

    std::string what, bench_robot = "h1";
    int iters = 1000;
    std::uint64_t seed = 1;
    auto* bench_cmd = app.add_subcommand("bench", "Time the IK or retargeting solver");
    bench_cmd->add_option("what", what, "ik or retarget")->required()->check(CLI::IsMember({"ik", "retarget"}));
    bench_cmd->add_option("--iters", iters, "Problems to solve")->check(CLI::PositiveNumber);
    bench_cmd->add_option("--robot", bench_robot, "h1, gr1 or a model file");
    bench_cmd->add_option("--seed", seed, "RNG seed");

    std::string model_file;
    auto* check_cmd = app.add_subcommand("check-model", "Parse and validate a robot model");
    check_cmd->add_option("file", model_file)->required()->check(CLI::ExistingFile);

    std::string trace_in, synth_out, golden;
    bool verify = false;
    double duration = 10.0;
    auto* trace_sub = app.add_subcommand("trace", "Replay an operator trace; write or verify its golden recording");
    trace_sub->add_option("--in", trace_in, "Trace JSON");
    trace_sub->add_option("--golden", golden, "steps.bin to write, or compare with --verify");
    trace_sub->add_flag("--verify", verify, "Compare against --golden instead of writing it");
    trace_sub->add_option("--synthesize", synth_out, "Write the built-in wave trace here");
    trace_sub->add_option("--duration", duration, "Length of a synthesized trace, seconds");
    std::string keep;
    trace_sub->add_option("--record", keep, "Keep the recorded episode under this directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*serve_cmd) return serve(sa);
        if (*replay_cmd) return replay(episode, replay_scene, chunk, replay_autonomous);
        if (*bench_cmd) {
            const RobotModel m = load_robot_model(robot_model_path(bench_robot));
            return what == "ik" ? bench_ik(m, iters, seed) : bench_retarget(m, iters, seed);
        }
        if (*check_cmd) return check_model(model_file);
        if (*trace_sub) return trace_cmd(trace_in, synth_out, golden, verify, duration, keep);
    } catch (const CLI::Error& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "otv: %s\n", e.what());
        return 1;
    }
    return 0;
}
