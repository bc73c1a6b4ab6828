#include "otv/session.hpp"

#include <chrono>
#include <cmath>
#include <ctime>

namespace otv {
namespace {

using nlohmann::json;

std::string utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::vector<float> to_floats(const Eigen::VectorXd& v) {
    std::vector<float> out(static_cast<std::size_t>(v.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) out[static_cast<std::size_t>(i)] = static_cast<float>(v[i]);
    return out;
}

bool pose_usable(const Pose& p) {
    return p.rotation.coeffs().allFinite() && p.translation.allFinite() && std::abs(p.rotation.norm() - 1.0) <= 1e-3;
}

std::array<float, 7> pose_floats(const Pose& p) {
    const Quat& q = p.rotation;
    return {static_cast<float>(q.w()), static_cast<float>(q.x()), static_cast<float>(q.y()), static_cast<float>(q.z()),
            static_cast<float>(p.translation.x()), static_cast<float>(p.translation.y()),
            static_cast<float>(p.translation.z())};
}

json pose_json(const Pose& p) {
    const Quat& q = p.rotation;
    return json::array({q.w(), q.x(), q.y(), q.z(), p.translation.x(), p.translation.y(), p.translation.z()});
}

json reply(const std::string& cmd, json extra = json::object()) {
    extra["reply"] = cmd;
    extra["ok"] = true;
    return extra;
}

json failure(const std::string& cmd, const std::string& why) {
    return {{"reply", cmd}, {"ok", false}, {"error", why}};
}

}  // namespace

const char* mode_name(Mode m) {
    switch (m) {
        case Mode::idle: return "idle";
        case Mode::teleop: return "teleop";
        case Mode::autonomous: return "autonomous";
    }
    return "?";
}

std::optional<Mode> parse_mode(std::string_view s) {
    if (s == "idle") return Mode::idle;
    if (s == "teleop") return Mode::teleop;
    if (s == "autonomous") return Mode::autonomous;
    return std::nullopt;
}

ScriptedProducer::ScriptedProducer(const RobotModel& model, const RobotProfile& profile, PickPlaceConfig cfg)
    : policy_(model, profile, std::move(cfg)) {}

EpisodeProducer::EpisodeProducer(const Episode& episode, int chunk_size, std::int64_t start_tick)
    : replay_(episode, chunk_size), start_(start_tick) {}

ActionChunk EpisodeProducer::next(const SimObservation&, std::int64_t tick) {
    ActionChunk c = replay_.chunk_at(tick - start_);
    c.start_tick = tick;
    return c;
}

OperatorFrame sanitize_frame(const OperatorFrame& in) {
    OperatorFrame f = in;
    f.validity &= valid::all;
    const auto keep_pose = [&](Pose& p, std::uint8_t bit) {
        if (!f.has(bit)) return;
        if (pose_usable(p)) p = Pose(p.rotation, p.translation);
        else f.validity &= static_cast<std::uint8_t>(~bit);
    };
    keep_pose(f.head, valid::head);
    for (std::size_t s = 0; s < 2; ++s) {
        keep_pose(f.wrists[s], wrist_bit(s));
        if (f.has(hand_bit(s)) && !f.hands[s].plausible()) f.validity &= static_cast<std::uint8_t>(~hand_bit(s));
    }
    return f;
}

JointStateMsg joint_state_message(double now, const RobotModel& model, const Eigen::VectorXd& command,
                                  const JointVector& q_measured) {
    JointStateMsg m;
    m.timestamp = now;
    m.commanded = to_floats(command);
    m.measured = to_floats(to_action(model, q_measured));
    return m;
}

SceneStateMsg scene_state_message(const SimState& state) {
    SceneStateMsg m;
    m.objects.reserve(state.objects.size());
    for (std::size_t i = 0; i < state.objects.size(); ++i) {
        const SceneObject& o = state.objects[i];
        ObjectState s;
        s.id = o.id;
        s.shape = static_cast<std::uint8_t>(o.shape);
        for (int k = 0; k < 3; ++k) s.dims[static_cast<std::size_t>(k)] = static_cast<float>(o.dims[k]);
        s.pose = pose_floats(o.pose);
        s.rgba = o.color;
        s.flags = state.attachments[i] ? 1 : 0;
        m.objects.push_back(s);
    }
    return m;
}

StereoFrameMsg stereo_frame_message(const StereoImage& img) {
    StereoFrameMsg m;
    m.width = static_cast<std::uint16_t>(img.left.width);
    m.height = static_cast<std::uint16_t>(img.left.height);
    m.encoding = 0;
    m.pixels.reserve(img.left.rgb.size() * 2);
    m.pixels.append(reinterpret_cast<const char*>(img.left.rgb.data()), img.left.rgb.size());
    m.pixels.append(reinterpret_cast<const char*>(img.right.rgb.data()), img.right.rgb.size());
    return m;
}

std::filesystem::path robot_model_path(const std::string& robot) {
    if (robot == "h1") return data_dir() / "models" / "h1-like.model";
    if (robot == "gr1") return data_dir() / "models" / "gr1-like.model";
    return robot;
}

Session::Session(const RobotModel& model, SessionConfig cfg, SceneSpec scene)
    : model_(&model),
      profile_(derive_profile(model)),
      cfg_(std::move(cfg)),
      scene_(std::move(scene)),
      dt_(1.0 / cfg_.rate_hz),
      rig_(CameraRig::with_resolution(cfg_.render_width, cfg_.render_height)),
      filters_{PoseFilter(cfg_.filter_lambda), PoseFilter(cfg_.filter_lambda)},
      aggregator_(static_cast<int>(model.action_layout().size()), cfg_.chunk_size, cfg_.aggregation_m),
      detector_(EndGesture::from_profile(profile_)) {
    cfg_.validate();
    rig_.validate();
    head_home_ = KinematicState(model, profile_.home).frame_pose(model.frame_index(profile_.head_frame));
    for (Side s : kSides) {
        arms_[side_index(s)] = ArmChain::of(model, profile_.arm(s));
        const HandProfile& hand = profile_.hand(s);
        hands_.push_back({HandChain(model, hand, spec_for(hand, s)),
                          cfg_.retargeting.apply(RetargetingConfig::for_hand(hand.kind))});
        hands_.back().cfg.validate();
    }
    reset(cfg_.scene_seed);
}

Session::~Session() {
    try {
        shutdown();
    } catch (...) {
    }
}

void Session::submit(const OperatorFrame& frame) {
    std::lock_guard lock(mailbox_mutex_);
    if (mailbox_) ++mailbox_dropped_;
    ++mailbox_received_;
    mailbox_ = frame;
}

void Session::shutdown() {
    if (recorder_) stop_recording();
}

void Session::reset(std::uint64_t seed) {
    sim_ = reset_scene(*model_, profile_, scene_, seed, profile_.home);
    command_q_ = sim_.q_measured;
    command_ = to_action(*model_, command_q_);
    for (PoseFilter& f : filters_) f.reset();
    aggregator_.clear();
    producer_.reset();
    detector_.reset();
    gesture_reported_ = false;
    if (mode_ == Mode::autonomous) set_mode(Mode::autonomous);
}

void Session::set_mode(Mode m) {
    mode_ = m;
    detector_.reset();
    gesture_reported_ = false;
    producer_.reset();
    aggregator_.clear();
    if (m == Mode::teleop) {
        for (PoseFilter& f : filters_) f.reset();
    } else if (m == Mode::autonomous) {
        // The first aggregated command blends the new policy with a constant
        // chunk holding the current command.
        aggregator_.seed(tick_, command_);
        if (factory_) {
            producer_ = factory_(tick_);
        } else {
            PickPlaceConfig pc;
            pc.chunk_size = cfg_.chunk_size;
            pc.rate_hz = cfg_.rate_hz;
            producer_ = std::make_unique<ScriptedProducer>(*model_, profile_, pc);
        }
    }
}

void Session::start_recording(const json& cmd) {
    if (cfg_.record_dir.empty()) throw std::runtime_error("recording is disabled: no record directory configured");
    if (recorder_) throw std::runtime_error("already recording to " + recorder_->dir().string());
    const bool frames = cmd.contains("frames") ? cmd.at("frames").get<bool>() : cfg_.record_frames;
    record_task_ = cmd.contains("task") ? cmd.at("task").get<std::string>() : cfg_.task;
    std::filesystem::path dir;
    do {
        char name[32];
        std::snprintf(name, sizeof name, "episode_%03d", episode_counter_++);
        dir = cfg_.record_dir / name;
    } while (std::filesystem::exists(dir));
    EpisodeMeta meta;
    meta.robot = model_->name();
    meta.action_dim = static_cast<int>(model_->action_layout().size());
    meta.rate_hz = cfg_.rate_hz;
    meta.task = record_task_;
    meta.created = cfg_.created.empty() ? utc_now() : cfg_.created;
    std::uint16_t flags = episode_flags::operator_block;
    if (frames) flags |= episode_flags::frame_index;
    recorder_ = std::make_unique<EpisodeWriter>(dir, meta, flags);
    last_episode_ = dir;
}

json Session::stop_recording() {
    if (!recorder_) throw std::runtime_error("not recording");
    recorder_->finalize();
    json out = {{"episode", recorder_->dir().string()}, {"num_steps", recorder_->steps()}};
    recorder_.reset();
    return out;
}

json Session::control(const json& cmd) {
    if (!cmd.is_object() || !cmd.contains("cmd") || !cmd.at("cmd").is_string())
        return failure("", "CONTROL needs a string field 'cmd'");
    const std::string name = cmd.at("cmd").get<std::string>();
    try {
        if (name == "ping") {
            json r = {{"tick", tick_}};
            if (cmd.contains("t")) r["t"] = cmd.at("t");
            return reply(name, r);
        }
        if (name == "set_mode") {
            const auto m = parse_mode(cmd.value("mode", std::string{}));
            if (!m) return failure(name, "mode must be teleop, autonomous or idle");
            set_mode(*m);
            return reply(name, {{"mode", mode_name(mode_)}});
        }
        if (name == "calibrate") {
            std::optional<OperatorFrame> f;
            {
                std::lock_guard lock(mailbox_mutex_);
                if (mailbox_) f = sanitize_frame(*mailbox_);
            }
            if (!f) f = frame_;
            if (!f) return failure(name, "no operator frame received yet");
            if (!f->has(valid::all)) return failure(name, "calibration needs every tracked component valid");
            calibration_ = calibrate(*f);
            for (PoseFilter& p : filters_) p.reset();
            return reply(name);
        }
        if (name == "reset_scene") {
            const std::uint64_t seed = cmd.contains("seed") ? cmd.at("seed").get<std::uint64_t>() : cfg_.scene_seed;
            reset(seed);
            return reply(name, {{"seed", seed}});
        }
        if (name == "start_recording") {
            start_recording(cmd);
            return reply(name, {{"episode", recorder_->dir().string()}});
        }
        if (name == "stop_recording") return reply(name, stop_recording());
        if (name == "stats") return reply(name, {{"stats", stats_body()}});
        if (name == "debug") {
            debug_ = cmd.value("enabled", true);
            return reply(name, {{"enabled", debug_}});
        }
    } catch (const std::exception& e) {
        return failure(name, e.what());
    }
    return failure(name, "unknown command '" + name + "'");
}

void Session::event(std::vector<Message>& out, json body) {
    body["tick"] = tick_;
    out.push_back(ControlMsg{std::move(body)});
}

JointVector Session::teleop_step(const OperatorFrame& f, JointVector q) {
    const CalibrationState& cal = *calibration_;
    if (f.has(valid::head)) q = map_head(f.head, cal, *model_, profile_.neck, q);

    const ArmTargets targets = map_operator_to_targets(f, cal, head_home_, profile_.reach_box);
    for (Side s : kSides) {
        const auto& t = targets[s];
        if (!t) continue;
        PoseFilter& filter = filters_[side_index(s)];
        try {
            const Pose goal = filter.filter(t->pose());
            const ArmSolution sol = solve_arm(*model_, q, arms_[side_index(s)], goal, cfg_.ik, profile_.reference);
            stats_.ik_attempt(sol.converged, sol.iterations);
            if (!sol.q.allFinite()) throw NumericalFailure("arm solution is not finite");
            q = sol.q;
        } catch (const std::exception& e) {
            stats_.error("ik", e.what());
            filter.reset();
        }
    }

    for (Side s : kSides) {
        const std::size_t i = side_index(s);
        if (!f.has(hand_bit(i) | wrist_bit(i))) continue;
        HandSlot& hand = hands_[i];
        try {
            RetargetingProblem prob;
            prob.chain = &hand.chain;
            prob.targets = compute_human_vectors(f.hands[i], f.wrists[i], hand.chain.spec(), hand.cfg.alpha);
            prob.q_prev = hand.chain.gather(q);
            const RetargetResult r = retarget_step(prob, hand.cfg);
            stats_.retarget(r.iterations);
            if (r.numerical_failure) stats_.error("retarget", "numerical failure, hand held");
            else if (r.q.allFinite()) hand.chain.scatter(r.q, q);
        } catch (const std::exception& e) {
            stats_.error("retarget", e.what());
        }
    }
    return q;
}

Eigen::VectorXd Session::autonomous_step(const SimObservation& obs) {
    aggregator_.push(producer_->next(obs, tick_));
    const Eigen::VectorXd a = aggregator_.aggregate(tick_);
    // Policy output moves at most v_max * dt per tick, which also bounds the
    // jump when switching in from another mode.
    const double step = cfg_.sim.v_max * dt_;
    return command_ + (a - command_).cwiseMax(-step).cwiseMin(step);
}

TickResult Session::tick(double now) {
    const auto started = std::chrono::steady_clock::now();
    TickResult out;
    out.tick = tick_;

    {
        std::optional<OperatorFrame> fresh;
        std::uint64_t received, dropped;
        {
            std::lock_guard lock(mailbox_mutex_);
            fresh.swap(mailbox_);
            received = std::exchange(mailbox_received_, 0);
            dropped = std::exchange(mailbox_dropped_, 0);
        }
        for (std::uint64_t i = 0; i < received; ++i) stats_.frame_received();
        for (std::uint64_t i = 0; i < dropped; ++i) stats_.frame_dropped();
        if (fresh) frame_ = sanitize_frame(*fresh);
    }

    const SimObservation obs = observe(sim_);
    JointVector next = command_q_;
    switch (mode_) {
        case Mode::teleop:
            if (calibration_ && frame_) next = teleop_step(*frame_, command_q_);
            break;
        case Mode::autonomous:
            try {
                next = from_action(*model_, autonomous_step(obs), command_q_);
            } catch (const EndOfEpisode&) {
                set_mode(Mode::idle);
                event(out.outbound, {{"event", "replay_finished"}});
            } catch (const std::exception& e) {
                stats_.error("policy", e.what());
                set_mode(Mode::idle);
                event(out.outbound, {{"event", "policy_stopped"}, {"error", e.what()}});
            }
            break;
        case Mode::idle: break;
    }
    if (!next.allFinite()) {
        stats_.error("command", "non-finite command replaced by the previous one");
        next = command_q_;
    }
    command_q_ = effective_configuration(*model_, next);
    command_ = to_action(*model_, command_q_);

    const bool stream_frame = cfg_.frame_stride > 0 && tick_ % cfg_.frame_stride == 0;
    const bool record_frame = recorder_ && (recorder_->flags() & episode_flags::frame_index);
    std::optional<StereoImage> image;
    if (stream_frame || record_frame) image = render_stereo(sim_, rig_);

    if (recorder_) {
        StepRecord r;
        r.tick = static_cast<std::uint64_t>(tick_);
        r.time = now;
        r.observed = to_floats(to_action(*model_, obs.q_measured));
        r.commanded = to_floats(command_);
        if (recorder_->flags() & episode_flags::operator_block)
            r.operator_block = frame_ ? OperatorBlock::from_frame(*frame_) : OperatorBlock{};
        if (record_frame) {
            const auto index = static_cast<std::uint32_t>(recorder_->steps());
            recorder_->write_frame(index, *image);
            r.frame = index;
        }
        recorder_->record(r);
    }

    step_sim(sim_, command_, dt_, cfg_.sim);
    update_grasp(sim_, cfg_.sim);

    if (mode_ != Mode::idle && detector_.update(sim_.q_measured) && !gesture_reported_) {
        gesture_reported_ = true;
        json body = {{"event", "end_gesture"}};
        if (recorder_) body["episode"] = stop_recording();
        event(out.outbound, std::move(body));
        if (mode_ == Mode::autonomous) set_mode(Mode::idle);
    }

    out.outbound.push_back(joint_state_message(now, *model_, command_, sim_.q_measured));
    out.outbound.push_back(scene_state_message(sim_));
    if (stream_frame) out.outbound.push_back(stereo_frame_message(*image));

    out.mode = mode_;
    out.command = command_;
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
    stats_.record_tick(ms, command_.allFinite());
    ++tick_;
    const auto stats_every = std::max<std::int64_t>(1, std::llround(cfg_.rate_hz));
    if (tick_ % stats_every == 0) out.outbound.push_back(StatsMsg{stats_body()});
    return out;
}

json Session::stats_body() const {
    json j = stats_.to_json();
    j["mode"] = mode_name(mode_);
    j["tick"] = tick_;
    j["calibrated"] = calibrated();
    j["recording"] = recording();
    if (debug_) {
        // Frame poses of the measured configuration, for client-side FK checks.
        const KinematicState ks(*model_, sim_.q_measured);
        json frames = json::object();
        for (std::size_t i = 0; i < model_->frames().size(); ++i)
            frames[model_->frames()[i].name] = pose_json(ks.frame_pose(static_cast<int>(i)));
        j["frame_poses"] = std::move(frames);
    }
    return j;
}

}  // namespace otv
