#include "otv/config.hpp"

#include <cstdlib>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace otv {
namespace {

using nlohmann::json;

// Reads keys out of one JSON object and complains about anything left over.
class Section {
public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(label() + " must be an object");
    }
    void done() const {
        for (const auto& [k, _] : j_.items())
            if (!seen_.count(k)) throw ConfigError("unknown config key '" + prefix() + k + "'");
    }

    template <class T>
    void read(const char* key, T& out) {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end()) return;
        try {
            if constexpr (std::is_same_v<T, bool>) {
                if (!it->is_boolean()) throw ConfigError("");
            } else if constexpr (std::is_integral_v<T>) {
                if (!it->is_number_integer()) throw ConfigError("");
                const auto v = it->template get<std::int64_t>();
                if (v < static_cast<std::int64_t>(std::numeric_limits<T>::min()) ||
                    static_cast<std::uint64_t>(std::max<std::int64_t>(v, 0)) > std::numeric_limits<T>::max())
                    throw ConfigError("");
            } else if constexpr (std::is_floating_point_v<T>) {
                if (!it->is_number()) throw ConfigError("");
            } else {
                if (!it->is_string()) throw ConfigError("");
            }
            out = it->template get<T>();
        } catch (const ConfigError&) {
            throw ConfigError("config key '" + prefix() + key + "' has the wrong type or range");
        }
    }

    template <class T>
    void read(const char* key, std::optional<T>& out) {
        T v{};
        const bool present = j_.contains(key);
        read(key, v);
        if (present) out = v;
    }

    void read(const char* key, std::filesystem::path& out) {
        std::string s;
        const bool present = j_.contains(key);
        read(key, s);
        if (present) out = s;
    }

    /// nullptr when absent.
    const json* sub(const char* key) {
        seen_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

private:
    std::string prefix() const { return path_.empty() ? "" : path_ + "."; }
    std::string label() const { return path_.empty() ? "config" : "config key '" + path_ + "'"; }

    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

}  // namespace

std::filesystem::path data_dir() {
    if (const char* env = std::getenv("OTV_DATA_DIR"); env && *env) return env;
#ifdef OTV_DATA_DIR
    return OTV_DATA_DIR;
#else
    return "data";
#endif
}

std::filesystem::path resolve_path(const std::filesystem::path& p, const std::filesystem::path& base_dir) {
    if (p.empty() || p.is_absolute()) return p;
    if (!base_dir.empty() && std::filesystem::exists(base_dir / p)) return base_dir / p;
    return data_dir() / p;
}

RetargetingConfig RetargetOverrides::apply(RetargetingConfig c) const {
    if (alpha) c.alpha = *alpha;
    if (beta) c.beta = *beta;
    if (step_tolerance) c.step_tolerance = *step_tolerance;
    if (damping) c.damping = *damping;
    if (step_clamp) c.step_clamp = *step_clamp;
    if (max_iterations) c.max_iterations = *max_iterations;
    return c;
}

void SessionConfig::validate() const {
    try {
        ik.validate();
        retargeting.apply({}).validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    if (!(rate_hz > 0.0)) throw ConfigError("rate_hz must be positive");
    if (chunk_size < 1) throw ConfigError("aggregator.chunk_size must be at least 1");
    if (!(aggregation_m >= 0.0)) throw ConfigError("aggregator.m must be non-negative");
    if (!(filter_lambda > 0.0 && filter_lambda <= 1.0)) throw ConfigError("filter.lambda must lie in (0, 1]");
    if (render_width < 16 || render_height < 16 || render_width > 4096 || render_height > 4096)
        throw ConfigError("render size must lie within 16..4096");
    if (frame_stride < 0) throw ConfigError("render.stride must be non-negative");
    if (!(latency.delay_ms >= 0.0) || !(latency.jitter_ms >= 0.0))
        throw ConfigError("latency delay and jitter must be non-negative");
    if (!(sim.v_max > 0.0)) throw ConfigError("sim.v_max must be positive");
}

SessionConfig parse_config(const json& j, const std::filesystem::path& base_dir) {
    SessionConfig c;
    {
        Section root(j, "");
        root.read("robot_model", c.robot_model);
        root.read("scene", c.scene);
        root.read("host", c.host);
        root.read("port", c.port);
        root.read("rate_hz", c.rate_hz);
        if (const json* s = root.sub("ik")) {
            Section ik(*s, "ik");
            ik.read("damping", c.ik.damping);
            ik.read("step_clamp", c.ik.step_clamp);
            ik.read("gain", c.ik.gain);
            ik.read("max_iterations", c.ik.max_iterations);
            ik.read("position_tolerance", c.ik.position_tolerance);
            ik.read("rotation_tolerance", c.ik.rotation_tolerance);
            ik.read("manipulability_threshold", c.ik.manipulability_threshold);
            ik.read("nullspace_gain", c.ik.nullspace_gain);
            ik.done();
        }
        if (const json* s = root.sub("retargeting")) {
            Section rt(*s, "retargeting");
            rt.read("alpha", c.retargeting.alpha);
            rt.read("beta", c.retargeting.beta);
            rt.read("max_iterations", c.retargeting.max_iterations);
            rt.read("step_tolerance", c.retargeting.step_tolerance);
            rt.read("damping", c.retargeting.damping);
            rt.read("step_clamp", c.retargeting.step_clamp);
            rt.done();
        }
        if (const json* s = root.sub("aggregator")) {
            Section ag(*s, "aggregator");
            ag.read("chunk_size", c.chunk_size);
            ag.read("m", c.aggregation_m);
            ag.done();
        }
        if (const json* s = root.sub("filter")) {
            Section f(*s, "filter");
            f.read("lambda", c.filter_lambda);
            f.done();
        }
        if (const json* s = root.sub("render")) {
            Section r(*s, "render");
            r.read("width", c.render_width);
            r.read("height", c.render_height);
            r.read("stride", c.frame_stride);
            r.done();
        }
        if (const json* s = root.sub("latency")) {
            Section l(*s, "latency");
            l.read("delay_ms", c.latency.delay_ms);
            l.read("jitter_ms", c.latency.jitter_ms);
            l.read("seed", c.latency.seed);
            l.done();
        }
        if (const json* s = root.sub("sim")) {
            Section sm(*s, "sim");
            sm.read("v_max", c.sim.v_max);
            sm.read("c_grasp", c.sim.c_grasp);
            sm.read("c_release", c.sim.c_release);
            sm.read("r_grasp", c.sim.r_grasp);
            sm.read("seed", c.scene_seed);
            sm.done();
        }
        if (const json* s = root.sub("record")) {
            Section r(*s, "record");
            r.read("dir", c.record_dir);
            r.read("frames", c.record_frames);
            r.read("task", c.task);
            r.read("created", c.created);
            r.done();
        }
        root.done();
    }
    c.robot_model = resolve_path(c.robot_model, base_dir);
    c.scene = resolve_path(c.scene, base_dir);
    c.validate();
    return c;
}

SessionConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    const json j = json::parse(ss.str(), nullptr, false);
    if (j.is_discarded()) throw ConfigError(path.string() + " is not valid JSON");
    return parse_config(j, path.parent_path());
}

}  // namespace otv
