#include "otv/sim_world.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace otv {

namespace {

using nlohmann::json;

Vec3 read_vec3(const json& j, const char* what) {
    if (!j.is_array() || j.size() != 3) throw BadSpec(std::string(what) + " must be a 3-element array");
    Vec3 v;
    for (int i = 0; i < 3; ++i) {
        if (!j[static_cast<std::size_t>(i)].is_number()) throw BadSpec(std::string(what) + " entries must be numbers");
        v[i] = j[static_cast<std::size_t>(i)].get<double>();
    }
    if (!v.allFinite()) throw BadSpec(std::string(what) + " is not finite");
    return v;
}

Quat read_rotation(const json& pose) {
    if (pose.contains("quat")) {
        const json& q = pose.at("quat");
        if (!q.is_array() || q.size() != 4) throw BadSpec("pose.quat must be [w,x,y,z]");
        Quat r(q[0].get<double>(), q[1].get<double>(), q[2].get<double>(), q[3].get<double>());
        if (!std::isfinite(r.norm()) || std::abs(r.norm() - 1.0) > 1e-6) throw BadSpec("pose.quat is not unit");
        return canonical(r);
    }
    if (pose.contains("rpy")) {
        const Vec3 rpy = read_vec3(pose.at("rpy"), "pose.rpy");
        return quat_from_rpy(rpy.x(), rpy.y(), rpy.z());
    }
    return Quat::Identity();
}

SceneObject read_object(const json& j, std::size_t index, bool& on_grid) {
    if (!j.is_object()) throw BadSpec("scene object must be a JSON object");
    SceneObject o;
    o.id = static_cast<std::uint32_t>(index + 1);
    o.name = j.value("name", "object" + std::to_string(index));
    o.role = j.value("role", "");
    o.target = j.value("bin", "");

    const std::string shape = j.at("shape").get<std::string>();
    if (shape == "box") o.shape = Shape::box;
    else if (shape == "cylinder") o.shape = Shape::cylinder;
    else throw BadSpec("unknown shape '" + shape + "'");

    o.dims = read_vec3(j.at("dims"), "dims");
    if ((o.dims.array() <= 0.0).any()) throw BadSpec("dims must be positive for '" + o.name + "'");

    on_grid = j.value("placement", "fixed") == "grid";
    if (j.contains("pose")) {
        const json& p = j.at("pose");
        if (!p.is_object()) throw BadSpec("pose must be an object");
        o.pose.rotation = read_rotation(p);
        if (p.contains("xyz")) o.pose.translation = read_vec3(p.at("xyz"), "pose.xyz");
        else if (!on_grid) throw BadSpec("pose.xyz missing for '" + o.name + "'");
    } else if (!on_grid) {
        throw BadSpec("pose missing for '" + o.name + "'");
    }

    if (j.contains("color")) {
        const json& c = j.at("color");
        if (!c.is_array() || (c.size() != 3 && c.size() != 4)) throw BadSpec("color must be [r,g,b] or [r,g,b,a]");
        for (std::size_t i = 0; i < c.size(); ++i) {
            const int v = c[i].get<int>();
            if (v < 0 || v > 255) throw BadSpec("color channel out of range");
            o.color[i] = static_cast<std::uint8_t>(v);
        }
    }
    o.graspable = j.value("graspable", false);
    return o;
}

double footprint_radius(const SceneObject& o) {
    return o.shape == Shape::cylinder ? 0.5 * std::max(o.dims.x(), o.dims.y()) : 0.5 * std::hypot(o.dims.x(), o.dims.y());
}

}  // namespace

double SceneObject::half_height() const {
    const Mat3 r = pose.rotation_matrix();
    if (shape == Shape::box)
        return 0.5 * (std::abs(r(2, 0)) * dims.x() + std::abs(r(2, 1)) * dims.y() + std::abs(r(2, 2)) * dims.z());
    const double rx = 0.5 * dims.x();
    const double ry = 0.5 * dims.y();
    return 0.5 * std::abs(r(2, 2)) * dims.z() + std::hypot(r(2, 0) * rx, r(2, 1) * ry);
}

bool SceneObject::covers(double x, double y) const {
    const Vec3 local = pose.rotation.conjugate() * (Vec3(x, y, pose.translation.z()) - pose.translation);
    if (shape == Shape::box) return std::abs(local.x()) <= 0.5 * dims.x() && std::abs(local.y()) <= 0.5 * dims.y();
    const double u = local.x() / (0.5 * dims.x());
    const double v = local.y() / (0.5 * dims.y());
    return u * u + v * v <= 1.0;
}

Vec3 GridSpec::cell(int row, int col) const {
    return origin + Vec3((row - 0.5 * (rows - 1)) * pitch, (col - 0.5 * (cols - 1)) * pitch, 0.0);
}

SceneSpec parse_scene(std::string_view text) {
    SceneSpec spec;
    try {
        const json doc = json::parse(text);
        if (!doc.is_object()) throw BadSpec("scene document must be a JSON object");
        spec.name = doc.value("name", "");
        if (doc.contains("grid")) {
            const json& g = doc.at("grid");
            GridSpec grid;
            grid.rows = g.at("rows").get<int>();
            grid.cols = g.at("cols").get<int>();
            grid.pitch = g.at("pitch_m").get<double>();
            grid.origin = read_vec3(g.at("origin"), "grid.origin");
            if (grid.rows < 1 || grid.cols < 1 || !(grid.pitch > 0.0)) throw BadSpec("grid needs rows, cols >= 1 and pitch > 0");
            spec.grid = grid;
        }
        const json& objects = doc.value("objects", json::array());
        if (!objects.is_array()) throw BadSpec("objects must be an array");
        for (std::size_t i = 0; i < objects.size(); ++i) {
            bool on_grid = false;
            spec.objects.push_back(read_object(objects[i], i, on_grid));
            spec.on_grid.push_back(on_grid);
            if (on_grid && !spec.grid) throw BadSpec("object '" + spec.objects.back().name + "' wants the grid but none is given");
        }
    } catch (const json::exception& e) {
        throw BadSpec(std::string("scene JSON: ") + e.what());
    }

    std::set<std::string> names;
    for (const SceneObject& o : spec.objects)
        if (!names.insert(o.name).second) throw BadSpec("duplicate object name '" + o.name + "'");
    for (const SceneObject& o : spec.objects)
        if (!o.target.empty() && !names.count(o.target)) throw BadSpec("unknown bin '" + o.target + "'");
    return spec;
}

SceneSpec load_scene(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw BadSpec("cannot open scene " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_scene(ss.str());
}

SimState reset_scene(const RobotModel& model, const RobotProfile& profile, const SceneSpec& spec, std::uint64_t seed,
                     const std::optional<JointVector>& q_initial) {
    SimState s;
    s.model = &model;
    s.profile = profile;
    s.seed = seed;
    const JointVector q0 = q_initial.value_or(profile.home);
    if (q0.size() != model.dof()) throw DimensionMismatch("initial posture length does not match model dof");
    s.q_measured = effective_configuration(model, q0);
    s.q_target = s.q_measured;
    s.objects = spec.objects;
    s.attachments.assign(s.objects.size(), std::nullopt);

    if (!spec.grid) return s;
    const GridSpec& grid = *spec.grid;

    // Fisher-Yates over the cells with an explicit modulo draw, so the
    // placement is identical across standard library implementations.
    std::mt19937_64 rng(seed);
    std::vector<int> cells(static_cast<std::size_t>(grid.rows * grid.cols));
    std::iota(cells.begin(), cells.end(), 0);
    for (std::size_t i = cells.size(); i > 1; --i) std::swap(cells[i - 1], cells[rng() % i]);

    std::vector<std::size_t> placed;
    for (std::size_t i = 0; i < s.objects.size(); ++i) {
        if (!spec.on_grid[i]) continue;
        SceneObject& obj = s.objects[i];
        bool done = false;
        for (auto it = cells.begin(); it != cells.end(); ++it) {
            const Vec3 c = grid.cell(*it / grid.cols, *it % grid.cols);
            bool clear = true;
            for (std::size_t p : placed) {
                const SceneObject& other = s.objects[p];
                const double d = (c.head<2>() - other.pose.translation.head<2>()).norm();
                if (d < footprint_radius(obj) + footprint_radius(other)) clear = false;
            }
            if (!clear) continue;
            obj.pose.translation = c;
            cells.erase(it);
            placed.push_back(i);
            done = true;
            break;
        }
        if (!done) throw BadSpec("grid has no free cell for '" + obj.name + "'");
    }
    return s;
}

}  // namespace otv
