#include "otv/robot_model.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

namespace otv {

ParseError::ParseError(int line, std::string reason)
    : ModelError("line " + std::to_string(line) + ": " + reason), line_(line), reason_(std::move(reason)) {}

UnknownFrame::UnknownFrame(std::string_view name) : ModelError("unknown frame or joint '" + std::string(name) + "'") {}

namespace {

std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (start <= s.size()) {
        const std::size_t pos = s.find(sep, start);
        if (pos == std::string_view::npos) {
            out.push_back(s.substr(start));
            break;
        }
        out.push_back(s.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

std::vector<std::string_view> tokens(std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
        const std::size_t start = i;
        while (i < s.size() && s[i] != ' ' && s[i] != '\t') ++i;
        if (i > start) out.push_back(s.substr(start, i - start));
    }
    return out;
}

bool valid_identifier(std::string_view s) {
    if (s.empty()) return false;
    for (char c : s) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' ||
                        c == '-' || c == '.';
        if (!ok) return false;
    }
    return true;
}

class LineParser {
public:
    explicit LineParser(int line) : line_(line) {}

    [[noreturn]] void fail(const std::string& reason) const { throw ParseError(line_, reason); }

    double number(std::string_view s) const {
        double v = 0.0;
        const char* first = s.data();
        const char* last = s.data() + s.size();
        if (!s.empty() && *first == '+') ++first;
        const auto [ptr, ec] = std::from_chars(first, last, v);
        if (ec != std::errc() || ptr != last || first == last) fail("bad number '" + std::string(s) + "'");
        if (!std::isfinite(v)) fail("non-finite number '" + std::string(s) + "'");
        return v;
    }

    std::vector<double> numbers(std::string_view s, std::size_t count) const {
        const auto parts = split(s, ',');
        if (parts.size() != count) fail("expected " + std::to_string(count) + " comma-separated values");
        std::vector<double> out;
        out.reserve(count);
        for (auto p : parts) out.push_back(number(p));
        return out;
    }

    Vec3 vec3(std::string_view s) const {
        const auto v = numbers(s, 3);
        return {v[0], v[1], v[2]};
    }

    std::string identifier(std::string_view s, const char* what) const {
        if (!valid_identifier(s)) fail(std::string("bad ") + what + " '" + std::string(s) + "'");
        return std::string(s);
    }

    // key=value options; bare words are returned as flags.
    std::map<std::string, std::string_view, std::less<>> options(const std::vector<std::string_view>& toks,
                                                                 std::size_t first,
                                                                 std::set<std::string, std::less<>>& flags) const {
        std::map<std::string, std::string_view, std::less<>> out;
        for (std::size_t i = first; i < toks.size(); ++i) {
            const auto eq = toks[i].find('=');
            if (eq == std::string_view::npos) {
                if (!flags.insert(std::string(toks[i])).second) fail("duplicate flag '" + std::string(toks[i]) + "'");
                continue;
            }
            std::string key(toks[i].substr(0, eq));
            if (key.empty()) fail("empty option key");
            if (!out.emplace(key, toks[i].substr(eq + 1)).second) fail("duplicate option '" + key + "'");
        }
        return out;
    }

    int line() const { return line_; }

private:
    int line_;
};

template <class Map>
std::string_view require(const LineParser& lp, const Map& opts, const char* key) {
    const auto it = opts.find(key);
    if (it == opts.end()) lp.fail(std::string("missing ") + key + "=");
    return it->second;
}

template <class Map>
void allow_only(const LineParser& lp, const Map& opts, std::initializer_list<const char*> keys) {
    for (const auto& [k, v] : opts) {
        bool known = false;
        for (const char* key : keys) known = known || k == key;
        if (!known) lp.fail("unknown option '" + k + "'");
    }
}

Pose origin_from(const LineParser& lp, const std::map<std::string, std::string_view, std::less<>>& opts) {
    Vec3 xyz = Vec3::Zero();
    Vec3 rpy = Vec3::Zero();
    if (auto it = opts.find("xyz"); it != opts.end()) xyz = lp.vec3(it->second);
    if (auto it = opts.find("rpy"); it != opts.end()) rpy = lp.vec3(it->second);
    return {quat_from_rpy(rpy.x(), rpy.y(), rpy.z()), xyz};
}

struct PendingCoupling {
    int line;
    std::string driven;
    std::string driver;
    double ratio;
};

struct PendingLayout {
    int line;
    std::vector<std::string> names;
};

}  // namespace

std::vector<std::string> RobotModel::action_names() const {
    std::vector<std::string> out;
    out.reserve(action_layout_.size());
    for (int d : action_layout_) out.push_back(dof_joint(d).name);
    return out;
}

std::optional<int> RobotModel::find_joint(std::string_view name) const {
    for (std::size_t i = 0; i < joints_.size(); ++i)
        if (joints_[i].name == name) return static_cast<int>(i);
    return std::nullopt;
}

std::optional<int> RobotModel::find_frame(std::string_view name) const {
    for (std::size_t i = 0; i < frames_.size(); ++i)
        if (frames_[i].name == name) return static_cast<int>(i);
    return std::nullopt;
}

int RobotModel::dof_index(std::string_view joint_name) const {
    const auto j = find_joint(joint_name);
    if (!j || joints_[static_cast<std::size_t>(*j)].dof < 0) throw UnknownFrame(joint_name);
    return joints_[static_cast<std::size_t>(*j)].dof;
}

int RobotModel::frame_index(std::string_view frame_name) const {
    const auto f = find_frame(frame_name);
    if (!f) throw UnknownFrame(frame_name);
    return *f;
}

bool RobotModel::is_coupled(int dof) const {
    for (const auto& c : couplings_)
        if (c.driven_dof == dof) return true;
    return false;
}

RobotModel parse_robot_model(std::string_view text) {
    RobotModel model;
    model.source_ = std::string(text);

    std::vector<PendingCoupling> couplings;
    std::optional<PendingLayout> layout;
    bool have_robot = false;
    int line_no = 0;

    for (std::string_view raw : split(text, '\n')) {
        ++line_no;
        const LineParser lp(line_no);
        std::string_view line = raw;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        for (char c : line)
            if (static_cast<unsigned char>(c) < 0x20 && c != '\t') lp.fail("control character in line");
        const auto toks = tokens(line);
        if (toks.empty()) continue;

        const std::string_view kind = toks[0];
        if (kind == "robot") {
            if (have_robot) lp.fail("duplicate robot line");
            if (toks.size() != 2) lp.fail("expected 'robot <name>'");
            model.name_ = lp.identifier(toks[1], "robot name");
            have_robot = true;
            continue;
        }
        if (!have_robot) lp.fail("'robot <name>' must come first");

        if (kind == "joint") {
            if (toks.size() < 3) lp.fail("expected 'joint <name> <type> ...'");
            Joint j;
            j.name = lp.identifier(toks[1], "joint name");
            if (toks[2] == "revolute") j.type = JointType::revolute;
            else if (toks[2] == "prismatic") j.type = JointType::prismatic;
            else if (toks[2] == "fixed") j.type = JointType::fixed;
            else lp.fail("unknown joint type '" + std::string(toks[2]) + "'");
            std::set<std::string, std::less<>> flags;
            const auto opts = lp.options(toks, 3, flags);
            allow_only(lp, opts, {"parent", "child", "xyz", "rpy", "axis", "limits"});
            for (const auto& f : flags)
                if (f != "actuated") lp.fail("unknown flag '" + f + "'");
            j.actuated = flags.count("actuated") > 0;
            j.parent_link = lp.identifier(require(lp, opts, "parent"), "parent link");
            j.child_link = lp.identifier(require(lp, opts, "child"), "child link");
            if (j.child_link == "base") lp.fail("'base' cannot be a child link");
            if (j.parent_link == j.child_link) lp.fail("joint links to itself");
            j.origin = origin_from(lp, opts);
            if (j.type != JointType::fixed) {
                const Vec3 axis = lp.vec3(require(lp, opts, "axis"));
                if (axis.norm() < 1e-9) lp.fail("zero joint axis");
                j.axis = axis.normalized();
                const auto lim = lp.numbers(require(lp, opts, "limits"), 2);
                if (lim[0] > lim[1]) lp.fail("limits lo > hi");
                j.lower = lim[0];
                j.upper = lim[1];
            } else {
                if (j.actuated) lp.fail("fixed joint cannot be actuated");
                if (auto it = opts.find("axis"); it != opts.end()) lp.vec3(it->second);
            }
            if (model.find_joint(j.name)) lp.fail("duplicate joint '" + j.name + "'");
            for (const auto& other : model.joints_)
                if (other.child_link == j.child_link) lp.fail("link '" + j.child_link + "' has two parents");
            model.joints_.push_back(std::move(j));
        } else if (kind == "frame") {
            if (toks.size() < 2) lp.fail("expected 'frame <name> link=<link> ...'");
            Frame f;
            f.name = lp.identifier(toks[1], "frame name");
            std::set<std::string, std::less<>> flags;
            const auto opts = lp.options(toks, 2, flags);
            if (!flags.empty()) lp.fail("unexpected flag on frame");
            allow_only(lp, opts, {"link", "xyz", "rpy"});
            f.link = lp.identifier(require(lp, opts, "link"), "link");
            f.offset = origin_from(lp, opts);
            if (model.find_frame(f.name)) lp.fail("duplicate frame '" + f.name + "'");
            model.frames_.push_back(std::move(f));
        } else if (kind == "couple") {
            std::set<std::string, std::less<>> flags;
            const auto opts = lp.options(toks, 1, flags);
            if (!flags.empty()) lp.fail("unexpected flag on couple");
            allow_only(lp, opts, {"driven", "driver", "ratio"});
            PendingCoupling c{line_no, lp.identifier(require(lp, opts, "driven"), "joint"),
                              lp.identifier(require(lp, opts, "driver"), "joint"), 1.0};
            if (auto it = opts.find("ratio"); it != opts.end()) c.ratio = lp.number(it->second);
            couplings.push_back(std::move(c));
        } else if (kind == "action_layout") {
            if (layout) lp.fail("duplicate action_layout");
            if (toks.size() != 2) lp.fail("expected 'action_layout <joint,...>'");
            PendingLayout pl{line_no, {}};
            for (auto n : split(toks[1], ',')) pl.names.push_back(lp.identifier(n, "joint"));
            layout = std::move(pl);
        } else {
            lp.fail("unknown directive '" + std::string(kind) + "'");
        }
    }

    if (!have_robot) throw ParseError(line_no, "empty document: no 'robot' line");

    // Tree structure: resolve parent joints, then reject cycles.
    std::unordered_map<std::string, int> child_of;
    for (std::size_t i = 0; i < model.joints_.size(); ++i) child_of[model.joints_[i].child_link] = static_cast<int>(i);
    for (auto& j : model.joints_) {
        if (j.parent_link == "base") {
            j.parent_joint = -1;
            continue;
        }
        const auto it = child_of.find(j.parent_link);
        if (it == child_of.end())
            throw UnknownFrame(j.parent_link);
        j.parent_joint = it->second;
    }
    const std::size_t nj = model.joints_.size();
    std::vector<int> depth(nj, -1);
    for (std::size_t i = 0; i < nj; ++i) {
        std::vector<int> path;
        int cur = static_cast<int>(i);
        while (cur >= 0 && depth[static_cast<std::size_t>(cur)] < 0) {
            if (path.size() > nj) throw CycleError("joint graph contains a cycle through '" + model.joints_[i].name + "'");
            path.push_back(cur);
            cur = model.joints_[static_cast<std::size_t>(cur)].parent_joint;
        }
        int d = cur < 0 ? 0 : depth[static_cast<std::size_t>(cur)] + 1;
        for (auto it = path.rbegin(); it != path.rend(); ++it) depth[static_cast<std::size_t>(*it)] = d++;
    }
    model.topo_order_.resize(nj);
    for (std::size_t i = 0; i < nj; ++i) model.topo_order_[i] = static_cast<int>(i);
    std::stable_sort(model.topo_order_.begin(), model.topo_order_.end(),
                     [&](int a, int b) { return depth[static_cast<std::size_t>(a)] < depth[static_cast<std::size_t>(b)]; });

    // Dofs in declaration order.
    for (std::size_t i = 0; i < nj; ++i) {
        if (model.joints_[i].type == JointType::fixed) continue;
        model.joints_[i].dof = static_cast<int>(model.dof_joint_.size());
        model.dof_joint_.push_back(static_cast<int>(i));
    }
    model.lower_.resize(model.dof());
    model.upper_.resize(model.dof());
    for (int d = 0; d < model.dof(); ++d) {
        model.lower_[d] = model.dof_joint(d).lower;
        model.upper_[d] = model.dof_joint(d).upper;
    }

    for (auto& f : model.frames_) {
        if (f.link == "base") {
            f.parent_joint = -1;
        } else {
            const auto it = child_of.find(f.link);
            if (it == child_of.end()) throw UnknownFrame(f.link);
            f.parent_joint = it->second;
        }
        std::vector<int> chain;
        for (int cur = f.parent_joint; cur >= 0; cur = model.joints_[static_cast<std::size_t>(cur)].parent_joint)
            chain.push_back(cur);
        std::reverse(chain.begin(), chain.end());
        model.frame_chains_.push_back(std::move(chain));
    }

    std::set<std::string> driven_seen;
    for (const auto& pc : couplings) {
        const auto driven = model.find_joint(pc.driven);
        const auto driver = model.find_joint(pc.driver);
        if (!driven || !driver)
            throw BadCoupling("line " + std::to_string(pc.line) + ": coupling names unknown joint");
        const Joint& jd = model.joints_[static_cast<std::size_t>(*driven)];
        const Joint& jr = model.joints_[static_cast<std::size_t>(*driver)];
        if (jd.type == JointType::fixed || jr.type == JointType::fixed)
            throw BadCoupling("line " + std::to_string(pc.line) + ": coupling on fixed joint");
        if (!jr.actuated) throw BadCoupling("line " + std::to_string(pc.line) + ": driver '" + jr.name + "' is not actuated");
        if (jd.actuated) throw BadCoupling("line " + std::to_string(pc.line) + ": driven '" + jd.name + "' is actuated");
        if (!driven_seen.insert(jd.name).second)
            throw BadCoupling("line " + std::to_string(pc.line) + ": joint '" + jd.name + "' driven twice");
        model.couplings_.push_back({pc.driven, pc.driver, pc.ratio, jd.dof, jr.dof});
    }

    if (layout) {
        std::set<int> used;
        for (const auto& n : layout->names) {
            const auto j = model.find_joint(n);
            if (!j) throw ParseError(layout->line, "action_layout names unknown joint '" + n + "'");
            const Joint& joint = model.joints_[static_cast<std::size_t>(*j)];
            if (!joint.actuated) throw ParseError(layout->line, "action_layout joint '" + n + "' is not actuated");
            if (!used.insert(joint.dof).second) throw ParseError(layout->line, "action_layout repeats '" + n + "'");
            model.action_layout_.push_back(joint.dof);
        }
    } else {
        for (int d = 0; d < model.dof(); ++d)
            if (model.dof_joint(d).actuated) model.action_layout_.push_back(d);
    }
    return model;
}

RobotModel load_robot_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ModelError("cannot open model file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_robot_model(ss.str());
}

}  // namespace otv
