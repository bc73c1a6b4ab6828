#include "otv/render.hpp"

#include <algorithm>
#include <cmath>

namespace otv {

namespace {

constexpr int kCylinderFacets = 24;
constexpr double kPi = 3.14159265358979323846;
constexpr std::array<std::uint8_t, 4> kRobotColor{150, 152, 160, 255};

struct Triangle {
    std::array<Vec3, 3> v;
    Vec3 normal;
    std::array<std::uint8_t, 4> color;
};

void add_quad(std::vector<Triangle>& out, const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d, const Vec3& n,
              const std::array<std::uint8_t, 4>& color) {
    out.push_back({{a, b, c}, n, color});
    out.push_back({{a, c, d}, n, color});
}

void add_box(std::vector<Triangle>& out, const Pose& pose, const Vec3& dims, const std::array<std::uint8_t, 4>& color) {
    const Vec3 h = 0.5 * dims;
    const Mat3 r = pose.rotation_matrix();
    const auto corner = [&](double sx, double sy, double sz) {
        return pose.transform_point(Vec3(sx * h.x(), sy * h.y(), sz * h.z()));
    };
    for (int axis = 0; axis < 3; ++axis) {
        for (double s : {-1.0, 1.0}) {
            // Two in-face directions for this axis.
            const int u = (axis + 1) % 3;
            const int w = (axis + 2) % 3;
            std::array<Vec3, 4> pts;
            const std::array<std::pair<double, double>, 4> uv{{{-1, -1}, {1, -1}, {1, 1}, {-1, 1}}};
            for (std::size_t k = 0; k < 4; ++k) {
                double c[3];
                c[axis] = s;
                c[u] = uv[k].first;
                c[w] = uv[k].second;
                pts[k] = corner(c[0], c[1], c[2]);
            }
            add_quad(out, pts[0], pts[1], pts[2], pts[3], s * r.col(axis), color);
        }
    }
}

void add_cylinder(std::vector<Triangle>& out, const Pose& pose, const Vec3& dims,
                  const std::array<std::uint8_t, 4>& color) {
    const double rx = 0.5 * dims.x();
    const double ry = 0.5 * dims.y();
    const double hz = 0.5 * dims.z();
    const Mat3 r = pose.rotation_matrix();
    const Vec3 top = pose.transform_point(Vec3(0, 0, hz));
    const Vec3 bottom = pose.transform_point(Vec3(0, 0, -hz));
    for (int i = 0; i < kCylinderFacets; ++i) {
        const double a0 = 2.0 * kPi * i / kCylinderFacets;
        const double a1 = 2.0 * kPi * (i + 1) / kCylinderFacets;
        const double am = 0.5 * (a0 + a1);
        const Vec3 p0(rx * std::cos(a0), ry * std::sin(a0), 0.0);
        const Vec3 p1(rx * std::cos(a1), ry * std::sin(a1), 0.0);
        const Vec3 up(0, 0, hz);
        const Vec3 b0 = pose.transform_point(p0 - up);
        const Vec3 b1 = pose.transform_point(p1 - up);
        const Vec3 t0 = pose.transform_point(p0 + up);
        const Vec3 t1 = pose.transform_point(p1 + up);
        const Vec3 side = (r * Vec3(std::cos(am) / rx, std::sin(am) / ry, 0.0)).normalized();
        add_quad(out, b0, b1, t1, t0, side, color);
        out.push_back({{top, t0, t1}, r.col(2), color});
        out.push_back({{bottom, b1, b0}, -r.col(2), color});
    }
}

/// Box of square section `thickness` spanning a -> b.
void add_segment(std::vector<Triangle>& out, const Vec3& a, const Vec3& b, double thickness) {
    const Vec3 d = b - a;
    const double len = d.norm();
    if (len < 1e-4) return;
    const Vec3 x = d / len;
    Vec3 helper = Vec3::UnitZ();
    if (std::abs(x.z()) > 0.9) helper = Vec3::UnitX();
    const Vec3 y = helper.cross(x).normalized();
    Mat3 r;
    r.col(0) = x;
    r.col(1) = y;
    r.col(2) = x.cross(y);
    add_box(out, Pose(Quat(r), 0.5 * (a + b)), Vec3(len, thickness, thickness), kRobotColor);
}

void add_robot(std::vector<Triangle>& out, const SimState& s, const KinematicState& ks, const std::vector<int>& skip) {
    const RobotModel& m = *s.model;
    const auto link_of = [&](int parent_joint) {
        return parent_joint < 0 ? Pose::identity() : ks.link_pose_of_joint(parent_joint);
    };
    const auto skipped = [&](int parent_joint) {
        return parent_joint >= 0 && std::find(skip.begin(), skip.end(), parent_joint) != skip.end();
    };
    const auto thickness = [](double len) { return std::clamp(0.3 * len, 0.012, 0.05); };
    for (std::size_t ji = 0; ji < m.joints().size(); ++ji) {
        const Joint& j = m.joints()[ji];
        if (skipped(j.parent_joint)) continue;
        const Pose parent = link_of(j.parent_joint);
        const Vec3 end = compose(parent, j.origin).translation;
        add_segment(out, parent.translation, end, thickness((end - parent.translation).norm()));
    }
    for (std::size_t fi = 0; fi < m.frames().size(); ++fi) {
        const Frame& f = m.frames()[fi];
        if (skipped(f.parent_joint) || f.parent_joint < 0) continue;
        const Pose parent = link_of(f.parent_joint);
        const Vec3 end = ks.frame_pose(static_cast<int>(fi)).translation;
        add_segment(out, parent.translation, end, thickness((end - parent.translation).norm()));
    }
}

struct Raster {
    Image image;
    std::vector<double> inv_depth;
};

struct ScreenVertex {
    double u, v, w;   // pixel coordinates and 1/depth
};

void draw(Raster& r, const CameraRig& rig, const Pose& world_to_eye, const Triangle& t, const Vec3& light) {
    std::array<Vec3, 3> eye;
    for (std::size_t i = 0; i < 3; ++i) eye[i] = world_to_eye.transform_point(t.v[i]);

    // Sutherland-Hodgman against x >= near.
    std::vector<Vec3> poly;
    poly.reserve(4);
    for (std::size_t i = 0; i < 3; ++i) {
        const Vec3& a = eye[i];
        const Vec3& b = eye[(i + 1) % 3];
        const bool ain = a.x() >= rig.near_plane;
        const bool bin = b.x() >= rig.near_plane;
        if (ain) poly.push_back(a);
        if (ain != bin) poly.push_back(a + (b - a) * ((rig.near_plane - a.x()) / (b.x() - a.x())));
    }
    if (poly.size() < 3) return;

    const double shade = 0.35 + 0.65 * std::max(0.0, t.normal.dot(light));
    std::array<std::uint8_t, 3> rgb;
    for (std::size_t c = 0; c < 3; ++c) rgb[c] = static_cast<std::uint8_t>(std::lround(t.color[c] * shade));

    std::vector<ScreenVertex> sv;
    sv.reserve(poly.size());
    for (const Vec3& p : poly) sv.push_back({rig.cx - rig.focal * p.y() / p.x(), rig.cy - rig.focal * p.z() / p.x(), 1.0 / p.x()});

    const auto edge = [](const ScreenVertex& a, const ScreenVertex& b, double pu, double pv) {
        return (pu - a.u) * (b.v - a.v) - (pv - a.v) * (b.u - a.u);
    };
    const int width = r.image.width;
    const int height = r.image.height;
    for (std::size_t k = 1; k + 1 < sv.size(); ++k) {
        const ScreenVertex& a = sv[0];
        const ScreenVertex& b = sv[k];
        const ScreenVertex& c = sv[k + 1];
        const double area = edge(a, b, c.u, c.v);
        if (std::abs(area) < 1e-12) continue;
        const int x0 = std::max(0, static_cast<int>(std::floor(std::min({a.u, b.u, c.u}))));
        const int x1 = std::min(width - 1, static_cast<int>(std::ceil(std::max({a.u, b.u, c.u}))));
        const int y0 = std::max(0, static_cast<int>(std::floor(std::min({a.v, b.v, c.v}))));
        const int y1 = std::min(height - 1, static_cast<int>(std::ceil(std::max({a.v, b.v, c.v}))));
        for (int y = y0; y <= y1; ++y) {
            const double pv = y + 0.5;
            for (int x = x0; x <= x1; ++x) {
                const double pu = x + 0.5;
                const double l0 = edge(b, c, pu, pv) / area;
                const double l1 = edge(c, a, pu, pv) / area;
                const double l2 = edge(a, b, pu, pv) / area;
                if (l0 < 0.0 || l1 < 0.0 || l2 < 0.0) continue;
                const double w = l0 * a.w + l1 * b.w + l2 * c.w;
                const std::size_t idx = static_cast<std::size_t>(y) * width + x;
                if (w <= r.inv_depth[idx]) continue;
                r.inv_depth[idx] = w;
                std::copy(rgb.begin(), rgb.end(), r.image.rgb.begin() + static_cast<std::ptrdiff_t>(3 * idx));
            }
        }
    }
}

Image render_eye(const CameraRig& rig, const Pose& eye, const std::vector<Triangle>& tris) {
    Raster r{Image(rig.width, rig.height, kBackground),
             std::vector<double>(static_cast<std::size_t>(rig.width) * rig.height, 0.0)};
    const Pose world_to_eye = inverse(eye);
    const Vec3 light = Vec3(0.4, 0.3, 1.0).normalized();
    for (const Triangle& t : tris) draw(r, rig, world_to_eye, t, light);
    return std::move(r.image);
}

}  // namespace

Image::Image(int w, int h, std::array<std::uint8_t, 3> fill)
    : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3) {
    for (std::size_t i = 0; i < rgb.size(); i += 3) std::copy(fill.begin(), fill.end(), rgb.begin() + static_cast<std::ptrdiff_t>(i));
}

CameraRig CameraRig::with_resolution(int width, int height) {
    CameraRig rig;
    rig.width = width;
    rig.height = height;
    rig.focal = 0.5 * width;
    rig.cx = 0.5 * width;
    rig.cy = 0.5 * height;
    return rig;
}

void CameraRig::validate() const {
    if (!(baseline > 0.0)) throw std::invalid_argument("camera baseline must be positive");
    if (width < 16 || height < 16) throw std::invalid_argument("camera resolution must be at least 16x16");
    if (!(focal > 0.0) || !(near_plane > 0.0)) throw std::invalid_argument("camera focal and near plane must be positive");
}

StereoImage render_stereo(const SimState& s, const CameraRig& rig) {
    rig.validate();
    const RobotModel& m = *s.model;
    const int mount = m.frame_index(rig.mount);
    const KinematicState ks(m, s.q_measured);

    std::vector<Triangle> tris;
    for (const SceneObject& o : s.objects) {
        if (o.shape == Shape::box) add_box(tris, o.pose, o.dims, o.color);
        else add_cylinder(tris, o.pose, o.dims, o.color);
    }
    // The links carrying the camera would sit on the lens; leave them out.
    add_robot(tris, s, ks, m.frame_chain(mount));

    const Pose camera = ks.frame_pose(mount);
    StereoImage out;
    out.left = render_eye(rig, camera * Pose::from_translation(Vec3(0, 0.5 * rig.baseline, 0)), tris);
    out.right = render_eye(rig, camera * Pose::from_translation(Vec3(0, -0.5 * rig.baseline, 0)), tris);
    return out;
}

std::string encode_ppm(const Image& img) {
    std::string out = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
    out.append(reinterpret_cast<const char*>(img.rgb.data()), img.rgb.size());
    return out;
}

}  // namespace otv
