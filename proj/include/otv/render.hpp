#pragma once

// Software stereo renderer for the head camera rig: pinhole eyes, z-buffer,
// flat shading. Scene objects are drawn as boxes and faceted cylinders,
// robot links as boxes between consecutive joint origins.
//
// Eye frames follow the robot convention (x forward, y left, z up); a point
// (x, y, z) in an eye frame lands on pixel u = cx - f y / x, v = cy - f z / x.

#include "otv/sim_world.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace otv {

struct Image {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> rgb;   // row-major RGB8

    Image() = default;
    Image(int w, int h, std::array<std::uint8_t, 3> fill);

    const std::uint8_t* pixel(int x, int y) const { return rgb.data() + 3 * (static_cast<std::size_t>(y) * width + x); }
    bool operator==(const Image&) const = default;
};

struct StereoImage {
    Image left;
    Image right;
};

struct CameraRig {
    std::string mount = "camera";
    double baseline = 0.063;
    int width = 128;
    int height = 96;
    double focal = 64.0;   // px
    double cx = 64.0;
    double cy = 48.0;
    double near_plane = 0.02;

    /// Rig with focal = width / 2 (90 degree horizontal field) and a
    /// centred principal point.
    static CameraRig with_resolution(int width, int height);
    void validate() const;
};

inline constexpr std::array<std::uint8_t, 3> kBackground{28, 30, 38};

StereoImage render_stereo(const SimState& state, const CameraRig& rig);

/// Binary P6.
std::string encode_ppm(const Image& img);

}  // namespace otv
