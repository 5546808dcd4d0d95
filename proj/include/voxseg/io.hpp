#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "voxseg/camera.hpp"
#include "voxseg/image.hpp"

namespace voxseg {

struct FileFormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {

inline int pnm_read_int(std::istream& in) {
    // skips whitespace and '#' comments per the PNM spec
    int c = in.get();
    while (c == '#' || std::isspace(c)) {
        if (c == '#')
            while (c != '\n' && c != EOF) c = in.get();
        c = in.get();
    }
    int value = 0;
    bool any = false;
    while (c >= '0' && c <= '9') {
        value = value * 10 + (c - '0');
        any = true;
        c = in.get();
    }
    if (!any) throw FileFormatError("PGM: expected integer in header");
    return value;
}

inline std::string format_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

} // namespace detail

// Depth: binary P5, maxval 65535, big-endian 16-bit samples, millimeters.
inline void write_depth_pgm(const DepthImage& img, std::ostream& out) {
    out << "P5\n" << img.width() << " " << img.height() << "\n65535\n";
    for (std::uint16_t s : img.data()) {
        out.put((char)(s >> 8));
        out.put((char)(s & 0xff));
    }
}

inline DepthImage read_depth_pgm(std::istream& in) {
    char magic[2];
    in.read(magic, 2);
    if (!in || magic[0] != 'P' || magic[1] != '5') throw FileFormatError("PGM: bad magic");
    const int w = detail::pnm_read_int(in);
    const int h = detail::pnm_read_int(in);
    const int maxval = detail::pnm_read_int(in);
    if (maxval != 65535) throw FileFormatError("depth PGM: expected maxval 65535");
    DepthImage img(w, h);
    for (auto& s : img.data()) {
        const int hi = in.get(), lo = in.get();
        if (lo == EOF) throw FileFormatError("PGM: truncated payload");
        s = (std::uint16_t)((hi << 8) | lo);
    }
    return img;
}

// Labels: binary P5, maxval 255.
inline void write_label_pgm(const LabelImage& img, std::ostream& out) {
    out << "P5\n" << img.width() << " " << img.height() << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.data().data()), (std::streamsize)img.data().size());
}

inline LabelImage read_label_pgm(std::istream& in) {
    char magic[2];
    in.read(magic, 2);
    if (!in || magic[0] != 'P' || magic[1] != '5') throw FileFormatError("PGM: bad magic");
    const int w = detail::pnm_read_int(in);
    const int h = detail::pnm_read_int(in);
    const int maxval = detail::pnm_read_int(in);
    if (maxval != 255) throw FileFormatError("label PGM: expected maxval 255");
    LabelImage img(w, h);
    in.read(reinterpret_cast<char*>(img.data().data()), (std::streamsize)img.data().size());
    if (!in) throw FileFormatError("PGM: truncated payload");
    return img;
}

// Pose file: header `fx fy cx cy width height`, then the camera-to-world
// transform as 3 rows of 4 numbers (rotation | translation), row-major.
inline void write_pose_file(const CameraIntrinsics& intr, const Pose& pose, std::ostream& out) {
    using detail::format_double;
    out << format_double(intr.fx) << ' ' << format_double(intr.fy) << ' '
        << format_double(intr.cx) << ' ' << format_double(intr.cy) << ' ' << intr.width << ' '
        << intr.height << "\n";
    for (int r = 0; r < 3; ++r) {
        out << format_double(pose.rotation(r, 0)) << ' ' << format_double(pose.rotation(r, 1))
            << ' ' << format_double(pose.rotation(r, 2)) << ' '
            << format_double(pose.translation(r)) << "\n";
    }
}

inline std::pair<CameraIntrinsics, Pose> read_pose_file(std::istream& in) {
    CameraIntrinsics intr;
    Pose pose;
    if (!(in >> intr.fx >> intr.fy >> intr.cx >> intr.cy >> intr.width >> intr.height))
        throw FileFormatError("pose file: bad header");
    for (int r = 0; r < 3; ++r)
        if (!(in >> pose.rotation(r, 0) >> pose.rotation(r, 1) >> pose.rotation(r, 2) >>
              pose.translation(r)))
            throw FileFormatError("pose file: truncated matrix");
    return {intr, pose};
}

inline std::string frame_basename(int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "frame_%05d", index);
    return buf;
}

inline void save_frame(const std::filesystem::path& dir, int index, const DepthImage& depth,
                       const LabelImage& label, const CameraIntrinsics& intr, const Pose& pose) {
    const std::string base = (dir / frame_basename(index)).string();
    {
        std::ofstream f(base + ".depth.pgm", std::ios::binary);
        write_depth_pgm(depth, f);
    }
    {
        std::ofstream f(base + ".label.pgm", std::ios::binary);
        write_label_pgm(label, f);
    }
    {
        std::ofstream f(base + ".pose.txt");
        write_pose_file(intr, pose, f);
    }
}

struct LoadedFrame {
    DepthImage depth;
    LabelImage label;
    CameraIntrinsics intrinsics;
    Pose pose;
};

inline LoadedFrame load_frame(const std::filesystem::path& dir, int index) {
    const std::string base = (dir / frame_basename(index)).string();
    LoadedFrame frame;
    {
        std::ifstream f(base + ".depth.pgm", std::ios::binary);
        if (!f) throw FileFormatError("missing " + base + ".depth.pgm");
        frame.depth = read_depth_pgm(f);
    }
    {
        std::ifstream f(base + ".label.pgm", std::ios::binary);
        if (!f) throw FileFormatError("missing " + base + ".label.pgm");
        frame.label = read_label_pgm(f);
    }
    {
        std::ifstream f(base + ".pose.txt");
        if (!f) throw FileFormatError("missing " + base + ".pose.txt");
        std::tie(frame.intrinsics, frame.pose) = read_pose_file(f);
    }
    return frame;
}

inline int count_frames(const std::filesystem::path& dir) {
    int n = 0;
    while (std::filesystem::exists(dir / (frame_basename(n) + ".depth.pgm"))) ++n;
    return n;
}

} // namespace voxseg
