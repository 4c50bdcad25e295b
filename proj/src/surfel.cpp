#include "loopsift/surfel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "loopsift/errors.hpp"
#include "loopsift/parallel.hpp"

namespace loopsift {

namespace {

Rgb color_from_normal(const Vector3& n) {
    Rgb c;
    for (int i = 0; i < 3; ++i) {
        c[i] = static_cast<std::uint8_t>(std::lround(std::clamp((n[i] + 1.0) * 127.5, 0.0, 255.0)));
    }
    return c;
}

bool depth_continuous(float a, float b) {
    const double jump = std::max(0.05, 0.05 * a);
    return b > 0.0f && std::abs(static_cast<double>(a) - b) <= jump;
}

}  // namespace

void Intrinsics::validate() const {
    if (!(fx > 0.0) || !(fy > 0.0)) throw std::invalid_argument("intrinsics: fx and fy must be positive");
    if (width <= 0 || height <= 0) throw std::invalid_argument("intrinsics: image size must be positive");
}

void DepthFrame::validate() const {
    intrinsics.validate();
    const std::size_t expected = static_cast<std::size_t>(width()) * height();
    if (depth.size() != expected) {
        throw std::invalid_argument("depth frame " + std::to_string(index) + ": " +
                                    std::to_string(depth.size()) + " depth values for a " +
                                    std::to_string(width()) + "x" + std::to_string(height()) + " image");
    }
    if (!color.empty() && color.size() != expected) {
        throw std::invalid_argument("depth frame " + std::to_string(index) + ": color size mismatch");
    }
    for (float z : depth) {
        if (!std::isfinite(z) || z < 0.0f) {
            throw std::invalid_argument("depth frame " + std::to_string(index) +
                                        ": depth must be finite and non-negative");
        }
    }
}

double SurfelMap::total_weight() const {
    double w = 0.0;
    for (const Surfel& s : surfels) w += s.weight;
    return w;
}

SurfelMap transform_map(const Pose& g, const SurfelMap& map) {
    SurfelMap out = map;
    const Matrix3 r = g.rotation_matrix();
    for (Surfel& s : out.surfels) {
        s.position = r * s.position + g.translation();
        s.normal = r * s.normal;
    }
    return out;
}

void fuse_frame(SurfelMap& map, const DepthFrame& frame, const Pose& pose, const FusionOptions& options) {
    frame.validate();
    if (options.stride < 1) throw std::invalid_argument("fusion stride must be >= 1");
    const Intrinsics& K = frame.intrinsics;
    const int w = K.width;
    const int h = K.height;

    // Index map of existing surfels, nearest per pixel of their projected center.
    const Pose cam_from_map = pose.inverse();
    const Matrix3 rot = cam_from_map.rotation_matrix();
    const Vector3 trans = cam_from_map.translation();
    std::vector<int> index(static_cast<std::size_t>(w) * h, -1);
    std::vector<double> index_z(index.size(), std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < map.surfels.size(); ++i) {
        const Surfel& s = map.surfels[i];
        const Vector3 pc = rot * s.position + trans;
        if (pc.z() <= 1e-6) continue;
        if ((rot * s.normal).dot(pc) >= 0.0) continue;  // back-facing
        const long u = std::lround(K.fx * pc.x() / pc.z() + K.cx);
        const long v = std::lround(K.fy * pc.y() / pc.z() + K.cy);
        if (u < 0 || v < 0 || u >= w || v >= h) continue;
        const std::size_t px = static_cast<std::size_t>(v) * w + u;
        if (pc.z() < index_z[px]) {
            index_z[px] = pc.z();
            index[px] = static_cast<int>(i);
        }
    }

    const Matrix3 map_rot = pose.rotation_matrix();
    const double focal = 0.5 * (K.fx + K.fy);
    std::vector<char> updated(map.surfels.size(), 0);
    std::vector<Surfel> created;

    for (int v = 0; v < h; v += options.stride) {
        for (int u = 0; u < w; u += options.stride) {
            const float z = frame.at(u, v);
            if (z <= 0.0f) continue;
            if (u < 1 || v < 1 || u + 1 >= w || v + 1 >= h) continue;
            const float zl = frame.at(u - 1, v), zr = frame.at(u + 1, v);
            const float zu = frame.at(u, v - 1), zd = frame.at(u, v + 1);
            if (!depth_continuous(z, zl) || !depth_continuous(z, zr) || !depth_continuous(z, zu) ||
                !depth_continuous(z, zd)) {
                continue;
            }
            const Vector3 p = K.ray(u, v) * z;
            const Vector3 dx = K.ray(u + 1, v) * zr - K.ray(u - 1, v) * zl;
            const Vector3 dy = K.ray(u, v + 1) * zd - K.ray(u, v - 1) * zu;
            Vector3 n = dx.cross(dy);
            const double nn = n.norm();
            if (nn < 1e-12) continue;
            n /= nn;
            if (n.dot(p) > 0.0) n = -n;  // toward the camera

            const Vector3 pw = pose * p;
            const Vector3 nw = map_rot * n;
            const Rgb color = frame.color.empty()
                                  ? color_from_normal(nw)
                                  : frame.color[static_cast<std::size_t>(v) * w + u];
            const double radius =
                std::clamp(z / focal * options.stride * std::sqrt(2.0), options.min_radius, options.max_radius);

            // Existing surfel projecting within one pixel and within depth tolerance.
            const double tol = std::max(options.depth_tolerance, options.depth_tolerance_rel * z);
            // Nearest in depth wins; the center pixel is visited first so it wins ties.
            static constexpr int kOffsets[9][2] = {{0, 0}, {1, 0}, {-1, 0}, {0, 1}, {0, -1},
                                                   {1, 1}, {-1, 1}, {1, -1}, {-1, -1}};
            int best = -1;
            bool covered = false;
            double best_dz = tol;
            for (const auto& off : kOffsets) {
                const int uu = u + off[0], vv = v + off[1];
                if (uu < 0 || vv < 0 || uu >= w || vv >= h) continue;
                const std::size_t px = static_cast<std::size_t>(vv) * w + uu;
                const int cand = index[px];
                if (cand < 0) continue;
                const double dz = std::abs(index_z[px] - z);
                if (dz >= tol) continue;
                covered = true;
                if (!updated[cand] && dz < best_dz) {
                    best_dz = dz;
                    best = cand;
                }
            }
            if (best < 0 && covered) continue;  // already represented this frame
            if (best >= 0) {
                updated[best] = 1;
                Surfel& s = map.surfels[best];
                const double wsum = s.weight + 1.0;
                s.position = (s.weight * s.position + pw) / wsum;
                s.normal = (s.weight * s.normal + nw).normalized();
                for (int c = 0; c < 3; ++c) {
                    s.color[c] = static_cast<std::uint8_t>(
                        std::lround((s.weight * s.color[c] + color[c]) / wsum));
                }
                s.weight = wsum;
                s.t = frame.index;
            } else {
                Surfel s;
                s.position = pw;
                s.normal = nw;
                s.color = color;
                s.weight = 1.0;
                s.radius = radius;
                s.t0 = s.t = frame.index;
                created.push_back(s);
            }
        }
    }
    map.surfels.insert(map.surfels.end(), created.begin(), created.end());
}

std::vector<Fragment> build_fragments(std::span<const DepthFrame> frames, const Trajectory& poses, int k,
                                      const FusionOptions& options, int threads) {
    if (k < 1) throw std::invalid_argument("fragment size k must be >= 1, got " + std::to_string(k));
    if (poses.size() < frames.size()) {
        throw std::invalid_argument("trajectory has " + std::to_string(poses.size()) + " poses for " +
                                    std::to_string(frames.size()) + " frames");
    }
    const int n = static_cast<int>(frames.size());
    const int count = (n + k - 1) / k;
    std::vector<Fragment> fragments(count);
    parallel_for(count, threads, [&](std::size_t f) {
        Fragment& frag = fragments[f];
        frag.id = static_cast<int>(f);
        frag.first = static_cast<int>(f) * k;
        frag.last = std::min(n - 1, frag.first + k - 1);
        frag.reference = fragment_reference(frag.first, frag.last);
        frag.anchor = poses[frag.reference];
        const Pose anchor_inv = frag.anchor.inverse();
        SurfelMap local;
        for (int i = frag.first; i <= frag.last; ++i) {
            frag.local_poses.push_back(anchor_inv * poses[i]);
            fuse_frame(local, frames[i], frag.local_poses.back(), options);
        }
        frag.surfels = std::move(local.surfels);
    });
    return fragments;
}

SurfelMap assemble_model(std::span<const Fragment> fragments, const Trajectory& trajectory) {
    SurfelMap out;
    std::size_t total = 0;
    for (const Fragment& f : fragments) total += f.surfels.size();
    out.surfels.reserve(total);
    for (const Fragment& f : fragments) {
        if (f.reference < 0 || static_cast<std::size_t>(f.reference) >= trajectory.size()) {
            throw std::invalid_argument("fragment " + std::to_string(f.id) + ": trajectory has no pose for reference frame " +
                                        std::to_string(f.reference));
        }
        const Pose& p = trajectory[f.reference];
        const Matrix3 r = p.rotation_matrix();
        for (Surfel s : f.surfels) {
            s.position = r * s.position + p.translation();
            s.normal = r * s.normal;
            out.surfels.push_back(s);
        }
    }
    return out;
}

void write_ply(std::ostream& out, const SurfelMap& map) {
    out << "ply\nformat ascii 1.0\n"
        << "element vertex " << map.size() << '\n'
        << "property float x\nproperty float y\nproperty float z\n"
        << "property float nx\nproperty float ny\nproperty float nz\n"
        << "property uchar red\nproperty uchar green\nproperty uchar blue\n"
        << "end_header\n";
    const auto precision = out.precision();
    out << std::setprecision(9);
    for (const Surfel& s : map.surfels) {
        out << s.position.x() << ' ' << s.position.y() << ' ' << s.position.z() << ' ' << s.normal.x() << ' '
            << s.normal.y() << ' ' << s.normal.z() << ' ' << int(s.color[0]) << ' ' << int(s.color[1]) << ' '
            << int(s.color[2]) << '\n';
    }
    out.precision(precision);
}

void write_ply_file(const std::string& path, const SurfelMap& map) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    write_ply(out, map);
    if (!out) throw IoError("write failed for " + path);
}

SurfelMap read_ply_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::string line;
    std::size_t count = 0;
    int line_no = 0;
    bool header_done = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.rfind("element vertex", 0) == 0) count = std::stoul(line.substr(15));
        if (line == "end_header") {
            header_done = true;
            break;
        }
    }
    if (!header_done) throw ParseError(path + ": missing end_header");
    SurfelMap map;
    map.surfels.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        ++line_no;
        if (!std::getline(in, line)) throw ParseError(path + ":" + std::to_string(line_no) + ": truncated vertex list");
        std::istringstream ss(line);
        Surfel s;
        int r, g, b;
        if (!(ss >> s.position.x() >> s.position.y() >> s.position.z() >> s.normal.x() >> s.normal.y() >>
              s.normal.z() >> r >> g >> b)) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": expected x y z nx ny nz red green blue");
        }
        s.color = {static_cast<std::uint8_t>(r), static_cast<std::uint8_t>(g), static_cast<std::uint8_t>(b)};
        map.surfels.push_back(s);
    }
    return map;
}

}  // namespace loopsift
