#include "loopsift/consistency.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <stdexcept>

#include "loopsift/errors.hpp"
#include "loopsift/parallel.hpp"

namespace loopsift {

namespace {

constexpr double kNear = 1e-3;
constexpr std::size_t kChunk = 256;

// Bounding spheres over consecutive runs of surfels, used for frustum culling.
struct Chunk {
    std::size_t begin;
    std::size_t end;
    Vector3 center;
    double radius;
};

std::vector<Chunk> make_chunks(const SurfelMap& map) {
    std::vector<Chunk> chunks;
    for (std::size_t b = 0; b < map.size(); b += kChunk) {
        const std::size_t e = std::min(map.size(), b + kChunk);
        Eigen::AlignedBox3d box;
        for (std::size_t i = b; i < e; ++i) box.extend(map.surfels[i].position);
        const Vector3 c = box.center();
        double r = 0.0;
        for (std::size_t i = b; i < e; ++i) {
            const Surfel& s = map.surfels[i];
            r = std::max(r, (s.position - c).norm() + s.radius);
        }
        chunks.push_back({b, e, c, r});
    }
    return chunks;
}

bool chunk_visible(const Chunk& c, const Matrix3& rot, const Vector3& trans, const Intrinsics& K) {
    const Vector3 pc = rot * c.center + trans;
    if (pc.z() + c.radius <= kNear) return false;
    // Side planes of the frustum through the image borders (with half-pixel margin).
    const double left = (-0.5 - K.cx) / K.fx, right = (K.width - 0.5 - K.cx) / K.fx;
    const double top = (-0.5 - K.cy) / K.fy, bottom = (K.height - 0.5 - K.cy) / K.fy;
    auto outside = [&](double nx, double ny, double nz) {
        const double len = std::sqrt(nx * nx + ny * ny + nz * nz);
        return (nx * pc.x() + ny * pc.y() + nz * pc.z()) / len < -c.radius;
    };
    // Inward normals: x - left*z >= 0, right*z - x >= 0, likewise for y.
    return !(outside(1.0, 0.0, -left) || outside(-1.0, 0.0, right) || outside(0.0, 1.0, -top) ||
             outside(0.0, -1.0, bottom));
}

// Normalized image-plane coordinates of every pixel column and row.
struct PixelRays {
    std::vector<double> x;
    std::vector<double> y;

    explicit PixelRays(const Intrinsics& K) : x(K.width), y(K.height) {
        for (int u = 0; u < K.width; ++u) x[u] = (u - K.cx) / K.fx;
        for (int v = 0; v < K.height; ++v) y[v] = (v - K.cy) / K.fy;
    }
};

void splat(const Surfel& s, const Matrix3& rot, const Vector3& trans, const Intrinsics& K, const PixelRays& rays,
           std::vector<double>& zbuf) {
    const Vector3 pc = rot * s.position + trans;
    if (pc.z() <= kNear) return;
    const Vector3 nc = rot * s.normal;
    const double facing = nc.dot(pc);
    if (facing >= 0.0) return;  // back-facing
    const double r = s.radius;
    const double zmin = pc.z() - r;
    if (zmin <= kNear) return;
    const double u0 = K.fx * pc.x() / pc.z() + K.cx;
    const double v0 = K.fy * pc.y() / pc.z() + K.cy;
    const double ru = K.fx * r / zmin;
    const double rv = K.fy * r / zmin;
    const int umin = std::max(0, static_cast<int>(std::ceil(u0 - ru)));
    const int umax = std::min(K.width - 1, static_cast<int>(std::floor(u0 + ru)));
    const int vmin = std::max(0, static_cast<int>(std::ceil(v0 - rv)));
    const int vmax = std::min(K.height - 1, static_cast<int>(std::floor(v0 + rv)));
    const double r2 = r * r;
    for (int v = vmin; v <= vmax; ++v) {
        const double dy = rays.y[v];
        const double row_denom = nc.y() * dy + nc.z();
        double* row = zbuf.data() + static_cast<std::size_t>(v) * K.width;
        for (int u = umin; u <= umax; ++u) {
            const double dx = rays.x[u];
            const double denom = nc.x() * dx + row_denom;
            if (std::abs(denom) < 1e-9) continue;
            const double t = facing / denom;
            if (t <= kNear) continue;
            const double ex = t * dx - pc.x(), ey = t * dy - pc.y(), ez = t - pc.z();
            if (ex * ex + ey * ey + ez * ez > r2) continue;
            double& z = row[u];
            if (z == 0.0 || t < z) z = t;
        }
    }
}

RenderedDepth render_with_chunks(const SurfelMap& map, const std::vector<Chunk>& chunks, const Pose& pose,
                                 const Intrinsics& K) {
    RenderedDepth out;
    out.width = K.width;
    out.height = K.height;
    out.depth.assign(static_cast<std::size_t>(K.width) * K.height, 0.0);
    const PixelRays rays(K);
    const Pose cam_from_map = pose.inverse();
    const Matrix3 rot = cam_from_map.rotation_matrix();
    const Vector3 trans = cam_from_map.translation();
    for (const Chunk& c : chunks) {
        if (!chunk_visible(c, rot, trans, K)) continue;
        for (std::size_t i = c.begin; i < c.end; ++i) splat(map.surfels[i], rot, trans, K, rays, out.depth);
    }
    return out;
}

}  // namespace

RenderedDepth render_depth(const SurfelMap& map, const Pose& pose, const Intrinsics& intrinsics) {
    intrinsics.validate();
    return render_with_chunks(map, make_chunks(map), pose, intrinsics);
}

ConsistencyScore score_map(const SurfelMap& map, std::span<const DepthFrame> frames, const Trajectory& trajectory,
                           int threads) {
    if (frames.empty()) throw std::invalid_argument("score_map: empty frame list");
    for (const DepthFrame& f : frames) {
        if (f.index < 0 || static_cast<std::size_t>(f.index) >= trajectory.size()) {
            throw std::invalid_argument("score_map: trajectory has no pose for frame " + std::to_string(f.index));
        }
    }
    const std::vector<Chunk> chunks = make_chunks(map);
    ConsistencyScore score;
    score.frames.resize(frames.size());
    parallel_for(frames.size(), threads, [&](std::size_t i) {
        const DepthFrame& frame = frames[i];
        const RenderedDepth rendered = render_with_chunks(map, chunks, trajectory[frame.index], frame.intrinsics);
        double sum = 0.0;
        std::size_t evaluated = 0;
        for (std::size_t px = 0; px < frame.depth.size(); ++px) {
            const double zo = frame.depth[px];
            if (zo <= 0.0) continue;
            ++evaluated;
            sum += pixel_penalty(zo, rendered.depth[px]);
        }
        FrameScore& fs = score.frames[i];
        fs.frame_index = frame.index;
        fs.pixels_evaluated = evaluated;
        fs.value = evaluated ? sum / static_cast<double>(evaluated) : 0.0;
    });
    for (const FrameScore& fs : score.frames) {
        score.value += fs.value;
        score.pixels_evaluated += fs.pixels_evaluated;
    }
    return score;
}

void write_score_csv(std::ostream& out, const ConsistencyScore& score) {
    const auto precision = out.precision();
    out << std::setprecision(17) << "frame_index,score,pixels_evaluated\n";
    for (const FrameScore& fs : score.frames) {
        out << fs.frame_index << ',' << fs.value << ',' << fs.pixels_evaluated << '\n';
    }
    out.precision(precision);
}

void write_score_csv_file(const std::string& path, const ConsistencyScore& score) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    write_score_csv(out, score);
}

}  // namespace loopsift
