#include "loopsift/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "loopsift/consistency.hpp"
#include "loopsift/errors.hpp"
#include "loopsift/ingest.hpp"

namespace fs = std::filesystem;

namespace loopsift {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

constexpr double kDegree = std::numbers::pi / 180.0;

// Slab test; a ray starting inside reports the exit distance.
std::optional<double> intersect_box(const Box& b, const Vector3& o, const Vector3& d) {
    double tmin = -std::numeric_limits<double>::infinity();
    double tmax = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a) {
        if (std::abs(d[a]) < 1e-15) {
            if (o[a] < b.min[a] || o[a] > b.max[a]) return std::nullopt;
            continue;
        }
        double t0 = (b.min[a] - o[a]) / d[a];
        double t1 = (b.max[a] - o[a]) / d[a];
        if (t0 > t1) std::swap(t0, t1);
        tmin = std::max(tmin, t0);
        tmax = std::min(tmax, t1);
    }
    if (tmax < tmin || tmax <= 0.0) return std::nullopt;
    return tmin > 0.0 ? tmin : tmax;
}

double box_distance(const Box& b, const Vector3& x) {
    const Vector3 c = 0.5 * (b.min + b.max);
    const Vector3 h = 0.5 * (b.max - b.min);
    const Vector3 q = (x - c).cwiseAbs() - h;
    if ((q.array() <= 0.0).all()) return -q.maxCoeff();  // inside: nearest face
    return q.cwiseMax(0.0).norm();
}

Pose camera_pose(const Vector3& position, double yaw, double pitch) {
    const Vector3 forward(std::cos(yaw) * std::cos(pitch), std::sin(yaw) * std::cos(pitch), std::sin(pitch));
    const Vector3 right = forward.cross(Vector3::UnitZ()).normalized();
    const Vector3 down = forward.cross(right);
    Matrix3 r;
    r.col(0) = right;
    r.col(1) = down;
    r.col(2) = forward;
    return {Eigen::Quaterniond(r), position};
}

Pose perturb(const Pose& p, const Vector3& rotation, const Vector3& translation) {
    return p * Pose(so3_exp(rotation), translation);
}

}  // namespace

std::optional<double> Scene::intersect(const Vector3& origin, const Vector3& direction) const {
    std::optional<double> best;
    for (const Box& b : boxes) {
        const auto t = intersect_box(b, origin, direction);
        if (t && (!best || *t < *best)) best = t;
    }
    for (const Plane& p : planes) {
        const double denom = p.normal.dot(direction);
        if (std::abs(denom) < 1e-15) continue;
        const double t = (p.offset - p.normal.dot(origin)) / denom;
        if (t > 0.0 && (!best || t < *best)) best = t;
    }
    return best;
}

double Scene::distance(const Vector3& x) const {
    double best = std::numeric_limits<double>::infinity();
    for (const Box& b : boxes) best = std::min(best, box_distance(b, x));
    for (const Plane& p : planes) best = std::min(best, std::abs(p.normal.dot(x) - p.offset));
    return best;
}

Scene default_scene() {
    Scene s;
    s.boxes.push_back({Vector3(-3.0, -3.0, 0.0), Vector3(3.0, 3.0, 3.0)});  // room
    s.boxes.push_back({Vector3(2.0, -0.5, 0.0), Vector3(2.6, 0.5, 1.0)});
    s.boxes.push_back({Vector3(-0.4, 2.1, 0.0), Vector3(0.4, 2.7, 1.5)});
    s.boxes.push_back({Vector3(-2.7, -1.0, 0.0), Vector3(-2.0, 0.2, 0.8)});
    s.boxes.push_back({Vector3(0.8, -2.7, 0.0), Vector3(1.6, -2.2, 1.2)});
    return s;
}

RandomStream::RandomStream(std::uint64_t seed, std::string_view tag)
    : engine_(splitmix64(splitmix64(seed) ^ fnv1a(tag))) {}

double RandomStream::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

double RandomStream::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double RandomStream::normal() {
    // Box-Muller; one draw per call keeps the stream position simple.
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::size_t RandomStream::index(std::size_t n) { return std::min(n - 1, static_cast<std::size_t>(uniform() * n)); }

Vector3 RandomStream::unit_vector() {
    for (;;) {
        const Vector3 v(normal(), normal(), normal());
        const double n = v.norm();
        if (n > 1e-9) return v / n;
    }
}

Intrinsics ScenarioConfig::intrinsics() const {
    Intrinsics k;
    k.fx = fx;
    k.fy = fy;
    k.cx = (width - 1) / 2.0;
    k.cy = (height - 1) / 2.0;
    k.width = width;
    k.height = height;
    return k;
}

void ScenarioConfig::validate() const {
    if (frames < 2) throw std::invalid_argument("scenario needs at least 2 frames");
    if (laps < 1) throw std::invalid_argument("scenario needs at least one lap");
    intrinsics().validate();
    if (true_loops < 0 || false_loops < 0) throw std::invalid_argument("loop counts must be non-negative");
    if (sigma_odometry_rot < 0.0 || sigma_odometry_trans < 0.0) throw std::invalid_argument("negative odometry noise");
    if (true_noise_trans < 0.0 || true_noise_rot < 0.0) throw std::invalid_argument("negative loop noise");
    if (false_min_trans <= 5.0 * true_noise_trans || false_min_rot <= 5.0 * true_noise_rot) {
        throw std::invalid_argument("false-loop error must exceed 5x the true-loop noise bound");
    }
    if (alias_max_trans < 0.0 || alias_max_rot < 0.0) throw std::invalid_argument("negative aliasing bounds");
    if (false_max_trans < false_min_trans || false_max_rot < false_min_rot) {
        throw std::invalid_argument("false-loop error range is empty");
    }
    if (min_loop_gap < 0) throw std::invalid_argument("min_loop_gap must be non-negative");
    if (true_loops > 0 && laps < 2) throw std::invalid_argument("true loops need at least two laps");
}

std::vector<LoopCandidate> Scenario::loop_candidates() const {
    std::vector<LoopCandidate> out;
    out.reserve(candidates.size());
    for (const auto& c : candidates) out.push_back(c.candidate);
    return out;
}

DepthFrame render_synthetic_depth(const Scene& scene, const Pose& pose, const Intrinsics& intrinsics, int frame_index) {
    intrinsics.validate();
    DepthFrame f;
    f.intrinsics = intrinsics;
    f.index = frame_index;
    f.depth.assign(static_cast<std::size_t>(intrinsics.width) * intrinsics.height, 0.0f);
    const Matrix3 r = pose.rotation_matrix();
    for (int v = 0; v < intrinsics.height; ++v) {
        for (int u = 0; u < intrinsics.width; ++u) {
            // Camera ray has unit z, so the ray parameter is the planar depth.
            const auto t = scene.intersect(pose.translation(), r * intrinsics.ray(u, v));
            if (t) f.depth[static_cast<std::size_t>(v) * intrinsics.width + u] = static_cast<float>(*t);
        }
    }
    return f;
}

Trajectory orbit_trajectory(const ScenarioConfig& c) {
    Trajectory t;
    t.poses.reserve(c.frames);
    const double per_frame = 2.0 * std::numbers::pi * c.laps / c.frames;
    for (int i = 0; i < c.frames; ++i) {
        const double theta = per_frame * i;
        // Half-rate terms make consecutive laps revisit places from slightly different viewpoints.
        const double slow = std::sin(0.5 * theta);
        const double radius = c.orbit_radius + 0.1 * slow;
        const Vector3 position(radius * std::cos(theta), radius * std::sin(theta), c.camera_height + 0.1 * slow);
        t.poses.push_back(camera_pose(position, theta + 0.1 * slow, c.pitch));
    }
    return t;
}

Scenario generate(const ScenarioConfig& config, std::uint64_t seed) {
    config.validate();
    Scenario s;
    s.config = config;
    s.seed = seed;
    s.ground_truth = orbit_trajectory(config);
    const int n = config.frames;

    RandomStream odo(seed, "odometry");
    s.noisy.poses.push_back(s.ground_truth[0]);
    for (int i = 0; i + 1 < n; ++i) {
        const Pose step = s.ground_truth[i].inverse() * s.ground_truth[i + 1];
        Vector3 w, v;
        for (int a = 0; a < 3; ++a) w[a] = config.sigma_odometry_rot * odo.normal();
        for (int a = 0; a < 3; ++a) v[a] = config.sigma_odometry_trans * odo.normal();
        s.noisy.poses.push_back(s.noisy[i] * step * se3_exp(Twist(w, v)));
    }

    const Intrinsics k = config.intrinsics();
    RandomStream depth_noise(seed, "depth-noise");
    s.frames.reserve(n);
    for (int i = 0; i < n; ++i) {
        DepthFrame f = render_synthetic_depth(config.scene, s.ground_truth[i], k, i);
        if (config.depth_noise > 0.0) {
            for (float& z : f.depth) {
                if (z > 0.0f) {
                    z = std::max(0.0f, static_cast<float>(z + config.depth_noise * depth_sigma(z) * depth_noise.normal()));
                }
            }
        }
        s.frames.push_back(std::move(f));
    }

    std::vector<LabeledCandidate> loops;
    const int per_lap = n / config.laps;
    if (config.true_loops > 0) {
        // Distinct first-lap frames revisited on a later lap.
        RandomStream rng(seed, "true-loops");
        std::vector<int> pool;
        for (int i = 0; i < per_lap; ++i) pool.push_back(i);
        int made = 0;
        while (made < config.true_loops && !pool.empty()) {
            const std::size_t pick = rng.index(pool.size());
            const int i = pool[pick];
            pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pick));
            const int lap = 1 + static_cast<int>(rng.index(static_cast<std::size_t>(config.laps - 1)));
            const int j = i + lap * per_lap + static_cast<int>(rng.index(5)) - 2;
            if (j <= i + config.min_loop_gap || j >= n) continue;
            const Vector3 w = rng.unit_vector() * (config.true_noise_rot * kDegree * rng.uniform());
            const Vector3 v = rng.unit_vector() * (config.true_noise_trans * rng.uniform());
            LabeledCandidate c;
            c.candidate.kind = LoopKind::Frame;
            c.candidate.a = i;
            c.candidate.b = j;
            c.candidate.measurement = perturb(s.ground_truth[i].inverse() * s.ground_truth[j], w, v);
            c.is_true = true;
            loops.push_back(c);
            ++made;
        }
        if (made < config.true_loops) throw std::invalid_argument("not enough frames for the requested true loops");
    }
    if (config.false_loops > 0) {
        RandomStream rng(seed, "false-loops");
        if (n <= config.min_loop_gap + 1) throw std::invalid_argument("sequence too short for false loops");
        const double min_rot = config.false_min_rot * kDegree;
        int made = 0;
        for (int attempt = 0; made < config.false_loops; ++attempt) {
            if (attempt > 1000 * config.false_loops) {
                throw std::invalid_argument("could not place false loops that violate ground truth enough");
            }
            int i = static_cast<int>(rng.index(n));
            int j = static_cast<int>(rng.index(n));
            if (i > j) std::swap(i, j);
            if (j - i <= config.min_loop_gap) continue;
            const Pose truth = s.ground_truth[i].inverse() * s.ground_truth[j];
            Pose measurement;
            if (config.false_model == FalseLoopModel::Perturbed) {
                const Vector3 w =
                    rng.unit_vector() * (rng.uniform(config.false_min_rot, config.false_max_rot) * kDegree);
                const Vector3 v = rng.unit_vector() * rng.uniform(config.false_min_trans, config.false_max_trans);
                measurement = perturb(truth, w, v);
            } else {
                const Vector3 w = rng.unit_vector() * (rng.uniform(0.0, config.alias_max_rot) * kDegree);
                const Vector3 v = rng.unit_vector() * rng.uniform(0.0, config.alias_max_trans);
                measurement = Pose(so3_exp(w), v);
            }
            const PoseDelta miss = pose_delta(truth, measurement);
            if (miss.translation < config.false_min_trans || miss.rotation < min_rot) continue;
            LabeledCandidate c;
            c.candidate.kind = LoopKind::Frame;
            c.candidate.a = i;
            c.candidate.b = j;
            c.candidate.measurement = measurement;
            c.is_true = false;
            loops.push_back(c);
            ++made;
        }
    }
    // Shuffled ids so that id order carries no label information.
    RandomStream ids(seed, "loop-ids");
    std::vector<int> order(loops.size());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[ids.index(i)]);
    for (std::size_t i = 0; i < loops.size(); ++i) loops[i].candidate.id = order[i];
    std::sort(loops.begin(), loops.end(),
              [](const LabeledCandidate& x, const LabeledCandidate& y) { return x.candidate.id < y.candidate.id; });
    s.candidates = std::move(loops);
    return s;
}

void write_scene_file(const std::string& path, const Scene& scene) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << std::setprecision(17);
    for (const Box& b : scene.boxes) {
        out << "box " << b.min.x() << ' ' << b.min.y() << ' ' << b.min.z() << ' ' << b.max.x() << ' ' << b.max.y()
            << ' ' << b.max.z() << '\n';
    }
    for (const Plane& p : scene.planes) {
        out << "plane " << p.normal.x() << ' ' << p.normal.y() << ' ' << p.normal.z() << ' ' << p.offset << '\n';
    }
}

Scene read_scene_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    Scene scene;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ss(line);
        std::string tag;
        if (!(ss >> tag) || tag[0] == '#') continue;
        if (tag == "box") {
            Box b;
            if (ss >> b.min.x() >> b.min.y() >> b.min.z() >> b.max.x() >> b.max.y() >> b.max.z()) {
                scene.boxes.push_back(b);
                continue;
            }
        } else if (tag == "plane") {
            Plane p;
            if (ss >> p.normal.x() >> p.normal.y() >> p.normal.z() >> p.offset && p.normal.norm() > 1e-12) {
                const double len = p.normal.norm();
                p.normal /= len;
                p.offset /= len;
                scene.planes.push_back(p);
                continue;
            }
        }
        throw ParseError(path + ":" + std::to_string(line_no) + ": expected 'box' (6 numbers) or 'plane' (4 numbers)");
    }
    return scene;
}

void export_scenario(const Scenario& scenario, const std::string& directory) {
    const fs::path root(directory);
    std::error_code ec;
    fs::create_directories(root / "depth", ec);
    if (ec) throw IoError("cannot create " + (root / "depth").string() + ": " + ec.message());

    constexpr double kScale = 1000.0;  // millimeters
    for (const DepthFrame& f : scenario.frames) {
        std::ostringstream name;
        name << std::setw(6) << std::setfill('0') << f.index << ".raw";
        write_depth_raw((root / "depth" / name.str()).string(), f, kScale);
    }
    write_intrinsics((root / "intrinsics.txt").string(), scenario.config.intrinsics(), kScale);
    write_tum_trajectory_file((root / "gt_trajectory.txt").string(), scenario.ground_truth);
    write_tum_trajectory_file((root / "noisy_trajectory.txt").string(), scenario.noisy);
    write_scene_file((root / "scene.txt").string(), scenario.config.scene);

    std::vector<CandidateRecord> records;
    for (const auto& c : scenario.candidates) records.push_back({c.candidate, c.is_true});
    {
        std::ofstream out(root / "candidates.csv");
        if (!out) throw IoError("cannot write " + (root / "candidates.csv").string());
        write_candidates_csv(out, records);
    }
    std::ofstream manifest(root / "manifest.txt");
    if (!manifest) throw IoError("cannot write " + (root / "manifest.txt").string());
    manifest << "# synthetic scenario, seed " << scenario.seed << '\n'
             << "depth_dir=depth\n"
             << "depth_scale=" << kScale << '\n'
             << "intrinsics=intrinsics.txt\n"
             << "trajectory=noisy_trajectory.txt\n"
             << "ground_truth=gt_trajectory.txt\n"
             << "candidates=candidates.csv\n"
             << "scene=scene.txt\n";
}

}  // namespace loopsift
