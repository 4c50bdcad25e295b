#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "loopsift/posegraph.hpp"
#include "loopsift/sift.hpp"
#include "loopsift/surfel.hpp"

namespace loopsift {

/// Axis-aligned box. Rays starting inside hit the far faces, so the room that
/// contains the camera is a box as well.
struct Box {
    Vector3 min = Vector3::Zero();
    Vector3 max = Vector3::Zero();
};

/// Infinite plane {x : normal . x = offset}, normal unit length.
struct Plane {
    Vector3 normal = Vector3::UnitZ();
    double offset = 0.0;
};

struct Scene {
    std::vector<Box> boxes;
    std::vector<Plane> planes;

    /// Nearest positive ray parameter, or nullopt.
    std::optional<double> intersect(const Vector3& origin, const Vector3& direction) const;
    /// Unsigned distance from x to the nearest surface.
    double distance(const Vector3& x) const;
};

/// 6 x 6 x 3 m room with four interior boxes.
Scene default_scene();

/// Independent random stream per (seed, purpose tag). Adding a consumer with a
/// new tag leaves existing streams untouched.
class RandomStream {
public:
    RandomStream(std::uint64_t seed, std::string_view tag);
    double uniform();                         // [0, 1)
    double uniform(double lo, double hi);
    double normal();                          // N(0, 1)
    std::size_t index(std::size_t n);         // [0, n)
    Vector3 unit_vector();

private:
    std::mt19937_64 engine_;
};

/// How false loop candidates are made.
///  Aliased: a random frame pair with a measurement that looks like an ordinary
///  revisit (small random motion), as produced by perceptual aliasing.
///  Perturbed: the ground-truth relative pose of a random pair with a gross error.
enum class FalseLoopModel { Aliased, Perturbed };

struct ScenarioConfig {
    int frames = 200;
    int width = 320;
    int height = 240;
    double fx = 250.0;
    double fy = 250.0;
    int laps = 2;
    double orbit_radius = 1.2;     // meters
    double camera_height = 1.4;    // meters
    double pitch = -0.17;          // radians, negative looks down
    double sigma_odometry_rot = 0.002;    // per-step twist noise, radians
    double sigma_odometry_trans = 0.002;  // per-step twist noise, meters
    int true_loops = 10;
    int false_loops = 5;
    double true_noise_trans = 0.02;       // upper bound, meters
    double true_noise_rot = 1.0;          // upper bound, degrees
    FalseLoopModel false_model = FalseLoopModel::Aliased;
    double false_min_trans = 0.3;         // least ground-truth violation of a false loop, meters
    double false_min_rot = 20.0;          // least ground-truth violation of a false loop, degrees
    double false_max_trans = 1.0;         // Perturbed: error drawn from [min, max]
    double false_max_rot = 40.0;
    double alias_max_trans = 0.3;         // Aliased: measured motion bounds, meters
    double alias_max_rot = 10.0;          // degrees
    int min_loop_gap = 50;                // frame loops span more than this many frames
    double depth_noise = 0.0;             // multiple of the axial noise model, 0 = exact
    Scene scene = default_scene();

    Intrinsics intrinsics() const;
    /// Throws std::invalid_argument for degenerate settings.
    void validate() const;
};

struct LabeledCandidate {
    LoopCandidate candidate;
    bool is_true = false;
};

struct Scenario {
    ScenarioConfig config;
    std::uint64_t seed = 0;
    Trajectory ground_truth;
    Trajectory noisy;
    std::vector<DepthFrame> frames;  // rendered from ground truth
    std::vector<LabeledCandidate> candidates;

    std::vector<LoopCandidate> loop_candidates() const;
};

/// Exact ray-cast planar depth (0 where nothing is hit).
DepthFrame render_synthetic_depth(const Scene& scene, const Pose& pose, const Intrinsics& intrinsics,
                                  int frame_index = 0);

/// Ground-truth orbit trajectory only (no rendering).
Trajectory orbit_trajectory(const ScenarioConfig& config);

Scenario generate(const ScenarioConfig& config, std::uint64_t seed);

/// Text scene format: "box minx miny minz maxx maxy maxz" / "plane nx ny nz offset".
void write_scene_file(const std::string& path, const Scene& scene);
Scene read_scene_file(const std::string& path);

/// Writes manifest.txt, depth/*.raw (millimeters), intrinsics.txt,
/// gt_trajectory.txt, noisy_trajectory.txt, candidates.csv and scene.txt.
void export_scenario(const Scenario& scenario, const std::string& directory);

}  // namespace loopsift
