#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "loopsift/posegraph.hpp"
#include "loopsift/sift.hpp"
#include "loopsift/surfel.hpp"

namespace loopsift {

// Loaders report malformed input as ParseError naming the file and line/entry,
// and missing files as IoError.

/// TUM format: "timestamp tx ty tz qx qy qz qw" per line, '#' comments.
/// Node ids follow file order. Quaternions off unit length by more than 1e-3
/// are renormalized and reported through `warnings`.
Trajectory load_tum_trajectory(const std::string& path, std::vector<std::string>* warnings = nullptr);
Trajectory read_tum_trajectory(std::istream& in, const std::string& source_name,
                               std::vector<std::string>* warnings = nullptr);
/// Timestamps default to the node index.
void write_tum_trajectory(std::ostream& out, const Trajectory& t, std::span<const double> timestamps = {});
void write_tum_trajectory_file(const std::string& path, const Trajectory& t);

/// Fragment-match log: per entry a header "id_i id_j total" followed by four
/// rows of the 4x4 homogeneous transform. Entry index becomes the candidate id.
std::vector<LoopCandidate> read_match_log(std::istream& in, const std::string& source_name);
std::vector<LoopCandidate> load_match_log(const std::string& path);
void write_match_log(std::ostream& out, std::span<const LoopCandidate> loops, int total);

/// Plain-text intrinsics: "fx fy cx cy width height depth-scale".
struct IntrinsicsFile {
    Intrinsics intrinsics;
    double depth_scale = 1000.0;  // raw units per meter
};
IntrinsicsFile load_intrinsics(const std::string& path);
void write_intrinsics(const std::string& path, const Intrinsics& intrinsics, double depth_scale);

/// Raw little-endian uint16 depth, row-major, value = meters * depth_scale.
DepthFrame load_depth_raw(const std::string& path, const Intrinsics& intrinsics, double depth_scale, int index);
void write_depth_raw(const std::string& path, const DepthFrame& frame, double depth_scale);

/// key=value manifest. Paths are relative to the manifest's directory.
struct DatasetManifest {
    std::string root;
    std::vector<std::string> depth_files;
    double depth_scale = 0.0;
    IntrinsicsFile intrinsics;
    std::string trajectory;
    std::optional<std::string> pose_graph;
    std::optional<std::string> match_log;
    std::optional<std::string> candidates;
    std::optional<std::string> ground_truth;
    std::optional<std::string> scene;
};

/// Accepts either a manifest file or a directory containing manifest.txt.
DatasetManifest load_manifest(const std::string& path);

std::vector<DepthFrame> load_depth_sequence(const DatasetManifest& manifest);

struct CandidateRecord {
    LoopCandidate candidate;
    std::optional<bool> label;
};

/// CSV: id,kind,a,b,tx,ty,tz,qx,qy,qz,qw[,label] with kind in {frame, fragment}.
std::vector<CandidateRecord> load_candidates_csv(const std::string& path);
void write_candidates_csv(std::ostream& out, std::span<const CandidateRecord> records);

}  // namespace loopsift
