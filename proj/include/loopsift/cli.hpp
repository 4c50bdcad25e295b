#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "loopsift/eval.hpp"
#include "loopsift/ingest.hpp"
#include "loopsift/sift.hpp"
#include "loopsift/synth.hpp"

namespace loopsift {

/// Exit codes per error class.
enum ExitCode : int {
    kExitOk = 0,
    kExitUsage = 1,
    kExitParse = 2,
    kExitNumeric = 3,
    kExitIo = 4,
};

struct RunConfig {
    std::string input;
    std::string out;
    int k = 50;
    int stride = 2;
    int threads = 1;
    std::uint64_t seed = 7;
    bool align = true;
    ScenarioConfig scenario;  // synth only

    /// Throws std::invalid_argument.
    void validate() const;
};

/// Everything the pipeline needs from a manifest.
struct Dataset {
    DatasetManifest manifest;
    std::vector<DepthFrame> frames;
    PoseGraph graph;
    std::vector<CandidateRecord> candidates;
    std::optional<Trajectory> ground_truth;
    std::optional<Scene> scene;

    std::vector<LoopCandidate> loop_candidates() const;
    /// Labels from the candidate file when every record has one, else derived
    /// from the ground truth, else nullopt.
    std::optional<LoopLabels> labels(std::span<const Fragment> fragments) const;
};

Dataset load_dataset(const std::string& manifest_path);

/// Summary counts written to `log`.
void cmd_synth(const RunConfig& config, std::ostream& log);
SiftResult cmd_sift(const RunConfig& config, std::ostream& log);
std::vector<MetricsReport> cmd_eval(const RunConfig& config, std::ostream& log);

/// Parses arguments, dispatches, and maps exceptions to exit codes.
int run_cli(int argc, char** argv);

}  // namespace loopsift
