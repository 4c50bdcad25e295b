#include "loopsift/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "loopsift/errors.hpp"

namespace fs = std::filesystem;

namespace loopsift {

namespace {

std::ofstream create_file(const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    return out;
}

void ensure_directory(const std::string& dir) {
    if (dir.empty()) throw std::invalid_argument("--out is required");
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) {
        throw IoError("cannot create output directory " + dir + (ec ? ": " + ec.message() : ""));
    }
}

std::vector<std::vector<std::string>> read_csv_body(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<std::vector<std::string>> rows;
    std::string line;
    bool header = true;
    while (std::getline(in, line)) {
        if (header) {
            header = false;
            continue;
        }
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        rows.push_back(std::move(cells));
    }
    return rows;
}

int parse_int_cell(const std::string& s, const fs::path& path) {
    try {
        std::size_t used = 0;
        const int v = std::stoi(s, &used);
        if (used == s.size()) return v;
    } catch (const std::exception&) {
    }
    throw ParseError(path.string() + ": expected an integer, got '" + s + "'");
}

double parse_double_cell(const std::string& s, const fs::path& path) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used == s.size()) return v;
    } catch (const std::exception&) {
    }
    throw ParseError(path.string() + ": expected a number, got '" + s + "'");
}

std::vector<Edge> edges_for(std::span<const LoopCandidate> loops, std::span<const Fragment> fragments) {
    std::vector<Edge> edges;
    for (const LoopCandidate& c : loops) {
        const std::vector<Edge> e = loop_edges(c, fragments);
        edges.insert(edges.end(), e.begin(), e.end());
    }
    return edges;
}

FusionOptions fusion_options(const RunConfig& config) {
    FusionOptions f;
    f.stride = config.stride;
    return f;
}

MetricsReport make_row(const std::string& label, const Dataset& data, const Trajectory& trajectory,
                       const SurfelMap& model, double consistency, std::span<const int> accepted,
                       const std::optional<LoopLabels>& labels, bool align) {
    MetricsReport r;
    r.label = label;
    r.loops_before = data.candidates.size();
    r.loops_after = accepted.size();
    r.consistency = consistency;
    if (labels) r.loops = precision_recall(accepted, *labels);
    if (data.ground_truth) r.rmse = trajectory_rmse(trajectory, *data.ground_truth, align);
    if (data.scene && !model.surfels.empty()) r.smd = surface_mean_distance(model, *data.scene);
    return r;
}

void write_metrics(const fs::path& dir, const std::string& stem, std::span<const MetricsReport> rows) {
    auto table = create_file(dir / (stem + ".txt"));
    write_metrics_table(table, rows);
    auto csv = create_file(dir / (stem + ".csv"));
    write_metrics_csv(csv, rows);
}

std::map<std::string, std::string> read_run_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string() + " (is the input a sift output directory?)");
    std::map<std::string, std::string> kv;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ParseError(path.string() + ":" + std::to_string(line_no) + ": expected key=value");
        }
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    for (const char* key : {"manifest", "k", "stride"}) {
        if (!kv.count(key)) throw ParseError(path.string() + ": missing key '" + key + "'");
    }
    return kv;
}

}  // namespace

void RunConfig::validate() const {
    if (k < 1) throw std::invalid_argument("--k must be at least 1");
    if (stride < 1) throw std::invalid_argument("--stride must be at least 1");
    if (threads < 1) throw std::invalid_argument("--threads must be at least 1");
}

std::vector<LoopCandidate> Dataset::loop_candidates() const {
    std::vector<LoopCandidate> out;
    out.reserve(candidates.size());
    for (const CandidateRecord& r : candidates) out.push_back(r.candidate);
    return out;
}

std::optional<LoopLabels> Dataset::labels(std::span<const Fragment> fragments) const {
    const bool all_labeled = std::all_of(candidates.begin(), candidates.end(),
                                         [](const CandidateRecord& r) { return r.label.has_value(); });
    if (all_labeled && !candidates.empty()) {
        LoopLabels labels;
        for (const CandidateRecord& r : candidates) labels.is_true[r.candidate.id] = *r.label;
        return labels;
    }
    if (ground_truth) {
        const std::vector<LoopCandidate> loops = loop_candidates();
        return derive_labels(loops, *ground_truth, fragments);
    }
    return std::nullopt;
}

Dataset load_dataset(const std::string& manifest_path) {
    Dataset d;
    d.manifest = load_manifest(manifest_path);
    d.frames = load_depth_sequence(d.manifest);
    const Trajectory trajectory = load_tum_trajectory(d.manifest.trajectory);
    if (d.manifest.pose_graph) {
        d.graph = read_g2o_file(*d.manifest.pose_graph);
    } else {
        d.graph = graph_from_odometry(trajectory);
    }
    if (d.graph.node_count() != d.frames.size()) {
        throw ParseError(manifest_path + ": " + std::to_string(d.frames.size()) + " depth frames but " +
                         std::to_string(d.graph.node_count()) + " pose-graph nodes");
    }
    if (trajectory.size() != d.frames.size()) {
        throw ParseError(d.manifest.trajectory + ": " + std::to_string(trajectory.size()) + " poses for " +
                         std::to_string(d.frames.size()) + " depth frames");
    }
    if (d.manifest.candidates) d.candidates = load_candidates_csv(*d.manifest.candidates);
    if (d.manifest.match_log) {
        int next_id = 0;
        for (const CandidateRecord& r : d.candidates) next_id = std::max(next_id, r.candidate.id + 1);
        for (LoopCandidate c : load_match_log(*d.manifest.match_log)) {
            c.id += next_id;
            d.candidates.push_back({c, std::nullopt});
        }
    }
    if (d.manifest.ground_truth) {
        d.ground_truth = load_tum_trajectory(*d.manifest.ground_truth);
        if (d.ground_truth->size() != d.frames.size()) {
            throw ParseError(*d.manifest.ground_truth + ": ground truth has " +
                             std::to_string(d.ground_truth->size()) + " poses for " +
                             std::to_string(d.frames.size()) + " depth frames");
        }
    }
    if (d.manifest.scene) d.scene = read_scene_file(*d.manifest.scene);
    return d;
}

void cmd_synth(const RunConfig& config, std::ostream& log) {
    ensure_directory(config.out);
    const Scenario s = generate(config.scenario, config.seed);
    export_scenario(s, config.out);
    int true_count = 0;
    for (const auto& c : s.candidates) true_count += c.is_true ? 1 : 0;
    log << "scenario seed " << config.seed << " written to " << config.out << '\n'
        << "frames      " << s.frames.size() << '\n'
        << "candidates  " << s.candidates.size() << " (" << true_count << " true, "
        << s.candidates.size() - true_count << " false)\n"
        << "drift rmse  " << trajectory_rmse(s.noisy, s.ground_truth, false) << " m\n";
}

SiftResult cmd_sift(const RunConfig& config, std::ostream& log) {
    config.validate();
    if (config.input.empty()) throw std::invalid_argument("--input is required");
    const Dataset data = load_dataset(config.input);
    ensure_directory(config.out);
    const fs::path out(config.out);

    const std::vector<Fragment> fragments =
        build_fragments(data.frames, data.graph.initial, config.k, fusion_options(config), config.threads);
    const std::vector<LoopCandidate> candidates = data.loop_candidates();
    SiftOptions options;
    options.threads = config.threads;
    const SiftInputs inputs{data.graph, data.frames, fragments};
    const SiftResult result = sift(inputs, candidates, options);

    {
        auto f = create_file(out / "ranking.csv");
        write_ranking_csv(f, result);
    }
    {
        auto f = create_file(out / "trace.csv");
        write_trace_csv(f, result);
    }
    {
        auto f = create_file(out / "accepted.txt");
        for (int id : result.accepted) f << id << '\n';
    }
    {
        auto f = create_file(out / "report.txt");
        write_sift_report(f, result, candidates.size());
    }
    const SurfelMap before = assemble_model(fragments, result.baseline_trajectory);
    const SurfelMap after = assemble_model(fragments, result.final_trajectory);
    write_ply_file((out / "model_before.ply").string(), before);
    write_ply_file((out / "model_after.ply").string(), after);
    write_tum_trajectory_file((out / "trajectory_before.txt").string(), result.baseline_trajectory);
    write_tum_trajectory_file((out / "trajectory_after.txt").string(), result.final_trajectory);
    write_score_csv_file((out / "scores_before.csv").string(), result.baseline_detail);
    write_score_csv_file((out / "scores_after.csv").string(), result.final_detail);

    const std::optional<LoopLabels> labels = data.labels(fragments);
    std::vector<MetricsReport> rows;
    rows.push_back(make_row("no loops", data, result.baseline_trajectory, before, result.baseline_score, {}, labels,
                            config.align));
    rows.push_back(make_row("sifted", data, result.final_trajectory, after, result.final_score, result.accepted,
                            labels, config.align));
    write_metrics(out, "metrics", rows);
    if (labels && !result.ranking.empty()) {
        std::vector<int> ranking;
        for (const RankedLoop& r : result.ranking) ranking.push_back(r.id);
        auto f = create_file(out / "pr_curve.csv");
        write_pr_curve_csv(f, pr_curve(ranking, *labels, result.accepted));
    }
    {
        auto f = create_file(out / "run.txt");
        f << "manifest=" << fs::absolute(config.input).string() << '\n'
          << "k=" << config.k << '\n'
          << "stride=" << config.stride << '\n'
          << "candidates=" << candidates.size() << '\n';
    }

    log << std::setprecision(10) << "candidates     " << candidates.size() << '\n'
        << "accepted       " << result.accepted.size() << '\n'
        << "baseline score " << result.baseline_score << '\n'
        << "final score    " << result.final_score << '\n';
    write_metrics_table(log, rows);
    return result;
}

std::vector<MetricsReport> cmd_eval(const RunConfig& config, std::ostream& log) {
    config.validate();
    if (config.input.empty()) throw std::invalid_argument("--input is required");
    const fs::path in(config.input);
    const auto run = read_run_file(in / "run.txt");
    RunConfig effective = config;
    effective.k = parse_int_cell(run.at("k"), in / "run.txt");
    effective.stride = parse_int_cell(run.at("stride"), in / "run.txt");
    const Dataset data = load_dataset(run.at("manifest"));
    const fs::path out = config.out.empty() ? in : fs::path(config.out);
    ensure_directory(out.string());

    std::vector<int> accepted;
    {
        std::ifstream f(in / "accepted.txt");
        if (!f) throw IoError("cannot open " + (in / "accepted.txt").string());
        std::string line;
        while (std::getline(f, line)) {
            if (!line.empty()) accepted.push_back(parse_int_cell(line, in / "accepted.txt"));
        }
    }
    auto score_sum = [&](const fs::path& p) {
        double sum = 0.0;
        for (const auto& row : read_csv_body(p)) {
            if (row.size() != 3) throw ParseError(p.string() + ": expected 3 columns");
            sum += parse_double_cell(row[1], p);
        }
        return sum;
    };

    const std::vector<Fragment> fragments =
        build_fragments(data.frames, data.graph.initial, effective.k, fusion_options(effective), config.threads);
    const std::optional<LoopLabels> labels = data.labels(fragments);
    const std::vector<LoopCandidate> candidates = data.loop_candidates();
    SiftOptions options;
    options.threads = config.threads;
    const SiftInputs inputs{data.graph, data.frames, fragments};

    std::vector<MetricsReport> rows;
    const Trajectory before = load_tum_trajectory((in / "trajectory_before.txt").string());
    rows.push_back(make_row("no loops", data, before, read_ply_file((in / "model_before.ply").string()),
                            score_sum(in / "scores_before.csv"), {}, labels, config.align));

    auto evaluated_row = [&](const std::string& label, const std::vector<LoopCandidate>& loops) {
        std::vector<int> ids;
        for (const LoopCandidate& c : loops) ids.push_back(c.id);
        try {
            const Evaluation ev = evaluate_loops(inputs, edges_for(loops, fragments), options, config.threads);
            rows.push_back(make_row(label, data, ev.trajectory, assemble_model(fragments, ev.trajectory),
                                    ev.score.value, ids, labels, config.align));
        } catch (const NumericError& e) {
            log << label << ": optimization failed: " << e.what() << '\n';
        }
    };
    if (!candidates.empty()) evaluated_row("all candidates", candidates);
    if (labels) {
        std::vector<LoopCandidate> true_loops;
        for (const LoopCandidate& c : candidates) {
            if (labels->at(c.id)) true_loops.push_back(c);
        }
        if (!true_loops.empty()) evaluated_row("all true loops", true_loops);
    }
    const Trajectory after = load_tum_trajectory((in / "trajectory_after.txt").string());
    rows.push_back(make_row("sifted", data, after, read_ply_file((in / "model_after.ply").string()),
                            score_sum(in / "scores_after.csv"), accepted, labels, config.align));

    write_metrics(out, "eval_metrics", rows);
    if (labels && fs::exists(in / "ranking.csv")) {
        std::vector<int> ranking;
        for (const auto& row : read_csv_body(in / "ranking.csv")) {
            if (row.size() < 2) throw ParseError((in / "ranking.csv").string() + ": expected at least 2 columns");
            ranking.push_back(parse_int_cell(row[1], in / "ranking.csv"));
        }
        if (!ranking.empty()) {
            auto f = create_file(out / "eval_pr_curve.csv");
            write_pr_curve_csv(f, pr_curve(ranking, *labels, accepted));
        }
    }
    write_metrics_table(log, rows);
    return rows;
}

int run_cli(int argc, char** argv) {
    CLI::App app{"Loop sifting: rank loop-closure candidates by dense-map consistency and keep the helpful ones"};
    app.require_subcommand(1);
    RunConfig config;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--out", config.out, "Output directory");
        sub->add_option("--seed", config.seed, "Random seed");
        sub->add_option("--threads", config.threads, "Worker threads")->check(CLI::PositiveNumber);
    };

    CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic scenario directory");
    add_common(synth);
    synth->get_option("--out")->required();
    ScenarioConfig& sc = config.scenario;
    synth->add_option("--frames", sc.frames, "Frame count");
    synth->add_option("--width", sc.width, "Image width");
    synth->add_option("--height", sc.height, "Image height");
    synth->add_option("--focal", sc.fx, "Focal length in pixels (fx = fy)");
    synth->add_option("--laps", sc.laps, "Orbit laps");
    synth->add_option("--true-loops", sc.true_loops, "True loop candidates");
    synth->add_option("--false-loops", sc.false_loops, "False loop candidates");
    synth->add_option("--true-noise-trans", sc.true_noise_trans, "True-loop translation noise bound (m)");
    synth->add_option("--true-noise-rot", sc.true_noise_rot, "True-loop rotation noise bound (deg)");
    synth->add_option("--odometry-noise-rot", sc.sigma_odometry_rot, "Per-step rotation noise sigma (rad)");
    synth->add_option("--odometry-noise-trans", sc.sigma_odometry_trans, "Per-step translation noise sigma (m)");
    synth->add_option("--min-loop-gap", sc.min_loop_gap, "Minimum frame gap of generated loops");
    synth->add_option("--depth-noise", sc.depth_noise, "Depth noise as a multiple of the sensor model");
    const std::map<std::string, FalseLoopModel> false_models = {{"aliased", FalseLoopModel::Aliased},
                                                                {"perturbed", FalseLoopModel::Perturbed}};
    synth->add_option("--false-model", sc.false_model, "False loops: aliased revisits or perturbed ground truth")
        ->transform(CLI::CheckedTransformer(false_models, CLI::ignore_case));

    CLI::App* sift_cmd = app.add_subcommand("sift", "Run loop sifting on a dataset manifest or scenario directory");
    add_common(sift_cmd);
    sift_cmd->get_option("--out")->required();
    sift_cmd->add_option("--input", config.input, "Manifest file or scenario directory")->required();
    sift_cmd->add_option("--k", config.k, "Fragment size in frames")->check(CLI::PositiveNumber);
    sift_cmd->add_option("--stride", config.stride, "Pixel stride for fusion")->check(CLI::PositiveNumber);
    sift_cmd->add_flag("--align,!--no-align", config.align, "Rigidly align trajectories before RMSE");

    CLI::App* eval_cmd = app.add_subcommand("eval", "Compute metrics for a sift output directory");
    add_common(eval_cmd);
    eval_cmd->add_option("--input", config.input, "Sift output directory")->required();
    eval_cmd->add_flag("--align,!--no-align", config.align, "Rigidly align trajectories before RMSE");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (synth->parsed()) {
            config.scenario.fy = config.scenario.fx;
            cmd_synth(config, std::cout);
        } else if (sift_cmd->parsed()) {
            cmd_sift(config, std::cout);
        } else {
            cmd_eval(config, std::cout);
        }
    } catch (const ParseError& e) {
        std::cerr << "parse error: " << e.what() << '\n';
        return kExitParse;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const IoError& e) {
        std::cerr << "I/O error: " << e.what() << '\n';
        return kExitIo;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    }
    return kExitOk;
}

}  // namespace loopsift
