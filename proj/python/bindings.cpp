#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <string>
#include <vector>

#include "loopsift/cli.hpp"
#include "loopsift/errors.hpp"
#include "loopsift/eval.hpp"
#include "loopsift/posegraph.hpp"
#include "loopsift/sift.hpp"
#include "loopsift/surfel.hpp"
#include "loopsift/synth.hpp"

namespace py = pybind11;
using namespace loopsift;

namespace {

std::vector<Matrix4> matrices(const Trajectory& t) {
    std::vector<Matrix4> out;
    out.reserve(t.size());
    for (const Pose& p : t.poses) out.push_back(p.matrix());
    return out;
}

Trajectory from_matrices(const std::vector<Matrix4>& ms) {
    Trajectory t;
    t.poses.reserve(ms.size());
    for (const Matrix4& m : ms) t.poses.push_back(Pose::from_matrix(m));
    return t;
}

// Sifts a generated scenario with fragments fused at the drifting poses.
py::dict sift_scenario(const Scenario& s, int k, int threads) {
    SiftResult r;
    {
        py::gil_scoped_release release;
        const PoseGraph graph = graph_from_odometry(s.noisy);
        const std::vector<Fragment> fragments = build_fragments(s.frames, s.noisy, k, {}, threads);
        SiftOptions options;
        options.threads = threads;
        r = sift({graph, s.frames, fragments}, s.loop_candidates(), options);
    }
    py::list ranking;
    for (const RankedLoop& l : r.ranking) ranking.append(py::make_tuple(l.id, l.score, l.failed));
    py::list trace;
    for (const TraceEntry& t : r.trace) {
        py::dict e;
        e["loop_id"] = t.loop_id;
        e["rank"] = t.rank;
        e["single_loop_score"] = t.single_loop_score;
        e["score_before"] = t.score_before;
        e["tentative_score"] = t.tentative_score;
        e["accepted"] = t.accepted;
        e["reason"] = t.reason;
        trace.append(e);
    }
    py::dict out;
    out["accepted"] = r.accepted;
    out["ranking"] = ranking;
    out["trace"] = trace;
    out["baseline_score"] = r.baseline_score;
    out["final_score"] = r.final_score;
    out["baseline_trajectory"] = matrices(r.baseline_trajectory);
    out["final_trajectory"] = matrices(r.final_trajectory);
    return out;
}

}  // namespace

PYBIND11_MODULE(_loopsift, m) {
    m.doc() = "Loop sifting for dense reconstruction";

    py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
    py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
    py::register_exception<IoError>(m, "IoError", PyExc_OSError);

    py::class_<Pose>(m, "Pose")
        .def(py::init<>())
        .def(py::init([](const Matrix4& mat) { return Pose::from_matrix(mat); }), py::arg("matrix"))
        .def_static("from_translation", &Pose::from_translation)
        .def("matrix", &Pose::matrix)
        .def("inverse", &Pose::inverse)
        .def("angle", &Pose::angle)
        .def_property_readonly("translation", [](const Pose& p) { return Vector3(p.translation()); })
        .def("__mul__", [](const Pose& a, const Pose& b) { return a * b; })
        .def("__repr__", [](const Pose& p) {
            const Vector3& t = p.translation();
            return "Pose(t=[" + std::to_string(t.x()) + ", " + std::to_string(t.y()) + ", " + std::to_string(t.z()) +
                   "], angle=" + std::to_string(p.angle()) + ")";
        });
    m.def("se3_exp", [](const Vector6& xi) { return se3_exp(Twist(xi)); }, py::arg("twist"));
    m.def("se3_log", [](const Pose& p) { return Vector6(se3_log(p).vector()); }, py::arg("pose"));

    py::enum_<FalseLoopModel>(m, "FalseLoopModel")
        .value("Aliased", FalseLoopModel::Aliased)
        .value("Perturbed", FalseLoopModel::Perturbed);

    py::class_<ScenarioConfig>(m, "ScenarioConfig")
        .def(py::init<>())
        .def_readwrite("frames", &ScenarioConfig::frames)
        .def_readwrite("width", &ScenarioConfig::width)
        .def_readwrite("height", &ScenarioConfig::height)
        .def_readwrite("fx", &ScenarioConfig::fx)
        .def_readwrite("fy", &ScenarioConfig::fy)
        .def_readwrite("laps", &ScenarioConfig::laps)
        .def_readwrite("sigma_odometry_rot", &ScenarioConfig::sigma_odometry_rot)
        .def_readwrite("sigma_odometry_trans", &ScenarioConfig::sigma_odometry_trans)
        .def_readwrite("true_loops", &ScenarioConfig::true_loops)
        .def_readwrite("false_loops", &ScenarioConfig::false_loops)
        .def_readwrite("true_noise_trans", &ScenarioConfig::true_noise_trans)
        .def_readwrite("true_noise_rot", &ScenarioConfig::true_noise_rot)
        .def_readwrite("false_model", &ScenarioConfig::false_model)
        .def_readwrite("min_loop_gap", &ScenarioConfig::min_loop_gap)
        .def_readwrite("depth_noise", &ScenarioConfig::depth_noise)
        .def("validate", &ScenarioConfig::validate);

    py::class_<Scenario>(m, "Scenario")
        .def_readonly("seed", &Scenario::seed)
        .def_property_readonly("ground_truth", [](const Scenario& s) { return matrices(s.ground_truth); })
        .def_property_readonly("noisy", [](const Scenario& s) { return matrices(s.noisy); })
        .def_property_readonly("frame_count", [](const Scenario& s) { return s.frames.size(); })
        .def("depth",
             [](const Scenario& s, std::size_t i) {
                 const DepthFrame& f = s.frames.at(i);
                 Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> d(f.height(), f.width());
                 std::copy(f.depth.begin(), f.depth.end(), d.data());
                 return d;
             },
             py::arg("index"))
        .def_property_readonly("candidates", [](const Scenario& s) {
            py::list out;
            for (const LabeledCandidate& c : s.candidates) {
                py::dict d;
                d["id"] = c.candidate.id;
                d["a"] = c.candidate.a;
                d["b"] = c.candidate.b;
                d["measurement"] = c.candidate.measurement.matrix();
                d["is_true"] = c.is_true;
                out.append(d);
            }
            return out;
        });

    m.def("generate", &generate, py::arg("config"), py::arg("seed"));
    m.def("export_scenario", &export_scenario, py::arg("scenario"), py::arg("directory"));
    m.def("sift_scenario", &sift_scenario, py::arg("scenario"), py::arg("k") = 50, py::arg("threads") = 1);
    m.def(
        "trajectory_rmse",
        [](const std::vector<Matrix4>& est, const std::vector<Matrix4>& gt, bool align) {
            return trajectory_rmse(from_matrices(est), from_matrices(gt), align);
        },
        py::arg("estimate"), py::arg("ground_truth"), py::arg("align") = true);
    m.def(
        "precision_recall",
        [](const std::vector<int>& accepted, const std::map<int, bool>& labels) {
            const PrecisionRecall pr = precision_recall(accepted, LoopLabels{labels});
            return py::make_tuple(pr.precision, pr.recall);
        },
        py::arg("accepted"), py::arg("labels"));
    m.def(
        "run_cli",
        [](std::vector<std::string> args) {
            args.insert(args.begin(), "loopsift");
            std::vector<char*> argv;
            for (std::string& a : args) argv.push_back(a.data());
            return run_cli(static_cast<int>(argv.size()), argv.data());
        },
        py::arg("args"));
}
