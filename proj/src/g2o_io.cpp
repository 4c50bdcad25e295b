#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "loopsift/errors.hpp"
#include "loopsift/posegraph.hpp"

namespace loopsift {

namespace {

// g2o orders information as [translation; rotation].
constexpr int kFromG2o[6] = {3, 4, 5, 0, 1, 2};

Pose read_pose(std::istringstream& ss) {
    double tx, ty, tz, qx, qy, qz, qw;
    if (!(ss >> tx >> ty >> tz >> qx >> qy >> qz >> qw)) {
        throw std::runtime_error("expected tx ty tz qx qy qz qw");
    }
    const Eigen::Quaterniond q(qw, qx, qy, qz);
    if (q.norm() < 1e-12) throw std::runtime_error("zero quaternion");
    return {q, Vector3(tx, ty, tz)};
}

void write_pose(std::ostream& out, const Pose& p) {
    const auto& t = p.translation();
    const auto& q = p.rotation();
    out << t.x() << ' ' << t.y() << ' ' << t.z() << ' ' << q.x() << ' ' << q.y() << ' ' << q.z()
        << ' ' << q.w();
}

}  // namespace

PoseGraph read_g2o(std::istream& in, const std::string& source_name) {
    std::map<int, Pose> vertices;
    std::vector<Edge> edges;
    std::vector<int> fixed;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ss(line);
        std::string tag;
        if (!(ss >> tag) || tag[0] == '#') continue;
        try {
            if (tag == "VERTEX_SE3:QUAT") {
                int id;
                if (!(ss >> id)) throw std::runtime_error("missing vertex id");
                if (id < 0) throw std::runtime_error("negative vertex id");
                if (!vertices.emplace(id, read_pose(ss)).second) {
                    throw std::runtime_error("duplicate vertex id " + std::to_string(id));
                }
            } else if (tag == "EDGE_SE3:QUAT") {
                Edge e;
                if (!(ss >> e.from >> e.to)) throw std::runtime_error("missing edge endpoints");
                e.measurement = read_pose(ss);
                Matrix6 g2o_info;
                for (int r = 0; r < 6; ++r) {
                    for (int c = r; c < 6; ++c) {
                        if (!(ss >> g2o_info(r, c))) {
                            throw std::runtime_error("expected 21 information entries");
                        }
                        g2o_info(c, r) = g2o_info(r, c);
                    }
                }
                for (int r = 0; r < 6; ++r) {
                    for (int c = 0; c < 6; ++c) e.information(kFromG2o[r], kFromG2o[c]) = g2o_info(r, c);
                }
                e.kind = std::abs(e.to - e.from) == 1 ? EdgeKind::Odometry : EdgeKind::Covisibility;
                edges.push_back(e);
            } else if (tag == "FIX") {
                int id;
                while (ss >> id) fixed.push_back(id);
            } else {
                throw std::runtime_error("unsupported record '" + tag + "'");
            }
        } catch (const std::runtime_error& err) {
            throw ParseError(source_name + ":" + std::to_string(line_no) + ": " + err.what());
        }
    }
    if (vertices.empty()) throw ParseError(source_name + ": no VERTEX_SE3:QUAT records");

    PoseGraph g;
    int expected = 0;
    for (const auto& [id, pose] : vertices) {
        if (id != expected) {
            throw ParseError(source_name + ": vertex ids must be contiguous from 0, missing " +
                             std::to_string(expected));
        }
        g.initial.poses.push_back(pose);
        ++expected;
    }
    g.edges = std::move(edges);
    g.fixed_node = fixed.empty() ? 0 : fixed.front();
    try {
        g.validate();
    } catch (const std::invalid_argument& err) {
        throw ParseError(source_name + ": " + err.what());
    }
    return g;
}

PoseGraph read_g2o_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    return read_g2o(in, path);
}

void write_g2o(std::ostream& out, const PoseGraph& graph, std::span<const Edge> extra) {
    const auto flags = out.flags();
    const auto precision = out.precision();
    out << std::setprecision(17);
    for (std::size_t i = 0; i < graph.node_count(); ++i) {
        out << "VERTEX_SE3:QUAT " << i << ' ';
        write_pose(out, graph.initial[i]);
        out << '\n';
    }
    auto write_edge = [&](const Edge& e) {
        out << "EDGE_SE3:QUAT " << e.from << ' ' << e.to << ' ';
        write_pose(out, e.measurement);
        Matrix6 g2o_info;
        for (int r = 0; r < 6; ++r) {
            for (int c = 0; c < 6; ++c) g2o_info(r, c) = e.information(kFromG2o[r], kFromG2o[c]);
        }
        for (int r = 0; r < 6; ++r) {
            for (int c = r; c < 6; ++c) out << ' ' << g2o_info(r, c);
        }
        out << '\n';
    };
    for (const Edge& e : graph.edges) write_edge(e);
    for (const Edge& e : extra) write_edge(e);
    out << "FIX " << graph.fixed_node << '\n';
    out.flags(flags);
    out.precision(precision);
}

void write_g2o_file(const std::string& path, const PoseGraph& graph, std::span<const Edge> extra) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    write_g2o(out, graph, extra);
    if (!out) throw IoError("write failed for " + path);
}

}  // namespace loopsift
