#include "loopsift/posegraph.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "loopsift/errors.hpp"

namespace loopsift {

namespace {

bool is_spd(const Matrix6& m) {
    if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-9) return false;
    Eigen::LLT<Matrix6> llt(m);
    return llt.info() == Eigen::Success;
}

void check_edge(const Edge& e, std::size_t n, const char* what) {
    if (e.from < 0 || e.to < 0 || static_cast<std::size_t>(e.from) >= n ||
        static_cast<std::size_t>(e.to) >= n) {
        throw std::invalid_argument(std::string(what) + " " + std::to_string(e.from) + "->" +
                                    std::to_string(e.to) + " references a missing node");
    }
    if (e.from == e.to) {
        throw std::invalid_argument(std::string(what) + " connects node " + std::to_string(e.from) +
                                    " to itself");
    }
    if (!is_spd(e.information)) {
        throw std::invalid_argument(std::string(what) + " " + std::to_string(e.from) + "->" +
                                    std::to_string(e.to) +
                                    " has a non-symmetric or non-positive-definite information matrix");
    }
}

struct UnionFind {
    std::vector<int> parent;
    explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    int find(int x) {
        while (parent[x] != x) {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        return x;
    }
    void unite(int a, int b) { parent[find(a)] = find(b); }
};

void check_connected(const PoseGraph& graph, std::span<const Edge> loops) {
    const std::size_t n = graph.node_count();
    UnionFind uf(n);
    for (const Edge& e : graph.edges) uf.unite(e.from, e.to);
    for (const Edge& e : loops) uf.unite(e.from, e.to);
    const int root = uf.find(graph.fixed_node);
    std::map<int, std::vector<int>> components;
    for (std::size_t i = 0; i < n; ++i) {
        const int r = uf.find(static_cast<int>(i));
        if (r != root) components[r].push_back(static_cast<int>(i));
    }
    if (components.empty()) return;
    std::ostringstream msg;
    msg << "singular normal equations: " << components.size()
        << " component(s) not connected to fixed node " << graph.fixed_node << ":";
    for (const auto& [r, nodes] : components) {
        msg << " {";
        for (std::size_t i = 0; i < nodes.size() && i < 8; ++i) msg << (i ? "," : "") << nodes[i];
        if (nodes.size() > 8) msg << ",... (" << nodes.size() << " nodes)";
        msg << "}";
    }
    throw NumericError(msg.str());
}

double edge_cost(const Edge& e, const Trajectory& t) {
    const Vector6 r = edge_residual(e, t[e.from], t[e.to]);
    return r.dot(e.information * r);
}

}  // namespace

Trajectory transform_trajectory(const Pose& g, const Trajectory& t) {
    Trajectory out;
    out.poses.reserve(t.size());
    for (const Pose& p : t.poses) out.poses.push_back(g * p);
    return out;
}

void PoseGraph::validate() const {
    const std::size_t n = node_count();
    if (n == 0) throw std::invalid_argument("pose graph has no nodes");
    if (fixed_node < 0 || static_cast<std::size_t>(fixed_node) >= n) {
        throw std::invalid_argument("fixed node " + std::to_string(fixed_node) + " does not exist");
    }
    for (const Edge& e : edges) check_edge(e, n, "edge");
}

Matrix6 default_loop_information() { return Matrix6::Identity() * 100.0; }

PoseGraph graph_from_odometry(const Trajectory& poses, double information_scale) {
    if (poses.size() < 2) {
        throw std::invalid_argument("graph_from_odometry needs at least 2 poses, got " +
                                    std::to_string(poses.size()));
    }
    PoseGraph g;
    g.initial = poses;
    g.fixed_node = 0;
    g.edges.reserve(poses.size() - 1);
    for (std::size_t i = 0; i + 1 < poses.size(); ++i) {
        Edge e;
        e.from = static_cast<NodeId>(i);
        e.to = static_cast<NodeId>(i + 1);
        e.measurement = poses[i].inverse() * poses[i + 1];
        e.information = Matrix6::Identity() * information_scale;
        e.kind = EdgeKind::Odometry;
        g.edges.push_back(e);
    }
    return g;
}

Vector6 edge_residual(const Edge& e, const Pose& from, const Pose& to) {
    return se3_log(e.measurement.inverse() * (from.inverse() * to)).vector();
}

double total_cost(const PoseGraph& graph, std::span<const Edge> loops, const Trajectory& poses) {
    double cost = 0.0;
    for (const Edge& e : graph.edges) cost += edge_cost(e, poses);
    for (const Edge& e : loops) cost += edge_cost(e, poses);
    return cost;
}

OptimizeResult optimize(const PoseGraph& graph, std::span<const Edge> loops,
                        const OptimizerOptions& options) {
    graph.validate();
    const std::size_t n = graph.node_count();
    for (const Edge& e : loops) check_edge(e, n, "loop");
    check_connected(graph, loops);

    // Parameter block index per node; the fixed node has none.
    std::vector<int> block(n, -1);
    int blocks = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (static_cast<NodeId>(i) != graph.fixed_node) block[i] = blocks++;
    }
    const int dim = 6 * blocks;

    std::vector<const Edge*> all;
    all.reserve(graph.edges.size() + loops.size());
    for (const Edge& e : graph.edges) all.push_back(&e);
    for (const Edge& e : loops) all.push_back(&e);

    OptimizeResult result;
    result.trajectory = graph.initial;
    Trajectory& poses = result.trajectory;

    auto cost_of = [&](const Trajectory& t) {
        double c = 0.0;
        for (const Edge* e : all) c += edge_cost(*e, t);
        return c;
    };

    double cost = cost_of(poses);
    result.initial_cost = cost;
    result.cost_history.push_back(cost);
    if (dim == 0 || cost < 1e-30) {
        result.converged = true;
        result.final_cost = cost;
        return result;
    }

    double lambda = options.initial_lambda;
    Eigen::SparseMatrix<double> H(dim, dim);
    Eigen::VectorXd b(dim);
    std::vector<Eigen::Triplet<double>> triplets;
    bool need_linearize = true;

    auto add_block = [&](int bi, int bj, const Matrix6& m) {
        for (int r = 0; r < 6; ++r) {
            for (int c = 0; c < 6; ++c) triplets.emplace_back(6 * bi + r, 6 * bj + c, m(r, c));
        }
    };

    while (result.iterations < options.max_iterations) {
        if (need_linearize) {
            triplets.clear();
            b.setZero();
            for (const Edge* e : all) {
                const Pose& ti = poses[e->from];
                const Pose& tj = poses[e->to];
                const Twist r(edge_residual(*e, ti, tj));
                const Matrix6 jinv = se3_right_jacobian_inverse(r);
                const Matrix6 jj = jinv;
                const Matrix6 ji = -jinv * adjoint(tj.inverse() * ti);
                const Vector6 wr = e->information * r.vector();
                const int bi = block[e->from];
                const int bj = block[e->to];
                if (bi >= 0) {
                    add_block(bi, bi, ji.transpose() * e->information * ji);
                    b.segment<6>(6 * bi) += ji.transpose() * wr;
                }
                if (bj >= 0) {
                    add_block(bj, bj, jj.transpose() * e->information * jj);
                    b.segment<6>(6 * bj) += jj.transpose() * wr;
                }
                if (bi >= 0 && bj >= 0) {
                    const Matrix6 off = ji.transpose() * e->information * jj;
                    add_block(bi, bj, off);
                    add_block(bj, bi, off.transpose());
                }
            }
            H.setFromTriplets(triplets.begin(), triplets.end());
            need_linearize = false;
        }

        Eigen::SparseMatrix<double> damped = H;
        for (int k = 0; k < dim; ++k) {
            damped.coeffRef(k, k) += lambda * std::max(H.coeff(k, k), 1e-12);
        }
        Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(damped);
        if (solver.info() != Eigen::Success) {
            throw NumericError("optimize: normal equations could not be factorized");
        }
        const Eigen::VectorXd delta = solver.solve(-b);
        ++result.iterations;

        Trajectory candidate = poses;
        for (std::size_t i = 0; i < n; ++i) {
            if (block[i] < 0) continue;
            candidate[i] = poses[i] * se3_exp(Twist(Vector6(delta.segment<6>(6 * block[i]))));
        }
        const double new_cost = cost_of(candidate);
        if (std::isfinite(new_cost) && new_cost < cost) {
            const double rel = (cost - new_cost) / cost;
            poses = std::move(candidate);
            cost = new_cost;
            result.cost_history.push_back(cost);
            lambda = std::max(lambda * 0.1, 1e-15);
            need_linearize = true;
            if (rel < options.relative_decrease || cost < 1e-30) {
                result.converged = true;
                break;
            }
        } else {
            lambda *= 10.0;
            if (lambda > 1e10) {
                // No descent direction left at this linearization.
                result.converged = true;
                break;
            }
        }
    }
    result.final_cost = cost;
    return result;
}

}  // namespace loopsift
