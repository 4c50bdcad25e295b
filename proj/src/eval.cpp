#include "loopsift/eval.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numbers>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <Eigen/Geometry>

namespace loopsift {

bool LoopLabels::at(int id) const {
    const auto it = is_true.find(id);
    if (it == is_true.end()) throw std::invalid_argument("loop " + std::to_string(id) + " has no label");
    return it->second;
}

int LoopLabels::true_count() const {
    int n = 0;
    for (const auto& [id, t] : is_true) n += t ? 1 : 0;
    return n;
}

LoopLabels derive_labels(std::span<const LoopCandidate> candidates, const Trajectory& ground_truth,
                         std::span<const Fragment> fragments, LabelTolerance tolerance) {
    auto reference_of = [&](int fragment_id) {
        for (const Fragment& f : fragments) {
            if (f.id == fragment_id) return f.reference;
        }
        throw std::invalid_argument("unknown fragment id " + std::to_string(fragment_id));
    };
    const double max_rot = tolerance.rotation_deg * std::numbers::pi / 180.0;
    LoopLabels labels;
    for (const LoopCandidate& c : candidates) {
        int a = c.a;
        int b = c.b;
        if (c.kind == LoopKind::Fragment) {
            a = reference_of(c.a);
            b = reference_of(c.b);
        }
        if (a < 0 || b < 0 || a >= static_cast<int>(ground_truth.size()) || b >= static_cast<int>(ground_truth.size())) {
            throw std::invalid_argument("loop " + std::to_string(c.id) + ": endpoint outside the ground truth");
        }
        const PoseDelta d = pose_delta(ground_truth[a].inverse() * ground_truth[b], c.measurement);
        labels.is_true[c.id] = d.translation < tolerance.translation && d.rotation < max_rot;
    }
    return labels;
}

PrecisionRecall precision_recall(std::span<const int> accepted, const LoopLabels& labels) {
    int tp = 0;
    for (int id : accepted) tp += labels.at(id) ? 1 : 0;
    PrecisionRecall pr;
    if (!accepted.empty()) pr.precision = 100.0 * tp / static_cast<double>(accepted.size());
    const int total = labels.true_count();
    pr.recall = total > 0 ? 100.0 * tp / total : 0.0;
    return pr;
}

std::vector<PrPoint> pr_curve(std::span<const int> ranking, const LoopLabels& labels, std::span<const int> accepted) {
    const std::set<int> accepted_set(accepted.begin(), accepted.end());
    const int total = labels.true_count();
    std::vector<PrPoint> curve;
    curve.reserve(ranking.size());
    int tp = 0;
    for (std::size_t i = 0; i < ranking.size(); ++i) {
        tp += labels.at(ranking[i]) ? 1 : 0;
        PrPoint p;
        p.precision = 100.0 * tp / static_cast<double>(i + 1);
        p.recall = total > 0 ? 100.0 * tp / total : 0.0;
        p.loop_id = ranking[i];
        p.accepted = accepted_set.count(ranking[i]) > 0;
        curve.push_back(p);
    }
    return curve;
}

void write_pr_curve_csv(std::ostream& out, std::span<const PrPoint> curve) {
    const auto precision = out.precision();
    out << std::setprecision(17) << "recall,precision,loop_id,accepted_flag\n";
    for (const PrPoint& p : curve) {
        out << p.recall << ',' << p.precision << ',' << p.loop_id << ',' << (p.accepted ? 1 : 0) << '\n';
    }
    out.precision(precision);
}

Pose align_trajectory(const Trajectory& estimate, const Trajectory& ground_truth) {
    if (estimate.size() != ground_truth.size()) {
        throw std::invalid_argument("trajectory sizes differ: " + std::to_string(estimate.size()) + " vs " +
                                    std::to_string(ground_truth.size()));
    }
    const auto n = static_cast<Eigen::Index>(estimate.size());
    if (n == 0) return Pose::identity();
    Eigen::Matrix3Xd src(3, n), dst(3, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        src.col(i) = estimate[i].translation();
        dst.col(i) = ground_truth[i].translation();
    }
    // Umeyama needs 3 non-collinear points for a unique rotation; with fewer,
    // matching centroids is the best rigid answer available.
    if (n < 3) {
        return Pose::from_translation(dst.rowwise().mean() - src.rowwise().mean());
    }
    const Matrix4 m = Eigen::umeyama(src, dst, false);
    return Pose::from_matrix(m);
}

double trajectory_rmse(const Trajectory& estimate, const Trajectory& ground_truth, bool align) {
    if (estimate.size() != ground_truth.size()) {
        throw std::invalid_argument("trajectory sizes differ: " + std::to_string(estimate.size()) + " vs " +
                                    std::to_string(ground_truth.size()));
    }
    if (estimate.size() == 0) throw std::invalid_argument("empty trajectory");
    const Pose g = align ? align_trajectory(estimate, ground_truth) : Pose::identity();
    double sum = 0.0;
    for (std::size_t i = 0; i < estimate.size(); ++i) {
        sum += ((g * estimate[i].translation()) - ground_truth[i].translation()).squaredNorm();
    }
    return std::sqrt(sum / static_cast<double>(estimate.size()));
}

double surface_mean_distance(const SurfelMap& model, const Scene& scene) {
    if (model.surfels.empty()) throw std::invalid_argument("surface mean distance of an empty model");
    double sum = 0.0;
    for (const Surfel& s : model.surfels) sum += scene.distance(s.position);
    return sum / static_cast<double>(model.surfels.size());
}

namespace {

// Static kd-tree over a point array, nodes stored implicitly in index order.
class KdTree {
public:
    explicit KdTree(std::span<const Vector3> points) : points_(points), order_(points.size()) {
        std::iota(order_.begin(), order_.end(), std::size_t{0});
        build(0, order_.size(), 0);
    }

    double nearest_squared(const Vector3& q) const {
        double best = std::numeric_limits<double>::infinity();
        search(0, order_.size(), 0, q, best);
        return best;
    }

private:
    void build(std::size_t lo, std::size_t hi, int axis) {
        if (hi - lo <= 1) return;
        const std::size_t mid = lo + (hi - lo) / 2;
        std::nth_element(order_.begin() + lo, order_.begin() + mid, order_.begin() + hi,
                         [&](std::size_t a, std::size_t b) { return points_[a][axis] < points_[b][axis]; });
        build(lo, mid, (axis + 1) % 3);
        build(mid + 1, hi, (axis + 1) % 3);
    }

    void search(std::size_t lo, std::size_t hi, int axis, const Vector3& q, double& best) const {
        if (lo >= hi) return;
        const std::size_t mid = lo + (hi - lo) / 2;
        const Vector3& p = points_[order_[mid]];
        best = std::min(best, (p - q).squaredNorm());
        const double diff = q[axis] - p[axis];
        const int next = (axis + 1) % 3;
        if (diff < 0.0) {
            search(lo, mid, next, q, best);
            if (diff * diff < best) search(mid + 1, hi, next, q, best);
        } else {
            search(mid + 1, hi, next, q, best);
            if (diff * diff < best) search(lo, mid, next, q, best);
        }
    }

    std::span<const Vector3> points_;
    std::vector<std::size_t> order_;
};

std::string format_optional(const std::optional<double>& v, int precision) {
    if (!v) return "-";
    std::ostringstream s;
    s << std::fixed << std::setprecision(precision) << *v;
    return s.str();
}

}  // namespace

double surface_mean_distance(const SurfelMap& model, std::span<const Vector3> points) {
    if (model.surfels.empty()) throw std::invalid_argument("surface mean distance of an empty model");
    if (points.empty()) throw std::invalid_argument("surface mean distance against an empty point set");
    const KdTree tree(points);
    double sum = 0.0;
    for (const Surfel& s : model.surfels) sum += std::sqrt(tree.nearest_squared(s.position));
    return sum / static_cast<double>(model.surfels.size());
}

void write_metrics_table(std::ostream& out, std::span<const MetricsReport> rows) {
    std::size_t label_width = 6;
    for (const MetricsReport& r : rows) label_width = std::max(label_width, r.label.size());
    out << std::left << std::setw(static_cast<int>(label_width)) << "method" << std::right << "  " << std::setw(13)
        << "traj_rmse_m" << "  " << std::setw(10) << "smd_m" << "  " << std::setw(14) << "consistency"
        << "  " << std::setw(13) << "precision_%" << "  " << std::setw(10) << "recall_%" << "  " << std::setw(16)
        << "loops before" << "  " << "loops after" << '\n';
    for (const MetricsReport& r : rows) {
        std::ostringstream consistency;
        consistency << std::setprecision(8) << r.consistency;
        out << std::left << std::setw(static_cast<int>(label_width)) << r.label << std::right << "  "
            << std::setw(13) << format_optional(r.rmse, 5) << "  " << std::setw(10) << format_optional(r.smd, 5)
            << "  " << std::setw(14) << consistency.str() << "  " << std::setw(13)
            << format_optional(r.loops ? std::optional(r.loops->precision) : std::nullopt, 1) << "  "
            << std::setw(10) << format_optional(r.loops ? std::optional(r.loops->recall) : std::nullopt, 1)
            << "  " << std::setw(16) << ("before " + std::to_string(r.loops_before)) << "  "
            << ("after " + std::to_string(r.loops_after)) << '\n';
    }
}

void write_metrics_csv(std::ostream& out, std::span<const MetricsReport> rows) {
    const auto precision = out.precision();
    out << std::setprecision(17)
        << "method,traj_rmse_m,smd_m,consistency,precision_pct,recall_pct,loops_before,loops_after\n";
    auto opt = [&](const std::optional<double>& v) {
        if (v) out << *v;
    };
    for (const MetricsReport& r : rows) {
        out << r.label << ',';
        opt(r.rmse);
        out << ',';
        opt(r.smd);
        out << ',' << r.consistency << ',';
        if (r.loops) out << r.loops->precision;
        out << ',';
        if (r.loops) out << r.loops->recall;
        out << ',' << r.loops_before << ',' << r.loops_after << '\n';
    }
    out.precision(precision);
}

}  // namespace loopsift
