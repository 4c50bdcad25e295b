#include "loopsift/sift.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <set>
#include <stdexcept>

#include "loopsift/parallel.hpp"

namespace loopsift {

namespace {

const Fragment& find_fragment(std::span<const Fragment> fragments, int id) {
    for (const Fragment& f : fragments) {
        if (f.id == id) return f;
    }
    throw std::invalid_argument("unknown fragment id " + std::to_string(id));
}

const MapScorer& scorer_of(const SiftOptions& options) {
    static const DepthConsistencyScorer default_scorer;
    return options.scorer ? *options.scorer : default_scorer;
}

int max_fragment_size(std::span<const Fragment> fragments) {
    int k = 0;
    for (const Fragment& f : fragments) k = std::max(k, f.frame_count());
    return k;
}

}  // namespace

std::vector<LoopCandidate> expand_fragment_loop(const LoopCandidate& loop, std::span<const Fragment> fragments) {
    if (loop.kind != LoopKind::Fragment) {
        throw std::invalid_argument("loop " + std::to_string(loop.id) + " is not a fragment loop");
    }
    const Fragment& fa = find_fragment(fragments, loop.a);
    const Fragment& fb = find_fragment(fragments, loop.b);
    std::vector<LoopCandidate> out;
    out.reserve(fa.frame_count() + fb.frame_count());
    auto emit = [&](int from, int to, const Pose& m) {
        LoopCandidate c;
        c.id = loop.id;
        c.kind = LoopKind::Frame;
        c.a = from;
        c.b = to;
        c.measurement = m;
        c.information = loop.information;
        out.push_back(c);
    };
    for (int j = fb.first; j <= fb.last; ++j) emit(fa.reference, j, loop.measurement * fb.local_pose(j));
    const Pose inv = loop.measurement.inverse();
    for (int i = fa.first; i <= fa.last; ++i) emit(fb.reference, i, inv * fa.local_pose(i));
    return out;
}

std::vector<Edge> loop_edges(const LoopCandidate& loop, std::span<const Fragment> fragments) {
    auto to_edge = [](const LoopCandidate& c) {
        Edge e;
        e.from = c.a;
        e.to = c.b;
        e.measurement = c.measurement;
        e.information = c.information;
        e.kind = EdgeKind::Loop;
        return e;
    };
    if (loop.kind == LoopKind::Frame) return {to_edge(loop)};
    std::vector<Edge> edges;
    for (const LoopCandidate& c : expand_fragment_loop(loop, fragments)) edges.push_back(to_edge(c));
    return edges;
}

Evaluation evaluate_loops(const SiftInputs& inputs, std::span<const Edge> loops, const SiftOptions& options,
                          int scorer_threads) {
    OptimizeResult opt = optimize(inputs.graph, loops, options.optimizer);
    const SurfelMap model = assemble_model(inputs.fragments, opt.trajectory);
    Evaluation ev;
    ev.score = scorer_of(options).score(model, inputs.frames, opt.trajectory, scorer_threads);
    ev.trajectory = std::move(opt.trajectory);
    ev.converged = opt.converged;
    return ev;
}

void validate_candidates(const SiftInputs& inputs, std::span<const LoopCandidate> candidates) {
    const int nodes = static_cast<int>(inputs.graph.node_count());
    const int k = max_fragment_size(inputs.fragments);
    std::set<int> ids;
    for (const LoopCandidate& c : candidates) {
        const std::string name = "loop " + std::to_string(c.id);
        if (!ids.insert(c.id).second) throw std::invalid_argument(name + ": duplicate id");
        if (c.a == c.b) throw std::invalid_argument(name + ": endpoints are identical");
        if (c.kind == LoopKind::Frame) {
            if (c.a < 0 || c.b < 0 || c.a >= nodes || c.b >= nodes) {
                throw std::invalid_argument(name + ": endpoint outside the pose graph");
            }
            if (std::abs(c.a - c.b) <= k) {
                throw std::invalid_argument(name + ": frame gap " + std::to_string(std::abs(c.a - c.b)) +
                                            " does not exceed fragment size " + std::to_string(k));
            }
        } else {
            find_fragment(inputs.fragments, c.a);
            find_fragment(inputs.fragments, c.b);
        }
    }
}

std::vector<RankedLoop> rank_loops(const SiftInputs& inputs, std::span<const LoopCandidate> candidates,
                                   const SiftOptions& options) {
    std::vector<RankedLoop> ranked(candidates.size());
    const bool outer_parallel = options.threads > 1 && candidates.size() > 1;
    const int inner_threads = outer_parallel ? 1 : options.threads;
    parallel_for(candidates.size(), outer_parallel ? options.threads : 1, [&](std::size_t i) {
        RankedLoop& r = ranked[i];
        r.id = candidates[i].id;
        try {
            const std::vector<Edge> edges = loop_edges(candidates[i], inputs.fragments);
            const Evaluation ev = evaluate_loops(inputs, edges, options, inner_threads);
            r.score = ev.score.value;
            if (!ev.converged) {
                r.failed = true;
                r.reason = "optimizer did not converge";
            }
        } catch (const std::exception& e) {
            r.failed = true;
            r.reason = e.what();
        }
        if (r.failed) r.score = std::numeric_limits<double>::infinity();
    });
    std::stable_sort(ranked.begin(), ranked.end(), [](const RankedLoop& x, const RankedLoop& y) {
        if (x.failed != y.failed) return !x.failed;
        if (!x.failed && x.score != y.score) return x.score < y.score;
        return x.id < y.id;
    });
    return ranked;
}

SiftResult greedy_accept(const SiftInputs& inputs, std::span<const LoopCandidate> candidates,
                         std::span<const RankedLoop> ranked, const Evaluation& baseline, const SiftOptions& options) {
    SiftResult result;
    result.ranking.assign(ranked.begin(), ranked.end());
    result.baseline_score = baseline.score.value;
    result.baseline_detail = baseline.score;
    result.baseline_trajectory = baseline.trajectory;
    result.final_score = baseline.score.value;
    result.final_detail = baseline.score;
    result.final_trajectory = baseline.trajectory;

    std::vector<Edge> accepted_edges;
    int rank = 0;
    for (const RankedLoop& r : ranked) {
        TraceEntry t;
        t.loop_id = r.id;
        t.rank = rank++;
        t.single_loop_score = r.score;
        t.score_before = result.final_score;
        t.tentative_score = std::numeric_limits<double>::quiet_NaN();
        if (r.failed) {
            t.reason = "ranking failed: " + r.reason;
            result.trace.push_back(t);
            continue;
        }
        const auto it = std::find_if(candidates.begin(), candidates.end(),
                                     [&](const LoopCandidate& c) { return c.id == r.id; });
        if (it == candidates.end()) {
            t.reason = "not among the candidates";
            result.trace.push_back(t);
            continue;
        }
        try {
            std::vector<Edge> tentative = accepted_edges;
            const std::vector<Edge> extra = loop_edges(*it, inputs.fragments);
            tentative.insert(tentative.end(), extra.begin(), extra.end());
            Evaluation ev = evaluate_loops(inputs, tentative, options, options.threads);
            t.tentative_score = ev.score.value;
            if (!ev.converged) {
                t.reason = "optimizer did not converge";
            } else if (ev.score.value < result.final_score - kImprovementEpsilon * result.final_score) {
                t.accepted = true;
                accepted_edges = std::move(tentative);
                result.accepted.push_back(r.id);
                result.final_score = ev.score.value;
                result.final_detail = std::move(ev.score);
                result.final_trajectory = std::move(ev.trajectory);
            } else {
                t.reason = "no improvement";
            }
        } catch (const std::exception& e) {
            t.reason = e.what();
        }
        result.trace.push_back(t);
    }
    return result;
}

SiftResult sift(const SiftInputs& inputs, std::span<const LoopCandidate> candidates, const SiftOptions& options) {
    validate_candidates(inputs, candidates);
    const Evaluation baseline = evaluate_loops(inputs, {}, options, options.threads);
    const std::vector<RankedLoop> ranked = rank_loops(inputs, candidates, options);
    return greedy_accept(inputs, candidates, ranked, baseline, options);
}

void write_ranking_csv(std::ostream& out, const SiftResult& result) {
    const auto precision = out.precision();
    out << std::setprecision(17) << "rank,loop_id,single_loop_score,status\n";
    for (std::size_t i = 0; i < result.ranking.size(); ++i) {
        const RankedLoop& r = result.ranking[i];
        out << i << ',' << r.id << ',' << r.score << ',' << (r.failed ? "failed" : "ok") << '\n';
    }
    out.precision(precision);
}

void write_trace_csv(std::ostream& out, const SiftResult& result) {
    const auto precision = out.precision();
    out << std::setprecision(17) << "loop_id,rank,single_loop_score,tentative_score,accepted\n";
    for (const TraceEntry& t : result.trace) {
        out << t.loop_id << ',' << t.rank << ',' << t.single_loop_score << ',' << t.tentative_score << ','
            << (t.accepted ? 1 : 0) << '\n';
    }
    out.precision(precision);
}

void write_sift_report(std::ostream& out, const SiftResult& result, std::size_t candidate_count) {
    const auto precision = out.precision();
    out << std::setprecision(10);
    out << "loop sifting report\n"
        << "candidates        " << candidate_count << '\n'
        << "accepted          " << result.accepted.size() << '\n'
        << "baseline score    " << result.baseline_score << '\n'
        << "final score       " << result.final_score << '\n'
        << "accepted loop ids";
    for (int id : result.accepted) out << ' ' << id;
    out << "\n\nrank  loop_id  single_loop_score  tentative_score  decision\n";
    for (const TraceEntry& t : result.trace) {
        out << std::setw(4) << t.rank << "  " << std::setw(7) << t.loop_id << "  " << std::setw(17)
            << t.single_loop_score << "  " << std::setw(15) << t.tentative_score << "  "
            << (t.accepted ? "accepted" : "rejected: " + t.reason) << '\n';
    }
    out.precision(precision);
}

}  // namespace loopsift
