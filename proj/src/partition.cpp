#include "spillover/partition.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <unordered_map>

#include "spillover/rng.hpp"

namespace spillover {

namespace {

struct WeightedGraph {
    std::vector<std::vector<std::pair<std::size_t, double>>> adj;  // no self loops
    std::vector<double> self_w;                                    // sum of A_ii over members
    std::vector<double> node_w;                                    // degree or size
    std::size_t size() const { return adj.size(); }
};

struct Quality {
    double gamma;
    double scale;  // 2m for modularity, 1 for CPM
    double penalty(double a, double b) const { return gamma * a * b / scale; }
};

// Accumulates neighbor-community weights for one node.
struct NeighborWeights {
    std::vector<double> weight;
    std::vector<std::size_t> touched;
    explicit NeighborWeights(std::size_t n) : weight(n, 0.0) {}
    void add(std::size_t c, double w) {
        if (weight[c] == 0.0) touched.push_back(c);
        weight[c] += w;
    }
    void clear() {
        for (std::size_t c : touched) weight[c] = 0.0;
        touched.clear();
    }
};

bool local_move(const WeightedGraph& g, const Quality& q, std::vector<std::size_t>& comm, Rng& rng) {
    const std::size_t n = g.size();
    std::vector<double> tot(n, 0.0);
    std::vector<std::size_t> members(n, 0);
    for (std::size_t v = 0; v < n; ++v) {
        tot[comm[v]] += g.node_w[v];
        ++members[comm[v]];
    }
    std::vector<std::size_t> empty;
    for (std::size_t c = n; c-- > 0;)
        if (members[c] == 0) empty.push_back(c);
    std::vector<std::size_t> queue(n);
    std::iota(queue.begin(), queue.end(), 0);
    std::shuffle(queue.begin(), queue.end(), rng);
    std::vector<bool> queued(n, true);
    std::size_t head = 0;
    bool changed = false;
    NeighborWeights nw(n);
    while (head < queue.size()) {
        const std::size_t v = queue[head++];
        queued[v] = false;
        const std::size_t old = comm[v];
        for (auto [u, w] : g.adj[v]) nw.add(comm[u], w);
        tot[old] -= g.node_w[v];
        --members[old];
        std::size_t best = old;
        double best_gain = nw.weight[old] - q.penalty(g.node_w[v], tot[old]);
        for (std::size_t c : nw.touched) {
            const double gain = nw.weight[c] - q.penalty(g.node_w[v], tot[c]);
            if (gain > best_gain + 1e-12) {
                best = c;
                best_gain = gain;
            }
        }
        if (best_gain < -1e-12 && members[old] > 0 && !empty.empty()) {
            best = empty.back();
            best_gain = 0.0;
        }
        nw.clear();
        if (members[old] == 0 && best != old) empty.push_back(old);
        if (best != old && !empty.empty() && empty.back() == best) empty.pop_back();
        tot[best] += g.node_w[v];
        ++members[best];
        comm[v] = best;
        if (best != old) {
            changed = true;
            for (auto [u, w] : g.adj[v]) {
                (void)w;
                if (comm[u] != best && !queued[u]) {
                    queued[u] = true;
                    queue.push_back(u);
                }
            }
        }
        if (head > n && head * 2 > queue.size()) {
            queue.erase(queue.begin(), queue.begin() + static_cast<long>(head));
            head = 0;
        }
    }
    return changed;
}

std::vector<std::size_t> refine(const WeightedGraph& g, const Quality& q, const std::vector<std::size_t>& comm,
                                double beta, Rng& rng) {
    const std::size_t n = g.size();
    std::vector<std::size_t> refined(n);
    std::iota(refined.begin(), refined.end(), 0);
    std::vector<double> r_tot = g.node_w;
    std::vector<double> c_tot(n, 0.0);
    for (std::size_t v = 0; v < n; ++v) c_tot[comm[v]] += g.node_w[v];
    // Weight from each refined community to the rest of its enclosing community.
    std::vector<double> ext(n, 0.0);
    for (std::size_t v = 0; v < n; ++v)
        for (auto [u, w] : g.adj[v])
            if (comm[u] == comm[v]) ext[v] += w;
    std::vector<bool> singleton(n, true);
    std::vector<std::vector<std::size_t>> by_comm(n);
    for (std::size_t v = 0; v < n; ++v) by_comm[comm[v]].push_back(v);
    NeighborWeights nw(n);
    std::vector<std::size_t> cand;
    std::vector<double> cand_gain;
    for (auto& nodes : by_comm) {
        if (nodes.size() < 2) continue;
        std::shuffle(nodes.begin(), nodes.end(), rng);
        for (std::size_t v : nodes) {
            if (!singleton[v]) continue;
            const std::size_t C = comm[v];
            if (ext[v] < q.penalty(g.node_w[v], c_tot[C] - g.node_w[v])) continue;
            for (auto [u, w] : g.adj[v])
                if (comm[u] == C && refined[u] != v) nw.add(refined[u], w);
            cand.assign(1, v);
            cand_gain.assign(1, 0.0);
            for (std::size_t R : nw.touched) {
                if (ext[R] < q.penalty(r_tot[R], c_tot[C] - r_tot[R])) continue;
                const double gain = nw.weight[R] - q.penalty(g.node_w[v], r_tot[R]);
                if (gain < 0.0) continue;
                cand.push_back(R);
                cand_gain.push_back(gain);
            }
            const double gmax = *std::max_element(cand_gain.begin(), cand_gain.end());
            double total = 0.0;
            for (double& x : cand_gain) {
                x = std::exp((x - gmax) / beta);
                total += x;
            }
            double u = uniform01(rng) * total;
            std::size_t pick = cand.size() - 1;
            for (std::size_t t = 0; t < cand.size(); ++t) {
                if (u < cand_gain[t]) {
                    pick = t;
                    break;
                }
                u -= cand_gain[t];
            }
            const std::size_t R = cand[pick];
            if (R != v) {
                const double k_vR = nw.weight[R];
                refined[v] = R;
                r_tot[R] += g.node_w[v];
                ext[R] = ext[R] + ext[v] - 2.0 * k_vR;
                singleton[R] = false;
                singleton[v] = false;
            }
            nw.clear();
        }
    }
    return refined;
}

WeightedGraph aggregate(const WeightedGraph& g, const std::vector<std::size_t>& group, std::size_t groups) {
    WeightedGraph a;
    a.adj.resize(groups);
    a.self_w.assign(groups, 0.0);
    a.node_w.assign(groups, 0.0);
    std::vector<std::unordered_map<std::size_t, double>> acc(groups);
    for (std::size_t v = 0; v < g.size(); ++v) {
        const std::size_t gv = group[v];
        a.self_w[gv] += g.self_w[v];
        a.node_w[gv] += g.node_w[v];
        for (auto [u, w] : g.adj[v]) {
            if (group[u] == gv)
                a.self_w[gv] += w;
            else
                acc[gv][group[u]] += w;
        }
    }
    for (std::size_t c = 0; c < groups; ++c) {
        a.adj[c].assign(acc[c].begin(), acc[c].end());
        std::sort(a.adj[c].begin(), a.adj[c].end());
    }
    return a;
}

std::vector<std::size_t> relabel(std::vector<std::size_t> labels, std::size_t& count) {
    std::vector<std::size_t> map(labels.size(), std::numeric_limits<std::size_t>::max());
    count = 0;
    for (auto& l : labels) {
        if (map[l] == std::numeric_limits<std::size_t>::max()) map[l] = count++;
        l = map[l];
    }
    return labels;
}

// One Leiden pass starting from the given labels of the base graph.
std::vector<std::size_t> leiden_pass(const WeightedGraph& base, const Quality& q, double beta,
                                     std::vector<std::size_t> labels, Rng& rng) {
    WeightedGraph g = base;
    std::vector<std::size_t> node_of(base.size());
    std::iota(node_of.begin(), node_of.end(), 0);
    std::vector<std::size_t> comm = labels;
    for (;;) {
        local_move(g, q, comm, rng);
        std::size_t ncomm = 0;
        comm = relabel(comm, ncomm);
        if (ncomm == g.size()) break;
        std::size_t nref = 0;
        auto refined = relabel(refine(g, q, comm, beta, rng), nref);
        WeightedGraph next;
        std::vector<std::size_t> next_comm(nref);
        if (nref == g.size()) {
            // Refinement kept singletons; aggregate by the coarse partition instead.
            next = aggregate(g, comm, ncomm);
            next_comm.resize(ncomm);
            std::iota(next_comm.begin(), next_comm.end(), 0);
            for (auto& x : node_of) x = comm[x];
        } else {
            next = aggregate(g, refined, nref);
            for (std::size_t v = 0; v < g.size(); ++v) next_comm[refined[v]] = comm[v];
            for (auto& x : node_of) x = refined[x];
        }
        g = std::move(next);
        comm = std::move(next_comm);
    }
    std::vector<std::size_t> out(base.size());
    for (std::size_t v = 0; v < base.size(); ++v) out[v] = comm[node_of[v]];
    return out;
}

}  // namespace

void PartitionSpec::validate() const {
    if (!(resolution > 0.0)) throw std::invalid_argument("resolution must be positive");
    if (!(beta > 0.0)) throw std::invalid_argument("beta must be positive");
    if (iterations < 1) throw std::invalid_argument("iterations must be at least 1");
}

std::vector<int> detect_communities(const Network& net, const PartitionSpec& spec) {
    spec.validate();
    const std::size_t n = net.size();
    WeightedGraph g;
    g.adj.resize(n);
    g.self_w.assign(n, 0.0);
    g.node_w.assign(n, 0.0);
    for (std::size_t v = 0; v < n; ++v) {
        for (UnitId u : net.neighbors(v)) g.adj[v].emplace_back(u, 1.0);
        g.node_w[v] = spec.quality == PartitionQuality::Modularity ? static_cast<double>(net.degree(v)) : 1.0;
    }
    const double two_m = 2.0 * static_cast<double>(net.edge_count());
    std::vector<std::size_t> labels(n);
    std::iota(labels.begin(), labels.end(), 0);
    if (n > 0 && !(spec.quality == PartitionQuality::Modularity && two_m == 0.0)) {
        const Quality q{spec.resolution, spec.quality == PartitionQuality::Modularity ? two_m : 1.0};
        Rng rng(derive_seed(spec.seed, 0x1e1d));
        for (std::size_t it = 0; it < spec.iterations; ++it) {
            auto next = leiden_pass(g, q, spec.beta, labels, rng);
            std::size_t c1 = 0, c2 = 0;
            const auto a = relabel(next, c1), b = relabel(labels, c2);
            labels = std::move(next);
            if (a == b) break;
        }
    }
    std::size_t count = 0;
    labels = relabel(labels, count);
    return std::vector<int>(labels.begin(), labels.end());
}

double modularity(const Network& net, const std::vector<int>& labels, double resolution) {
    const double two_m = 2.0 * static_cast<double>(net.edge_count());
    if (two_m == 0.0) return 0.0;
    std::unordered_map<int, double> in, tot;
    for (std::size_t v = 0; v < net.size(); ++v) {
        tot[labels[v]] += static_cast<double>(net.degree(v));
        for (UnitId u : net.neighbors(v))
            if (labels[u] == labels[v]) in[labels[v]] += 1.0;
    }
    double q = 0.0;
    for (auto [c, k] : tot) q += in[c] / two_m - resolution * (k / two_m) * (k / two_m);
    return q;
}

std::string to_string(Informativeness m) {
    switch (m) {
        case Informativeness::Density: return "density";
        case Informativeness::RowSd: return "row-sd";
        case Informativeness::ColSd: return "col-sd";
    }
    return "density";
}

Informativeness parse_informativeness(const std::string& name) {
    if (name == "density") return Informativeness::Density;
    if (name == "row-sd") return Informativeness::RowSd;
    if (name == "col-sd") return Informativeness::ColSd;
    throw std::invalid_argument("unknown informativeness metric '" + name + "'");
}

double informativeness(const NullExposureGraph& ne, Informativeness metric) {
    const std::size_t R = ne.rows(), C = ne.cols();
    if (R == 0 || C == 0) return 0.0;
    auto pop_sd = [](double ones, double total) {
        const double p = ones / total;
        return std::sqrt(p * (1.0 - p));
    };
    if (metric == Informativeness::Density)
        return static_cast<double>(ne.edge_count()) / (static_cast<double>(R) * static_cast<double>(C));
    if (metric == Informativeness::ColSd) {
        double s = 0.0;
        for (std::size_t c = 0; c < C; ++c) {
            std::size_t ones = 0;
            for (auto w : ne.column_bits(c)) ones += static_cast<std::size_t>(std::popcount(w));
            s += pop_sd(static_cast<double>(ones), static_cast<double>(R));
        }
        return s / static_cast<double>(C);
    }
    std::vector<std::size_t> ones(R, 0);
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t r = 0; r < R; ++r) ones[r] += ne.edge(r, c) ? 1 : 0;
    double s = 0.0;
    for (std::size_t r = 0; r < R; ++r) s += pop_sd(static_cast<double>(ones[r]), static_cast<double>(C));
    return s / static_cast<double>(R);
}

AssignmentProblem informativeness_problem(const Network& net, const ExposureSpec& spec, const GeneralDesign& design,
                                          const std::vector<int>& labels, std::size_t n_rand,
                                          Informativeness metric, std::uint64_t seed) {
    const std::size_t n = net.size();
    if (labels.size() != n) throw std::invalid_argument("labels do not cover every unit");
    if (spec.size() < 2) throw std::invalid_argument("need at least two exposure levels");
    int C = 0;
    for (int l : labels) {
        if (l < 0) throw std::invalid_argument("negative community label");
        C = std::max(C, l + 1);
    }
    std::vector<UnitSet> members(static_cast<std::size_t>(C));
    for (std::size_t i = 0; i < n; ++i) members[static_cast<std::size_t>(labels[i])].push_back(static_cast<UnitId>(i));
    const std::size_t hyps = spec.size() - 1;
    AssignmentProblem p;
    p.M.assign(members.size(), std::vector<double>(hyps, 0.0));
    p.S.resize(members.size());
    const PartialAssignment none(n, kFree);
    for (std::size_t c = 0; c < members.size(); ++c) {
        p.S[c] = static_cast<double>(members[c].size());
        if (members[c].empty()) continue;
        for (std::size_t k = 0; k < hyps; ++k) {
            const Contrast contrast{static_cast<int>(k), static_cast<int>(k + 1)};
            const auto ne = build_ne_graph(net, spec, design, contrast, members[c], n_rand, none, nullptr,
                                           derive_seed(seed, c, k));
            p.M[c][k] = informativeness(ne, metric);
        }
    }
    return p;
}

namespace {

std::size_t hypotheses_of(const AssignmentProblem& p) {
    if (p.M.empty()) throw std::invalid_argument("assignment problem has no communities");
    const std::size_t K = p.M.front().size();
    if (K == 0) throw std::invalid_argument("assignment problem has no hypotheses");
    if (p.S.size() != p.M.size()) throw std::invalid_argument("community sizes do not match the score matrix");
    for (const auto& row : p.M)
        if (row.size() != K) throw std::invalid_argument("score matrix rows have different lengths");
    if (p.M.size() < K) throw std::invalid_argument("fewer communities than hypotheses: assignment infeasible");
    return K;
}

std::vector<double> scores_of(const AssignmentProblem& p, const std::vector<int>& h, std::size_t K) {
    std::vector<double> s(K, 0.0);
    for (std::size_t c = 0; c < h.size(); ++c) s[static_cast<std::size_t>(h[c])] += p.M[c][static_cast<std::size_t>(h[c])] * p.S[c];
    return s;
}

bool feasible(const std::vector<int>& h, std::size_t K) {
    std::vector<std::size_t> cnt(K, 0);
    for (int k : h) ++cnt[static_cast<std::size_t>(k)];
    return std::all_of(cnt.begin(), cnt.end(), [](std::size_t c) { return c > 0; });
}

// Ascending sorted scores compared lexicographically; larger is better.
bool better(std::vector<double> a, std::vector<double> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    for (std::size_t k = 0; k < a.size(); ++k) {
        if (a[k] > b[k] + 1e-12) return true;
        if (a[k] < b[k] - 1e-12) return false;
    }
    return false;
}

AssignmentResult finish(const AssignmentProblem& p, std::vector<int> h, std::size_t K, std::string method) {
    AssignmentResult r;
    r.scores = scores_of(p, h, K);
    r.objective = *std::min_element(r.scores.begin(), r.scores.end());
    r.hypothesis = std::move(h);
    r.method = std::move(method);
    return r;
}

AssignmentResult solve_exact(const AssignmentProblem& p, std::size_t K) {
    const std::size_t C = p.M.size();
    std::vector<std::vector<double>> rest(C + 1, std::vector<double>(K, 0.0));
    for (std::size_t c = C; c-- > 0;)
        for (std::size_t k = 0; k < K; ++k) rest[c][k] = rest[c + 1][k] + std::max(0.0, p.M[c][k] * p.S[c]);
    std::vector<int> h(C), best_h;
    std::vector<double> score(K, 0.0), best_scores;
    std::vector<std::size_t> cnt(K, 0);
    double best = -std::numeric_limits<double>::infinity();
    std::function<void(std::size_t, std::size_t)> dfs = [&](std::size_t c, std::size_t empty) {
        if (empty > C - c) return;
        double bound = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < K; ++k) bound = std::min(bound, score[k] + rest[c][k]);
        if (bound < best - 1e-12) return;
        if (c == C) {
            const double obj = *std::min_element(score.begin(), score.end());
            if (best_h.empty() || obj > best + 1e-12 || (obj >= best - 1e-12 && better(score, best_scores))) {
                best = obj;
                best_h = h;
                best_scores = score;
            }
            return;
        }
        for (std::size_t k = 0; k < K; ++k) {
            h[c] = static_cast<int>(k);
            const double add = p.M[c][k] * p.S[c];
            score[k] += add;
            const std::size_t e = empty - (cnt[k] == 0 ? 1 : 0);
            ++cnt[k];
            dfs(c + 1, e);
            --cnt[k];
            score[k] -= add;
        }
    };
    dfs(0, K);
    return finish(p, best_h, K, "exact");
}

}  // namespace

double assignment_objective(const AssignmentProblem& problem, const std::vector<int>& hypothesis) {
    const std::size_t K = hypotheses_of(problem);
    const auto s = scores_of(problem, hypothesis, K);
    return *std::min_element(s.begin(), s.end());
}

std::vector<std::string> check_assignment(const AssignmentProblem& problem, const std::vector<int>& hypothesis) {
    std::vector<std::string> out;
    const std::size_t K = hypotheses_of(problem);
    if (hypothesis.size() != problem.M.size()) out.push_back("assignment length differs from community count");
    std::vector<std::size_t> cnt(K, 0);
    for (int k : hypothesis) {
        if (k < 0 || static_cast<std::size_t>(k) >= K) {
            out.push_back("hypothesis index out of range");
            continue;
        }
        ++cnt[static_cast<std::size_t>(k)];
    }
    for (std::size_t k = 0; k < K; ++k)
        if (cnt[k] == 0) out.push_back("hypothesis " + std::to_string(k) + " receives no community");
    return out;
}

std::vector<int> greedy_assignment(const AssignmentProblem& p) {
    const std::size_t K = hypotheses_of(p);
    const std::size_t C = p.M.size();
    std::vector<int> h(C, -1);
    for (std::size_t k = 0; k < K; ++k) {
        std::size_t best = C;
        for (std::size_t c = 0; c < C; ++c)
            if (h[c] < 0 && (best == C || p.M[c][k] * p.S[c] > p.M[best][k] * p.S[best])) best = c;
        h[best] = static_cast<int>(k);
    }
    for (std::size_t c = 0; c < C; ++c) {
        if (h[c] >= 0) continue;
        std::size_t best = 0;
        for (std::size_t k = 1; k < K; ++k)
            if (p.M[c][k] > p.M[c][best]) best = k;
        h[c] = static_cast<int>(best);
    }
    return h;
}

namespace {

// Relocations and pairwise swaps until neither improves the sorted score vector.
std::vector<double> local_search(const AssignmentProblem& problem, std::vector<int>& h, std::size_t K) {
    const std::size_t C = h.size();
    auto val = [&](std::size_t c, int k) { return problem.M[c][static_cast<std::size_t>(k)] * problem.S[c]; };
    auto cur = scores_of(problem, h, K);
    std::vector<std::size_t> count(K, 0);
    for (int k : h) ++count[static_cast<std::size_t>(k)];
    bool improved = true;
    while (improved) {
        improved = false;
        for (std::size_t c = 0; c < C && !improved; ++c) {
            const int from = h[c];
            if (count[static_cast<std::size_t>(from)] < 2) continue;
            for (std::size_t k = 0; k < K; ++k) {
                if (static_cast<int>(k) == from) continue;
                auto s = cur;
                s[static_cast<std::size_t>(from)] -= val(c, from);
                s[k] += val(c, static_cast<int>(k));
                if (better(s, cur)) {
                    cur = std::move(s);
                    --count[static_cast<std::size_t>(from)];
                    ++count[k];
                    h[c] = static_cast<int>(k);
                    improved = true;
                    break;
                }
            }
        }
        for (std::size_t a = 0; a < C && !improved; ++a) {
            for (std::size_t b = a + 1; b < C && !improved; ++b) {
                const int ka = h[a], kb = h[b];
                if (ka == kb) continue;
                auto s = cur;
                s[static_cast<std::size_t>(ka)] += val(b, ka) - val(a, ka);
                s[static_cast<std::size_t>(kb)] += val(a, kb) - val(b, kb);
                if (better(s, cur)) {
                    cur = std::move(s);
                    std::swap(h[a], h[b]);
                    improved = true;
                }
            }
        }
    }
    return scores_of(problem, h, K);
}

constexpr std::size_t kPerturbRounds = 256;
constexpr std::uint64_t kPerturbSeed = 0x5a4d;

}  // namespace

AssignmentResult assign_communities(const AssignmentProblem& problem, AssignmentMethod method) {
    const std::size_t K = hypotheses_of(problem);
    const std::size_t C = problem.M.size();
    if (method == AssignmentMethod::Exact || (method == AssignmentMethod::Auto && C <= 12)) return solve_exact(problem, K);

    std::vector<int> best = greedy_assignment(problem);
    auto best_s = local_search(problem, best, K);
    // Iterated local search: reassign a few random communities of the incumbent and descend again.
    Rng rng(kPerturbSeed);
    if (K > 1) {
        for (std::size_t r = 0; r < kPerturbRounds; ++r) {
            std::vector<int> h = best;
            const std::size_t kicks = 1 + r % C;
            for (std::size_t t = 0; t < kicks; ++t) h[rng() % C] = static_cast<int>(rng() % K);
            if (!feasible(h, K)) continue;
            auto s = local_search(problem, h, K);
            if (better(s, best_s)) {
                best = std::move(h);
                best_s = std::move(s);
            }
        }
    }
    return finish(problem, best, K, "greedy-swap");
}

std::vector<int> parts_from_assignment(const std::vector<int>& labels, const std::vector<int>& hypothesis) {
    std::vector<int> part(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int c = labels[i];
        if (c < 0 || static_cast<std::size_t>(c) >= hypothesis.size())
            throw std::invalid_argument("community label without an assigned hypothesis");
        part[i] = hypothesis[static_cast<std::size_t>(c)];
    }
    return part;
}

}  // namespace spillover
