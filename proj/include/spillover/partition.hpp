#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spillover/biclique.hpp"
#include "spillover/network.hpp"

namespace spillover {

enum class PartitionQuality { Modularity, CPM };

struct PartitionSpec {
    PartitionQuality quality = PartitionQuality::Modularity;
    double resolution = 1.0;
    double beta = 0.01;
    std::size_t iterations = 200;
    std::uint64_t seed = 0;
    void validate() const;
};

// Community labels 0..C-1, numbered by first appearance in unit order.
std::vector<int> detect_communities(const Network& net, const PartitionSpec& spec);

// Newman modularity with resolution: sum_c [ in_c / 2m - resolution * (K_c / 2m)^2 ].
double modularity(const Network& net, const std::vector<int>& labels, double resolution = 1.0);

enum class Informativeness { Density, RowSd, ColSd };

std::string to_string(Informativeness m);
Informativeness parse_informativeness(const std::string& name);

// Density = edges / (rows * cols); row-sd (col-sd) = mean population sd of row (column) entries.
double informativeness(const NullExposureGraph& ne, Informativeness metric);

struct AssignmentProblem {
    std::vector<std::vector<double>> M;  // C x (K-1)
    std::vector<double> S;               // community sizes
};

// M[c][k] = informativeness of the null exposure graph of community c at contrast (k, k+1), built
// from n_rand unconditional design draws; S[c] = community size.
AssignmentProblem informativeness_problem(const Network& net, const ExposureSpec& spec, const GeneralDesign& design,
                                          const std::vector<int>& labels, std::size_t n_rand,
                                          Informativeness metric, std::uint64_t seed);

enum class AssignmentMethod { Auto, Exact, Heuristic };

struct AssignmentResult {
    std::vector<int> hypothesis;  // per community, in [0, K-1)
    std::vector<double> scores;   // per hypothesis: sum_c A_ck M_ck S_c
    double objective = 0.0;       // min of scores
    std::string method;
};

double assignment_objective(const AssignmentProblem& problem, const std::vector<int>& hypothesis);
std::vector<std::string> check_assignment(const AssignmentProblem& problem, const std::vector<int>& hypothesis);

// Maximizes the smallest per-hypothesis score subject to every community assigned once and every
// hypothesis receiving at least one community. Exact for C <= 12 under Auto.
AssignmentResult assign_communities(const AssignmentProblem& problem, AssignmentMethod method = AssignmentMethod::Auto);

// Greedy seed used by the heuristic: each hypothesis takes its best remaining community, then the
// rest go to their best hypothesis.
std::vector<int> greedy_assignment(const AssignmentProblem& problem);

// Per-unit part index (V_1..V_K as 0..K-1) from community labels and their hypotheses.
std::vector<int> parts_from_assignment(const std::vector<int>& labels, const std::vector<int>& hypothesis);

}  // namespace spillover
