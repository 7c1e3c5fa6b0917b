#pragma once

#include <Eigen/Dense>
#include <json.hpp>

#include <string>
#include <vector>

namespace dtr {

// Per-unit features and per-unit, per-action scores to be maximized.
struct ScoredSample {
  Eigen::MatrixXd features;  // n x p
  Eigen::MatrixXd gamma;     // n x |actions|
};

// Complete binary tree of depth 1 or 2. Internal nodes are stored in
// breadth-first order; x[feature] <= value goes left. Leaves hold action
// indices, left to right.
struct PolicyTree {
  int depth = 1;
  std::vector<int> feature;
  std::vector<double> value;
  std::vector<int> leaves;

  bool operator==(const PolicyTree&) const = default;
};

// Exact maximizer of sum_i gamma[i][tree(x_i)] over all trees of the given
// depth. Candidate thresholds are midpoints between consecutive distinct
// feature values within the node, plus the node maximum (everything left).
// Ties go to the lowest feature index, then the smallest threshold, then the
// earliest action. Cost is O(p^2 n^2 |A|) for depth 2.
PolicyTree exact_tree_search(const ScoredSample& s, int depth);

std::vector<int> predict_tree(const PolicyTree& t, const Eigen::MatrixXd& features);

double tree_objective(const PolicyTree& t, const ScoredSample& s);

// {depth, nodes: [{feature, value}], leaves: [label]}
nlohmann::json tree_to_json(const PolicyTree& t, const std::vector<std::string>& actions);
PolicyTree tree_from_json(const nlohmann::json& j, const std::vector<std::string>& actions);

}  // namespace dtr
