#include "dtr/tree.hpp"

#include "dtr/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace dtr {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Improvement must exceed accumulated rounding noise to displace an earlier candidate.
bool improves(double obj, double best) { return obj > best + 1e-10 * (1.0 + std::abs(best)); }

struct Stump {
  double obj = kNegInf;
  int feature = 0;
  double value = 0.0;
  int left = 0;
  int right = 0;
};

std::pair<double, int> best_action(const Eigen::VectorXd& sums) {
  int a = 0;
  for (int b = 1; b < sums.size(); ++b) {
    if (improves(sums[b], sums[a])) a = b;
  }
  return {sums[a], a};
}

double midpoint(double lo, double hi) {
  const double mid = lo + (hi - lo) / 2.0;
  return mid < hi ? mid : lo;
}

class Searcher {
 public:
  explicit Searcher(const ScoredSample& s) : X_(s.features), n_(s.gamma.rows()), p_(s.features.cols()), m_(s.gamma.cols()) {
    if (n_ < 1 || p_ < 1 || m_ < 1) throw ValueError("tree search needs n >= 1, p >= 1 and at least one action");
    if (s.features.rows() != n_) throw ValueError("feature and score rows differ");
    if (!s.features.allFinite() || !s.gamma.allFinite()) throw ValueError("tree search inputs must be finite");
    // Scores relative to the first action: the argmax tree is unchanged and
    // sample-level shifts cancel exactly.
    G_ = s.gamma.colwise() - s.gamma.col(0);
    order_.resize(static_cast<std::size_t>(p_));
    for (Eigen::Index j = 0; j < p_; ++j) {
      auto& o = order_[static_cast<std::size_t>(j)];
      o.resize(static_cast<std::size_t>(n_));
      std::iota(o.begin(), o.end(), Eigen::Index{0});
      std::stable_sort(o.begin(), o.end(), [&](Eigen::Index a, Eigen::Index b) { return X_(a, j) < X_(b, j); });
    }
  }

  Stump stump(const std::vector<char>& member, Eigen::Index count, double empty_value) const {
    Stump best;
    if (count == 0) {
      best.obj = 0.0;
      best.value = empty_value;
      return best;
    }
    Eigen::VectorXd total = Eigen::VectorXd::Zero(m_);
    for (Eigen::Index i = 0; i < n_; ++i) {
      if (member[static_cast<std::size_t>(i)]) total += G_.row(i).transpose();
    }
    for (Eigen::Index j = 0; j < p_; ++j) {
      const auto& o = order_[static_cast<std::size_t>(j)];
      Eigen::VectorXd prefix = Eigen::VectorXd::Zero(m_);
      Eigen::Index prev = -1;
      for (Eigen::Index r = 0; r < n_; ++r) {
        const Eigen::Index i = o[static_cast<std::size_t>(r)];
        if (!member[static_cast<std::size_t>(i)]) continue;
        if (prev >= 0 && X_(i, j) > X_(prev, j)) consider(best, j, midpoint(X_(prev, j), X_(i, j)), prefix, total);
        prefix += G_.row(i).transpose();
        prev = i;
      }
      consider(best, j, X_(prev, j), total, total);  // everything left
    }
    return best;
  }

  PolicyTree depth1() const {
    std::vector<char> all(static_cast<std::size_t>(n_), 1);
    const Stump s = stump(all, n_, 0.0);
    return PolicyTree{1, {s.feature}, {s.value}, {s.left, s.right}};
  }

  PolicyTree depth2() const {
    double best_obj = kNegInf;
    PolicyTree best;
    auto consider_root = [&](Eigen::Index j, double value, const std::vector<char>& left, Eigen::Index nl,
                             const std::vector<char>& right) {
      const Stump l = stump(left, nl, value);
      const Stump r = stump(right, n_ - nl, value);
      const double obj = l.obj + r.obj;
      if (best_obj == kNegInf || improves(obj, best_obj)) {
        best_obj = obj;
        best = PolicyTree{2,
                          {static_cast<int>(j), l.feature, r.feature},
                          {value, l.value, r.value},
                          {l.left, l.right, r.left, r.right}};
      }
    };
    for (Eigen::Index j = 0; j < p_; ++j) {
      const auto& o = order_[static_cast<std::size_t>(j)];
      std::vector<char> left(static_cast<std::size_t>(n_), 0);
      std::vector<char> right(static_cast<std::size_t>(n_), 1);
      for (Eigen::Index r = 0; r + 1 < n_; ++r) {
        const Eigen::Index i = o[static_cast<std::size_t>(r)];
        left[static_cast<std::size_t>(i)] = 1;
        right[static_cast<std::size_t>(i)] = 0;
        const Eigen::Index next = o[static_cast<std::size_t>(r + 1)];
        if (X_(next, j) > X_(i, j)) consider_root(j, midpoint(X_(i, j), X_(next, j)), left, r + 1, right);
      }
      std::vector<char> all(static_cast<std::size_t>(n_), 1);
      std::vector<char> none(static_cast<std::size_t>(n_), 0);
      consider_root(j, X_(o.back(), j), all, n_, none);
    }
    return best;
  }

 private:
  void consider(Stump& best, Eigen::Index j, double value, const Eigen::VectorXd& left,
                const Eigen::VectorXd& total) const {
    const auto [lv, la] = best_action(left);
    const auto [rv, ra] = best_action(total - left);
    const double obj = lv + rv;
    if (best.obj == kNegInf || improves(obj, best.obj)) best = Stump{obj, static_cast<int>(j), value, la, ra};
  }

  const Eigen::MatrixXd& X_;
  Eigen::MatrixXd G_;
  Eigen::Index n_, p_, m_;
  std::vector<std::vector<Eigen::Index>> order_;
};

}  // namespace

PolicyTree exact_tree_search(const ScoredSample& s, int depth) {
  if (depth != 1 && depth != 2) throw RangeError("tree depth must be 1 or 2");
  Searcher searcher(s);
  return depth == 1 ? searcher.depth1() : searcher.depth2();
}

std::vector<int> predict_tree(const PolicyTree& t, const Eigen::MatrixXd& features) {
  const auto max_feature = *std::max_element(t.feature.begin(), t.feature.end());
  if (max_feature >= features.cols()) throw SchemaError("tree references a feature beyond the supplied columns");
  std::vector<int> out(static_cast<std::size_t>(features.rows()));
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    const bool go_left = features(i, t.feature[0]) <= t.value[0];
    if (t.depth == 1) {
      out[static_cast<std::size_t>(i)] = t.leaves[go_left ? 0 : 1];
    } else {
      const std::size_t node = go_left ? 1 : 2;
      const bool left2 = features(i, t.feature[node]) <= t.value[node];
      out[static_cast<std::size_t>(i)] = t.leaves[(go_left ? 0 : 2) + (left2 ? 0 : 1)];
    }
  }
  return out;
}

double tree_objective(const PolicyTree& t, const ScoredSample& s) {
  const auto acts = predict_tree(t, s.features);
  double obj = 0.0;
  for (std::size_t i = 0; i < acts.size(); ++i) obj += s.gamma(static_cast<Eigen::Index>(i), acts[i]);
  return obj;
}

nlohmann::json tree_to_json(const PolicyTree& t, const std::vector<std::string>& actions) {
  nlohmann::json nodes = nlohmann::json::array();
  for (std::size_t k = 0; k < t.feature.size(); ++k) nodes.push_back({{"feature", t.feature[k]}, {"value", t.value[k]}});
  nlohmann::json leaves = nlohmann::json::array();
  for (int a : t.leaves) leaves.push_back(actions.at(static_cast<std::size_t>(a)));
  return {{"depth", t.depth}, {"nodes", nodes}, {"leaves", leaves}};
}

PolicyTree tree_from_json(const nlohmann::json& j, const std::vector<std::string>& actions) {
  try {
    PolicyTree t;
    t.depth = j.at("depth").get<int>();
    if (t.depth != 1 && t.depth != 2) throw FormatError("tree depth must be 1 or 2");
    for (const auto& node : j.at("nodes")) {
      t.feature.push_back(node.at("feature").get<int>());
      t.value.push_back(node.at("value").get<double>());
    }
    for (const auto& leaf : j.at("leaves")) {
      const auto label = leaf.get<std::string>();
      auto it = std::find(actions.begin(), actions.end(), label);
      if (it == actions.end()) throw FormatError("tree leaf action '" + label + "' is not in the action list");
      t.leaves.push_back(static_cast<int>(it - actions.begin()));
    }
    const std::size_t internal = t.depth == 1 ? 1 : 3;
    if (t.feature.size() != internal || t.leaves.size() != 2 * (t.depth == 1 ? 1u : 2u)) {
      throw FormatError("tree node/leaf counts do not match its depth");
    }
    for (int f : t.feature) {
      if (f < 0) throw FormatError("negative tree feature index");
    }
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed tree: ") + e.what());
  }
}

}  // namespace dtr
