#pragma once

#include <Eigen/Dense>

#include <vector>

namespace dtr {

// Columns whose (weighted) Gram-Schmidt residual against the kept columns to
// their left is at most tol relative to their own norm are aliased.
std::vector<char> aliased_columns(const Eigen::MatrixXd& X, const Eigen::VectorXd* weights = nullptr,
                                  double tol = 1e-10);

struct LinearFit {
  Eigen::VectorXd coef;     // aliased columns carry 0
  std::vector<char> aliased;
};

LinearFit fit_ols(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::VectorXd* weights = nullptr);

struct GlmFit {
  // Coefficients, one column per non-baseline class (a single column for the
  // binary logistic model). Aliased rows are zero.
  Eigen::MatrixXd coef;
  std::vector<char> aliased;
  int iterations = 0;
  bool converged = false;
  // Some class is fitted with probability >= 1 - 1e-8 on all of its rows, or
  // has no rows at all.
  bool separation = false;
  double max_score = 0.0;
};

constexpr int kIrlsMaxIter = 100;
constexpr double kIrlsScoreTol = 1e-8;

// y in {0, 1}.
GlmFit fit_logistic(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::VectorXd* weights = nullptr);

// Baseline-category logit; y holds class indices 0..m-1, class 0 is the baseline.
// Every class must be present (FitError otherwise).
GlmFit fit_multinomial(const Eigen::MatrixXd& X, const std::vector<int>& y, int m,
                       const Eigen::VectorXd* weights = nullptr);

// n x m class probabilities for a baseline-category coefficient matrix (p x (m-1)).
Eigen::MatrixXd multinomial_probabilities(const Eigen::MatrixXd& X, const Eigen::MatrixXd& coef);

double expit(double x);

}  // namespace dtr
