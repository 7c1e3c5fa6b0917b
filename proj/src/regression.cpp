#include "dtr/regression.hpp"

#include "dtr/error.hpp"

#include <algorithm>
#include <cmath>

namespace dtr {

double expit(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::vector<char> aliased_columns(const Eigen::MatrixXd& X, const Eigen::VectorXd* weights, double tol) {
  const Eigen::Index n = X.rows();
  const Eigen::Index p = X.cols();
  Eigen::VectorXd sw = Eigen::VectorXd::Ones(n);
  if (weights) sw = weights->cwiseSqrt();
  std::vector<char> aliased(static_cast<std::size_t>(p), 0);
  std::vector<Eigen::VectorXd> basis;
  for (Eigen::Index j = 0; j < p; ++j) {
    Eigen::VectorXd v = X.col(j).cwiseProduct(sw);
    const double norm0 = v.norm();
    if (norm0 == 0.0) {
      aliased[j] = 1;
      continue;
    }
    for (int pass = 0; pass < 2; ++pass) {
      for (const auto& q : basis) v -= q.dot(v) * q;
    }
    const double norm = v.norm();
    if (norm <= tol * norm0) {
      aliased[j] = 1;
    } else {
      basis.push_back(v / norm);
    }
  }
  return aliased;
}

namespace {

std::vector<Eigen::Index> kept_indices(const std::vector<char>& aliased) {
  std::vector<Eigen::Index> keep;
  for (std::size_t j = 0; j < aliased.size(); ++j) {
    if (!aliased[j]) keep.push_back(static_cast<Eigen::Index>(j));
  }
  return keep;
}

Eigen::MatrixXd select_columns(const Eigen::MatrixXd& X, const std::vector<Eigen::Index>& keep) {
  Eigen::MatrixXd out(X.rows(), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t j = 0; j < keep.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = X.col(keep[j]);
  return out;
}

void check_inputs(const Eigen::MatrixXd& X, Eigen::Index ny, const Eigen::VectorXd* weights) {
  if (X.rows() == 0) throw FitError("cannot fit a model on zero rows");
  if (ny != X.rows()) throw FitError("design and response lengths differ");
  if (!X.allFinite()) throw FitError("non-finite design entries");
  if (weights) {
    if (weights->size() != X.rows()) throw FitError("weight vector length differs from the design");
    for (Eigen::Index i = 0; i < weights->size(); ++i) {
      if (!std::isfinite((*weights)[i]) || (*weights)[i] < 0) throw FitError("weights must be finite and non-negative");
    }
  }
}

Eigen::VectorXd solve_symmetric(const Eigen::MatrixXd& H, const Eigen::VectorXd& s) {
  Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
  if (ldlt.info() == Eigen::Success) {
    Eigen::VectorXd d = ldlt.solve(s);
    if (d.allFinite() && (H * d - s).norm() <= 1e-6 * (s.norm() + 1e-300)) return d;
  }
  return H.completeOrthogonalDecomposition().solve(s);
}

// Log class probabilities (n x m) for the baseline-category model.
Eigen::MatrixXd log_probabilities(const Eigen::MatrixXd& X, const Eigen::MatrixXd& B) {
  const Eigen::Index n = X.rows();
  const Eigen::Index m = B.cols() + 1;
  Eigen::MatrixXd eta(n, m);
  eta.col(0).setZero();
  eta.rightCols(m - 1) = X * B;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mx = eta.row(i).maxCoeff();
    const double lse = mx + std::log((eta.row(i).array() - mx).exp().sum());
    eta.row(i).array() -= lse;
  }
  return eta;
}

double deviance(const Eigen::MatrixXd& logp, const std::vector<int>& y, const Eigen::VectorXd& w) {
  double dev = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    if (w[r] > 0) dev -= 2.0 * w[r] * logp(r, y[i]);
  }
  return dev;
}

GlmFit fit_baseline_category(const Eigen::MatrixXd& X_full, const std::vector<int>& y, int m,
                             const Eigen::VectorXd* weights) {
  check_inputs(X_full, static_cast<Eigen::Index>(y.size()), weights);
  const Eigen::Index n = X_full.rows();
  const Eigen::VectorXd w = weights ? *weights : Eigen::VectorXd::Ones(n);
  for (int v : y) {
    if (v < 0 || v >= m) throw FitError("class index out of range");
  }

  GlmFit fit;
  fit.aliased = aliased_columns(X_full, &w);
  const auto keep = kept_indices(fit.aliased);
  const Eigen::MatrixXd X = select_columns(X_full, keep);
  const Eigen::Index p = X.cols();
  const Eigen::Index q = m - 1;

  Eigen::MatrixXd Y = Eigen::MatrixXd::Zero(n, m);
  for (Eigen::Index i = 0; i < n; ++i) Y(i, y[static_cast<std::size_t>(i)]) = 1.0;

  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(p, q);
  Eigen::MatrixXd logp = log_probabilities(X, B);
  double dev = deviance(logp, y, w);

  auto score_of = [&](const Eigen::MatrixXd& P) {
    Eigen::VectorXd s(p * q);
    for (Eigen::Index c = 0; c < q; ++c) {
      s.segment(c * p, p) = X.transpose() * (w.array() * (Y.col(c + 1) - P.col(c + 1)).array()).matrix();
    }
    return s;
  };

  for (fit.iterations = 0; fit.iterations <= kIrlsMaxIter; ++fit.iterations) {
    const Eigen::MatrixXd P = logp.array().exp().matrix();
    const Eigen::VectorXd s = score_of(P);
    fit.max_score = p * q == 0 ? 0.0 : s.cwiseAbs().maxCoeff();
    if (fit.max_score < kIrlsScoreTol) {
      fit.converged = true;
      break;
    }
    if (fit.iterations == kIrlsMaxIter) break;
    Eigen::MatrixXd H(p * q, p * q);
    for (Eigen::Index c = 0; c < q; ++c) {
      for (Eigen::Index d = c; d < q; ++d) {
        Eigen::VectorXd wcd = w.array() * P.col(c + 1).array() *
                              ((c == d ? 1.0 : 0.0) - P.col(d + 1).array());
        const Eigen::MatrixXd blk = X.transpose() * wcd.asDiagonal() * X;
        H.block(c * p, d * p, p, p) = blk;
        if (d != c) H.block(d * p, c * p, p, p) = blk.transpose();
      }
    }
    const Eigen::VectorXd step = solve_symmetric(H, s);
    const Eigen::MatrixXd dB = Eigen::Map<const Eigen::MatrixXd>(step.data(), p, q);
    double t = 1.0;
    bool improved = false;
    for (int half = 0; half < 40; ++half, t *= 0.5) {
      const Eigen::MatrixXd Bn = B + t * dB;
      const Eigen::MatrixXd lpn = log_probabilities(X, Bn);
      const double devn = deviance(lpn, y, w);
      // Near the optimum the deviance change drops below rounding noise, so
      // allow a relative slack; the score test still decides convergence.
      if (std::isfinite(devn) && devn <= dev + 1e-12 * (1.0 + std::abs(dev))) {
        improved = true;
        B = Bn;
        logp = lpn;
        dev = devn;
        break;
      }
    }
    if (!improved) break;  // no descent left at working precision
  }

  // Separation diagnostics on the fitted probabilities.
  const Eigen::MatrixXd P = logp.array().exp().matrix();
  for (int c = 0; c < m; ++c) {
    bool any = false;
    bool all_certain = true;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (y[static_cast<std::size_t>(i)] != c || w[i] <= 0) continue;
      any = true;
      if (P(i, c) < 1.0 - 1e-8) all_certain = false;
    }
    if (!any || all_certain) fit.separation = true;
  }

  fit.coef = Eigen::MatrixXd::Zero(X_full.cols(), q);
  for (std::size_t j = 0; j < keep.size(); ++j) fit.coef.row(keep[j]) = B.row(static_cast<Eigen::Index>(j));
  return fit;
}

}  // namespace

LinearFit fit_ols(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::VectorXd* weights) {
  check_inputs(X, y.size(), weights);
  if (!y.allFinite()) throw FitError("non-finite response values");
  LinearFit fit;
  fit.aliased = aliased_columns(X, weights);
  const auto keep = kept_indices(fit.aliased);
  fit.coef = Eigen::VectorXd::Zero(X.cols());
  if (keep.empty()) return fit;
  Eigen::MatrixXd Xk = select_columns(X, keep);
  Eigen::VectorXd yk = y;
  if (weights) {
    const Eigen::VectorXd sw = weights->cwiseSqrt();
    Xk = sw.asDiagonal() * Xk;
    yk = sw.cwiseProduct(y);
  }
  const Eigen::VectorXd b = Xk.colPivHouseholderQr().solve(yk);
  for (std::size_t j = 0; j < keep.size(); ++j) fit.coef[keep[j]] = b[static_cast<Eigen::Index>(j)];
  return fit;
}

GlmFit fit_logistic(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::VectorXd* weights) {
  std::vector<int> cls(static_cast<std::size_t>(y.size()));
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (y[i] != 0.0 && y[i] != 1.0) throw FitError("logistic response must be 0/1");
    cls[static_cast<std::size_t>(i)] = y[i] == 1.0 ? 1 : 0;
  }
  return fit_baseline_category(X, cls, 2, weights);
}

GlmFit fit_multinomial(const Eigen::MatrixXd& X, const std::vector<int>& y, int m, const Eigen::VectorXd* weights) {
  if (m < 2) throw FitError("multinomial model needs at least two classes");
  std::vector<char> present(static_cast<std::size_t>(m), 0);
  for (int v : y) {
    if (v >= 0 && v < m) present[static_cast<std::size_t>(v)] = 1;
  }
  for (int c = 0; c < m; ++c) {
    if (!present[static_cast<std::size_t>(c)]) {
      throw FitError("class " + std::to_string(c) + " is absent from the training data");
    }
  }
  return fit_baseline_category(X, y, m, weights);
}

Eigen::MatrixXd multinomial_probabilities(const Eigen::MatrixXd& X, const Eigen::MatrixXd& coef) {
  Eigen::MatrixXd P = log_probabilities(X, coef).array().exp().matrix();
  // Renormalize so rows sum to one at working precision.
  for (Eigen::Index i = 0; i < P.rows(); ++i) P.row(i) /= P.row(i).sum();
  return P;
}

}  // namespace dtr
