#include "dtr/error.hpp"
#include "dtr/regression.hpp"

#include "newton_oracle.hpp"

#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

using namespace dtr;

namespace {

using oracle::Mat;
using oracle::newton_oracle;

struct Fixture {
  Mat rows;
  Eigen::MatrixXd X;
  std::vector<int> y;
  std::vector<double> w;
};

Fixture make_fixture(std::uint32_t seed, std::size_t n, int m, bool weighted) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  Fixture f;
  f.X.resize(static_cast<Eigen::Index>(n), 3);
  for (std::size_t i = 0; i < n; ++i) {
    const double x1 = nd(gen), x2 = nd(gen);
    f.rows.push_back({1.0, x1, x2});
    f.X.row(static_cast<Eigen::Index>(i)) << 1.0, x1, x2;
    std::vector<double> eta{0.0};
    for (int c = 1; c < m; ++c) eta.push_back(0.3 * c - 0.8 * x1 * c + 0.5 * x2);
    double denom = 0.0;
    for (double e : eta) denom += std::exp(e);
    double u = ud(gen) * denom;
    int cls = 0;
    for (; cls < m - 1; ++cls) {
      u -= std::exp(eta[static_cast<std::size_t>(cls)]);
      if (u <= 0) break;
    }
    f.y.push_back(cls);
    f.w.push_back(weighted ? 0.5 + ud(gen) : 1.0);
  }
  return f;
}

}  // namespace

TEST_SUITE("regression") {

TEST_CASE("logistic IRLS matches an independent Newton oracle") {
  for (bool weighted : {false, true}) {
    const auto f = make_fixture(weighted ? 5 : 4, 400, 2, weighted);
    Eigen::VectorXd y(static_cast<Eigen::Index>(f.y.size()));
    for (std::size_t i = 0; i < f.y.size(); ++i) y[static_cast<Eigen::Index>(i)] = f.y[i];
    const Eigen::VectorXd w = Eigen::Map<const Eigen::VectorXd>(f.w.data(), static_cast<Eigen::Index>(f.w.size()));
    const auto fit = fit_logistic(f.X, y, weighted ? &w : nullptr);
    const auto oracle = newton_oracle(f.rows, f.y, 2, f.w);
    CHECK(fit.converged);
    CHECK_FALSE(fit.separation);
    for (int j = 0; j < 3; ++j) CHECK(std::abs(fit.coef(j, 0) - oracle[static_cast<std::size_t>(j)]) < 1e-6);
  }
}

TEST_CASE("multinomial matches the Newton oracle and rows sum to one") {
  const auto f = make_fixture(9, 600, 3, true);
  const Eigen::VectorXd w = Eigen::Map<const Eigen::VectorXd>(f.w.data(), static_cast<Eigen::Index>(f.w.size()));
  const auto fit = fit_multinomial(f.X, f.y, 3, &w);
  const auto oracle = newton_oracle(f.rows, f.y, 3, f.w);
  CHECK(fit.converged);
  for (int c = 0; c < 2; ++c) {
    for (int j = 0; j < 3; ++j) CHECK(std::abs(fit.coef(j, c) - oracle[static_cast<std::size_t>(c * 3 + j)]) < 1e-6);
  }
  const Eigen::MatrixXd P = multinomial_probabilities(f.X, fit.coef);
  for (Eigen::Index i = 0; i < P.rows(); ++i) {
    CHECK(std::abs(P.row(i).sum() - 1.0) <= 1e-12);
    CHECK(P.row(i).minCoeff() >= 0.0);
  }
}

TEST_CASE("binary multinomial equals logistic") {
  const auto f = make_fixture(12, 300, 2, false);
  Eigen::VectorXd y(static_cast<Eigen::Index>(f.y.size()));
  for (std::size_t i = 0; i < f.y.size(); ++i) y[static_cast<Eigen::Index>(i)] = f.y[i];
  CHECK((fit_multinomial(f.X, f.y, 2).coef - fit_logistic(f.X, y).coef).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("OLS satisfies the normal equations") {
  std::mt19937_64 gen(21);
  std::normal_distribution<double> nd;
  const Eigen::Index n = 500;
  Eigen::MatrixXd X(n, 4);
  Eigen::VectorXd y(n), w(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    X.row(i) << 1.0, nd(gen), nd(gen) * 100.0, nd(gen) * 1e-3;
    y[i] = 2.0 + X(i, 1) - 0.01 * X(i, 2) + 300.0 * X(i, 3) + nd(gen);
    w[i] = 0.1 + std::abs(nd(gen));
  }
  const std::vector<const Eigen::VectorXd*> weightings{nullptr, &w};
  for (const Eigen::VectorXd* wp : weightings) {
    const auto fit = fit_ols(X, y, wp);
    const Eigen::VectorXd ww = wp ? *wp : Eigen::VectorXd::Ones(n);
    const Eigen::VectorXd r = y - X * fit.coef;
    const Eigen::VectorXd ne = X.transpose() * ww.cwiseProduct(r);
    for (Eigen::Index j = 0; j < 4; ++j) {
      CHECK(std::abs(ne[j]) / (X.col(j).norm() * r.norm()) < 1e-8);
    }
  }
}

TEST_CASE("aliased columns are detected and carry zero coefficients") {
  std::mt19937_64 gen(2);
  std::normal_distribution<double> nd;
  const Eigen::Index n = 50;
  Eigen::MatrixXd X(n, 5);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double a = nd(gen), b = nd(gen);
    X.row(i) << 1.0, a, 2.0 * a - 1.0, b, 0.0;
    y[i] = a + b + nd(gen);
  }
  CHECK(aliased_columns(X) == std::vector<char>{0, 0, 1, 0, 1});
  const auto fit = fit_ols(X, y);
  CHECK(fit.coef[2] == 0.0);
  CHECK(fit.coef[4] == 0.0);
  Eigen::VectorXd yb(n);
  for (Eigen::Index i = 0; i < n; ++i) yb[i] = i % 3 == 0;
  const auto lf = fit_logistic(X, yb);
  CHECK(lf.aliased == std::vector<char>{0, 0, 1, 0, 1});
  CHECK(lf.coef(2, 0) == 0.0);
}

TEST_CASE("complete separation is flagged") {
  Eigen::MatrixXd X(6, 2);
  X << 1, -3, 1, -2, 1, -1, 1, 1, 1, 2, 1, 3;
  Eigen::VectorXd y(6);
  y << 0, 0, 0, 1, 1, 1;
  CHECK(fit_logistic(X, y).separation);
}

TEST_CASE("input validation") {
  Eigen::MatrixXd X(3, 1);
  X << 1, 1, 1;
  Eigen::VectorXd y(3);
  y << 0, 2, 1;
  CHECK_THROWS_AS(fit_logistic(X, y), FitError);
  CHECK_THROWS_AS(fit_multinomial(X, {0, 0, 1}, 3), FitError);
  CHECK_THROWS_AS(fit_ols(Eigen::MatrixXd(0, 1), Eigen::VectorXd(0)), FitError);
  CHECK(expit(0.0) == 0.5);
  CHECK(expit(-800.0) >= 0.0);
  CHECK(expit(800.0) == 1.0);
}

}
