#pragma once

#include "dtr/csv.hpp"
#include "dtr/data_model.hpp"
#include "dtr/policy.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>

namespace dtr {

// Single-stage model:
//   Z, L ~ N(0, 1), B ~ Bernoulli(pi)
//   A | Z, L, B ~ Bernoulli(expit(kappa * Z^-2 * (Z + L - 1) + delta * B))
//   U | Z, L, A ~ N(Z + L + A * (gamma * Z + alpha * L + beta), sigma^2)
struct SingleStageParams {
  double pi = 0.3;
  double kappa = 0.1;
  double delta = 0.5;
  double alpha = 1.0;
  double beta = -2.5;
  double gamma = 3.0;
  double sigma = 1.0;

  void validate() const;
  // Keys p, k, d, a, b, c, s.
  nlohmann::json to_json() const;
  static SingleStageParams from_json(const nlohmann::json& j);
};

// Two-stage model:
//   L_1 ~ N(0, 1), C_1 | L_1 ~ N(L_1, 1), A_1 | C_1 ~ Bernoulli(expit(beta * C_1))
//   L_2 ~ N(0, 1), C_2 | A_1, L_1 ~ N(gamma * L_1 + A_1, 1), A_2 | C_2 ~ Bernoulli(expit(beta * C_2))
//   L_3 ~ N(0, 1)
//   U_1 = L_1, U_2 = A_1 * C_1 + L_2, U_3 = A_2 * C_2 + L_3
struct TwoStageParams {
  double gamma = 0.5;
  double beta = 1.0;

  void validate() const;
  nlohmann::json to_json() const;
  static TwoStageParams from_json(const nlohmann::json& j);
};

// |Z| is clamped below at this value inside Z^-2.
inline constexpr double kZClamp = 1e-3;

struct Simulated {
  Table table;
  PolicyData data;
  std::size_t clamped = 0;  // draws where the Z clamp was active
};

// Subject i draws from its own stream keyed by (seed, i), so any n-prefix of a
// larger simulation is identical. A forced policy replaces the propensity
// draws (which are still consumed) with the policy's actions.
Simulated sim_single_stage(std::size_t n, std::uint64_t seed, const SingleStageParams& p = {},
                           const Policy* forced = nullptr);
Simulated sim_two_stage(std::size_t n, std::uint64_t seed, const TwoStageParams& p = {},
                        const Policy* forced = nullptr);

// Wide-layout specs matching the simulated tables.
WideSpec single_stage_spec();
WideSpec two_stage_spec();

// Adds the propensity feature F = (Z + L - 1) / max(|Z|, 1e-3)^2 as a state
// covariate, so a logistic g-model "~F+B" is correctly specified.
PolicyData with_propensity_feature(const Simulated& single_stage);

// kappa(mu) = E[I{X > 0} X] for X ~ N(mu, 1).
double kappa(double mu);

// I{gamma Z + alpha L + beta > 0}.
Policy optimal_policy_single(const SingleStageParams& p = {});
// Stage 1: I{C_1 + kappa(gamma L_1 + 1) - kappa(gamma L_1) > 0}; stage 2: I{C_2 > 0}.
Policy optimal_policy_two_stage(const TwoStageParams& p = {});

// E[max(0, N(beta, gamma^2 + alpha^2))]: the single-stage optimal value.
double optimal_value_single(const SingleStageParams& p = {});

enum class Dgp { Single, Two };

struct McValue {
  double value = 0.0;
  double std_error = 0.0;
};

// Mean utility when actions are forced to the policy, and its Monte Carlo standard error.
McValue mc_value_oracle(Dgp dgp, const Policy& policy, std::size_t n_mc, std::uint64_t seed,
                        const SingleStageParams& single = {}, const TwoStageParams& two = {});

}  // namespace dtr
