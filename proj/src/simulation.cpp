#include "dtr/simulation.hpp"

#include "dtr/error.hpp"
#include "dtr/regression.hpp"
#include "dtr/rng.hpp"

#include <algorithm>
#include <cmath>

namespace dtr {

using nlohmann::json;

namespace {

const std::vector<std::string> kBinary{"0", "1"};

double param(const json& j, const char* key, double fallback) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_number()) throw ConfigError(std::string("parameter '") + key + "' must be a number");
  return j.at(key).get<double>();
}

void check_keys(const json& j, const std::vector<std::string>& known) {
  if (!j.is_object()) throw ConfigError("simulation parameters must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) throw ConfigError("unknown parameter '" + key + "'");
  }
}

VariableInfo numeric_var(std::string name) { return VariableInfo{std::move(name), ColumnKind::Numeric, {}}; }

// Histories for a batch whose stage-k actions are still to be decided. The
// stage-k action slot holds a placeholder that histories never read.
std::vector<std::string> forced_actions(const Policy& policy, int k, std::vector<Trajectory> trajs,
                                        const std::vector<std::string>& state_names) {
  std::vector<VariableInfo> vars;
  for (const auto& v : state_names) vars.push_back(numeric_var(v));
  std::vector<std::vector<std::string>> covs(static_cast<std::size_t>(k), state_names);
  for (auto& t : trajs) t.stages.back().action = kBinary.front();
  const PolicyData pd(std::move(trajs), kBinary, vars, {}, covs);
  const auto& rule = policy.rule(k);
  const auto h = get_history(pd, k, rule.history());
  if (!policy.realistic || policy.realistic->alpha == 0.0) return apply_rule_rows(policy, k, h, h);
  return apply_rule_rows(policy, k, h, get_history(pd, k, policy.realistic->g.stage_model(k).history()));
}

struct SingleDraws {
  std::vector<double> Z, L, B, A, U;
  std::size_t clamped = 0;
};

SingleDraws draw_single(std::size_t first, std::size_t n, std::uint64_t seed, const SingleStageParams& p,
                        const Policy* forced) {
  SingleDraws d;
  const std::uint64_t key = split_seed(seed, "single-stage");
  std::vector<double> uA(n), eU(n);
  for (std::size_t i = 0; i < n; ++i) {
    RandomStream rs(key, first + i);
    d.Z.push_back(rs.normal());
    d.L.push_back(rs.normal());
    d.B.push_back(rs.uniform() < p.pi ? 1.0 : 0.0);
    uA[i] = rs.uniform();
    eU[i] = rs.normal();
  }
  std::vector<std::string> forced_a;
  if (forced) {
    std::vector<Trajectory> trajs(n);
    for (std::size_t i = 0; i < n; ++i) {
      trajs[i].id = std::to_string(first + i + 1);
      StageRecord s;
      s.state = {{"Z", d.Z[i]}, {"B", d.B[i]}, {"L", d.L[i]}};
      trajs[i].stages.push_back(std::move(s));
    }
    forced_a = forced_actions(*forced, 1, std::move(trajs), {"Z", "B", "L"});
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double z = d.Z[i];
    double az = std::abs(z);
    if (az < kZClamp) {
      az = kZClamp;
      ++d.clamped;
    }
    const double lp = p.kappa * (z + d.L[i] - 1.0) / (az * az) + p.delta * d.B[i];
    double a = uA[i] < expit(lp) ? 1.0 : 0.0;
    if (forced) a = forced_a[i] == "1" ? 1.0 : 0.0;
    d.A.push_back(a);
    d.U.push_back(z + d.L[i] + a * (p.gamma * z + p.alpha * d.L[i] + p.beta) + p.sigma * eU[i]);
  }
  return d;
}

struct TwoDraws {
  std::vector<double> L1, C1, A1, L2, C2, A2, L3;
};

TwoDraws draw_two(std::size_t first, std::size_t n, std::uint64_t seed, const TwoStageParams& p, const Policy* forced) {
  TwoDraws d;
  const std::uint64_t key = split_seed(seed, "two-stage");
  std::vector<double> uA1(n), eC2(n), uA2(n);
  for (std::size_t i = 0; i < n; ++i) {
    RandomStream rs(key, first + i);
    d.L1.push_back(rs.normal());
    d.C1.push_back(d.L1[i] + rs.normal());
    uA1[i] = rs.uniform();
    d.L2.push_back(rs.normal());
    eC2[i] = rs.normal();
    uA2[i] = rs.uniform();
    d.L3.push_back(rs.normal());
  }
  std::vector<Trajectory> trajs(n);
  for (std::size_t i = 0; i < n; ++i) {
    trajs[i].id = std::to_string(first + i + 1);
    StageRecord s;
    s.state = {{"L", d.L1[i]}, {"C", d.C1[i]}};
    s.reward = d.L1[i];
    trajs[i].stages.push_back(std::move(s));
  }
  std::vector<std::string> f1;
  if (forced) f1 = forced_actions(*forced, 1, trajs, {"L", "C"});
  for (std::size_t i = 0; i < n; ++i) {
    d.A1.push_back(forced ? (f1[i] == "1" ? 1.0 : 0.0) : (uA1[i] < expit(p.beta * d.C1[i]) ? 1.0 : 0.0));
    d.C2.push_back(p.gamma * d.L1[i] + d.A1[i] + eC2[i]);
  }
  std::vector<std::string> f2;
  if (forced) {
    for (std::size_t i = 0; i < n; ++i) {
      trajs[i].stages.front().action = d.A1[i] == 1.0 ? "1" : "0";
      StageRecord s;
      s.stage = 2;
      s.state = {{"L", d.L2[i]}, {"C", d.C2[i]}};
      s.reward = d.A1[i] * d.C1[i] + d.L2[i];
      trajs[i].stages.push_back(std::move(s));
    }
    f2 = forced_actions(*forced, 2, std::move(trajs), {"L", "C"});
  }
  for (std::size_t i = 0; i < n; ++i) {
    d.A2.push_back(forced ? (f2[i] == "1" ? 1.0 : 0.0) : (uA2[i] < expit(p.beta * d.C2[i]) ? 1.0 : 0.0));
  }
  return d;
}

std::string action_label(double a) { return a == 1.0 ? "1" : "0"; }

}  // namespace

void SingleStageParams::validate() const {
  for (double v : {pi, kappa, delta, alpha, beta, gamma, sigma}) {
    if (!std::isfinite(v)) throw RangeError("simulation parameters must be finite");
  }
  if (!(sigma > 0.0)) throw RangeError("sigma must be positive");
  if (pi < 0.0 || pi > 1.0) throw RangeError("pi must lie in [0, 1]");
}

json SingleStageParams::to_json() const {
  return {{"p", pi}, {"k", kappa}, {"d", delta}, {"a", alpha}, {"b", beta}, {"c", gamma}, {"s", sigma}};
}

SingleStageParams SingleStageParams::from_json(const json& j) {
  check_keys(j, {"p", "k", "d", "a", "b", "c", "s"});
  SingleStageParams p;
  p.pi = param(j, "p", p.pi);
  p.kappa = param(j, "k", p.kappa);
  p.delta = param(j, "d", p.delta);
  p.alpha = param(j, "a", p.alpha);
  p.beta = param(j, "b", p.beta);
  p.gamma = param(j, "c", p.gamma);
  p.sigma = param(j, "s", p.sigma);
  p.validate();
  return p;
}

void TwoStageParams::validate() const {
  if (!std::isfinite(gamma) || !std::isfinite(beta)) throw RangeError("simulation parameters must be finite");
}

json TwoStageParams::to_json() const { return {{"gamma", gamma}, {"beta", beta}}; }

TwoStageParams TwoStageParams::from_json(const json& j) {
  check_keys(j, {"gamma", "beta"});
  TwoStageParams p;
  p.gamma = param(j, "gamma", p.gamma);
  p.beta = param(j, "beta", p.beta);
  p.validate();
  return p;
}

WideSpec single_stage_spec() {
  WideSpec s;
  s.action_cols = {"A"};
  s.covariates = {{"Z", {"Z"}}, {"B", {"B"}}, {"L", {"L"}}};
  s.utility_cols = {"U"};
  s.action_set = kBinary;
  return s;
}

WideSpec two_stage_spec() {
  WideSpec s;
  s.action_cols = {"A_1", "A_2"};
  s.covariates = {{"L", {"L_1", "L_2"}}, {"C", {"C_1", "C_2"}}};
  s.utility_cols = {"U_1", "U_2", "U_3"};
  s.action_set = kBinary;
  return s;
}

Simulated sim_single_stage(std::size_t n, std::uint64_t seed, const SingleStageParams& p, const Policy* forced) {
  if (n < 1) throw RangeError("n must be at least 1");
  p.validate();
  const auto d = draw_single(0, n, seed, p, forced);
  Table t;
  t.header = {"Z", "L", "B", "A", "U"};
  for (std::size_t i = 0; i < n; ++i) {
    t.rows.push_back({format_number(d.Z[i]), format_number(d.L[i]), format_number(d.B[i]), action_label(d.A[i]),
                      format_number(d.U[i])});
  }
  auto pd = ingest_wide(t, single_stage_spec());
  return Simulated{std::move(t), std::move(pd), d.clamped};
}

Simulated sim_two_stage(std::size_t n, std::uint64_t seed, const TwoStageParams& p, const Policy* forced) {
  if (n < 1) throw RangeError("n must be at least 1");
  p.validate();
  const auto d = draw_two(0, n, seed, p, forced);
  Table t;
  t.header = {"L_1", "C_1", "A_1", "L_2", "C_2", "A_2", "L_3", "U_1", "U_2", "U_3"};
  for (std::size_t i = 0; i < n; ++i) {
    t.rows.push_back({format_number(d.L1[i]), format_number(d.C1[i]), action_label(d.A1[i]), format_number(d.L2[i]),
                      format_number(d.C2[i]), action_label(d.A2[i]), format_number(d.L3[i]), format_number(d.L1[i]),
                      format_number(d.A1[i] * d.C1[i] + d.L2[i]), format_number(d.A2[i] * d.C2[i] + d.L3[i])});
  }
  auto pd = ingest_wide(t, two_stage_spec());
  return Simulated{std::move(t), std::move(pd), 0};
}

PolicyData with_propensity_feature(const Simulated& sim) {
  Table t = sim.table;
  const auto z = t.column("Z");
  const auto l = t.column("L");
  std::vector<std::string> f(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double zi = *parse_number(z[i]);
    const double az = std::max(std::abs(zi), kZClamp);
    f[i] = format_number((zi + *parse_number(l[i]) - 1.0) / (az * az));
  }
  t.add_column("F", std::move(f));
  auto spec = single_stage_spec();
  spec.covariates.push_back({"F", {"F"}});
  return ingest_wide(t, spec);
}

double kappa(double mu) {
  const double tail = 1.0 - normal_cdf(-mu);
  if (tail <= 0.0) return 0.0;
  return tail * (mu + normal_pdf(-mu) / tail);
}

Policy optimal_policy_single(const SingleStageParams& p) {
  Policy pol;
  pol.name = "optimal";
  pol.action_set = kBinary;
  pol.rules = {linear_threshold_rule({{"Z", p.gamma}, {"L", p.alpha}}, p.beta, "1", "0", HistoryKind::State)};
  return pol;
}

Policy optimal_policy_two_stage(const TwoStageParams& p) {
  Policy pol;
  pol.name = "optimal";
  pol.action_set = kBinary;
  const double gamma = p.gamma;
  auto stage1 = [gamma](const HistoryTable& h) {
    const auto& L = h.column("L").numeric;
    const auto& C = h.column("C").numeric;
    std::vector<std::string> out(h.rows());
    for (std::size_t i = 0; i < h.rows(); ++i) {
      out[i] = C[i] + kappa(gamma * L[i] + 1.0) - kappa(gamma * L[i]) > 0.0 ? "1" : "0";
    }
    return out;
  };
  pol.rules = {callable_rule("two-stage optimal stage 1", HistoryKind::State, stage1),
               linear_threshold_rule({{"C", 1.0}}, 0.0, "1", "0", HistoryKind::State)};
  return pol;
}

double optimal_value_single(const SingleStageParams& p) {
  const double mu = p.beta;
  const double s = std::sqrt(p.gamma * p.gamma + p.alpha * p.alpha);
  return mu * normal_cdf(mu / s) + s * normal_pdf(mu / s);
}

McValue mc_value_oracle(Dgp dgp, const Policy& policy, std::size_t n_mc, std::uint64_t seed,
                        const SingleStageParams& single, const TwoStageParams& two) {
  if (n_mc < 2) throw RangeError("n_mc must be at least 2");
  constexpr std::size_t kBatch = 20000;
  double mean = 0.0, m2 = 0.0;
  std::size_t count = 0;
  auto push = [&](double u) {
    ++count;
    const double delta = u - mean;
    mean += delta / static_cast<double>(count);
    m2 += delta * (u - mean);
  };
  for (std::size_t first = 0; first < n_mc; first += kBatch) {
    const std::size_t n = std::min(kBatch, n_mc - first);
    if (dgp == Dgp::Single) {
      const auto d = draw_single(first, n, seed, single, &policy);
      for (double u : d.U) push(u);
    } else {
      const auto d = draw_two(first, n, seed, two, &policy);
      for (std::size_t i = 0; i < n; ++i) {
        push(d.L1[i] + d.A1[i] * d.C1[i] + d.L2[i] + d.A2[i] * d.C2[i] + d.L3[i]);
      }
    }
  }
  const double var = m2 / static_cast<double>(count - 1);
  return McValue{mean, std::sqrt(var / static_cast<double>(count))};
}

}  // namespace dtr
