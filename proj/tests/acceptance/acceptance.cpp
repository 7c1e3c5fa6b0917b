// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include "dtr/csv.hpp"
#include "dtr/error.hpp"
#include "dtr/evaluation.hpp"
#include "dtr/learning.hpp"
#include "dtr/regression.hpp"
#include "dtr/simulation.hpp"
#include "dtr/tree.hpp"

#include "discrete_toy.hpp"
#include "helpers.hpp"
#include "newton_oracle.hpp"
#include "tree_oracle.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace dtr;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double max_abs(const Eigen::VectorXd& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

const ModelSpec kGSingle{Family::Glm, "~F+B", HistoryKind::State, false};
const ModelSpec kQSingle{Family::Glm, "~A*(Z+L)", HistoryKind::State, false};
const ModelSpec kIntercept{Family::Glm, "~1", HistoryKind::State, false};
const std::vector<ModelSpec> kG2{{Family::Glm, "~L+C", HistoryKind::State, false}};
const std::vector<ModelSpec> kQ2{{Family::Glm, "~A*.", HistoryKind::Full, false}};

// ---------------------------------------------------------------------------

Outcome criterion1() {
  const auto pd = with_propensity_feature(sim_single_stage(20000, 101));
  const auto r1 = value_dr(pd, static_policy("1", "always"), {kGSingle}, {kQSingle});
  const auto r0 = value_dr(pd, static_policy("0", "never"), {kGSingle}, {kQSingle});
  const auto ro = value_dr(pd, optimal_policy_single(), {kGSingle}, {kQSingle});
  Eigen::VectorXd w(2);
  w << 1.0, -1.0;
  const auto ate = contrast_linear(merge_results({r1, r0}), w, "ate");
  const double truth_opt = optimal_value_single();
  struct Row {
    const char* name;
    const EvalResult* r;
    double truth;
  };
  const Row rows[] = {{"A=1", &r1, -2.5}, {"A=0", &r0, 0.0}, {"ATE", &ate, -2.5}, {"d_opt", &ro, truth_opt}};
  Outcome o{true, ""};
  for (const auto& row : rows) {
    const double z = (row.r->estimate - row.truth) / row.r->std_err();
    o.pass = o.pass && std::abs(z) <= 3.0;
    o.detail += std::string(row.name) + " " + fmt("%.4f", row.r->estimate) + " (SE " + fmt("%.4f", row.r->std_err()) +
                ", truth " + fmt("%.4f", row.truth) + ", z " + fmt("%+.2f", z) + "); ";
  }
  return o;
}

Outcome criterion2() {
  const auto opt = optimal_policy_two_stage();
  const auto mc = mc_value_oracle(Dgp::Two, opt, 1000000, 2024);
  const auto sim = sim_two_stage(2000, 202);
  const auto r = value_dr(sim.data, opt, kG2, kQ2);
  const double z = (r.estimate - mc.value) / r.std_err();
  return {std::abs(z) <= 3.0, "theta* " + fmt("%.4f", mc.value) + " (MC SE " + fmt("%.4f", mc.std_error) +
                                  "), DR " + fmt("%.4f", r.estimate) + " (SE " + fmt("%.4f", r.std_err()) +
                                  "), z " + fmt("%+.2f", z)};
}

Outcome criterion3() {
  const double truth = optimal_value_single();
  const Policy opt = optimal_policy_single();
  int g_ok = 0, q_ok = 0;
  double g_worst = 0.0, q_worst = 0.0;
  for (int s = 0; s < 20; ++s) {
    const auto pd = with_propensity_feature(sim_single_stage(20000, 3000 + static_cast<std::uint64_t>(s)));
    const auto rg = value_dr(pd, opt, {kGSingle}, {kIntercept});
    const auto rq = value_dr(pd, opt, {kIntercept}, {kQSingle});
    const double zg = std::abs(rg.estimate - truth) / rg.std_err();
    const double zq = std::abs(rq.estimate - truth) / rq.std_err();
    g_ok += zg <= 4.0;
    q_ok += zq <= 4.0;
    g_worst = std::max(g_worst, zg);
    q_worst = std::max(q_worst, zq);
  }
  return {g_ok >= 18 && q_ok >= 18, "correct g / intercept Q: " + std::to_string(g_ok) + "/20 (max |z| " +
                                        fmt("%.2f", g_worst) + "); correct Q / intercept g: " + std::to_string(q_ok) +
                                        "/20 (max |z| " + fmt("%.2f", q_worst) + ")"};
}

Outcome criterion4() {
  const Policy opt = optimal_policy_two_stage();
  std::vector<double> est, se;
  for (int rep = 0; rep < 500; ++rep) {
    const auto sim = sim_two_stage(1000, 50000 + static_cast<std::uint64_t>(rep));
    const auto r = value_dr(sim.data, opt, kG2, kQ2);
    est.push_back(r.estimate);
    se.push_back(r.std_err());
  }
  double mean = 0.0, mean_se = 0.0;
  for (std::size_t i = 0; i < est.size(); ++i) {
    mean += est[i];
    mean_se += se[i];
  }
  mean /= static_cast<double>(est.size());
  mean_se /= static_cast<double>(se.size());
  double ss = 0.0;
  for (double e : est) ss += (e - mean) * (e - mean);
  const double sd = std::sqrt(ss / static_cast<double>(est.size() - 1));
  const double ratio = sd / mean_se;
  return {std::abs(ratio - 1.0) <= 0.15, "sd " + fmt("%.4f", sd) + ", mean SE " + fmt("%.4f", mean_se) +
                                             ", ratio " + fmt("%.3f", ratio) + ", mean estimate " + fmt("%.4f", mean)};
}

// Variable-length long-format data: subjects have one or two stages.
PolicyData ragged_long(std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> nd;
  std::string csv = "id,stage,event,A,U,X\n";
  for (int i = 1; i <= 300; ++i) {
    const int K = i % 3 == 0 ? 1 : 2;
    for (int k = 1; k <= K; ++k) {
      const double x = nd(gen);
      csv += std::to_string(i) + "," + std::to_string(k) + ",0," + std::to_string(x + nd(gen) > 0 ? 1 : 0) + "," +
             format_number(0.5 * x) + "," + format_number(x) + "\n";
    }
    csv += std::to_string(i) + "," + std::to_string(K + 1) + ",1,," + format_number(nd(gen)) + ",\n";
  }
  LongSpec spec;
  spec.covariates = {"X"};
  return ingest_long(testing::table_of(csv), std::nullopt, spec);
}

Outcome criterion5() {
  constexpr double tol = 1e-10;
  std::vector<std::string> failed;
  auto check = [&](bool ok, const std::string& what) {
    if (!ok) failed.push_back(what);
  };
  Policy rule;
  rule.action_set = {"0", "1"};
  rule.rules = {linear_threshold_rule({{"C", 1.0}}, 0.2, "1", "0"), linear_threshold_rule({{"C", 1.0}}, 0.0, "1", "0")};
  const auto sim = sim_two_stage(400, 505);
  const auto& pd = sim.data;

  // (a) Q = 0: the recursion collapses to the IPW term, and both equal a direct product of weights.
  {
    CrossFitEngine e(pd, kG2, {}, make_folds(pd.ids(), 1, 0), {true, false, true});
    for (int k = 2; k >= 1; --k) {
      e.fit_stage(k);
      e.set_policy_all(k, apply_policy_stage(rule, pd, k));
    }
    std::string csv = "id,A1,A2,U\n";
    for (const auto& t : pd.trajectories()) {
      csv += t.id + "," + t.stages[0].action + "," + t.stages[1].action + "," + format_number(t.utility()) + "\n";
    }
    const auto flat = testing::wide_of(csv, WideSpec{{"A1", "A2"}, {}, {"U"}, {}, "id", {}});
    const std::vector<std::vector<std::string>> d{apply_policy_stage(rule, pd, 1), apply_policy_stage(rule, pd, 2)};
    const auto n = static_cast<Eigen::Index>(pd.size());
    const auto s = dr_scores(flat, d, {e.g(0, 1), e.g(0, 2)}, {Eigen::MatrixXd::Zero(n, 2), Eigen::MatrixXd::Zero(n, 2)});
    const Eigen::VectorXd ipw = e.ipw_terms();
    bool ok = true;
    for (std::size_t i = 0; i < pd.size(); ++i) {
      double w = 1.0;
      for (int k = 1; k <= 2; ++k) {
        const auto& a = pd[i].stages[static_cast<std::size_t>(k - 1)].action;
        w *= a == d[static_cast<std::size_t>(k - 1)][i]
                 ? 1.0 / e.g(0, k)(static_cast<Eigen::Index>(i), pd.action_index(a))
                 : 0.0;
      }
      const auto r = static_cast<Eigen::Index>(i);
      const double scale = 1.0 + std::abs(ipw[r]);
      ok = ok && std::abs(s.z1[r] - ipw[r]) <= tol * scale && std::abs(w * pd[i].utility() - ipw[r]) <= tol * scale;
    }
    check(ok, "a");
  }

  // (b) Padding to a common number of stages leaves the estimate and IC unchanged.
  {
    const auto ragged = ragged_long(17);
    const auto padded = augment_stages(ragged, "0");
    Policy p;
    p.action_set = {"0", "1"};
    p.rules = {linear_threshold_rule({{"X", 1.0}}, 0.0, "1", "0")};
    const std::vector<ModelSpec> g{{Family::Glm, "~X", HistoryKind::State, false}};
    const std::vector<ModelSpec> q{{Family::Glm, "~A*X", HistoryKind::State, false}};
    bool ok = padded.uniform_stages();
    for (int M : {1, 3}) {
      const auto a = value_dr(ragged, p, g, q, {M, 8});
      const auto b = value_dr(padded, p, g, q, {M, 8});
      ok = ok && std::abs(a.estimate - b.estimate) <= tol && max_abs(a.ic - b.ic) <= tol;
    }
    // Already-uniform data are left alone.
    const auto a = value_dr(pd, rule, kG2, kQ2);
    const auto b = value_dr(augment_stages(pd, "0"), rule, kG2, kQ2);
    ok = ok && std::abs(a.estimate - b.estimate) <= tol && max_abs(a.ic - b.ic) <= tol;
    check(ok, "b");
  }

  const auto r1 = value_dr(pd, static_policy("1", "always"), kG2, kQ2);
  const auto r0 = value_dr(pd, static_policy("0", "never"), kG2, kQ2);

  // (c) Linear contrast of merged results.
  {
    Eigen::VectorXd w(2);
    w << 1.0, -1.0;
    const auto c = contrast_linear(merge_results({r1, r0}), w, "ate");
    const Eigen::VectorXd ic = r1.ic - r0.ic;
    const double var = ic.squaredNorm() / std::pow(static_cast<double>(pd.size()), 2);
    check(std::abs(c.estimate - (r1.estimate - r0.estimate)) <= tol && max_abs(c.ic - ic) <= tol &&
              std::abs(c.variance_of_mean - var) <= tol,
          "c");
  }

  // (d) Every subject its own cluster.
  {
    const auto cl = clustered_variance(r1, r1.ids);
    check(std::abs(cl.variance_of_mean - r1.variance_of_mean) <= tol, "d");
  }

  // (e) Subgroup values recombine to the marginal value and IC.
  {
    Table t = sim_single_stage(600, 506).table;
    t.header.push_back("site");
    for (std::size_t i = 0; i < t.rows.size(); ++i) t.rows[i].push_back(i % 3 == 0 ? "north" : (i % 5 == 1 ? "south" : "east"));
    WideSpec spec = single_stage_spec();
    spec.baseline_cols.push_back("site");
    const auto sp = ingest_wide(t, spec);
    const auto r = value_dr(sp, optimal_policy_single(), {{Family::Glm, "~Z+L+B", HistoryKind::State, false}}, {kQSingle});
    double recombined = 0.0;
    Eigen::VectorXd ic = Eigen::VectorXd::Zero(r.ic.size());
    for (const auto& [level, c] : conditional_value(r, sp, "site")) {
      const double p = c.metadata["proportion"];
      recombined += p * c.estimate;
      ic += p * c.ic;
      for (std::size_t i = 0; i < sp.size(); ++i) {
        const bool in = std::get<std::string>(sp[i].baseline.at("site")) == level;
        ic[static_cast<Eigen::Index>(i)] += ((in ? 1.0 : 0.0) - p) * c.estimate;
      }
    }
    check(std::abs(recombined - r.estimate) <= tol && max_abs(ic - r.ic) <= tol, "e");
  }

  // (f) Truncating after stage 1 keeps every subject's total utility.
  {
    const auto u0 = utility(pd);
    const auto u1 = utility(partial(pd, 1));
    bool ok = u0.size() == u1.size();
    for (std::size_t i = 0; ok && i < u0.size(); ++i) {
      ok = u0[i].first == u1[i].first && std::abs(u0[i].second - u1[i].second) <= tol;
    }
    check(ok, "f");
  }

  std::string detail = "identities a-f";
  if (!failed.empty()) {
    detail += "; failed:";
    for (const auto& f : failed) detail += " " + f;
  }
  return {failed.empty(), detail};
}

Outcome criterion6() {
  std::mt19937_64 gen(66);
  int ok = 0;
  for (int rep = 0; rep < 200; ++rep) {
    const auto s = oracle::random_sample(gen);
    const int depth = 1 + rep % 2;
    const double want = oracle::best_tree_objective(s.X, s.gamma, depth);
    const ScoredSample ss{s.X, s.gamma};
    const double got = tree_objective(exact_tree_search(ss, depth), ss);
    ok += std::abs(got - want) <= 1e-9 * (1.0 + std::abs(want));
  }
  return {ok == 200, std::to_string(ok) + "/200 trees reach the enumerated optimum"};
}

// Random binary-action fixtures: two-stage and single-stage draws of varying size.
struct Fixture {
  PolicyData pd;
  LearnerConfig cfg;
};

Fixture binary_fixture(int rep, std::mt19937_64& gen, LearnerKind kind) {
  const std::size_t n = 60 + static_cast<std::size_t>(gen() % 80);
  LearnerConfig cfg;
  cfg.type = kind;
  cfg.L = 1 + rep % 3;
  cfg.depth = 1 + (rep / 3) % 2;
  cfg.seed = static_cast<std::uint64_t>(rep);
  if (rep % 2 == 0) {
    cfg.designs = {PolicyDesign{"~L+C", HistoryKind::State}};
    cfg.g_specs = kG2;
    cfg.q_specs = kQ2;
    return {sim_two_stage(n, gen()).data, cfg};
  }
  cfg.designs = {PolicyDesign{"~Z+L", HistoryKind::State}};
  cfg.g_specs = {{Family::Glm, "~Z+L", HistoryKind::State, false}};
  cfg.q_specs = {kQSingle};
  return {with_propensity_feature(sim_single_stage(n, gen())), cfg};
}

Outcome criterion7() {
  std::mt19937_64 gen(77);
  int same = 0, total = 0;
  for (int rep = 0; rep < 100; ++rep) {
    auto f = binary_fixture(rep, gen, LearnerKind::Wcl);
    try {
      const auto wcl = learn_wcl(f.pd, f.cfg);
      const auto ptl = recursive_value_search(f.pd, f.cfg);
      same += apply_policy(get_policy(wcl), f.pd).actions == apply_policy(get_policy(ptl), f.pd).actions;
      ++total;
    } catch (const Error& e) {
      std::printf("  criterion 7 fixture %d: %s\n", rep, e.what());
      ++total;
    }
  }
  return {same == 100, std::to_string(same) + "/" + std::to_string(total) + " fixtures with identical per-unit actions"};
}

Outcome criterion8() {
  std::string detail;
  bool pass = true;

  // (a) drql and blip on the same designs.
  {
    std::mt19937_64 gen(81);
    long compared = 0, differ = 0;
    for (int rep = 0; rep < 20; ++rep) {
      auto f = binary_fixture(2 * rep + rep % 2, gen, LearnerKind::Drql);
      f.cfg.L = 1;
      const auto drql = learn_drql(f.pd, f.cfg);
      auto bcfg = f.cfg;
      bcfg.type = LearnerKind::Blip;
      const auto blip = learn_blip(f.pd, bcfg);
      for (int k = 1; k <= f.pd.max_stages(); ++k) {
        const auto h = get_history(f.pd, k, HistoryKind::State);
        const auto& rb = *blip.rules[static_cast<std::size_t>(k - 1)];
        const auto a = drql.rules[static_cast<std::size_t>(k - 1)]->recommend(h);
        const auto b = rb.recommend(h);
        const Eigen::VectorXd bv = blip_values(rb, h);
        for (std::size_t r = 0; r < h.rows(); ++r) {
          if (std::abs(bv[static_cast<Eigen::Index>(r)]) <= 1e-10) continue;
          ++compared;
          differ += a[r] != b[r];
        }
      }
    }
    pass = pass && differ == 0 && compared > 0;
    detail += "(a) " + std::to_string(differ) + " of " + std::to_string(compared) + " rows differ; ";
  }

  // (b) Realistic sets.
  {
    std::mt19937_64 gen(82);
    long outside = 0, checked = 0;
    for (double alpha : {0.01, 0.05}) {
      for (int rep = 0; rep < 10; ++rep) {
        for (LearnerKind kind : {LearnerKind::Ql, LearnerKind::Drql, LearnerKind::Blip, LearnerKind::Ptl, LearnerKind::Wcl}) {
          auto f = binary_fixture(rep, gen, kind);
          f.cfg.alpha = alpha;
          f.cfg.depth = 1 + rep % 2;
          const auto po = learn(f.pd, f.cfg);
          const Policy p = get_policy(po);
          for (int k = 1; k <= f.pd.max_stages(); ++k) {
            const auto acts = apply_policy_stage(p, f.pd, k);
            const Eigen::MatrixXd probs = predict_g_stage(*po.g_full, f.pd, k);
            for (std::size_t r = 0; r < acts.size(); ++r) {
              ++checked;
              outside += probs(static_cast<Eigen::Index>(r), f.pd.action_index(acts[r])) <= alpha;
            }
          }
        }
      }
    }
    pass = pass && outside == 0;
    detail += "(b) " + std::to_string(outside) + " of " + std::to_string(checked) + " recommendations outside the realistic set; ";
  }

  // (c) Saturated Q-learning against backward induction on cell means.
  {
    const toy::Law law;
    int exact = 0, runs = 0;
    for (std::uint64_t seed : {1u, 2u, 3u, 4u, 5u}) {
      const auto table = toy::simulate(law, 3000, seed);
      const auto pd = ingest_wide(table, toy::spec());
      const auto rows = toy::rows_of(table);
      const auto dp = toy::empirical_dp(rows, true, [](int, int, int, int) { return 0; }, [](int, int) { return 0; });
      if (!dp.complete) continue;
      ++runs;
      const auto po = learn_ql(pd, {{Family::Glm, toy::kSaturatedQ1, HistoryKind::Full, false},
                                    {Family::Glm, toy::kSaturatedQ2, HistoryKind::Full, false}});
      const Policy p = get_policy(po);
      const auto a1 = apply_policy_stage(p, pd, 1);
      const auto a2 = apply_policy_stage(p, pd, 2);
      bool ok = true;
      for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        ok = ok && a1[i] == std::to_string(dp.d1[r.w][r.x1]) && a2[i] == std::to_string(dp.d2[r.w][r.x1][r.a1][r.x2]);
      }
      exact += ok;
    }
    pass = pass && runs == 5 && exact == runs;
    detail += "(c) " + std::to_string(exact) + "/" + std::to_string(runs) + " samples match";
  }
  return {pass, detail};
}

Outcome criterion9() {
  const toy::Law law;
  const auto v = toy::v_optimal(law);
  double min_blip = 1e300;
  for (int w = 0; w < 2; ++w) {
    min_blip = std::min(min_blip, std::abs(v.blip1[w]));
    for (int a1 = 0; a1 < 2; ++a1)
      for (int x2 = 0; x2 < 2; ++x2) min_blip = std::min(min_blip, std::abs(v.blip2[w][a1][x2]));
  }
  const auto table = toy::simulate(law, 50000, 909);
  const auto pd = ingest_wide(table, toy::spec());
  const auto rows = toy::rows_of(table);

  LearnerConfig cfg;
  cfg.designs = {PolicyDesign{"~W", HistoryKind::State}, PolicyDesign{"~A_1*W*X_2", HistoryKind::Full}};
  cfg.g_specs = {{Family::Glm, "~W", HistoryKind::State, false},
                 {Family::Glm, "~A_1*W*X_1*X_2", HistoryKind::Full, false}};
  cfg.q_specs = {{Family::Glm, toy::kSaturatedQ1, HistoryKind::Full, false},
                 {Family::Glm, toy::kSaturatedQ2, HistoryKind::Full, false}};

  bool pass = true;
  std::string detail = "min |V-blip| " + fmt("%.3f", min_blip) + "; ";
  for (LearnerKind kind : {LearnerKind::Blip, LearnerKind::Drql}) {
    cfg.type = kind;
    const Policy p = get_policy(learn(pd, cfg));
    const auto a1 = apply_policy_stage(p, pd, 1);
    const auto a2 = apply_policy_stage(p, pd, 2);
    // Learned action per stratum; a stratum split between actions counts as wrong.
    std::map<int, std::set<std::string>> s1, s2;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto& r = rows[i];
      s1[r.w].insert(a1[i]);
      s2[(r.w * 2 + r.a1) * 2 + r.x2].insert(a2[i]);
    }
    double m1 = 0.0, m2 = 0.0;
    for (int w = 0; w < 2; ++w) {
      if (s1[w] == std::set<std::string>{std::to_string(v.d1[w])}) m1 += v.mass1[w];
      for (int a = 0; a < 2; ++a)
        for (int x2 = 0; x2 < 2; ++x2) {
          if (s2[(w * 2 + a) * 2 + x2] == std::set<std::string>{std::to_string(v.d2[w][a][x2])}) m2 += v.mass2[w][a][x2];
        }
    }
    pass = pass && m1 >= 0.99 && m2 >= 0.99;
    detail += std::string(to_string(kind)) + " stage-1 mass " + fmt("%.4f", m1) + ", stage-2 mass " + fmt("%.4f", m2) + "; ";
  }
  return {pass, detail};
}

Outcome criterion10() {
  std::mt19937_64 gen(1010);
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  double newton_gap = 0.0;
  for (int m : {2, 3}) {
    const std::size_t n = 500;
    oracle::Mat rows;
    Eigen::MatrixXd X(static_cast<Eigen::Index>(n), 3);
    std::vector<int> y;
    std::vector<double> w;
    for (std::size_t i = 0; i < n; ++i) {
      const double x1 = nd(gen), x2 = nd(gen);
      rows.push_back({1.0, x1, x2});
      X.row(static_cast<Eigen::Index>(i)) << 1.0, x1, x2;
      std::vector<double> eta{0.0};
      for (int c = 1; c < m; ++c) eta.push_back(0.2 * c + (c % 2 ? 0.9 : -0.6) * x1 - 0.4 * x2);
      double denom = 0.0;
      for (double e : eta) denom += std::exp(e);
      double u = ud(gen) * denom;
      int cls = 0;
      for (; cls < m - 1; ++cls) {
        u -= std::exp(eta[static_cast<std::size_t>(cls)]);
        if (u <= 0) break;
      }
      y.push_back(cls);
      w.push_back(0.5 + ud(gen));
    }
    const Eigen::VectorXd wv = Eigen::Map<const Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(n));
    Eigen::MatrixXd coef;
    if (m == 2) {
      Eigen::VectorXd yv(static_cast<Eigen::Index>(n));
      for (std::size_t i = 0; i < n; ++i) yv[static_cast<Eigen::Index>(i)] = y[i];
      coef = fit_logistic(X, yv, &wv).coef;
    } else {
      coef = fit_multinomial(X, y, m, &wv).coef;
    }
    const auto beta = oracle::newton_oracle(rows, y, m, w);
    for (int c = 0; c < m - 1; ++c)
      for (int j = 0; j < 3; ++j) newton_gap = std::max(newton_gap, std::abs(coef(j, c) - beta[static_cast<std::size_t>(c * 3 + j)]));
  }

  // Normal equations of weighted least squares.
  Eigen::MatrixXd X(400, 4);
  Eigen::VectorXd y(400), wt(400);
  for (Eigen::Index i = 0; i < 400; ++i) {
    X.row(i) << 1.0, nd(gen), nd(gen), nd(gen);
    y[i] = 1.0 + X(i, 1) - 2.0 * X(i, 2) + nd(gen);
    wt[i] = 0.5 + ud(gen);
  }
  const auto ols = fit_ols(X, y, &wt);
  const double ne = (X.transpose() * wt.asDiagonal() * (y - X * ols.coef)).cwiseAbs().maxCoeff();

  // Probability rows: empirical and multinomial g on the trial fixture, logistic g on simulated data.
  const auto smart = testing::smart_fixture();
  std::vector<std::size_t> all(smart.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  double row_gap = 0.0;
  double p_cct = 0.0;
  for (Family fam : {Family::Empirical, Family::Glm}) {
    const auto g = fit_g(smart, {{fam, "~1", HistoryKind::State, false}, {fam, "~responder", HistoryKind::State, false}}, all);
    for (int k = 1; k <= 2; ++k) {
      const Eigen::MatrixXd P = predict_g_stage(g, smart, k);
      row_gap = std::max(row_gap, (P.rowwise().sum().array() - 1.0).abs().maxCoeff());
      if (fam == Family::Empirical && k == 1) p_cct = P(0, smart.action_index("cct"));
    }
  }
  const auto two = sim_two_stage(500, 1011).data;
  std::vector<std::size_t> all2(two.size());
  for (std::size_t i = 0; i < all2.size(); ++i) all2[i] = i;
  const auto g2 = fit_g(two, kG2, all2);
  for (int k = 1; k <= 2; ++k) {
    row_gap = std::max(row_gap, (predict_g_stage(g2, two, k).rowwise().sum().array() - 1.0).abs().maxCoeff());
  }

  const bool pass = newton_gap <= 1e-6 && ne < 1e-8 && row_gap <= 1e-12 && p_cct == 112.0 / 217.0;
  return {pass, "Newton gap " + fmt("%.2e", newton_gap) + ", normal-equation residual " + fmt("%.2e", ne) +
                    ", row-sum gap " + fmt("%.2e", row_gap) + ", P(cct) " + fmt("%.6f", p_cct) + " (112/217 = " +
                    fmt("%.6f", 112.0 / 217.0) + ")"};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    std::function<Outcome()> run;
    double limit_s;  // 0: no runtime bound
  };
  const std::vector<Criterion> criteria{
      {1, criterion1, 30.0}, {2, criterion2, 60.0}, {3, criterion3, 0.0}, {4, criterion4, 0.0},
      {5, criterion5, 0.0},  {6, criterion6, 10.0}, {7, criterion7, 0.0}, {8, criterion8, 0.0},
      {9, criterion9, 0.0},  {10, criterion10, 0.0},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.limit_s > 0 && secs >= c.limit_s) {
      o.pass = false;
      o.detail += " [runtime over " + fmt("%.0f", c.limit_s) + " s]";
    }
    failures += !o.pass;
    std::printf("criterion %d: %s  %s (%.1f s)\n", c.id, o.pass ? "PASS" : "FAIL", o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
