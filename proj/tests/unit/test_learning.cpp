#include "dtr/error.hpp"
#include "dtr/learning.hpp"
#include "dtr/simulation.hpp"

#include "discrete_toy.hpp"
#include "helpers.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace dtr;

namespace {

const std::vector<ModelSpec> kG2{{Family::Glm, "~L+C", HistoryKind::State, false}};
const std::vector<ModelSpec> kQ2{{Family::Glm, "~A*.", HistoryKind::Full, false}};

LearnerConfig two_stage_config(LearnerKind kind) {
  LearnerConfig cfg;
  cfg.type = kind;
  cfg.designs = {PolicyDesign{"~L+C", HistoryKind::State}};
  cfg.g_specs = kG2;
  cfg.q_specs = kQ2;
  return cfg;
}

HistoryTable rows_zl(std::vector<double> z, std::vector<double> l) {
  const std::size_t n = z.size();
  return HistoryTable::from_columns({numeric_column("Z", std::move(z)), numeric_column("L", std::move(l)),
                                     numeric_column("B", std::vector<double>(n, 0.0)),
                                     numeric_column("F", std::vector<double>(n, 0.0))},
                                    HistoryKind::State, 1);
}

}  // namespace

TEST_SUITE("learning") {

TEST_CASE("blip regression recovers the single-stage blip") {
  const auto sim = sim_single_stage(5000, 2);
  const auto pd = with_propensity_feature(sim);
  LearnerConfig cfg;
  cfg.type = LearnerKind::Blip;
  cfg.designs = {PolicyDesign{"~Z+L", HistoryKind::State}};
  cfg.g_specs = {{Family::Glm, "~F+B", HistoryKind::State, false}};
  cfg.q_specs = {{Family::Glm, "~A*(Z+L)", HistoryKind::State, false}};
  cfg.L = 2;
  const auto po = learn_blip(pd, cfg);
  const auto h = rows_zl({0.0, 1.0, 0.0}, {0.0, 0.0, 1.0});
  const Eigen::VectorXd b = blip_values(*po.rules[0], h);
  CHECK(b[0] == doctest::Approx(-2.5).epsilon(0.06));
  CHECK(b[1] - b[0] == doctest::Approx(3.0).epsilon(0.05));
  CHECK(b[2] - b[0] == doctest::Approx(1.0).epsilon(0.1));

  const auto f = get_policy_functions(po, 1);
  CHECK(f(rows_zl({1.0, -2.0}, {0.5, -1.0})) == std::vector<std::string>{"1", "0"});
  CHECK_THROWS_AS(get_policy_functions(po, 2), RangeError);
  CHECK(po.diagnostics["stages"][0]["near_zero_blips"] == 0);
}

TEST_CASE("weighted classification and value search pick the same trees") {
  std::mt19937_64 gen(5);
  for (int rep = 0; rep < 12; ++rep) {
    const auto sim = sim_two_stage(80 + 20 * static_cast<std::size_t>(rep % 3), gen());
    for (int depth : {1, 2}) {
      auto cfg = two_stage_config(LearnerKind::Wcl);
      cfg.depth = depth;
      cfg.L = 1 + rep % 2;
      cfg.seed = static_cast<std::uint64_t>(rep);
      const auto wcl = learn_wcl(sim.data, cfg);
      const auto ptl = recursive_value_search(sim.data, cfg);
      for (std::size_t k = 0; k < 2; ++k) {
        auto a = wcl.rules[k]->to_json();
        auto b = ptl.rules[k]->to_json();
        CHECK(a == b);
      }
      CHECK(apply_policy(get_policy(wcl), sim.data).actions == apply_policy(get_policy(ptl), sim.data).actions);
    }
  }
}

TEST_CASE("drql and blip agree wherever the blip is away from zero") {
  const auto sim = sim_two_stage(600, 44);
  const auto& pd = sim.data;
  const auto drql = learn_drql(pd, two_stage_config(LearnerKind::Drql));
  const auto blip = learn_blip(pd, two_stage_config(LearnerKind::Blip));
  for (int k = 1; k <= 2; ++k) {
    const auto h = get_history(pd, k, HistoryKind::State);
    const auto a = drql.rules[static_cast<std::size_t>(k - 1)]->recommend(h);
    const auto b = blip.rules[static_cast<std::size_t>(k - 1)]->recommend(h);
    const Eigen::VectorXd bv = blip_values(*blip.rules[static_cast<std::size_t>(k - 1)], h);
    int compared = 0;
    for (std::size_t r = 0; r < h.rows(); ++r) {
      if (std::abs(bv[static_cast<Eigen::Index>(r)]) <= 1e-10) continue;
      ++compared;
      CHECK(a[r] == b[r]);
    }
    CHECK(compared > 500);
    // Stage scores are identical: both learners run the same recursion.
    CHECK(drql.stage_scores[static_cast<std::size_t>(k - 1)] == blip.stage_scores[static_cast<std::size_t>(k - 1)]);
  }
}

TEST_CASE("realistic learners never recommend actions at or below alpha") {
  const auto sim = sim_two_stage(500, 8);
  const auto& pd = sim.data;
  for (double alpha : {0.05, 0.2}) {
    for (LearnerKind kind : {LearnerKind::Drql, LearnerKind::Blip, LearnerKind::Ptl, LearnerKind::Ql}) {
      auto cfg = two_stage_config(kind);
      cfg.alpha = alpha;
      cfg.L = 2;
      cfg.depth = 1;
      const auto po = learn(pd, cfg);
      REQUIRE(po.g_full.has_value());
      const Policy p = get_policy(po);
      for (int k = 1; k <= 2; ++k) {
        const auto acts = apply_policy_stage(p, pd, k);
        const Eigen::MatrixXd probs = predict_g_stage(*po.g_full, pd, k);
        for (std::size_t r = 0; r < acts.size(); ++r) {
          CHECK(probs(static_cast<Eigen::Index>(r), pd.action_index(acts[r])) > alpha);
        }
      }
    }
  }
}

TEST_CASE("Q-learning with saturated models is empirical backward induction") {
  const toy::Law law;
  const auto table = toy::simulate(law, 3000, 19);
  const auto pd = ingest_wide(table, toy::spec());
  const auto rows = toy::rows_of(table);
  auto none2 = [](int, int, int, int) { return 0; };
  auto none1 = [](int, int) { return 0; };
  const auto dp = toy::empirical_dp(rows, true, none2, none1);
  REQUIRE(dp.complete);
  const auto po = learn_ql(pd, {{Family::Glm, toy::kSaturatedQ1, HistoryKind::Full, false},
                                {Family::Glm, toy::kSaturatedQ2, HistoryKind::Full, false}});
  const Policy p = get_policy(po);
  const auto a1 = apply_policy_stage(p, pd, 1);
  const auto a2 = apply_policy_stage(p, pd, 2);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    CHECK(a1[i] == std::to_string(dp.d1[r.w][r.x1]));
    CHECK(a2[i] == std::to_string(dp.d2[r.w][r.x1][r.a1][r.x2]));
  }
}

TEST_CASE("stages with a single observed action get a static rule") {
  const auto pd = testing::smart_fixture();
  std::vector<std::size_t> responders;
  for (std::size_t i = 0; i < pd.size(); ++i) {
    if (pd[i].stages[1].action == "continue") responders.push_back(i);
  }
  const auto sub = pd.subset(responders);
  LearnerConfig cfg;
  cfg.type = LearnerKind::Drql;
  cfg.designs = {PolicyDesign{"~1", HistoryKind::State}};
  cfg.g_specs = {{Family::Empirical, "~1", HistoryKind::State, false}};
  cfg.q_specs = {{Family::Glm, "~A", HistoryKind::State, false}};
  const auto po = learn(sub, cfg);
  CHECK(po.rules[1]->kind() == "static");
  CHECK(po.diagnostics["stages"][1]["single_action"] == true);

  // Three actions at stage 2 are beyond the binary learners.
  cfg.type = LearnerKind::Blip;
  cfg.g_specs = {{Family::Empirical, "~1", HistoryKind::State, false},
                 {Family::Empirical, "~responder", HistoryKind::State, false}};
  cfg.q_specs = {{Family::Glm, "~A", HistoryKind::State, false}};
  CHECK_THROWS_AS(learn(pd, cfg), UnsupportedError);
  cfg.type = LearnerKind::Drql;
  CHECK_NOTHROW(learn(pd, cfg));
}

TEST_CASE("learner configuration") {
  auto cfg = two_stage_config(LearnerKind::Ptl);
  cfg.alpha = 0.1;
  cfg.depth = 1;
  cfg.L = 3;
  cfg.seed = 12;
  const auto back = LearnerConfig::from_json(cfg.to_json());
  CHECK(back.to_json() == cfg.to_json());
  auto j = cfg.to_json();
  j["typo"] = 1;
  CHECK_THROWS_AS(LearnerConfig::from_json(j), ConfigError);
  CHECK_THROWS_AS(parse_learner_kind("forest"), ConfigError);
  const auto sim = sim_two_stage(50, 3);
  auto bad = cfg;
  bad.alpha = 0.5;
  CHECK_THROWS_AS(learn(sim.data, bad), RangeError);
  bad = cfg;
  bad.depth = 3;
  CHECK_THROWS_AS(learn(sim.data, bad), RangeError);
  bad = cfg;
  bad.designs = {PolicyDesign{}, PolicyDesign{}, PolicyDesign{}};
  CHECK_THROWS_AS(learn(sim.data, bad), ConfigError);
  bad = two_stage_config(LearnerKind::Drql);
  bad.designs = {PolicyDesign{"~A+L", HistoryKind::State}};
  CHECK_THROWS_AS(learn(sim.data, bad), SchemaError);
}

TEST_CASE("learned policies serialize and evaluate deterministically") {
  const auto sim = sim_two_stage(300, 61);
  auto cfg = two_stage_config(LearnerKind::Drql);
  cfg.L = 2;
  const auto po = learn(sim.data, cfg);
  const Policy p = get_policy(po);
  const auto j = serialize_policy(p);
  CHECK(apply_policy(deserialize_policy(j), sim.data).actions == apply_policy(p, sim.data).actions);
  const auto learner = make_learner(cfg);
  const auto a = value_of_learner(sim.data, learner, "drql", kG2, kQ2, {3, 4, true, 1});
  const auto b = value_of_learner(sim.data, learner, "drql", kG2, kQ2, {3, 4, true, 3});
  CHECK(a.estimate == b.estimate);
  CHECK(a.ic == b.ic);
}

}
