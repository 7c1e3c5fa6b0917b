#include "dtr/error.hpp"
#include "dtr/policy.hpp"
#include "dtr/simulation.hpp"

#include "helpers.hpp"

#include <doctest.h>

#include <cmath>

using namespace dtr;

namespace {

std::vector<std::size_t> everyone(const PolicyData& pd) {
  std::vector<std::size_t> all(pd.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return all;
}

void check_round_trip(const Policy& p, const PolicyData& pd) {
  const auto j = serialize_policy(p);
  const auto back = deserialize_policy(nlohmann::json::parse(j.dump()));
  CHECK(serialize_policy(back) == j);
  const auto a = apply_policy(p, pd);
  const auto b = apply_policy(back, pd);
  CHECK(a.actions == b.actions);
  CHECK(a.ids == b.ids);
  CHECK(a.stages == b.stages);
}

}  // namespace

TEST_SUITE("policy") {

TEST_CASE("linear threshold reproduces the closed-form single-stage rule") {
  const auto sim = sim_single_stage(300, 8);
  const Policy p = optimal_policy_single();
  const auto acts = apply_policy_stage(p, sim.data, 1);
  const auto h = get_history(sim.data, 1, HistoryKind::State);
  for (std::size_t i = 0; i < h.rows(); ++i) {
    const double z = h.column("Z").numeric[i], l = h.column("L").numeric[i];
    CHECK(acts[i] == (3.0 * z + 1.0 * l - 2.5 > 0 ? "1" : "0"));
  }
}

TEST_CASE("table rule: continue iff responder") {
  const auto pd = testing::smart_fixture();
  Policy p;
  p.action_set = pd.action_set();
  p.rules = {static_rule("cct"), table_rule({"responder"}, {{{"TRUE"}, "continue"}}, "text")};
  const auto acts = apply_policy_stage(p, pd, 2);
  const auto h = get_history(pd, 2, HistoryKind::State);
  for (std::size_t i = 0; i < h.rows(); ++i) {
    CHECK(acts[i] == (h.column("responder").labels[i] == "TRUE" ? "continue" : "text"));
  }
  Policy strict = p;
  strict.rules[1] = table_rule({"responder"}, {{{"TRUE"}, "continue"}}, std::nullopt);
  CHECK_THROWS_AS(apply_policy_stage(strict, pd, 2), DomainError);
  check_round_trip(p, pd);
}

TEST_CASE("realistic action sets") {
  Eigen::MatrixXd probs(2, 2);
  probs << 0.98, 0.02,
           0.4, 0.6;
  const std::vector<std::string> acts{"a", "b"};
  const auto ras = realistic_set(probs, acts, 0.05, acts);
  CHECK(ras.allowed[0] == std::vector<char>{1, 0});
  CHECK(ras.allowed[1] == std::vector<char>{1, 1});
  CHECK(realistic_set(probs, acts, 0.0, acts).allowed[0] == std::vector<char>{1, 1});
  CHECK(overrule_unrealistic({"b", "b"}, ras) == std::vector<std::string>{"a", "b"});
  Eigen::MatrixXd values(2, 2);
  values << 0.0, 5.0,
            1.0, 0.5;
  CHECK(restricted_argmax(values, ras) == std::vector<std::string>{"a", "a"});
  CHECK_THROWS_AS(realistic_set(probs, acts, 0.5, acts), RangeError);
  Eigen::MatrixXd flat(1, 2);
  flat << 0.01, 0.01;
  try {
    realistic_set(flat, acts, 0.05, acts, {"s7"}, {2});
    FAIL("expected a positivity error");
  } catch (const PositivityError& e) {
    CHECK(std::string(e.what()).find("id s7, stage 2") != std::string::npos);
  }
  RealisticActionSet three;
  three.actions = {"a", "b", "c"};
  three.allowed = {{1, 0, 1}};
  CHECK_THROWS_AS(overrule_unrealistic({"b"}, three), UnsupportedError);
}

TEST_CASE("responders have only one realistic stage-2 action") {
  const auto pd = testing::smart_fixture();
  const auto g = fit_g(pd, {{Family::Empirical, "~1", HistoryKind::State, false},
                            {Family::Empirical, "~responder", HistoryKind::State, false}},
                       everyone(pd));
  const auto h = get_history(pd, 2, HistoryKind::State);
  const auto ras = realistic_set(predict_g_stage(g, pd, 2), pd.action_set(), 0.01, pd.stage_action_set(2));
  for (std::size_t i = 0; i < h.rows(); ++i) {
    if (h.column("responder").labels[i] == "TRUE") {
      CHECK(ras.allowed[i] == std::vector<char>{1, 0, 0});
    } else {
      CHECK(ras.allowed[i] == std::vector<char>{0, 1, 1});
    }
  }
}

TEST_CASE("realistic policies overrule unrealistic recommendations") {
  const auto sim = sim_single_stage(400, 3);
  const auto g = fit_g(sim.data, {{Family::Glm, "~Z+L+B", HistoryKind::State, false}}, everyone(sim.data));
  Policy p = static_policy("1");
  p.action_set = sim.data.action_set();
  p.realistic = RealisticSpec{0.45, g, {sim.data.stage_action_set(1)}};
  const auto acts = apply_policy_stage(p, sim.data, 1);
  const Eigen::MatrixXd probs = predict_g_stage(g, sim.data, 1);
  int overruled = 0;
  for (std::size_t i = 0; i < acts.size(); ++i) {
    const bool allowed = probs(static_cast<Eigen::Index>(i), 1) > 0.45;
    CHECK(acts[i] == (allowed ? "1" : "0"));
    overruled += allowed ? 0 : 1;
  }
  CHECK(overruled > 0);
  check_round_trip(p, sim.data);
}

TEST_CASE("serialization round trips for every rule kind") {
  const auto sim = sim_two_stage(200, 5);
  const auto& pd = sim.data;
  const auto h1 = get_history(pd, 1, HistoryKind::State);
  const std::vector<std::string> acts{"0", "1"};

  SUBCASE("linear threshold and static") {
    Policy p;
    p.action_set = acts;
    p.rules = {linear_threshold_rule({{"C", 1.0}, {"L", -0.5}}, 0.25, "1", "0"), static_rule("0")};
    check_round_trip(p, pd);
  }
  SUBCASE("tree") {
    const auto layout = DesignLayout::make(parse_formula("~0+L+C"), h1, nullptr, Coding::OneHot);
    const PolicyTree tree{2, {0, 1, 1}, {0.1, -0.3, 0.7}, {0, 1, 1, 0}};
    Policy p;
    p.action_set = acts;
    p.rules = {tree_rule({"L", "C"}, layout, tree, acts, HistoryKind::State)};
    check_round_trip(p, pd);
    CHECK_THROWS_AS(tree_rule({"L"}, layout, PolicyTree{1, {5}, {0.0}, {0, 1}}, acts, HistoryKind::State),
                    FormatError);
  }
  SUBCASE("qv and blip") {
    const auto layout = DesignLayout::make(parse_formula("~L+C"), h1);
    Eigen::MatrixXd coef(3, 2);
    coef << 0.0, 0.2,
            0.0, -1.0,
            0.0, 1.0;
    Policy p;
    p.action_set = acts;
    p.rules = {qv_rule(acts, layout, coef, HistoryKind::State)};
    check_round_trip(p, pd);
    Policy b;
    b.action_set = acts;
    b.rules = {blip_rule(acts, layout, coef.col(1), HistoryKind::State)};
    check_round_trip(b, pd);
    // Same decision function.
    CHECK(apply_policy(p, pd).actions == apply_policy(b, pd).actions);
    const Eigen::VectorXd bv = blip_values(*b.rules[0], h1);
    CHECK((bv - layout.build(h1) * coef.col(1)).cwiseAbs().maxCoeff() == 0.0);
    CHECK_THROWS_AS(blip_values(*p.rules[0], h1), UnsupportedError);
  }
  SUBCASE("fitted Q rule on full histories") {
    const auto hf = get_history(pd, 2, HistoryKind::Full);
    Eigen::VectorXd u(static_cast<Eigen::Index>(hf.rows()));
    for (std::size_t i = 0; i < hf.rows(); ++i) u[static_cast<Eigen::Index>(i)] = pd[hf.subjects[i]].utility();
    const auto q = QModel::fit({Family::Glm, "~A*.", HistoryKind::Full, false}, hf, u, acts);
    Policy p;
    p.action_set = acts;
    p.rules = {static_rule("1"), q_rule(acts, q)};
    check_round_trip(p, pd);
  }
  SUBCASE("callable rules are not serializable") {
    Policy p = optimal_policy_two_stage();
    CHECK_THROWS_AS(serialize_policy(p), UnsupportedError);
  }
}

TEST_CASE("policy document validation") {
  const auto j = serialize_policy(static_policy("1"));
  CHECK(j["format"] == "dtr-policy");
  auto bad = j;
  bad["version"] = 99;
  CHECK_THROWS_AS(deserialize_policy(bad), FormatError);
  bad = j;
  bad["format"] = "other";
  CHECK_THROWS_AS(deserialize_policy(bad), FormatError);
  bad = j;
  bad["stages"] = nlohmann::json::array();
  CHECK_THROWS_AS(deserialize_policy(bad), FormatError);
  bad = j;
  bad["stages"][0]["kind"] = "neural";
  CHECK_THROWS_AS(deserialize_policy(bad), FormatError);
}

TEST_CASE("apply_policy orders rows by subject then stage and checks coverage") {
  const auto sim = sim_two_stage(5, 1);
  Policy p;
  p.rules = {static_rule("1"), static_rule("0")};
  const auto t = apply_policy(p, sim.data);
  REQUIRE(t.ids.size() == 10);
  CHECK(t.ids[0] == t.ids[1]);
  CHECK(t.stages[0] == 1);
  CHECK(t.stages[1] == 2);
  CHECK(t.actions[0] == "1");
  CHECK(t.actions[1] == "0");
  Policy one;
  one.name = "short";
  one.rules = {static_rule("1"), static_rule("1"), static_rule("1")};
  CHECK_NOTHROW(apply_policy(one, sim.data));
  Policy outside = static_policy("7");
  outside.action_set = {"0", "1"};
  CHECK_THROWS_AS(apply_policy(outside, sim.data), DomainError);
  Policy partial_cover;
  partial_cover.rules = {static_rule("1"), static_rule("1")};
  const auto three = testing::wide_of("id,A1,A2,A3,U\n1,0,1,0,2\n", WideSpec{{"A1", "A2", "A3"}, {}, {"U"}, {}, "id", {}});
  CHECK_THROWS_AS(apply_policy(partial_cover, three), ConfigError);
}

}
