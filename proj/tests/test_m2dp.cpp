#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>

#include "pescal/m2dp.hpp"
#include "support.hpp"

using namespace pescal;
using doctest::Approx;

namespace {

double chi_square_2xk(const std::vector<std::array<double, 2>>& table) {
  double total = 0.0;
  std::array<double, 2> col{0.0, 0.0};
  std::vector<double> row(table.size(), 0.0);
  for (std::size_t i = 0; i < table.size(); ++i)
    for (int j = 0; j < 2; ++j) {
      row[i] += table[i][j];
      col[j] += table[i][j];
      total += table[i][j];
    }
  double stat = 0.0;
  for (std::size_t i = 0; i < table.size(); ++i)
    for (int j = 0; j < 2; ++j) {
      const double e = row[i] * col[j] / total;
      if (e > 0.0) stat += (table[i][j] - e) * (table[i][j] - e) / e;
    }
  return stat;
}

}  // namespace

TEST_CASE("sigmoid values and stability") {
  CHECK(sigmoid(0.0) == 0.5);
  CHECK(sigmoid(2.0) == Approx(0.880797).epsilon(1e-6));
  CHECK(sigmoid(-0.9) == Approx(0.289050).epsilon(1e-6));
  CHECK(sigmoid(2.0) == Approx(std::exp(2.0) / (1.0 + std::exp(2.0))).epsilon(1e-15));
  for (double x : {-800.0, -700.0, -30.0, 30.0, 700.0, 800.0}) {
    const double v = sigmoid(x);
    CHECK(std::isfinite(v));
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  CHECK(sigmoid(-700.0) > 0.0);
  CHECK(sigmoid(1.5) + sigmoid(-1.5) == Approx(1.0).epsilon(1e-15));
}

TEST_CASE("conditional distributions match the model definition") {
  const SyntheticM2dpSpec spec;
  auto conf = conditional(spec, Distribution::Confounder, {{Variable::S, 0}});
  CHECK(conf[0] == Approx(0.5));
  CHECK(conf[1] == Approx(0.5));

  auto beh = conditional(spec, Distribution::Behavior, {{Variable::S, 0}, {Variable::C, 1}});
  CHECK(beh[0] == Approx(0.440399).epsilon(1e-6));
  CHECK(beh[2] == Approx(0.440399).epsilon(1e-6));
  CHECK(beh[1] == Approx(0.119203).epsilon(1e-6));

  auto med = conditional(spec, Distribution::Mediator, {{Variable::S, 1}, {Variable::A, -1}});
  CHECK(med[0] == Approx(0.289050).epsilon(1e-6));
  CHECK(med[1] == Approx(0.710950).epsilon(1e-6));

  for (int s : ref::S)
    for (int c : ref::C)
      for (int m : ref::M) {
        auto r = conditional(spec, Distribution::Reward, {{Variable::S, s}, {Variable::C, c}, {Variable::M, m}});
        CHECK(r[1] == Approx(ref::p_r1(s, c, m)).epsilon(1e-13));
        auto sn = conditional(spec, Distribution::NextState, {{Variable::S, s}, {Variable::C, c}, {Variable::M, m}});
        CHECK(sn[1] == Approx(ref::p_s1(s, c, m)).epsilon(1e-13));
        CHECK(std::abs(r[0] + r[1] - 1.0) <= 1e-12);
        CHECK(std::abs(sn[0] + sn[1] - 1.0) <= 1e-12);
      }
  for (int s : ref::S)
    for (int a : ref::A) {
      auto pm = conditional(spec, Distribution::Mediator, {{Variable::S, s}, {Variable::A, a}});
      CHECK(std::abs(pm[0] + pm[1] - 1.0) <= 1e-12);
      CHECK(pm[0] == Approx(ref::p_m(0, s, a)).epsilon(1e-12));
    }
}

TEST_CASE("conditional rejects bad parent sets and values") {
  const SyntheticM2dpSpec spec;
  CHECK_THROWS_AS(conditional(spec, Distribution::Mediator, {{Variable::S, 0}}), ConfigError);
  CHECK_THROWS_AS(conditional(spec, Distribution::Mediator,
                              {{Variable::S, 0}, {Variable::A, 0}, {Variable::C, 1}}),
                  ConfigError);
  CHECK_THROWS_AS(conditional(spec, Distribution::Behavior, {{Variable::S, 0}, {Variable::C, 0}}),
                  ConfigError);
  CHECK_THROWS_AS(conditional(spec, Distribution::Confounder, {{Variable::S, 5}}), ConfigError);
  CHECK_THROWS_AS(distribution_from_string("treatment"), ConfigError);
  CHECK(distribution_from_string("mediator") == Distribution::Mediator);
}

TEST_CASE("mediator floor pins tiny probabilities") {
  SyntheticM2dpSpec spec;
  spec.coef_m = {0.0, 40.0};  // P(M=0 | a=-1) = sig(-40), far below the floor
  spec.mediator_floor = 1e-3;
  auto pm = conditional(spec, Distribution::Mediator, {{Variable::S, 0}, {Variable::A, -1}});
  CHECK(pm[0] == 1e-3);
  CHECK(std::abs(pm[0] + pm[1] - 1.0) <= 1e-12);
  const M2dpModel model(spec);
  for (double v : model.mediator_table().values()) CHECK(v >= spec.mediator_floor);

  std::vector<double> probs{0.0, 0.3, 0.7};
  apply_floor(probs, 0.01);
  CHECK(probs[0] == 0.01);
  CHECK(probs[1] + probs[2] == Approx(0.99).epsilon(1e-14));
  CHECK(probs[1] / probs[2] == Approx(0.3 / 0.7).epsilon(1e-12));
}

TEST_CASE("marginal behavior") {
  const SyntheticM2dpSpec spec;
  auto b0 = marginal_behavior(spec, 0);
  CHECK(b0[1] == Approx(0.5).epsilon(1e-12));
  CHECK(b0[0] == Approx(0.25).epsilon(1e-12));
  CHECK(b0[2] == Approx(0.25).epsilon(1e-12));
  auto b1 = marginal_behavior(spec, 1);
  CHECK(b1[0] == Approx(b1[2]).epsilon(1e-15));
  CHECK(b1[0] + b1[1] + b1[2] == Approx(1.0).epsilon(1e-12));
  for (int a : ref::A) CHECK(b1[static_cast<std::size_t>(a + 1)] == Approx(ref::p_b(a, 1)).epsilon(1e-12));
  for (double v : b1) CHECK(v >= 0.0);
  CHECK_THROWS_AS(marginal_behavior(spec, 3), ConfigError);
}

TEST_CASE("unconfounded (S, A) law equals the confounded marginal") {
  const M2dpModel model{SyntheticM2dpSpec{}};
  for (std::size_t s = 0; s < 2; ++s)
    for (std::size_t a = 0; a < 3; ++a) {
      double confounded = 0.0;
      for (std::size_t c = 0; c < 2; ++c) confounded += model.p_c(s)[c] * model.p_a(s, c)[a];
      CHECK(model.p_b(s)[a] == Approx(confounded).epsilon(1e-14));
    }
  // Exact one-step joint law of (S, A) in both modes.
  const std::vector<double> w{0.5, 0.5};
  std::map<std::pair<std::size_t, std::size_t>, double> pc, pu;
  for (const auto& t : offline_transition_law(model, w, true)) pc[{t.s, t.a}] += t.prob;
  for (const auto& t : offline_transition_law(model, w, false)) pu[{t.s, t.a}] += t.prob;
  for (const auto& [k, v] : pc) CHECK(v == Approx(pu[k]).epsilon(1e-13));
}

TEST_CASE("offline transition law sums to one") {
  const M2dpModel model{SyntheticM2dpSpec{}};
  for (bool conf : {true, false}) {
    double total = 0.0;
    for (const auto& t : offline_transition_law(model, std::vector<double>{0.3, 0.7}, conf)) total += t.prob;
    CHECK(total == Approx(1.0).epsilon(1e-13));
  }
}

TEST_CASE("spec validation and JSON") {
  SyntheticM2dpSpec spec;
  CHECK_NOTHROW(spec.validate());
  nlohmann::json j = spec;
  CHECK(j.get<SyntheticM2dpSpec>() == spec);
  CHECK(fingerprint(j.get<SyntheticM2dpSpec>()) == fingerprint(spec));

  auto bad = spec;
  bad.mediator_floor = 0.5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = spec;
  bad.coef_r = {1.0, std::nan("")};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = spec;
  bad.coef_a = {1.0, std::numeric_limits<double>::infinity()};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = spec;
  bad.state_values = {1, 0};
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  nlohmann::json extra = spec;
  extra["unknown"] = 1;
  CHECK_THROWS_AS(extra.get<SyntheticM2dpSpec>(), ConfigError);
  nlohmann::json partial = {{"coef_c", {0.3}}};
  CHECK(partial.get<SyntheticM2dpSpec>().coef_c[0] == 0.3);
  CHECK(partial.get<SyntheticM2dpSpec>().coef_a == spec.coef_a);
  auto other = spec;
  other.coef_c = {0.3};
  CHECK(fingerprint(other) != fingerprint(spec));
  CHECK(spec.r_max() == 1.0);
}

TEST_CASE("policies enumerate and serialize") {
  const auto all = enumerate_policies(2, 3);
  REQUIRE(all.size() == 9);
  CHECK(all.front().action == std::vector<std::size_t>{0, 0});
  CHECK(all.back().action == std::vector<std::size_t>{2, 2});
  const auto sup = SyntheticM2dpSpec{}.supports();
  for (const auto& pi : all) CHECK(policy_from_json(policy_to_json(pi, sup), sup) == pi);
  CHECK(policy_to_json(all.front(), sup) == nlohmann::json({{"0", -1}, {"1", -1}}));
  CHECK_THROWS_AS(policy_from_json(nlohmann::json({{"0", -1}}), sup), ConfigError);
  CHECK_THROWS_AS(policy_from_json(nlohmann::json({{"0", 4}, {"1", -1}}), sup), ConfigError);
}

TEST_CASE("trajectories are deterministic and chained") {
  const M2dpModel model{SyntheticM2dpSpec{}};
  const auto t1 = sample_trajectory(model, BehaviorConfounded{}, 500, 7);
  const auto t2 = sample_trajectory(model, BehaviorConfounded{}, 500, 7);
  CHECK(t1 == t2);
  CHECK(t1.steps.size() == 500);
  CHECK(t1.mode == "behavior-confounded");
  CHECK(sample_trajectory(model, BehaviorConfounded{}, 500, 8) != t1);
  for (std::size_t i = 0; i + 1 < t1.steps.size(); ++i) CHECK(t1.steps[i].s_next == t1.steps[i + 1].s);
  for (const auto& st : t1.steps) CHECK((st.r == 1 || st.r == -1));
  CHECK(sample_trajectory(SyntheticM2dpSpec{}, BehaviorConfounded{}, 500, 7) == t1);
}

TEST_CASE("aligned streams across modes share the confounder draws") {
  const M2dpModel model{SyntheticM2dpSpec{}};
  const auto a = sample_trajectory(model, BehaviorConfounded{}, 50, 3);
  const auto b = sample_trajectory(model, BehaviorUnconfounded{}, 50, 3);
  CHECK(a.steps[0].s == b.steps[0].s);
  CHECK(a.steps[0].c == b.steps[0].c);
}

TEST_CASE("intervention mode follows the policy") {
  const M2dpModel model{SyntheticM2dpSpec{}};
  const auto t = sample_trajectory(model, Intervention{{{0, 0}}}, 100000, 11);
  for (const auto& st : t.steps) CHECK(st.a == -1);
  CHECK_THROWS_AS(sample_trajectory(model, Intervention{{{0}}}, 10, 1), ConfigError);
  CHECK_THROWS_AS(sample_trajectory(model, BehaviorConfounded{}, 0, 1), ConfigError);
}

TEST_CASE("behavior action frequencies and conditional fidelity at 1e6 draws") {
  const M2dpModel model{SyntheticM2dpSpec{}};
  const auto t = sample_trajectory(model, BehaviorConfounded{}, 1000000, 2024);
  double n_s0 = 0.0, n_a0 = 0.0;
  std::map<std::pair<int, int>, std::array<double, 2>> med;  // (s,a) -> counts of m
  std::map<std::tuple<int, int, int>, std::array<double, 2>> rew;  // (s,c,m) -> counts of r
  for (const auto& st : t.steps) {
    if (st.s == 0) {
      n_s0 += 1.0;
      if (st.a == 0) n_a0 += 1.0;
    }
    med[{st.s, st.a}][static_cast<std::size_t>(st.m)] += 1.0;
    rew[{st.s, st.c, st.m}][st.r == 1 ? 1 : 0] += 1.0;
  }
  CHECK(std::abs(n_a0 / n_s0 - 0.5) <= 0.005);
  for (const auto& [k, cnt] : med) {
    const double n = cnt[0] + cnt[1];
    const double p = ref::p_m(0, k.first, k.second);
    CHECK(std::abs(cnt[0] / n - p) <= 3.0 * std::sqrt(p * (1 - p) / n) + 1e-12);
  }
  for (const auto& [k, cnt] : rew) {
    const double n = cnt[0] + cnt[1];
    const double p = ref::p_r1(std::get<0>(k), std::get<1>(k), std::get<2>(k));
    CHECK(std::abs(cnt[1] / n - p) <= 3.0 * std::sqrt(p * (1 - p) / n) + 1e-12);
  }
}

TEST_CASE("confounding flips the apparent action effect") {
  // Exact: observationally A = 1 looks better than A = 0; under intervention it is worse.
  for (int s : ref::S) {
    auto obs = [&](int a) {
      double v = 0.0;
      for (int c : ref::C)
        for (int m : ref::M) v += ref::post_c(c, s, a) * ref::p_m(m, s, a) * ref::mean_r(s, c, m);
      return v;
    };
    CHECK(obs(1) - obs(0) > 0.0);
    CHECK(ref::r_bar(s, 1) - ref::r_bar(s, 0) < 0.0);
  }
  // Sampled: the same sign pattern appears in simulated data at fixed S.
  const M2dpModel model{SyntheticM2dpSpec{}};
  const auto beh = sample_trajectory(model, BehaviorConfounded{}, 400000, 5);
  Table2 probs({2, 3}, 1.0 / 3.0);
  const auto itv = sample_trajectory(model, StochasticIntervention{probs}, 400000, 6);
  auto diff = [](const Trajectory& t, int s) {
    std::map<int, std::array<double, 2>> acc;
    for (const auto& st : t.steps)
      if (st.s == s) {
        acc[st.a][0] += st.r;
        acc[st.a][1] += 1.0;
      }
    return acc[1][0] / acc[1][1] - acc[0][0] / acc[0][1];
  };
  for (int s : ref::S) {
    CHECK(diff(beh, s) > 0.0);
    CHECK(diff(itv, s) < 0.0);
  }
}

TEST_CASE("actions are independent of the confounder given S outside confounded mode") {
  const M2dpModel model{SyntheticM2dpSpec{}};
  auto stat_for = [&](const Trajectory& t, int s) {
    std::vector<std::array<double, 2>> table(3, {0.0, 0.0});
    for (const auto& st : t.steps)
      if (st.s == s) table[static_cast<std::size_t>(st.a + 1)][st.c == 1 ? 1 : 0] += 1.0;
    return chi_square_2xk(table);
  };
  const double crit_df2_p01 = 9.2103;
  const auto unc = sample_trajectory(model, BehaviorUnconfounded{}, 1000000, 17);
  Table2 probs({2, 3}, 1.0 / 3.0);
  const auto itv = sample_trajectory(model, StochasticIntervention{probs}, 200000, 18);
  const auto conf = sample_trajectory(model, BehaviorConfounded{}, 200000, 19);
  for (int s : ref::S) {
    CHECK(stat_for(unc, s) < crit_df2_p01);
    CHECK(stat_for(itv, s) < crit_df2_p01);
    CHECK(stat_for(conf, s) > 100.0);
  }
}

TEST_CASE("rollout_return matches an explicit trajectory sum") {
  const M2dpModel model{SyntheticM2dpSpec{}};
  const DeterministicPolicy pi{{0, 2}};
  const auto t = sample_trajectory(model, Intervention{pi}, 300, 99);
  double g = 0.0, disc = 1.0;
  for (const auto& st : t.steps) {
    g += disc * st.r;
    disc *= 0.9;
  }
  CHECK(rollout_return(model, pi, 300, 0.9, 99) == Approx(g).epsilon(1e-12));
}
