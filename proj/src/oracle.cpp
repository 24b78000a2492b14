#include "pescal/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "pescal/learners.hpp"
#include "pescal/nuisance.hpp"

namespace pescal {

ExactMdp frontdoor_reduce(const M2dpModel& model, double gamma) {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in [0, 1)");
  const std::size_t nS = model.n_states(), nA = model.n_actions();
  ExactMdp mdp;
  mdp.gamma = gamma;
  mdp.r_bar = Table2({nS, nA});
  mdp.P = Table3({nS, nA, nS});
  mdp.rho0.assign(model.initial_state().begin(), model.initial_state().end());
  for (std::size_t s = 0; s < nS; ++s)
    for (std::size_t a = 0; a < nA; ++a)
      for (std::size_t c = 0; c < model.n_confounders(); ++c)
        for (std::size_t m = 0; m < model.n_mediators(); ++m) {
          const double w = model.p_c(s)[c] * model.p_m(s, a)[m];
          mdp.r_bar(s, a) += w * model.mean_reward(s, c, m);
          for (std::size_t sn = 0; sn < nS; ++sn) mdp.P(s, a, sn) += w * model.p_s(s, c, m)[sn];
        }
  return mdp;
}

namespace {

// Fixed-point iterations run in extended precision so the recorded deltas
// stay meaningful down to the stopping threshold.
#if defined(__SIZEOF_FLOAT128__)
using Wide = __float128;
#else
using Wide = long double;
#endif

Wide wabs(Wide x) { return x < 0 ? -x : x; }

Wide sup_gap(const std::vector<Wide>& a, const std::vector<Wide>& b) {
  Wide d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, wabs(a[i] - b[i]));
  return d;
}

double stop_threshold(double tol, double gamma) { return tol * (1.0 - gamma) / gamma; }

}  // namespace

ValueIterationResult value_iteration(const ExactMdp& mdp, double tol) {
  if (!(tol > 0.0)) throw ConfigError("tolerance must be positive");
  const std::size_t nS = mdp.r_bar.dim(0), nA = mdp.r_bar.dim(1);
  const Wide gamma = mdp.gamma;
  std::vector<Wide> q(nS * nA, Wide(0)), next(nS * nA), v(nS);
  ValueIterationResult out;
  while (true) {
    for (std::size_t s = 0; s < nS; ++s) {
      v[s] = q[s * nA];
      for (std::size_t a = 1; a < nA; ++a) v[s] = std::max(v[s], q[s * nA + a]);
    }
    for (std::size_t s = 0; s < nS; ++s)
      for (std::size_t a = 0; a < nA; ++a) {
        Wide future = 0;
        for (std::size_t sn = 0; sn < nS; ++sn) future += Wide(mdp.P(s, a, sn)) * v[sn];
        next[s * nA + a] = Wide(mdp.r_bar(s, a)) + gamma * future;
      }
    const double delta = static_cast<double>(sup_gap(next, q));
    q.swap(next);
    out.deltas.push_back(delta);
    if (mdp.gamma == 0.0 || delta <= stop_threshold(tol, mdp.gamma)) break;
    if (out.deltas.size() > 1000000) throw std::runtime_error("value iteration did not converge");
  }
  out.q = Table2({nS, nA});
  for (std::size_t i = 0; i < q.size(); ++i) out.q.values()[i] = static_cast<double>(q[i]);
  return out;
}

std::vector<double> solve_linear(std::vector<double> A, std::vector<double> b, std::size_t n) {
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(A[r * n + col]) > std::abs(A[pivot * n + col])) pivot = r;
    if (std::abs(A[pivot * n + col]) < 1e-300) throw std::runtime_error("singular linear system");
    if (pivot != col) {
      for (std::size_t k = 0; k < n; ++k) std::swap(A[col * n + k], A[pivot * n + k]);
      std::swap(b[col], b[pivot]);
    }
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = A[r * n + col] / A[col * n + col];
      for (std::size_t k = col; k < n; ++k) A[r * n + k] -= f * A[col * n + k];
      b[r] -= f * b[col];
    }
  }
  std::vector<double> x(n);
  for (std::size_t r = n; r-- > 0;) {
    double acc = b[r];
    for (std::size_t k = r + 1; k < n; ++k) acc -= A[r * n + k] * x[k];
    x[r] = acc / A[r * n + r];
  }
  return x;
}

namespace {

void check_policy(const ExactMdp& mdp, const DeterministicPolicy& pi) {
  if (pi.action.size() != mdp.r_bar.dim(0)) throw ConfigError("policy must be total on states");
  for (std::size_t a : pi.action)
    if (a >= mdp.r_bar.dim(1)) throw ConfigError("policy action outside support");
}

}  // namespace

std::vector<double> policy_state_values(const ExactMdp& mdp, const DeterministicPolicy& pi) {
  check_policy(mdp, pi);
  const std::size_t nS = mdp.r_bar.dim(0);
  std::vector<double> A(nS * nS, 0.0), b(nS);
  for (std::size_t s = 0; s < nS; ++s) {
    const std::size_t a = pi.action[s];
    b[s] = mdp.r_bar(s, a);
    for (std::size_t sn = 0; sn < nS; ++sn)
      A[s * nS + sn] = (s == sn ? 1.0 : 0.0) - mdp.gamma * mdp.P(s, a, sn);
  }
  return solve_linear(std::move(A), std::move(b), nS);
}

double exact_policy_value(const ExactMdp& mdp, const DeterministicPolicy& pi) {
  const auto v = policy_state_values(mdp, pi);
  double J = 0.0;
  for (std::size_t s = 0; s < v.size(); ++s) J += mdp.rho0[s] * v[s];
  return J;
}

std::vector<double> discounted_visitation(const ExactMdp& mdp, const DeterministicPolicy& pi) {
  check_policy(mdp, pi);
  const std::size_t nS = mdp.r_bar.dim(0);
  // Transposed system: (I - gamma P_pi)^T x = rho0.
  std::vector<double> A(nS * nS, 0.0);
  for (std::size_t s = 0; s < nS; ++s)
    for (std::size_t sn = 0; sn < nS; ++sn)
      A[sn * nS + s] = (s == sn ? 1.0 : 0.0) - mdp.gamma * mdp.P(s, pi.action[s], sn);
  auto x = solve_linear(std::move(A), mdp.rho0, nS);
  for (double& v : x) v *= (1.0 - mdp.gamma);
  return x;
}

OfflineConditionals offline_conditionals(const M2dpModel& model, bool confounded) {
  const std::size_t nS = model.n_states(), nA = model.n_actions(), nM = model.n_mediators(),
                    nC = model.n_confounders();
  OfflineConditionals out{Table3({nS, nA, nM}), Table4({nS, nA, nM, nS})};
  for (std::size_t s = 0; s < nS; ++s)
    for (std::size_t a = 0; a < nA; ++a) {
      // p(c | s, a) under the behavior law; M is independent of C given (S, A).
      std::vector<double> post(nC);
      double norm = 0.0;
      for (std::size_t c = 0; c < nC; ++c) {
        post[c] = model.p_c(s)[c] * (confounded ? model.p_a(s, c)[a] : 1.0);
        norm += post[c];
      }
      for (double& p : post) p /= norm;
      for (std::size_t m = 0; m < nM; ++m)
        for (std::size_t c = 0; c < nC; ++c) {
          out.mean_reward(s, a, m) += post[c] * model.mean_reward(s, c, m);
          for (std::size_t sn = 0; sn < nS; ++sn)
            out.P(s, a, m, sn) += post[c] * model.p_s(s, c, m)[sn];
        }
    }
  return out;
}

MediatedQStarResult mediated_qstar(const M2dpModel& model, double gamma, double tol) {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in [0, 1)");
  if (!(tol > 0.0)) throw ConfigError("tolerance must be positive");
  const auto cond = offline_conditionals(model, model.spec().confounded);
  const auto& pm = model.mediator_table();
  const auto& pb = model.behavior_table();
  const std::size_t nS = model.n_states(), nA = model.n_actions(), nM = model.n_mediators();
  const Wide g = gamma;
  auto at = [&](std::size_t s, std::size_t a, std::size_t m) { return (s * nA + a) * nM + m; };
  auto apply = [&](const std::vector<Wide>& Q, std::vector<Wide>& next) {
    std::vector<Wide> v(nS);
    for (std::size_t s = 0; s < nS; ++s)
      for (std::size_t a = 0; a < nA; ++a) {
        Wide total = 0;
        for (std::size_t an = 0; an < nA; ++an) {
          Wide inner = 0;
          for (std::size_t m = 0; m < nM; ++m) inner += Wide(pm(s, a, m)) * Q[at(s, an, m)];
          total += Wide(pb(s, an)) * inner;
        }
        v[s] = a == 0 ? total : std::max(v[s], total);
      }
    for (std::size_t s = 0; s < nS; ++s)
      for (std::size_t a = 0; a < nA; ++a)
        for (std::size_t m = 0; m < nM; ++m) {
          Wide future = 0;
          for (std::size_t sn = 0; sn < nS; ++sn) future += Wide(cond.P(s, a, m, sn)) * v[sn];
          next[at(s, a, m)] = Wide(cond.mean_reward(s, a, m)) + g * future;
        }
  };
  std::vector<Wide> Q(nS * nA * nM, Wide(0)), next(Q.size());
  MediatedQStarResult out;
  while (true) {
    apply(Q, next);
    const double delta = static_cast<double>(sup_gap(next, Q));
    Q.swap(next);
    out.deltas.push_back(delta);
    if (gamma == 0.0 || delta <= stop_threshold(tol, gamma)) break;
    if (out.deltas.size() > 1000000) throw std::runtime_error("mediated Q* did not converge");
  }
  apply(Q, next);
  out.residual = static_cast<double>(sup_gap(next, Q));
  out.Q = Table3({nS, nA, nM});
  for (std::size_t i = 0; i < Q.size(); ++i) out.Q.values()[i] = static_cast<double>(Q[i]);
  return out;
}

std::vector<double> behavior_stationary_distribution(const M2dpModel& model, bool confounded) {
  const std::size_t nS = model.n_states();
  Table2 K({nS, nS});
  for (std::size_t s = 0; s < nS; ++s)
    for (std::size_t c = 0; c < model.n_confounders(); ++c)
      for (std::size_t a = 0; a < model.n_actions(); ++a) {
        const double pa = confounded ? model.p_a(s, c)[a] : model.p_b(s)[a];
        for (std::size_t m = 0; m < model.n_mediators(); ++m)
          for (std::size_t sn = 0; sn < nS; ++sn)
            K(s, sn) += model.p_c(s)[c] * pa * model.p_m(s, a)[m] * model.p_s(s, c, m)[sn];
      }
  std::vector<double> rho(model.initial_state().begin(), model.initial_state().end());
  for (int it = 0; it < 1000000; ++it) {
    std::vector<double> next(nS, 0.0);
    for (std::size_t s = 0; s < nS; ++s)
      for (std::size_t sn = 0; sn < nS; ++sn) next[sn] += rho[s] * K(s, sn);
    double change = 0.0;
    for (std::size_t s = 0; s < nS; ++s) change = std::max(change, std::abs(next[s] - rho[s]));
    rho = std::move(next);
    if (change <= 1e-12) break;
  }
  return rho;
}

CoverageConstants coverage_constants(const M2dpModel& model, double gamma) {
  const ExactMdp mdp = frontdoor_reduce(model, gamma);
  const auto vi = value_iteration(mdp);
  const auto pi_star = greedy_policy(vi.q);
  CoverageConstants cc;
  for (std::size_t s = 0; s < model.n_states(); ++s) {
    for (std::size_t a = 0; a < model.n_actions(); ++a) {
      const double p = model.p_b(s)[a];
      if (p <= 0.0) cc.c2_infinite = true;
      else cc.c2 = std::max(cc.c2, 1.0 / p);
    }
    const double p_star = model.p_b(s)[pi_star.action[s]];
    if (p_star <= 0.0) cc.c3_infinite = true;
    else cc.c3 = std::max(cc.c3, 1.0 / p_star);
  }
  if (cc.c2_infinite) cc.c2 = std::numeric_limits<double>::infinity();
  if (cc.c3_infinite) cc.c3 = std::numeric_limits<double>::infinity();
  const auto rho_d = behavior_stationary_distribution(model, model.spec().confounded);
  for (const auto& pi : enumerate_policies(model.n_states(), model.n_actions())) {
    const auto rho_pi = discounted_visitation(mdp, pi);
    for (std::size_t s = 0; s < rho_pi.size(); ++s)
      cc.c1 = std::max(cc.c1, rho_d[s] > 0.0 ? rho_pi[s] / rho_d[s]
                                             : std::numeric_limits<double>::infinity());
  }
  return cc;
}

OracleSolution solve_oracle(const M2dpModel& model, double gamma) {
  OracleSolution sol;
  sol.gamma = gamma;
  sol.mdp = frontdoor_reduce(model, gamma);
  auto vi = value_iteration(sol.mdp);
  sol.q_star = std::move(vi.q);
  sol.vi_deltas = std::move(vi.deltas);
  sol.pi_star = greedy_policy(sol.q_star);
  sol.J_star = exact_policy_value(sol.mdp, sol.pi_star);
  auto mq = mediated_qstar(model, gamma);
  sol.mediated_Q_star = std::move(mq.Q);
  sol.mediated_deltas = std::move(mq.deltas);
  sol.mediated_residual = mq.residual;
  for (auto& pi : enumerate_policies(model.n_states(), model.n_actions())) {
    const double J = exact_policy_value(sol.mdp, pi);
    sol.all_policies.push_back({std::move(pi), J, regret(sol.J_star, J)});
  }
  sol.coverage = coverage_constants(model, gamma);
  return sol;
}

namespace {

nlohmann::json finite_or_null(double v) {
  return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

}  // namespace

nlohmann::json oracle_report(const OracleSolution& sol, const Supports& sup) {
  nlohmann::json policies = nlohmann::json::array();
  for (const auto& pv : sol.all_policies)
    policies.push_back({{"policy", policy_to_json(pv.policy, sup)}, {"J", pv.J}, {"regret", pv.regret}});
  return {{"gamma", sol.gamma},
          {"states", sup.states},
          {"actions", sup.actions},
          {"mediators", sup.mediators},
          {"r_bar", table_to_json(sol.mdp.r_bar)},
          {"q_star", table_to_json(sol.q_star)},
          {"pi_star", policy_to_json(sol.pi_star, sup)},
          {"J_star", sol.J_star},
          {"mediated_Q_star", table_to_json(sol.mediated_Q_star)},
          {"mediated_residual", sol.mediated_residual},
          {"c1", finite_or_null(sol.coverage.c1)},
          {"c2", finite_or_null(sol.coverage.c2)},
          {"c3", finite_or_null(sol.coverage.c3)},
          {"c2_infinite", sol.coverage.c2_infinite},
          {"c3_infinite", sol.coverage.c3_infinite},
          {"contraction_trace",
           {{"value_iteration", sol.vi_deltas}, {"mediated_qstar", sol.mediated_deltas}}},
          {"policies", policies}};
}

}  // namespace pescal
