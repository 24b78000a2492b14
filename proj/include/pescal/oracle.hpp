#pragma once

#include <span>
#include <vector>

#include <json.hpp>

#include "pescal/m2dp.hpp"
#include "pescal/table.hpp"

namespace pescal {

/// Interventional (front-door reduced) MDP over the observed state.
struct ExactMdp {
  Table2 r_bar;  // mean reward [s][a]
  Table3 P;      // kernel [s][a][s']
  double gamma = 0.95;
  std::vector<double> rho0;
};

ExactMdp frontdoor_reduce(const M2dpModel& model, double gamma);

struct ValueIterationResult {
  Table2 q;
  std::vector<double> deltas;  // sup-norm change per iteration
};

/// Iterates until the change is at most tol (1 - gamma) / gamma, which bounds
/// the sup-norm error by tol.
ValueIterationResult value_iteration(const ExactMdp& mdp, double tol = 1e-10);

/// State values of a deterministic policy by a direct linear solve.
std::vector<double> policy_state_values(const ExactMdp& mdp, const DeterministicPolicy& pi);
double exact_policy_value(const ExactMdp& mdp, const DeterministicPolicy& pi);

/// gamma-discounted state visitation (1 - gamma) rho0^T (I - gamma P_pi)^-1.
std::vector<double> discounted_visitation(const ExactMdp& mdp, const DeterministicPolicy& pi);

/// Observational conditionals E[R | s,a,m] and P(s' | s,a,m) under the
/// behavior law selected by `confounded`.
struct OfflineConditionals {
  Table3 mean_reward;  // [s][a][m]
  Table4 P;            // [s][a][m][s']
};
OfflineConditionals offline_conditionals(const M2dpModel& model, bool confounded);

struct MediatedQStarResult {
  Table3 Q;
  std::vector<double> deltas;
  double residual = 0.0;  // sup-norm of T(Q) - Q at the returned Q
};

/// Fixed point of the mediated Bellman optimality operator built from the
/// true p_m, the true marginal p_b and the offline conditionals.
MediatedQStarResult mediated_qstar(const M2dpModel& model, double gamma, double tol = 1e-8);

/// Stationary law of the behavior-mode state chain (power iteration to 1e-12).
std::vector<double> behavior_stationary_distribution(const M2dpModel& model, bool confounded);

struct CoverageConstants {
  double c1 = 0.0;
  double c2 = 0.0;
  double c3 = 0.0;
  bool c2_infinite = false;
  bool c3_infinite = false;
};

CoverageConstants coverage_constants(const M2dpModel& model, double gamma);

inline double regret(double J_star, double J_pi) { return J_star - J_pi; }

struct PolicyValue {
  DeterministicPolicy policy;
  double J = 0.0;
  double regret = 0.0;
};

struct OracleSolution {
  double gamma = 0.95;
  ExactMdp mdp;
  Table2 q_star;
  DeterministicPolicy pi_star;
  double J_star = 0.0;
  Table3 mediated_Q_star;
  double mediated_residual = 0.0;
  std::vector<double> vi_deltas;
  std::vector<double> mediated_deltas;
  std::vector<PolicyValue> all_policies;
  CoverageConstants coverage;
};

OracleSolution solve_oracle(const M2dpModel& model, double gamma);

nlohmann::json oracle_report(const OracleSolution& sol, const Supports& sup);

/// Solves A x = b by Gaussian elimination with partial pivoting.
std::vector<double> solve_linear(std::vector<double> A, std::vector<double> b, std::size_t n);

}  // namespace pescal
