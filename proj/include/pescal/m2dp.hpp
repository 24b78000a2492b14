#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "pescal/table.hpp"

namespace pescal {

/// Raised for malformed specs, configs and out-of-support values.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Ordered label sets of the observed variables.
struct Supports {
  std::vector<int> states;
  std::vector<int> actions;
  std::vector<int> mediators;
  std::vector<int> rewards;

  std::size_t state_index(int label) const;
  std::size_t action_index(int label) const;
  std::size_t mediator_index(int label) const;
  std::size_t reward_index(int label) const;

  bool operator==(const Supports&) const = default;
};

/**
 * Logistic synthetic M2DP. Variables are binary except the action, which
 * takes three values (low, middle, high):
 *
 *   P(C = c_hi | S)       = sig(coef_c[0]*S)
 *   P(A = a_lo | S, C)    = P(A = a_hi | S, C) = sig(coef_a[0]*S + coef_a[1]*C) / 2
 *   P(M = m_lo | S, A)    = sig(coef_m[0]*S + coef_m[1]*A), floored at mediator_floor
 *   P(R = r_hi | S, C, M) = sig(coef_r[0]*C + coef_r[1]*S + coef_r[2]*M)
 *   P(S'= s_hi | S, C, M) = sig(coef_snext[0]*C + coef_snext[1]*S + coef_snext[2]*M)
 *
 * Logits use the integer labels as covariates. The initial state is uniform.
 * The defaults give the standard two-state benchmark.
 */
struct SyntheticM2dpSpec {
  std::vector<int> state_values{0, 1};
  std::vector<int> action_values{-1, 0, 1};
  std::vector<int> mediator_values{0, 1};
  std::vector<int> reward_values{-1, 1};
  std::vector<int> confounder_values{-1, 1};
  std::vector<double> coef_c{0.1};
  std::vector<double> coef_a{1.0, 2.0};
  std::vector<double> coef_m{0.1, 1.0};
  std::vector<double> coef_r{2.0, 0.1, 2.0};
  std::vector<double> coef_snext{2.0, 0.1, 2.0};
  double mediator_floor = 1e-5;
  bool confounded = true;

  /// Throws ConfigError on any violated invariant.
  void validate() const;
  Supports supports() const;
  double r_max() const;

  bool operator==(const SyntheticM2dpSpec&) const = default;
};

void to_json(nlohmann::json& j, const SyntheticM2dpSpec& spec);
void from_json(const nlohmann::json& j, SyntheticM2dpSpec& spec);

/// FNV-1a 64 of the canonical JSON dump.
std::uint64_t fingerprint(const SyntheticM2dpSpec& spec);
std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t v);

/// Numerically stable logistic function.
double sigmoid(double x);

/// Replaces entries below `floor` by `floor` and rescales the others so the
/// vector sums to one.
void apply_floor(std::span<double> probs, double floor);

enum class Distribution { Confounder, Behavior, Mediator, Reward, NextState };
enum class Variable { S, C, A, M };
using Assignment = std::map<Variable, int>;

Distribution distribution_from_string(const std::string& name);

/// Probability vector of the selected variable given exactly its parents
/// (Confounder: S; Behavior: S,C; Mediator: S,A; Reward and NextState: S,C,M).
std::vector<double> conditional(const SyntheticM2dpSpec& spec, Distribution which,
                                const Assignment& parents);

/// Confounder-marginalized behavior policy p_b(a|s).
std::vector<double> marginal_behavior(const SyntheticM2dpSpec& spec, int s);

struct DeterministicPolicy {
  std::vector<std::size_t> action;  // action index per state index

  bool operator==(const DeterministicPolicy&) const = default;
};

/// Every deterministic stationary policy, in lexicographic index order.
std::vector<DeterministicPolicy> enumerate_policies(std::size_t n_states, std::size_t n_actions);

nlohmann::json policy_to_json(const DeterministicPolicy& pi, const Supports& sup);
DeterministicPolicy policy_from_json(const nlohmann::json& j, const Supports& sup);

/**
 * Index-based conditional tables built once from a spec. Immutable after
 * construction and safe to share between threads.
 */
class M2dpModel {
 public:
  explicit M2dpModel(SyntheticM2dpSpec spec);

  const SyntheticM2dpSpec& spec() const { return spec_; }
  const Supports& supports() const { return supports_; }
  std::uint64_t fingerprint() const { return fingerprint_; }

  std::size_t n_states() const { return supports_.states.size(); }
  std::size_t n_actions() const { return supports_.actions.size(); }
  std::size_t n_mediators() const { return supports_.mediators.size(); }
  std::size_t n_rewards() const { return supports_.rewards.size(); }
  std::size_t n_confounders() const { return spec_.confounder_values.size(); }

  std::span<const double> p_c(std::size_t s) const { return pc_.row(s); }
  std::span<const double> p_a(std::size_t s, std::size_t c) const { return pa_.row(s, c); }
  std::span<const double> p_b(std::size_t s) const { return pb_.row(s); }
  std::span<const double> p_m(std::size_t s, std::size_t a) const { return pm_.row(s, a); }
  std::span<const double> p_r(std::size_t s, std::size_t c, std::size_t m) const {
    return pr_.row(s, c, m);
  }
  std::span<const double> p_s(std::size_t s, std::size_t c, std::size_t m) const {
    return ps_.row(s, c, m);
  }
  /// E[R | s, c, m].
  double mean_reward(std::size_t s, std::size_t c, std::size_t m) const;

  const Table2& behavior_table() const { return pb_; }
  const Table3& mediator_table() const { return pm_; }
  std::span<const double> initial_state() const { return rho0_; }

 private:
  SyntheticM2dpSpec spec_;
  Supports supports_;
  std::uint64_t fingerprint_;
  Table2 pc_;
  Table3 pa_;
  Table2 pb_;
  Table3 pm_;
  Table4 pr_;
  Table4 ps_;
  std::vector<double> rho0_;
};

/// One joint outcome of a single offline transition with its probability.
struct TransitionProb {
  std::size_t s, a, m, r, s_next;
  double prob;
};

/**
 * Exact joint law of (S, A, M, R, S') for one behavior-mode step with
 * S ~ state_weights; C is summed out. Uses the unconfounded behavior when
 * `confounded` is false.
 */
std::vector<TransitionProb> offline_transition_law(const M2dpModel& model,
                                                   std::span<const double> state_weights,
                                                   bool confounded);

struct BehaviorConfounded {};
struct BehaviorUnconfounded {};
struct Intervention {
  DeterministicPolicy policy;
};
/// Intervention with a state-dependent action distribution (rows per state).
struct StochasticIntervention {
  Table2 probs;
};
using RolloutMode =
    std::variant<BehaviorConfounded, BehaviorUnconfounded, Intervention, StochasticIntervention>;

std::string mode_tag(const RolloutMode& mode);

/// Labels of one step; c is the latent confounder, kept for diagnostics only.
struct Step {
  int s, c, a, m, r, s_next;
  bool operator==(const Step&) const = default;
};

struct Trajectory {
  std::vector<Step> steps;
  std::uint64_t seed = 0;
  std::string mode;
  std::uint64_t spec_fingerprint = 0;

  bool operator==(const Trajectory&) const = default;
};

/**
 * Samples `horizon` steps. One uniform is consumed for S_0, then exactly five
 * per step in the order C, A, M, R, S' regardless of mode, so equal seeds
 * give aligned random streams across modes.
 */
Trajectory sample_trajectory(const M2dpModel& model, const RolloutMode& mode,
                             std::size_t horizon, std::uint64_t seed);
Trajectory sample_trajectory(const SyntheticM2dpSpec& spec, const RolloutMode& mode,
                             std::size_t horizon, std::uint64_t seed);

/// Discounted return of a policy rollout without materializing the trajectory.
double rollout_return(const M2dpModel& model, const DeterministicPolicy& pi,
                      std::size_t horizon, double gamma, std::uint64_t seed);

}  // namespace pescal
