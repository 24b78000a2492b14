#include "pescal/m2dp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "pescal/random.hpp"

namespace pescal {

namespace {

std::size_t index_in(const std::vector<int>& values, int label, const char* what) {
  auto it = std::find(values.begin(), values.end(), label);
  if (it == values.end())
    throw ConfigError(std::string(what) + " label " + std::to_string(label) + " outside support");
  return static_cast<std::size_t>(it - values.begin());
}

void check_support(const std::vector<int>& values, std::size_t expected, const char* name) {
  if (values.size() != expected)
    throw ConfigError(std::string(name) + " must have " + std::to_string(expected) + " values");
  if (!std::is_sorted(values.begin(), values.end()) ||
      std::adjacent_find(values.begin(), values.end()) != values.end())
    throw ConfigError(std::string(name) + " must be strictly increasing");
}

void check_coefs(const std::vector<double>& coefs, std::size_t expected, const char* name) {
  if (coefs.size() != expected)
    throw ConfigError(std::string(name) + " must have " + std::to_string(expected) + " entries");
  for (double w : coefs)
    if (!std::isfinite(w)) throw ConfigError(std::string(name) + " has a non-finite entry");
}

// Binary distribution with P(high) = p_hi, ordered (low, high).
std::vector<double> binary(double p_hi) { return {1.0 - p_hi, p_hi}; }

std::vector<double> behavior_probs(const SyntheticM2dpSpec& spec, int s, int c) {
  const double p = sigmoid(spec.coef_a[0] * s + spec.coef_a[1] * c);
  return {0.5 * p, 1.0 - p, 0.5 * p};
}

std::vector<double> mediator_probs(const SyntheticM2dpSpec& spec, int s, int a) {
  const double p_lo = sigmoid(spec.coef_m[0] * s + spec.coef_m[1] * a);
  std::vector<double> probs{p_lo, 1.0 - p_lo};
  apply_floor(probs, spec.mediator_floor);
  return probs;
}

std::vector<double> reward_probs(const SyntheticM2dpSpec& spec, int s, int c, int m) {
  return binary(sigmoid(spec.coef_r[0] * c + spec.coef_r[1] * s + spec.coef_r[2] * m));
}

std::vector<double> next_state_probs(const SyntheticM2dpSpec& spec, int s, int c, int m) {
  return binary(sigmoid(spec.coef_snext[0] * c + spec.coef_snext[1] * s + spec.coef_snext[2] * m));
}

}  // namespace

std::size_t Supports::state_index(int label) const { return index_in(states, label, "state"); }
std::size_t Supports::action_index(int label) const { return index_in(actions, label, "action"); }
std::size_t Supports::mediator_index(int label) const {
  return index_in(mediators, label, "mediator");
}
std::size_t Supports::reward_index(int label) const { return index_in(rewards, label, "reward"); }

void SyntheticM2dpSpec::validate() const {
  check_support(state_values, 2, "state_values");
  check_support(action_values, 3, "action_values");
  check_support(mediator_values, 2, "mediator_values");
  check_support(reward_values, 2, "reward_values");
  check_support(confounder_values, 2, "confounder_values");
  check_coefs(coef_c, 1, "coef_c");
  check_coefs(coef_a, 2, "coef_a");
  check_coefs(coef_m, 2, "coef_m");
  check_coefs(coef_r, 3, "coef_r");
  check_coefs(coef_snext, 3, "coef_snext");
  if (!(mediator_floor > 0.0 && mediator_floor < 0.5))
    throw ConfigError("mediator_floor must lie in (0, 0.5)");
}

Supports SyntheticM2dpSpec::supports() const {
  return {state_values, action_values, mediator_values, reward_values};
}

double SyntheticM2dpSpec::r_max() const {
  double r = 0.0;
  for (int v : reward_values) r = std::max(r, std::abs(static_cast<double>(v)));
  return r;
}

void to_json(nlohmann::json& j, const SyntheticM2dpSpec& spec) {
  j = nlohmann::json{{"state_values", spec.state_values},
                     {"action_values", spec.action_values},
                     {"mediator_values", spec.mediator_values},
                     {"reward_values", spec.reward_values},
                     {"confounder_values", spec.confounder_values},
                     {"coef_c", spec.coef_c},
                     {"coef_a", spec.coef_a},
                     {"coef_m", spec.coef_m},
                     {"coef_r", spec.coef_r},
                     {"coef_snext", spec.coef_snext},
                     {"mediator_floor", spec.mediator_floor},
                     {"confounded", spec.confounded}};
}

void from_json(const nlohmann::json& j, SyntheticM2dpSpec& spec) {
  if (!j.is_object()) throw ConfigError("spec must be a JSON object");
  static const char* const known[] = {
      "state_values", "action_values", "mediator_values", "reward_values", "confounder_values",
      "coef_c",       "coef_a",        "coef_m",          "coef_r",        "coef_snext",
      "mediator_floor", "confounded"};
  for (const auto& [key, _] : j.items())
    if (std::find_if(std::begin(known), std::end(known),
                     [&](const char* k) { return key == k; }) == std::end(known))
      throw ConfigError("unknown spec key '" + key + "'");
  SyntheticM2dpSpec out;
  try {
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) j.at(key).get_to(field);
    };
    get("state_values", out.state_values);
    get("action_values", out.action_values);
    get("mediator_values", out.mediator_values);
    get("reward_values", out.reward_values);
    get("confounder_values", out.confounder_values);
    get("coef_c", out.coef_c);
    get("coef_a", out.coef_a);
    get("coef_m", out.coef_m);
    get("coef_r", out.coef_r);
    get("coef_snext", out.coef_snext);
    get("mediator_floor", out.mediator_floor);
    get("confounded", out.confounded);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad spec field: ") + e.what());
  }
  out.validate();
  spec = std::move(out);
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t fingerprint(const SyntheticM2dpSpec& spec) {
  return fnv1a64(nlohmann::json(spec).dump());
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void apply_floor(std::span<double> probs, double floor) {
  // Iterate because rescaling the free entries can push one under the floor.
  std::vector<bool> pinned(probs.size(), false);
  for (std::size_t pass = 0; pass < probs.size(); ++pass) {
    bool changed = false;
    for (std::size_t i = 0; i < probs.size(); ++i)
      if (!pinned[i] && probs[i] < floor) {
        pinned[i] = true;
        changed = true;
      }
    if (!changed) break;
    double pinned_mass = 0.0, free_mass = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      if (pinned[i])
        pinned_mass += floor;
      else
        free_mass += probs[i];
    }
    const double scale = free_mass > 0.0 ? (1.0 - pinned_mass) / free_mass : 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) probs[i] = pinned[i] ? floor : probs[i] * scale;
  }
}

Distribution distribution_from_string(const std::string& name) {
  if (name == "confounder") return Distribution::Confounder;
  if (name == "behavior") return Distribution::Behavior;
  if (name == "mediator") return Distribution::Mediator;
  if (name == "reward") return Distribution::Reward;
  if (name == "next_state") return Distribution::NextState;
  throw ConfigError("unknown distribution selector '" + name + "'");
}

std::vector<double> conditional(const SyntheticM2dpSpec& spec, Distribution which,
                                const Assignment& parents) {
  std::vector<Variable> required;
  switch (which) {
    case Distribution::Confounder: required = {Variable::S}; break;
    case Distribution::Behavior: required = {Variable::S, Variable::C}; break;
    case Distribution::Mediator: required = {Variable::S, Variable::A}; break;
    case Distribution::Reward:
    case Distribution::NextState: required = {Variable::S, Variable::C, Variable::M}; break;
    default: throw ConfigError("unknown distribution selector");
  }
  if (parents.size() != required.size())
    throw ConfigError("conditioning must supply exactly the parents of the selected variable");
  for (Variable v : required)
    if (!parents.contains(v))
      throw ConfigError("conditioning is missing a parent of the selected variable");

  auto value = [&](Variable v) {
    const int label = parents.at(v);
    switch (v) {
      case Variable::S: index_in(spec.state_values, label, "state"); break;
      case Variable::C: index_in(spec.confounder_values, label, "confounder"); break;
      case Variable::A: index_in(spec.action_values, label, "action"); break;
      case Variable::M: index_in(spec.mediator_values, label, "mediator"); break;
    }
    return label;
  };

  switch (which) {
    case Distribution::Confounder: return binary(sigmoid(spec.coef_c[0] * value(Variable::S)));
    case Distribution::Behavior:
      return behavior_probs(spec, value(Variable::S), value(Variable::C));
    case Distribution::Mediator:
      return mediator_probs(spec, value(Variable::S), value(Variable::A));
    case Distribution::Reward:
      return reward_probs(spec, value(Variable::S), value(Variable::C), value(Variable::M));
    case Distribution::NextState:
      return next_state_probs(spec, value(Variable::S), value(Variable::C), value(Variable::M));
  }
  throw ConfigError("unknown distribution selector");
}

std::vector<double> marginal_behavior(const SyntheticM2dpSpec& spec, int s) {
  index_in(spec.state_values, s, "state");
  const auto pc = binary(sigmoid(spec.coef_c[0] * s));
  std::vector<double> pb(spec.action_values.size(), 0.0);
  for (std::size_t c = 0; c < spec.confounder_values.size(); ++c) {
    const auto pa = behavior_probs(spec, s, spec.confounder_values[c]);
    for (std::size_t a = 0; a < pb.size(); ++a) pb[a] += pc[c] * pa[a];
  }
  return pb;
}

std::vector<DeterministicPolicy> enumerate_policies(std::size_t n_states, std::size_t n_actions) {
  std::size_t total = 1;
  for (std::size_t s = 0; s < n_states; ++s) total *= n_actions;
  std::vector<DeterministicPolicy> out;
  out.reserve(total);
  for (std::size_t code = 0; code < total; ++code) {
    DeterministicPolicy pi{std::vector<std::size_t>(n_states, 0)};
    std::size_t rest = code;
    for (std::size_t s = n_states; s-- > 0;) {
      pi.action[s] = rest % n_actions;
      rest /= n_actions;
    }
    out.push_back(std::move(pi));
  }
  return out;
}

nlohmann::json policy_to_json(const DeterministicPolicy& pi, const Supports& sup) {
  nlohmann::json j = nlohmann::json::object();
  for (std::size_t s = 0; s < pi.action.size(); ++s)
    j[std::to_string(sup.states[s])] = sup.actions[pi.action[s]];
  return j;
}

DeterministicPolicy policy_from_json(const nlohmann::json& j, const Supports& sup) {
  if (!j.is_object()) throw ConfigError("policy must be an object mapping state to action");
  DeterministicPolicy pi{std::vector<std::size_t>(sup.states.size(), 0)};
  std::vector<bool> seen(sup.states.size(), false);
  for (const auto& [key, value] : j.items()) {
    int label = 0;
    try {
      label = std::stoi(key);
    } catch (const std::exception&) {
      throw ConfigError("policy key '" + key + "' is not an integer state");
    }
    const std::size_t s = sup.state_index(label);
    if (!value.is_number_integer()) throw ConfigError("policy action must be an integer");
    pi.action[s] = sup.action_index(value.get<int>());
    seen[s] = true;
  }
  if (std::find(seen.begin(), seen.end(), false) != seen.end())
    throw ConfigError("policy must be total on the state support");
  return pi;
}

M2dpModel::M2dpModel(SyntheticM2dpSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  supports_ = spec_.supports();
  fingerprint_ = pescal::fingerprint(spec_);
  const std::size_t nS = n_states(), nA = n_actions(), nM = n_mediators(), nR = n_rewards(),
                    nC = n_confounders();
  pc_ = Table2({nS, nC});
  pa_ = Table3({nS, nC, nA});
  pb_ = Table2({nS, nA});
  pm_ = Table3({nS, nA, nM});
  pr_ = Table4({nS, nC, nM, nR});
  ps_ = Table4({nS, nC, nM, nS});
  for (std::size_t s = 0; s < nS; ++s) {
    const int sl = spec_.state_values[s];
    std::ranges::copy(conditional(spec_, Distribution::Confounder, {{Variable::S, sl}}),
                      pc_.row(s).begin());
    std::ranges::copy(marginal_behavior(spec_, sl), pb_.row(s).begin());
    for (std::size_t c = 0; c < nC; ++c) {
      const int cl = spec_.confounder_values[c];
      std::ranges::copy(conditional(spec_, Distribution::Behavior, {{Variable::S, sl}, {Variable::C, cl}}),
                        pa_.row(s, c).begin());
      for (std::size_t m = 0; m < nM; ++m) {
        const Assignment parents{{Variable::S, sl}, {Variable::C, cl}, {Variable::M, spec_.mediator_values[m]}};
        std::ranges::copy(conditional(spec_, Distribution::Reward, parents), pr_.row(s, c, m).begin());
        std::ranges::copy(conditional(spec_, Distribution::NextState, parents),
                          ps_.row(s, c, m).begin());
      }
    }
    for (std::size_t a = 0; a < nA; ++a)
      std::ranges::copy(conditional(spec_, Distribution::Mediator,
                                    {{Variable::S, sl}, {Variable::A, spec_.action_values[a]}}),
                        pm_.row(s, a).begin());
  }
  rho0_.assign(nS, 1.0 / static_cast<double>(nS));
}

double M2dpModel::mean_reward(std::size_t s, std::size_t c, std::size_t m) const {
  auto probs = p_r(s, c, m);
  double mean = 0.0;
  for (std::size_t r = 0; r < probs.size(); ++r) mean += probs[r] * supports_.rewards[r];
  return mean;
}

std::vector<TransitionProb> offline_transition_law(const M2dpModel& model,
                                                   std::span<const double> state_weights,
                                                   bool confounded) {
  std::vector<TransitionProb> law;
  const std::size_t nS = model.n_states();
  Table4 joint({nS, model.n_actions(), model.n_mediators(), model.n_rewards() * nS});
  for (std::size_t s = 0; s < nS; ++s)
    for (std::size_t c = 0; c < model.n_confounders(); ++c)
      for (std::size_t a = 0; a < model.n_actions(); ++a) {
        const double pa = confounded ? model.p_a(s, c)[a] : model.p_b(s)[a];
        const double w_sca = state_weights[s] * model.p_c(s)[c] * pa;
        for (std::size_t m = 0; m < model.n_mediators(); ++m) {
          const double w = w_sca * model.p_m(s, a)[m];
          for (std::size_t r = 0; r < model.n_rewards(); ++r)
            for (std::size_t sn = 0; sn < nS; ++sn)
              joint(s, a, m, r * nS + sn) += w * model.p_r(s, c, m)[r] * model.p_s(s, c, m)[sn];
        }
      }
  for (std::size_t s = 0; s < nS; ++s)
    for (std::size_t a = 0; a < model.n_actions(); ++a)
      for (std::size_t m = 0; m < model.n_mediators(); ++m)
        for (std::size_t r = 0; r < model.n_rewards(); ++r)
          for (std::size_t sn = 0; sn < nS; ++sn)
            law.push_back({s, a, m, r, sn, joint(s, a, m, r * nS + sn)});
  return law;
}

std::string mode_tag(const RolloutMode& mode) {
  struct Visitor {
    std::string operator()(const BehaviorConfounded&) const { return "behavior-confounded"; }
    std::string operator()(const BehaviorUnconfounded&) const { return "behavior-unconfounded"; }
    std::string operator()(const Intervention&) const { return "intervention"; }
    std::string operator()(const StochasticIntervention&) const { return "intervention-stochastic"; }
  };
  return std::visit(Visitor{}, mode);
}

namespace {

struct Draw {
  std::size_t c, a, m, r, s_next;
};

// Shared step kernel so trajectory sampling and return-only rollouts consume
// identical random streams.
template <typename ActionFn>
Draw step(const M2dpModel& model, std::size_t s, Xoshiro256& rng, ActionFn&& choose_action) {
  Draw d{};
  d.c = draw_index(model.p_c(s), rng.uniform());
  d.a = choose_action(s, d.c, rng.uniform());
  d.m = draw_index(model.p_m(s, d.a), rng.uniform());
  d.r = draw_index(model.p_r(s, d.c, d.m), rng.uniform());
  d.s_next = draw_index(model.p_s(s, d.c, d.m), rng.uniform());
  return d;
}

auto action_chooser(const M2dpModel& model, const RolloutMode& mode) {
  return [&model, &mode](std::size_t s, std::size_t c, double u) -> std::size_t {
    if (std::holds_alternative<BehaviorConfounded>(mode)) return draw_index(model.p_a(s, c), u);
    if (std::holds_alternative<BehaviorUnconfounded>(mode)) return draw_index(model.p_b(s), u);
    if (const auto* iv = std::get_if<Intervention>(&mode)) return iv->policy.action[s];
    return draw_index(std::get<StochasticIntervention>(mode).probs.row(s), u);
  };
}

void check_mode(const M2dpModel& model, const RolloutMode& mode) {
  if (const auto* iv = std::get_if<Intervention>(&mode)) {
    if (iv->policy.action.size() != model.n_states())
      throw ConfigError("intervention policy must be total on the state support");
    for (std::size_t a : iv->policy.action)
      if (a >= model.n_actions()) throw ConfigError("intervention policy action outside support");
  }
  if (const auto* sv = std::get_if<StochasticIntervention>(&mode)) {
    if (sv->probs.dim(0) != model.n_states() || sv->probs.dim(1) != model.n_actions())
      throw ConfigError("stochastic intervention table has the wrong shape");
  }
}

}  // namespace

Trajectory sample_trajectory(const M2dpModel& model, const RolloutMode& mode,
                             std::size_t horizon, std::uint64_t seed) {
  if (horizon == 0) throw ConfigError("horizon must be positive");
  check_mode(model, mode);
  const auto& sup = model.supports();
  const auto& cvals = model.spec().confounder_values;
  Trajectory traj;
  traj.seed = seed;
  traj.mode = mode_tag(mode);
  traj.spec_fingerprint = model.fingerprint();
  traj.steps.reserve(horizon);
  Xoshiro256 rng(seed);
  auto choose = action_chooser(model, mode);
  std::size_t s = draw_index(model.initial_state(), rng.uniform());
  for (std::size_t t = 0; t < horizon; ++t) {
    const Draw d = step(model, s, rng, choose);
    traj.steps.push_back({sup.states[s], cvals[d.c], sup.actions[d.a], sup.mediators[d.m],
                          sup.rewards[d.r], sup.states[d.s_next]});
    s = d.s_next;
  }
  return traj;
}

Trajectory sample_trajectory(const SyntheticM2dpSpec& spec, const RolloutMode& mode,
                             std::size_t horizon, std::uint64_t seed) {
  return sample_trajectory(M2dpModel(spec), mode, horizon, seed);
}

double rollout_return(const M2dpModel& model, const DeterministicPolicy& pi,
                      std::size_t horizon, double gamma, std::uint64_t seed) {
  const RolloutMode mode = Intervention{pi};
  check_mode(model, mode);
  const auto& rewards = model.supports().rewards;
  Xoshiro256 rng(seed);
  auto choose = action_chooser(model, mode);
  std::size_t s = draw_index(model.initial_state(), rng.uniform());
  double ret = 0.0, discount = 1.0;
  for (std::size_t t = 0; t < horizon; ++t) {
    const Draw d = step(model, s, rng, choose);
    ret += discount * rewards[d.r];
    discount *= gamma;
    s = d.s_next;
  }
  return ret;
}

}  // namespace pescal
