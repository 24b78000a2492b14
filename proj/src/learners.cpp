#include "pescal/learners.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "pescal/random.hpp"

namespace pescal {

std::string to_string(Learner l) {
  switch (l) {
    case Learner::Cal: return "cal";
    case Learner::Pescal: return "pescal";
    case Learner::Fqi: return "fqi";
    case Learner::Cql: return "cql";
  }
  return "?";
}

Learner learner_from_string(const std::string& name) {
  if (name == "cal") return Learner::Cal;
  if (name == "pescal") return Learner::Pescal;
  if (name == "fqi") return Learner::Fqi;
  if (name == "cql") return Learner::Cql;
  throw ConfigError("unknown learner '" + name + "'");
}

std::string to_string(ShiftMode m) {
  return m == ShiftMode::SubtractMin ? "subtract-min" : "add-vmax";
}

ShiftMode shift_mode_from_string(const std::string& name) {
  if (name == "subtract-min") return ShiftMode::SubtractMin;
  if (name == "add-vmax") return ShiftMode::AddVmax;
  throw ConfigError("unknown shift_mode '" + name + "'");
}

void TrainConfig::validate() const {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in [0, 1)");
  if (!(eta >= 0.0) || !std::isfinite(eta)) throw ConfigError("eta must be nonnegative");
  if (minibatch_n == 0) throw ConfigError("minibatch_n must be positive");
  if (target_sync_T == 0) throw ConfigError("target_sync_T must be positive");
  if (total_steps == 0) throw ConfigError("total_steps must be positive");
  if (eval_every == 0) throw ConfigError("eval_every must be positive");
  if (!(cql_alpha >= 0.0)) throw ConfigError("cql_alpha must be nonnegative");
  if (!(r_max > 0.0)) throw ConfigError("r_max must be positive");
}

void apply_overrides(TrainConfig& target, const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("training overrides must be an object");
  TrainConfig cfg = target;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "gamma") cfg.gamma = value.get<double>();
      else if (key == "K") cfg.K = value.get<std::size_t>();
      else if (key == "eta") cfg.eta = value.get<double>();
      else if (key == "minibatch_n") cfg.minibatch_n = value.get<std::size_t>();
      else if (key == "target_sync_T") cfg.target_sync_T = value.get<std::size_t>();
      else if (key == "total_steps") cfg.total_steps = value.get<std::size_t>();
      else if (key == "eval_every") cfg.eval_every = value.get<std::size_t>();
      else if (key == "pessimistic_base") cfg.pessimistic_base = value.get<bool>();
      else if (key == "clamp_penalized") cfg.clamp_penalized = value.get<bool>();
      else if (key == "cql_alpha") cfg.cql_alpha = value.get<double>();
      else if (key == "shift_mode") cfg.shift_mode = shift_mode_from_string(value.get<std::string>());
      else if (key == "record_q") cfg.record_q = value.get<bool>();
      else if (key == "r_max") cfg.r_max = value.get<double>();
      else throw ConfigError("unknown training key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad training field: ") + e.what());
  }
  cfg.validate();
  target = cfg;
}

nlohmann::json to_json(const TrainConfig& cfg) {
  return {{"gamma", cfg.gamma},
          {"K", cfg.K},
          {"eta", cfg.eta},
          {"minibatch_n", cfg.minibatch_n},
          {"target_sync_T", cfg.target_sync_T},
          {"total_steps", cfg.total_steps},
          {"eval_every", cfg.eval_every},
          {"pessimistic_base", cfg.pessimistic_base},
          {"clamp_penalized", cfg.clamp_penalized},
          {"cql_alpha", cfg.cql_alpha},
          {"shift_mode", to_string(cfg.shift_mode)},
          {"r_max", cfg.r_max}};
}

double weighted_q(const Table3& Q, const Table3& pm, const Table2& pb, std::size_t s,
                  std::size_t a) {
  const std::size_t nA = Q.dim(1), nM = Q.dim(2);
  double total = 0.0;
  for (std::size_t at = 0; at < nA; ++at) {
    double inner = 0.0;
    for (std::size_t m = 0; m < nM; ++m) inner += pm(s, a, m) * Q(s, at, m);
    total += pb(s, at) * inner;
  }
  return total;
}

namespace {

// Index of the first maximum: ties resolve to the smallest action label.
template <typename Score>
std::size_t argmax_first(std::size_t n, Score&& score) {
  std::size_t best = 0;
  double best_value = score(0);
  for (std::size_t a = 1; a < n; ++a) {
    const double v = score(a);
    if (v > best_value) {
      best_value = v;
      best = a;
    }
  }
  return best;
}

void clip(std::span<double> values, double bound) {
  for (double& v : values) v = std::clamp(v, -bound, bound);
}

}  // namespace

std::vector<double> max_weighted_values(const Table3& Q, const Table3& pm, const Table2& pb) {
  const std::size_t nS = Q.dim(0), nA = pm.dim(1);
  std::vector<double> out(nS);
  for (std::size_t s = 0; s < nS; ++s) {
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < nA; ++a) best = std::max(best, weighted_q(Q, pm, pb, s, a));
    out[s] = best;
  }
  return out;
}

double cal_target(const IndexedTuple& tup, const Table3& Q_prev, const Table3& pm,
                  const Table2& pb, double gamma) {
  if (gamma == 0.0) return tup.r;
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < pm.dim(1); ++a)
    best = std::max(best, weighted_q(Q_prev, pm, pb, tup.s_next, a));
  return tup.r + gamma * best;
}

Table3 penalized_mediator(const Table3& pm, const UncertaintyQuantifier& delta, bool clamp) {
  Table3 out = pm;
  auto v = out.values();
  auto d = delta.delta.values();
  for (std::size_t i = 0; i < v.size(); ++i) {
    v[i] -= d[i];
    if (clamp) v[i] = std::max(v[i], 0.0);
  }
  return out;
}

MediatedQ cal_fit_weighted(std::span<const IndexedTuple> data, std::span<const double> weights,
                           const Table3& pm, const Table2& pb, const TrainConfig& cfg,
                           std::optional<MediatedQ> init) {
  cfg.validate();
  if (data.empty()) throw ConfigError("cannot fit Q on an empty dataset");
  if (weights.size() != data.size()) throw ConfigError("one weight per tuple is required");
  const std::size_t nS = pb.dim(0), nA = pb.dim(1), nM = pm.dim(2);
  MediatedQ Q = init ? std::move(*init) : MediatedQ{Table3({nS, nA, nM})};
  Table3 sum({nS, nA, nM}), mass({nS, nA, nM});
  for (std::size_t k = 0; k < cfg.K; ++k) {
    const auto v_next = cfg.gamma == 0.0 ? std::vector<double>(nS, 0.0)
                                         : max_weighted_values(Q.q, pm, pb);
    std::ranges::fill(sum.values(), 0.0);
    std::ranges::fill(mass.values(), 0.0);
    for (std::size_t i = 0; i < data.size(); ++i) {
      const auto& tup = data[i];
      const double y = tup.r + cfg.gamma * v_next[tup.s_next];
      sum(tup.s, tup.a, tup.m) += weights[i] * y;
      mass(tup.s, tup.a, tup.m) += weights[i];
    }
    auto q = Q.q.values();
    auto sv = sum.values();
    auto mv = mass.values();
    for (std::size_t c = 0; c < q.size(); ++c)
      if (mv[c] > 0.0) q[c] = sv[c] / mv[c];
    clip(q, cfg.v_max());
  }
  return Q;
}

MediatedQ cal_fit_batch(std::span<const IndexedTuple> data, const Table3& pm, const Table2& pb,
                        const TrainConfig& cfg) {
  const std::vector<double> ones(data.size(), 1.0);
  return cal_fit_weighted(data, ones, pm, pb, cfg);
}

MediatedQ cal_fit_batch(const Dataset& d, const Supports& sup, const Table3& pm,
                        const Table2& pb, const TrainConfig& cfg) {
  const auto data = index_tuples(d, sup);
  return cal_fit_batch(data, pm, pb, cfg);
}

DeterministicPolicy cal_policy(const Table3& Q, const Table3& pm, const Table2& pb) {
  const std::size_t nS = pb.dim(0), nA = pm.dim(1);
  DeterministicPolicy pi{std::vector<std::size_t>(nS)};
  for (std::size_t s = 0; s < nS; ++s)
    pi.action[s] = argmax_first(nA, [&](std::size_t a) { return weighted_q(Q, pm, pb, s, a); });
  return pi;
}

DeterministicPolicy pescal_policy(const Table3& Q, const Table3& pm, const Table2& pb,
                                  const UncertaintyQuantifier& delta, ShiftMode shift,
                                  double v_max, bool clamp) {
  Table3 shifted = Q;
  const double offset = shift == ShiftMode::SubtractMin ? -Q.min() : v_max;
  for (double& v : shifted.values()) v += offset;
  const Table3 lower = penalized_mediator(pm, delta, clamp);
  return cal_policy(shifted, lower, pb);
}

DeterministicPolicy greedy_policy(const Table2& q) {
  DeterministicPolicy pi{std::vector<std::size_t>(q.dim(0))};
  for (std::size_t s = 0; s < q.dim(0); ++s)
    pi.action[s] = argmax_first(q.dim(1), [&](std::size_t a) { return q(s, a); });
  return pi;
}

Nuisances estimate_nuisances(std::span<const IndexedTuple> data, const Supports& sup,
                             double floor, double z) {
  Nuisances n;
  n.behavior = estimate_behavior(data, sup);
  n.mediator = estimate_mediator(data, sup, floor);
  n.delta = delta_quantifier(n.mediator, z);
  return n;
}

namespace {

// Live and target tables share one layout: [s][a][m] for mediated learners,
// [s][a][1] for unmediated ones.
class TabularTrainer {
 public:
  TabularTrainer(std::span<const IndexedTuple> data, const Nuisances& nz, const TrainConfig& cfg,
                 Learner learner)
      : data_(data), nz_(nz), cfg_(cfg), learner_(learner),
        mediated_(learner == Learner::Cal || learner == Learner::Pescal) {
    const std::size_t nS = nz.behavior.prob.dim(0), nA = nz.behavior.prob.dim(1);
    const std::size_t nM = mediated_ ? nz.mediator.prob.dim(2) : 1;
    live_ = Table3({nS, nA, nM});
    target_ = live_;
    sum_ = Table3({nS, nA, nM});
    hits_ = Table3({nS, nA, nM});
    penalty_ = Table2({nS, nA});
    pm_target_ = cfg.pessimistic_base
                     ? penalized_mediator(nz.mediator.prob, nz.delta, cfg.clamp_penalized)
                     : nz.mediator.prob;
    refresh_target_values();
  }

  void step(Xoshiro256& rng) {
    const std::size_t nA = live_.dim(1);
    std::ranges::fill(sum_.values(), 0.0);
    std::ranges::fill(hits_.values(), 0.0);
    const bool cql = learner_ == Learner::Cql;
    if (cql) std::ranges::fill(penalty_.values(), 0.0);
    for (std::size_t i = 0; i < cfg_.minibatch_n; ++i) {
      const auto& tup = data_[rng.below(data_.size())];
      const std::size_t m = mediated_ ? tup.m : 0;
      const double y = tup.r + cfg_.gamma * v_target_[tup.s_next];
      sum_(tup.s, tup.a, m) += y - live_(tup.s, tup.a, m);
      hits_(tup.s, tup.a, m) += 1.0;
      if (cql) {
        // Gradient of logsumexp_a q(s,a) - q(s, a_data) at the pre-step table.
        double top = -std::numeric_limits<double>::infinity();
        for (std::size_t a = 0; a < nA; ++a) top = std::max(top, live_(tup.s, a, 0));
        double z = 0.0;
        for (std::size_t a = 0; a < nA; ++a) z += std::exp(live_(tup.s, a, 0) - top);
        for (std::size_t a = 0; a < nA; ++a)
          penalty_(tup.s, a) += std::exp(live_(tup.s, a, 0) - top) / z - (a == tup.a ? 1.0 : 0.0);
      }
    }
    auto q = live_.values();
    auto sv = sum_.values();
    auto hv = hits_.values();
    for (std::size_t c = 0; c < q.size(); ++c)
      if (hv[c] > 0.0) q[c] += cfg_.eta * (sv[c] / hv[c]);
    if (cql) {
      auto pv = penalty_.values();
      for (std::size_t c = 0; c < q.size(); ++c) q[c] -= cfg_.eta * cfg_.cql_alpha * pv[c];
    }
    clip(q, cfg_.v_max());
  }

  void sync_target() {
    target_ = live_;
    refresh_target_values();
  }

  DeterministicPolicy policy() const {
    switch (learner_) {
      case Learner::Cal: return cal_policy(live_, nz_.mediator.prob, nz_.behavior.prob);
      case Learner::Pescal:
        return pescal_policy(live_, nz_.mediator.prob, nz_.behavior.prob, nz_.delta,
                             cfg_.shift_mode, cfg_.v_max(), cfg_.clamp_penalized);
      case Learner::Fqi:
      case Learner::Cql: return greedy_policy(unmediated_view(live_));
    }
    return {};
  }

  const Table3& live() const { return live_; }

  static Table2 unmediated_view(const Table3& t) {
    Table2 out({t.dim(0), t.dim(1)});
    std::ranges::copy(t.values(), out.values().begin());
    return out;
  }

 private:
  void refresh_target_values() {
    const std::size_t nS = target_.dim(0), nA = target_.dim(1);
    if (mediated_) {
      v_target_ = max_weighted_values(target_, pm_target_, nz_.behavior.prob);
      return;
    }
    v_target_.assign(nS, -std::numeric_limits<double>::infinity());
    for (std::size_t s = 0; s < nS; ++s)
      for (std::size_t a = 0; a < nA; ++a) v_target_[s] = std::max(v_target_[s], target_(s, a, 0));
  }

  std::span<const IndexedTuple> data_;
  const Nuisances& nz_;
  const TrainConfig& cfg_;
  Learner learner_;
  bool mediated_;
  Table3 live_, target_, sum_, hits_;
  Table2 penalty_;
  Table3 pm_target_;
  std::vector<double> v_target_;
};

}  // namespace

TrainResult incremental_train(std::span<const IndexedTuple> data, const Nuisances& nuisances,
                              const TrainConfig& cfg, Learner learner, std::uint64_t seed,
                              const CheckpointSink& sink) {
  cfg.validate();
  if (data.empty()) throw ConfigError("cannot train on an empty dataset");
  TabularTrainer trainer(data, nuisances, cfg, learner);
  Xoshiro256 rng(seed);
  TrainResult result;
  for (std::size_t step = 1; step <= cfg.total_steps; ++step) {
    trainer.step(rng);
    if (step % cfg.target_sync_T == 0) trainer.sync_target();
    if (step % cfg.eval_every == 0) {
      Checkpoint cp{step, learner, trainer.policy(), {}};
      if (cfg.record_q) {
        auto v = trainer.live().values();
        cp.q_snapshot.assign(v.begin(), v.end());
      }
      if (sink) sink(cp);
      result.checkpoints.push_back(std::move(cp));
    }
  }
  if (learner == Learner::Cal || learner == Learner::Pescal)
    result.mediated = MediatedQ{trainer.live()};
  else
    result.unmediated = UnmediatedQ{TabularTrainer::unmediated_view(trainer.live())};
  return result;
}

}  // namespace pescal
