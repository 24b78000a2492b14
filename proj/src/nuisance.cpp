#include "pescal/nuisance.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pescal {

BehaviorEstimate estimate_behavior(std::span<const IndexedTuple> data, const Supports& sup) {
  if (data.empty()) throw ConfigError("cannot estimate the behavior policy from an empty dataset");
  const std::size_t nS = sup.states.size(), nA = sup.actions.size();
  BehaviorEstimate be;
  be.prob = Table2({nS, nA});
  be.counts = Table2({nS, nA});
  be.state_counts.assign(nS, 0.0);
  be.unseen.assign(nS, false);
  for (const auto& tup : data) {
    be.counts(tup.s, tup.a) += 1.0;
    be.state_counts[tup.s] += 1.0;
  }
  for (std::size_t s = 0; s < nS; ++s) {
    be.unseen[s] = be.state_counts[s] == 0.0;
    for (std::size_t a = 0; a < nA; ++a)
      be.prob(s, a) = be.unseen[s] ? 1.0 / static_cast<double>(nA)
                                   : be.counts(s, a) / be.state_counts[s];
  }
  return be;
}

BehaviorEstimate estimate_behavior(const Dataset& d, const Supports& sup) {
  const auto data = index_tuples(d, sup);
  return estimate_behavior(data, sup);
}

MediatorEstimate estimate_mediator(std::span<const IndexedTuple> data, const Supports& sup,
                                   double floor) {
  if (data.empty()) throw ConfigError("cannot estimate the mediator model from an empty dataset");
  const std::size_t nS = sup.states.size(), nA = sup.actions.size(), nM = sup.mediators.size();
  MediatorEstimate me;
  me.floor = floor;
  me.prob = Table3({nS, nA, nM});
  me.raw = Table3({nS, nA, nM});
  me.counts = Table3({nS, nA, nM});
  me.pair_counts = Table2({nS, nA});
  me.unseen.assign(nS * nA, false);
  for (const auto& tup : data) {
    me.counts(tup.s, tup.a, tup.m) += 1.0;
    me.pair_counts(tup.s, tup.a) += 1.0;
  }
  for (std::size_t s = 0; s < nS; ++s)
    for (std::size_t a = 0; a < nA; ++a) {
      const double n = me.pair_counts(s, a);
      me.unseen[s * nA + a] = n == 0.0;
      for (std::size_t m = 0; m < nM; ++m)
        me.raw(s, a, m) = n == 0.0 ? 1.0 / static_cast<double>(nM) : me.counts(s, a, m) / n;
      auto row = me.prob.row(s, a);
      std::ranges::copy(me.raw.row(s, a), row.begin());
      apply_floor(row, floor);
    }
  return me;
}

MediatorEstimate estimate_mediator(const Dataset& d, const Supports& sup, double floor) {
  const auto data = index_tuples(d, sup);
  return estimate_mediator(data, sup, floor);
}

UncertaintyQuantifier delta_quantifier(const MediatorEstimate& me, double z) {
  if (!(z > 0.0)) throw ConfigError("critical value z must be positive");
  UncertaintyQuantifier uq;
  uq.z = z;
  uq.alpha = std::erfc(z / std::sqrt(2.0));
  uq.delta = Table3(me.raw.dims());
  const auto& dims = me.raw.dims();
  for (std::size_t s = 0; s < dims[0]; ++s)
    for (std::size_t a = 0; a < dims[1]; ++a) {
      const double n = me.pair_counts(s, a);
      for (std::size_t m = 0; m < dims[2]; ++m) {
        const double p = me.raw(s, a, m);
        uq.delta(s, a, m) = n > 0.0 ? z * std::sqrt(p * (1.0 - p) / n) : 1.0;
      }
    }
  return uq;
}

BehaviorEstimate true_behavior(const M2dpModel& model) {
  BehaviorEstimate be;
  be.prob = model.behavior_table();
  be.counts = Table2(be.prob.dims());
  be.state_counts.assign(model.n_states(), 0.0);
  be.unseen.assign(model.n_states(), false);
  return be;
}

MediatorEstimate true_mediator(const M2dpModel& model) {
  MediatorEstimate me;
  me.prob = model.mediator_table();
  me.raw = me.prob;
  me.counts = Table3(me.prob.dims());
  me.pair_counts = Table2({model.n_states(), model.n_actions()});
  me.unseen.assign(model.n_states() * model.n_actions(), false);
  me.floor = model.spec().mediator_floor;
  return me;
}

namespace {

double kl(std::span<const double> p, std::span<const double> q) {
  double out = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    if (q[i] <= 0.0)
      throw std::domain_error("KL divergence is infinite: estimate has zero mass on a true outcome");
    out += p[i] * std::log(p[i] / q[i]);
  }
  return out;
}

}  // namespace

KlDiagnostics kl_diagnostics(const M2dpModel& model, const BehaviorEstimate& be,
                             const MediatorEstimate& me, const Table2& state_action_weights) {
  KlDiagnostics out;
  for (std::size_t s = 0; s < model.n_states(); ++s) {
    double ws = 0.0;
    for (std::size_t a = 0; a < model.n_actions(); ++a) {
      const double w = state_action_weights(s, a);
      ws += w;
      if (w > 0.0) out.kl_m += w * kl(model.p_m(s, a), me.prob.row(s, a));
    }
    if (ws > 0.0) out.kl_b += ws * kl(model.p_b(s), be.prob.row(s));
  }
  return out;
}

KlDiagnostics kl_diagnostics(const M2dpModel& model, const BehaviorEstimate& be,
                             const MediatorEstimate& me, std::span<const double> state_weights) {
  if (state_weights.size() != model.n_states())
    throw ConfigError("state weights must cover the state support");
  Table2 w({model.n_states(), model.n_actions()});
  for (std::size_t s = 0; s < model.n_states(); ++s)
    for (std::size_t a = 0; a < model.n_actions(); ++a) w(s, a) = state_weights[s] * model.p_b(s)[a];
  return kl_diagnostics(model, be, me, w);
}

nlohmann::json table_to_json(const Table2& t) {
  nlohmann::json j = nlohmann::json::array();
  for (std::size_t i = 0; i < t.dim(0); ++i) {
    auto row = t.row(i);
    j.push_back(std::vector<double>(row.begin(), row.end()));
  }
  return j;
}

nlohmann::json table_to_json(const Table3& t) {
  nlohmann::json j = nlohmann::json::array();
  for (std::size_t i = 0; i < t.dim(0); ++i) {
    nlohmann::json inner = nlohmann::json::array();
    for (std::size_t k = 0; k < t.dim(1); ++k) {
      auto row = t.row(i, k);
      inner.push_back(std::vector<double>(row.begin(), row.end()));
    }
    j.push_back(std::move(inner));
  }
  return j;
}

nlohmann::json nuisance_to_json(const BehaviorEstimate& be, const MediatorEstimate& me,
                                const UncertaintyQuantifier& uq) {
  return {{"p_b", table_to_json(be.prob)},
          {"behavior_counts", table_to_json(be.counts)},
          {"behavior_unseen_states", be.unseen},
          {"p_m", table_to_json(me.prob)},
          {"p_m_raw", table_to_json(me.raw)},
          {"mediator_counts", table_to_json(me.counts)},
          {"mediator_unseen_pairs", me.unseen},
          {"mediator_floor", me.floor},
          {"delta", table_to_json(uq.delta)},
          {"z", uq.z},
          {"alpha", uq.alpha}};
}

}  // namespace pescal
