#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "pescal/dataset.hpp"
#include "pescal/m2dp.hpp"
#include "pescal/nuisance.hpp"
#include "pescal/table.hpp"

namespace pescal {

/// Q(s, a~, m) over the full finite product space.
struct MediatedQ {
  Table3 q;
};

/// q(s, a).
struct UnmediatedQ {
  Table2 q;
};

enum class ShiftMode { SubtractMin, AddVmax };
enum class Learner { Cal, Pescal, Fqi, Cql };

std::string to_string(Learner l);
Learner learner_from_string(const std::string& name);
std::string to_string(ShiftMode m);
ShiftMode shift_mode_from_string(const std::string& name);

struct TrainConfig {
  double gamma = 0.95;
  std::size_t K = 20;
  double eta = 0.05;
  std::size_t minibatch_n = 64;
  std::size_t target_sync_T = 100;
  std::size_t total_steps = 10000;
  std::size_t eval_every = 50;
  bool pessimistic_base = false;  // use p_m_hat - Delta inside targets
  bool clamp_penalized = false;   // clamp p_m_hat - Delta at zero
  double cql_alpha = 0.1;
  ShiftMode shift_mode = ShiftMode::SubtractMin;
  double r_max = 1.0;
  bool record_q = false;          // attach Q snapshots to checkpoints

  double v_max() const { return r_max / (1.0 - gamma); }
  void validate() const;
};

/// Applies the keys present in `j` onto `cfg`; unknown keys are a ConfigError.
void apply_overrides(TrainConfig& cfg, const nlohmann::json& j);
nlohmann::json to_json(const TrainConfig& cfg);

/// sum_{a~, m} pm(m|s,a) pb(a~|s) Q(s, a~, m).
double weighted_q(const Table3& Q, const Table3& pm, const Table2& pb, std::size_t s,
                  std::size_t a);

/// max_a weighted_q(Q, pm, pb, s, a) for every state.
std::vector<double> max_weighted_values(const Table3& Q, const Table3& pm, const Table2& pb);

/// Y = r + gamma * max_a weighted_q(Q_prev, pm, pb, s', a).
double cal_target(const IndexedTuple& tup, const Table3& Q_prev, const Table3& pm,
                  const Table2& pb, double gamma);

/// p_m_hat - Delta, optionally clamped at zero.
Table3 penalized_mediator(const Table3& pm, const UncertaintyQuantifier& delta, bool clamp);

/**
 * Batch fitted iteration over tuples with nonnegative weights: each of K
 * iterations sets every visited cell to the weighted mean of its targets
 * (the least-squares argmin over tabular functions); unvisited cells keep
 * their value. Entries are clipped to [-V_max, V_max].
 */
MediatedQ cal_fit_weighted(std::span<const IndexedTuple> data, std::span<const double> weights,
                           const Table3& pm, const Table2& pb, const TrainConfig& cfg,
                           std::optional<MediatedQ> init = std::nullopt);
MediatedQ cal_fit_batch(std::span<const IndexedTuple> data, const Table3& pm, const Table2& pb,
                        const TrainConfig& cfg);
MediatedQ cal_fit_batch(const Dataset& d, const Supports& sup, const Table3& pm,
                        const Table2& pb, const TrainConfig& cfg);

/// argmax_a weighted_q, ties to the smallest action.
DeterministicPolicy cal_policy(const Table3& Q, const Table3& pm, const Table2& pb);

/**
 * Pessimistic plug-in policy: shifts Q to be nonnegative (minus its minimum,
 * or plus V_max) and maximizes sum (pm - Delta) pb Q_shifted over actions.
 * The penalized weight is not clamped unless `clamp` is set.
 */
DeterministicPolicy pescal_policy(const Table3& Q, const Table3& pm, const Table2& pb,
                                  const UncertaintyQuantifier& delta, ShiftMode shift,
                                  double v_max, bool clamp = false);

/// argmax_a q(s, a), ties to the smallest action.
DeterministicPolicy greedy_policy(const Table2& q);

struct Nuisances {
  BehaviorEstimate behavior;
  MediatorEstimate mediator;
  UncertaintyQuantifier delta;
};

Nuisances estimate_nuisances(std::span<const IndexedTuple> data, const Supports& sup,
                             double floor, double z);

struct Checkpoint {
  std::size_t step = 0;
  Learner learner = Learner::Cal;
  DeterministicPolicy policy;
  std::vector<double> q_snapshot;  // filled when TrainConfig::record_q
};

using CheckpointSink = std::function<void(const Checkpoint&)>;

struct TrainResult {
  std::optional<MediatedQ> mediated;      // CAL / PESCAL
  std::optional<UnmediatedQ> unmediated;  // FQI / CQL
  std::vector<Checkpoint> checkpoints;
};

/**
 * Minibatch training with a periodically synced target table. Minibatches
 * are drawn uniformly with replacement from a generator seeded by `seed`,
 * so every learner given the same seed sees the same index stream.
 * Checkpoints (greedy policy of the live table) are emitted every
 * cfg.eval_every steps to the sink and collected in the result.
 */
TrainResult incremental_train(std::span<const IndexedTuple> data, const Nuisances& nuisances,
                              const TrainConfig& cfg, Learner learner, std::uint64_t seed,
                              const CheckpointSink& sink = {});

}  // namespace pescal
