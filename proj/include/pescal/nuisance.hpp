#pragma once

#include <span>
#include <vector>

#include <json.hpp>

#include "pescal/dataset.hpp"
#include "pescal/m2dp.hpp"
#include "pescal/table.hpp"

namespace pescal {

/// Count-ratio estimate of the behavior policy p_b(a|s).
struct BehaviorEstimate {
  Table2 prob;                       // [s][a]
  Table2 counts;                     // N(s, a)
  std::vector<double> state_counts;  // N(s)
  std::vector<bool> unseen;          // N(s) == 0, filled uniform
};

/// Count-ratio estimate of the mediator law p_m(m|s,a), floored.
struct MediatorEstimate {
  Table3 prob;             // floored and renormalized, [s][a][m]
  Table3 raw;              // N(s,a,m) / N(s,a); uniform where unseen
  Table3 counts;           // N(s, a, m)
  Table2 pair_counts;      // N(s, a)
  std::vector<bool> unseen;  // per (s, a), row-major
  double floor = 1e-5;
};

/// Pointwise bound Delta(s,a,m) on |p_m_hat - p_m|.
struct UncertaintyQuantifier {
  Table3 delta;
  double z = 1.96;
  double alpha = 0.0;  // two-sided nominal miscoverage 2(1 - Phi(z))
};

BehaviorEstimate estimate_behavior(std::span<const IndexedTuple> data, const Supports& sup);
BehaviorEstimate estimate_behavior(const Dataset& d, const Supports& sup);

MediatorEstimate estimate_mediator(std::span<const IndexedTuple> data, const Supports& sup,
                                   double floor);
MediatorEstimate estimate_mediator(const Dataset& d, const Supports& sup, double floor);

/**
 * Delta = z * sqrt(p(1-p) / N(s,a)) with p the raw count ratio, so cells
 * estimated at exactly 0 or 1 get Delta = 0. Unseen (s,a) cells get 1.
 */
UncertaintyQuantifier delta_quantifier(const MediatorEstimate& me, double z = 1.96);

/// Estimates that equal the model's true p_b and p_m (no sampling error).
BehaviorEstimate true_behavior(const M2dpModel& model);
MediatorEstimate true_mediator(const M2dpModel& model);

struct KlDiagnostics {
  double kl_b = 0.0;
  double kl_m = 0.0;
};

/**
 * kl_b = E_{S~w} KL(p_b(.|S) || p_b_hat(.|S)) and
 * kl_m = E_{S~w, A~p_b} KL(p_m(.|S,A) || p_m_hat(.|S,A)), natural log.
 * Throws std::domain_error when an estimate puts zero mass where the truth
 * does not on a positively weighted cell.
 */
KlDiagnostics kl_diagnostics(const M2dpModel& model, const BehaviorEstimate& be,
                             const MediatorEstimate& me, std::span<const double> state_weights);
/// Same with explicit state-action weights for kl_m; kl_b uses their state marginal.
KlDiagnostics kl_diagnostics(const M2dpModel& model, const BehaviorEstimate& be,
                             const MediatorEstimate& me, const Table2& state_action_weights);

nlohmann::json nuisance_to_json(const BehaviorEstimate& be, const MediatorEstimate& me,
                                const UncertaintyQuantifier& uq);

/// Row-major nested arrays of a table.
nlohmann::json table_to_json(const Table2& t);
nlohmann::json table_to_json(const Table3& t);

}  // namespace pescal
