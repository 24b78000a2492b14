#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "pescal/m2dp.hpp"
#include "pescal/random.hpp"

namespace pescal {

struct EvalProtocol {
  std::size_t horizon = 500;
  std::size_t n_eval_traj = 10;
  double gamma = 0.95;
  std::size_t window = 50;
  bool population_sd = true;

  void validate() const;
};

void apply_overrides(EvalProtocol& proto, const nlohmann::json& j);
nlohmann::json to_json(const EvalProtocol& proto);

/// Mean discounted return over n_eval_traj intervention rollouts. Rollout i
/// uses derive_seed(seed, i).
double monte_carlo_return(const M2dpModel& model, const DeterministicPolicy& pi,
                          const EvalProtocol& proto, std::uint64_t seed);

/// Trailing mean over min(i + 1, window) values.
std::vector<double> smooth(std::span<const double> raw, std::size_t window);

struct CurvePoint {
  std::size_t step = 0;
  double raw_return = 0.0;
  double smoothed_return = 0.0;
};

struct LearningCurve {
  std::string learner;
  std::uint64_t seed = 0;
  std::vector<CurvePoint> points;
};

/// Builds a curve from raw returns and recomputes the smoothed column.
LearningCurve make_curve(std::string learner, std::uint64_t seed, std::span<const std::size_t> steps,
                         std::span<const double> raw, std::size_t window);

struct AggregatePoint {
  std::size_t step = 0;
  double mean = 0.0;
  double sd = 0.0;
};

/// Pointwise mean and standard deviation of the smoothed returns.
std::vector<AggregatePoint> aggregate(std::span<const LearningCurve> curves,
                                      bool population_sd = true);

/// Evaluation seed for checkpoint `index` of a training run; independent of
/// the learner so every learner sees the same evaluation noise.
inline std::uint64_t eval_seed(std::uint64_t train_seed, std::size_t index) {
  return derive_seed(derive_seed(train_seed, 0x6576616cULL), index);
}

void write_curve_csv(std::span<const LearningCurve> curves, std::ostream& out);
void write_aggregate_csv(const std::string& learner, std::span<const AggregatePoint> agg,
                         std::ostream& out);

}  // namespace pescal

