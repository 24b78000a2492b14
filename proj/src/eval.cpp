#include "pescal/eval.hpp"

#include <cmath>
#include <ostream>

#include "pescal/dataset.hpp"
#include "pescal/random.hpp"

namespace pescal {

void EvalProtocol::validate() const {
  if (horizon == 0) throw ConfigError("eval.horizon must be positive");
  if (n_eval_traj == 0) throw ConfigError("eval.n_eval_traj must be positive");
  if (window == 0) throw ConfigError("eval.window must be positive");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("eval.gamma must lie in [0, 1)");
}

void apply_overrides(EvalProtocol& target, const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("eval must be an object");
  EvalProtocol proto = target;
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "horizon") proto.horizon = value.get<std::size_t>();
      else if (key == "n_eval_traj") proto.n_eval_traj = value.get<std::size_t>();
      else if (key == "gamma") proto.gamma = value.get<double>();
      else if (key == "window") proto.window = value.get<std::size_t>();
      else if (key == "population_sd") proto.population_sd = value.get<bool>();
      else throw ConfigError("unknown eval key: " + key);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("eval." + key + ": " + e.what());
    }
  }
  proto.validate();
  target = proto;
}

nlohmann::json to_json(const EvalProtocol& proto) {
  return {{"horizon", proto.horizon},
          {"n_eval_traj", proto.n_eval_traj},
          {"gamma", proto.gamma},
          {"window", proto.window},
          {"population_sd", proto.population_sd}};
}

double monte_carlo_return(const M2dpModel& model, const DeterministicPolicy& pi,
                          const EvalProtocol& proto, std::uint64_t seed) {
  proto.validate();
  double total = 0.0;
  for (std::size_t i = 0; i < proto.n_eval_traj; ++i)
    total += rollout_return(model, pi, proto.horizon, proto.gamma, derive_seed(seed, i));
  return total / static_cast<double>(proto.n_eval_traj);
}

std::vector<double> smooth(std::span<const double> raw, std::size_t window) {
  if (raw.empty()) throw ConfigError("cannot smooth an empty sequence");
  if (window == 0) throw ConfigError("window must be at least 1");
  std::vector<double> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const std::size_t lo = i + 1 >= window ? i + 1 - window : 0;
    double acc = 0.0;
    for (std::size_t k = lo; k <= i; ++k) acc += raw[k];
    out[i] = acc / static_cast<double>(i + 1 - lo);
  }
  return out;
}

LearningCurve make_curve(std::string learner, std::uint64_t seed, std::span<const std::size_t> steps,
                         std::span<const double> raw, std::size_t window) {
  if (steps.size() != raw.size()) throw ConfigError("steps and returns differ in length");
  for (std::size_t i = 1; i < steps.size(); ++i)
    if (steps[i] <= steps[i - 1]) throw ConfigError("curve steps must be strictly increasing");
  LearningCurve c{std::move(learner), seed, {}};
  const auto sm = smooth(raw, window);
  for (std::size_t i = 0; i < raw.size(); ++i) c.points.push_back({steps[i], raw[i], sm[i]});
  return c;
}

std::vector<AggregatePoint> aggregate(std::span<const LearningCurve> curves, bool population_sd) {
  if (curves.empty()) throw ConfigError("no curves to aggregate");
  const auto& grid = curves.front().points;
  for (const auto& c : curves) {
    if (c.points.size() != grid.size()) throw ConfigError("curves have mismatched step grids");
    for (std::size_t i = 0; i < grid.size(); ++i)
      if (c.points[i].step != grid[i].step) throw ConfigError("curves have mismatched step grids");
  }
  const double n = static_cast<double>(curves.size());
  std::vector<AggregatePoint> out(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    double mean = 0.0;
    for (const auto& c : curves) mean += c.points[i].smoothed_return;
    mean /= n;
    double ss = 0.0;
    for (const auto& c : curves) {
      const double d = c.points[i].smoothed_return - mean;
      ss += d * d;
    }
    const double denom = population_sd ? n : std::max(n - 1.0, 1.0);
    out[i] = {grid[i].step, mean, std::sqrt(ss / denom)};
  }
  return out;
}

void write_curve_csv(std::span<const LearningCurve> curves, std::ostream& out) {
  out << "learner,seed,step,raw_return,smoothed_return\n";
  for (const auto& c : curves)
    for (const auto& p : c.points)
      out << c.learner << ',' << c.seed << ',' << p.step << ',' << format_real(p.raw_return) << ','
          << format_real(p.smoothed_return) << '\n';
}

void write_aggregate_csv(const std::string& learner, std::span<const AggregatePoint> agg,
                         std::ostream& out) {
  out << "learner,step,mean,sd\n";
  for (const auto& p : agg)
    out << learner << ',' << p.step << ',' << format_real(p.mean) << ',' << format_real(p.sd) << '\n';
}

}  // namespace pescal
