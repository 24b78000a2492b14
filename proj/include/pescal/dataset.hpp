#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "pescal/m2dp.hpp"

namespace pescal {

/// One learner-visible transition (s, a, m, r, s'); labels, not indices.
struct TransitionTuple {
  std::int64_t traj_id = 0;
  std::int64_t t = 0;
  int s = 0;
  int a = 0;
  int m = 0;
  double r = 0.0;
  int s_next = 0;

  bool operator==(const TransitionTuple&) const = default;
};

/// Flattened offline data, trajectory-major then time-minor.
struct Dataset {
  std::vector<TransitionTuple> tuples;
  std::uint64_t spec_fingerprint = 0;

  std::size_t size() const { return tuples.size(); }
  bool empty() const { return tuples.empty(); }
  bool operator==(const Dataset&) const = default;
};

struct CoverageFilterSpec {
  std::size_t keep_k = 0;
  std::vector<int> suboptimal_actions{0, 1};
};

/// Concatenates trajectories in order and drops the latent confounder.
/// Throws ConfigError when trajectories come from different specs.
Dataset flatten(std::span<const Trajectory> trajectories);

/**
 * Keeps the first `keep_k` tuples verbatim and, after them, only tuples
 * whose action is not in `suboptimal_actions`. Order is preserved.
 */
Dataset coverage_filter(const Dataset& d, const CoverageFilterSpec& f);

/// Samples `n_trajectories` behavior-mode trajectories with seeds derived
/// from `seed` and flattens them.
Dataset generate_dataset(const M2dpModel& model, bool confounded, std::size_t n_trajectories,
                         std::size_t horizon, std::uint64_t seed);

/// Checks every categorical field against the supports and |r| <= r_max.
void validate_dataset(const Dataset& d, const Supports& sup, double r_max);

/// CSV with header `traj_id,t,s,a,m,r,s_next`, LF line endings.
void write_csv(const Dataset& d, std::ostream& out);
Dataset read_csv(std::istream& in, std::uint64_t spec_fingerprint = 0);

void write_csv_file(const Dataset& d, const std::string& path);
Dataset read_csv_file(const std::string& path, std::uint64_t spec_fingerprint = 0);

/// Shortest decimal text that round-trips a double.
std::string format_real(double v);

/// Dataset with categorical labels mapped to support indices.
struct IndexedTuple {
  std::uint8_t s, a, m, s_next;
  double r;
};
std::vector<IndexedTuple> index_tuples(const Dataset& d, const Supports& sup);

}  // namespace pescal
