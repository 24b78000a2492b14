#include "pescal/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "pescal/random.hpp"

namespace pescal {

Dataset flatten(std::span<const Trajectory> trajectories) {
  Dataset d;
  if (trajectories.empty()) return d;
  d.spec_fingerprint = trajectories.front().spec_fingerprint;
  std::size_t total = 0;
  for (const auto& traj : trajectories) {
    if (traj.spec_fingerprint != d.spec_fingerprint)
      throw ConfigError("cannot flatten trajectories generated from different specs");
    total += traj.steps.size();
  }
  d.tuples.reserve(total);
  for (std::size_t i = 0; i < trajectories.size(); ++i) {
    const auto& steps = trajectories[i].steps;
    for (std::size_t t = 0; t < steps.size(); ++t) {
      const Step& st = steps[t];
      d.tuples.push_back({static_cast<std::int64_t>(i), static_cast<std::int64_t>(t), st.s, st.a,
                          st.m, static_cast<double>(st.r), st.s_next});
    }
  }
  return d;
}

Dataset coverage_filter(const Dataset& d, const CoverageFilterSpec& f) {
  if (f.keep_k > d.size())
    throw ConfigError("coverage filter keep_k " + std::to_string(f.keep_k) +
                      " exceeds dataset size " + std::to_string(d.size()));
  Dataset out;
  out.spec_fingerprint = d.spec_fingerprint;
  out.tuples.assign(d.tuples.begin(), d.tuples.begin() + static_cast<std::ptrdiff_t>(f.keep_k));
  for (std::size_t i = f.keep_k; i < d.size(); ++i) {
    const auto& tup = d.tuples[i];
    if (std::find(f.suboptimal_actions.begin(), f.suboptimal_actions.end(), tup.a) ==
        f.suboptimal_actions.end())
      out.tuples.push_back(tup);
  }
  return out;
}

Dataset generate_dataset(const M2dpModel& model, bool confounded, std::size_t n_trajectories,
                         std::size_t horizon, std::uint64_t seed) {
  const RolloutMode mode = confounded ? RolloutMode{BehaviorConfounded{}}
                                      : RolloutMode{BehaviorUnconfounded{}};
  std::vector<Trajectory> trajs;
  trajs.reserve(n_trajectories);
  for (std::size_t i = 0; i < n_trajectories; ++i)
    trajs.push_back(sample_trajectory(model, mode, horizon, derive_seed(seed, i)));
  Dataset d = flatten(trajs);
  d.spec_fingerprint = model.fingerprint();
  return d;
}

void validate_dataset(const Dataset& d, const Supports& sup, double r_max) {
  for (const auto& tup : d.tuples) {
    sup.state_index(tup.s);
    sup.action_index(tup.a);
    sup.mediator_index(tup.m);
    sup.state_index(tup.s_next);
    if (!std::isfinite(tup.r) || std::abs(tup.r) > r_max)
      throw ConfigError("reward " + format_real(tup.r) + " exceeds R_max");
  }
}

std::string format_real(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void write_csv(const Dataset& d, std::ostream& out) {
  out << "traj_id,t,s,a,m,r,s_next\n";
  for (const auto& tup : d.tuples)
    out << tup.traj_id << ',' << tup.t << ',' << tup.s << ',' << tup.a << ',' << tup.m << ','
        << format_real(tup.r) << ',' << tup.s_next << '\n';
}

namespace {

template <typename T>
T parse_field(std::string_view text, std::size_t line_no) {
  T value{};
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size())
    throw ConfigError("malformed CSV field '" + std::string(text) + "' on line " +
                      std::to_string(line_no));
  return value;
}

}  // namespace

Dataset read_csv(std::istream& in, std::uint64_t spec_fingerprint) {
  Dataset d;
  d.spec_fingerprint = spec_fingerprint;
  std::string line;
  if (!std::getline(in, line) || line != "traj_id,t,s,a,m,r,s_next")
    throw ConfigError("dataset CSV must start with header traj_id,t,s,a,m,r,s_next");
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::string_view rest(line);
    std::string_view fields[7];
    for (int k = 0; k < 7; ++k) {
      auto comma = rest.find(',');
      if ((k < 6) == (comma == std::string_view::npos))
        throw ConfigError("CSV line " + std::to_string(line_no) + " must have 7 fields");
      fields[k] = rest.substr(0, comma);
      rest = k < 6 ? rest.substr(comma + 1) : std::string_view{};
    }
    TransitionTuple tup;
    tup.traj_id = parse_field<std::int64_t>(fields[0], line_no);
    tup.t = parse_field<std::int64_t>(fields[1], line_no);
    tup.s = parse_field<int>(fields[2], line_no);
    tup.a = parse_field<int>(fields[3], line_no);
    tup.m = parse_field<int>(fields[4], line_no);
    tup.r = parse_field<double>(fields[5], line_no);
    tup.s_next = parse_field<int>(fields[6], line_no);
    d.tuples.push_back(tup);
  }
  return d;
}

void write_csv_file(const Dataset& d, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  write_csv(d, out);
  if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

Dataset read_csv_file(const std::string& path, std::uint64_t spec_fingerprint) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open dataset '" + path + "'");
  return read_csv(in, spec_fingerprint);
}

std::vector<IndexedTuple> index_tuples(const Dataset& d, const Supports& sup) {
  std::vector<IndexedTuple> out;
  out.reserve(d.size());
  for (const auto& tup : d.tuples)
    out.push_back({static_cast<std::uint8_t>(sup.state_index(tup.s)),
                   static_cast<std::uint8_t>(sup.action_index(tup.a)),
                   static_cast<std::uint8_t>(sup.mediator_index(tup.m)),
                   static_cast<std::uint8_t>(sup.state_index(tup.s_next)), tup.r});
  return out;
}

}  // namespace pescal
