#include "pescal/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "pescal/log.hpp"
#include "pescal/nuisance.hpp"
#include "pescal/oracle.hpp"
#include "pescal/random.hpp"

namespace pescal {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kDataStream = 0x64617461;   // "data"
constexpr std::uint64_t kTrainStream = 0x747261696e;  // "train"
constexpr std::uint64_t kCheckStream = 0x636865636b;  // "check"

const std::vector<Learner> kAllLearners{Learner::Cal, Learner::Pescal, Learner::Fqi, Learner::Cql};

struct Preset {
  std::size_t n_seeds;
  std::size_t total_steps;
};

Preset preset_for(const std::string& name) {
  if (name == "desk") return {10, 2000};
  if (name == "full") return {100, 10000};
  throw ConfigError("unknown preset '" + name + "' (expected desk or full)");
}

void require_object(const json& j, const std::string& what) {
  if (!j.is_object()) throw ConfigError(what + " must be a JSON object");
}

template <class T>
T get_field(const json& j, const std::string& key, const std::string& ctx) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(ctx + "." + key + ": " + e.what());
  }
}

std::string resolve_path(const std::string& p, const fs::path& base) {
  fs::path path(p);
  if (path.is_relative() && !base.empty()) path = base / path;
  return path.string();
}

CoverageSetting parse_coverage(const json& j) {
  CoverageSetting cov;
  if (j.is_string()) {
    if (j.get<std::string>() != "full") throw ConfigError("coverage string must be 'full'");
    return cov;
  }
  require_object(j, "coverage");
  int modes = 0;
  for (const auto& [key, value] : j.items()) {
    if (key == "full") {
      if (!value.is_boolean()) throw ConfigError("coverage.full must be a boolean");
      if (value.get<bool>()) ++modes;
    } else if (key == "keep_k") {
      cov.kind = CoverageKind::KeepK;
      cov.keep_k = get_field<std::size_t>(j, key, "coverage");
      ++modes;
    } else if (key == "keep_fraction") {
      cov.kind = CoverageKind::KeepFraction;
      cov.keep_fraction = get_field<double>(j, key, "coverage");
      if (!(cov.keep_fraction >= 0.0 && cov.keep_fraction <= 1.0))
        throw ConfigError("coverage.keep_fraction must lie in [0, 1]");
      ++modes;
    } else if (key == "suboptimal_actions") {
      cov.suboptimal_actions = get_field<std::vector<int>>(j, key, "coverage");
    } else {
      throw ConfigError("unknown coverage key '" + key + "'");
    }
  }
  if (modes > 1) throw ConfigError("coverage fields conflict: choose one of full, keep_k, keep_fraction");
  return cov;
}

json coverage_to_json(const CoverageSetting& c) {
  json j;
  switch (c.kind) {
    case CoverageKind::Full: j["full"] = true; break;
    case CoverageKind::KeepK: j["keep_k"] = c.keep_k; break;
    case CoverageKind::KeepFraction: j["keep_fraction"] = c.keep_fraction; break;
  }
  if (c.kind != CoverageKind::Full) j["suboptimal_actions"] = c.suboptimal_actions;
  return j;
}

std::vector<std::pair<Learner, json>> parse_learner_list(const json& j) {
  std::vector<std::pair<Learner, json>> out;
  if (j.is_array()) {
    for (const auto& item : j) {
      if (item.is_string()) {
        out.emplace_back(learner_from_string(item.get<std::string>()), json::object());
      } else if (item.is_object()) {
        const auto name = get_field<std::string>(item, "name", "learners[]");
        json overrides = item.value("overrides", json::object());
        for (const auto& [key, _] : item.items())
          if (key != "name" && key != "overrides") throw ConfigError("unknown learner key '" + key + "'");
        out.emplace_back(learner_from_string(name), overrides);
      } else {
        throw ConfigError("learners entries must be names or objects");
      }
    }
  } else if (j.is_object()) {
    for (const auto& [key, value] : j.items()) out.emplace_back(learner_from_string(key), value);
  } else {
    throw ConfigError("learners must be a list or an object");
  }
  if (out.empty()) throw ConfigError("at least one learner is required");
  for (std::size_t i = 0; i < out.size(); ++i)
    for (std::size_t k = 0; k < i; ++k)
      if (out[i].first == out[k].first) throw ConfigError("learner listed twice: " + to_string(out[i].first));
  return out;
}

std::vector<std::uint64_t> parse_seed_json(const json& j) {
  if (j.is_number_unsigned() || j.is_number_integer()) {
    const auto n = j.get<std::int64_t>();
    if (n <= 0) throw ConfigError("seeds count must be positive");
    std::vector<std::uint64_t> s(static_cast<std::size_t>(n));
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = i + 1;
    return s;
  }
  if (j.is_array()) {
    std::vector<std::uint64_t> s;
    for (const auto& v : j) {
      if (!v.is_number_integer() || v.get<std::int64_t>() < 0)
        throw ConfigError("seeds must be nonnegative integers");
      s.push_back(v.get<std::uint64_t>());
    }
    if (s.empty()) throw ConfigError("seed list is empty");
    return s;
  }
  throw ConfigError("seeds must be a count or a list");
}

std::string policy_key(std::size_t index, const DeterministicPolicy& pi) {
  std::string key = std::to_string(index) + ":";
  for (std::size_t a : pi.action) key += std::to_string(a) + ",";
  return key;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Collects written files so the manifest can list their content hashes.
class OutputTree {
 public:
  OutputTree(fs::path root, std::string command, const ExperimentConfig& cfg)
      : root_(std::move(root)), command_(std::move(command)), cfg_(cfg) {}

  void write(const std::string& rel, const std::string& contents) {
    write_file_atomic(root_ / rel, contents);
    std::lock_guard lock(mutex_);
    files_[rel] = hex64(fnv1a64(contents));
  }

  void finish(const json& extra = json::object()) {
    json manifest = {{"command", command_},
                     {"config_hash", hex64(cfg_.hash())},
                     {"spec_fingerprint", hex64(fingerprint(cfg_.spec))},
                     {"config", cfg_.canonical()},
                     {"files", files_}};
    for (const auto& [k, v] : extra.items()) manifest[k] = v;
    write_file_atomic(root_ / "manifest.json", manifest.dump(2) + "\n");
  }

  const fs::path& root() const { return root_; }

 private:
  fs::path root_;
  std::string command_;
  const ExperimentConfig& cfg_;
  std::mutex mutex_;
  std::map<std::string, std::string> files_;
};

std::string dataset_csv(const Dataset& d) {
  std::ostringstream ss;
  write_csv(d, ss);
  return ss.str();
}

}  // namespace

std::string CoverageSetting::name() const {
  switch (kind) {
    case CoverageKind::Full: return "full";
    case CoverageKind::KeepK: return "keep" + std::to_string(keep_k);
    case CoverageKind::KeepFraction: {
      if (keep_fraction == 0.5) return "keephalf";
      std::ostringstream ss;
      ss << "keepfrac" << keep_fraction;
      return ss.str();
    }
  }
  return "full";
}

std::size_t CoverageSetting::kept_prefix(std::size_t n) const {
  switch (kind) {
    case CoverageKind::Full: return n;
    case CoverageKind::KeepK: return keep_k;
    case CoverageKind::KeepFraction:
      return static_cast<std::size_t>(std::floor(keep_fraction * static_cast<double>(n)));
  }
  return n;
}

json ExperimentConfig::canonical() const {
  json learners_json = json::array();
  for (const auto& ls : learners)
    learners_json.push_back({{"name", to_string(ls.learner)}, {"train", to_json(ls.cfg)}});
  json j = {{"spec", spec},
            {"dataset",
             {{"n_tuples", n_tuples}, {"horizon", trajectory_horizon}, {"seed", dataset_seed}}},
            {"coverage", coverage_to_json(coverage)},
            {"learners", learners_json},
            {"eval", to_json(eval)},
            {"seeds", seeds},
            {"z", z},
            {"preset", preset}};
  if (!dataset_dir.empty()) j["dataset"]["dir"] = dataset_dir;
  if (!policies.empty()) j["policies"] = policies;
  if (!policies_path.empty()) j["policies_path"] = policies_path;
  return j;
}

std::uint64_t ExperimentConfig::hash() const { return fnv1a64(canonical().dump()); }

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  if (text.empty()) throw ConfigError("empty seed specification");
  std::vector<std::uint64_t> out;
  const bool list = text.find(',') != std::string::npos;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty() || item.find_first_not_of("0123456789") != std::string::npos)
      throw ConfigError("invalid seed '" + item + "'");
    try {
      out.push_back(std::stoull(item));
    } catch (const std::exception&) {
      throw ConfigError("seed out of range '" + item + "'");
    }
  }
  if (!list) {
    const auto n = out.front();
    if (n == 0) throw ConfigError("seed count must be positive");
    out.clear();
    for (std::uint64_t i = 1; i <= n; ++i) out.push_back(i);
  }
  return out;
}

RunOptions run_options_from_json(const json& j) {
  RunOptions o;
  if (j.is_null()) return o;
  require_object(j, "options");
  for (const auto& [key, value] : j.items()) {
    if (key == "out") o.out = get_field<std::string>(j, key, "options");
    else if (key == "seeds") o.seeds = value.is_string() ? value.get<std::string>() : value.dump();
    else if (key == "preset") o.preset = get_field<std::string>(j, key, "options");
    else if (key == "jobs") {
      o.jobs = get_field<std::size_t>(j, key, "options");
      if (o.jobs == 0) throw ConfigError("jobs must be positive");
    } else if (key == "log_level") {
      const auto lvl = get_field<std::string>(j, key, "options");
      if (lvl == "quiet") set_log_level(LogLevel::Quiet);
      else if (lvl == "info") set_log_level(LogLevel::Info);
      else if (lvl == "debug") set_log_level(LogLevel::Debug);
      else throw ConfigError("unknown log level '" + lvl + "'");
    } else {
      throw ConfigError("unknown option '" + key + "'");
    }
  }
  return o;
}

ExperimentConfig parse_experiment_config(const json& j, const RunOptions& opts,
                                         const fs::path& base_dir) {
  require_object(j, "config");
  static const std::vector<std::string> known{
      "spec", "spec_path", "confounded", "gamma", "dataset", "coverage", "learners", "train",
      "eval", "seeds", "z", "output_dir", "preset", "policies", "policies_path"};
  for (const auto& [key, _] : j.items())
    if (std::ranges::find(known, key) == known.end()) throw ConfigError("unknown config key '" + key + "'");
  if (j.contains("spec") && j.contains("spec_path"))
    throw ConfigError("give either spec or spec_path, not both");

  ExperimentConfig cfg;
  cfg.preset = opts.preset.value_or(j.value("preset", std::string("desk")));
  const Preset preset = preset_for(cfg.preset);

  if (j.contains("spec")) {
    try {
      cfg.spec = j.at("spec").get<SyntheticM2dpSpec>();
    } catch (const json::exception& e) {
      throw ConfigError(std::string("spec: ") + e.what());
    }
  } else if (j.contains("spec_path")) {
    const auto path = resolve_path(get_field<std::string>(j, "spec_path", "config"), base_dir);
    json sj;
    try {
      sj = json::parse(read_text(path));
      cfg.spec = sj.get<SyntheticM2dpSpec>();
    } catch (const json::exception& e) {
      throw ConfigError("spec_path " + path + ": " + e.what());
    } catch (const std::runtime_error& e) {
      throw ConfigError(e.what());
    }
  }
  if (j.contains("confounded")) cfg.spec.confounded = get_field<bool>(j, "confounded", "config");
  cfg.spec.validate();

  const double gamma = j.contains("gamma") ? get_field<double>(j, "gamma", "config") : 0.95;
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in [0, 1)");

  if (j.contains("dataset")) {
    const auto& d = j.at("dataset");
    require_object(d, "dataset");
    for (const auto& [key, _] : d.items()) {
      if (key == "n_tuples") cfg.n_tuples = get_field<std::size_t>(d, key, "dataset");
      else if (key == "horizon") cfg.trajectory_horizon = get_field<std::size_t>(d, key, "dataset");
      else if (key == "seed") cfg.dataset_seed = get_field<std::uint64_t>(d, key, "dataset");
      else if (key == "dir") cfg.dataset_dir = resolve_path(get_field<std::string>(d, key, "dataset"), base_dir);
      else throw ConfigError("unknown dataset key '" + key + "'");
    }
  }
  if (cfg.n_tuples == 0) throw ConfigError("dataset.n_tuples must be positive");
  if (cfg.trajectory_horizon == 0) throw ConfigError("dataset.horizon must be positive");

  if (j.contains("coverage")) cfg.coverage = parse_coverage(j.at("coverage"));
  for (int a : cfg.coverage.suboptimal_actions) (void)cfg.spec.supports().action_index(a);

  TrainConfig base;
  base.gamma = gamma;
  base.total_steps = preset.total_steps;
  base.r_max = cfg.spec.r_max();
  if (j.contains("train")) {
    if (j.at("train").contains("gamma")) throw ConfigError("set gamma at the top level of the config");
    apply_overrides(base, j.at("train"));
  }
  std::vector<std::pair<Learner, json>> learners;
  if (j.contains("learners")) learners = parse_learner_list(j.at("learners"));
  else
    for (Learner l : kAllLearners) learners.emplace_back(l, json::object());
  for (auto& [l, overrides] : learners) {
    LearnerSetup ls{l, base};
    if (overrides.contains("gamma")) throw ConfigError("set gamma at the top level of the config");
    apply_overrides(ls.cfg, overrides);
    cfg.learners.push_back(std::move(ls));
  }

  cfg.eval.gamma = gamma;
  if (j.contains("eval")) {
    if (j.at("eval").contains("gamma")) throw ConfigError("set gamma at the top level of the config");
    apply_overrides(cfg.eval, j.at("eval"));
  }
  cfg.eval.validate();

  if (j.contains("z")) {
    cfg.z = get_field<double>(j, "z", "config");
    if (!(cfg.z > 0.0)) throw ConfigError("z must be positive");
  }
  cfg.seeds = j.contains("seeds") ? parse_seed_json(j.at("seeds")) : parse_seeds(std::to_string(preset.n_seeds));
  if (opts.seeds) cfg.seeds = parse_seeds(*opts.seeds);

  if (j.contains("output_dir"))
    cfg.output_dir = resolve_path(get_field<std::string>(j, "output_dir", "config"), base_dir);
  if (opts.out) cfg.output_dir = *opts.out;

  if (j.contains("policies")) {
    const auto& p = j.at("policies");
    if (!p.is_array()) throw ConfigError("policies must be a list");
    const auto sup = cfg.spec.supports();
    for (const auto& item : p) {
      (void)policy_from_json(item, sup);
      cfg.policies.push_back(item);
    }
  }
  if (j.contains("policies_path"))
    cfg.policies_path = resolve_path(get_field<std::string>(j, "policies_path", "config"), base_dir);
  return cfg;
}

Dataset raw_seed_dataset(const M2dpModel& model, const ExperimentConfig& cfg, std::uint64_t seed) {
  const std::size_t n_traj = (cfg.n_tuples + cfg.trajectory_horizon - 1) / cfg.trajectory_horizon;
  Dataset d = generate_dataset(model, model.spec().confounded, n_traj, cfg.trajectory_horizon,
                               derive_seed(derive_seed(cfg.dataset_seed, seed), kDataStream));
  d.tuples.resize(cfg.n_tuples);
  return d;
}

Dataset seed_dataset(const M2dpModel& model, const ExperimentConfig& cfg, std::uint64_t seed) {
  if (!cfg.dataset_dir.empty()) {
    const auto path = fs::path(cfg.dataset_dir) / ("seed_" + std::to_string(seed) + ".csv");
    if (!fs::exists(path)) throw ConfigError("missing dataset " + path.string());
    Dataset d = read_csv_file(path.string(), model.fingerprint());
    validate_dataset(d, model.supports(), model.spec().r_max());
    return d;
  }
  Dataset d = raw_seed_dataset(model, cfg, seed);
  if (cfg.coverage.kind == CoverageKind::Full) return d;
  return coverage_filter(d, {cfg.coverage.kept_prefix(d.size()), cfg.coverage.suboptimal_actions});
}

SeedRun run_seed(const M2dpModel& model, const ExperimentConfig& cfg, const Dataset& data,
                 std::uint64_t seed) {
  const auto idx = index_tuples(data, model.supports());
  const Nuisances nz = estimate_nuisances(idx, model.supports(), model.spec().mediator_floor, cfg.z);
  const std::uint64_t train_seed = derive_seed(seed, kTrainStream);
  std::map<std::string, double> cache;  // evaluation seed depends only on the checkpoint index
  SeedRun out{seed, data.size(), {}};
  for (const auto& ls : cfg.learners) {
    TrainResult tr = incremental_train(idx, nz, ls.cfg, ls.learner, train_seed);
    std::vector<std::size_t> steps;
    std::vector<double> raw;
    for (std::size_t i = 0; i < tr.checkpoints.size(); ++i) {
      const auto& cp = tr.checkpoints[i];
      const auto key = policy_key(i, cp.policy);
      auto it = cache.find(key);
      if (it == cache.end())
        it = cache.emplace(key, monte_carlo_return(model, cp.policy, cfg.eval, eval_seed(seed, i))).first;
      steps.push_back(cp.step);
      raw.push_back(it->second);
    }
    if (raw.empty()) throw ConfigError("training produced no checkpoints (total_steps < eval_every)");
    const std::size_t window = std::min(cfg.eval.window, raw.size());
    LearnerRun lr;
    lr.learner = ls.learner;
    lr.seed = seed;
    lr.curve = make_curve(to_string(ls.learner), seed, steps, raw, window);
    lr.final_policy = tr.checkpoints.back().policy;
    auto q = tr.mediated ? tr.mediated->q.values() : tr.unmediated->q.values();
    lr.final_q.assign(q.begin(), q.end());
    out.learners.push_back(std::move(lr));
  }
  return out;
}

void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> workers;
  for (std::size_t w = 0; w < jobs; ++w)
    workers.emplace_back([&] {
      while (true) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        {
          std::lock_guard lock(error_mutex);
          if (error) return;
        }
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  for (auto& t : workers) t.join();
  if (error) std::rethrow_exception(error);
}

std::vector<SeedRun> run_all_seeds(const M2dpModel& model, const ExperimentConfig& cfg,
                                   std::size_t jobs) {
  std::vector<SeedRun> runs(cfg.seeds.size());
  parallel_for(runs.size(), jobs, [&](std::size_t i) {
    const auto seed = cfg.seeds[i];
    runs[i] = run_seed(model, cfg, seed_dataset(model, cfg, seed), seed);
    log_debug("seed " + std::to_string(seed) + " done");
  });
  return runs;
}

std::vector<FinalStat> final_statistics(const std::vector<SeedRun>& runs,
                                        const ExperimentConfig& cfg) {
  std::vector<FinalStat> out;
  for (std::size_t l = 0; l < cfg.learners.size(); ++l) {
    std::vector<double> finals;
    for (const auto& r : runs) finals.push_back(r.learners.at(l).curve.points.back().smoothed_return);
    FinalStat st{to_string(cfg.learners[l].learner), 0.0, 0.0, finals.size()};
    for (double v : finals) st.mean += v;
    st.mean /= static_cast<double>(finals.size());
    double ss = 0.0;
    for (double v : finals) ss += (v - st.mean) * (v - st.mean);
    st.sd = std::sqrt(ss / static_cast<double>(finals.size()));
    out.push_back(st);
  }
  return out;
}

json ordering_summary(const std::vector<FinalStat>& stats) {
  json pairs = json::array();
  std::string best;
  double best_mean = -std::numeric_limits<double>::infinity();
  for (const auto& s : stats)
    if (s.mean > best_mean) {
      best_mean = s.mean;
      best = s.learner;
    }
  for (std::size_t i = 0; i < stats.size(); ++i)
    for (std::size_t k = i + 1; k < stats.size(); ++k) {
      const auto& a = stats[i];
      const auto& b = stats[k];
      const double se = std::sqrt(a.sd * a.sd / static_cast<double>(a.n) +
                                  b.sd * b.sd / static_cast<double>(b.n));
      const double diff = a.mean - b.mean;
      const std::string verdict = diff > se ? "greater" : (-diff > se ? "less" : "tie");
      pairs.push_back({{"a", a.learner}, {"b", b.learner}, {"diff", diff}, {"pooled_se", se},
                       {"verdict", verdict}});
    }
  json finals = json::array();
  for (const auto& s : stats)
    finals.push_back({{"learner", s.learner}, {"mean", s.mean}, {"sd", s.sd}, {"n", s.n}});
  return {{"final", finals}, {"best", best}, {"pairs", pairs}};
}

void write_file_atomic(const fs::path& path, const std::string& contents) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  if (ec) throw std::runtime_error("cannot create directory " + path.parent_path().string());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << contents;
    out.flush();
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  fs::rename(tmp, path, ec);
  if (ec) throw std::runtime_error("cannot rename " + tmp.string() + ": " + ec.message());
}

json cmd_gen_data(const ExperimentConfig& cfg, std::size_t jobs) {
  const M2dpModel model(cfg.spec);
  OutputTree tree(cfg.output_dir, "gen-data", cfg);
  std::vector<json> entries(cfg.seeds.size());
  parallel_for(cfg.seeds.size(), jobs, [&](std::size_t i) {
    const auto seed = cfg.seeds[i];
    const Dataset raw = raw_seed_dataset(model, cfg, seed);
    const std::size_t keep = cfg.coverage.kept_prefix(raw.size());
    const Dataset d = cfg.coverage.kind == CoverageKind::Full
                          ? raw
                          : coverage_filter(raw, {keep, cfg.coverage.suboptimal_actions});
    const std::string name = "seed_" + std::to_string(seed) + ".csv";
    tree.write(name, dataset_csv(d));
    json e = {{"file", name},
              {"seed", seed},
              {"spec_fingerprint", hex64(model.fingerprint())},
              {"confounded", cfg.spec.confounded},
              {"generated_tuples", raw.size()},
              {"N", d.size()},
              {"coverage", coverage_to_json(cfg.coverage)}};
    if (cfg.coverage.kind != CoverageKind::Full) {
      e["mechanism"] = "keep-then-filter";
      e["kept_prefix"] = keep;
    } else {
      e["mechanism"] = "none";
    }
    entries[i] = e;
  });
  tree.finish({{"datasets", entries}});
  log_info("wrote " + std::to_string(entries.size()) + " dataset(s) to " + cfg.output_dir);
  return {{"command", "gen-data"}, {"output_dir", cfg.output_dir}, {"datasets", entries}};
}

namespace {

void write_learner_outputs(OutputTree& tree, const std::string& prefix, const ExperimentConfig& cfg,
                           const std::vector<SeedRun>& runs, bool per_seed_curves) {
  for (std::size_t l = 0; l < cfg.learners.size(); ++l) {
    const auto name = to_string(cfg.learners[l].learner);
    std::vector<LearningCurve> curves;
    for (const auto& r : runs) curves.push_back(r.learners.at(l).curve);
    if (per_seed_curves) {
      for (const auto& c : curves) {
        std::ostringstream ss;
        write_curve_csv(std::span(&c, 1), ss);
        tree.write(prefix + "curves/" + name + "_seed" + std::to_string(c.seed) + ".csv", ss.str());
      }
    }
    const auto agg = aggregate(curves, cfg.eval.population_sd);
    std::ostringstream ss;
    write_aggregate_csv(name, agg, ss);
    tree.write(prefix + "aggregate/" + name + ".csv", ss.str());
  }
}

}  // namespace

json cmd_train(const ExperimentConfig& cfg, std::size_t jobs) {
  const M2dpModel model(cfg.spec);
  const auto runs = run_all_seeds(model, cfg, jobs);
  OutputTree tree(cfg.output_dir, "train", cfg);
  write_learner_outputs(tree, "", cfg, runs, true);
  json policies = json::array();
  for (const auto& r : runs)
    for (const auto& lr : r.learners)
      policies.push_back({{"learner", to_string(lr.learner)},
                          {"seed", lr.seed},
                          {"N", r.n_tuples},
                          {"policy", policy_to_json(lr.final_policy, model.supports())},
                          {"final_q", lr.final_q}});
  tree.write("policies.json", json({{"runs", policies}}).dump(2) + "\n");
  const auto summary = ordering_summary(final_statistics(runs, cfg));
  tree.write("summary.json", summary.dump(2) + "\n");
  tree.finish();
  log_info("trained " + std::to_string(cfg.learners.size()) + " learner(s) on " +
           std::to_string(runs.size()) + " seed(s)");
  return {{"command", "train"}, {"output_dir", cfg.output_dir}, {"summary", summary}};
}

json cmd_evaluate(const ExperimentConfig& cfg, std::size_t jobs) {
  const M2dpModel model(cfg.spec);
  const auto sup = model.supports();
  struct Item {
    std::string label;
    std::uint64_t seed;
    DeterministicPolicy pi;
  };
  std::vector<Item> items;
  for (std::size_t i = 0; i < cfg.policies.size(); ++i)
    for (auto seed : cfg.seeds)
      items.push_back({"policy" + std::to_string(i), seed, policy_from_json(cfg.policies[i], sup)});
  if (!cfg.policies_path.empty()) {
    json pj;
    try {
      pj = json::parse(read_text(cfg.policies_path));
      for (const auto& run : pj.at("runs"))
        items.push_back({run.at("learner").get<std::string>(), run.at("seed").get<std::uint64_t>(),
                         policy_from_json(run.at("policy"), sup)});
    } catch (const json::exception& e) {
      throw ConfigError("policies_path " + cfg.policies_path + ": " + e.what());
    } catch (const std::runtime_error& e) {
      throw ConfigError(e.what());
    }
  }
  if (items.empty()) throw ConfigError("evaluate needs policies or policies_path");
  const auto sol = solve_oracle(model, cfg.eval.gamma);
  std::vector<double> mc(items.size()), exact(items.size());
  parallel_for(items.size(), jobs, [&](std::size_t i) {
    mc[i] = monte_carlo_return(model, items[i].pi, cfg.eval, derive_seed(items[i].seed, kCheckStream));
    exact[i] = exact_policy_value(sol.mdp, items[i].pi);
  });
  std::ostringstream ss;
  ss << "label,seed,mc_return,exact_value,regret\n";
  for (std::size_t i = 0; i < items.size(); ++i)
    ss << items[i].label << ',' << items[i].seed << ',' << format_real(mc[i]) << ','
       << format_real(exact[i]) << ',' << format_real(regret(sol.J_star, exact[i])) << '\n';
  OutputTree tree(cfg.output_dir, "evaluate", cfg);
  tree.write("evaluation.csv", ss.str());
  tree.finish({{"J_star", sol.J_star}});
  log_info("evaluated " + std::to_string(items.size()) + " policy/seed pair(s)");
  return {{"command", "evaluate"}, {"output_dir", cfg.output_dir}, {"n", items.size()},
          {"J_star", sol.J_star}};
}

json cmd_oracle(const ExperimentConfig& cfg) {
  const M2dpModel model(cfg.spec);
  const auto sol = solve_oracle(model, cfg.eval.gamma);
  const json report = oracle_report(sol, model.supports());
  OutputTree tree(cfg.output_dir, "oracle", cfg);
  tree.write("oracle_report.json", report.dump(2) + "\n");
  tree.finish();
  log_info("oracle J* = " + std::to_string(sol.J_star));
  return {{"command", "oracle"}, {"output_dir", cfg.output_dir}, {"report", report}};
}

json cmd_figure6(const ExperimentConfig& cfg, std::size_t jobs) {
  std::vector<ExperimentConfig> cells;
  for (bool confounded : {true, false})
    for (int c = 0; c < 3; ++c) {
      ExperimentConfig cell = cfg;
      cell.spec.confounded = confounded;
      cell.dataset_dir.clear();
      cell.coverage = CoverageSetting{};
      cell.coverage.suboptimal_actions = cfg.coverage.suboptimal_actions;
      if (c == 0) {
        cell.coverage.kind = CoverageKind::KeepK;
        cell.coverage.keep_k = 15;
      } else if (c == 1) {
        cell.coverage.kind = CoverageKind::KeepFraction;
        cell.coverage.keep_fraction = 0.5;
      }
      cells.push_back(std::move(cell));
    }
  std::vector<M2dpModel> models;
  for (const auto& c : cells) models.emplace_back(c.spec);
  const std::size_t n_seeds = cfg.seeds.size();
  std::vector<std::vector<SeedRun>> runs(cells.size(), std::vector<SeedRun>(n_seeds));
  parallel_for(cells.size() * n_seeds, jobs, [&](std::size_t t) {
    const std::size_t c = t / n_seeds, i = t % n_seeds;
    const auto seed = cells[c].seeds[i];
    runs[c][i] = run_seed(models[c], cells[c], seed_dataset(models[c], cells[c], seed), seed);
  });
  OutputTree tree(cfg.output_dir, "figure6", cfg);
  json summary_cells = json::array();
  for (std::size_t c = 0; c < cells.size(); ++c) {
    const std::string prefix = std::string(cells[c].spec.confounded ? "confounded" : "unconfounded") +
                               "/" + cells[c].coverage.name() + "/";
    write_learner_outputs(tree, prefix, cells[c], runs[c], false);
    json cell = ordering_summary(final_statistics(runs[c], cells[c]));
    cell["confounded"] = cells[c].spec.confounded;
    cell["coverage"] = cells[c].coverage.name();
    cell["path"] = prefix;
    summary_cells.push_back(cell);
    log_info("cell " + prefix + " best=" + cell["best"].get<std::string>());
  }
  const json summary = {{"cells", summary_cells}};
  tree.write("summary.json", summary.dump(2) + "\n");
  tree.finish();
  return {{"command", "figure6"}, {"output_dir", cfg.output_dir}, {"summary", summary}};
}

json run_command(const std::string& command, const json& config, const RunOptions& opts,
                 const fs::path& base_dir) {
  static const std::vector<std::string> commands{"gen-data", "train", "evaluate", "oracle", "figure6"};
  if (std::ranges::find(commands, command) == commands.end())
    throw ConfigError("unknown command '" + command + "'");
  const ExperimentConfig cfg = parse_experiment_config(config, opts, base_dir);
  if (command == "gen-data") return cmd_gen_data(cfg, opts.jobs);
  if (command == "train") return cmd_train(cfg, opts.jobs);
  if (command == "evaluate") return cmd_evaluate(cfg, opts.jobs);
  if (command == "oracle") return cmd_oracle(cfg);
  return cmd_figure6(cfg, opts.jobs);
}

}  // namespace pescal
