#include "pescal/pescal.h"

#include <cstring>
#include <filesystem>
#include <new>
#include <string>

#include "pescal/dataset.hpp"
#include "pescal/experiment.hpp"
#include "pescal/oracle.hpp"

struct pescal_spec {
  pescal::M2dpModel model;
};

struct pescal_dataset {
  pescal::Dataset data;
  pescal::Supports supports;
};

namespace {

thread_local std::string g_last_error;

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

template <class F>
pescal_status guarded(F&& fn) {
  g_last_error.clear();
  try {
    fn();
    return PESCAL_OK;
  } catch (const pescal::ConfigError& e) {
    g_last_error = e.what();
    return PESCAL_CONFIG_ERROR;
  } catch (const nlohmann::json::exception& e) {
    g_last_error = std::string("invalid JSON: ") + e.what();
    return PESCAL_CONFIG_ERROR;
  } catch (const std::filesystem::filesystem_error& e) {
    g_last_error = e.what();
    return PESCAL_IO_ERROR;
  } catch (const std::ios_base::failure& e) {
    g_last_error = e.what();
    return PESCAL_IO_ERROR;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return PESCAL_RUNTIME_ERROR;
  } catch (...) {
    g_last_error = "unknown error";
    return PESCAL_RUNTIME_ERROR;
  }
}

pescal_status invalid(const char* what) {
  g_last_error = what;
  return PESCAL_INVALID_ARGUMENT;
}

nlohmann::json parse_or_empty(const char* text) {
  if (!text || !*text) return nlohmann::json::object();
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw pescal::ConfigError(std::string("invalid JSON: ") + e.what());
  }
}

}  // namespace

extern "C" {

const char* pescal_last_error(void) { return g_last_error.c_str(); }

void pescal_string_free(char* s) { std::free(s); }

const char* pescal_version(void) { return "1.0.0"; }

pescal_status pescal_spec_create(const char* spec_json, pescal_spec** out) {
  if (!out) return invalid("out is null");
  *out = nullptr;
  return guarded([&] {
    const auto j = parse_or_empty(spec_json);
    pescal::SyntheticM2dpSpec spec;
    try {
      spec = j.get<pescal::SyntheticM2dpSpec>();
    } catch (const nlohmann::json::exception& e) {
      throw pescal::ConfigError(std::string("spec: ") + e.what());
    }
    *out = new pescal_spec{pescal::M2dpModel(std::move(spec))};
  });
}

void pescal_spec_free(pescal_spec* spec) { delete spec; }

pescal_status pescal_spec_to_json(const pescal_spec* spec, char** out_json) {
  if (!spec || !out_json) return invalid("null argument");
  return guarded([&] { *out_json = dup_string(nlohmann::json(spec->model.spec()).dump()); });
}

pescal_status pescal_spec_fingerprint(const pescal_spec* spec, uint64_t* out) {
  if (!spec || !out) return invalid("null argument");
  *out = spec->model.fingerprint();
  g_last_error.clear();
  return PESCAL_OK;
}

pescal_status pescal_dataset_generate(const pescal_spec* spec, int confounded,
                                      size_t n_trajectories, size_t horizon, uint64_t seed,
                                      pescal_dataset** out) {
  if (!spec || !out) return invalid("null argument");
  if (n_trajectories == 0 || horizon == 0) return invalid("empty dataset requested");
  *out = nullptr;
  return guarded([&] {
    auto d = pescal::generate_dataset(spec->model, confounded != 0, n_trajectories, horizon, seed);
    *out = new pescal_dataset{std::move(d), spec->model.supports()};
  });
}

pescal_status pescal_dataset_read_csv(const pescal_spec* spec, const char* path,
                                      pescal_dataset** out) {
  if (!spec || !path || !out) return invalid("null argument");
  *out = nullptr;
  return guarded([&] {
    if (!std::filesystem::exists(path)) throw std::filesystem::filesystem_error(
        "dataset not found", path, std::make_error_code(std::errc::no_such_file_or_directory));
    auto d = pescal::read_csv_file(path, spec->model.fingerprint());
    pescal::validate_dataset(d, spec->model.supports(), spec->model.spec().r_max());
    *out = new pescal_dataset{std::move(d), spec->model.supports()};
  });
}

void pescal_dataset_free(pescal_dataset* d) { delete d; }

pescal_status pescal_dataset_size(const pescal_dataset* d, size_t* out) {
  if (!d || !out) return invalid("null argument");
  *out = d->data.size();
  g_last_error.clear();
  return PESCAL_OK;
}

pescal_status pescal_dataset_write_csv(const pescal_dataset* d, const char* path) {
  if (!d || !path) return invalid("null argument");
  return guarded([&] { pescal::write_csv_file(d->data, path); });
}

pescal_status pescal_dataset_coverage_filter(const pescal_dataset* d, size_t keep_k,
                                             pescal_dataset** out) {
  if (!d || !out) return invalid("null argument");
  *out = nullptr;
  return guarded([&] {
    auto f = pescal::coverage_filter(d->data, {keep_k, {0, 1}});
    *out = new pescal_dataset{std::move(f), d->supports};
  });
}

pescal_status pescal_oracle_report(const pescal_spec* spec, double gamma, char** out_json) {
  if (!spec || !out_json) return invalid("null argument");
  return guarded([&] {
    const auto sol = pescal::solve_oracle(spec->model, gamma);
    *out_json = dup_string(pescal::oracle_report(sol, spec->model.supports()).dump());
  });
}

pescal_status pescal_run_command(const char* command, const char* config_json,
                                 const char* options_json, char** out_json) {
  if (!command || !out_json) return invalid("null argument");
  *out_json = nullptr;
  return guarded([&] {
    auto opts_json = parse_or_empty(options_json);
    std::filesystem::path base_dir;
    if (opts_json.contains("base_dir")) {
      base_dir = opts_json.at("base_dir").get<std::string>();
      opts_json.erase("base_dir");
    }
    const auto opts = pescal::run_options_from_json(opts_json);
    const auto result = pescal::run_command(command, parse_or_empty(config_json), opts, base_dir);
    *out_json = dup_string(result.dump());
  });
}

}  // extern "C"
