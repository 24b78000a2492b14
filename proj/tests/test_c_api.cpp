#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>

#include <filesystem>
#include <string>

#include <json.hpp>

#include "pescal/pescal.h"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json take_json(char* text) {
  REQUIRE(text != nullptr);
  auto j = json::parse(text);
  pescal_string_free(text);
  return j;
}

}  // namespace

TEST_CASE("spec handles") {
  CHECK(std::string(pescal_version()) == "1.0.0");
  pescal_spec* spec = nullptr;
  REQUIRE(pescal_spec_create(nullptr, &spec) == PESCAL_OK);
  char* text = nullptr;
  REQUIRE(pescal_spec_to_json(spec, &text) == PESCAL_OK);
  const auto j = take_json(text);
  CHECK(j.at("coef_a") == json::array({1.0, 2.0}));
  std::uint64_t fp = 0;
  CHECK(pescal_spec_fingerprint(spec, &fp) == PESCAL_OK);
  CHECK(fp != 0);

  pescal_spec* other = nullptr;
  REQUIRE(pescal_spec_create(R"({"coef_c":[0.5]})", &other) == PESCAL_OK);
  std::uint64_t fp2 = 0;
  pescal_spec_fingerprint(other, &fp2);
  CHECK(fp2 != fp);
  pescal_spec_free(other);

  pescal_spec* bad = nullptr;
  CHECK(pescal_spec_create("{not json", &bad) == PESCAL_CONFIG_ERROR);
  CHECK(bad == nullptr);
  CHECK(std::string(pescal_last_error()).find("JSON") != std::string::npos);
  CHECK(pescal_spec_create(R"({"mediator_floor": 0.9})", &bad) == PESCAL_CONFIG_ERROR);
  CHECK(pescal_spec_create("{}", nullptr) == PESCAL_INVALID_ARGUMENT);
  CHECK(pescal_spec_to_json(nullptr, &text) == PESCAL_INVALID_ARGUMENT);
  pescal_spec_free(spec);
  pescal_spec_free(nullptr);
}

TEST_CASE("datasets through the C interface") {
  pescal_spec* spec = nullptr;
  REQUIRE(pescal_spec_create("{}", &spec) == PESCAL_OK);
  pescal_dataset* d = nullptr;
  REQUIRE(pescal_dataset_generate(spec, 1, 10, 100, 7, &d) == PESCAL_OK);
  std::size_t n = 0;
  CHECK(pescal_dataset_size(d, &n) == PESCAL_OK);
  CHECK(n == 1000);

  pescal_dataset* f = nullptr;
  REQUIRE(pescal_dataset_coverage_filter(d, 15, &f) == PESCAL_OK);
  std::size_t nf = 0;
  pescal_dataset_size(f, &nf);
  CHECK(nf < n);
  CHECK(nf >= 15);
  CHECK(pescal_dataset_coverage_filter(d, n + 1, &f) == PESCAL_CONFIG_ERROR);

  const auto path = fs::temp_directory_path() / ("pescal_capi_" + std::to_string(::getpid()) + ".csv");
  REQUIRE(pescal_dataset_write_csv(d, path.c_str()) == PESCAL_OK);
  pescal_dataset* back = nullptr;
  REQUIRE(pescal_dataset_read_csv(spec, path.c_str(), &back) == PESCAL_OK);
  std::size_t nb = 0;
  pescal_dataset_size(back, &nb);
  CHECK(nb == n);
  fs::remove(path);
  CHECK(pescal_dataset_read_csv(spec, path.c_str(), &back) == PESCAL_IO_ERROR);
  CHECK(pescal_dataset_generate(spec, 1, 0, 100, 7, &d) == PESCAL_INVALID_ARGUMENT);

  pescal_dataset_free(back);
  pescal_dataset_free(f);
  pescal_dataset_free(d);
  pescal_spec_free(spec);
}

TEST_CASE("oracle and commands") {
  pescal_spec* spec = nullptr;
  REQUIRE(pescal_spec_create("{}", &spec) == PESCAL_OK);
  char* text = nullptr;
  REQUIRE(pescal_oracle_report(spec, 0.95, &text) == PESCAL_OK);
  const auto report = take_json(text);
  CHECK(report.at("J_star").get<double>() == doctest::Approx(7.628173642185596).epsilon(1e-9));
  CHECK(pescal_oracle_report(spec, 1.5, &text) == PESCAL_CONFIG_ERROR);
  pescal_spec_free(spec);

  const auto out = fs::temp_directory_path() / ("pescal_capi_run_" + std::to_string(::getpid()));
  const json opts = {{"out", out.string()}, {"log_level", "quiet"}};
  REQUIRE(pescal_run_command("oracle", "{}", opts.dump().c_str(), &text) == PESCAL_OK);
  CHECK(take_json(text).at("command") == "oracle");
  CHECK(fs::exists(out / "oracle_report.json"));
  fs::remove_all(out);

  CHECK(pescal_run_command("oracle", R"({"bogus":1})", opts.dump().c_str(), &text) == PESCAL_CONFIG_ERROR);
  CHECK(text == nullptr);
  CHECK(std::string(pescal_last_error()).find("bogus") != std::string::npos);
  CHECK(pescal_run_command("dance", "{}", nullptr, &text) == PESCAL_CONFIG_ERROR);
  CHECK(pescal_run_command(nullptr, "{}", nullptr, &text) == PESCAL_INVALID_ARGUMENT);
  const json blocked = {{"out", "/proc/pescal_forbidden"}, {"log_level", "quiet"}};
  const auto st = pescal_run_command("oracle", "{}", blocked.dump().c_str(), &text);
  CHECK((st == PESCAL_IO_ERROR || st == PESCAL_RUNTIME_ERROR));
}
