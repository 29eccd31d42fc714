#include <cmath>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "doctest.h"

#include "ctos/ctos.h"

namespace fs = std::filesystem;

namespace {

std::string config_text(const ctos_config* c) {
  size_t needed = 0;
  REQUIRE(ctos_config_json(c, nullptr, 0, &needed) == CTOS_OK);
  std::string buf(needed + 1, '\0');
  REQUIRE(ctos_config_json(c, buf.data(), buf.size(), &needed) == CTOS_OK);
  buf.resize(needed);
  return buf;
}

}  // namespace

TEST_CASE("version and status names") {
  CHECK(std::strlen(ctos_version()) > 0);
  CHECK(std::string(ctos_status_name(CTOS_ERR_PARSE)).find("parse") != std::string::npos);
  CHECK(ctos_status_is_validation(CTOS_ERR_CONFIG));
  CHECK_FALSE(ctos_status_is_validation(CTOS_ERR_DIVERGENCE));
  CHECK_FALSE(ctos_status_is_validation(CTOS_OK));
}

TEST_CASE("suite lifecycle") {
  ctos_suite_params p;
  ctos_suite_params_default(&p);
  p.task_count = 4;
  ctos_suite* s = nullptr;
  REQUIRE(ctos_suite_generate(&p, &s) == CTOS_OK);
  CHECK(ctos_suite_task_count(s) == 4);
  const int sizes[] = {2, 2};
  CHECK(ctos_suite_partition(s, sizes, 2) == CTOS_OK);
  CHECK(ctos_suite_batch_count(s) == 2);
  const auto dir = fs::temp_directory_path() / "ctos_capi_suite";
  fs::remove_all(dir);
  CHECK(ctos_suite_save(s, dir.c_str()) == CTOS_OK);
  ctos_suite* back = nullptr;
  CHECK(ctos_suite_load((dir / "manifest.json").c_str(), 0.25, 0, &back) == CTOS_OK);
  CHECK(ctos_suite_batch_count(back) == 2);

  ctos_probe_params probe;
  ctos_probe_params_default(&probe);
  CHECK(probe.samples_per_class == 20);
  CHECK(probe.hidden == 16);
  probe.epochs = 2;
  std::vector<int> order(4, -1);
  CHECK(ctos_select_order(back, &probe, "logme", 0.1, (dir / "sel").c_str(), order.data()) == CTOS_OK);
  CHECK(fs::exists(dir / "sel" / "order.json"));
  CHECK((order[0] < 2 && order[1] < 2 && order[2] >= 2 && order[3] >= 2));
  CHECK(ctos_select_order(back, &probe, "nce", 0.1, (dir / "sel2").c_str(), nullptr) == CTOS_ERR_CONFIG);
  ctos_suite_free(back);
  ctos_suite_free(s);
}

TEST_CASE("invalid arguments map to validation statuses") {
  ctos_suite_params p;
  ctos_suite_params_default(&p);
  p.task_count = 1;
  ctos_suite* s = nullptr;
  CHECK(ctos_suite_generate(&p, &s) == CTOS_ERR_CONFIG);
  CHECK(s == nullptr);
  CHECK(std::string(ctos_last_error()).find("task_count") != std::string::npos);
  CHECK(ctos_suite_generate(nullptr, &s) == CTOS_ERR_INPUT);
  CHECK(ctos_suite_load("/nonexistent/manifest.json", 0.25, 0, &s) != CTOS_OK);
}

TEST_CASE("config edit and serialisation") {
  ctos_config* c = nullptr;
  REQUIRE(ctos_config_from_json(R"({"master_seed": 3, "suite": {}})", &c) == CTOS_OK);
  CHECK(ctos_config_set(c, "probe.samples_per_class", "5") == CTOS_OK);
  CHECK(ctos_config_set(c, "metric", "leep") == CTOS_OK);
  CHECK(ctos_config_set(c, "bogus", "1") == CTOS_ERR_CONFIG);
  CHECK(ctos_config_set(c, "random_order_count", "0") == CTOS_ERR_CONFIG);
  const auto text = config_text(c);
  CHECK(text.find("\"samples_per_class\": 5") != std::string::npos);
  CHECK(text.find("\"leep\"") != std::string::npos);
  ctos_config_free(c);
  CHECK(ctos_config_from_json("{not json", &c) == CTOS_ERR_PARSE);
}

TEST_CASE("run and correlate through the C surface") {
  const auto dir = fs::temp_directory_path() / "ctos_capi_run";
  fs::remove_all(dir);
  ctos_config* c = nullptr;
  const std::string json = R"({"suite": {"task_count": 3, "samples_per_class": 10}, "buffer_capacities": [10],
      "random_order_count": 3, "train": {"epochs": 2, "hidden": 6}, "output_dir": ")" + dir.string() + "\"}";
  REQUIRE(ctos_config_from_json(json.c_str(), &c) == CTOS_OK);
  CHECK(ctos_run(c) == CTOS_OK);
  CHECK(fs::exists(dir / "reports.csv"));
  CHECK(ctos_correlate(dir.c_str(), (dir / "again").c_str()) == CTOS_OK);
  CHECK(fs::exists(dir / "again" / "correlation.csv"));
  ctos_config_free(c);
}

TEST_CASE("invalid config writes nothing") {
  const auto dir = fs::temp_directory_path() / "ctos_capi_invalid";
  fs::remove_all(dir);
  ctos_config* c = nullptr;
  const std::string json = R"({"random_order_count": 0, "output_dir": ")" + dir.string() + "\"}";
  if (ctos_config_from_json(json.c_str(), &c) == CTOS_OK) {
    CHECK(ctos_run(c) == CTOS_ERR_CONFIG);
    ctos_config_free(c);
  }
  CHECK_FALSE(fs::exists(dir));
}

TEST_CASE("numeric surfaces") {
  const double probs[] = {1, 0, 0, 1, 1, 0, 0, 1};
  const int32_t labels[] = {0, 1, 0, 1};
  double v = 1.0;
  CHECK(ctos_leep(probs, 4, 2, labels, &v) == CTOS_OK);
  CHECK(std::abs(v) <= 1e-12);
  CHECK(ctos_metric_score("gbc", probs, 4, 2, labels, 0.1, &v) == CTOS_OK);
  CHECK(ctos_metric_score("transrate", probs, 4, 2, labels, 0.1, &v) == CTOS_OK);
  CHECK(v > 0.0);

  const double xs[] = {1, 2, 3, 4}, ys[] = {3, 5, 7, 9};
  double r = 0, p = 1;
  CHECK(ctos_pearson(xs, ys, 4, &r, &p) == CTOS_OK);
  CHECK(std::abs(r - 1.0) <= 1e-12);
  const double flat[] = {1, 1, 1, 1};
  CHECK(ctos_pearson(xs, flat, 4, &r, &p) == CTOS_ERR_INPUT);

  const double a[] = {0, 1, 2, 3, 0, 4, 0, 1, 0};
  int order[3];
  CHECK(ctos_greedy_order(a, 3, order) == CTOS_OK);
  CHECK((order[0] == 2 && order[1] == 0 && order[2] == 1));

  const double g[] = {-1, 0}, ref[] = {1, 1};
  double out[2];
  CHECK(ctos_agem_project(g, ref, 2, out) == CTOS_OK);
  CHECK(std::abs(out[0] + out[1]) <= 1e-15);
}
