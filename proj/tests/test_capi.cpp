#include <doctest.h>

#include <string>
#include <vector>

#include "ncsc/ncsc.h"

namespace {

std::string config_text(const ncsc_config* cfg) {
  size_t needed = 0;
  REQUIRE(ncsc_config_to_text(cfg, nullptr, 0, &needed) == NCSC_OK);
  std::string s(needed, '\0');
  REQUIRE(ncsc_config_to_text(cfg, s.data(), s.size(), &needed) == NCSC_OK);
  s.resize(needed - 1);
  return s;
}

void set_all(ncsc_config* cfg, const std::vector<std::pair<const char*, const char*>>& kv) {
  for (const auto& [k, v] : kv) REQUIRE(ncsc_config_set(cfg, k, v) == NCSC_OK);
}

}  // namespace

TEST_CASE("status codes and messages") {
  ncsc_config* cfg = nullptr;
  REQUIRE(ncsc_config_new(&cfg) == NCSC_OK);
  CHECK(ncsc_config_set(cfg, "no_such_key", "1") == NCSC_VALIDATION_ERROR);
  CHECK(std::string(ncsc_last_error()).find("no_such_key") != std::string::npos);
  CHECK(ncsc_config_set(nullptr, "lambda1", "1") == NCSC_VALIDATION_ERROR);
  ncsc_config* missing = nullptr;
  CHECK(ncsc_config_load("/nonexistent/file.cfg", &missing) == NCSC_VALIDATION_ERROR);
  CHECK(missing == nullptr);
  CHECK(config_text(cfg).find("lambda1 = 10") != std::string::npos);
  ncsc_config_free(cfg);
  ncsc_config_free(nullptr);
  CHECK(std::string(ncsc_version()).size() > 0);
}

TEST_CASE("metrics through the C API") {
  const size_t t[] = {0, 0, 1, 1}, p[] = {1, 1, 0, 0};
  ncsc_metrics m{};
  REQUIRE(ncsc_evaluate(t, p, 4, &m) == NCSC_OK);
  CHECK(m.acc == 1.0);
  CHECK(m.nmi == doctest::Approx(1.0));
  CHECK(m.ari == 1.0);
  char buf[8];
  size_t needed = 0;
  CHECK(ncsc_metrics_row(t, p, 4, 2, buf, sizeof buf, &needed) == NCSC_VALIDATION_ERROR);
  CHECK(needed > sizeof buf);
  CHECK(std::string(ncsc_metrics_header()) == "n,k,acc,nmi,ari,cluster_sizes");
}

TEST_CASE("synthetic pipeline through the C API") {
  ncsc_dataset* data = nullptr;
  REQUIRE(ncsc_dataset_synthetic(3, 2, 12, 20, 0.0, "tanh-warp", "max-abs", 1, &data) == NCSC_OK);
  CHECK(ncsc_dataset_size(data) == 60);
  CHECK(ncsc_dataset_feature_count(data) == 12);
  CHECK(ncsc_dataset_has_labels(data) == 1);
  ncsc_dataset* bad = nullptr;
  CHECK(ncsc_dataset_synthetic(3, 5, 12, 20, 0.0, "none", "max-abs", 1, &bad) == NCSC_VALIDATION_ERROR);

  ncsc_config* cfg = nullptr;
  REQUIRE(ncsc_config_new(&cfg) == NCSC_OK);
  set_all(cfg, {{"network.num_clusters", "3"},
                {"network.intrinsic_dim_guess", "2"},
                {"network.encoder.0.kind", "dense"},
                {"network.encoder.0.channels_or_units", "6"},
                {"network.encoder.0.activation", "none"},
                {"network.decoder.0.kind", "dense"},
                {"network.decoder.0.channels_or_units", "12"},
                {"network.decoder.0.activation", "none"},
                {"batch_size", "30"},
                {"epochs", "1"},
                {"pretrain_epochs", "3"},
                {"inner_se_steps", "2"}});
  REQUIRE(ncsc_config_validate(cfg) == NCSC_OK);

  ncsc_trainer* tr = nullptr;
  REQUIRE(ncsc_trainer_new(cfg, data, &tr) == NCSC_OK);
  double before = 0, after = 0;
  REQUIRE(ncsc_trainer_pretrain(tr, data, &before, &after) == NCSC_OK);
  CHECK(after < before);
  std::vector<std::string> steps, epochs;
  auto sink = [](const char* line, void* user) { static_cast<std::vector<std::string>*>(user)->push_back(line); };
  REQUIRE(ncsc_trainer_fit(tr, data, sink, nullptr, &steps) == NCSC_OK);
  CHECK(steps.size() == 2);
  CHECK(ncsc_trainer_batch_count(tr, data) == 2);
  std::vector<size_t> labels(60);
  REQUIRE(ncsc_trainer_predict(tr, data, labels.data(), labels.size()) == NCSC_OK);
  for (auto l : labels) CHECK(l < 3);
  CHECK(ncsc_trainer_predict(tr, data, labels.data(), 10) == NCSC_VALIDATION_ERROR);

  ncsc_trainer_free(tr);
  ncsc_config_free(cfg);
  ncsc_dataset_free(data);
}

TEST_CASE("gradcheck through the C API") {
  double worst = 1.0;
  size_t lines = 0;
  auto count = [](const char*, void* user) { ++*static_cast<size_t*>(user); };
  REQUIRE(ncsc_gradcheck(0, 3, &worst, count, &lines) == NCSC_OK);
  CHECK(lines == 18);
  CHECK(worst < 1e-4);
}
