#include <doctest.h>

#include "ncsc/config.hpp"
#include "ncsc/errors.hpp"

using namespace ncsc;

namespace {

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const ValidationError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("defaults") {
  ExperimentConfig c;
  CHECK(c.lambda1 == 10.0);
  CHECK(c.u_schedule.initial == 0.7);
  CHECK(c.u_schedule.after_first_epoch == 0.9);
  CHECK(c.l == 0.1);
  CHECK(c.inner_se_steps == 20);
  CHECK(c.seed == 0);
  CHECK(c.soft_mask);
  CHECK_FALSE(c.teacher_gradient);
}

TEST_CASE("parse, override and round trip") {
  const std::string text =
      "# comment\n"
      "lambda1 = 4.5\n"
      "u_schedule.initial = 0.6\n"
      "alpha_mode = fixed:2\n"
      "network.num_clusters = 3\n"
      "network.input_shape = 1,4,4\n"
      "network.encoder.0.kind = conv\n"
      "network.encoder.0.kernel_size = 3\n"
      "network.encoder.0.stride = 2\n"
      "network.encoder.0.channels_or_units = 4\n"
      "network.encoder.0.padding = 0\n"
      "network.decoder.0.kind = conv-transpose\n"
      "network.decoder.0.channels_or_units = 1\n"
      "network.decoder.0.activation = none\n";
  ExperimentConfig c = parse_config(text);
  CHECK(c.lambda1 == 4.5);
  CHECK(c.u_schedule.initial == 0.6);
  CHECK_FALSE(c.alpha_mode.automatic);
  CHECK(c.network.input_shape == Shape{1, 4, 4});
  REQUIRE(c.network.encoder.size() == 1);
  CHECK(c.network.encoder[0].kind == nn::LayerKind::Conv);
  CHECK(c.network.encoder[0].padding == std::optional<std::size_t>(0));
  CHECK_FALSE(c.network.decoder[0].padding.has_value());

  const ExperimentConfig back = parse_config(c.to_text());
  CHECK(back.to_text() == c.to_text());

  c.set("u", "0.8");
  CHECK(c.u_schedule.initial == 0.8);
  CHECK(c.u_schedule.after_first_epoch == 0.8);
}

TEST_CASE("errors name the key") {
  ExperimentConfig c;
  CHECK(error_of([&] { c.set("lambda2", "1"); }).find("lambda2") != std::string::npos);
  CHECK(error_of([&] { c.set("epochs", "-3"); }).find("epochs") != std::string::npos);
  CHECK(error_of([&] { c.set("lambda1", "abc"); }).find("lambda1") != std::string::npos);
  CHECK(error_of([&] { c.set("network.encoder.0.kind", "pool"); }).find("pool") != std::string::npos);
  CHECK(error_of([] { parse_config("lambda1 = 1\nnonsense\n"); }).find("line 2") != std::string::npos);

  ExperimentConfig bad;
  bad.set("l", "0.8");
  CHECK(error_of([&] { bad.validate(); }).find("l") != std::string::npos);
  ExperimentConfig neg;
  neg.lambda_cl = -1.0;
  CHECK_THROWS_AS(neg.validate(), ValidationError);
  ExperimentConfig zero;
  zero.lambda_cl = 0.0;
  zero.network.num_clusters = 3;
  CHECK(error_of([&] { zero.validate(); }).find("lambda_cl") == std::string::npos);
}

TEST_CASE("every listed key is accepted") {
  for (const auto& key : config_keys()) {
    INFO(key);
    CHECK_FALSE(key.empty());
  }
  CHECK(config_keys().size() > 15);
}
