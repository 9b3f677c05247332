#include "ncsc/config.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "ncsc/errors.hpp"

namespace ncsc {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected) {
  throw ValidationError("config key '" + key + "': expected " + expected + ", got '" + value + "'");
}

double to_double(const std::string& key, const std::string& value) {
  char* end = nullptr;
  const double v = std::strtod(value.c_str(), &end);
  if (value.empty() || end != value.c_str() + value.size() || !std::isfinite(v)) bad_value(key, value, "a number");
  return v;
}

std::uint64_t to_u64(const std::string& key, const std::string& value) {
  if (value.empty() || value.find_first_not_of("0123456789") != std::string::npos) {
    bad_value(key, value, "a non-negative integer");
  }
  errno = 0;
  const unsigned long long v = std::strtoull(value.c_str(), nullptr, 10);
  if (errno == ERANGE) bad_value(key, value, "an integer that fits in 64 bits");
  return v;
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  bad_value(key, value, "true or false");
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, sep)) out.push_back(trim(part));
  return out;
}

// Layer entries start with zero units so unset layers are caught by validate().
nn::LayerSpec blank_layer() {
  nn::LayerSpec s;
  s.channels_or_units = 0;
  return s;
}

void set_layer(std::vector<nn::LayerSpec>& stack, const std::string& key, const std::string& rest,
               const std::string& value) {
  const auto dot = rest.find('.');
  if (dot == std::string::npos) throw ValidationError("unknown config key '" + key + "'");
  const std::string index = rest.substr(0, dot), field = rest.substr(dot + 1);
  const std::size_t i = static_cast<std::size_t>(to_u64(key, index));
  if (i > 64) throw ValidationError("config key '" + key + "': layer index too large");
  if (stack.size() <= i) stack.resize(i + 1, blank_layer());
  nn::LayerSpec& s = stack[i];
  if (field == "kind") {
    s.kind = nn::layer_kind_from_string(value);
  } else if (field == "kernel_size") {
    s.kernel_size = to_u64(key, value);
  } else if (field == "stride") {
    s.stride = to_u64(key, value);
  } else if (field == "channels_or_units") {
    s.channels_or_units = to_u64(key, value);
  } else if (field == "activation") {
    s.activation = nn::activation_from_string(value);
  } else if (field == "padding") {
    if (value == "same") {
      s.padding.reset();
    } else {
      s.padding = to_u64(key, value);
    }
  } else {
    throw ValidationError("unknown config key '" + key + "'");
  }
}

void layers_to_text(std::ostringstream& out, const std::string& prefix, const std::vector<nn::LayerSpec>& stack) {
  for (std::size_t i = 0; i < stack.size(); ++i) {
    const auto& s = stack[i];
    const std::string p = prefix + std::to_string(i) + ".";
    out << p << "kind = " << nn::to_string(s.kind) << '\n';
    out << p << "kernel_size = " << s.kernel_size << '\n';
    out << p << "stride = " << s.stride << '\n';
    out << p << "channels_or_units = " << s.channels_or_units << '\n';
    out << p << "activation = " << nn::to_string(s.activation) << '\n';
    out << p << "padding = " << (s.padding ? std::to_string(*s.padding) : std::string("same")) << '\n';
  }
}

void validate_stack(const std::vector<nn::LayerSpec>& stack, const std::string& prefix) {
  for (std::size_t i = 0; i < stack.size(); ++i) {
    const auto& s = stack[i];
    const std::string p = prefix + std::to_string(i);
    if (s.channels_or_units == 0) throw ValidationError("config key '" + p + ".channels_or_units' missing or zero");
    if (s.kernel_size == 0) throw ValidationError("config key '" + p + ".kernel_size' must be >= 1");
    if (s.stride == 0) throw ValidationError("config key '" + p + ".stride' must be >= 1");
  }
}

}  // namespace

void ExperimentConfig::set(const std::string& raw_key, const std::string& raw_value) {
  const std::string key = trim(raw_key), value = trim(raw_value);
  const std::string net = "network.";
  if (key.rfind(net, 0) == 0) {
    const std::string rest = key.substr(net.size());
    if (rest == "input_shape") {
      Shape shape;
      if (!value.empty()) {
        for (const auto& part : split(value, ',')) {
          const auto d = to_u64(key, part);
          if (d == 0) bad_value(key, value, "positive dimensions");
          shape.push_back(d);
        }
      }
      network.input_shape = shape;
    } else if (rest == "num_clusters") {
      network.num_clusters = to_u64(key, value);
    } else if (rest == "intrinsic_dim_guess") {
      network.intrinsic_dim_guess = to_u64(key, value);
    } else if (rest.rfind("encoder.", 0) == 0) {
      set_layer(network.encoder, key, rest.substr(8), value);
    } else if (rest.rfind("decoder.", 0) == 0) {
      set_layer(network.decoder, key, rest.substr(8), value);
    } else if (rest.rfind("classifier_head.", 0) == 0) {
      set_layer(network.classifier_head, key, rest.substr(16), value);
    } else {
      throw ValidationError("unknown config key '" + key + "'");
    }
    return;
  }
  if (key == "lambda1") {
    lambda1 = to_double(key, value);
  } else if (key == "lambda_cl") {
    lambda_cl = to_double(key, value);
  } else if (key == "u") {
    u_schedule.initial = u_schedule.after_first_epoch = to_double(key, value);
  } else if (key == "u_schedule.initial") {
    u_schedule.initial = to_double(key, value);
  } else if (key == "u_schedule.after_first_epoch") {
    u_schedule.after_first_epoch = to_double(key, value);
  } else if (key == "l") {
    l = to_double(key, value);
  } else if (key == "alpha_mode") {
    try {
      alpha_mode = AlphaMode::parse(value);
    } catch (const ValidationError& e) {
      throw ValidationError("config key 'alpha_mode': " + std::string(e.what()));
    }
  } else if (key == "batch_size") {
    batch_size = to_u64(key, value);
  } else if (key == "epochs") {
    epochs = to_u64(key, value);
  } else if (key == "pretrain_epochs") {
    pretrain_epochs = to_u64(key, value);
  } else if (key == "lr_pretrain") {
    lr_pretrain = to_double(key, value);
  } else if (key == "lr_ae") {
    lr_ae = to_double(key, value);
  } else if (key == "lr_other") {
    lr_other = to_double(key, value);
  } else if (key == "inner_se_steps") {
    inner_se_steps = to_u64(key, value);
  } else if (key == "classifier_steps") {
    classifier_steps = to_u64(key, value);
  } else if (key == "separation_weight") {
    separation_weight = to_double(key, value);
  } else if (key == "seed") {
    seed = to_u64(key, value);
  } else if (key == "soft_mask") {
    soft_mask = to_bool(key, value);
  } else if (key == "teacher_gradient") {
    teacher_gradient = to_bool(key, value);
  } else if (key == "reinit_c") {
    reinit_c = to_bool(key, value);
  } else {
    throw ValidationError("unknown config key '" + key + "'");
  }
}

void ExperimentConfig::validate() const {
  auto require = [](bool ok, const std::string& key, const std::string& rule) {
    if (!ok) throw ValidationError("config key '" + key + "': " + rule);
  };
  require(lambda1 > 0.0, "lambda1", "must be > 0");
  require(lambda_cl >= 0.0, "lambda_cl", "must be >= 0");
  require(l > 0.0 && l < 1.0, "l", "must lie in (0, 1)");
  require(u_schedule.initial > l && u_schedule.initial < 1.0, "u_schedule.initial", "must satisfy l < u < 1");
  require(u_schedule.after_first_epoch > l && u_schedule.after_first_epoch < 1.0, "u_schedule.after_first_epoch",
          "must satisfy l < u < 1");
  require(batch_size >= 2, "batch_size", "must be >= 2");
  require(lr_pretrain >= 0.0, "lr_pretrain", "must be >= 0");
  require(lr_ae >= 0.0, "lr_ae", "must be >= 0");
  require(lr_other >= 0.0, "lr_other", "must be >= 0");
  require(separation_weight >= 0.0, "separation_weight", "must be >= 0");
  require(network.num_clusters >= 2, "network.num_clusters", "must be >= 2");
  require(!network.encoder.empty(), "network.encoder", "needs at least one layer");
  require(!network.decoder.empty(), "network.decoder", "needs at least one layer");
  validate_stack(network.encoder, "network.encoder.");
  validate_stack(network.decoder, "network.decoder.");
  validate_stack(network.classifier_head, "network.classifier_head.");
}

std::string ExperimentConfig::to_text() const {
  std::ostringstream out;
  if (!network.input_shape.empty()) {
    out << "network.input_shape = ";
    for (std::size_t i = 0; i < network.input_shape.size(); ++i) out << (i ? "," : "") << network.input_shape[i];
    out << '\n';
  }
  out << "network.num_clusters = " << network.num_clusters << '\n';
  out << "network.intrinsic_dim_guess = " << network.intrinsic_dim_guess << '\n';
  layers_to_text(out, "network.encoder.", network.encoder);
  layers_to_text(out, "network.decoder.", network.decoder);
  layers_to_text(out, "network.classifier_head.", network.classifier_head);
  out << "lambda1 = " << fmt(lambda1) << '\n';
  out << "lambda_cl = " << fmt(lambda_cl) << '\n';
  out << "u_schedule.initial = " << fmt(u_schedule.initial) << '\n';
  out << "u_schedule.after_first_epoch = " << fmt(u_schedule.after_first_epoch) << '\n';
  out << "l = " << fmt(l) << '\n';
  out << "alpha_mode = " << alpha_mode.to_string() << '\n';
  out << "batch_size = " << batch_size << '\n';
  out << "epochs = " << epochs << '\n';
  out << "pretrain_epochs = " << pretrain_epochs << '\n';
  out << "lr_pretrain = " << fmt(lr_pretrain) << '\n';
  out << "lr_ae = " << fmt(lr_ae) << '\n';
  out << "lr_other = " << fmt(lr_other) << '\n';
  out << "inner_se_steps = " << inner_se_steps << '\n';
  out << "classifier_steps = " << classifier_steps << '\n';
  out << "separation_weight = " << fmt(separation_weight) << '\n';
  out << "seed = " << seed << '\n';
  out << "soft_mask = " << (soft_mask ? "true" : "false") << '\n';
  out << "teacher_gradient = " << (teacher_gradient ? "true" : "false") << '\n';
  out << "reinit_c = " << (reinit_c ? "true" : "false") << '\n';
  return out.str();
}

CollaborativeOptions ExperimentConfig::collaborative_options(double u) const {
  CollaborativeOptions o;
  o.u = u;
  o.l = l;
  o.soft_mask = soft_mask;
  o.teacher_gradient = teacher_gradient;
  o.alpha = alpha_mode;
  return o;
}

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ValidationError("config line " + std::to_string(line_no) + ": expected key = value, got '" + line + "'");
    }
    cfg.set(line.substr(0, eq), line.substr(eq + 1));
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ValidationError("cannot open config file '" + path.string() + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

std::vector<std::string> config_keys() {
  return {"network.input_shape",
          "network.num_clusters",
          "network.intrinsic_dim_guess",
          "network.<encoder|decoder|classifier_head>.<i>.kind",
          "network.<encoder|decoder|classifier_head>.<i>.kernel_size",
          "network.<encoder|decoder|classifier_head>.<i>.stride",
          "network.<encoder|decoder|classifier_head>.<i>.channels_or_units",
          "network.<encoder|decoder|classifier_head>.<i>.activation",
          "network.<encoder|decoder|classifier_head>.<i>.padding",
          "lambda1",
          "lambda_cl",
          "u",
          "u_schedule.initial",
          "u_schedule.after_first_epoch",
          "l",
          "alpha_mode",
          "batch_size",
          "epochs",
          "pretrain_epochs",
          "lr_pretrain",
          "lr_ae",
          "lr_other",
          "inner_se_steps",
          "classifier_steps",
          "separation_weight",
          "seed",
          "soft_mask",
          "teacher_gradient",
          "reinit_c"};
}

}  // namespace ncsc
