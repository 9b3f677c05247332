// Command-line front end. Talks to the library only through the C API.
#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "ncsc/ncsc.h"

namespace {

// Carries a status code out of nested helpers.
struct Failure {
  int code;
};

void check(ncsc_status st, const std::string& context) {
  if (st == NCSC_OK) return;
  std::cerr << "error: " << context << ": " << ncsc_last_error() << '\n';
  throw Failure{static_cast<int>(st)};
}

template <typename T, void (*Free)(T*)>
struct Handle {
  T* p = nullptr;
  Handle() = default;
  Handle(const Handle&) = delete;
  Handle& operator=(const Handle&) = delete;
  ~Handle() { Free(p); }
  T* get() const { return p; }
  T** out() { return &p; }
};

using Dataset = Handle<ncsc_dataset, ncsc_dataset_free>;
using Config = Handle<ncsc_config, ncsc_config_free>;
using Trainer = Handle<ncsc_trainer, ncsc_trainer_free>;

struct DataOptions {
  std::string data;
  std::string labels;
  std::size_t subset = 0;
  bool balanced = false;
  std::uint64_t subset_seed = 0;
};

void add_data_options(CLI::App* cmd, DataOptions& o, bool required) {
  auto* d = cmd->add_option("--data", o.data, "features file: CSV (one row per point) or IDX images");
  if (required) d->required();
  cmd->add_option("--labels", o.labels, "labels file (CSV or IDX); used for evaluation only");
  cmd->add_option("--subset", o.subset, "use a seeded sample of this many points");
  cmd->add_flag("--balanced", o.balanced, "sample the subset evenly per class (label-aware)");
  cmd->add_option("--subset-seed", o.subset_seed, "seed of the subset sample");
}

void load_data(const DataOptions& o, Dataset& out) {
  Dataset full;
  check(ncsc_dataset_load(o.data.c_str(), o.labels.empty() ? nullptr : o.labels.c_str(), full.out()),
        "loading '" + o.data + "'");
  if (o.subset == 0) {
    std::swap(full.p, out.p);
    return;
  }
  check(ncsc_dataset_subset(full.get(), o.subset, o.balanced ? 1 : 0, o.subset_seed, out.out()), "subset");
}

// Config file, then --set pairs, then dedicated flags; later wins.
struct ConfigOptions {
  std::string path;
  std::vector<std::string> sets;
  std::vector<std::pair<std::string, std::string>> flags;
  std::optional<std::uint64_t> seed;
};

const char* const kMirroredKeys[] = {
    "lambda1",     "lambda_cl",       "u",           "u_schedule.initial", "u_schedule.after_first_epoch",
    "l",           "alpha_mode",      "batch_size",  "epochs",             "pretrain_epochs",
    "lr_pretrain", "lr_ae",           "lr_other",    "inner_se_steps",     "classifier_steps",
    "separation_weight", "soft_mask", "teacher_gradient", "reinit_c",      "network.num_clusters",
    "network.intrinsic_dim_guess", "network.input_shape"};

void add_config_options(CLI::App* cmd, ConfigOptions& o, std::vector<std::string>& mirrored) {
  cmd->add_option("--config", o.path, "experiment config file (key = value lines)");
  cmd->add_option("--set", o.sets, "override a config key, as key=value (repeatable)");
  cmd->add_option("--seed", o.seed, "seed for every random choice (default 0)");
  mirrored.resize(std::size(kMirroredKeys));
  for (std::size_t i = 0; i < std::size(kMirroredKeys); ++i) {
    cmd->add_option(std::string("--") + kMirroredKeys[i], mirrored[i], std::string("config key ") + kMirroredKeys[i]);
  }
}

void build_config(const ConfigOptions& o, const std::vector<std::string>& mirrored, Config& cfg) {
  if (o.path.empty()) {
    check(ncsc_config_new(cfg.out()), "config");
  } else {
    check(ncsc_config_load(o.path.c_str(), cfg.out()), "config '" + o.path + "'");
  }
  for (const auto& kv : o.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      std::cerr << "error: --set expects key=value, got '" << kv << "'\n";
      throw Failure{1};
    }
    check(ncsc_config_set(cfg.get(), kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str()), "--set " + kv);
  }
  for (std::size_t i = 0; i < mirrored.size(); ++i) {
    if (!mirrored[i].empty()) {
      check(ncsc_config_set(cfg.get(), kMirroredKeys[i], mirrored[i].c_str()), std::string("--") + kMirroredKeys[i]);
    }
  }
  if (o.seed) check(ncsc_config_set(cfg.get(), "seed", std::to_string(*o.seed).c_str()), "--seed");
  check(ncsc_config_validate(cfg.get()), "config");
}

void write_line_to(const char* line, void* user) { *static_cast<std::ostream*>(user) << line << '\n'; }

struct FitSinks {
  std::ofstream log;
  std::ofstream metrics;
};

void step_sink(const char* line, void* user) { static_cast<FitSinks*>(user)->log << line << '\n'; }

void epoch_sink(const char* line, void* user) {
  auto* s = static_cast<FitSinks*>(user);
  if (s->metrics.is_open()) s->metrics << line << '\n';
  std::cout << line << '\n';
}

std::vector<std::size_t> read_label_file(const std::string& path) {
  // One integer per line.
  std::ifstream f(path);
  if (!f) {
    std::cerr << "error: cannot open '" << path << "'\n";
    throw Failure{1};
  }
  std::vector<std::size_t> out;
  std::string line;
  std::size_t no = 0;
  while (std::getline(f, line)) {
    ++no;
    if (line.empty() || line == "\r") continue;
    try {
      std::size_t used = 0;
      const long long v = std::stoll(line, &used);
      if (v < 0 || line.find_first_not_of(" \t\r", used) != std::string::npos) throw std::invalid_argument("");
      out.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      std::cerr << "error: '" << path << "' line " << no << ": bad label '" << line << "'\n";
      throw Failure{1};
    }
  }
  return out;
}

void print_metrics(const std::vector<std::size_t>& truth, const std::vector<std::size_t>& pred, std::size_t k) {
  std::size_t needed = 0;
  check(ncsc_metrics_row(truth.data(), pred.data(), truth.size(), k, nullptr, 0, &needed), "metrics");
  std::string row(needed, '\0');
  check(ncsc_metrics_row(truth.data(), pred.data(), truth.size(), k, row.data(), row.size(), &needed), "metrics");
  row.resize(needed - 1);
  std::cout << ncsc_metrics_header() << '\n' << row << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neural collaborative subspace clustering"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a union-of-subspaces dataset as CSV");
  std::size_t k = 3, d = 3, ambient = 30, n_per = 100;
  double noise = 0.0;
  std::string nonlinearity = "none", scaling = "max-abs", out_prefix = "synthetic";
  std::uint64_t synth_seed = 0;
  synth->add_option("--k", k, "number of subspaces");
  synth->add_option("--d", d, "subspace dimension");
  synth->add_option("--D", ambient, "ambient dimension");
  synth->add_option("--n-per", n_per, "points per subspace");
  synth->add_option("--noise", noise, "isotropic Gaussian noise sigma");
  synth->add_option("--nonlinearity", nonlinearity, "none | tanh-warp | square-warp");
  synth->add_option("--scaling", scaling, "max-abs | min-max");
  synth->add_option("--seed", synth_seed, "generator seed (default 0)");
  synth->add_option("--out", out_prefix, "writes <out>.features.csv and <out>.labels.csv");

  // pretrain
  auto* pre = app.add_subcommand("pretrain", "pretrain the autoencoder and write a checkpoint");
  DataOptions pre_data;
  ConfigOptions pre_cfg;
  std::vector<std::string> pre_mirror;
  std::string pre_out = "pretrained.ckpt";
  add_data_options(pre, pre_data, true);
  add_config_options(pre, pre_cfg, pre_mirror);
  pre->add_option("--out", pre_out, "checkpoint path");

  // train
  auto* train = app.add_subcommand("train", "collaborative training; pretrains first unless --init is given");
  DataOptions train_data;
  ConfigOptions train_cfg;
  std::vector<std::string> train_mirror;
  std::string train_init, train_out = "model.ckpt", train_log = "train_log.csv", train_metrics;
  add_data_options(train, train_data, true);
  add_config_options(train, train_cfg, train_mirror);
  train->add_option("--init", train_init, "checkpoint to start from (e.g. from pretrain)");
  train->add_option("--out", train_out, "checkpoint path");
  train->add_option("--log", train_log, "per-step training log CSV");
  train->add_option("--metrics", train_metrics, "per-epoch metrics CSV (needs --labels)");

  // eval
  auto* eval = app.add_subcommand("eval", "print ACC/NMI/ARI for predictions or a checkpoint");
  std::string eval_truth, eval_pred, eval_ckpt, eval_pred_out;
  DataOptions eval_data;
  ConfigOptions eval_cfg;
  std::vector<std::string> eval_mirror;
  std::size_t eval_k = 0;
  eval->add_option("--truth", eval_truth, "ground-truth label file (with --pred)");
  eval->add_option("--pred", eval_pred, "predicted label file (with --truth)");
  eval->add_option("--k", eval_k, "number of clusters for the size column");
  eval->add_option("--checkpoint", eval_ckpt, "trained checkpoint to predict with");
  eval->add_option("--pred-out", eval_pred_out, "write predicted labels here");
  add_data_options(eval, eval_data, false);
  add_config_options(eval, eval_cfg, eval_mirror);

  // export-affinity
  auto* exp = app.add_subcommand("export-affinity", "write A_s and A_c of one batch as CSV and PGM");
  DataOptions exp_data;
  ConfigOptions exp_cfg;
  std::vector<std::string> exp_mirror;
  std::string exp_ckpt, exp_prefix = "affinity";
  std::size_t exp_batch = 0;
  add_data_options(exp, exp_data, true);
  add_config_options(exp, exp_cfg, exp_mirror);
  exp->add_option("--checkpoint", exp_ckpt, "trained checkpoint")->required();
  exp->add_option("--batch", exp_batch, "batch index in the fixed partition");
  exp->add_option("--out", exp_prefix, "output prefix");

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of every op and a small network");
  std::uint64_t gc_seed = 0;
  std::size_t gc_instances = 20;
  double gc_threshold = 1e-4;
  gc->add_option("--seed", gc_seed, "seed (default 0)");
  gc->add_option("--instances", gc_instances, "random instances per op");
  gc->add_option("--threshold", gc_threshold, "maximum tolerated relative error");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (synth->parsed()) {
      Dataset data;
      check(ncsc_dataset_synthetic(k, d, ambient, n_per, noise, nonlinearity.c_str(), scaling.c_str(), synth_seed,
                                   data.out()),
            "synth");
      const std::string f = out_prefix + ".features.csv", l = out_prefix + ".labels.csv";
      check(ncsc_dataset_write_csv(data.get(), f.c_str(), l.c_str()), "writing dataset");
      std::cout << "wrote " << f << " and " << l << " (" << ncsc_dataset_size(data.get()) << " points)\n";
      return 0;
    }

    if (pre->parsed()) {
      Config cfg;
      build_config(pre_cfg, pre_mirror, cfg);
      Dataset data;
      load_data(pre_data, data);
      Trainer tr;
      check(ncsc_trainer_new(cfg.get(), data.get(), tr.out()), "building model");
      double before = 0.0, after = 0.0;
      const ncsc_status st = ncsc_trainer_pretrain(tr.get(), data.get(), &before, &after);
      if (st != NCSC_OK) {
        // Keep the last finite parameters around for inspection.
        ncsc_trainer_save(tr.get(), pre_out.c_str());
        check(st, "pretraining");
      }
      check(ncsc_trainer_save(tr.get(), pre_out.c_str()), "saving checkpoint");
      std::printf("reconstruction mse %.6g -> %.6g\nwrote %s\n", before, after, pre_out.c_str());
      return 0;
    }

    if (train->parsed()) {
      Config cfg;
      build_config(train_cfg, train_mirror, cfg);
      Dataset data;
      load_data(train_data, data);
      Trainer tr;
      check(ncsc_trainer_new(cfg.get(), data.get(), tr.out()), "building model");
      if (train_init.empty()) {
        double before = 0.0, after = 0.0;
        check(ncsc_trainer_pretrain(tr.get(), data.get(), &before, &after), "pretraining");
        std::fprintf(stderr, "pretrained: reconstruction mse %.6g -> %.6g\n", before, after);
      } else {
        check(ncsc_trainer_load(tr.get(), train_init.c_str()), "loading '" + train_init + "'");
      }
      FitSinks sinks;
      sinks.log.open(train_log);
      if (!sinks.log) {
        std::cerr << "error: cannot open '" << train_log << "' for writing\n";
        return 2;
      }
      sinks.log << ncsc_training_log_header() << '\n';
      if (!train_metrics.empty()) {
        sinks.metrics.open(train_metrics);
        if (!sinks.metrics) {
          std::cerr << "error: cannot open '" << train_metrics << "' for writing\n";
          return 2;
        }
        sinks.metrics << "epoch," << ncsc_metrics_header() << '\n';
      }
      std::cout << "epoch," << ncsc_metrics_header() << '\n';
      const ncsc_status st = ncsc_trainer_fit(tr.get(), data.get(), step_sink, epoch_sink, &sinks);
      if (st != NCSC_OK) {
        ncsc_trainer_save(tr.get(), train_out.c_str());
        check(st, "training");
      }
      check(ncsc_trainer_save(tr.get(), train_out.c_str()), "saving checkpoint");
      std::cout << "wrote " << train_out << " and " << train_log << '\n';
      return 0;
    }

    if (eval->parsed()) {
      if (!eval_truth.empty() || !eval_pred.empty()) {
        if (eval_truth.empty() || eval_pred.empty()) {
          std::cerr << "error: --truth and --pred go together\n";
          return 1;
        }
        const auto truth = read_label_file(eval_truth);
        const auto pred = read_label_file(eval_pred);
        print_metrics(truth, pred, eval_k);
        return 0;
      }
      if (eval_ckpt.empty() || eval_data.data.empty()) {
        std::cerr << "error: eval needs --truth/--pred or --checkpoint with --data\n";
        return 1;
      }
      Config cfg;
      build_config(eval_cfg, eval_mirror, cfg);
      Dataset data;
      load_data(eval_data, data);
      Trainer tr;
      check(ncsc_trainer_new(cfg.get(), data.get(), tr.out()), "building model");
      check(ncsc_trainer_load(tr.get(), eval_ckpt.c_str()), "loading '" + eval_ckpt + "'");
      std::vector<std::size_t> pred(ncsc_dataset_size(data.get()));
      check(ncsc_trainer_predict(tr.get(), data.get(), pred.data(), pred.size()), "predict");
      if (!eval_pred_out.empty()) {
        std::ofstream f(eval_pred_out);
        for (auto p : pred) f << p << '\n';
        if (!f) {
          std::cerr << "error: failed writing '" << eval_pred_out << "'\n";
          return 2;
        }
      }
      if (!ncsc_dataset_has_labels(data.get())) {
        std::cerr << "error: --labels is needed to score predictions\n";
        return 1;
      }
      std::vector<std::size_t> truth(pred.size());
      check(ncsc_dataset_labels(data.get(), truth.data(), truth.size()), "labels");
      std::size_t needed = 0;
      check(ncsc_config_to_text(cfg.get(), nullptr, 0, &needed), "config");
      std::string text(needed, '\0');
      check(ncsc_config_to_text(cfg.get(), text.data(), text.size(), &needed), "config");
      std::size_t clusters = eval_k;
      const auto pos = text.find("network.num_clusters = ");
      if (clusters == 0 && pos != std::string::npos) clusters = std::stoul(text.substr(pos + 23));
      print_metrics(truth, pred, clusters);
      return 0;
    }

    if (exp->parsed()) {
      Config cfg;
      build_config(exp_cfg, exp_mirror, cfg);
      Dataset data;
      load_data(exp_data, data);
      Trainer tr;
      check(ncsc_trainer_new(cfg.get(), data.get(), tr.out()), "building model");
      check(ncsc_trainer_load(tr.get(), exp_ckpt.c_str()), "loading '" + exp_ckpt + "'");
      check(ncsc_trainer_export_affinity(tr.get(), data.get(), exp_batch, exp_prefix.c_str()), "export");
      std::cout << "wrote " << exp_prefix << "_As.{csv,pgm} and " << exp_prefix << "_Ac.{csv,pgm}\n";
      return 0;
    }

    if (gc->parsed()) {
      double worst = 0.0;
      std::cout << "op,instances,max_rel_error\n";
      check(ncsc_gradcheck(gc_seed, gc_instances, &worst, write_line_to, &std::cout), "gradcheck");
      std::printf("max relative error %.3e (threshold %.1e)\n", worst, gc_threshold);
      return worst < gc_threshold ? 0 : 2;
    }
  } catch (const Failure& f) {
    return f.code;
  }
  return 0;
}
