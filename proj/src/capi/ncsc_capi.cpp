#include "ncsc/ncsc.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <exception>
#include <memory>
#include <new>
#include <string>

#include "ncsc/affinity.hpp"
#include "ncsc/config.hpp"
#include "ncsc/data.hpp"
#include "ncsc/errors.hpp"
#include "ncsc/gradsuite.hpp"
#include "ncsc/metrics.hpp"
#include "ncsc/trainer.hpp"

struct ncsc_dataset {
  ncsc::Dataset data;
};

struct ncsc_config {
  ncsc::ExperimentConfig cfg;
};

struct ncsc_trainer {
  std::unique_ptr<ncsc::Trainer> trainer;
};

namespace {

thread_local std::string g_last_error;

template <typename F>
ncsc_status guarded(F&& body) {
  try {
    body();
    g_last_error.clear();
    return NCSC_OK;
  } catch (const ncsc::ValidationError& e) {
    g_last_error = e.what();
    return NCSC_VALIDATION_ERROR;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return NCSC_RUNTIME_ERROR;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return NCSC_RUNTIME_ERROR;
  } catch (...) {
    g_last_error = "unknown error";
    return NCSC_RUNTIME_ERROR;
  }
}

template <typename T>
void require(const T* p, const char* what) {
  if (!p) throw ncsc::ValidationError(std::string(what) + " is NULL");
}

void copy_text(const std::string& text, char* buffer, std::size_t capacity, std::size_t* needed) {
  if (needed) *needed = text.size() + 1;
  if (!buffer) return;
  if (capacity < text.size() + 1) {
    throw ncsc::ValidationError("buffer of " + std::to_string(capacity) + " bytes is too small, need " +
                                std::to_string(text.size() + 1));
  }
  std::memcpy(buffer, text.c_str(), text.size() + 1);
}

void copy_labels(const ncsc::Labels& labels, std::size_t* out, std::size_t capacity) {
  require(out, "output label buffer");
  if (capacity < labels.size()) {
    throw ncsc::ValidationError("label buffer holds " + std::to_string(capacity) + " entries, need " +
                                std::to_string(labels.size()));
  }
  std::copy(labels.begin(), labels.end(), out);
}

}  // namespace

extern "C" {

const char* ncsc_last_error(void) { return g_last_error.c_str(); }

const char* ncsc_version(void) { return "0.1.0"; }

ncsc_status ncsc_dataset_synthetic(size_t k, size_t d, size_t ambient_dim, size_t n_per, double noise_sigma,
                                   const char* nonlinearity, const char* scaling, uint64_t seed, ncsc_dataset** out) {
  return guarded([&] {
    require(out, "output handle");
    ncsc::SyntheticSpec spec;
    spec.k = k;
    spec.d = d;
    spec.D = ambient_dim;
    spec.n_per = n_per;
    spec.noise_sigma = noise_sigma;
    spec.nonlinearity = ncsc::nonlinearity_from_string(nonlinearity ? nonlinearity : "none");
    spec.scaling = ncsc::scaling_from_string(scaling ? scaling : "max-abs");
    spec.seed = seed;
    *out = new ncsc_dataset{ncsc::generate_synthetic(spec)};
  });
}

ncsc_status ncsc_dataset_load(const char* features_path, const char* labels_path, ncsc_dataset** out) {
  return guarded([&] {
    require(out, "output handle");
    require(features_path, "features path");
    std::optional<std::filesystem::path> labels;
    if (labels_path) labels = labels_path;
    *out = new ncsc_dataset{ncsc::load_dataset(features_path, labels)};
  });
}

ncsc_status ncsc_dataset_subset(const ncsc_dataset* data, size_t n, int balanced, uint64_t seed, ncsc_dataset** out) {
  return guarded([&] {
    require(data, "dataset");
    require(out, "output handle");
    *out = new ncsc_dataset{ncsc::subset(data->data, n, balanced != 0, seed)};
  });
}

ncsc_status ncsc_dataset_write_csv(const ncsc_dataset* data, const char* features_path, const char* labels_path) {
  return guarded([&] {
    require(data, "dataset");
    require(features_path, "features path");
    ncsc::write_features_csv(features_path, data->data.features());
    if (labels_path) ncsc::write_labels_csv(labels_path, data->data.labels_for_evaluation());
  });
}

ncsc_status ncsc_dataset_write_idx(const ncsc_dataset* data, const char* images_path, const char* labels_path) {
  return guarded([&] {
    require(data, "dataset");
    require(images_path, "images path");
    const auto& shape = data->data.sample_shape();
    if (shape.size() != 3 || shape[0] != 1) {
      throw ncsc::ValidationError("IDX export needs single-channel image samples, got " + ncsc::shape_string(shape));
    }
    ncsc::IdxImages img;
    img.rows = shape[1];
    img.cols = shape[2];
    for (double v : data->data.features().values()) {
      if (!(v >= 0.0 && v <= 1.0)) throw ncsc::ValidationError("IDX export needs pixel values in [0, 1]");
      img.pixels.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0)));
    }
    ncsc::write_file_bytes(images_path, ncsc::encode_idx_images(img));
    if (labels_path) {
      std::vector<std::uint8_t> y;
      for (auto l : data->data.labels_for_evaluation()) {
        if (l > 255) throw ncsc::ValidationError("IDX labels must fit in one byte");
        y.push_back(static_cast<std::uint8_t>(l));
      }
      ncsc::write_file_bytes(labels_path, ncsc::encode_idx_labels(y));
    }
  });
}

size_t ncsc_dataset_size(const ncsc_dataset* data) { return data ? data->data.size() : 0; }

size_t ncsc_dataset_feature_count(const ncsc_dataset* data) {
  return data && data->data.size() ? data->data.features().dim(1) : 0;
}

int ncsc_dataset_has_labels(const ncsc_dataset* data) { return data && data->data.has_labels() ? 1 : 0; }

ncsc_status ncsc_dataset_labels(const ncsc_dataset* data, size_t* out, size_t capacity) {
  return guarded([&] {
    require(data, "dataset");
    copy_labels(data->data.labels_for_evaluation(), out, capacity);
  });
}

const char* ncsc_dataset_provenance(const ncsc_dataset* data) { return data ? data->data.provenance().c_str() : ""; }

void ncsc_dataset_free(ncsc_dataset* data) { delete data; }

ncsc_status ncsc_kmeans_labels(const ncsc_dataset* data, size_t k, size_t restarts, uint64_t seed, size_t* out,
                               size_t capacity) {
  return guarded([&] {
    require(data, "dataset");
    copy_labels(ncsc::kmeans(data->data.features(), k, seed, restarts).labels, out, capacity);
  });
}

ncsc_status ncsc_config_new(ncsc_config** out) {
  return guarded([&] {
    require(out, "output handle");
    *out = new ncsc_config{};
  });
}

ncsc_status ncsc_config_load(const char* path, ncsc_config** out) {
  return guarded([&] {
    require(out, "output handle");
    require(path, "config path");
    *out = new ncsc_config{ncsc::load_config(path)};
  });
}

ncsc_status ncsc_config_set(ncsc_config* cfg, const char* key, const char* value) {
  return guarded([&] {
    require(cfg, "config");
    require(key, "key");
    require(value, "value");
    cfg->cfg.set(key, value);
  });
}

ncsc_status ncsc_config_validate(const ncsc_config* cfg) {
  return guarded([&] {
    require(cfg, "config");
    cfg->cfg.validate();
  });
}

ncsc_status ncsc_config_to_text(const ncsc_config* cfg, char* buffer, size_t capacity, size_t* needed) {
  return guarded([&] {
    require(cfg, "config");
    copy_text(cfg->cfg.to_text(), buffer, capacity, needed);
  });
}

void ncsc_config_free(ncsc_config* cfg) { delete cfg; }

ncsc_status ncsc_trainer_new(const ncsc_config* cfg, const ncsc_dataset* shape_source, ncsc_trainer** out) {
  return guarded([&] {
    require(cfg, "config");
    require(shape_source, "dataset");
    require(out, "output handle");
    *out = new ncsc_trainer{std::make_unique<ncsc::Trainer>(cfg->cfg, shape_source->data.sample_shape())};
  });
}

ncsc_status ncsc_trainer_load(ncsc_trainer* trainer, const char* checkpoint_path) {
  return guarded([&] {
    require(trainer, "trainer");
    require(checkpoint_path, "checkpoint path");
    trainer->trainer->load(checkpoint_path);
  });
}

ncsc_status ncsc_trainer_save(const ncsc_trainer* trainer, const char* checkpoint_path) {
  return guarded([&] {
    require(trainer, "trainer");
    require(checkpoint_path, "checkpoint path");
    trainer->trainer->save(checkpoint_path);
  });
}

ncsc_status ncsc_trainer_pretrain(ncsc_trainer* trainer, const ncsc_dataset* data, double* initial_mse,
                                  double* final_mse) {
  return guarded([&] {
    require(trainer, "trainer");
    require(data, "dataset");
    const auto rep = trainer->trainer->pretrain(data->data.features());
    if (initial_mse) *initial_mse = rep.initial_mse;
    if (final_mse) *final_mse = rep.final_mse;
  });
}

ncsc_status ncsc_trainer_fit(ncsc_trainer* trainer, const ncsc_dataset* data, ncsc_line_fn step_log,
                             ncsc_line_fn epoch_log, void* user) {
  return guarded([&] {
    require(trainer, "trainer");
    require(data, "dataset");
    ncsc::Trainer::StepSink on_step;
    ncsc::Trainer::EpochSink on_epoch;
    if (step_log) {
      on_step = [&](const ncsc::StepRecord& r) { step_log(ncsc::training_log_row(r).c_str(), user); };
    }
    if (epoch_log) {
      on_epoch = [&](const ncsc::EpochRecord& r) {
        if (!r.metrics) return;
        const std::string line = std::to_string(r.epoch) + "," + ncsc::metrics_csv_row(*r.metrics);
        epoch_log(line.c_str(), user);
      };
    }
    trainer->trainer->fit(data->data, on_step, on_epoch);
  });
}

ncsc_status ncsc_trainer_predict(ncsc_trainer* trainer, const ncsc_dataset* data, size_t* labels, size_t capacity) {
  return guarded([&] {
    require(trainer, "trainer");
    require(data, "dataset");
    copy_labels(trainer->trainer->predict(data->data.features()), labels, capacity);
  });
}

ncsc_status ncsc_trainer_export_affinity(ncsc_trainer* trainer, const ncsc_dataset* data, size_t batch,
                                         const char* prefix) {
  return guarded([&] {
    require(trainer, "trainer");
    require(data, "dataset");
    require(prefix, "output prefix");
    const auto aff = trainer->trainer->batch_affinities(batch, data->data.features());
    const std::string p = prefix;
    ncsc::write_matrix_csv(p + "_As.csv", aff.a_s);
    ncsc::write_pgm(p + "_As.pgm", aff.a_s);
    ncsc::write_matrix_csv(p + "_Ac.csv", aff.a_c);
    ncsc::write_pgm(p + "_Ac.pgm", aff.a_c);
  });
}

size_t ncsc_trainer_batch_count(ncsc_trainer* trainer, const ncsc_dataset* data) {
  if (!trainer || !data) return 0;
  size_t count = 0;
  guarded([&] {
    trainer->trainer->set_partition(data->data.size());
    count = trainer->trainer->batches().size();
  });
  return count;
}

void ncsc_trainer_free(ncsc_trainer* trainer) { delete trainer; }

const char* ncsc_training_log_header(void) {
  static const std::string h = ncsc::training_log_header();
  return h.c_str();
}

const char* ncsc_metrics_header(void) {
  static const std::string h = ncsc::metrics_csv_header();
  return h.c_str();
}

ncsc_status ncsc_evaluate(const size_t* y_true, const size_t* y_pred, size_t n, ncsc_metrics* out) {
  return guarded([&] {
    require(y_true, "y_true");
    require(y_pred, "y_pred");
    require(out, "output metrics");
    std::span<const std::size_t> t(y_true, n), p(y_pred, n);
    out->acc = ncsc::accuracy(t, p);
    out->nmi = ncsc::nmi(t, p);
    out->ari = n >= 2 ? ncsc::ari(t, p) : 1.0;
  });
}

ncsc_status ncsc_metrics_row(const size_t* y_true, const size_t* y_pred, size_t n, size_t k, char* buffer,
                             size_t capacity, size_t* needed) {
  return guarded([&] {
    require(y_true, "y_true");
    require(y_pred, "y_pred");
    const auto r = ncsc::evaluate(std::span<const std::size_t>(y_true, n), std::span<const std::size_t>(y_pred, n), k);
    copy_text(ncsc::metrics_csv_row(r), buffer, capacity, needed);
  });
}

ncsc_status ncsc_gradcheck(uint64_t seed, size_t instances, double* max_error, ncsc_line_fn line_log, void* user) {
  return guarded([&] {
    if (instances == 0) throw ncsc::ValidationError("gradcheck needs at least one instance per op");
    auto results = ncsc::run_op_gradient_suite(seed, instances);
    results.push_back(ncsc::run_network_gradient_check(seed));
    double worst = 0.0;
    for (const auto& r : results) {
      worst = std::max(worst, r.max_error);
      if (line_log) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "%s,%zu,%.3e", r.name.c_str(), r.instances, r.max_error);
        line_log(buf, user);
      }
    }
    if (max_error) *max_error = worst;
  });
}

}  // extern "C"
