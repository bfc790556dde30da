// SPDX-License-Identifier: Apache-2.0
#include "mdunet/mdunet.h"

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <memory>
#include <new>
#include <string>
#include <vector>

#include <json.hpp>

#include "binary_io.hpp"
#include "mdunet/checkpoint.hpp"
#include "mdunet/datapipe.hpp"
#include "mdunet/error.hpp"
#include "mdunet/heatmap.hpp"
#include "mdunet/metrics.hpp"
#include "mdunet/run_config.hpp"
#include "mdunet/trainer.hpp"

struct mdu_config {
  mdunet::RunConfig value;
};

struct mdu_dataset {
  std::vector<mdunet::CaseRecord> cases;
};

struct mdu_model {
  explicit mdu_model(mdunet::MultiDecoderNet n) : net(std::move(n)) {}
  mdunet::MultiDecoderNet net;
};

namespace {

thread_local std::string g_last_error;

template <typename F>
mdu_status guarded(F&& f) noexcept {
  try {
    g_last_error.clear();
    f();
    return MDU_OK;
  } catch (const mdunet::Error& e) {
    g_last_error = e.what();
    return static_cast<mdu_status>(static_cast<int>(e.kind()));
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return MDU_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return MDU_INTERNAL;
  }
}

void need(const void* p, const char* what) {
  if (!p) mdunet::fail(mdunet::ErrorKind::InvalidArgument, std::string(what) + " is NULL");
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

float* dup_floats(const std::vector<float>& v) {
  float* out = static_cast<float*>(std::malloc(std::max<std::size_t>(1, v.size()) * sizeof(float)));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, v.data(), v.size() * sizeof(float));
  return out;
}

const mdunet::CaseRecord& case_at(const mdu_dataset* ds, size_t index) {
  need(ds, "dataset");
  if (index >= ds->cases.size()) {
    mdunet::fail(mdunet::ErrorKind::InvalidArgument,
                 "case index " + std::to_string(index) + " out of range");
  }
  return ds->cases[index];
}

mdunet::SoftMap soft_map(const float* data, int height, int width) {
  need(data, "map");
  if (height <= 0 || width <= 0) {
    mdunet::fail(mdunet::ErrorKind::ShapeMismatch, "map dimensions must be positive");
  }
  const mdunet::Shape2 s{height, width};
  return mdunet::SoftMap(s, std::vector<float>(data, data + s.pixels()));
}

}  // namespace

extern "C" {

const char* mdu_last_error(void) { return g_last_error.c_str(); }

const char* mdu_status_name(mdu_status status) {
  if (status == MDU_OK) return "ok";
  if (status < MDU_OK || status > MDU_INTERNAL) return "unknown";
  return mdunet::error_kind_name(static_cast<mdunet::ErrorKind>(static_cast<int>(status)));
}

void mdu_string_free(char* s) { std::free(s); }
void mdu_buffer_free(float* buffer) { std::free(buffer); }

mdu_status mdu_config_default(mdu_config** out) {
  return guarded([&] {
    need(out, "out");
    *out = new mdu_config{};
  });
}

mdu_status mdu_config_load(const char* path, mdu_config** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new mdu_config{mdunet::load_run_config(path)};
  });
}

mdu_status mdu_config_parse(const char* json_text, mdu_config** out) {
  return guarded([&] {
    need(json_text, "json_text");
    need(out, "out");
    *out = new mdu_config{mdunet::parse_run_config(json_text)};
  });
}

mdu_status mdu_config_set(mdu_config* cfg, const char* key, const char* json_value) {
  return guarded([&] {
    need(cfg, "config");
    need(key, "key");
    need(json_value, "value");
    mdunet::RunConfig updated = cfg->value;
    mdunet::apply_override(updated, key, json_value);
    cfg->value = std::move(updated);
  });
}

mdu_status mdu_config_get(const mdu_config* cfg, const char* key, char** json_value) {
  return guarded([&] {
    need(cfg, "config");
    need(key, "key");
    need(json_value, "out");
    const auto doc = nlohmann::json::parse(mdunet::run_config_to_json(cfg->value));
    std::string pointer = std::string("/") + key;
    for (auto& ch : pointer) {
      if (ch == '.') ch = '/';
    }
    const nlohmann::json::json_pointer ptr(pointer);
    if (!doc.contains(ptr)) {
      mdunet::fail(mdunet::ErrorKind::InvalidConfig, std::string("unknown key '") + key + "'");
    }
    *json_value = dup_string(doc[ptr].dump());
  });
}

mdu_status mdu_config_ensemble_size(const mdu_config* cfg, size_t* n_runs) {
  return guarded([&] {
    need(cfg, "config");
    need(n_runs, "out");
    *n_runs = cfg->value.ensemble.runs.size();
  });
}

mdu_status mdu_config_set_ensemble(mdu_config* cfg, int n_runs) {
  return guarded([&] {
    need(cfg, "config");
    if (n_runs < 0) mdunet::fail(mdunet::ErrorKind::InvalidConfig, "ensemble size must be >= 0");
    auto& rc = cfg->value;
    if (n_runs <= 1) {
      rc.ensemble.runs.clear();
    } else if (rc.ensemble.runs.size() != static_cast<std::size_t>(n_runs)) {
      rc.ensemble = mdunet::EnsembleSpec::default_for(rc.loss.alpha, rc.schedule.seed, n_runs);
      for (auto& r : rc.ensemble.runs) r.betas = rc.loss.betas;
    }
    rc.validate();
  });
}

mdu_status mdu_config_for_run(const mdu_config* cfg, int run, mdu_config** out) {
  return guarded([&] {
    need(cfg, "config");
    need(out, "out");
    const auto& runs = cfg->value.ensemble.runs;
    if (run < 0 || static_cast<std::size_t>(run) >= runs.size()) {
      mdunet::fail(mdunet::ErrorKind::InvalidArgument, "ensemble run " + std::to_string(run) + " out of range");
    }
    auto copy = std::make_unique<mdu_config>(*cfg);
    const auto& r = runs[static_cast<std::size_t>(run)];
    copy->value.loss.alpha = r.alpha;
    copy->value.loss.betas = r.betas;
    copy->value.schedule.seed = r.seed;
    copy->value.ensemble.runs.clear();
    copy->value.validate();
    *out = copy.release();
  });
}

mdu_status mdu_config_to_json(const mdu_config* cfg, char** json_text) {
  return guarded([&] {
    need(cfg, "config");
    need(json_text, "out");
    *json_text = dup_string(mdunet::run_config_to_json(cfg->value));
  });
}

void mdu_config_free(mdu_config* cfg) { delete cfg; }

mdu_status mdu_dataset_synth(const mdu_config* cfg, mdu_dataset** out) {
  return guarded([&] {
    need(cfg, "config");
    need(out, "out");
    *out = new mdu_dataset{mdunet::synth_generate(cfg->value.synth)};
  });
}

mdu_status mdu_dataset_load(const char* dir, mdu_dataset** out) {
  return guarded([&] {
    need(dir, "dir");
    need(out, "out");
    *out = new mdu_dataset{mdunet::load_dataset(dir)};
  });
}

mdu_status mdu_dataset_save(const mdu_dataset* ds, const char* dir) {
  return guarded([&] {
    need(ds, "dataset");
    need(dir, "dir");
    mdunet::save_dataset(dir, ds->cases);
  });
}

mdu_status mdu_dataset_preprocess(const mdu_dataset* ds, const mdu_config* cfg, mdu_dataset** out) {
  return guarded([&] {
    need(ds, "dataset");
    need(cfg, "config");
    need(out, "out");
    auto result = std::make_unique<mdu_dataset>();
    const int multiple = cfg->value.model.grid_multiple();
    for (const auto& c : ds->cases) {
      result->cases.push_back(mdunet::preprocess_case(c, cfg->value.preprocess, multiple));
    }
    *out = result.release();
  });
}

size_t mdu_dataset_size(const mdu_dataset* ds) { return ds ? ds->cases.size() : 0; }

mdu_status mdu_dataset_case_info(const mdu_dataset* ds, size_t index, mdu_case_info* info) {
  return guarded([&] {
    need(info, "info");
    const auto& c = case_at(ds, index);
    *info = mdu_case_info{};
    info->case_id = c.case_id.c_str();
    info->channels = c.image.channels;
    info->height = c.image.height;
    info->width = c.image.width;
    info->n_raters = c.n_raters();
    info->is_ct = c.modality == mdunet::Modality::CT;
    if (c.crop) {
      info->has_crop = 1;
      info->crop_top = c.crop->top;
      info->crop_left = c.crop->left;
      info->crop_height = c.crop->height;
      info->crop_width = c.crop->width;
    }
  });
}

mdu_status mdu_dataset_ground_truth(const mdu_dataset* ds, size_t index, float** out, int* height,
                                    int* width) {
  return guarded([&] {
    need(out, "out");
    const auto& c = case_at(ds, index);
    mdunet::SoftMap gt = mdunet::average_annotations(c.raters);
    if (c.crop) gt = mdunet::unpad(gt, *c.crop);
    *out = dup_floats(gt.data);
    if (height) *height = gt.shape.height;
    if (width) *width = gt.shape.width;
  });
}

void mdu_dataset_free(mdu_dataset* ds) { delete ds; }

mdu_status mdu_model_create(const mdu_config* cfg, uint64_t seed, mdu_model** out) {
  return guarded([&] {
    need(cfg, "config");
    need(out, "out");
    *out = new mdu_model(mdunet::MultiDecoderNet(cfg->value.model, seed));
  });
}

mdu_status mdu_model_load(const char* path, mdu_model** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new mdu_model(mdunet::load_checkpoint(path));
  });
}

mdu_status mdu_model_save(const mdu_model* model, const char* path) {
  return guarded([&] {
    need(model, "model");
    need(path, "path");
    mdunet::save_checkpoint(path, model->net);
  });
}

mdu_status mdu_model_parameter_count(const mdu_model* model, uint64_t* count) {
  return guarded([&] {
    need(model, "model");
    need(count, "count");
    *count = mdunet::parameter_count(model->net);
  });
}

mdu_status mdu_model_info(const mdu_model* model, int* n_decoders, int* n_classes,
                          int* in_channels, int* grid_multiple) {
  return guarded([&] {
    need(model, "model");
    const auto& c = model->net.config();
    if (n_decoders) *n_decoders = c.n_decoders;
    if (n_classes) *n_classes = c.n_classes;
    if (in_channels) *in_channels = c.in_channels;
    if (grid_multiple) *grid_multiple = c.grid_multiple();
  });
}

mdu_status mdu_model_forward(const mdu_model* model, const float* image, int channels, int height,
                             int width, float* probs, size_t probs_len) {
  return guarded([&] {
    need(model, "model");
    need(image, "image");
    need(probs, "probs");
    if (channels <= 0 || height <= 0 || width <= 0) {
      mdunet::fail(mdunet::ErrorKind::ShapeMismatch, "image dimensions must be positive");
    }
    mdunet::Tensor t(channels, height, width);
    std::memcpy(t.data.data(), image, t.size() * sizeof(float));
    const auto& c = model->net.config();
    const std::size_t need_len =
        static_cast<std::size_t>(c.n_decoders) * c.n_classes * t.plane();
    model->net.check_input(t);
    if (probs_len < need_len) {
      mdunet::fail(mdunet::ErrorKind::InvalidArgument,
                   "probs buffer holds " + std::to_string(probs_len) + " floats, need " +
                       std::to_string(need_len));
    }
    const auto out = model->net.forward_all(t);
    float* dst = probs;
    for (const auto& p : out.probs) {
      std::memcpy(dst, p.data.data(), p.size() * sizeof(float));
      dst += p.size();
    }
  });
}

void mdu_model_free(mdu_model* model) { delete model; }

mdu_status mdu_train(mdu_model* model, const mdu_dataset* ds, const mdu_config* cfg,
                     const char* out_dir, mdu_epoch_callback on_epoch, void* user,
                     mdu_train_summary* summary) {
  namespace fs = std::filesystem;
  return guarded([&] {
    need(model, "model");
    need(ds, "dataset");
    need(cfg, "config");
    const auto& rc = cfg->value;
    std::string log = mdunet::train_log_header(model->net.n_decoders());
    std::string losses = mdunet::loss_report_header();
    auto cb = [&](const mdunet::EpochRecord& r) {
      const std::string row = mdunet::train_log_row(r);
      log += row;
      losses += mdunet::loss_report_rows(r);
      if (on_epoch) on_epoch(row.c_str(), user);
    };
    std::unique_ptr<mdunet::Error> failure;
    mdunet::TrainResult result;
    try {
      result = mdunet::train(model->net, ds->cases, rc.schedule, rc.resolved_loss(), cb);
    } catch (const mdunet::Error& e) {
      failure = std::make_unique<mdunet::Error>(e);
    }
    if (out_dir) {
      const fs::path dir(out_dir);
      fs::create_directories(dir);
      mdunet::io::write_text(dir / "train_log.csv", log);
      mdunet::io::write_text(dir / "loss_report.csv", losses);
      mdunet::io::write_text(dir / "config.json", mdunet::run_config_to_json(rc));
    }
    if (failure) throw *failure;
    if (out_dir) mdunet::save_checkpoint(fs::path(out_dir) / "last.ckpt", model->net, rc.schedule.seed);
    mdunet::restore_weights(model->net, result.best_weights);
    if (out_dir) mdunet::save_checkpoint(fs::path(out_dir) / "model.ckpt", model->net, rc.schedule.seed);
    if (summary) {
      summary->epochs = static_cast<int>(result.history.size());
      summary->best_epoch = result.best_epoch;
      summary->best_val_score = result.best_val_score;
      summary->final_total_loss = result.history.empty() ? 0.0 : result.history.back().total;
    }
  });
}

mdu_status mdu_predict_case(const mdu_model* const* models, size_t n_models, const mdu_dataset* ds,
                            size_t index, float** out, int* height, int* width) {
  return guarded([&] {
    need(models, "models");
    need(out, "out");
    if (n_models == 0) mdunet::fail(mdunet::ErrorKind::InvalidArgument, "no models given");
    std::vector<const mdunet::MultiDecoderNet*> nets;
    for (size_t i = 0; i < n_models; ++i) {
      need(models[i], "model");
      nets.push_back(&models[i]->net);
    }
    const auto map = mdunet::ensemble_predict_case(nets, case_at(ds, index));
    *out = dup_floats(map.data);
    if (height) *height = map.shape.height;
    if (width) *width = map.shape.width;
  });
}

mdu_status mdu_save_prediction(const char* dir, const char* case_id, const float* map, int height,
                               int width) {
  return guarded([&] {
    need(dir, "dir");
    need(case_id, "case_id");
    mdunet::save_prediction(dir, case_id, soft_map(map, height, width));
  });
}

mdu_status mdu_load_prediction(const char* dir, const char* case_id, float** out, int* height,
                               int* width) {
  return guarded([&] {
    need(dir, "dir");
    need(case_id, "case_id");
    need(out, "out");
    const auto map = mdunet::load_prediction(dir, case_id);
    *out = dup_floats(map.data);
    if (height) *height = map.shape.height;
    if (width) *width = map.shape.width;
  });
}

mdu_status mdu_staple_score(const float* pred, const float* gt, int height, int width,
                            double* score) {
  return guarded([&] {
    need(score, "score");
    *score = mdunet::staple_score(soft_map(pred, height, width), soft_map(gt, height, width));
  });
}

mdu_status mdu_write_difference_png(const char* path, const float* pred, const float* gt,
                                    int height, int width, int scale) {
  return guarded([&] {
    need(path, "path");
    mdunet::write_difference_png(path, soft_map(pred, height, width), soft_map(gt, height, width),
                                 scale);
  });
}

}  // extern "C"
