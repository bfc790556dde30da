// SPDX-License-Identifier: Apache-2.0
// mdunet: command-line driver for synthesis, preprocessing, training,
// prediction, evaluation and reporting. Talks to the library only through
// the C interface.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mdunet/mdunet.h"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

enum Exit : int { kOk = 0, kFailure = 1, kConfig = 2, kMissing = 3, kDivergence = 4 };

// Carries a status out of a command; printed once by main().
struct CliError {
  mdu_status status;
  std::string message;
};

int exit_code(mdu_status s) {
  switch (s) {
    case MDU_OK: return kOk;
    case MDU_INVALID_CONFIG: return kConfig;
    case MDU_MISSING_DATA: return kMissing;
    case MDU_DIVERGENCE: return kDivergence;
    default: return kFailure;
  }
}

void check(mdu_status s, const std::string& context) {
  if (s != MDU_OK) throw CliError{s, context + ": " + mdu_last_error()};
}

[[noreturn]] void raise(mdu_status s, const std::string& message) { throw CliError{s, message}; }

struct ConfigDeleter {
  void operator()(mdu_config* c) const { mdu_config_free(c); }
};
struct DatasetDeleter {
  void operator()(mdu_dataset* d) const { mdu_dataset_free(d); }
};
struct ModelDeleter {
  void operator()(mdu_model* m) const { mdu_model_free(m); }
};
struct BufferDeleter {
  void operator()(float* b) const { mdu_buffer_free(b); }
};
using ConfigPtr = std::unique_ptr<mdu_config, ConfigDeleter>;
using DatasetPtr = std::unique_ptr<mdu_dataset, DatasetDeleter>;
using ModelPtr = std::unique_ptr<mdu_model, ModelDeleter>;
using BufferPtr = std::unique_ptr<float, BufferDeleter>;

struct Map {
  BufferPtr data;
  int height = 0;
  int width = 0;
  std::size_t size() const { return static_cast<std::size_t>(height) * static_cast<std::size_t>(width); }
};

struct Options {
  std::string command;
  std::string config;
  std::optional<std::string> data, out, pred, checkpoint, betas;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs, cross_enable_epoch, ensemble;
  std::optional<double> alpha;
  bool print_config = false;
  bool quiet = false;
};

json config_value(const mdu_config* cfg, const std::string& key) {
  char* text = nullptr;
  check(mdu_config_get(cfg, key.c_str(), &text), "config");
  const json v = json::parse(text);
  mdu_string_free(text);
  return v;
}

void set_value(mdu_config* cfg, const std::string& key, const json& v) {
  const mdu_status s = mdu_config_set(cfg, key.c_str(), v.dump().c_str());
  if (s != MDU_OK) raise(MDU_INVALID_CONFIG, std::string("--") + key + ": " + mdu_last_error());
}

// "0.5,1,1.5" or a JSON array.
json parse_betas(const std::string& text) {
  if (!text.empty() && text.front() == '[') {
    try {
      return json::parse(text);
    } catch (const json::exception&) {
      raise(MDU_INVALID_CONFIG, "--betas: not a JSON array: " + text);
    }
  }
  json arr = json::array();
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      arr.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      raise(MDU_INVALID_CONFIG, "--betas: bad number '" + item + "'");
    }
  }
  return arr;
}

ConfigPtr resolve_config(const Options& o) {
  mdu_config* raw = nullptr;
  if (o.config.empty()) {
    check(mdu_config_default(&raw), "config");
  } else {
    const mdu_status s = mdu_config_load(o.config.c_str(), &raw);
    // Any problem with the config file itself is a configuration error.
    if (s != MDU_OK) raise(MDU_INVALID_CONFIG, o.config + ": " + mdu_last_error());
  }
  ConfigPtr cfg(raw);
  if (o.data) set_value(cfg.get(), "data", *o.data);
  if (o.out) set_value(cfg.get(), "out", *o.out);
  if (o.pred) set_value(cfg.get(), "pred", *o.pred);
  if (o.checkpoint) set_value(cfg.get(), "checkpoint", *o.checkpoint);
  if (o.seed) {
    set_value(cfg.get(), "schedule.seed", *o.seed);
    set_value(cfg.get(), "synth.seed", *o.seed);
  }
  if (o.epochs) set_value(cfg.get(), "schedule.total_epochs", *o.epochs);
  if (o.cross_enable_epoch) set_value(cfg.get(), "schedule.cross_enable_epoch", *o.cross_enable_epoch);
  if (o.alpha) set_value(cfg.get(), "loss.alpha", *o.alpha);
  if (o.betas) set_value(cfg.get(), "loss.betas", parse_betas(*o.betas));
  if (o.ensemble) {
    const mdu_status s = mdu_config_set_ensemble(cfg.get(), *o.ensemble);
    if (s != MDU_OK) raise(MDU_INVALID_CONFIG, std::string("--ensemble: ") + mdu_last_error());
  }
  return cfg;
}

std::string config_json(const mdu_config* cfg) {
  char* text = nullptr;
  check(mdu_config_to_json(cfg, &text), "config");
  std::string s = text;
  mdu_string_free(text);
  return s;
}

fs::path required_path(const mdu_config* cfg, const std::string& key, const char* flag) {
  const std::string v = config_value(cfg, key).get<std::string>();
  if (v.empty()) raise(MDU_INVALID_CONFIG, std::string("no ") + key + " directory (set " + flag + " or \"" + key + "\")");
  return v;
}

fs::path pred_dir(const mdu_config* cfg) {
  const std::string p = config_value(cfg, "pred").get<std::string>();
  return p.empty() ? required_path(cfg, "out", "--out") / "predictions" : fs::path(p);
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  f << text;
  if (!f) raise(MDU_IO, "cannot write " + path.string());
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

DatasetPtr load_dataset(const mdu_config* cfg) {
  const fs::path dir = required_path(cfg, "data", "--data");
  mdu_dataset* ds = nullptr;
  check(mdu_dataset_load(dir.string().c_str(), &ds), "dataset");
  return DatasetPtr(ds);
}

mdu_case_info case_info(const mdu_dataset* ds, std::size_t i) {
  mdu_case_info info{};
  check(mdu_dataset_case_info(ds, i, &info), "dataset");
  return info;
}

// Training and inference want normalized, grid-aligned cases; raw datasets
// straight from `synth` are preprocessed on the fly.
DatasetPtr model_ready(DatasetPtr ds, const mdu_config* cfg, bool quiet) {
  const std::size_t n = mdu_dataset_size(ds.get());
  bool prepared = n > 0;
  for (std::size_t i = 0; i < n; ++i) prepared = prepared && case_info(ds.get(), i).has_crop;
  if (prepared) return ds;
  if (!quiet) std::cerr << "note: dataset is not preprocessed; normalizing and padding in memory\n";
  mdu_dataset* out = nullptr;
  check(mdu_dataset_preprocess(ds.get(), cfg, &out), "preprocess");
  return DatasetPtr(out);
}

ModelPtr load_model(const fs::path& path) {
  mdu_model* m = nullptr;
  check(mdu_model_load(path.string().c_str(), &m), "model");
  return ModelPtr(m);
}

std::vector<fs::path> checkpoint_paths(const mdu_config* cfg) {
  const std::string explicit_ckpt = config_value(cfg, "checkpoint").get<std::string>();
  if (!explicit_ckpt.empty()) return {explicit_ckpt};
  const fs::path out = required_path(cfg, "out", "--out");
  std::size_t runs = 0;
  check(mdu_config_ensemble_size(cfg, &runs), "config");
  std::vector<fs::path> paths;
  if (runs == 0) {
    // An ensemble output directory is recognized without repeating --ensemble.
    if (fs::exists(out / "model.ckpt")) return {out / "model.ckpt"};
    for (std::size_t k = 0; fs::exists(out / ("run_" + std::to_string(k)) / "model.ckpt"); ++k) {
      paths.push_back(out / ("run_" + std::to_string(k)) / "model.ckpt");
    }
    if (paths.empty()) paths.push_back(out / "model.ckpt");
    return paths;
  }
  for (std::size_t k = 0; k < runs; ++k) paths.push_back(out / ("run_" + std::to_string(k)) / "model.ckpt");
  return paths;
}

bool checkpoints_exist(const mdu_config* cfg) {
  const auto paths = checkpoint_paths(cfg);
  return std::all_of(paths.begin(), paths.end(), [](const fs::path& p) { return fs::exists(p); });
}

// ---- commands --------------------------------------------------------------

int cmd_synth(const mdu_config* cfg, const Options&) {
  std::string dest = config_value(cfg, "out").get<std::string>();
  if (dest.empty()) dest = config_value(cfg, "data").get<std::string>();
  if (dest.empty()) raise(MDU_INVALID_CONFIG, "synth needs --out (or \"data\")");
  mdu_dataset* ds = nullptr;
  check(mdu_dataset_synth(cfg, &ds), "synth");
  DatasetPtr owned(ds);
  check(mdu_dataset_save(ds, dest.c_str()), "synth");
  std::cout << "wrote " << mdu_dataset_size(ds) << " cases to " << dest << "\n";
  return kOk;
}

int cmd_preprocess(const mdu_config* cfg, const Options&) {
  DatasetPtr ds = load_dataset(cfg);
  const fs::path out = required_path(cfg, "out", "--out");
  mdu_dataset* prepared = nullptr;
  check(mdu_dataset_preprocess(ds.get(), cfg, &prepared), "preprocess");
  DatasetPtr owned(prepared);
  check(mdu_dataset_save(prepared, out.string().c_str()), "preprocess");
  std::cout << "wrote " << mdu_dataset_size(prepared) << " preprocessed cases to " << out.string() << "\n";
  return kOk;
}

void print_row(const char* row, void* user) {
  if (!*static_cast<bool*>(user)) std::cout << row << std::flush;
}

void train_one(const mdu_config* cfg, const mdu_dataset* ds, const fs::path& dir, bool quiet) {
  const auto seed = config_value(cfg, "schedule.seed").get<std::uint64_t>();
  mdu_model* raw = nullptr;
  check(mdu_model_create(cfg, seed, &raw), "model");
  ModelPtr model(raw);
  bool silent = quiet;
  mdu_train_summary summary{};
  check(mdu_train(model.get(), ds, cfg, dir.string().c_str(), print_row, &silent, &summary), "train");
  std::cout << "trained " << summary.epochs << " epochs into " << dir.string() << "; best epoch "
            << summary.best_epoch << " (val staple " << fmt(summary.best_val_score) << ")\n";
}

int cmd_train(const mdu_config* cfg, const Options& o) {
  DatasetPtr ds = model_ready(load_dataset(cfg), cfg, o.quiet);
  const fs::path out = required_path(cfg, "out", "--out");
  std::size_t runs = 0;
  check(mdu_config_ensemble_size(cfg, &runs), "config");
  if (runs == 0) {
    train_one(cfg, ds.get(), out, o.quiet);
    return kOk;
  }
  write_file(out / "config.json", config_json(cfg));
  for (std::size_t k = 0; k < runs; ++k) {
    mdu_config* run_cfg = nullptr;
    check(mdu_config_for_run(cfg, static_cast<int>(k), &run_cfg), "ensemble");
    ConfigPtr owned(run_cfg);
    train_one(run_cfg, ds.get(), out / ("run_" + std::to_string(k)), o.quiet);
  }
  return kOk;
}

void predict_all(const mdu_config* cfg, const Options& o) {
  DatasetPtr ds = model_ready(load_dataset(cfg), cfg, o.quiet);
  std::vector<ModelPtr> models;
  std::vector<const mdu_model*> handles;
  for (const auto& p : checkpoint_paths(cfg)) {
    models.push_back(load_model(p));
    handles.push_back(models.back().get());
  }
  const fs::path dir = pred_dir(cfg);
  const std::size_t n = mdu_dataset_size(ds.get());
  for (std::size_t i = 0; i < n; ++i) {
    float* raw = nullptr;
    int h = 0, w = 0;
    check(mdu_predict_case(handles.data(), handles.size(), ds.get(), i, &raw, &h, &w), "predict");
    BufferPtr map(raw);
    check(mdu_save_prediction(dir.string().c_str(), case_info(ds.get(), i).case_id, raw, h, w), "predict");
  }
  std::cout << "wrote " << n << " predictions from " << handles.size() << " model(s) to " << dir.string()
            << "\n";
}

int cmd_predict(const mdu_config* cfg, const Options& o) {
  predict_all(cfg, o);
  return kOk;
}

struct Scored {
  std::string case_id;
  double score = 0.0;
  Map pred, gt;
};

std::vector<Scored> score_cases(const mdu_config* cfg, const Options& o) {
  DatasetPtr ds = load_dataset(cfg);
  const fs::path dir = pred_dir(cfg);
  const std::size_t n = mdu_dataset_size(ds.get());
  bool complete = true;
  for (std::size_t i = 0; i < n; ++i) {
    complete = complete && fs::exists(dir / case_info(ds.get(), i).case_id / "pred.f32");
  }
  if (!complete && checkpoints_exist(cfg)) predict_all(cfg, o);

  std::vector<Scored> out;
  for (std::size_t i = 0; i < n; ++i) {
    Scored s;
    s.case_id = case_info(ds.get(), i).case_id;
    float* raw = nullptr;
    check(mdu_load_prediction(dir.string().c_str(), s.case_id.c_str(), &raw, &s.pred.height, &s.pred.width),
          "evaluate");
    s.pred.data.reset(raw);
    check(mdu_dataset_ground_truth(ds.get(), i, &raw, &s.gt.height, &s.gt.width), "evaluate");
    s.gt.data.reset(raw);
    if (s.pred.height != s.gt.height || s.pred.width != s.gt.width) {
      raise(MDU_SHAPE_MISMATCH, "prediction " + s.case_id + " is " + std::to_string(s.pred.height) + "x" +
                                    std::to_string(s.pred.width) + ", ground truth is " +
                                    std::to_string(s.gt.height) + "x" + std::to_string(s.gt.width));
    }
    check(mdu_staple_score(s.pred.data.get(), s.gt.data.get(), s.gt.height, s.gt.width, &s.score),
          "evaluate");
    out.push_back(std::move(s));
  }
  return out;
}

json summary_json(const mdu_config* cfg, const std::vector<Scored>& scores) {
  double sum = 0.0, lo = 1.0, hi = 0.0;
  json cases = json::object();
  for (const auto& s : scores) {
    sum += s.score;
    lo = std::min(lo, s.score);
    hi = std::max(hi, s.score);
    cases[s.case_id] = s.score;
  }
  const double mean = scores.empty() ? 0.0 : sum / static_cast<double>(scores.size());
  return {{"task", config_value(cfg, "task")},
          {"metric", "staple"},
          {"n_cases", scores.size()},
          {"mean", mean},
          {"min", scores.empty() ? 0.0 : lo},
          {"max", scores.empty() ? 0.0 : hi},
          {"cases", cases}};
}

int cmd_evaluate(const mdu_config* cfg, const Options& o) {
  const auto scores = score_cases(cfg, o);
  const fs::path out = required_path(cfg, "out", "--out");
  const std::string task = config_value(cfg, "task").get<std::string>();
  std::string csv = "task,case_id,staple\n";
  for (const auto& s : scores) csv += task + "," + s.case_id + "," + fmt(s.score) + "\n";
  write_file(out / "scores.csv", csv);
  const json summary = summary_json(cfg, scores);
  write_file(out / "summary.json", summary.dump(2) + "\n");
  std::cout << "mean staple " << fmt(summary["mean"].get<double>()) << " over " << scores.size()
            << " cases\n";
  return kOk;
}

// Last row of a training log, as header -> value.
std::optional<json> last_log_row(const fs::path& path) {
  std::ifstream f(path);
  if (!f) return std::nullopt;
  std::string header, line, last;
  std::getline(f, header);
  while (std::getline(f, line)) {
    if (!line.empty()) last = line;
  }
  if (last.empty()) return std::nullopt;
  json row = json::object();
  std::stringstream hs(header), vs(last);
  std::string k, v;
  while (std::getline(hs, k, ',') && std::getline(vs, v, ',')) row[k] = v;
  return row;
}

int cmd_report(const mdu_config* cfg, const Options& o) {
  const auto scores = score_cases(cfg, o);
  const fs::path out = required_path(cfg, "out", "--out");
  const fs::path dir = out / "report";
  const json summary = summary_json(cfg, scores);
  fs::create_directories(dir);

  std::string md = "# Evaluation report\n\n";
  md += "task: " + summary["task"].get<std::string>() + "  \n";
  md += "cases: " + std::to_string(scores.size()) + "  \n";
  md += "mean staple: " + fmt(summary["mean"].get<double>()) + "\n\n";
  md += "| case | staple | heatmap |\n|---|---|---|\n";
  std::string csv = "case_id,staple,heatmap\n";
  for (const auto& s : scores) {
    const std::string png = s.case_id + "_diff.png";
    check(mdu_write_difference_png((dir / png).string().c_str(), s.pred.data.get(), s.gt.data.get(),
                                   s.gt.height, s.gt.width, 8),
          "report");
    md += "| " + s.case_id + " | " + fmt(s.score) + " | ![](" + png + ") |\n";
    csv += s.case_id + "," + fmt(s.score) + "," + png + "\n";
  }

  std::vector<fs::path> logs;
  if (fs::exists(out / "train_log.csv")) logs.push_back(out / "train_log.csv");
  for (std::size_t k = 0; fs::exists(out / ("run_" + std::to_string(k)) / "train_log.csv"); ++k) {
    logs.push_back(out / ("run_" + std::to_string(k)) / "train_log.csv");
  }
  if (!logs.empty()) {
    md += "\n## Training\n\n| log | epochs | final total loss | final val staple |\n|---|---|---|---|\n";
    for (const auto& log : logs) {
      const auto row = last_log_row(log);
      if (!row) continue;
      const int epochs = std::stoi((*row)["epoch"].get<std::string>()) + 1;
      md += "| " + fs::relative(log, out).string() + " | " + std::to_string(epochs) + " | " +
            (*row)["total"].get<std::string>() + " | " + (*row)["val_staple"].get<std::string>() + " |\n";
    }
  }
  md += "\nHeatmaps show |prediction - ground truth| per pixel (black 0, white 1).\n";
  write_file(dir / "summary.md", md);
  write_file(dir / "summary.csv", csv);
  write_file(dir / "summary.json", summary.dump(2) + "\n");
  std::cout << "wrote report for " << scores.size() << " cases to " << dir.string() << "\n";
  return kOk;
}

void print_error(const CliError& e) {
  std::string msg = e.message;
  std::replace(msg.begin(), msg.end(), '\n', ' ');
  std::cerr << "error: code=" << exit_code(e.status) << " kind=" << mdu_status_name(e.status)
            << " message=" << json(msg).dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mdunet: multi-decoder U-Net for multi-annotator segmentation"};
  Options o;
  const std::vector<std::string> commands{"synth", "preprocess", "train", "evaluate", "predict", "report"};
  app.add_option("command", o.command, "synth | preprocess | train | evaluate | predict | report")
      ->check(CLI::IsMember(commands));
  app.add_option("--config", o.config, "JSON run configuration");
  app.add_option("--data", o.data, "dataset directory");
  app.add_option("--out", o.out, "output directory");
  app.add_option("--pred", o.pred, "prediction directory (default <out>/predictions)");
  app.add_option("--checkpoint", o.checkpoint, "model checkpoint (default <out>/model.ckpt)");
  app.add_option("--seed", o.seed, "training and synthesis seed");
  app.add_option("--epochs", o.epochs, "total training epochs");
  app.add_option("--cross-enable-epoch", o.cross_enable_epoch, "epoch at which cross terms switch on");
  app.add_option("--alpha", o.alpha, "cross-entropy weight");
  app.add_option("--betas", o.betas, "cross-dice weights, e.g. 1,1,1");
  app.add_option("--ensemble", o.ensemble, "number of hyperparameter-ensemble runs");
  app.add_flag("--print-config", o.print_config, "print the resolved configuration and exit");
  app.add_flag("-q,--quiet", o.quiet, "suppress per-epoch output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error({MDU_INVALID_CONFIG, e.what()});
    return kConfig;
  }

  try {
    const ConfigPtr cfg = resolve_config(o);
    if (o.print_config) {
      std::cout << config_json(cfg.get()) << "\n";
      return kOk;
    }
    if (o.command.empty()) raise(MDU_INVALID_CONFIG, "no command given (see --help)");
    if (o.command == "synth") return cmd_synth(cfg.get(), o);
    if (o.command == "preprocess") return cmd_preprocess(cfg.get(), o);
    if (o.command == "train") return cmd_train(cfg.get(), o);
    if (o.command == "predict") return cmd_predict(cfg.get(), o);
    if (o.command == "evaluate") return cmd_evaluate(cfg.get(), o);
    return cmd_report(cfg.get(), o);
  } catch (const CliError& e) {
    print_error(e);
    return exit_code(e.status);
  } catch (const std::exception& e) {
    print_error({MDU_INTERNAL, e.what()});
    return kFailure;
  }
}
