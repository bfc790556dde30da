// SPDX-License-Identifier: Apache-2.0
#include "mdunet/run_config.hpp"

#include <set>

#include <json.hpp>

#include "binary_io.hpp"
#include "mdunet/error.hpp"

namespace mdunet {

using nlohmann::json;

namespace {

const char* label_mode_name(LabelMode m) {
  switch (m) {
    case LabelMode::Consensus: return "consensus";
    case LabelMode::Raw: return "raw";
    case LabelMode::FixedLevel: return "fixed_level";
  }
  return "consensus";
}

LabelMode parse_label_mode(const std::string& s) {
  if (s == "consensus") return LabelMode::Consensus;
  if (s == "raw") return LabelMode::Raw;
  if (s == "fixed_level") return LabelMode::FixedLevel;
  fail(ErrorKind::InvalidConfig, "unknown label_mode '" + s + "'");
}

void reject_unknown(const json& obj, const std::string& where, std::set<std::string> allowed) {
  if (!obj.is_object()) fail(ErrorKind::InvalidConfig, where + " must be an object");
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.contains(key)) {
      fail(ErrorKind::InvalidConfig, "unknown key '" + (where.empty() ? key : where + "." + key) + "'");
    }
  }
}

template <typename T>
void read(const json& obj, const char* key, T& dst) {
  if (obj.contains(key)) dst = obj.at(key).get<T>();
}

json to_json(const RunConfig& c) {
  json runs = json::array();
  for (const auto& r : c.ensemble.runs) {
    runs.push_back({{"alpha", r.alpha}, {"betas", r.betas}, {"seed", r.seed}});
  }
  return {
      {"data", c.data},
      {"out", c.out},
      {"pred", c.pred},
      {"checkpoint", c.checkpoint},
      {"task", c.task},
      {"model",
       {{"stage_channels", c.model.stage_channels},
        {"n_decoders", c.model.n_decoders},
        {"n_classes", c.model.n_classes},
        {"in_channels", c.model.in_channels},
        {"norm_epsilon", c.model.norm_epsilon}}},
      {"loss",
       {{"alpha", c.loss.alpha}, {"betas", c.loss.betas}, {"cross_enabled", c.loss.cross_enabled}}},
      {"schedule",
       {{"base_lr", c.schedule.base_lr},
        {"warmup_epochs", c.schedule.warmup_epochs},
        {"weight_decay", c.schedule.weight_decay},
        {"cross_enable_epoch", c.schedule.cross_enable_epoch},
        {"total_epochs", c.schedule.total_epochs},
        {"seed", c.schedule.seed},
        {"beta_adapt", c.schedule.beta_adapt},
        {"batch_size", c.schedule.batch_size},
        {"val_fraction", c.schedule.val_fraction},
        {"label_mode", label_mode_name(c.schedule.label_mode)},
        {"fixed_level", c.schedule.fixed_level}}},
      {"synth",
       {{"n_cases", c.synth.n_cases},
        {"n_raters", c.synth.n_raters},
        {"height", c.synth.height},
        {"width", c.synth.width},
        {"ambiguity", c.synth.ambiguity},
        {"seed", c.synth.seed},
        {"modality", c.synth.modality}}},
      {"preprocess", {{"ct_window", {c.preprocess.ct_window_lo, c.preprocess.ct_window_hi}}}},
      {"ensemble", {{"runs", runs}}},
  };
}

RunConfig from_json(const json& j) {
  RunConfig c;
  reject_unknown(j, "", {"data", "out", "pred", "checkpoint", "task", "model", "loss", "schedule",
                         "synth", "preprocess", "ensemble"});
  read(j, "data", c.data);
  read(j, "out", c.out);
  read(j, "pred", c.pred);
  read(j, "checkpoint", c.checkpoint);
  read(j, "task", c.task);
  if (j.contains("model")) {
    const auto& m = j.at("model");
    reject_unknown(m, "model", {"stage_channels", "n_decoders", "n_classes", "in_channels", "norm_epsilon"});
    read(m, "stage_channels", c.model.stage_channels);
    read(m, "n_decoders", c.model.n_decoders);
    read(m, "n_classes", c.model.n_classes);
    read(m, "in_channels", c.model.in_channels);
    read(m, "norm_epsilon", c.model.norm_epsilon);
  }
  if (j.contains("loss")) {
    const auto& l = j.at("loss");
    reject_unknown(l, "loss", {"alpha", "betas", "cross_enabled"});
    read(l, "alpha", c.loss.alpha);
    read(l, "betas", c.loss.betas);
    read(l, "cross_enabled", c.loss.cross_enabled);
  }
  if (j.contains("schedule")) {
    const auto& s = j.at("schedule");
    reject_unknown(s, "schedule", {"base_lr", "warmup_epochs", "weight_decay", "cross_enable_epoch",
                                   "total_epochs", "seed", "beta_adapt", "batch_size",
                                   "val_fraction", "label_mode", "fixed_level"});
    read(s, "base_lr", c.schedule.base_lr);
    read(s, "warmup_epochs", c.schedule.warmup_epochs);
    read(s, "weight_decay", c.schedule.weight_decay);
    read(s, "cross_enable_epoch", c.schedule.cross_enable_epoch);
    read(s, "total_epochs", c.schedule.total_epochs);
    read(s, "seed", c.schedule.seed);
    read(s, "beta_adapt", c.schedule.beta_adapt);
    read(s, "batch_size", c.schedule.batch_size);
    read(s, "val_fraction", c.schedule.val_fraction);
    if (s.contains("label_mode")) c.schedule.label_mode = parse_label_mode(s.at("label_mode").get<std::string>());
    read(s, "fixed_level", c.schedule.fixed_level);
  }
  if (j.contains("synth")) {
    const auto& s = j.at("synth");
    reject_unknown(s, "synth", {"n_cases", "n_raters", "height", "width", "ambiguity", "seed", "modality"});
    read(s, "n_cases", c.synth.n_cases);
    read(s, "n_raters", c.synth.n_raters);
    read(s, "height", c.synth.height);
    read(s, "width", c.synth.width);
    read(s, "ambiguity", c.synth.ambiguity);
    read(s, "seed", c.synth.seed);
    read(s, "modality", c.synth.modality);
  }
  if (j.contains("preprocess")) {
    const auto& p = j.at("preprocess");
    reject_unknown(p, "preprocess", {"ct_window"});
    if (p.contains("ct_window")) {
      const auto w = p.at("ct_window").get<std::vector<double>>();
      require(w.size() == 2, ErrorKind::InvalidConfig, "preprocess.ct_window must be [lo, hi]");
      c.preprocess.ct_window_lo = w[0];
      c.preprocess.ct_window_hi = w[1];
    }
  }
  if (j.contains("ensemble")) {
    const auto& e = j.at("ensemble");
    reject_unknown(e, "ensemble", {"runs"});
    if (e.contains("runs")) {
      for (const auto& r : e.at("runs")) {
        reject_unknown(r, "ensemble.runs[]", {"alpha", "betas", "seed"});
        EnsembleRun run;
        read(r, "alpha", run.alpha);
        read(r, "betas", run.betas);
        read(r, "seed", run.seed);
        c.ensemble.runs.push_back(std::move(run));
      }
    }
  }
  return c;
}

}  // namespace

void RunConfig::validate() const {
  model.validate();
  schedule.validate();
  resolved_loss().validate(model.n_decoders);
  for (const auto& r : ensemble.runs) {
    LossWeights w{r.alpha, r.betas, loss.cross_enabled};
    if (w.betas.empty()) w.betas = resolved_loss().betas;
    w.validate(model.n_decoders);
  }
  require(preprocess.ct_window_lo < preprocess.ct_window_hi, ErrorKind::InvalidConfig,
          "preprocess.ct_window must satisfy lo < hi");
  require(synth.n_cases >= 1 && synth.n_raters >= 1 && synth.height >= 4 && synth.width >= 4,
          ErrorKind::InvalidConfig, "synth parameters must be positive (size >= 4)");
  require(synth.ambiguity >= 0.0 && synth.ambiguity <= 1.0, ErrorKind::InvalidConfig,
          "synth.ambiguity must lie in [0, 1]");
  require(synth.modality == "MR" || synth.modality == "CT", ErrorKind::InvalidConfig,
          "synth.modality must be MR or CT");
  if (schedule.label_mode == LabelMode::FixedLevel) {
    require(schedule.fixed_level >= 1, ErrorKind::InvalidConfig, "schedule.fixed_level must be >= 1");
  }
}

LossWeights RunConfig::resolved_loss() const {
  LossWeights w = loss;
  if (w.betas.empty()) w.betas.assign(static_cast<std::size_t>(model.n_decoders), 1.0);
  return w;
}

RunConfig parse_run_config(const std::string& json_text) {
  RunConfig c;
  try {
    c = from_json(json::parse(json_text));
  } catch (const json::exception& e) {
    fail(ErrorKind::InvalidConfig, std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    fail(ErrorKind::InvalidConfig, "config file not found: " + path.string());
  }
  return parse_run_config(io::read_text(path));
}

std::string run_config_to_json(const RunConfig& c) { return to_json(c).dump(2) + "\n"; }

void apply_override(RunConfig& c, const std::string& key, const std::string& json_value) {
  json doc = to_json(c);
  try {
    std::string pointer = "/" + key;
    for (auto& ch : pointer) {
      if (ch == '.') ch = '/';
    }
    const json::json_pointer ptr(pointer);
    require(doc.contains(ptr), ErrorKind::InvalidConfig, "unknown key '" + key + "'");
    doc[ptr] = json::parse(json_value);
    RunConfig updated = from_json(doc);
    updated.validate();
    c = std::move(updated);
  } catch (const json::exception& e) {
    fail(ErrorKind::InvalidConfig, "override " + key + ": " + e.what());
  }
}

}  // namespace mdunet
