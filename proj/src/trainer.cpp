// SPDX-License-Identifier: Apache-2.0
#include "mdunet/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

#include "mdunet/error.hpp"
#include "ops.hpp"

namespace mdunet {

double warmup_lr(int epoch, const TrainSchedule& s) {
  require(epoch >= 0, ErrorKind::InvalidArgument, "epoch must be >= 0");
  if (epoch < s.warmup_epochs) {
    return s.base_lr * static_cast<double>(epoch + 1) / static_cast<double>(s.warmup_epochs);
  }
  return s.base_lr;
}

std::vector<double> adapt_betas(std::span<const double> losses) {
  require(!losses.empty(), ErrorKind::InvalidArgument, "adapt_betas: no losses");
  // Extended precision keeps ratios such as 0.3 / mean(0.1, 0.2, 0.3) exact
  // after rounding back to double.
  long double sum = 0.0L;
  for (double l : losses) {
    require(std::isfinite(l) && l > 0.0, ErrorKind::InvalidArgument,
            "adapt_betas: losses must be finite and > 0");
    sum += l;
  }
  const long double n = static_cast<long double>(losses.size());
  std::vector<double> betas;
  for (double l : losses) betas.push_back(static_cast<double>(static_cast<long double>(l) * n / sum));
  return betas;
}

AdamW::AdamW(const ParamStore& params, double weight_decay, double beta1, double beta2, double eps)
    : weight_decay_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : params.all()) {
    m_.emplace_back(p.size(), 0.0f);
    v_.emplace_back(p.size(), 0.0f);
  }
}

void AdamW::step(ParamStore& params, double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  auto& all = params.all();
  for (std::size_t k = 0; k < all.size(); ++k) {
    auto& p = all[k];
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double g = p.grad[i];
      m[i] = static_cast<float>(beta1_ * m[i] + (1.0 - beta1_) * g);
      v[i] = static_cast<float>(beta2_ * v[i] + (1.0 - beta2_) * g * g);
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      const double update = mhat / (std::sqrt(vhat) + eps_) + weight_decay_ * p.value[i];
      p.value[i] = static_cast<float>(p.value[i] - lr * update);
    }
  }
}

std::vector<Mask> branch_targets(const CaseRecord& c, int n_decoders, const TrainSchedule& s) {
  switch (s.label_mode) {
    case LabelMode::Raw:
      require(c.n_raters() == n_decoders, ErrorKind::InvalidConfig,
              "case " + c.case_id + " has " + std::to_string(c.n_raters()) + " raters but the model has " +
                  std::to_string(n_decoders) + " decoders");
      return c.raters;
    case LabelMode::Consensus: {
      require(c.n_raters() == n_decoders, ErrorKind::InvalidConfig,
              "case " + c.case_id + " has " + std::to_string(c.n_raters()) + " raters but the model has " +
                  std::to_string(n_decoders) + " decoders");
      return relabel_consensus(c.raters).levels;
    }
    case LabelMode::FixedLevel: {
      require(s.fixed_level >= 1 && s.fixed_level <= c.n_raters(), ErrorKind::InvalidConfig,
              "fixed_level " + std::to_string(s.fixed_level) + " outside 1.." +
                  std::to_string(c.n_raters()));
      auto levels = relabel_consensus(c.raters).levels;
      return std::vector<Mask>(static_cast<std::size_t>(n_decoders),
                               levels[static_cast<std::size_t>(s.fixed_level - 1)]);
    }
  }
  fail(ErrorKind::Internal, "unknown label mode");
}

namespace {

ProbMap to_double(const Tensor& t) {
  ProbMap p(t.channels, t.height, t.width);
  for (std::size_t i = 0; i < t.data.size(); ++i) p.data[i] = t.data[i];
  return p;
}

Tensor to_float(const ProbMap& p, double scale) {
  Tensor t(p.channels, p.height, p.width);
  for (std::size_t i = 0; i < p.data.size(); ++i) t.data[i] = static_cast<float>(p.data[i] * scale);
  return t;
}

struct PreparedCase {
  const CaseRecord* source = nullptr;
  Tensor image;
  std::vector<ProbMap> targets;
};

std::string describe(const EpochRecord& r) {
  std::ostringstream os;
  os << "total=" << r.total;
  for (std::size_t i = 0; i < r.branches.size(); ++i) {
    os << " branch" << i << "(ce=" << r.branches[i].ce_self << ",dc=" << r.branches[i].dice_self
       << ",loss=" << r.branches[i].loss << ")";
  }
  return os.str();
}

}  // namespace

std::vector<std::vector<float>> snapshot_weights(const MultiDecoderNet& net) {
  std::vector<std::vector<float>> w;
  for (const auto& p : net.params().all()) w.push_back(p.value);
  return w;
}

void restore_weights(MultiDecoderNet& net, const std::vector<std::vector<float>>& weights) {
  auto& all = net.params().all();
  require(weights.size() == all.size(), ErrorKind::InvalidArgument, "weight snapshot mismatch");
  for (std::size_t k = 0; k < all.size(); ++k) {
    require(weights[k].size() == all[k].size(), ErrorKind::InvalidArgument,
            "weight snapshot mismatch");
    all[k].value = weights[k];
  }
}

int select_best_epoch(std::span<const EpochRecord> history) {
  int best = -1;
  double best_score = -1.0;
  for (std::size_t i = 0; i < history.size(); ++i) {
    if (history[i].val_score > best_score) {
      best_score = history[i].val_score;
      best = static_cast<int>(i);
    }
  }
  return best;
}

TrainResult train(MultiDecoderNet& net, const std::vector<CaseRecord>& dataset,
                  const TrainSchedule& schedule, LossWeights weights,
                  const EpochCallback& on_epoch) {
  schedule.validate();
  require(!dataset.empty(), ErrorKind::MissingData, "train: dataset is empty");
  const int n = net.n_decoders();
  const int k = net.config().n_classes;
  if (weights.betas.empty()) weights.betas.assign(static_cast<std::size_t>(n), 1.0);
  weights.validate(n);
  const auto classes = foreground_classes(k);

  std::vector<PreparedCase> prepared;
  for (const auto& c : dataset) {
    PreparedCase p;
    p.source = &c;
    CaseRecord grid = c;
    if (c.image.height % net.config().grid_multiple() != 0 ||
        c.image.width % net.config().grid_multiple() != 0) {
      grid = pad_to_grid(c, net.config().grid_multiple()).record;
    }
    net.check_input(grid.image);
    p.image = std::move(grid.image);
    for (const auto& m : branch_targets(grid, n, schedule)) p.targets.push_back(one_hot(m, k));
    prepared.push_back(std::move(p));
  }

  const Split split = validation_split(dataset, schedule.val_fraction);
  const std::vector<std::size_t>& monitor = split.val.empty() ? split.train : split.val;
  std::vector<std::size_t> order = split.train;
  std::mt19937_64 rng(schedule.seed);
  AdamW opt(net.params(), schedule.weight_decay);

  TrainResult result;
  std::vector<double> last_phase_a;
  for (int epoch = 0; epoch < schedule.total_epochs; ++epoch) {
    const bool cross = epoch >= schedule.cross_enable_epoch;
    if (cross && epoch == schedule.cross_enable_epoch && schedule.beta_adapt && !last_phase_a.empty()) {
      weights.betas = adapt_betas(last_phase_a);
    }
    LossWeights active = weights;
    active.cross_enabled = cross && weights.cross_enabled;

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = warmup_lr(epoch, schedule);
    rec.cross_enabled = active.cross_enabled;
    rec.betas = active.betas;
    rec.branches.assign(static_cast<std::size_t>(n), BranchLoss{});
    for (auto& b : rec.branches) b.dice_cross.assign(static_cast<std::size_t>(n), 0.0);

    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(schedule.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(schedule.batch_size));
      const double scale = 1.0 / static_cast<double>(end - start);
      net.params().zero_grad();
      for (std::size_t b = start; b < end; ++b) {
        const PreparedCase& pc = prepared[order[b]];
        TapePtr tape;
        const auto out = net.forward_train(pc.image, tape);
        std::vector<ProbMap> probs;
        for (const auto& p : out.probs) probs.push_back(to_double(p));
        std::vector<ProbMap> grads;
        const LossReport report = total_training_loss(probs, pc.targets, active, classes, &grads);
        if (!std::isfinite(report.total)) {
          rec.total = report.total;
          rec.branches = report.per_branch;
          fail(ErrorKind::Divergence,
               "non-finite loss at epoch " + std::to_string(epoch) + ": " + describe(rec));
        }
        std::vector<Tensor> grad_logits;
        for (std::size_t i = 0; i < probs.size(); ++i) {
          grad_logits.push_back(to_float(softmax_backward(probs[i], grads[i]), scale));
        }
        net.backward(*tape, grad_logits);
        rec.total += report.total;
        for (std::size_t i = 0; i < report.per_branch.size(); ++i) {
          const auto& src = report.per_branch[i];
          auto& dst = rec.branches[i];
          dst.ce_self += src.ce_self;
          dst.dice_self += src.dice_self;
          dst.loss += src.loss;
          for (std::size_t j = 0; j < src.dice_cross.size(); ++j) dst.dice_cross[j] += src.dice_cross[j];
        }
      }
      opt.step(net.params(), rec.lr);
    }

    const double inv = 1.0 / static_cast<double>(order.size());
    rec.total *= inv;
    last_phase_a.clear();
    for (auto& b : rec.branches) {
      b.ce_self *= inv;
      b.dice_self *= inv;
      b.loss *= inv;
      for (auto& d : b.dice_cross) d *= inv;
      last_phase_a.push_back(b.loss);
    }
    if (cross) last_phase_a.clear();

    rec.val_score = mean_staple(net, dataset, monitor);
    result.history.push_back(rec);
    if (result.best_epoch < 0 || rec.val_score > result.best_val_score) {
      result.best_epoch = epoch;
      result.best_val_score = rec.val_score;
      result.best_weights = snapshot_weights(net);
    }
    if (on_epoch) on_epoch(rec);
  }
  result.final_weights = weights;
  return result;
}

SoftMap predict(const MultiDecoderNet& net, const Tensor& image) {
  const int m = net.config().grid_multiple();
  if (image.height % m == 0 && image.width % m == 0) {
    return net.forward_all(image).mean_foreground;
  }
  const CropRecord crop = grid_crop(image.spatial(), m);
  const Shape2 padded{(image.height + m - 1) / m * m, (image.width + m - 1) / m * m};
  const auto out = net.forward_all(pad_tensor(image, crop, padded));
  return unpad(out.mean_foreground, crop);
}

SoftMap predict_case(const MultiDecoderNet& net, const CaseRecord& c) {
  SoftMap full = predict(net, c.image);
  return c.crop ? unpad(full, *c.crop) : full;
}

SoftMap ensemble_predict(std::span<const MultiDecoderNet* const> models, const Tensor& image) {
  require(!models.empty(), ErrorKind::InvalidArgument, "ensemble_predict: no models");
  SoftMap acc;
  std::vector<double> sum;
  for (const auto* m : models) {
    const SoftMap p = predict(*m, image);
    if (sum.empty()) {
      acc = SoftMap(p.shape);
      sum.assign(p.size(), 0.0);
    }
    for (std::size_t i = 0; i < p.size(); ++i) sum[i] += p.data[i];
  }
  const double inv = 1.0 / static_cast<double>(models.size());
  for (std::size_t i = 0; i < sum.size(); ++i) acc.data[i] = static_cast<float>(sum[i] * inv);
  return acc;
}

SoftMap ensemble_predict_case(std::span<const MultiDecoderNet* const> models, const CaseRecord& c) {
  SoftMap full = ensemble_predict(models, c.image);
  return c.crop ? unpad(full, *c.crop) : full;
}

double mean_staple(const MultiDecoderNet& net, const std::vector<CaseRecord>& cases,
                   std::span<const std::size_t> subset) {
  if (subset.empty()) return 0.0;
  double acc = 0.0;
  for (std::size_t idx : subset) {
    const CaseRecord& c = cases[idx];
    SoftMap gt = average_annotations(c.raters);
    if (c.crop) gt = unpad(gt, *c.crop);
    acc += staple_score(predict_case(net, c), gt);
  }
  return acc / static_cast<double>(subset.size());
}

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

std::string train_log_header(int n_branches) {
  std::string h = "epoch,lr,cross_enabled";
  for (int i = 0; i < n_branches; ++i) h += ",loss_branch" + std::to_string(i);
  return h + ",total,val_staple\n";
}

std::string train_log_row(const EpochRecord& r) {
  std::string row = std::to_string(r.epoch) + "," + fmt(r.lr) + "," + (r.cross_enabled ? "1" : "0");
  for (const auto& b : r.branches) row += "," + fmt(b.loss);
  return row + "," + fmt(r.total) + "," + fmt(r.val_score) + "\n";
}

std::string loss_report_header() {
  return "epoch,branch,L_ce,L_dc_self,L_dc_cross_mean,L_loss,total\n";
}

std::string loss_report_rows(const EpochRecord& r) {
  std::string out;
  for (std::size_t i = 0; i < r.branches.size(); ++i) {
    const auto& b = r.branches[i];
    out += std::to_string(r.epoch) + "," + std::to_string(i) + "," + fmt(b.ce_self) + "," +
           fmt(b.dice_self) + "," + fmt(b.dice_cross_mean()) + "," + fmt(b.loss) + "," +
           fmt(r.total) + "\n";
  }
  return out;
}

}  // namespace mdunet
