// SPDX-License-Identifier: Apache-2.0
#include "mdunet/net.hpp"

#include <cmath>
#include <random>

#include "mdunet/error.hpp"
#include "ops.hpp"

namespace mdunet {

struct GroupTape {
  Tensor input;
  Tensor output;  // post-ReLU
  ops::NormCache norm;
};

struct StageTape {
  GroupTape first;
  GroupTape second;
};

struct DecoderTape {
  std::vector<StageTape> stages;  // indexed by level
  std::vector<int> skip_channels;
  Tensor head_input;
};

struct ForwardTape {
  Tensor image;
  std::vector<StageTape> encoder;
  std::vector<Tensor> features;  // encoder output per level
  std::vector<std::vector<int>> pool_argmax;
  std::vector<DecoderTape> decoders;
  std::vector<Tensor> probs;
};

void TapeDeleter::operator()(ForwardTape* tape) const noexcept { delete tape; }

std::string to_string(const Shape2& s) {
  return std::to_string(s.height) + "x" + std::to_string(s.width);
}

void ModelConfig::validate() const {
  require(stage_channels.size() >= 2, ErrorKind::InvalidConfig,
          "stage_channels needs at least 2 entries");
  for (int c : stage_channels) {
    require(c > 0, ErrorKind::InvalidConfig, "stage_channels entries must be positive");
  }
  require(n_decoders >= 1, ErrorKind::InvalidConfig, "n_decoders must be >= 1");
  require(n_classes >= 2, ErrorKind::InvalidConfig, "n_classes must be >= 2");
  require(in_channels >= 1, ErrorKind::InvalidConfig, "in_channels must be >= 1");
  require(norm_epsilon > 0.0 && std::isfinite(norm_epsilon), ErrorKind::InvalidConfig,
          "norm_epsilon must be positive");
  require(stage_channels.size() <= 16, ErrorKind::InvalidConfig,
          "stage_channels has too many entries");
}

namespace {

class Builder {
 public:
  Builder(ParamStore& ps, std::uint64_t seed, double eps)
      : ps_(ps), rng_(seed), eps_(eps) {}

  layers::Conv2d conv(const std::string& name, int in, int out, int kernel) {
    layers::Conv2d c{in, out, kernel, -1, -1};
    c.weight = ps_.add(name + ".weight", {out, in, kernel, kernel});
    c.bias = ps_.add(name + ".bias", {out});
    const double fan_in = static_cast<double>(in) * kernel * kernel;
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
    for (auto& w : ps_[c.weight].value) w = static_cast<float>(dist(rng_));
    return c;
  }

  layers::InstanceNorm norm(const std::string& name, int channels) {
    layers::InstanceNorm n{channels, eps_, -1, -1};
    n.scale = ps_.add(name + ".scale", {channels});
    n.shift = ps_.add(name + ".shift", {channels});
    for (auto& g : ps_[n.scale].value) g = 1.0f;
    return n;
  }

  layers::ResStage stage(const std::string& name, int in, int out) {
    layers::ResStage s;
    s.first = {conv(name + ".conv1", in, out, 3), norm(name + ".norm1", out)};
    s.second = {conv(name + ".conv2", out, out, 3), norm(name + ".norm2", out)};
    s.projected = in != out;
    if (s.projected) s.projection = conv(name + ".proj", in, out, 1);
    return s;
  }

 private:
  ParamStore& ps_;
  std::mt19937_64 rng_;
  double eps_;
};

Tensor group_forward(const ParamStore& ps, const layers::ConvGroup& g, const Tensor& x,
                     GroupTape* tape) {
  Tensor y = ops::conv_forward(ps, g.conv, x);
  y = ops::instance_norm_forward(ps, g.norm, y, tape ? &tape->norm : nullptr);
  ops::relu_inplace(y);
  if (tape) {
    tape->input = x;
    tape->output = y;
  }
  return y;
}

Tensor group_backward(ParamStore& ps, const layers::ConvGroup& g, const GroupTape& tape,
                      Tensor dy) {
  ops::relu_backward_inplace(tape.output, dy);
  Tensor d = ops::instance_norm_backward(ps, g.norm, tape.norm, dy);
  return ops::conv_backward(ps, g.conv, tape.input, d);
}

Tensor stage_forward(const ParamStore& ps, const layers::ResStage& s, const Tensor& x,
                     StageTape* tape) {
  Tensor h = group_forward(ps, s.first, x, tape ? &tape->first : nullptr);
  Tensor y = group_forward(ps, s.second, h, tape ? &tape->second : nullptr);
  if (s.projected) {
    ops::add_inplace(y, ops::conv_forward(ps, s.projection, x));
  } else {
    ops::add_inplace(y, x);
  }
  return y;
}

Tensor stage_backward(ParamStore& ps, const layers::ResStage& s, const StageTape& tape,
                      const Tensor& dy) {
  Tensor dh = group_backward(ps, s.second, tape.second, dy);
  Tensor dx = group_backward(ps, s.first, tape.first, std::move(dh));
  if (s.projected) {
    ops::add_inplace(dx, ops::conv_backward(ps, s.projection, tape.first.input, dy));
  } else {
    ops::add_inplace(dx, dy);
  }
  return dx;
}

}  // namespace

MultiDecoderNet::MultiDecoderNet(const ModelConfig& config, std::uint64_t seed)
    : config_(config) {
  config_.validate();
  Builder b(params_, seed, config_.norm_epsilon);
  const auto& ch = config_.stage_channels;
  const int levels = static_cast<int>(ch.size());
  for (int s = 0; s < levels; ++s) {
    const int in = s == 0 ? config_.in_channels : ch[static_cast<std::size_t>(s - 1)];
    encoder_.push_back(b.stage("encoder.stage" + std::to_string(s), in,
                               ch[static_cast<std::size_t>(s)]));
  }
  for (int d = 0; d < config_.n_decoders; ++d) {
    const std::string prefix = "decoder" + std::to_string(d);
    layers::Decoder dec;
    dec.stages.resize(static_cast<std::size_t>(levels - 1));
    for (int s = levels - 2; s >= 0; --s) {
      const auto su = static_cast<std::size_t>(s);
      dec.stages[su] = b.stage(prefix + ".stage" + std::to_string(s), ch[su + 1] + ch[su], ch[su]);
    }
    dec.head = b.conv(prefix + ".head", ch[0], config_.n_classes, 1);
    decoders_.push_back(std::move(dec));
  }
}

void MultiDecoderNet::check_input(const Tensor& image) const {
  const int m = config_.grid_multiple();
  if (image.channels != config_.in_channels || image.height <= 0 || image.width <= 0 ||
      image.height % m != 0 || image.width % m != 0 ||
      image.size() != static_cast<std::size_t>(image.channels) * image.plane()) {
    fail(ErrorKind::ShapeMismatch,
         "input shape (" + std::to_string(image.channels) + "," + std::to_string(image.height) +
             "," + std::to_string(image.width) + ") rejected: expected " +
             std::to_string(config_.in_channels) + " channels and height/width positive multiples of " +
             std::to_string(m));
  }
}

BranchPredictions MultiDecoderNet::forward_all(const Tensor& image) const {
  check_input(image);
  return run(image, nullptr);
}

BranchPredictions MultiDecoderNet::forward_train(const Tensor& image, TapePtr& tape) const {
  check_input(image);
  tape.reset(new ForwardTape());
  return run(image, tape.get());
}

BranchPredictions MultiDecoderNet::run(const Tensor& image, ForwardTape* tape) const {
  const int levels = static_cast<int>(encoder_.size());
  std::vector<Tensor> features(static_cast<std::size_t>(levels));
  if (tape) {
    tape->image = image;
    tape->encoder.resize(static_cast<std::size_t>(levels));
    tape->pool_argmax.resize(static_cast<std::size_t>(levels - 1));
  }
  Tensor x = image;
  for (int s = 0; s < levels; ++s) {
    const auto su = static_cast<std::size_t>(s);
    if (s > 0) x = ops::maxpool2_forward(x, tape ? &tape->pool_argmax[su - 1] : nullptr);
    features[su] = stage_forward(params_, encoder_[su], x, tape ? &tape->encoder[su] : nullptr);
    x = features[su];
  }

  BranchPredictions out;
  if (tape) tape->decoders.resize(decoders_.size());
  for (std::size_t d = 0; d < decoders_.size(); ++d) {
    const auto& dec = decoders_[d];
    DecoderTape* dt = tape ? &tape->decoders[d] : nullptr;
    if (dt) dt->stages.resize(dec.stages.size());
    Tensor h = features.back();
    for (int s = levels - 2; s >= 0; --s) {
      const auto su = static_cast<std::size_t>(s);
      Tensor cat = ops::concat_channels(ops::upsample2_forward(h), features[su]);
      h = stage_forward(params_, dec.stages[su], cat, dt ? &dt->stages[su] : nullptr);
    }
    if (dt) dt->head_input = h;
    out.probs.push_back(ops::softmax(ops::conv_forward(params_, dec.head, h)));
  }
  out.mean_foreground = mean_foreground(out.probs);
  if (tape) {
    tape->features = std::move(features);
    tape->probs = out.probs;
  }
  return out;
}

void MultiDecoderNet::backward(const ForwardTape& tape, const std::vector<Tensor>& grad_logits) {
  require(grad_logits.size() == decoders_.size(), ErrorKind::InvalidArgument,
          "backward expects one logit gradient per decoder");
  const int levels = static_cast<int>(encoder_.size());
  std::vector<Tensor> dfeat(static_cast<std::size_t>(levels));
  for (int s = 0; s < levels; ++s) {
    const Tensor& f = tape.features[static_cast<std::size_t>(s)];
    dfeat[static_cast<std::size_t>(s)] = Tensor(f.channels, f.height, f.width);
  }

  for (std::size_t d = 0; d < decoders_.size(); ++d) {
    if (grad_logits[d].data.empty()) continue;
    const auto& dec = decoders_[d];
    const auto& dt = tape.decoders[d];
    Tensor dh = ops::conv_backward(params_, dec.head, dt.head_input, grad_logits[d]);
    for (int s = 0; s <= levels - 2; ++s) {
      const auto su = static_cast<std::size_t>(s);
      Tensor dcat = stage_backward(params_, dec.stages[su], dt.stages[su], dh);
      const Tensor& below = tape.features[su + 1];
      const int up_channels = (s == levels - 2) ? below.channels
                                                 : config_.stage_channels[su + 1];
      Tensor dup, dskip;
      ops::split_channels(dcat, up_channels, dup, dskip);
      ops::add_inplace(dfeat[su], dskip);
      dh = ops::upsample2_backward(dup, below.spatial());
    }
    ops::add_inplace(dfeat.back(), dh);
  }

  Tensor dx = dfeat.back();
  for (int s = levels - 1; s >= 0; --s) {
    const auto su = static_cast<std::size_t>(s);
    dx = stage_backward(params_, encoder_[su], tape.encoder[su], dx);
    if (s > 0) {
      const Tensor& prev = tape.features[su - 1];
      dx = ops::maxpool2_backward(tape.pool_argmax[su - 1], prev.channels, prev.spatial(), dx);
      ops::add_inplace(dx, dfeat[su - 1]);
    }
  }
}

std::size_t parameter_count(const MultiDecoderNet& net) { return net.parameter_count(); }

Plane<float> mean_foreground(const std::vector<Tensor>& probs) {
  require(!probs.empty(), ErrorKind::InvalidArgument, "no branch predictions");
  const auto& first = probs.front();
  require(first.channels >= 2, ErrorKind::InvalidArgument, "need a foreground channel");
  Plane<float> m(first.spatial());
  for (std::size_t i = 0; i < m.size(); ++i) {
    double acc = 0.0;
    for (const auto& p : probs) acc += p.data[p.plane() + i];
    m.data[i] = static_cast<float>(acc / static_cast<double>(probs.size()));
  }
  return m;
}

}  // namespace mdunet
