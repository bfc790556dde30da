// SPDX-License-Identifier: Apache-2.0
#include "mdunet/datapipe.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include <json.hpp>

#include "binary_io.hpp"
#include "mdunet/error.hpp"

namespace mdunet {

namespace fs = std::filesystem;
using nlohmann::json;

Modality parse_modality(const std::string& s) {
  if (s == "MR") return Modality::MR;
  if (s == "CT") return Modality::CT;
  fail(ErrorKind::InvalidConfig, "unknown modality '" + s + "' (expected MR or CT)");
}

const char* modality_name(Modality m) noexcept { return m == Modality::CT ? "CT" : "MR"; }

void CaseRecord::validate() const {
  require(image.channels >= 1 && image.height > 0 && image.width > 0 &&
              image.data.size() == static_cast<std::size_t>(image.channels) * image.plane(),
          ErrorKind::ShapeMismatch, "case " + case_id + ": malformed image array");
  require(!raters.empty(), ErrorKind::MissingData, "case " + case_id + ": no rater masks");
  for (std::size_t r = 0; r < raters.size(); ++r) {
    const Mask& m = raters[r];
    if (!(m.shape == image.spatial()) || m.size() != image.plane()) {
      fail(ErrorKind::ShapeMismatch, "case " + case_id + ": rater " + std::to_string(r) +
                                         " mask " + to_string(m.shape) +
                                         " does not match image " + to_string(image.spatial()));
    }
    for (unsigned char v : m.data) {
      require(v <= 1, ErrorKind::InvalidArgument,
              "case " + case_id + ": rater " + std::to_string(r) + " mask is not binary");
    }
  }
}

Tensor zscore_normalize(const Tensor& image) {
  Tensor out = image;
  const double n = static_cast<double>(image.plane());
  for (int c = 0; c < image.channels; ++c) {
    const auto in = image.channel(c);
    double mean = 0.0;
    for (float v : in) mean += v;
    mean /= n;
    double var = 0.0;
    for (float v : in) var += (v - mean) * (v - mean);
    var /= n;
    require(var > 0.0, ErrorKind::InvalidArgument,
            "zscore_normalize: channel " + std::to_string(c) + " has zero variance");
    const double inv = 1.0 / std::sqrt(var);
    auto o = out.channel(c);
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = static_cast<float>((in[i] - mean) * inv);
  }
  return out;
}

Tensor ct_rescale(const Tensor& image, double lo, double hi) {
  require(lo < hi, ErrorKind::InvalidArgument, "ct_rescale: window lo must be < hi");
  Tensor out = image;
  const double span = hi - lo;
  for (auto& v : out.data) v = static_cast<float>((std::clamp<double>(v, lo, hi) - lo) / span);
  return out;
}

CropRecord grid_crop(Shape2 shape, int multiple) {
  require(multiple >= 1, ErrorKind::InvalidArgument, "grid multiple must be >= 1");
  const auto up = [multiple](int v) { return (v + multiple - 1) / multiple * multiple; };
  return {(up(shape.height) - shape.height) / 2, (up(shape.width) - shape.width) / 2,
          shape.height, shape.width};
}

Tensor pad_tensor(const Tensor& t, const CropRecord& crop, Shape2 padded) {
  Tensor out(t.channels, padded.height, padded.width);
  for (int c = 0; c < t.channels; ++c) {
    for (int y = 0; y < t.height; ++y) {
      for (int x = 0; x < t.width; ++x) out(c, y + crop.top, x + crop.left) = t(c, y, x);
    }
  }
  return out;
}

namespace {

Shape2 padded_shape(Shape2 s, int multiple) {
  const auto up = [multiple](int v) { return (v + multiple - 1) / multiple * multiple; };
  return {up(s.height), up(s.width)};
}

template <typename T>
Plane<T> pad_plane(const Plane<T>& p, const CropRecord& crop, Shape2 padded) {
  Plane<T> out(padded);
  for (int y = 0; y < p.shape.height; ++y) {
    for (int x = 0; x < p.shape.width; ++x) out(y + crop.top, x + crop.left) = p(y, x);
  }
  return out;
}

}  // namespace

PaddedCase pad_to_grid(const CaseRecord& c, int multiple) {
  const CropRecord crop = grid_crop(c.image.spatial(), multiple);
  const Shape2 ps = padded_shape(c.image.spatial(), multiple);
  PaddedCase out{c, crop};
  out.record.image = pad_tensor(c.image, crop, ps);
  for (auto& m : out.record.raters) m = pad_plane(m, crop, ps);
  out.record.crop = crop;
  return out;
}

Tensor unpad(const Tensor& t, const CropRecord& crop) {
  Tensor out(t.channels, crop.height, crop.width);
  for (int c = 0; c < t.channels; ++c) {
    for (int y = 0; y < crop.height; ++y) {
      for (int x = 0; x < crop.width; ++x) out(c, y, x) = t(c, y + crop.top, x + crop.left);
    }
  }
  return out;
}

template <typename T>
Plane<T> unpad(const Plane<T>& p, const CropRecord& crop) {
  Plane<T> out(Shape2{crop.height, crop.width});
  for (int y = 0; y < crop.height; ++y) {
    for (int x = 0; x < crop.width; ++x) out(y, x) = p(y + crop.top, x + crop.left);
  }
  return out;
}

template Plane<float> unpad(const Plane<float>&, const CropRecord&);
template Plane<unsigned char> unpad(const Plane<unsigned char>&, const CropRecord&);

CaseRecord unpad_case(const CaseRecord& c, const CropRecord& crop) {
  CaseRecord out = c;
  out.image = unpad(c.image, crop);
  for (auto& m : out.raters) m = unpad(m, crop);
  out.crop.reset();
  return out;
}

ConsensusLabels relabel_consensus(const std::vector<Mask>& raters) {
  require(!raters.empty(), ErrorKind::InvalidArgument, "relabel_consensus: no raters");
  const Shape2 shape = raters.front().shape;
  ConsensusLabels out;
  out.counts = Plane<int>(shape, 0);
  for (std::size_t r = 0; r < raters.size(); ++r) {
    if (!(raters[r].shape == shape) || raters[r].size() != shape.pixels()) {
      fail(ErrorKind::ShapeMismatch, "relabel_consensus: rater " + std::to_string(r) + " is " +
                                         to_string(raters[r].shape) + ", expected " +
                                         to_string(shape));
    }
    for (std::size_t i = 0; i < shape.pixels(); ++i) out.counts.data[i] += raters[r].data[i] != 0;
  }
  for (int k = 1; k <= static_cast<int>(raters.size()); ++k) {
    Mask level(shape);
    for (std::size_t i = 0; i < shape.pixels(); ++i) level.data[i] = out.counts.data[i] >= k;
    out.levels.push_back(std::move(level));
  }
  return out;
}

SoftMap average_annotations(const std::vector<Mask>& raters) {
  const auto labels = relabel_consensus(raters);
  SoftMap avg(labels.counts.shape);
  const double n = static_cast<double>(raters.size());
  for (std::size_t i = 0; i < avg.size(); ++i) {
    avg.data[i] = static_cast<float>(labels.counts.data[i] / n);
  }
  return avg;
}

namespace {

struct Harmonic {
  double amp;
  double phase;
};

double radial(double r0, double theta, const std::vector<Harmonic>& hs, int first_order) {
  double r = r0;
  for (std::size_t m = 0; m < hs.size(); ++m) {
    r += hs[m].amp * std::cos((static_cast<double>(m) + first_order) * theta + hs[m].phase);
  }
  return r;
}

}  // namespace

std::vector<CaseRecord> synth_generate(const SynthParams& p) {
  require(p.n_cases >= 1 && p.n_raters >= 1 && p.height >= 4 && p.width >= 4,
          ErrorKind::InvalidConfig, "synth: n_cases, n_raters must be >= 1 and size >= 4");
  require(p.ambiguity >= 0.0 && p.ambiguity <= 1.0, ErrorKind::InvalidConfig,
          "synth: ambiguity must lie in [0, 1]");
  const Modality modality = parse_modality(p.modality);
  std::mt19937_64 rng(p.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  constexpr double kTwoPi = 2.0 * std::numbers::pi;

  std::vector<CaseRecord> cases;
  const double size = std::min(p.height, p.width);
  for (int n = 0; n < p.n_cases; ++n) {
    CaseRecord c;
    char id[32];
    std::snprintf(id, sizeof id, "case_%03d", n);
    c.case_id = id;
    c.modality = modality;

    const double cy = p.height / 2.0 + (unit(rng) - 0.5) * size / 6.0;
    const double cx = p.width / 2.0 + (unit(rng) - 0.5) * size / 6.0;
    const double r0 = size * (0.22 + 0.1 * unit(rng));
    std::vector<Harmonic> shape;  // orders 2..4
    for (int m = 0; m < 3; ++m) shape.push_back({r0 * 0.08 * unit(rng), kTwoPi * unit(rng)});

    // Rater boundaries: true boundary plus a smooth radial displacement
    // (global offset and orders 1..3) scaled by the ambiguity.
    std::vector<double> offset(static_cast<std::size_t>(p.n_raters));
    std::vector<std::vector<Harmonic>> wobble(static_cast<std::size_t>(p.n_raters));
    for (int r = 0; r < p.n_raters; ++r) {
      const auto ru = static_cast<std::size_t>(r);
      offset[ru] = p.ambiguity * r0 * 0.3 * gauss(rng);
      for (int m = 0; m < 3; ++m) {
        wobble[ru].push_back({p.ambiguity * r0 * 0.2 * gauss(rng), kTwoPi * unit(rng)});
      }
    }

    c.image = Tensor(1, p.height, p.width);
    c.raters.assign(static_cast<std::size_t>(p.n_raters), Mask(Shape2{p.height, p.width}));
    const bool ct = modality == Modality::CT;
    const double base = ct ? 0.0 : 100.0, contrast = ct ? 150.0 : 80.0, noise = ct ? 15.0 : 8.0;
    for (int y = 0; y < p.height; ++y) {
      for (int x = 0; x < p.width; ++x) {
        const double dy = y + 0.5 - cy, dx = x + 0.5 - cx;
        const double rho = std::hypot(dy, dx);
        const double theta = std::atan2(dy, dx);
        const double boundary = radial(r0, theta, shape, 2);
        const double blob = 1.0 / (1.0 + std::exp((rho - boundary) / 0.8));
        c.image(0, y, x) = static_cast<float>(base + contrast * blob + noise * gauss(rng));
        for (int r = 0; r < p.n_raters; ++r) {
          const auto ru = static_cast<std::size_t>(r);
          double rb = radial(boundary + offset[ru], theta, wobble[ru], 1);
          rb = std::max(rb, 0.25 * r0);
          c.raters[ru](y, x) = rho < rb ? 1 : 0;
        }
      }
    }
    cases.push_back(std::move(c));
  }
  return cases;
}

CaseRecord preprocess_case(const CaseRecord& c, const PreprocessParams& params, int multiple) {
  require(!c.crop, ErrorKind::InvalidArgument, "case " + c.case_id + " is already preprocessed");
  CaseRecord out = c;
  out.image = c.modality == Modality::CT ? ct_rescale(c.image, params.ct_window_lo, params.ct_window_hi)
                                         : zscore_normalize(c.image);
  return std::move(pad_to_grid(out, multiple).record);
}

namespace {

json crop_json(const CropRecord& c) {
  return {{"top", c.top}, {"left", c.left}, {"height", c.height}, {"width", c.width}};
}

CropRecord crop_from_json(const json& j) {
  return {j.at("top").get<int>(), j.at("left").get<int>(), j.at("height").get<int>(),
          j.at("width").get<int>()};
}

std::string rater_file(int r) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "rater_%02d.u8", r);
  return buf;
}

json read_json(const fs::path& path, const std::string& context) {
  if (!fs::exists(path)) fail(ErrorKind::MissingData, context + ": missing " + path.string());
  try {
    return json::parse(io::read_text(path));
  } catch (const json::exception& e) {
    fail(ErrorKind::InvalidArgument, context + ": malformed " + path.string() + ": " + e.what());
  }
}

CaseRecord load_case(const fs::path& dir) {
  const json meta = read_json(dir / "meta.json", "load_dataset");
  CaseRecord c;
  try {
    c.case_id = meta.at("case_id").get<std::string>();
    c.modality = parse_modality(meta.at("modality").get<std::string>());
    const auto shape = meta.at("shape").get<std::vector<int>>();
    require(shape.size() == 3 && shape[0] > 0 && shape[1] > 0 && shape[2] > 0,
            ErrorKind::ShapeMismatch, "case " + c.case_id + ": shape must be [C,H,W]");
    const int n_raters = meta.at("n_raters").get<int>();
    require(n_raters >= 1, ErrorKind::MissingData, "case " + c.case_id + ": n_raters < 1");
    c.image = Tensor(shape[0], shape[1], shape[2]);
    c.image.data = io::read_f32(dir / "image.f32", c.image.size(), "case " + c.case_id);
    const Shape2 s{shape[1], shape[2]};
    for (int r = 0; r < n_raters; ++r) {
      c.raters.emplace_back(s, io::read_u8(dir / rater_file(r), s.pixels(), "case " + c.case_id));
    }
    if (meta.contains("crop")) c.crop = crop_from_json(meta.at("crop"));
  } catch (const json::exception& e) {
    fail(ErrorKind::InvalidArgument,
         "load_dataset: bad meta.json in " + dir.string() + ": " + e.what());
  }
  c.validate();
  return c;
}

}  // namespace

std::vector<CaseRecord> load_dataset(const fs::path& root) {
  if (!fs::is_directory(root)) {
    fail(ErrorKind::MissingData, "load_dataset: no dataset directory at " + root.string());
  }
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory()) dirs.push_back(e.path());
  }
  std::sort(dirs.begin(), dirs.end());
  require(!dirs.empty(), ErrorKind::MissingData, "load_dataset: no cases under " + root.string());
  std::vector<CaseRecord> cases;
  for (const auto& d : dirs) cases.push_back(load_case(d));
  std::sort(cases.begin(), cases.end(),
            [](const CaseRecord& a, const CaseRecord& b) { return a.case_id < b.case_id; });
  return cases;
}

void save_dataset(const fs::path& root, const std::vector<CaseRecord>& cases) {
  fs::create_directories(root);
  for (const auto& c : cases) {
    c.validate();
    const fs::path dir = root / c.case_id;
    fs::create_directories(dir);
    json meta = {{"case_id", c.case_id},
                 {"modality", modality_name(c.modality)},
                 {"shape", {c.image.channels, c.image.height, c.image.width}},
                 {"n_raters", c.n_raters()}};
    if (c.crop) meta["crop"] = crop_json(*c.crop);
    io::write_text(dir / "meta.json", meta.dump(2) + "\n");
    io::write_f32(dir / "image.f32", c.image.data);
    for (int r = 0; r < c.n_raters(); ++r) {
      io::write_u8(dir / rater_file(r), c.raters[static_cast<std::size_t>(r)].data);
    }
  }
}

void save_prediction(const fs::path& root, const std::string& case_id, const SoftMap& map) {
  const fs::path dir = root / case_id;
  fs::create_directories(dir);
  const json meta = {{"case_id", case_id},
                     {"kind", "prediction"},
                     {"shape", {map.shape.height, map.shape.width}}};
  io::write_text(dir / "meta.json", meta.dump(2) + "\n");
  io::write_f32(dir / "pred.f32", map.data);
}

SoftMap load_prediction(const fs::path& root, const std::string& case_id) {
  const fs::path dir = root / case_id;
  const json meta = read_json(dir / "meta.json", "load_prediction");
  std::vector<int> shape;
  try {
    shape = meta.at("shape").get<std::vector<int>>();
  } catch (const json::exception& e) {
    fail(ErrorKind::InvalidArgument, "load_prediction: bad meta.json in " + dir.string());
  }
  require(shape.size() == 2 && shape[0] > 0 && shape[1] > 0, ErrorKind::ShapeMismatch,
          "prediction " + case_id + ": shape must be [H,W]");
  const Shape2 s{shape[0], shape[1]};
  return SoftMap(s, io::read_f32(dir / "pred.f32", s.pixels(), "prediction " + case_id));
}

Split validation_split(const std::vector<CaseRecord>& cases, double fraction) {
  std::vector<std::size_t> order(cases.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return cases[a].case_id < cases[b].case_id;
  });
  std::size_t n_val = static_cast<std::size_t>(std::floor(cases.size() * fraction));
  if (fraction > 0.0 && cases.size() >= 2) n_val = std::max<std::size_t>(n_val, 1);
  Split s;
  s.train.assign(order.begin(), order.end() - static_cast<std::ptrdiff_t>(n_val));
  s.val.assign(order.end() - static_cast<std::ptrdiff_t>(n_val), order.end());
  return s;
}

}  // namespace mdunet
