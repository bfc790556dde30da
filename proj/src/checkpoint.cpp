// SPDX-License-Identifier: Apache-2.0
#include "mdunet/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "binary_io.hpp"
#include "mdunet/error.hpp"

namespace mdunet {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

std::uint32_t get_u32(const std::string& s, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(s[at + i])) << (8 * i);
  }
  return v;
}

json config_to_json(const ModelConfig& c) {
  return {{"stage_channels", c.stage_channels},
          {"n_decoders", c.n_decoders},
          {"n_classes", c.n_classes},
          {"in_channels", c.in_channels},
          {"norm_epsilon", c.norm_epsilon}};
}

ModelConfig config_from(const json& j) {
  ModelConfig c;
  c.stage_channels = j.at("stage_channels").get<std::vector<int>>();
  c.n_decoders = j.at("n_decoders").get<int>();
  c.n_classes = j.at("n_classes").get<int>();
  c.in_channels = j.at("in_channels").get<int>();
  c.norm_epsilon = j.at("norm_epsilon").get<double>();
  return c;
}

}  // namespace

std::string model_config_json(const ModelConfig& c) { return config_to_json(c).dump(); }

ModelConfig model_config_from_json(const std::string& text) {
  try {
    return config_from(json::parse(text));
  } catch (const json::exception& e) {
    fail(ErrorKind::InvalidConfig, std::string("model config: ") + e.what());
  }
}

void save_checkpoint(const fs::path& path, const MultiDecoderNet& net, std::uint64_t seed) {
  json tensors = json::array();
  std::string payload;
  for (const auto& p : net.params().all()) {
    tensors.push_back({{"name", p.name},
                       {"shape", p.shape},
                       {"offset", payload.size()},
                       {"count", p.size()}});
    io::append_f32_le(payload, p.value.data(), p.size());
  }
  const json manifest = {{"format", "mdunet-checkpoint"},
                         {"version", kCheckpointVersion},
                         {"seed", seed},
                         {"config", config_to_json(net.config())},
                         {"tensors", tensors}};
  const std::string text = manifest.dump();
  std::string out(kCheckpointMagic, sizeof kCheckpointMagic);
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out += text;
  out += payload;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  io::write_text(path, out);
}

MultiDecoderNet load_checkpoint(const fs::path& path) {
  if (!fs::exists(path)) fail(ErrorKind::MissingData, "checkpoint not found: " + path.string());
  const std::string bytes = io::read_text(path);
  const auto bad = [&](const std::string& why) {
    fail(ErrorKind::InvalidArgument, "checkpoint " + path.string() + ": " + why);
  };
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0) bad("bad magic");
  if (get_u32(bytes, 8) != kCheckpointVersion) bad("unsupported version");
  const std::size_t mlen = get_u32(bytes, 12);
  if (16 + mlen > bytes.size()) bad("truncated manifest");
  json manifest;
  try {
    manifest = json::parse(bytes.substr(16, mlen));
  } catch (const json::exception& e) {
    bad(std::string("malformed manifest: ") + e.what());
  }
  const std::size_t base = 16 + mlen;
  try {
    MultiDecoderNet net(config_from(manifest.at("config")), 0);
    auto& ps = net.params();
    std::size_t seen = 0;
    for (const auto& t : manifest.at("tensors")) {
      const auto name = t.at("name").get<std::string>();
      const int idx = ps.index_of(name);
      if (idx < 0) bad("unknown tensor " + name);
      auto& p = ps[idx];
      const auto count = t.at("count").get<std::size_t>();
      const auto offset = t.at("offset").get<std::size_t>();
      if (count != p.size() || t.at("shape").get<std::vector<int>>() != p.shape) {
        bad("tensor " + name + " has the wrong shape");
      }
      if (base + offset + 4 * count > bytes.size()) bad("truncated payload for " + name);
      io::read_f32_le(bytes.data() + base + offset, p.value.data(), count);
      ++seen;
    }
    if (seen != ps.all().size()) bad("missing tensors");
    return net;
  } catch (const json::exception& e) {
    bad(std::string("malformed manifest: ") + e.what());
  }
  throw Error(ErrorKind::Internal, "unreachable");
}

}  // namespace mdunet
