// SPDX-License-Identifier: Apache-2.0
#include "lcx/pfn/checkpoint.hpp"

#include <array>
#include <cstring>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <vector>

#include "lcx/error.hpp"

namespace lcx::pfn {

namespace {

constexpr std::array<char, 8> kMagic{'L', 'C', 'X', 'P', 'F', 'N', '\0', '\0'};

template <typename T>
void put(std::ofstream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& is, const std::string& path) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw_io("truncated checkpoint '" + path + "'");
  return v;
}

nlohmann::json config_to_json(const ModelConfig& c) {
  return {{"nlayers", c.nlayers}, {"emsize", c.emsize}, {"nheads", c.nheads},
          {"nhidden", c.nhidden}, {"nbins", c.nbins},   {"m", c.m}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.nlayers = j.at("nlayers").get<int>();
  c.emsize = j.at("emsize").get<int>();
  c.nheads = j.at("nheads").get<int>();
  c.nhidden = j.at("nhidden").get<int>();
  c.nbins = j.at("nbins").get<int>();
  c.m = j.at("m").get<int>();
  return c;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  ckpt.grid.validate();
  {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw_io("cannot open '" + path + "' for writing");
    os.write(kMagic.data(), kMagic.size());
    put<std::uint32_t>(os, kCheckpointVersion);
    std::uint32_t count = 0;
    ckpt.params.visit([&count](std::string_view, std::span<const float>) { ++count; });
    put<std::uint32_t>(os, count);
    ckpt.params.visit([&os](std::string_view name, std::span<const float> values) {
      put<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
      os.write(name.data(), static_cast<std::streamsize>(name.size()));
      put<std::uint64_t>(os, values.size());
      os.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size_bytes()));
    });
    if (!os) throw_io("failed writing '" + path + "'");
  }
  nlohmann::json side;
  side["format_version"] = kCheckpointVersion;
  side["config"] = config_to_json(ckpt.params.config);
  side["bin_edges"] = ckpt.grid.edges;
  side["seed"] = ckpt.seed;
  std::ofstream js(path + ".json");
  if (!js) throw_io("cannot open '" + path + ".json' for writing");
  js << side.dump(1) << "\n";
  if (!js) throw_io("failed writing '" + path + ".json'");
}

Checkpoint load_checkpoint(const std::string& path) {
  Checkpoint ckpt;
  {
    std::ifstream js(path + ".json");
    if (!js) throw_io("cannot open checkpoint sidecar '" + path + ".json'");
    nlohmann::json side;
    try {
      side = nlohmann::json::parse(js);
      ckpt.params = ModelParams<float>::zeros(config_from_json(side.at("config")));
      ckpt.grid.edges = side.at("bin_edges").get<std::vector<double>>();
      ckpt.seed = side.at("seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
      throw_io("malformed checkpoint sidecar '" + path + ".json': " + e.what());
    } catch (const Error& e) {
      throw_io("invalid config in '" + path + ".json': " + e.what());
    }
    try {
      ckpt.grid.validate();
    } catch (const Error& e) {
      throw_io("invalid bucket edges in '" + path + ".json': " + e.what());
    }
    if (ckpt.grid.nbins() != ckpt.params.config.nbins) throw_io("bucket edges do not match nbins in '" + path + ".json'");
  }

  std::ifstream is(path, std::ios::binary);
  if (!is) throw_io("cannot open checkpoint '" + path + "'");
  std::array<char, 8> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kMagic) throw_io("'" + path + "' is not a model checkpoint");
  const auto version = get<std::uint32_t>(is, path);
  if (version != kCheckpointVersion) throw_io("unsupported checkpoint version " + std::to_string(version));
  const auto count = get<std::uint32_t>(is, path);

  std::map<std::string, std::vector<float>, std::less<>> stored;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = get<std::uint32_t>(is, path);
    if (len > 4096) throw_io("corrupt tensor name in '" + path + "'");
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw_io("truncated checkpoint '" + path + "'");
    const auto n = get<std::uint64_t>(is, path);
    if (n > (std::uint64_t{1} << 34)) throw_io("corrupt tensor size in '" + path + "'");
    std::vector<float> values(n);
    if (!is.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(n * sizeof(float))))
      throw_io("truncated checkpoint '" + path + "'");
    stored.emplace(std::move(name), std::move(values));
  }

  size_t used = 0;
  ckpt.params.visit([&](std::string_view name, std::span<float> dst) {
    const auto it = stored.find(name);
    if (it == stored.end()) throw_io("checkpoint lacks tensor '" + std::string(name) + "'");
    if (it->second.size() != dst.size()) throw_io("shape mismatch for tensor '" + std::string(name) + "'");
    std::memcpy(dst.data(), it->second.data(), dst.size_bytes());
    ++used;
  });
  if (used != stored.size()) throw_io("checkpoint has tensors the config does not describe");
  return ckpt;
}

}  // namespace lcx::pfn
