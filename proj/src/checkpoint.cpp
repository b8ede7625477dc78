// SPDX-License-Identifier: Apache-2.0
#include "optformer/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

namespace optformer {

namespace {

void write_f64_le(std::ofstream& out, const std::vector<double>& data) {
  for (double v : data) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    unsigned char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(bytes), 8);
  }
}

std::vector<double> read_f64_le(std::ifstream& in, std::int64_t count) {
  std::vector<double> data(static_cast<std::size_t>(count));
  for (double& v : data) {
    unsigned char bytes[8];
    in.read(reinterpret_cast<char*>(bytes), 8);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    std::memcpy(&v, &bits, 8);
  }
  return data;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path_prefix) {
  nlohmann::json manifest;
  manifest["format"] = "optformer-checkpoint-v1";
  manifest["step"] = ckpt.step;
  manifest["opt_steps"] = ckpt.opt_steps;
  manifest["best_val_loss"] = ckpt.best_val_loss;
  manifest["config"] = ckpt.config;

  nlohmann::json tensors = nlohmann::json::array();
  std::int64_t offset = 0;
  auto describe = [&](const std::string& name, const Tensor& t) {
    nlohmann::json e;
    e["name"] = name;
    e["shape"] = t.shape;
    e["dtype"] = "f64";
    e["offset"] = offset;
    e["numel"] = t.numel();
    offset += t.numel() * 8;
    tensors.push_back(std::move(e));
  };
  for (const auto& [name, t] : ckpt.params.items()) describe(name, t);
  for (const auto& [name, t] : ckpt.opt_state) describe(name, t);
  manifest["tensors"] = std::move(tensors);

  std::ofstream jf(path_prefix + ".json", std::ios::binary);
  if (!jf) throw ConfigError("save_checkpoint: cannot write " + path_prefix + ".json");
  jf << manifest.dump(2) << "\n";

  std::ofstream bf(path_prefix + ".bin", std::ios::binary);
  if (!bf) throw ConfigError("save_checkpoint: cannot write " + path_prefix + ".bin");
  for (const auto& [name, t] : ckpt.params.items()) write_f64_le(bf, t.data);
  for (const auto& [name, t] : ckpt.opt_state) write_f64_le(bf, t.data);
}

Checkpoint load_checkpoint(const std::string& path_prefix) {
  std::ifstream jf(path_prefix + ".json", std::ios::binary);
  if (!jf) throw ConfigError("load_checkpoint: cannot open " + path_prefix + ".json");
  nlohmann::json manifest = nlohmann::json::parse(jf, nullptr, true, /*ignore_comments=*/true);
  if (manifest.value("format", "") != "optformer-checkpoint-v1")
    throw ConfigError("load_checkpoint: unrecognized format in " + path_prefix + ".json");

  Checkpoint ckpt;
  ckpt.step = manifest.at("step").get<long>();
  ckpt.opt_steps = manifest.at("opt_steps").get<long>();
  ckpt.best_val_loss = manifest.at("best_val_loss").get<double>();
  ckpt.config = manifest.at("config");

  std::ifstream bf(path_prefix + ".bin", std::ios::binary);
  if (!bf) throw ConfigError("load_checkpoint: cannot open " + path_prefix + ".bin");
  for (const auto& e : manifest.at("tensors")) {
    const std::string name = e.at("name").get<std::string>();
    const std::vector<int> shape = e.at("shape").get<std::vector<int>>();
    const std::int64_t numel = e.at("numel").get<std::int64_t>();
    if (Tensor::numel_of(shape) != numel)
      throw ConfigError("load_checkpoint: manifest shape/numel mismatch for " + name);
    Tensor t(shape, read_f64_le(bf, numel));
    if (name.rfind("opt.", 0) == 0)
      ckpt.opt_state.emplace_back(name, std::move(t));
    else
      ckpt.params.add(name, std::move(t));
  }
  if (!bf) throw ConfigError("load_checkpoint: payload truncated in " + path_prefix + ".bin");
  return ckpt;
}

}  // namespace optformer
