#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "metacc/tensor.hpp"

namespace metacc {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

struct Checkpoint {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<NamedTensor> tensors;

  const Tensor& at(const std::string& name) const;
};

// Container: "MCCP" magic, u64 LE header length, JSON header
// {"magic","version","meta","tensors":[{"name","shape","offset","count"}]},
// then the tensors as little-endian f64, offsets relative to the payload start.
std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace metacc
