#include "metacc/checkpoint.hpp"

#include <algorithm>
#include <stdexcept>

#include "metacc/binary_io.hpp"

namespace metacc {

namespace {
constexpr char kMagic[4] = {'M', 'C', 'C', 'P'};
constexpr int kVersion = 1;
}  // namespace

const Tensor& Checkpoint::at(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return t.tensor;
  }
  throw std::out_of_range("checkpoint has no tensor named '" + name + "'");
}

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt) {
  nlohmann::json header;
  header["magic"] = "MCCP";
  header["version"] = kVersion;
  header["meta"] = ckpt.meta;
  header["tensors"] = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& t : ckpt.tensors) {
    header["tensors"].push_back(
        {{"name", t.name}, {"shape", t.tensor.shape()}, {"offset", offset}, {"count", t.tensor.numel()}});
    offset += t.tensor.numel() * sizeof(double);
  }
  const std::string text = header.dump();
  binio::Writer w;
  w.bytes(kMagic, 4);
  w.u64(text.size());
  w.bytes(text.data(), text.size());
  for (const auto& t : ckpt.tensors) {
    for (const double v : t.tensor.values()) w.f64(v);
  }
  return std::move(w).take();
}

Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
  binio::Reader r(bytes);
  const auto magic = r.bytes(4);
  if (!std::equal(magic.begin(), magic.end(), kMagic)) throw std::runtime_error("not a checkpoint file (bad magic)");
  const auto header_bytes = r.bytes(r.u64());
  const auto header = nlohmann::json::parse(header_bytes.begin(), header_bytes.end());
  if (header.at("version").get<int>() != kVersion) throw std::runtime_error("unsupported checkpoint version");
  const std::size_t payload = r.position();
  Checkpoint ckpt;
  ckpt.meta = header.at("meta");
  for (const auto& entry : header.at("tensors")) {
    Shape shape = entry.at("shape").get<Shape>();
    const std::size_t count = entry.at("count").get<std::size_t>();
    if (shape_numel(shape) != count) throw std::runtime_error("checkpoint: shape/count mismatch");
    r.seek(payload + entry.at("offset").get<std::size_t>());
    std::vector<double> values(count);
    for (double& v : values) v = r.f64();
    ckpt.tensors.push_back({entry.at("name").get<std::string>(), Tensor(std::move(shape), std::move(values))});
  }
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  binio::write_file(path, serialize_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return deserialize_checkpoint(binio::read_file(path)); }

}  // namespace metacc
