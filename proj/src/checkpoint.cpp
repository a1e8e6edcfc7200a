#include "apo/checkpoint.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>

namespace apo {

namespace {

constexpr std::array<char, 8> kMagic{'A', 'P', 'O', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& os, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::array<unsigned char, sizeof(T)> bytes{};
  std::memcpy(bytes.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  os.write(reinterpret_cast<const char*>(bytes.data()), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  std::array<unsigned char, sizeof(T)> bytes{};
  if (!is.read(reinterpret_cast<char*>(bytes.data()), sizeof(T))) {
    throw CheckpointError("checkpoint: unexpected end of file");
  }
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  T value;
  std::memcpy(&value, bytes.data(), sizeof(T));
  return value;
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw CheckpointError("checkpoint: cannot open " + path.string() + " for writing");
  os.write(kMagic.data(), kMagic.size());
  put<std::uint32_t>(os, kVersion);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    put<std::uint32_t>(os, static_cast<std::uint32_t>(t.name.size()));
    os.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    put<std::uint64_t>(os, static_cast<std::uint64_t>(t.value.rows()));
    put<std::uint64_t>(os, static_cast<std::uint64_t>(t.value.cols()));
    for (Eigen::Index i = 0; i < t.value.rows(); ++i) {
      for (Eigen::Index j = 0; j < t.value.cols(); ++j) put<double>(os, t.value(i, j));
    }
  }
  if (!os) throw CheckpointError("checkpoint: write to " + path.string() + " failed");
}

std::vector<NamedTensor> read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("checkpoint: cannot open " + path.string());
  std::array<char, 8> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kMagic) {
    throw CheckpointError("checkpoint: " + path.string() + " is not a checkpoint file");
  }
  const auto version = get<std::uint32_t>(is);
  if (version != kVersion) throw CheckpointError("checkpoint: unsupported version " + std::to_string(version));
  const auto count = get<std::uint32_t>(is);
  std::vector<NamedTensor> tensors;
  tensors.reserve(count);
  for (std::uint32_t k = 0; k < count; ++k) {
    NamedTensor t;
    t.name.resize(get<std::uint32_t>(is));
    if (!is.read(t.name.data(), static_cast<std::streamsize>(t.name.size()))) {
      throw CheckpointError("checkpoint: truncated tensor name");
    }
    const auto rows = get<std::uint64_t>(is);
    const auto cols = get<std::uint64_t>(is);
    if (rows > (1u << 24) || cols > (1u << 24)) throw CheckpointError("checkpoint: implausible shape for " + t.name);
    t.value.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index i = 0; i < t.value.rows(); ++i) {
      for (Eigen::Index j = 0; j < t.value.cols(); ++j) t.value(i, j) = get<double>(is);
    }
    tensors.push_back(std::move(t));
  }
  return tensors;
}

std::vector<NamedTensor> checkpoint_tensors(const std::string& prefix, const MlpParams& params,
                                            const AdamState& adam) {
  std::vector<NamedTensor> out;
  for (const auto& t : params.tensors) out.push_back({prefix + "/" + t.name, t.value});
  for (std::size_t i = 0; i < adam.m.size(); ++i) {
    out.push_back({prefix + "/adam.m/" + params.tensors[i].name, adam.m[i]});
  }
  for (std::size_t i = 0; i < adam.v.size(); ++i) {
    out.push_back({prefix + "/adam.v/" + params.tensors[i].name, adam.v[i]});
  }
  out.push_back({prefix + "/adam.step", Eigen::MatrixXd::Constant(1, 1, static_cast<double>(adam.step))});
  return out;
}

void restore_from_checkpoint(const std::vector<NamedTensor>& tensors, const std::string& prefix,
                             MlpParams& params, AdamState& adam) {
  std::map<std::string, const Eigen::MatrixXd*> by_name;
  for (const auto& t : tensors) by_name[t.name] = &t.value;
  auto fetch = [&](const std::string& name, const Eigen::MatrixXd& like) -> const Eigen::MatrixXd& {
    const auto it = by_name.find(name);
    if (it == by_name.end()) throw CheckpointError("checkpoint: missing tensor " + name);
    if (it->second->rows() != like.rows() || it->second->cols() != like.cols()) {
      throw CheckpointError("checkpoint: shape mismatch for " + name);
    }
    return *it->second;
  };
  AdamState restored = adam_init(params);
  MlpParams loaded = params;
  for (std::size_t i = 0; i < params.tensors.size(); ++i) {
    const auto& name = params.tensors[i].name;
    loaded.tensors[i].value = fetch(prefix + "/" + name, params.tensors[i].value);
    restored.m[i] = fetch(prefix + "/adam.m/" + name, params.tensors[i].value);
    restored.v[i] = fetch(prefix + "/adam.v/" + name, params.tensors[i].value);
  }
  restored.step = static_cast<long>(fetch(prefix + "/adam.step", Eigen::MatrixXd(1, 1))(0, 0));
  params = std::move(loaded);
  adam = std::move(restored);
}

}  // namespace apo
