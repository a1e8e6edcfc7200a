#pragma once

#include "apo/nn.hpp"

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace apo {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/**
 * Binary layout: the 8 bytes "APOCKPT\0", a u32 version, a u32 tensor count,
 * then per tensor a u32 name length, the name bytes, u64 rows, u64 cols and
 * rows * cols little-endian f64 values in row-major order.
 */
void write_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_checkpoint(const std::filesystem::path& path);

/// Network tensors under "<prefix>/<name>", Adam moments under
/// "<prefix>/adam.m/<name>" and "<prefix>/adam.v/<name>", and the step
/// counter as the 1x1 tensor "<prefix>/adam.step".
std::vector<NamedTensor> checkpoint_tensors(const std::string& prefix, const MlpParams& params,
                                            const AdamState& adam);

/// Inverse of checkpoint_tensors; `params` supplies the expected names and shapes.
void restore_from_checkpoint(const std::vector<NamedTensor>& tensors, const std::string& prefix,
                             MlpParams& params, AdamState& adam);

}  // namespace apo
