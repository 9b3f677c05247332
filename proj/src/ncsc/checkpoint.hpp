#pragma once

// Parameter checkpoint file, little-endian throughout:
//
//   "NCSC"            4 bytes magic
//   version           u32 (currently 1)
//   repeated until EOF:
//     name length     u64
//     name            bytes (no terminator)
//     rank            u64
//     dims            rank x u64
//     values          prod(dims) x f64

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ncsc/autodiff.hpp"

namespace ncsc {

inline constexpr std::uint32_t kCheckpointVersion = 1;

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

std::vector<std::uint8_t> encode_checkpoint(const NamedTensors& tensors);
NamedTensors decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, const NamedTensors& tensors);
NamedTensors load_checkpoint(const std::filesystem::path& path);

NamedTensors snapshot(const ad::ParameterStore& store);
// Copies every tensor whose name exists in the store; shapes must match.
// Returns the number of parameters restored.
std::size_t restore(ad::ParameterStore& store, const NamedTensors& tensors);

}  // namespace ncsc
