#pragma once

#include <string>

#include "amlfs/nnet.hpp"

namespace amlfs {

// Binary model format: "AMLF" magic, little-endian u32 version, then tensor
// records until EOF. Each record is u32 name length, name bytes, u32 rank,
// u32 dims[rank], then the row-major float64 payload, all little-endian.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const ModelState& model, const std::string& path);

// Throws FormatError naming the failing record and byte offset on any
// malformed input; ConsistencyError when records disagree with each other.
ModelState load_checkpoint(const std::string& path);

} // namespace amlfs
