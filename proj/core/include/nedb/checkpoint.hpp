#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "nedb/network.hpp"

namespace nedb {

/// Raised for truncated, malformed or checksum-mismatched checkpoints.
class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Layout:
///   NEDB-CHECKPOINT 1
///   [config]            key=value lines of the model config
///   [params]
///   param <name> <n> <c> <h> <w>   followed by n*c*h*w little-endian float32
///   checksum fnv1a64 <hex>          over every preceding byte
/// Parameters, running statistics and constrained kernels are all stored as
/// named blobs.
std::vector<std::uint8_t> encode_checkpoint(NedbModel& model);
NedbModel decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(NedbModel& model, const std::string& path);
NedbModel load_checkpoint(const std::string& path);

std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t size);

}  // namespace nedb
