#pragma once

#include <cstdint>
#include <string>

#include "msff/config.hpp"
#include "msff/merging.hpp"
#include "msff/optim.hpp"

namespace msff {

/// Training snapshot: format tag, config, parameters, optimizer state, and
/// progress counters. Reloading reproduces training bit-identically within
/// one numeric mode.
struct TrainState {
  TrainConfig config;
  MsffNet net;
  Adam adam;
  int epoch = 0;          // completed epochs
  std::int64_t step = 0;  // global optimizer steps
};

/// Binary container "MSFF1": magic line, manifest length, JSON manifest
/// (parameter names, shapes, dtype, byte offsets), then raw little-endian
/// arrays.
void save_checkpoint(const std::string& path, const TrainState& state);
TrainState load_checkpoint(const std::string& path);

}  // namespace msff
