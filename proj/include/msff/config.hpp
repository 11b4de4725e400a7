#pragma once

#include <cstdint>
#include <string>

#include "msff/tensor.hpp"

namespace msff {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  double lambda = 2.0;
  double mu = 5000.0;
  double gamma = 2.2;
  double lr_init = 1e-4;
  double lr_final = 1e-6;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int batch_size = 2;
  int epochs = 40;
  int patch_size = 64;
  int patch_stride = 32;
  int channels = 16;
  std::uint64_t seed = 0;
  Dtype numeric_mode = Dtype::f32;
  int checkpoint_interval = 0;  // epochs between checkpoints; 0 = final only
  double target_l_tm = 0.0;     // stop early once l_tm falls below; 0 disables

  void validate() const;  // throws ConfigError on broken invariants
};

/// Desk-scale defaults (C = 16, 64x64 patches, tens of epochs).
TrainConfig desk_profile();
/// Paper-faithful hyperparameters (C = 64, 256x128 patching, 210 epochs).
TrainConfig paper_profile();
TrainConfig profile_by_name(const std::string& name);

/// "key = value" lines mirroring the field names; '#' starts a comment.
void apply_config_file(TrainConfig& cfg, const std::string& path);
void apply_config_kv(TrainConfig& cfg, const std::string& key, const std::string& value);

std::string config_to_text(const TrainConfig& cfg);

}  // namespace msff
