#pragma once

#include <cstdint>
#include <string>

#include "dpdn/scene.hpp"

namespace dpdn {

// Plain-text configuration, one `key = value` per line, '#' starts a comment.
// Unknown keys are rejected.
struct TrainConfig {
  std::string dataset;
  int scale = 4;
  std::uint64_t seed = 1;
  double depth_scale = 50;  // divides depth before it enters the FCN
  int side = 7;
  int hidden = 64;
  bool depth_only = false;

  int pretrain_epochs = 25;
  double pretrain_lr = 1e-3;
  double pretrain_momentum = 0.9;
  double pretrain_eps = 0.01;

  int joint_epochs = 10;
  double joint_lr = 1e-4;
  double joint_momentum = 0.9;
  double clip_norm = 0;  // global gradient norm bound for both phases, 0 disables

  int pdn_iters = 20;
  double lambda0 = 1;
  double eps0 = 0.01;
  double sigma_d = 1;
  double sigma_v = 1;
  int nlh_iters = 20;  // fixed-parameter solver used by the fcn+nlh mode

  int patch = 0;  // 0 trains on whole images
  double split_train = 0.8;
  double split_val = 0.1;
  std::string log;  // CSV path, empty disables

  double noise_c = 651;
  int gen_count = 200;
  int gen_width = 256;
  int gen_height = 256;
  int gen_min_objects = 3;
  int gen_max_objects = 8;

  void validate() const;
  GenConfig gen_config() const;

  std::string to_string() const;
  static TrainConfig parse(const std::string& text);
  static TrainConfig load(const std::string& path);

  bool operator==(const TrainConfig&) const = default;
};

// Applies one `key = value` assignment; throws E_CONFIG on unknown keys or bad values.
void set_config_value(TrainConfig& cfg, const std::string& key, const std::string& value);

}  // namespace dpdn
