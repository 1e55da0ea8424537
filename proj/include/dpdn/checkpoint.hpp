#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dpdn/config.hpp"
#include "dpdn/fcn.hpp"
#include "dpdn/pdn.hpp"

namespace dpdn {

// Binary layout, all integers and floats little-endian:
//   "DPDN" | u32 version | config blob | fcn blob | pdn blob | history blob
// Each blob is a u64 byte count followed by its payload. Parameters are stored
// as f64 regardless of the build precision.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  TrainConfig config;
  FcnParams fcn;
  PdnParams pdn;
  std::vector<double> loss_history;

  // He-initialized FCN with a zero output layer and default PDN parameters.
  static Checkpoint initial(const TrainConfig& config);
  // All FCN parameters zero; the PDN is initialized normally.
  static Checkpoint zero(const TrainConfig& config);

  Neighborhood neighborhood() const { return Neighborhood::square(config.side); }
  Checkpoint clone() const;
};

std::vector<std::uint8_t> serialize(const Checkpoint& ckpt);
Checkpoint deserialize(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace dpdn
