#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dpdn/config.hpp"
#include "dpdn/image.hpp"

namespace dpdn {

enum class Split { kTrain, kVal, kTest };

const char* split_name(Split s);
Split parse_split(const std::string& name);

// Index i of `count` falls in train for i < ⌊train·count⌋, then val for the
// next ⌊val·count⌋ indices, then test.
Split split_for(int index, int count, double train_fraction, double val_fraction);

struct Dataset {
  int scale = 4;
  double noise_c = 0;
  int height = 0;
  int width = 0;
  std::vector<Sample> samples;
  std::vector<std::uint64_t> seeds;
  std::vector<Split> splits;

  std::size_t size() const { return samples.size(); }
  std::vector<int> indices(Split s) const;
};

// Scene i uses seed cfg.seed + i; its noise stream is derived from that seed.
Dataset generate_dataset(const TrainConfig& cfg);
Sample generate_sample(const GenConfig& gen, std::uint64_t scene_seed, int scale, double noise_c);

// Directory layout: manifest.txt plus sample_NNNNN_{target,guidance,lr}.pfm.
// PFM stores 32-bit floats, so values read back are rounded to float.
void write_dataset(const std::string& dir, const Dataset& ds, const TrainConfig& cfg);
Dataset read_dataset(const std::string& dir);

// FNV-1a over the bytes of `text`.
std::uint64_t fnv1a(const std::string& text);

}  // namespace dpdn
