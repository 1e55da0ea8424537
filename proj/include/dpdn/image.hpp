#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dpdn/tensor.hpp"

namespace dpdn {

// Single-channel float image, row-major. The optional mask marks valid
// pixels (1) and holes (0).
struct Image {
  int height = 0;
  int width = 0;
  std::vector<Real> data;
  std::vector<std::uint8_t> mask;

  Image() = default;
  Image(int h, int w, Real value = 0);

  static Image from_tensor(const Tensor& t);

  std::size_t size() const { return data.size(); }
  bool has_mask() const { return !mask.empty(); }
  bool valid(int y, int x) const { return mask.empty() || mask[index(y, x)] != 0; }
  std::size_t index(int y, int x) const { return static_cast<std::size_t>(y) * width + x; }
  Real& at(int y, int x) { return data[index(y, x)]; }
  Real at(int y, int x) const { return data[index(y, x)]; }

  // Shape (height, width).
  Tensor to_tensor(Real scale = 1) const;

  bool operator==(const Image&) const = default;
};

// One training / evaluation instance.
struct Sample {
  Image d_lr;
  Image d_mr;
  Image guidance;
  Image target;
  int scale = 1;
};

// Maps homogeneous HR camera points (x·d, y·d, d, 1), with (x, y) the HR pixel
// and d its depth, to LR sensor coordinates (u, v, s) → (u/s, v/s).
struct ProjectionMatrix {
  std::array<double, 12> m{1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0};

  static ProjectionMatrix identity() { return {}; }
  // LR pixel centers of a ρ-times coarser grid: u = (x + 0.5)/ρ − 0.5.
  static ProjectionMatrix downscale(int factor);

  double operator()(int r, int c) const { return m[static_cast<std::size_t>(r) * 4 + c]; }
  void validate() const;
};

Image bilinear_resize(const Image& img, int out_h, int out_w);
// Average over non-overlapping factor×factor blocks.
Image box_downsample(const Image& img, int factor);
// d + η with η ~ N(0, c/d) per valid pixel.
Image add_depth_noise(const Image& depth, double c, std::uint64_t seed);
Image project_depth(const Image& hr, const ProjectionMatrix& P, int lr_h, int lr_w);
Image fill_sparse_bilinear(const Image& sparse);
double rmse(const Image& a, const Image& b, const std::vector<std::uint8_t>* mask = nullptr);

// Portable float map, single channel, written little-endian (scale −1).
Image read_pfm(const std::string& path);
void write_pfm(const std::string& path, const Image& img);
// Stacks a C×H×W tensor vertically into a (C·H)×W map.
void write_pfm_stack(const std::string& path, const Tensor& t);
Tensor read_pfm_stack(const std::string& path, int channels);
// 16-bit PGM depth; stored values are multiplied by `scale`.
Image read_pgm16(const std::string& path, double scale);
void write_pgm16(const std::string& path, const Image& img, double scale);
// 8-bit mask PGM (0 = invalid).
std::vector<std::uint8_t> read_mask_pgm(const std::string& path, int* height = nullptr, int* width = nullptr);
void write_mask_pgm(const std::string& path, const std::vector<std::uint8_t>& mask, int height, int width);

}  // namespace dpdn
