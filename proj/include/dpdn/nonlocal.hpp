#pragma once

#include <vector>

#include "dpdn/image.hpp"
#include "dpdn/tensor.hpp"

namespace dpdn {

struct Offset {
  int dy = 0;
  int dx = 0;
  bool operator==(const Offset&) const = default;
};

// Window of neighbors around each pixel, center excluded, row-major order.
class Neighborhood {
 public:
  // side×side window; side must be odd and ≥ 3.
  static Neighborhood square(int side);
  // The four direct neighbors (used by the local anisotropic TV baseline).
  static Neighborhood four_connected();

  int side() const { return side_; }
  int size() const { return static_cast<int>(offsets_.size()); }
  const std::vector<Offset>& offsets() const { return offsets_; }
  const Offset& operator[](int c) const { return offsets_[static_cast<std::size_t>(c)]; }

  // Whether the neighbor of (y, x) along channel c lies inside an h×w image.
  bool inside(int c, int y, int x, int h, int w) const {
    const int ny = y + offsets_[c].dy;
    const int nx = x + offsets_[c].dx;
    return ny >= 0 && ny < h && nx >= 0 && nx < w;
  }

  bool operator==(const Neighborhood&) const = default;

 private:
  int side_ = 0;
  std::vector<Offset> offsets_;
};

// Euclidean length of every offset of a side×side window.
std::vector<Real> proximity(int side);
std::vector<Real> proximity(const Neighborhood& nbh);

// |g(x) − g(x + offset_c)| per channel; +∞ where the neighbor leaves the image.
Tensor affinity_from_intensity(const Image& g, const Neighborhood& nbh);

// Per-pixel support weights, channel c holding w(x, x + offset_c).
struct WeightField {
  Tensor weights;  // |N|×H×W
  Neighborhood nbh;
  Real sigma_d = 1;
  Real sigma_v = 1;

  int height() const { return weights.dim(1); }
  int width() const { return weights.dim(2); }
};

// w = exp(−Δd/σd − Δa/σv), exactly 0 for neighbors outside the image.
WeightField support_weights(const Tensor& delta_a, const Neighborhood& nbh, Real sigma_d, Real sigma_v);

// Differentiable variant with scalar tensors σd, σv (gradients to Δa, σd, σv).
Tensor support_weights(const Tensor& delta_a, const Neighborhood& nbh, const Tensor& sigma_d, const Tensor& sigma_v);

// All-zero weights of matching shape.
WeightField zero_weights(const Neighborhood& nbh, int height, int width);

}  // namespace dpdn
