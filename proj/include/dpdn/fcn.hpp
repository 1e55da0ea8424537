#pragma once

#include <cstdint>
#include <vector>

#include "dpdn/image.hpp"
#include "dpdn/nonlocal.hpp"
#include "dpdn/tensor.hpp"

namespace dpdn {

// Sample images as H×W tensors (depth in its original units).
struct ModelInput {
  Tensor d_mr;
  Tensor guidance;
  Tensor target;  // undefined when the sample has no target

  int height() const { return d_mr.dim(0); }
  int width() const { return d_mr.dim(1); }
};

ModelInput make_model_input(const Sample& s);

struct ConvLayer {
  Tensor kernels;  // O×C×3×3
  Tensor bias;     // O
};

// Ten 3×3 conv layers with ReLU after the first nine. The network sees depth
// divided by `depth_scale` and its outputs are multiplied back by it, so the
// residual and affinities come out in depth units.
struct FcnParams {
  static constexpr int kLayers = 10;

  int in_channels = 2;  // (d_mr, guidance), or 1 for depth only
  int hidden = 64;
  int out_channels = 1;  // residual + |N| affinity channels
  Real depth_scale = 1;
  std::vector<ConvLayer> layers;

  // Zero-mean Gaussian kernels with std √(2/(9·C_in)), zero biases.
  static FcnParams init(int in_channels, int hidden, int affinity_channels, Real depth_scale, std::uint64_t seed);
  static FcnParams zeros(int in_channels, int hidden, int affinity_channels, Real depth_scale);

  int affinity_channels() const { return out_channels - 1; }
  int receptive_field() const { return 2 * static_cast<int>(layers.size()) + 1; }
  std::vector<Tensor> parameters() const;
  FcnParams clone() const;
  void validate() const;
};

struct FcnOutput {
  Tensor residual;  // H×W
  Tensor affinity;  // |N|×H×W, signed
};

FcnOutput fcn_forward(const ModelInput& input, const FcnParams& params);
// d_mr + residual.
Tensor fcn_depth(const ModelInput& input, const FcnOutput& out);
Tensor fcn_depth(const ModelInput& input, const FcnParams& params);

// Σ‖fcn_d − t‖² + Σ_x Σ_{y∈N(x)} |A(x, y) − (t(x) − t(y))|_ε, out-of-image pairs omitted.
Tensor pretrain_loss(const FcnOutput& out, const ModelInput& input, const Neighborhood& nbh, Real eps);

}  // namespace dpdn
