#include "dpdn/fcn.hpp"

#include <cmath>
#include <random>

namespace dpdn {

ModelInput make_model_input(const Sample& s) {
  if (s.d_mr.height != s.guidance.height || s.d_mr.width != s.guidance.width ||
      (!s.target.data.empty() && (s.target.height != s.d_mr.height || s.target.width != s.d_mr.width))) {
    throw Error(ErrorCode::kShape, "sample images differ in size");
  }
  ModelInput in;
  in.d_mr = s.d_mr.to_tensor();
  in.guidance = s.guidance.to_tensor();
  if (!s.target.data.empty()) in.target = s.target.to_tensor();
  return in;
}

namespace {

FcnParams make_params(int in_channels, int hidden, int affinity_channels, Real depth_scale) {
  if (in_channels != 1 && in_channels != 2) throw Error(ErrorCode::kConfig, "FCN input channels must be 1 or 2");
  if (hidden < 1 || affinity_channels < 0) throw Error(ErrorCode::kConfig, "invalid FCN widths");
  if (!(depth_scale > 0)) throw Error(ErrorCode::kConfig, "depth scale must be positive");
  FcnParams p;
  p.in_channels = in_channels;
  p.hidden = hidden;
  p.out_channels = 1 + affinity_channels;
  p.depth_scale = depth_scale;
  for (int l = 0; l < FcnParams::kLayers; ++l) {
    const int cin = l == 0 ? in_channels : hidden;
    const int cout = l + 1 == FcnParams::kLayers ? p.out_channels : hidden;
    p.layers.push_back({Tensor::zeros({cout, cin, 3, 3}, true), Tensor::zeros({cout}, true)});
  }
  return p;
}

}  // namespace

FcnParams FcnParams::zeros(int in_channels, int hidden, int affinity_channels, Real depth_scale) {
  return make_params(in_channels, hidden, affinity_channels, depth_scale);
}

FcnParams FcnParams::init(int in_channels, int hidden, int affinity_channels, Real depth_scale, std::uint64_t seed) {
  FcnParams p = make_params(in_channels, hidden, affinity_channels, depth_scale);
  std::mt19937_64 rng(seed);
  for (auto& layer : p.layers) {
    const int cin = layer.kernels.dim(1);
    std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / (9.0 * cin)));
    for (Real& v : layer.kernels.mutable_data()) v = static_cast<Real>(normal(rng));
  }
  return p;
}

std::vector<Tensor> FcnParams::parameters() const {
  std::vector<Tensor> out;
  for (const auto& l : layers) {
    out.push_back(l.kernels);
    out.push_back(l.bias);
  }
  return out;
}

FcnParams FcnParams::clone() const {
  FcnParams p = *this;
  for (auto& l : p.layers) {
    l.kernels = l.kernels.detach();
    l.kernels.set_requires_grad(true);
    l.bias = l.bias.detach();
    l.bias.set_requires_grad(true);
  }
  return p;
}

void FcnParams::validate() const {
  if (static_cast<int>(layers.size()) != kLayers) throw Error(ErrorCode::kConfig, "FCN must have 10 layers");
  for (int l = 0; l < kLayers; ++l) {
    const int cin = l == 0 ? in_channels : hidden;
    const int cout = l + 1 == kLayers ? out_channels : hidden;
    const Shape ks{cout, cin, 3, 3};
    if (layers[l].kernels.shape() != ks || layers[l].bias.shape() != Shape{cout}) {
      throw Error(ErrorCode::kShape, "FCN layer " + std::to_string(l) + " has kernels " +
                                         shape_str(layers[l].kernels.shape()) + ", expected " + shape_str(ks));
    }
  }
}

FcnOutput fcn_forward(const ModelInput& input, const FcnParams& params) {
  params.validate();
  const int h = input.height();
  const int w = input.width();
  if (input.guidance.shape() != input.d_mr.shape()) {
    throw Error(ErrorCode::kShape, "guidance " + shape_str(input.guidance.shape()) + " vs depth " +
                                       shape_str(input.d_mr.shape()));
  }
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  std::vector<Real> stacked(hw * params.in_channels);
  auto d = input.d_mr.data();
  for (std::size_t i = 0; i < hw; ++i) stacked[i] = d[i] / params.depth_scale;
  if (params.in_channels == 2) std::copy(input.guidance.data().begin(), input.guidance.data().end(), stacked.begin() + hw);

  Tensor x = Tensor::from_data({params.in_channels, h, w}, std::move(stacked));
  for (int l = 0; l < FcnParams::kLayers; ++l) {
    x = conv2d(x, params.layers[l].kernels, params.layers[l].bias);
    if (l + 1 < FcnParams::kLayers) x = relu(x);
  }
  FcnOutput out;
  out.residual = scale(channel_slice(x, 0, 1), params.depth_scale).reshape({h, w});
  out.affinity = scale(channel_slice(x, 1, params.affinity_channels()), params.depth_scale);
  return out;
}

Tensor fcn_depth(const ModelInput& input, const FcnOutput& out) { return add(input.d_mr, out.residual); }

Tensor fcn_depth(const ModelInput& input, const FcnParams& params) {
  return fcn_depth(input, fcn_forward(input, params));
}

Tensor pretrain_loss(const FcnOutput& out, const ModelInput& input, const Neighborhood& nbh, Real eps) {
  if (!input.target.defined()) throw Error(ErrorCode::kState, "pretrain loss needs a target");
  const int h = input.height();
  const int w = input.width();
  const int n = nbh.size();
  if (out.affinity.shape() != Shape{n, h, w}) {
    throw Error(ErrorCode::kShape, "affinity " + shape_str(out.affinity.shape()) + " does not match a " +
                                       std::to_string(n) + "-neighborhood on " + std::to_string(h) + "×" +
                                       std::to_string(w));
  }
  auto t = input.target.data();
  std::vector<Real> diff(static_cast<std::size_t>(n) * h * w, Real(0));
  std::vector<Real> mask(diff.size(), Real(0));
  for (int c = 0; c < n; ++c) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (!nbh.inside(c, y, x, h, w)) continue;
        const std::size_t i = (static_cast<std::size_t>(c) * h + y) * w + x;
        diff[i] = t[y * w + x] - t[(y + nbh[c].dy) * w + x + nbh[c].dx];
        mask[i] = 1;
      }
    }
  }
  const Tensor target_diff = Tensor::from_data({n, h, w}, std::move(diff));
  const Tensor inside = Tensor::from_data({n, h, w}, std::move(mask));
  Tensor depth_term = sse(fcn_depth(input, out), input.target);
  Tensor affinity_term = sum(mul(huber(sub(out.affinity, target_diff), eps), inside));
  return add(depth_term, affinity_term);
}

}  // namespace dpdn
