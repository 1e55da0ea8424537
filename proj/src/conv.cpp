#include <Eigen/Core>

#include <algorithm>
#include <vector>

#include "dpdn/tensor.hpp"

namespace dpdn {

namespace {

using RowMatrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using Map = Eigen::Map<RowMatrix>;

// Rows are (channel, ky, kx), columns are output pixels; zero padding of 1.
// Writes into a per-thread scratch buffer that is reused across calls.
ConstMap im2col(std::span<const Real> in, int channels, int h, int w, std::vector<Real>& buffer) {
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  buffer.resize(static_cast<std::size_t>(channels) * 9 * hw);
  for (int c = 0; c < channels; ++c) {
    const Real* src = in.data() + c * hw;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        Real* dst = buffer.data() + static_cast<std::size_t>(c * 9 + ky * 3 + kx) * hw;
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - 1;
          Real* row = dst + static_cast<std::size_t>(y) * w;
          if (sy < 0 || sy >= h) {
            std::fill(row, row + w, Real(0));
            continue;
          }
          const Real* srow = src + static_cast<std::size_t>(sy) * w;
          if (kx == 0) {
            row[0] = 0;
            std::copy(srow, srow + w - 1, row + 1);
          } else if (kx == 1) {
            std::copy(srow, srow + w, row);
          } else {
            std::copy(srow + 1, srow + w, row);
            row[w - 1] = 0;
          }
        }
      }
    }
  }
  return ConstMap(buffer.data(), channels * 9, static_cast<Eigen::Index>(hw));
}

std::vector<Real>& scratch() {
  thread_local std::vector<Real> buffer;
  return buffer;
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias) {
  if (input.rank() != 3 || kernels.rank() != 4 || bias.rank() != 1 || kernels.dim(2) != 3 || kernels.dim(3) != 3 ||
      kernels.dim(1) != input.dim(0) || bias.dim(0) != kernels.dim(0)) {
    throw Error(ErrorCode::kShape, "conv2d: input " + shape_str(input.shape()) + ", kernels " +
                                       shape_str(kernels.shape()) + ", bias " + shape_str(bias.shape()));
  }
  const int channels = input.dim(0);
  const int h = input.dim(1);
  const int w = input.dim(2);
  const int outputs = kernels.dim(0);
  const int hw = h * w;

  std::vector<Real> out(static_cast<std::size_t>(outputs) * hw);
  {
    const ConstMap col = im2col(input.data(), channels, h, w, scratch());
    ConstMap k(kernels.data().data(), outputs, channels * 9);
    Map o(out.data(), outputs, hw);
    o.noalias() = k * col;
    auto b = bias.data();
    for (int i = 0; i < outputs; ++i) o.row(i).array() += b[i];
  }

  return Tensor::make_op(
      {outputs, h, w}, std::move(out), {input, kernels, bias},
      [input, kernels, channels, h, w, outputs, hw](std::span<const Real> g, std::span<std::span<Real>> grads) {
        ConstMap gm(g.data(), outputs, hw);
        if (!grads[2].empty()) {
          for (int i = 0; i < outputs; ++i) grads[2][i] += gm.row(i).sum();
        }
        if (!grads[1].empty()) {
          const ConstMap col = im2col(input.data(), channels, h, w, scratch());
          Map dk(grads[1].data(), outputs, channels * 9);
          dk.noalias() += gm * col.transpose();
        }
        if (!grads[0].empty()) {
          // The input gradient is a convolution of g with the kernels
          // transposed over channels and rotated by 180 degrees.
          auto k = kernels.data();
          RowMatrix flipped(channels, outputs * 9);
          for (int o = 0; o < outputs; ++o) {
            for (int c = 0; c < channels; ++c) {
              for (int t = 0; t < 9; ++t) flipped(c, o * 9 + t) = k[(static_cast<std::size_t>(o) * channels + c) * 9 + 8 - t];
            }
          }
          const ConstMap gcol = im2col(g, outputs, h, w, scratch());
          Map dx(grads[0].data(), channels, hw);
          dx.noalias() += flipped * gcol;
        }
      });
}

}  // namespace dpdn
