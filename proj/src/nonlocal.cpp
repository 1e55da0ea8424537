#include "dpdn/nonlocal.hpp"

#include <cmath>
#include <limits>

namespace dpdn {

Neighborhood Neighborhood::square(int side) {
  if (side < 3 || side % 2 == 0) {
    throw Error(ErrorCode::kConfig, "neighborhood side must be odd and >= 3, got " + std::to_string(side));
  }
  Neighborhood n;
  n.side_ = side;
  const int r = side / 2;
  for (int dy = -r; dy <= r; ++dy)
    for (int dx = -r; dx <= r; ++dx)
      if (dy != 0 || dx != 0) n.offsets_.push_back({dy, dx});
  return n;
}

Neighborhood Neighborhood::four_connected() {
  Neighborhood n;
  n.side_ = 3;
  n.offsets_ = {{-1, 0}, {0, -1}, {0, 1}, {1, 0}};
  return n;
}

std::vector<Real> proximity(const Neighborhood& nbh) {
  std::vector<Real> d;
  d.reserve(nbh.offsets().size());
  for (const auto& o : nbh.offsets()) d.push_back(std::sqrt(static_cast<Real>(o.dy * o.dy + o.dx * o.dx)));
  return d;
}

std::vector<Real> proximity(int side) { return proximity(Neighborhood::square(side)); }

Tensor affinity_from_intensity(const Image& g, const Neighborhood& nbh) {
  const int h = g.height;
  const int w = g.width;
  const int n = nbh.size();
  std::vector<Real> out(static_cast<std::size_t>(n) * h * w);
  for (int c = 0; c < n; ++c) {
    Real* dst = out.data() + static_cast<std::size_t>(c) * h * w;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        dst[y * w + x] = nbh.inside(c, y, x, h, w)
                             ? std::abs(g.at(y, x) - g.at(y + nbh[c].dy, x + nbh[c].dx))
                             : std::numeric_limits<Real>::infinity();
      }
    }
  }
  return Tensor::from_data({n, h, w}, std::move(out));
}

namespace {

void check_delta(const Tensor& delta_a, const Neighborhood& nbh) {
  if (delta_a.rank() != 3 || delta_a.dim(0) != nbh.size()) {
    throw Error(ErrorCode::kShape, "affinity tensor " + shape_str(delta_a.shape()) + " does not match a " +
                                       std::to_string(nbh.size()) + "-neighborhood");
  }
}

}  // namespace

Tensor support_weights(const Tensor& delta_a, const Neighborhood& nbh, const Tensor& sigma_d, const Tensor& sigma_v) {
  check_delta(delta_a, nbh);
  if (sigma_d.numel() != 1 || sigma_v.numel() != 1) throw Error(ErrorCode::kShape, "sigmas must be scalars");
  const Real sd = sigma_d.item();
  const Real sv = sigma_v.item();
  if (!(sd > 0) || !(sv > 0)) throw Error(ErrorCode::kConfig, "support weight sigmas must be positive");
  const int n = nbh.size();
  const int h = delta_a.dim(1);
  const int w = delta_a.dim(2);
  const std::vector<Real> dist = proximity(nbh);
  auto da = delta_a.data();
  std::vector<Real> out(da.size(), Real(0));
  for (int c = 0; c < n; ++c) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (!nbh.inside(c, y, x, h, w)) continue;
        const std::size_t i = (static_cast<std::size_t>(c) * h + y) * w + x;
        out[i] = std::exp(-dist[c] / sd - da[i] / sv);
      }
    }
  }
  auto weights = std::make_shared<std::vector<Real>>(out);
  return Tensor::make_op(
      delta_a.shape(), std::move(out), {delta_a, sigma_d, sigma_v},
      [delta_a, weights, dist, n, h, w, sd, sv](std::span<const Real> g, std::span<std::span<Real>> grads) {
        auto da = delta_a.data();
        const auto& wt = *weights;
        Real gsd = 0;
        Real gsv = 0;
        for (int c = 0; c < n; ++c) {
          const std::size_t base = static_cast<std::size_t>(c) * h * w;
          for (std::size_t k = 0; k < static_cast<std::size_t>(h) * w; ++k) {
            const std::size_t i = base + k;
            // Zero weights (outside the image or Δa = ∞) carry no gradient.
            if (wt[i] == 0) continue;
            const Real gw = g[i] * wt[i];
            if (!grads[0].empty()) grads[0][i] -= gw / sv;
            gsd += gw * dist[c];
            gsv += gw * da[i];
          }
        }
        if (!grads[1].empty()) grads[1][0] += gsd / (sd * sd);
        if (!grads[2].empty()) grads[2][0] += gsv / (sv * sv);
      });
}

WeightField support_weights(const Tensor& delta_a, const Neighborhood& nbh, Real sigma_d, Real sigma_v) {
  if (!(sigma_d > 0) || !(sigma_v > 0)) throw Error(ErrorCode::kConfig, "support weight sigmas must be positive");
  NoGradGuard no_grad;
  WeightField wf;
  wf.weights = support_weights(delta_a, nbh, Tensor::scalar(sigma_d), Tensor::scalar(sigma_v));
  wf.nbh = nbh;
  wf.sigma_d = sigma_d;
  wf.sigma_v = sigma_v;
  return wf;
}

WeightField zero_weights(const Neighborhood& nbh, int height, int width) {
  WeightField wf;
  wf.weights = Tensor::zeros({nbh.size(), height, width});
  wf.nbh = nbh;
  return wf;
}

}  // namespace dpdn
