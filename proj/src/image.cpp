#include "dpdn/image.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace dpdn {

Image::Image(int h, int w, Real value) : height(h), width(w), data(static_cast<std::size_t>(h) * w, value) {}

Image Image::from_tensor(const Tensor& t) {
  int h = 0;
  int w = 0;
  if (t.rank() == 2) {
    h = t.dim(0);
    w = t.dim(1);
  } else if (t.rank() == 3 && t.dim(0) == 1) {
    h = t.dim(1);
    w = t.dim(2);
  } else {
    throw Error(ErrorCode::kShape, "cannot view tensor " + shape_str(t.shape()) + " as an image");
  }
  Image img;
  img.height = h;
  img.width = w;
  img.data.assign(t.data().begin(), t.data().end());
  return img;
}

Tensor Image::to_tensor(Real scale) const {
  std::vector<Real> values(data);
  if (scale != 1) {
    for (Real& v : values) v *= scale;
  }
  return Tensor::from_data({height, width}, std::move(values));
}

ProjectionMatrix ProjectionMatrix::downscale(int factor) {
  if (factor < 1) throw Error(ErrorCode::kDomain, "projection downscale factor must be >= 1");
  const double s = 1.0 / factor;
  const double off = 0.5 * s - 0.5;
  ProjectionMatrix p;
  p.m = {s, 0, off, 0, 0, s, off, 0, 0, 0, 1, 0};
  return p;
}

void ProjectionMatrix::validate() const {
  for (double v : m) {
    if (!std::isfinite(v)) throw Error(ErrorCode::kDomain, "projection matrix has non-finite entries");
  }
  const auto& a = *this;
  const double det = a(0, 0) * (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1)) -
                     a(0, 1) * (a(1, 0) * a(2, 2) - a(1, 2) * a(2, 0)) +
                     a(0, 2) * (a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0));
  if (std::abs(det) < 1e-12) throw Error(ErrorCode::kDomain, "projection matrix is degenerate");
}

Image bilinear_resize(const Image& img, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1 || img.height < 1 || img.width < 1) {
    throw Error(ErrorCode::kShape, "bilinear_resize from " + std::to_string(img.height) + "×" +
                                       std::to_string(img.width) + " to " + std::to_string(out_h) + "×" +
                                       std::to_string(out_w));
  }
  // Source index and weight of the upper/left tap for every output row/column.
  auto taps = [](int in, int out) {
    std::vector<std::pair<int, double>> t(out);
    const double s = static_cast<double>(in) / out;
    for (int i = 0; i < out; ++i) {
      double src = std::clamp((i + 0.5) * s - 0.5, 0.0, static_cast<double>(in - 1));
      int i0 = std::min(static_cast<int>(std::floor(src)), in - 1);
      t[i] = {i0, src - i0};
    }
    return t;
  };
  const auto ty = taps(img.height, out_h);
  const auto tx = taps(img.width, out_w);

  Image out(out_h, out_w);
  for (int y = 0; y < out_h; ++y) {
    const auto [y0, fy] = ty[y];
    const int y1 = std::min(y0 + 1, img.height - 1);
    for (int x = 0; x < out_w; ++x) {
      const auto [x0, fx] = tx[x];
      const int x1 = std::min(x0 + 1, img.width - 1);
      const double top = img.at(y0, x0) + fx * (img.at(y0, x1) - img.at(y0, x0));
      const double bottom = img.at(y1, x0) + fx * (img.at(y1, x1) - img.at(y1, x0));
      out.at(y, x) = static_cast<Real>(fy == 0 ? top : top + fy * (bottom - top));
    }
  }
  return out;
}

Image box_downsample(const Image& img, int factor) {
  if (factor < 1 || img.height % factor != 0 || img.width % factor != 0) {
    throw Error(ErrorCode::kConfig, "scale " + std::to_string(factor) + " does not divide " +
                                        std::to_string(img.height) + "×" + std::to_string(img.width));
  }
  Image out(img.height / factor, img.width / factor);
  const double norm = 1.0 / (factor * factor);
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      // Deviations from the first sample keep constant blocks exact.
      const double ref = img.at(y * factor, x * factor);
      double s = 0;
      for (int dy = 0; dy < factor; ++dy)
        for (int dx = 0; dx < factor; ++dx) s += img.at(y * factor + dy, x * factor + dx) - ref;
      out.at(y, x) = static_cast<Real>(ref + s * norm);
    }
  }
  return out;
}

Image add_depth_noise(const Image& depth, double c, std::uint64_t seed) {
  if (c < 0) throw Error(ErrorCode::kDomain, "noise constant must be non-negative");
  for (std::size_t i = 0; i < depth.size(); ++i) {
    if ((depth.mask.empty() || depth.mask[i]) && !(depth.data[i] > 0)) {
      throw Error(ErrorCode::kDomain, "depth noise requires positive depth at every valid pixel");
    }
  }
  Image out = depth;
  if (c == 0) return out;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!out.mask.empty() && !out.mask[i]) continue;
    out.data[i] = static_cast<Real>(out.data[i] + std::sqrt(c / out.data[i]) * normal(rng));
  }
  return out;
}

Image project_depth(const Image& hr, const ProjectionMatrix& P, int lr_h, int lr_w) {
  P.validate();
  if (lr_h < 1 || lr_w < 1) throw Error(ErrorCode::kShape, "projection target must be non-empty");
  std::vector<double> acc(static_cast<std::size_t>(lr_h) * lr_w, 0.0);
  std::vector<int> count(acc.size(), 0);
  for (int y = 0; y < hr.height; ++y) {
    for (int x = 0; x < hr.width; ++x) {
      if (!hr.valid(y, x)) continue;
      const double d = hr.at(y, x);
      if (!(d > 0)) continue;
      const double px = x * d;
      const double py = y * d;
      const double s = P(2, 0) * px + P(2, 1) * py + P(2, 2) * d + P(2, 3);
      if (!(s > 0)) continue;
      const double u = (P(0, 0) * px + P(0, 1) * py + P(0, 2) * d + P(0, 3)) / s;
      const double v = (P(1, 0) * px + P(1, 1) * py + P(1, 2) * d + P(1, 3)) / s;
      const double lx = std::floor(u + 0.5);
      const double ly = std::floor(v + 0.5);
      if (lx < 0 || ly < 0 || lx >= lr_w || ly >= lr_h) continue;
      const std::size_t i = static_cast<std::size_t>(ly) * lr_w + static_cast<std::size_t>(lx);
      acc[i] += d;
      count[i] += 1;
    }
  }
  Image out(lr_h, lr_w);
  out.mask.assign(out.size(), 0);
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (count[i] > 0) {
      out.data[i] = static_cast<Real>(acc[i] / count[i]);
      out.mask[i] = 1;
    }
  }
  return out;
}

namespace {

// Linear interpolation along one line between the nearest valid samples,
// constant extrapolation past the ends. Returns false if the line has no
// valid sample. `get(i)`/`ok(i)` read the line, `put(i, v)` writes a result.
template <class Get, class Ok, class Put>
bool fill_line(int n, Get get, Ok ok, Put put) {
  int prev = -1;
  int first = -1;
  for (int i = 0; i < n; ++i) {
    if (!ok(i)) continue;
    if (first < 0) first = i;
    if (prev >= 0 && i - prev > 1) {
      const double a = get(prev);
      const double b = get(i);
      for (int k = prev + 1; k < i; ++k) put(k, a + (b - a) * (k - prev) / double(i - prev));
    }
    prev = i;
  }
  if (first < 0) return false;
  for (int k = 0; k < first; ++k) put(k, get(first));
  for (int k = prev + 1; k < n; ++k) put(k, get(prev));
  return true;
}

}  // namespace

Image fill_sparse_bilinear(const Image& sparse) {
  const int h = sparse.height;
  const int w = sparse.width;
  std::vector<std::uint8_t> valid = sparse.mask.empty() ? std::vector<std::uint8_t>(sparse.size(), 1) : sparse.mask;
  if (std::none_of(valid.begin(), valid.end(), [](std::uint8_t v) { return v != 0; })) {
    throw Error(ErrorCode::kDomain, "sparse fill needs at least one valid pixel");
  }
  Image out = sparse;
  out.mask.clear();
  const std::size_t n = out.size();
  std::vector<double> row_val(n), col_val(n);
  std::vector<std::uint8_t> row_ok(n), col_ok(n);

  // Each round fills every hole that shares a row or a column with a valid
  // pixel; holes in empty rows and columns are reached in the next round.
  while (std::any_of(valid.begin(), valid.end(), [](std::uint8_t v) { return v == 0; })) {
    std::fill(row_ok.begin(), row_ok.end(), 0);
    std::fill(col_ok.begin(), col_ok.end(), 0);
    for (int y = 0; y < h; ++y) {
      const std::size_t base = static_cast<std::size_t>(y) * w;
      fill_line(
          w, [&](int x) { return double(out.data[base + x]); }, [&](int x) { return valid[base + x] != 0; },
          [&](int x, double v) {
            row_val[base + x] = v;
            row_ok[base + x] = 1;
          });
    }
    for (int x = 0; x < w; ++x) {
      auto idx = [&](int y) { return static_cast<std::size_t>(y) * w + x; };
      fill_line(
          h, [&](int y) { return double(out.data[idx(y)]); }, [&](int y) { return valid[idx(y)] != 0; },
          [&](int y, double v) {
            col_val[idx(y)] = v;
            col_ok[idx(y)] = 1;
          });
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (valid[i]) continue;
      if (row_ok[i] && col_ok[i]) {
        out.data[i] = static_cast<Real>(0.5 * (row_val[i] + col_val[i]));
      } else if (row_ok[i]) {
        out.data[i] = static_cast<Real>(row_val[i]);
      } else if (col_ok[i]) {
        out.data[i] = static_cast<Real>(col_val[i]);
      }
    }
    for (std::size_t i = 0; i < n; ++i) valid[i] = valid[i] || row_ok[i] || col_ok[i];
  }
  return out;
}

double rmse(const Image& a, const Image& b, const std::vector<std::uint8_t>* mask) {
  if (a.height != b.height || a.width != b.width) {
    throw Error(ErrorCode::kShape, "rmse of " + std::to_string(a.height) + "×" + std::to_string(a.width) + " and " +
                                       std::to_string(b.height) + "×" + std::to_string(b.width));
  }
  if (mask && mask->size() != a.size()) throw Error(ErrorCode::kShape, "rmse mask size mismatch");
  double s = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (mask && !(*mask)[i]) continue;
    const double d = static_cast<double>(a.data[i]) - b.data[i];
    s += d * d;
    ++n;
  }
  if (n == 0) throw Error(ErrorCode::kDomain, "rmse over an empty mask");
  return std::sqrt(s / static_cast<double>(n));
}

}  // namespace dpdn
