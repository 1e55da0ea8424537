#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <map>

#include "dpdn/scene.hpp"

using namespace dpdn;

namespace {

SceneObject background_plane(double z) {
  SceneObject p;
  p.shape = ShapeKind::kPlane;
  p.infinite = true;
  p.size = 1;
  p.pose.translation = {0, 0, z};
  p.texture.kind = TextureKind::kConstant;
  p.texture.base = 0.5;
  return p;
}

Camera camera(int w, int h) {
  Camera c;
  c.width = w;
  c.height = h;
  c.focal = w;
  c.cx = w / 2.0;
  c.cy = h / 2.0;
  return c;
}

SceneDescription sphere_scene(Vec3 center, double radius) {
  SceneDescription s;
  s.camera = camera(64, 48);
  s.objects.push_back(background_plane(200));
  SceneObject sphere;
  sphere.shape = ShapeKind::kSphere;
  sphere.size = radius;
  sphere.pose.translation = center;
  sphere.texture.kind = TextureKind::kChecker;
  sphere.texture.scale = 2;
  sphere.texture.contrast = 0.5;
  s.objects.push_back(sphere);
  s.lights.push_back(Light{});
  return s;
}

// Nearest positive root of |t·d − c|² = r² for a ray from the origin.
double ray_sphere(const Vec3& d, const Vec3& c, double r) {
  const double a = d.dot(d);
  const double b = -2 * d.dot(c);
  const double cc = c.dot(c) - r * r;
  const double disc = b * b - 4 * a * cc;
  if (disc < 0) return -1;
  return (-b - std::sqrt(disc)) / (2 * a);
}

bool same_bytes(const Image& a, const Image& b) {
  return a.data.size() == b.data.size() &&
         std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(Real)) == 0;
}

}  // namespace

TEST(Render, PlaneFacingCameraHasConstantDepth) {
  SceneDescription s;
  s.camera = camera(16, 16);
  s.objects.push_back(background_plane(5));
  s.lights.push_back(Light{});
  const RenderResult r = render(s);
  for (Real d : r.depth.data) EXPECT_NEAR(d, 5, 1e-12);
}

TEST(Render, SphereOnAxisCenterDepth) {
  SceneDescription s = sphere_scene({0, 0, 10}, 1);
  s.camera = camera(17, 17);
  s.camera.cx = 8.5;
  s.camera.cy = 8.5;
  const RenderResult r = render(s);
  EXPECT_NEAR(r.depth.at(8, 8), 9, 1e-12);
}

TEST(Render, SphereMatchesAnalyticIntersection) {
  const Vec3 c{3, -2, 50};
  const double radius = 10;
  const SceneDescription s = sphere_scene(c, radius);
  const RenderResult r = render(s);
  int hits = 0;
  for (int y = 0; y < s.camera.height; ++y) {
    for (int x = 0; x < s.camera.width; ++x) {
      const Vec3 d{(x + 0.5 - s.camera.cx) / s.camera.focal, (y + 0.5 - s.camera.cy) / s.camera.focal, 1};
      const double t = ray_sphere(d, c, radius);
      const bool analytic_hit = t > 0;
      const bool rendered_hit = r.object_id[r.depth.index(y, x)] == 1;
      EXPECT_EQ(analytic_hit, rendered_hit) << "pixel " << y << "," << x;
      if (analytic_hit && rendered_hit) {
        EXPECT_NEAR(r.depth.at(y, x), t, 1e-6);
        ++hits;
      }
    }
  }
  EXPECT_GT(hits, 100);
}

TEST(Render, RangesAndDeterminism) {
  GenConfig cfg;
  cfg.width = 48;
  cfg.height = 32;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const RenderResult a = render(sample_scene(seed, cfg));
    const RenderResult b = render(sample_scene(seed, cfg));
    EXPECT_TRUE(same_bytes(a.depth, b.depth));
    EXPECT_TRUE(same_bytes(a.intensity, b.intensity));
    for (Real d : a.depth.data) EXPECT_GT(d, 0);
    for (Real v : a.intensity.data) {
      EXPECT_GE(v, 0);
      EXPECT_LE(v, 1);
    }
  }
}

// A step counts as a discontinuity when it exceeds 10% of the nearer depth and
// is more than twice the steps on either side along the same line (so image
// borders are skipped); steep but
// smooth surfaces seen at grazing angles then do not qualify.
TEST(Render, DepthDiscontinuitiesLieOnSilhouettes) {
  GenConfig cfg;
  cfg.width = 64;
  cfg.height = 64;
  int checked = 0;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const RenderResult r = render(sample_scene(seed, cfg));
    const Image& d = r.depth;
    auto id = [&](int y, int x) { return r.object_id[d.index(y, x)]; };
    auto inside = [&](int y, int x) { return y >= 0 && y < d.height && x >= 0 && x < d.width; };
    auto silhouette = [&](int y, int x) {
      for (auto [dy, dx] : {std::pair{0, 1}, {0, -1}, {1, 0}, {-1, 0}}) {
        if (inside(y + dy, x + dx) && id(y + dy, x + dx) != id(y, x)) return true;
      }
      return false;
    };
    auto step = [&](int y, int x, int dy, int dx) {
      if (!inside(y, x) || !inside(y + dy, x + dx)) return 0.0;
      return std::abs(static_cast<double>(d.at(y + dy, x + dx) - d.at(y, x)));
    };
    for (int y = 0; y < d.height; ++y) {
      for (int x = 0; x < d.width; ++x) {
        for (auto [dy, dx] : {std::pair{0, 1}, {1, 0}}) {
          if (!inside(y - dy, x - dx) || !inside(y + 2 * dy, x + 2 * dx)) continue;
          const double jump = step(y, x, dy, dx);
          const double nearer = std::min(d.at(y, x), d.at(y + dy, x + dx));
          const double around = std::max(step(y - dy, x - dx, dy, dx), step(y + dy, x + dx, dy, dx));
          if (jump > 0.1 * nearer && jump > 2 * around) {
            ++checked;
            EXPECT_TRUE(silhouette(y, x) || silhouette(y + dy, x + dx))
                << "seed " << seed << " at " << y << "," << x;
          }
        }
      }
    }
  }
  EXPECT_GT(checked, 100);
}

TEST(SampleScene, SameSeedSameScene) {
  GenConfig cfg;
  EXPECT_EQ(sample_scene(42, cfg), sample_scene(42, cfg));
  EXPECT_FALSE(sample_scene(42, cfg) == sample_scene(43, cfg));
}

TEST(SampleScene, SingleSphereConfig) {
  GenConfig cfg;
  cfg.min_objects = 1;
  cfg.max_objects = 1;
  cfg.shapes = {ShapeKind::kSphere};
  const SceneDescription s = sample_scene(9, cfg);
  int spheres = 0;
  for (const auto& o : s.objects) {
    if (!o.infinite) {
      EXPECT_EQ(o.shape, ShapeKind::kSphere);
      ++spheres;
    }
  }
  EXPECT_EQ(spheres, 1);
  s.validate();
}

TEST(SampleScene, ObjectCountHistogramIsUniform) {
  GenConfig cfg;
  std::map<int, int> hist;
  const int n = 1000;
  for (int seed = 0; seed < n; ++seed) {
    const SceneDescription s = sample_scene(static_cast<std::uint64_t>(seed), cfg);
    int count = 0;
    for (const auto& o : s.objects) count += o.infinite ? 0 : 1;
    ++hist[count];
  }
  const int bins = cfg.max_objects - cfg.min_objects + 1;
  EXPECT_EQ(static_cast<int>(hist.size()), bins);
  for (auto [count, freq] : hist) {
    EXPECT_GE(count, cfg.min_objects);
    EXPECT_LE(count, cfg.max_objects);
    EXPECT_NEAR(static_cast<double>(freq) / n, 1.0 / bins, 0.1) << "count " << count;
  }
  // Pearson statistic against the uniform law; 20.5 is the 0.999 quantile of χ² with 5 degrees of freedom.
  ASSERT_EQ(bins, 6);
  double chi2 = 0;
  for (auto [count, freq] : hist) chi2 += (freq - n / 6.0) * (freq - n / 6.0) / (n / 6.0);
  EXPECT_LT(chi2, 20.5);
}

TEST(SampleScene, EmptyRangeIsConfigError) {
  GenConfig cfg;
  cfg.object_size = {5, 2};
  try {
    sample_scene(1, cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kConfig);
  }
  GenConfig none;
  none.shapes.clear();
  EXPECT_THROW(sample_scene(1, none), Error);
}

TEST(SceneDescription, ValidateRequiresBackgroundAndLight) {
  SceneDescription s = sphere_scene({0, 0, 20}, 2);
  EXPECT_NO_THROW(s.validate());
  SceneDescription no_light = s;
  no_light.lights.clear();
  EXPECT_THROW(no_light.validate(), Error);
  SceneDescription no_bg = s;
  no_bg.objects.erase(no_bg.objects.begin());
  EXPECT_THROW(no_bg.validate(), Error);
}

TEST(MakeSample, NoiselessIdentities) {
  SceneDescription flat;
  flat.camera = camera(32, 32);
  flat.objects.push_back(background_plane(70));
  flat.lights.push_back(Light{});
  for (int scale : {1, 2, 4, 8}) {
    const Sample s = make_sample(flat, scale, 0, 1);
    for (std::size_t i = 0; i < s.target.size(); ++i) EXPECT_EQ(s.d_mr.data[i], s.target.data[i]);
  }
  GenConfig cfg;
  cfg.width = 32;
  cfg.height = 32;
  const Sample s1 = make_sample(sample_scene(5, cfg), 1, 0, 1);
  EXPECT_EQ(s1.d_mr.data, s1.target.data);
}

TEST(MakeSample, NoisyIsReproducible) {
  GenConfig cfg;
  cfg.width = 32;
  cfg.height = 32;
  const SceneDescription scene = sample_scene(6, cfg);
  const Sample a = make_sample(scene, 4, 651, 10);
  const Sample b = make_sample(scene, 4, 651, 10);
  EXPECT_GT(rmse(a.d_mr, a.target), 0);
  EXPECT_TRUE(same_bytes(a.d_mr, b.d_mr));
  EXPECT_EQ(a.d_lr.height, 8);
  try {
    make_sample(scene, 3, 651, 10);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kConfig);
  }
}
