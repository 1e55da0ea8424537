#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "dpdn/image.hpp"

namespace dpdn {

struct Vec3 {
  double x = 0, y = 0, z = 0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  double norm() const;
  Vec3 normalized() const;
  bool operator==(const Vec3&) const = default;
};

// Rotation (row-major 3×3) followed by translation: world = R·local + t.
struct Pose {
  std::array<double, 9> rotation{1, 0, 0, 0, 1, 0, 0, 0, 1};
  Vec3 translation;

  Vec3 to_world_dir(const Vec3& v) const;
  Vec3 to_local_dir(const Vec3& v) const;
  Vec3 to_local_point(const Vec3& p) const { return to_local_dir(p - translation); }
  bool operator==(const Pose&) const = default;
};

enum class ShapeKind { kCube, kSphere, kPlane };
enum class TextureKind { kChecker, kStripes, kValueNoise, kConstant };

struct TextureSpec {
  TextureKind kind = TextureKind::kConstant;
  double scale = 1;     // pattern period in object units
  double contrast = 0;  // peak-to-peak amplitude
  double base = 0.5;    // mean albedo
  std::uint64_t seed = 0;

  // Albedo in [0, 1] at an object-local point.
  double evaluate(const Vec3& local) const;
  bool operator==(const TextureSpec&) const = default;
};

// Cubes use `size` as half edge length, spheres as radius, planes as half
// side length of a square in the local xy plane (infinite when `infinite`).
struct SceneObject {
  ShapeKind shape = ShapeKind::kSphere;
  Pose pose;
  double size = 1;
  bool infinite = false;
  TextureSpec texture;
  bool operator==(const SceneObject&) const = default;
};

struct Light {
  Vec3 direction{0, 0, -1};  // unit vector from surfaces towards the light
  double intensity = 1;
  bool operator==(const Light&) const = default;
};

// Pinhole camera; rays leave `pose.translation` along R·((x+0.5−cx)/f, (y+0.5−cy)/f, 1).
struct Camera {
  Pose pose;
  double focal = 128;
  int width = 128;
  int height = 128;
  double cx = 64;
  double cy = 64;
  bool operator==(const Camera&) const = default;
};

struct SceneDescription {
  std::vector<SceneObject> objects;
  std::vector<Light> lights;
  Camera camera;

  void validate() const;
  bool operator==(const SceneDescription&) const = default;
};

struct Range {
  double lo = 0;
  double hi = 0;
};

struct GenConfig {
  int width = 256;
  int height = 256;
  double focal_factor = 1.0;  // focal length in units of image width
  int min_objects = 3;
  int max_objects = 8;
  std::vector<ShapeKind> shapes{ShapeKind::kCube, ShapeKind::kSphere, ShapeKind::kPlane};
  std::vector<TextureKind> textures{TextureKind::kChecker, TextureKind::kStripes, TextureKind::kValueNoise,
                                    TextureKind::kConstant};
  Range object_depth{40, 80};
  Range object_size{4, 12};
  Range background_depth{90, 110};
  double background_tilt = 0.25;  // max tilt of the background normal, radians
  Range texture_scale{1, 6};
  Range texture_contrast{0.2, 0.8};
  Range texture_base{0.3, 0.7};
  int min_lights = 1;
  int max_lights = 2;
  double light_jitter = 0.5;  // max deviation of light directions from the view axis, radians
  Range light_intensity{0.6, 1.0};

  void validate() const;
  // Stable text form, used for manifest hashing.
  std::string to_string() const;
};

SceneDescription sample_scene(std::uint64_t seed, const GenConfig& cfg);

struct RenderResult {
  Image depth;                    // z-distance of the nearest hit
  Image intensity;                // albedo × Lambertian shading in [0, 1]
  std::vector<int> object_id;     // index of the hit object per pixel
};

RenderResult render(const SceneDescription& scene);

// target = depth, guidance = intensity, d_lr = box-downsample + noise,
// d_mr = bilinear upsample of d_lr.
Sample make_sample(const SceneDescription& scene, int scale, double noise_c, std::uint64_t seed);
Sample make_sample(const RenderResult& rendered, int scale, double noise_c, std::uint64_t seed);

}  // namespace dpdn
