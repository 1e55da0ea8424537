#include "dpdn/scene.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

namespace dpdn {

double Vec3::norm() const { return std::sqrt(dot(*this)); }

Vec3 Vec3::normalized() const {
  const double n = norm();
  return n > 0 ? *this * (1.0 / n) : *this;
}

Vec3 Pose::to_world_dir(const Vec3& v) const {
  const auto& r = rotation;
  return {r[0] * v.x + r[1] * v.y + r[2] * v.z, r[3] * v.x + r[4] * v.y + r[5] * v.z,
          r[6] * v.x + r[7] * v.y + r[8] * v.z};
}

Vec3 Pose::to_local_dir(const Vec3& v) const {
  const auto& r = rotation;
  return {r[0] * v.x + r[3] * v.y + r[6] * v.z, r[1] * v.x + r[4] * v.y + r[7] * v.z,
          r[2] * v.x + r[5] * v.y + r[8] * v.z};
}

namespace {

constexpr double kLatticeOffset = 0.37;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double lattice_value(std::int64_t i, std::int64_t j, std::int64_t k, std::uint64_t seed) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ static_cast<std::uint64_t>(i));
  h = splitmix64(h ^ static_cast<std::uint64_t>(j));
  h = splitmix64(h ^ static_cast<std::uint64_t>(k));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double value_noise(const Vec3& p, std::uint64_t seed) {
  const double fx = std::floor(p.x), fy = std::floor(p.y), fz = std::floor(p.z);
  const auto i = static_cast<std::int64_t>(fx), j = static_cast<std::int64_t>(fy), k = static_cast<std::int64_t>(fz);
  auto smooth = [](double t) { return t * t * (3 - 2 * t); };
  const double tx = smooth(p.x - fx), ty = smooth(p.y - fy), tz = smooth(p.z - fz);
  auto lerp = [](double a, double b, double t) { return a + (b - a) * t; };
  double c[2][2];
  for (int dy = 0; dy < 2; ++dy)
    for (int dz = 0; dz < 2; ++dz)
      c[dy][dz] = lerp(lattice_value(i, j + dy, k + dz, seed), lattice_value(i + 1, j + dy, k + dz, seed), tx);
  return lerp(lerp(c[0][0], c[1][0], ty), lerp(c[0][1], c[1][1], ty), tz);
}

struct Ray {
  Vec3 origin;
  Vec3 dir;
};

struct Hit {
  double t = std::numeric_limits<double>::infinity();
  Vec3 normal;  // world space, facing the ray origin
  Vec3 local;   // object-local hit point
};

constexpr double kMinT = 1e-9;

bool intersect_sphere(const SceneObject& obj, const Ray& ray, Hit& hit) {
  const Vec3 oc = ray.origin - obj.pose.translation;
  const double a = ray.dir.dot(ray.dir);
  const double b = 2 * ray.dir.dot(oc);
  const double c = oc.dot(oc) - obj.size * obj.size;
  const double disc = b * b - 4 * a * c;
  if (disc < 0) return false;
  const double sq = std::sqrt(disc);
  double t = (-b - sq) / (2 * a);
  if (t <= kMinT) t = (-b + sq) / (2 * a);
  if (t <= kMinT || t >= hit.t) return false;
  const Vec3 p = ray.origin + ray.dir * t;
  hit.t = t;
  hit.normal = (p - obj.pose.translation).normalized();
  hit.local = obj.pose.to_local_point(p);
  return true;
}

bool intersect_cube(const SceneObject& obj, const Ray& ray, Hit& hit) {
  const Vec3 o = obj.pose.to_local_point(ray.origin);
  const Vec3 d = obj.pose.to_local_dir(ray.dir);
  const double s = obj.size;
  double t0 = -std::numeric_limits<double>::infinity();
  double t1 = std::numeric_limits<double>::infinity();
  int axis0 = -1, axis1 = -1;
  const double oo[3] = {o.x, o.y, o.z};
  const double dd[3] = {d.x, d.y, d.z};
  for (int a = 0; a < 3; ++a) {
    if (std::abs(dd[a]) < 1e-15) {
      if (oo[a] < -s || oo[a] > s) return false;
      continue;
    }
    double ta = (-s - oo[a]) / dd[a];
    double tb = (s - oo[a]) / dd[a];
    if (ta > tb) std::swap(ta, tb);
    if (ta > t0) {
      t0 = ta;
      axis0 = a;
    }
    if (tb < t1) {
      t1 = tb;
      axis1 = a;
    }
    if (t0 > t1) return false;
  }
  double t = t0;
  int axis = axis0;
  if (t <= kMinT) {
    t = t1;
    axis = axis1;
  }
  if (t <= kMinT || t >= hit.t || axis < 0) return false;
  Vec3 n_local{axis == 0 ? 1.0 : 0.0, axis == 1 ? 1.0 : 0.0, axis == 2 ? 1.0 : 0.0};
  Vec3 n = obj.pose.to_world_dir(n_local);
  if (n.dot(ray.dir) > 0) n = n * -1.0;
  hit.t = t;
  hit.normal = n;
  hit.local = o + d * t;
  return true;
}

bool intersect_plane(const SceneObject& obj, const Ray& ray, Hit& hit) {
  const Vec3 o = obj.pose.to_local_point(ray.origin);
  const Vec3 d = obj.pose.to_local_dir(ray.dir);
  if (std::abs(d.z) < 1e-15) return false;
  const double t = -o.z / d.z;
  if (t <= kMinT || t >= hit.t) return false;
  const Vec3 p = o + d * t;
  if (!obj.infinite && (std::abs(p.x) > obj.size || std::abs(p.y) > obj.size)) return false;
  Vec3 n = obj.pose.to_world_dir({0, 0, 1});
  if (n.dot(ray.dir) > 0) n = n * -1.0;
  hit.t = t;
  hit.normal = n;
  hit.local = p;
  return true;
}

double uniform(std::mt19937_64& rng, const Range& r) {
  return std::uniform_real_distribution<double>(r.lo, r.hi)(rng);
}

// Uniformly distributed rotation from a random unit quaternion.
std::array<double, 9> random_rotation(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const double u1 = u01(rng), u2 = u01(rng), u3 = u01(rng);
  const double pi2 = 2 * std::numbers::pi;
  const double a = std::sqrt(1 - u1), b = std::sqrt(u1);
  const double w = a * std::sin(pi2 * u2), x = a * std::cos(pi2 * u2);
  const double y = b * std::sin(pi2 * u3), z = b * std::cos(pi2 * u3);
  return {1 - 2 * (y * y + z * z), 2 * (x * y - z * w),     2 * (x * z + y * w),
          2 * (x * y + z * w),     1 - 2 * (x * x + z * z), 2 * (y * z - x * w),
          2 * (x * z - y * w),     2 * (y * z + x * w),     1 - 2 * (x * x + y * y)};
}

// Rotation by `angle` about the unit axis (cos φ, sin φ, 0).
std::array<double, 9> tilt_rotation(double angle, double phi) {
  const double ux = std::cos(phi), uy = std::sin(phi);
  const double c = std::cos(angle), s = std::sin(angle), C = 1 - c;
  return {c + ux * ux * C, ux * uy * C,     uy * s,   //
          uy * ux * C,     c + uy * uy * C, -ux * s,  //
          -uy * s,         ux * s,          c};
}

void check_range(const Range& r, const char* name) {
  if (!(r.lo <= r.hi) || !std::isfinite(r.lo) || !std::isfinite(r.hi)) {
    throw Error(ErrorCode::kConfig, std::string("empty or invalid range for ") + name);
  }
}

const char* shape_name(ShapeKind k) {
  switch (k) {
    case ShapeKind::kCube: return "cube";
    case ShapeKind::kSphere: return "sphere";
    case ShapeKind::kPlane: return "plane";
  }
  return "?";
}

const char* texture_name(TextureKind k) {
  switch (k) {
    case TextureKind::kChecker: return "checker";
    case TextureKind::kStripes: return "stripes";
    case TextureKind::kValueNoise: return "noise";
    case TextureKind::kConstant: return "constant";
  }
  return "?";
}

}  // namespace

double TextureSpec::evaluate(const Vec3& local) const {
  const Vec3 p = local * (1.0 / scale) + Vec3{kLatticeOffset, kLatticeOffset, kLatticeOffset};
  double pattern = 0.5;
  switch (kind) {
    case TextureKind::kChecker: {
      const auto s = static_cast<std::int64_t>(std::floor(p.x) + std::floor(p.y) + std::floor(p.z));
      pattern = (s & 1) ? 1.0 : 0.0;
      break;
    }
    case TextureKind::kStripes:
      pattern = (static_cast<std::int64_t>(std::floor(p.x)) & 1) ? 1.0 : 0.0;
      break;
    case TextureKind::kValueNoise:
      pattern = value_noise(p, seed);
      break;
    case TextureKind::kConstant:
      break;
  }
  return std::clamp(base + contrast * (pattern - 0.5), 0.0, 1.0);
}

void SceneDescription::validate() const {
  if (objects.empty()) throw Error(ErrorCode::kConfig, "scene needs at least one object");
  if (lights.empty()) throw Error(ErrorCode::kConfig, "scene needs at least one light");
  bool background = false;
  for (const auto& o : objects) {
    if (!(o.size > 0)) throw Error(ErrorCode::kConfig, "object sizes must be positive");
    if (!(o.texture.scale > 0)) throw Error(ErrorCode::kConfig, "texture scale must be positive");
    background = background || (o.shape == ShapeKind::kPlane && o.infinite);
  }
  if (!background) throw Error(ErrorCode::kConfig, "scene needs an infinite background plane");
  if (camera.width < 1 || camera.height < 1 || !(camera.focal > 0)) {
    throw Error(ErrorCode::kConfig, "invalid camera");
  }
}

void GenConfig::validate() const {
  if (width < 1 || height < 1 || !(focal_factor > 0)) throw Error(ErrorCode::kConfig, "invalid render resolution");
  if (min_objects < 0 || min_objects > max_objects) throw Error(ErrorCode::kConfig, "empty object count range");
  if (max_objects > 0 && shapes.empty()) throw Error(ErrorCode::kConfig, "empty shape set");
  if (textures.empty()) throw Error(ErrorCode::kConfig, "empty texture set");
  if (min_lights < 1 || min_lights > max_lights) throw Error(ErrorCode::kConfig, "empty light count range");
  check_range(object_depth, "object depth");
  check_range(object_size, "object size");
  check_range(background_depth, "background depth");
  check_range(texture_scale, "texture scale");
  check_range(texture_contrast, "texture contrast");
  check_range(texture_base, "texture base");
  check_range(light_intensity, "light intensity");
  if (!(object_size.lo > 0) || !(texture_scale.lo > 0) || !(object_depth.lo > 0) || !(background_depth.lo > 0)) {
    throw Error(ErrorCode::kConfig, "sizes, depths and texture scales must be positive");
  }
}

std::string GenConfig::to_string() const {
  std::ostringstream os;
  os.precision(17);
  auto range = [&](const char* name, const Range& r) { os << name << '=' << r.lo << ',' << r.hi << '\n'; };
  os << "width=" << width << "\nheight=" << height << "\nfocal_factor=" << focal_factor << "\nobjects=" << min_objects
     << ',' << max_objects << "\nshapes=";
  for (auto s : shapes) os << shape_name(s) << ' ';
  os << "\ntextures=";
  for (auto t : textures) os << texture_name(t) << ' ';
  os << '\n';
  range("object_depth", object_depth);
  range("object_size", object_size);
  range("background_depth", background_depth);
  os << "background_tilt=" << background_tilt << '\n';
  range("texture_scale", texture_scale);
  range("texture_contrast", texture_contrast);
  range("texture_base", texture_base);
  os << "lights=" << min_lights << ',' << max_lights << "\nlight_jitter=" << light_jitter << '\n';
  range("light_intensity", light_intensity);
  return os.str();
}

SceneDescription sample_scene(std::uint64_t seed, const GenConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  SceneDescription scene;
  scene.camera.width = cfg.width;
  scene.camera.height = cfg.height;
  scene.camera.focal = cfg.focal_factor * cfg.width;
  scene.camera.cx = cfg.width / 2.0;
  scene.camera.cy = cfg.height / 2.0;

  auto random_texture = [&]() {
    TextureSpec t;
    t.kind = cfg.textures[std::uniform_int_distribution<std::size_t>(0, cfg.textures.size() - 1)(rng)];
    t.scale = uniform(rng, cfg.texture_scale);
    t.contrast = uniform(rng, cfg.texture_contrast);
    t.base = uniform(rng, cfg.texture_base);
    t.seed = rng();
    return t;
  };

  SceneObject background;
  background.shape = ShapeKind::kPlane;
  background.infinite = true;
  background.size = 1;
  background.pose.translation = {0, 0, uniform(rng, cfg.background_depth)};
  background.pose.rotation = tilt_rotation(uniform(rng, {0, cfg.background_tilt}),
                                           uniform(rng, {0, 2 * std::numbers::pi}));
  background.texture = random_texture();
  scene.objects.push_back(background);

  const int count = std::uniform_int_distribution<int>(cfg.min_objects, cfg.max_objects)(rng);
  const double half_w = 0.5 * cfg.width / scene.camera.focal;
  const double half_h = 0.5 * cfg.height / scene.camera.focal;
  for (int i = 0; i < count; ++i) {
    SceneObject obj;
    obj.shape = cfg.shapes[std::uniform_int_distribution<std::size_t>(0, cfg.shapes.size() - 1)(rng)];
    const double z = uniform(rng, cfg.object_depth);
    const double x = uniform(rng, {-0.9, 0.9}) * half_w * z;
    const double y = uniform(rng, {-0.9, 0.9}) * half_h * z;
    obj.pose.translation = {x, y, z};
    obj.pose.rotation = random_rotation(rng);
    obj.size = uniform(rng, cfg.object_size);
    obj.texture = random_texture();
    scene.objects.push_back(obj);
  }

  const int lights = std::uniform_int_distribution<int>(cfg.min_lights, cfg.max_lights)(rng);
  for (int i = 0; i < lights; ++i) {
    const double theta = uniform(rng, {0, cfg.light_jitter});
    const double phi = uniform(rng, {0, 2 * std::numbers::pi});
    Light l;
    l.direction = Vec3{std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi), -std::cos(theta)};
    l.intensity = uniform(rng, cfg.light_intensity);
    scene.lights.push_back(l);
  }
  return scene;
}

RenderResult render(const SceneDescription& scene) {
  scene.validate();
  const Camera& cam = scene.camera;
  RenderResult out;
  out.depth = Image(cam.height, cam.width);
  out.intensity = Image(cam.height, cam.width);
  out.object_id.assign(out.depth.size(), -1);

  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      Ray ray;
      ray.origin = cam.pose.translation;
      ray.dir = cam.pose.to_world_dir({(x + 0.5 - cam.cx) / cam.focal, (y + 0.5 - cam.cy) / cam.focal, 1.0});
      Hit hit;
      int id = -1;
      for (std::size_t k = 0; k < scene.objects.size(); ++k) {
        const SceneObject& obj = scene.objects[k];
        bool h = false;
        switch (obj.shape) {
          case ShapeKind::kSphere: h = intersect_sphere(obj, ray, hit); break;
          case ShapeKind::kCube: h = intersect_cube(obj, ray, hit); break;
          case ShapeKind::kPlane: h = intersect_plane(obj, ray, hit); break;
        }
        if (h) id = static_cast<int>(k);
      }
      if (id < 0) throw Error(ErrorCode::kDomain, "camera ray missed all geometry");
      double shade = 0;
      for (const auto& l : scene.lights) shade += std::max(0.0, hit.normal.dot(l.direction)) * l.intensity;
      const double albedo = scene.objects[id].texture.evaluate(hit.local);
      const std::size_t i = out.depth.index(y, x);
      // Camera-frame direction has unit z, so the ray parameter is the z-depth.
      out.depth.data[i] = static_cast<Real>(hit.t);
      out.intensity.data[i] = static_cast<Real>(std::clamp(albedo * shade, 0.0, 1.0));
      out.object_id[i] = id;
    }
  }
  return out;
}

Sample make_sample(const RenderResult& rendered, int scale, double noise_c, std::uint64_t seed) {
  const Image& target = rendered.depth;
  if (scale < 1 || target.height % scale != 0 || target.width % scale != 0) {
    throw Error(ErrorCode::kConfig, "scale " + std::to_string(scale) + " does not divide the render resolution " +
                                        std::to_string(target.height) + "×" + std::to_string(target.width));
  }
  Sample s;
  s.scale = scale;
  s.target = target;
  s.guidance = rendered.intensity;
  s.d_lr = add_depth_noise(box_downsample(target, scale), noise_c, seed);
  s.d_mr = bilinear_resize(s.d_lr, target.height, target.width);
  return s;
}

Sample make_sample(const SceneDescription& scene, int scale, double noise_c, std::uint64_t seed) {
  return make_sample(render(scene), scale, noise_c, seed);
}

}  // namespace dpdn
