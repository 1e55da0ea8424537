#include "dpdn/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dpdn/scene.hpp"

namespace dpdn {

namespace {

constexpr int kManifestVersion = 1;

std::uint64_t noise_seed(std::uint64_t scene_seed) {
  std::uint64_t z = scene_seed + 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

std::string sample_path(const std::string& dir, int i, const char* kind) {
  char name[64];
  std::snprintf(name, sizeof name, "sample_%05d_%s.pfm", i, kind);
  return (std::filesystem::path(dir) / name).string();
}

}  // namespace

const char* split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "?";
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "val") return Split::kVal;
  if (name == "test") return Split::kTest;
  throw Error(ErrorCode::kIo, "unknown split '" + name + "'");
}

Split split_for(int index, int count, double train_fraction, double val_fraction) {
  const int n_train = static_cast<int>(std::floor(train_fraction * count + 1e-9));
  const int n_val = static_cast<int>(std::floor(val_fraction * count + 1e-9));
  if (index < n_train) return Split::kTrain;
  if (index < n_train + n_val) return Split::kVal;
  return Split::kTest;
}

std::vector<int> Dataset::indices(Split s) const {
  std::vector<int> out;
  for (std::size_t i = 0; i < splits.size(); ++i) {
    if (splits[i] == s) out.push_back(static_cast<int>(i));
  }
  return out;
}

Sample generate_sample(const GenConfig& gen, std::uint64_t scene_seed, int scale, double noise_c) {
  return make_sample(sample_scene(scene_seed, gen), scale, noise_c, noise_seed(scene_seed));
}

Dataset generate_dataset(const TrainConfig& cfg) {
  cfg.validate();
  const GenConfig gen = cfg.gen_config();
  Dataset ds;
  ds.scale = cfg.scale;
  ds.noise_c = cfg.noise_c;
  ds.height = gen.height;
  ds.width = gen.width;
  for (int i = 0; i < cfg.gen_count; ++i) {
    const std::uint64_t seed = cfg.seed + static_cast<std::uint64_t>(i);
    ds.samples.push_back(generate_sample(gen, seed, cfg.scale, cfg.noise_c));
    ds.seeds.push_back(seed);
    ds.splits.push_back(split_for(i, cfg.gen_count, cfg.split_train, cfg.split_val));
  }
  return ds;
}

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

void write_dataset(const std::string& dir, const Dataset& ds, const TrainConfig& cfg) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create " + dir + ": " + ec.message());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const Sample& s = ds.samples[i];
    write_pfm(sample_path(dir, static_cast<int>(i), "target"), s.target);
    write_pfm(sample_path(dir, static_cast<int>(i), "guidance"), s.guidance);
    write_pfm(sample_path(dir, static_cast<int>(i), "lr"), s.d_lr);
  }
  const std::string path = (std::filesystem::path(dir) / "manifest.txt").string();
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path);
  char hash[32];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(fnv1a(cfg.to_string())));
  out << "version " << kManifestVersion << "\n";
  out << "config_hash " << hash << "\n";
  out << "scale " << ds.scale << "\n";
  char noise[40];
  std::snprintf(noise, sizeof noise, "%.17g", ds.noise_c);
  out << "noise_c " << noise << "\n";
  out << "height " << ds.height << "\n";
  out << "width " << ds.width << "\n";
  out << "count " << ds.size() << "\n";
  for (std::size_t i = 0; i < ds.size(); ++i) {
    out << "sample " << i << " " << ds.seeds[i] << " " << split_name(ds.splits[i]) << "\n";
  }
  if (!out) throw Error(ErrorCode::kIo, "failed writing " + path);
}

Dataset read_dataset(const std::string& dir) {
  const std::string path = (std::filesystem::path(dir) / "manifest.txt").string();
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open dataset manifest " + path);
  Dataset ds;
  int version = -1;
  std::size_t count = 0;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key)) continue;
    if (key == "version") {
      ls >> version;
    } else if (key == "config_hash") {
      std::string ignored;
      ls >> ignored;
    } else if (key == "scale") {
      ls >> ds.scale;
    } else if (key == "noise_c") {
      ls >> ds.noise_c;
    } else if (key == "height") {
      ls >> ds.height;
    } else if (key == "width") {
      ls >> ds.width;
    } else if (key == "count") {
      ls >> count;
    } else if (key == "sample") {
      std::size_t index = 0;
      std::uint64_t seed = 0;
      std::string split;
      ls >> index >> seed >> split;
      if (!ls || index != ds.seeds.size()) throw Error(ErrorCode::kIo, "bad manifest line: " + line);
      ds.seeds.push_back(seed);
      ds.splits.push_back(parse_split(split));
    } else {
      throw Error(ErrorCode::kIo, "unknown manifest key '" + key + "'");
    }
    if (!ls) throw Error(ErrorCode::kIo, "bad manifest line: " + line);
  }
  if (version != kManifestVersion) throw Error(ErrorCode::kIo, "unsupported manifest version in " + path);
  if (count != ds.seeds.size()) throw Error(ErrorCode::kIo, "manifest count does not match its sample lines");
  if (count == 0) throw Error(ErrorCode::kIo, "dataset " + dir + " is empty");
  for (std::size_t i = 0; i < count; ++i) {
    Sample s;
    s.scale = ds.scale;
    s.target = read_pfm(sample_path(dir, static_cast<int>(i), "target"));
    s.guidance = read_pfm(sample_path(dir, static_cast<int>(i), "guidance"));
    s.d_lr = read_pfm(sample_path(dir, static_cast<int>(i), "lr"));
    if (s.target.height != ds.height || s.target.width != ds.width || s.guidance.height != ds.height ||
        s.guidance.width != ds.width || s.d_lr.height * ds.scale != ds.height || s.d_lr.width * ds.scale != ds.width) {
      throw Error(ErrorCode::kIo, "sample " + std::to_string(i) + " dimensions disagree with the manifest");
    }
    s.d_mr = bilinear_resize(s.d_lr, ds.height, ds.width);
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

}  // namespace dpdn
