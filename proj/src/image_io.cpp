#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "dpdn/image.hpp"

namespace dpdn {

namespace {

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path);
  return in;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path);
  return out;
}

// Next whitespace-separated header token, skipping '#' comments.
std::string header_token(std::istream& in, const std::string& path) {
  std::string tok;
  while (true) {
    int c = in.peek();
    if (c == EOF) throw Error(ErrorCode::kIo, "truncated header in " + path);
    if (std::isspace(c)) {
      in.get();
    } else if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else {
      break;
    }
  }
  in >> tok;
  if (!in) throw Error(ErrorCode::kIo, "truncated header in " + path);
  return tok;
}

int header_int(std::istream& in, const std::string& path) {
  const std::string tok = header_token(in, path);
  try {
    std::size_t used = 0;
    int v = std::stoi(tok, &used);
    if (used != tok.size() || v <= 0) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::kIo, "bad header value '" + tok + "' in " + path);
  }
}

struct PfmData {
  int height = 0;
  int width = 0;
  std::vector<float> values;  // top row first
};

PfmData read_pfm_raw(const std::string& path) {
  auto in = open_in(path);
  const std::string magic = header_token(in, path);
  if (magic != "Pf") throw Error(ErrorCode::kIo, path + " is not a single-channel PFM");
  PfmData pfm;
  pfm.width = header_int(in, path);
  pfm.height = header_int(in, path);
  const std::string scale_tok = header_token(in, path);
  double scale = 0;
  try {
    scale = std::stod(scale_tok);
  } catch (const std::exception&) {
    throw Error(ErrorCode::kIo, "bad PFM scale in " + path);
  }
  if (scale == 0) throw Error(ErrorCode::kIo, "bad PFM scale in " + path);
  in.get();  // single whitespace before the raster
  const bool little = scale < 0;
  const std::size_t n = static_cast<std::size_t>(pfm.width) * pfm.height;
  std::vector<std::uint32_t> raw(n);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n * 4));
  if (in.gcount() != static_cast<std::streamsize>(n * 4)) throw Error(ErrorCode::kIo, "truncated raster in " + path);
  const bool swap = little != (std::endian::native == std::endian::little);
  pfm.values.resize(n);
  for (int y = 0; y < pfm.height; ++y) {
    // PFM rasters run bottom to top.
    const std::size_t src = static_cast<std::size_t>(pfm.height - 1 - y) * pfm.width;
    for (int x = 0; x < pfm.width; ++x) {
      std::uint32_t bits = raw[src + x];
      if (swap) bits = __builtin_bswap32(bits);
      pfm.values[static_cast<std::size_t>(y) * pfm.width + x] = std::bit_cast<float>(bits);
    }
  }
  return pfm;
}

void write_pfm_raw(const std::string& path, int height, int width, std::span<const Real> values) {
  auto out = open_out(path);
  out << "Pf\n" << width << ' ' << height << "\n-1.0\n";
  std::vector<std::uint32_t> raw(values.size());
  for (int y = 0; y < height; ++y) {
    const std::size_t dst = static_cast<std::size_t>(height - 1 - y) * width;
    for (int x = 0; x < width; ++x) {
      std::uint32_t bits = std::bit_cast<std::uint32_t>(static_cast<float>(values[static_cast<std::size_t>(y) * width + x]));
      if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
      raw[dst + x] = bits;
    }
  }
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size() * 4));
  if (!out) throw Error(ErrorCode::kIo, "failed writing " + path);
}

}  // namespace

Image read_pfm(const std::string& path) {
  PfmData pfm = read_pfm_raw(path);
  Image img(pfm.height, pfm.width);
  for (std::size_t i = 0; i < img.size(); ++i) img.data[i] = static_cast<Real>(pfm.values[i]);
  return img;
}

void write_pfm(const std::string& path, const Image& img) { write_pfm_raw(path, img.height, img.width, img.data); }

void write_pfm_stack(const std::string& path, const Tensor& t) {
  if (t.rank() != 3) throw Error(ErrorCode::kShape, "pfm stack needs a C×H×W tensor, got " + shape_str(t.shape()));
  write_pfm_raw(path, t.dim(0) * t.dim(1), t.dim(2), t.data());
}

Tensor read_pfm_stack(const std::string& path, int channels) {
  PfmData pfm = read_pfm_raw(path);
  if (channels < 1 || pfm.height % channels != 0) {
    throw Error(ErrorCode::kShape, path + ": height " + std::to_string(pfm.height) + " is not a multiple of " +
                                       std::to_string(channels) + " channels");
  }
  std::vector<Real> values(pfm.values.begin(), pfm.values.end());
  return Tensor::from_data({channels, pfm.height / channels, pfm.width}, std::move(values));
}

Image read_pgm16(const std::string& path, double scale) {
  auto in = open_in(path);
  if (header_token(in, path) != "P5") throw Error(ErrorCode::kIo, path + " is not a binary PGM");
  const int w = header_int(in, path);
  const int h = header_int(in, path);
  const int maxval = header_int(in, path);
  in.get();
  Image img(h, w);
  const int bytes = maxval > 255 ? 2 : 1;
  std::vector<unsigned char> raw(img.size() * bytes);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size())) throw Error(ErrorCode::kIo, "truncated raster in " + path);
  for (std::size_t i = 0; i < img.size(); ++i) {
    // PGM samples are big-endian.
    const unsigned v = bytes == 2 ? (unsigned(raw[2 * i]) << 8) | raw[2 * i + 1] : raw[i];
    img.data[i] = static_cast<Real>(v * scale);
  }
  return img;
}

void write_pgm16(const std::string& path, const Image& img, double scale) {
  if (!(scale > 0)) throw Error(ErrorCode::kConfig, "PGM depth scale must be positive");
  auto out = open_out(path);
  out << "P5\n" << img.width << ' ' << img.height << "\n65535\n";
  std::vector<unsigned char> raw(img.size() * 2);
  for (std::size_t i = 0; i < img.size(); ++i) {
    const double v = std::clamp(std::round(img.data[i] / scale), 0.0, 65535.0);
    const auto u = static_cast<unsigned>(v);
    raw[2 * i] = static_cast<unsigned char>(u >> 8);
    raw[2 * i + 1] = static_cast<unsigned char>(u & 0xff);
  }
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
}

std::vector<std::uint8_t> read_mask_pgm(const std::string& path, int* height, int* width) {
  auto in = open_in(path);
  if (header_token(in, path) != "P5") throw Error(ErrorCode::kIo, path + " is not a binary PGM");
  const int w = header_int(in, path);
  const int h = header_int(in, path);
  const int maxval = header_int(in, path);
  if (maxval > 255) throw Error(ErrorCode::kIo, path + " is not an 8-bit mask");
  in.get();
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(w) * h);
  in.read(reinterpret_cast<char*>(mask.data()), static_cast<std::streamsize>(mask.size()));
  if (in.gcount() != static_cast<std::streamsize>(mask.size())) throw Error(ErrorCode::kIo, "truncated raster in " + path);
  for (auto& v : mask) v = v != 0;
  if (height) *height = h;
  if (width) *width = w;
  return mask;
}

void write_mask_pgm(const std::string& path, const std::vector<std::uint8_t>& mask, int height, int width) {
  if (mask.size() != static_cast<std::size_t>(height) * width) throw Error(ErrorCode::kShape, "mask size mismatch");
  auto out = open_out(path);
  out << "P5\n" << width << ' ' << height << "\n255\n";
  for (auto v : mask) out.put(static_cast<char>(v ? 255 : 0));
}

}  // namespace dpdn
