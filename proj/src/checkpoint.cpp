#include "dpdn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace dpdn {

Checkpoint Checkpoint::initial(const TrainConfig& config) {
  config.validate();
  Checkpoint c;
  c.config = config;
  const Neighborhood nbh = c.neighborhood();
  c.fcn = FcnParams::init(config.depth_only ? 1 : 2, config.hidden, nbh.size(), config.depth_scale, config.seed);
  // A zero output layer starts training from fcn_depth = d_mr and A = 0.
  for (Real& v : c.fcn.layers.back().kernels.mutable_data()) v = 0;
  c.pdn = PdnParams::init(config.pdn_iters, nbh, config.lambda0, config.eps0, config.sigma_d, config.sigma_v);
  return c;
}

Checkpoint Checkpoint::zero(const TrainConfig& config) {
  Checkpoint c = initial(config);
  c.fcn = FcnParams::zeros(c.fcn.in_channels, c.fcn.hidden, c.fcn.affinity_channels(), c.fcn.depth_scale);
  return c;
}

Checkpoint Checkpoint::clone() const {
  Checkpoint c;
  c.config = config;
  c.fcn = fcn.clone();
  c.pdn = pdn.clone();
  c.loss_history = loss_history;
  return c;
}

namespace {

class Writer {
 public:
  void u32(std::uint32_t v) { put_le(v); }
  void u64(std::uint64_t v) { put_le(v); }
  void i32(std::int32_t v) { put_le(static_cast<std::uint32_t>(v)); }
  void f64(double v) { put_le(std::bit_cast<std::uint64_t>(v)); }
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out.insert(out.end(), b, b + n);
  }
  void blob(const Writer& inner) {
    u64(inner.out.size());
    out.insert(out.end(), inner.out.begin(), inner.out.end());
  }
  void tensor(const Tensor& t) {
    i32(t.rank());
    for (int d : t.shape()) i32(d);
    for (Real v : t.data()) f64(static_cast<double>(v));
  }

  std::vector<std::uint8_t> out;

 private:
  template <class T>
  void put_le(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
};

class Reader {
 public:
  Reader(const std::uint8_t* data, std::size_t size) : p_(data), end_(data + size) {}

  std::uint32_t u32() { return get_le<std::uint32_t>(); }
  std::uint64_t u64() { return get_le<std::uint64_t>(); }
  std::int32_t i32() { return static_cast<std::int32_t>(get_le<std::uint32_t>()); }
  double f64() { return std::bit_cast<double>(get_le<std::uint64_t>()); }
  Reader blob() {
    const std::uint64_t n = u64();
    need(n);
    Reader r(p_, n);
    p_ += n;
    return r;
  }
  std::string str() {
    std::string s(reinterpret_cast<const char*>(p_), reinterpret_cast<const char*>(end_));
    p_ = end_;
    return s;
  }
  Tensor tensor(bool requires_grad) {
    const int rank = i32();
    if (rank < 0 || rank > 8) throw Error(ErrorCode::kIo, "corrupt checkpoint tensor rank");
    Shape shape(rank);
    for (auto& d : shape) {
      d = i32();
      if (d < 0) throw Error(ErrorCode::kIo, "corrupt checkpoint tensor shape");
    }
    const std::size_t n = shape_numel(shape);
    need(n * 8);
    std::vector<Real> values(n);
    for (auto& v : values) v = static_cast<Real>(f64());
    return Tensor::from_data(std::move(shape), std::move(values), requires_grad);
  }
  bool done() const { return p_ == end_; }

 private:
  void need(std::size_t n) const {
    if (static_cast<std::size_t>(end_ - p_) < n) throw Error(ErrorCode::kIo, "truncated checkpoint");
  }
  template <class T>
  T get_le() {
    need(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(p_[i]) << (8 * i);
    p_ += sizeof(T);
    return v;
  }

  const std::uint8_t* p_;
  const std::uint8_t* end_;
};

}  // namespace

std::vector<std::uint8_t> serialize(const Checkpoint& ckpt) {
  Writer w;
  w.bytes("DPDN", 4);
  w.u32(Checkpoint::kVersion);

  Writer config;
  const std::string text = ckpt.config.to_string();
  config.bytes(text.data(), text.size());
  w.blob(config);

  Writer fcn;
  fcn.i32(ckpt.fcn.in_channels);
  fcn.i32(ckpt.fcn.hidden);
  fcn.i32(ckpt.fcn.out_channels);
  fcn.f64(ckpt.fcn.depth_scale);
  fcn.i32(static_cast<std::int32_t>(ckpt.fcn.layers.size()));
  for (const auto& l : ckpt.fcn.layers) {
    fcn.tensor(l.kernels);
    fcn.tensor(l.bias);
  }
  w.blob(fcn);

  Writer pdn;
  pdn.i32(ckpt.pdn.iters);
  for (int n = 0; n < ckpt.pdn.iters; ++n) {
    pdn.f64(ckpt.pdn.log_tau[n].item());
    pdn.f64(ckpt.pdn.log_sigma[n].item());
    pdn.f64(ckpt.pdn.lambda[n].item());
    pdn.f64(ckpt.pdn.log_eps[n].item());
  }
  pdn.f64(ckpt.pdn.log_sigma_d.item());
  pdn.f64(ckpt.pdn.log_sigma_v.item());
  w.blob(pdn);

  Writer hist;
  hist.u64(ckpt.loss_history.size());
  for (double v : ckpt.loss_history) hist.f64(v);
  w.blob(hist);
  return w.out;
}

Checkpoint deserialize(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), "DPDN", 4) != 0) {
    throw Error(ErrorCode::kIo, "not a DPDN checkpoint");
  }
  Reader r(bytes.data() + 4, bytes.size() - 4);
  const std::uint32_t version = r.u32();
  if (version != Checkpoint::kVersion) {
    throw Error(ErrorCode::kIo, "unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint c;
  {
    Reader cfg = r.blob();
    c.config = TrainConfig::parse(cfg.str());
  }
  {
    Reader f = r.blob();
    c.fcn.in_channels = f.i32();
    c.fcn.hidden = f.i32();
    c.fcn.out_channels = f.i32();
    c.fcn.depth_scale = static_cast<Real>(f.f64());
    const int layers = f.i32();
    if (layers != FcnParams::kLayers) throw Error(ErrorCode::kIo, "checkpoint FCN has " + std::to_string(layers) + " layers");
    for (int l = 0; l < layers; ++l) {
      ConvLayer layer;
      layer.kernels = f.tensor(true);
      layer.bias = f.tensor(true);
      c.fcn.layers.push_back(std::move(layer));
    }
    if (!f.done()) throw Error(ErrorCode::kIo, "trailing bytes in FCN blob");
    try {
      c.fcn.validate();
    } catch (const Error& e) {
      throw Error(ErrorCode::kIo, std::string("inconsistent FCN blob: ") + e.what());
    }
  }
  {
    Reader p = r.blob();
    c.pdn.iters = p.i32();
    if (c.pdn.iters < 0 || c.pdn.iters > 1'000'000) throw Error(ErrorCode::kIo, "corrupt PDN iteration count");
    for (int n = 0; n < c.pdn.iters; ++n) {
      c.pdn.log_tau.push_back(Tensor::scalar(static_cast<Real>(p.f64()), true));
      c.pdn.log_sigma.push_back(Tensor::scalar(static_cast<Real>(p.f64()), true));
      c.pdn.lambda.push_back(Tensor::scalar(static_cast<Real>(p.f64()), true));
      c.pdn.log_eps.push_back(Tensor::scalar(static_cast<Real>(p.f64()), true));
    }
    c.pdn.log_sigma_d = Tensor::scalar(static_cast<Real>(p.f64()), true);
    c.pdn.log_sigma_v = Tensor::scalar(static_cast<Real>(p.f64()), true);
    if (!p.done()) throw Error(ErrorCode::kIo, "trailing bytes in PDN blob");
  }
  {
    Reader h = r.blob();
    const std::uint64_t n = h.u64();
    for (std::uint64_t i = 0; i < n; ++i) c.loss_history.push_back(h.f64());
    if (!h.done()) throw Error(ErrorCode::kIo, "trailing bytes in history blob");
  }
  if (!r.done()) throw Error(ErrorCode::kIo, "trailing bytes after checkpoint");
  return c;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  const auto bytes = serialize(ckpt);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIo, "failed writing " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

}  // namespace dpdn
