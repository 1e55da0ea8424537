#include "dpdn/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <memory>
#include <random>

#include "dpdn/fcn.hpp"
#include "dpdn/pdn.hpp"

namespace dpdn {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

Image crop(const Image& img, int y0, int x0, int size) {
  Image out(size, size);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) out.at(y, x) = img.at(y0 + y, x0 + x);
  }
  return out;
}

ModelInput training_input(const Sample& s, int patch, std::mt19937_64& rng) {
  if (patch <= 0 || (patch >= s.target.height && patch >= s.target.width)) return make_model_input(s);
  const int size = std::min({patch, s.target.height, s.target.width});
  std::uniform_int_distribution<int> ys(0, s.target.height - size);
  std::uniform_int_distribution<int> xs(0, s.target.width - size);
  const int y0 = ys(rng);
  const int x0 = xs(rng);
  Sample c;
  c.scale = s.scale;
  c.d_mr = crop(s.d_mr, y0, x0, size);
  c.guidance = crop(s.guidance, y0, x0, size);
  c.target = crop(s.target, y0, x0, size);
  return make_model_input(c);
}

Real loss_normalizer(const ModelInput& in, Real depth_scale) {
  return Real(1) / (static_cast<Real>(in.height()) * in.width() * depth_scale * depth_scale);
}

std::vector<int> require_train(const Dataset& ds) {
  auto idx = ds.indices(Split::kTrain);
  if (idx.empty()) throw Error(ErrorCode::kConfig, "dataset has no training samples");
  return idx;
}

double val_rmse(const Dataset& ds, const Checkpoint& ckpt, EvalMode mode) {
  const auto idx = ds.indices(Split::kVal);
  if (idx.empty()) return kNaN;
  return evaluate(ds, idx, ckpt, mode).mean_rmse;
}

void check_finite(const Tensor& loss, int epoch) {
  if (!std::isfinite(static_cast<double>(loss.item()))) {
    throw Error(ErrorCode::kNumeric, "training loss became non-finite in epoch " + std::to_string(epoch));
  }
}

void emit(const EpochLog& row, CsvLog* log, const EpochCallback& cb) {
  if (log) log->write(row);
  if (cb) cb(row);
}

}  // namespace

CsvLog::CsvLog(const std::string& path) : path_(path) {
  std::ofstream out(path_, std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write log " + path_);
  out << "epoch,train_loss,val_rmse\n";
}

void CsvLog::write(const EpochLog& row) {
  std::ofstream out(path_, std::ios::app);
  if (!out) throw Error(ErrorCode::kIo, "cannot append to log " + path_);
  char line[128];
  std::snprintf(line, sizeof line, "%d,%.10g,%.10g\n", row.epoch, row.train_loss, row.val_rmse);
  out << line;
}

Checkpoint pretrain(const Dataset& ds, const TrainConfig& cfg, const EpochCallback& on_epoch) {
  return pretrain(ds, Checkpoint::initial(cfg), cfg, on_epoch);
}

Checkpoint pretrain(const Dataset& ds, const Checkpoint& start, const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  auto order = require_train(ds);
  Checkpoint ckpt = start.clone();
  const Neighborhood nbh = ckpt.neighborhood();
  MomentumSgd opt(ckpt.fcn.parameters(), static_cast<Real>(cfg.pretrain_lr), static_cast<Real>(cfg.pretrain_momentum),
                  cfg.clip_norm);
  std::mt19937_64 rng(cfg.seed ^ 0x70726574ull);
  std::unique_ptr<CsvLog> log = cfg.log.empty() ? nullptr : std::make_unique<CsvLog>(cfg.log);

  for (int epoch = 1; epoch <= cfg.pretrain_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0;
    for (int i : order) {
      const ModelInput in = training_input(ds.samples[static_cast<std::size_t>(i)], cfg.patch, rng);
      const FcnOutput out = fcn_forward(in, ckpt.fcn);
      Tensor loss = scale(pretrain_loss(out, in, nbh, static_cast<Real>(cfg.pretrain_eps)),
                          loss_normalizer(in, ckpt.fcn.depth_scale));
      check_finite(loss, epoch);
      loss.backward();
      opt.step();
      total += static_cast<double>(loss.item());
    }
    const double mean = total / static_cast<double>(order.size());
    ckpt.loss_history.push_back(mean);
    emit({epoch, mean, val_rmse(ds, ckpt, EvalMode::kFcn)}, log.get(), on_epoch);
  }
  ckpt.config = cfg;
  return ckpt;
}

Checkpoint train_joint(const Dataset& ds, const Checkpoint& start, const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  auto order = require_train(ds);
  Checkpoint ckpt = start.clone();
  const Neighborhood nbh = ckpt.neighborhood();
  std::vector<Tensor> params = ckpt.fcn.parameters();
  if (ckpt.pdn.iters > 0) {
    for (const auto& p : ckpt.pdn.parameters()) params.push_back(p);
  }
  MomentumSgd opt(params, static_cast<Real>(cfg.joint_lr), static_cast<Real>(cfg.joint_momentum), cfg.clip_norm);
  std::mt19937_64 rng(cfg.seed ^ 0x6a6f696eull);
  std::unique_ptr<CsvLog> log = cfg.log.empty() ? nullptr : std::make_unique<CsvLog>(cfg.log);

  emit({0, kNaN, val_rmse(ds, ckpt, EvalMode::kFcnPdn)}, log.get(), on_epoch);
  for (int epoch = 1; epoch <= cfg.joint_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0;
    for (int i : order) {
      const ModelInput in = training_input(ds.samples[static_cast<std::size_t>(i)], cfg.patch, rng);
      Tensor loss = scale(sse(joint_forward(in, ckpt.fcn, ckpt.pdn, nbh), in.target),
                          loss_normalizer(in, ckpt.fcn.depth_scale));
      check_finite(loss, epoch);
      loss.backward();
      opt.step();
      ckpt.pdn.enforce_bounds();
      total += static_cast<double>(loss.item());
    }
    const double mean = total / static_cast<double>(order.size());
    ckpt.loss_history.push_back(mean);
    emit({epoch, mean, val_rmse(ds, ckpt, EvalMode::kFcnPdn)}, log.get(), on_epoch);
  }
  ckpt.config = cfg;
  return ckpt;
}

const char* eval_mode_name(EvalMode m) {
  switch (m) {
    case EvalMode::kFcn: return "fcn";
    case EvalMode::kFcnNlh: return "fcn+nlh";
    case EvalMode::kFcnPdn: return "fcn-pdn";
    case EvalMode::kBilinear: return "bilinear";
  }
  return "?";
}

EvalMode parse_eval_mode(const std::string& name) {
  for (EvalMode m : {EvalMode::kFcn, EvalMode::kFcnNlh, EvalMode::kFcnPdn, EvalMode::kBilinear}) {
    if (name == eval_mode_name(m)) return m;
  }
  throw Error(ErrorCode::kConfig, "unknown mode '" + name + "' (expected fcn, fcn+nlh, fcn-pdn or bilinear)");
}

Image predict(const Sample& s, const Checkpoint& ckpt, EvalMode mode) {
  NoGradGuard no_grad;
  if (mode == EvalMode::kBilinear) return s.d_mr;
  const ModelInput in = make_model_input(s);
  const Neighborhood nbh = ckpt.neighborhood();
  switch (mode) {
    case EvalMode::kFcn:
      return Image::from_tensor(fcn_depth(in, ckpt.fcn));
    case EvalMode::kFcnNlh: {
      const FcnOutput out = fcn_forward(in, ckpt.fcn);
      const Tensor f = fcn_depth(in, out);
      const TrainConfig& c = ckpt.config;
      const WeightField W = support_weights(abs(out.affinity), nbh, static_cast<Real>(c.sigma_d),
                                            static_cast<Real>(c.sigma_v));
      const SolverParams sp =
          SolverParams::defaults(nbh, static_cast<Real>(c.lambda0), static_cast<Real>(c.eps0), c.nlh_iters);
      return Image::from_tensor(solve(f, W, sp));
    }
    case EvalMode::kFcnPdn:
      return Image::from_tensor(joint_forward(in, ckpt.fcn, ckpt.pdn, nbh));
    case EvalMode::kBilinear:
      break;
  }
  return s.d_mr;
}

EvalReport evaluate(const Dataset& ds, const std::vector<int>& indices, const Checkpoint& ckpt, EvalMode mode) {
  EvalReport r;
  r.mode = mode;
  r.indices = indices;
  r.rmse.resize(indices.size());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const Sample& s = ds.samples.at(static_cast<std::size_t>(indices[k]));
    if (s.target.size() == 0) throw Error(ErrorCode::kIo, "sample " + std::to_string(indices[k]) + " has no target");
    r.rmse[k] = rmse(predict(s, ckpt, mode), s.target);
  }
  double total = 0;
  for (double v : r.rmse) total += v;
  r.mean_rmse = r.rmse.empty() ? kNaN : total / static_cast<double>(r.rmse.size());
  return r;
}

EvalReport evaluate(const Dataset& ds, Split split, const Checkpoint& ckpt, EvalMode mode) {
  return evaluate(ds, ds.indices(split), ckpt, mode);
}

Image guided_nlh(const Sample& s, const Neighborhood& nbh, const SolverParams& params, Real sigma_d, Real sigma_v) {
  NoGradGuard no_grad;
  const WeightField W = support_weights(affinity_from_intensity(s.guidance, nbh), nbh, sigma_d, sigma_v);
  return Image::from_tensor(solve(s.d_mr.to_tensor(), W, params));
}

Sample tofmark_prepare(const Image& hr_depth, const Image& intensity, const ProjectionMatrix& P, int lr_h, int lr_w,
                       double noise_c, std::uint64_t seed) {
  P.validate();
  if (intensity.height != hr_depth.height || intensity.width != hr_depth.width) {
    throw Error(ErrorCode::kShape, "intensity and depth sizes differ");
  }
  Sample s;
  s.scale = std::max(1, hr_depth.height / std::max(1, lr_h));
  s.target = hr_depth;
  s.guidance = intensity;
  const Image sparse = add_depth_noise(project_depth(hr_depth, P, lr_h, lr_w), noise_c, seed);
  s.d_lr = fill_sparse_bilinear(sparse);
  s.d_lr.mask.clear();
  s.d_mr = bilinear_resize(s.d_lr, hr_depth.height, hr_depth.width);
  return s;
}

Image upsample(const Image& lr, const Image& guidance, const Checkpoint& ckpt, int scale) {
  if (scale < 1 || guidance.height != lr.height * scale || guidance.width != lr.width * scale) {
    throw Error(ErrorCode::kShape, "guidance is " + std::to_string(guidance.height) + "x" +
                                       std::to_string(guidance.width) + " but depth " + std::to_string(lr.height) +
                                       "x" + std::to_string(lr.width) + " at scale " + std::to_string(scale) +
                                       " needs " + std::to_string(lr.height * scale) + "x" +
                                       std::to_string(lr.width * scale));
  }
  Sample s;
  s.scale = scale;
  s.d_lr = lr;
  s.guidance = guidance;
  s.d_mr = bilinear_resize(lr, guidance.height, guidance.width);
  return predict(s, ckpt, EvalMode::kFcnPdn);
}

}  // namespace dpdn
