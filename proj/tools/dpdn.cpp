// Command-line front end: data generation, training, evaluation and inference.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "dpdn/checkpoint.hpp"
#include "dpdn/config.hpp"
#include "dpdn/dataset.hpp"
#include "dpdn/error.hpp"
#include "dpdn/image.hpp"
#include "dpdn/solver.hpp"
#include "dpdn/train.hpp"

namespace {

using namespace dpdn;

constexpr int kExitOther = 1;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;

struct Common {
  std::string config;
  std::vector<std::string> overrides;
  std::uint64_t seed = 0;
  int scale = 0;
  std::string checkpoint;
  std::string out;
  std::string dataset;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "config file with key = value lines");
  cmd->add_option("--set", c.overrides, "override a config entry, key=value");
  cmd->add_option("--seed", c.seed, "rng seed");
  cmd->add_option("--scale", c.scale, "upsampling factor")->check(CLI::IsMember({2, 4, 8, 16}));
}

TrainConfig resolve_config(const Common& c) {
  TrainConfig cfg = c.config.empty() ? TrainConfig{} : TrainConfig::load(c.config);
  for (const auto& kv : c.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::kConfig, "--set expects key=value, got '" + kv + "'");
    set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (c.seed != 0) cfg.seed = c.seed;
  if (c.scale != 0) cfg.scale = c.scale;
  if (!c.dataset.empty()) cfg.dataset = c.dataset;
  cfg.validate();
  return cfg;
}

Dataset load_dataset(const TrainConfig& cfg) {
  if (cfg.dataset.empty()) throw Error(ErrorCode::kConfig, "no dataset given (--dataset or dataset = ...)");
  return read_dataset(cfg.dataset);
}

void print_epoch(const char* phase, const EpochLog& e) {
  std::fprintf(stderr, "%s epoch %d  train_loss %.6g  val_rmse %.6g\n", phase, e.epoch, e.train_loss, e.val_rmse);
}

ProjectionMatrix read_projection(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open projection " + path);
  ProjectionMatrix P;
  for (double& v : P.m) {
    if (!(in >> v)) throw Error(ErrorCode::kIo, "projection file needs 12 numbers: " + path);
  }
  return P;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Guided depth super-resolution with a deep primal-dual network"};
  app.require_subcommand(1);

  Common gen_c, pre_c, train_c, eval_c, solve_c, up_c, tof_c;

  auto* gen = app.add_subcommand("gen", "render a synthetic dataset");
  add_common(gen, gen_c);
  gen->add_option("--out", gen_c.out, "output directory")->required();

  auto* pre = app.add_subcommand("pretrain", "pretrain the guidance network");
  add_common(pre, pre_c);
  pre->add_option("--dataset", pre_c.dataset, "dataset directory");
  pre->add_option("--out", pre_c.out, "checkpoint to write")->required();

  auto* train = app.add_subcommand("train", "train network and unrolled solver jointly");
  add_common(train, train_c);
  train->add_option("--dataset", train_c.dataset, "dataset directory");
  train->add_option("--checkpoint", train_c.checkpoint, "starting checkpoint")->required();
  train->add_option("--out", train_c.out, "checkpoint to write")->required();

  std::string mode = "fcn-pdn";
  std::string split = "test";
  auto* eval = app.add_subcommand("eval", "score a checkpoint on a dataset split");
  add_common(eval, eval_c);
  eval->add_option("--dataset", eval_c.dataset, "dataset directory");
  eval->add_option("--checkpoint", eval_c.checkpoint, "checkpoint (optional for bilinear)");
  eval->add_option("--mode", mode, "fcn, fcn+nlh, fcn-pdn or bilinear");
  eval->add_option("--split", split, "train, val or test");
  eval->add_option("--out", eval_c.out, "report file");

  std::string input, guidance, weights, variant = "nlh-l2";
  int side = 7, iters = 100;
  double lambda = 1, eps = 0.01, sigma_d = 1, sigma_v = 0.1;
  auto* solve_cmd = app.add_subcommand("solve", "run the classical primal-dual solver");
  add_common(solve_cmd, solve_c);
  solve_cmd->add_option("--input", input, "depth PFM to regularize")->required();
  solve_cmd->add_option("--guidance", guidance, "intensity PFM for affinity weights");
  solve_cmd->add_option("--weights", weights, "PFM stack of |N| weight channels");
  solve_cmd->add_option("--side", side, "neighborhood side length");
  solve_cmd->add_option("--lambda", lambda, "data term weight");
  solve_cmd->add_option("--eps", eps, "Huber threshold");
  solve_cmd->add_option("--iters", iters, "iterations");
  solve_cmd->add_option("--variant", variant, "nlh-l2, nltv-l2, nlh-l1 or atv-l2");
  solve_cmd->add_option("--sigma-d", sigma_d, "spatial weight scale");
  solve_cmd->add_option("--sigma-v", sigma_v, "intensity weight scale");
  solve_cmd->add_option("--out", solve_c.out, "output PFM")->required();

  auto* up = app.add_subcommand("upsample", "super-resolve one depth map");
  add_common(up, up_c);
  up->add_option("--input", input, "low-resolution depth PFM")->required();
  up->add_option("--guidance", guidance, "high-resolution intensity PFM")->required();
  up->add_option("--checkpoint", up_c.checkpoint, "trained checkpoint")->required();
  up->add_option("--out", up_c.out, "output PFM")->required();

  std::string depth, projection;
  int lr_h = 0, lr_w = 0;
  double noise_c = 651;
  auto* tof = app.add_subcommand("tofmark-prep", "simulate a projected low-resolution sensor");
  add_common(tof, tof_c);
  tof->add_option("--depth", depth, "high-resolution depth PFM")->required();
  tof->add_option("--intensity", guidance, "intensity PFM")->required();
  tof->add_option("--projection", projection, "file with the 3×4 projection matrix (default: scale grid)");
  tof->add_option("--lr-height", lr_h, "sensor rows");
  tof->add_option("--lr-width", lr_w, "sensor columns");
  tof->add_option("--noise-c", noise_c, "noise constant c in N(0, c/d)");
  tof->add_option("--out", tof_c.out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (gen->parsed()) {
      const TrainConfig cfg = resolve_config(gen_c);
      const Dataset ds = generate_dataset(cfg);
      write_dataset(gen_c.out, ds, cfg);
      std::printf("wrote %zu samples to %s\n", ds.size(), gen_c.out.c_str());
    } else if (pre->parsed()) {
      const TrainConfig cfg = resolve_config(pre_c);
      const Dataset ds = load_dataset(cfg);
      const Checkpoint ckpt = pretrain(ds, cfg, [](const EpochLog& e) { print_epoch("pretrain", e); });
      save_checkpoint(pre_c.out, ckpt);
    } else if (train->parsed()) {
      const Checkpoint start = load_checkpoint(train_c.checkpoint);
      Common c = train_c;
      TrainConfig cfg = c.config.empty() && c.overrides.empty() ? start.config : resolve_config(c);
      if (c.config.empty() && c.overrides.empty()) {
        if (c.seed != 0) cfg.seed = c.seed;
        if (!c.dataset.empty()) cfg.dataset = c.dataset;
      }
      if (cfg.side != start.config.side) throw Error(ErrorCode::kConfig, "config side differs from the checkpoint");
      const Dataset ds = load_dataset(cfg);
      const Checkpoint ckpt = train_joint(ds, start, cfg, [](const EpochLog& e) { print_epoch("joint", e); });
      save_checkpoint(train_c.out, ckpt);
    } else if (eval->parsed()) {
      const EvalMode m = parse_eval_mode(mode);
      Checkpoint ckpt;
      if (!eval_c.checkpoint.empty()) {
        ckpt = load_checkpoint(eval_c.checkpoint);
      } else if (m == EvalMode::kBilinear) {
        ckpt = Checkpoint::zero(resolve_config(eval_c));
      } else {
        throw Error(ErrorCode::kConfig, "--checkpoint is required for mode " + mode);
      }
      TrainConfig cfg = ckpt.config;
      if (!eval_c.dataset.empty()) cfg.dataset = eval_c.dataset;
      if (eval_c.dataset.empty() && !eval_c.config.empty()) cfg.dataset = resolve_config(eval_c).dataset;
      const Dataset ds = load_dataset(cfg);
      Split sp;
      try {
        sp = parse_split(split);
      } catch (const Error& e) {
        throw Error(ErrorCode::kConfig, e.what());
      }
      const EvalReport r = evaluate(ds, sp, ckpt, m);
      std::ostringstream report;
      report << "mode " << eval_mode_name(m) << "\nsplit " << split << "\n";
      char line[64];
      for (std::size_t k = 0; k < r.rmse.size(); ++k) {
        std::snprintf(line, sizeof line, "sample %d %.10g\n", r.indices[k], r.rmse[k]);
        report << line;
      }
      std::snprintf(line, sizeof line, "mean %.10g\n", r.mean_rmse);
      report << line;
      std::cout << report.str();
      if (!eval_c.out.empty()) {
        std::ofstream out(eval_c.out);
        if (!(out << report.str())) throw Error(ErrorCode::kIo, "cannot write " + eval_c.out);
      }
    } else if (solve_cmd->parsed()) {
      const Image f = read_pfm(input);
      const Variant v = parse_variant(variant);
      const Neighborhood nbh = v == Variant::kAtvL2 ? Neighborhood::four_connected() : Neighborhood::square(side);
      WeightField W;
      if (!weights.empty()) {
        W.nbh = nbh;
        W.weights = read_pfm_stack(weights, nbh.size());
        if (W.height() != f.height || W.width() != f.width) {
          throw Error(ErrorCode::kShape, "weight stack does not match the input size");
        }
      } else if (!guidance.empty()) {
        const Image g = read_pfm(guidance);
        if (g.height != f.height || g.width != f.width) throw Error(ErrorCode::kShape, "guidance size differs");
        W = support_weights(affinity_from_intensity(g, nbh), nbh, static_cast<Real>(sigma_d),
                            static_cast<Real>(sigma_v));
      } else {
        W = support_weights(Tensor::zeros({nbh.size(), f.height, f.width}), nbh, static_cast<Real>(sigma_d),
                            static_cast<Real>(sigma_v));
      }
      SolverParams sp = SolverParams::defaults(nbh, static_cast<Real>(lambda), static_cast<Real>(eps), iters);
      sp.variant = v;
      write_pfm(solve_c.out, Image::from_tensor(solve(f.to_tensor(), W, sp)));
    } else if (up->parsed()) {
      const Checkpoint ckpt = load_checkpoint(up_c.checkpoint);
      const int scale = up_c.scale != 0 ? up_c.scale : ckpt.config.scale;
      write_pfm(up_c.out, upsample(read_pfm(input), read_pfm(guidance), ckpt, scale));
    } else if (tof->parsed()) {
      const TrainConfig cfg = resolve_config(tof_c);
      const Image hr = read_pfm(depth);
      const Image g = read_pfm(guidance);
      const int h = lr_h > 0 ? lr_h : hr.height / cfg.scale;
      const int w = lr_w > 0 ? lr_w : hr.width / cfg.scale;
      const ProjectionMatrix P = projection.empty() ? ProjectionMatrix::downscale(cfg.scale) : read_projection(projection);
      const Sample s = tofmark_prepare(hr, g, P, h, w, noise_c, cfg.seed);
      std::error_code ec;
      std::filesystem::create_directories(tof_c.out, ec);
      if (ec) throw Error(ErrorCode::kIo, "cannot create " + tof_c.out);
      write_pfm(tof_c.out + "/target.pfm", s.target);
      write_pfm(tof_c.out + "/guidance.pfm", s.guidance);
      write_pfm(tof_c.out + "/lr.pfm", s.d_lr);
      write_pfm(tof_c.out + "/mr.pfm", s.d_mr);
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "error %s: %s\n", error_code_name(e.code()), e.what());
    switch (e.code()) {
      case ErrorCode::kConfig: return kExitConfig;
      case ErrorCode::kIo: return kExitIo;
      default: return kExitOther;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitOther;
  }
  return 0;
}
