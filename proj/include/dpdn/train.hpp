#pragma once

#include <functional>
#include <string>
#include <vector>

#include "dpdn/checkpoint.hpp"
#include "dpdn/dataset.hpp"
#include "dpdn/image.hpp"
#include "dpdn/solver.hpp"

namespace dpdn {

struct EpochLog {
  int epoch = 0;            // 0 is the state before the first update
  double train_loss = 0;    // mean per-sample loss of the epoch, NaN for epoch 0
  double val_rmse = 0;      // NaN when the validation split is empty
};

using EpochCallback = std::function<void(const EpochLog&)>;

// Training losses are divided by H·W·depth_scale², making them per-pixel
// squared errors in the units the network sees.
Checkpoint pretrain(const Dataset& ds, const TrainConfig& cfg, const EpochCallback& on_epoch = {});
Checkpoint pretrain(const Dataset& ds, const Checkpoint& start, const TrainConfig& cfg,
                    const EpochCallback& on_epoch = {});
Checkpoint train_joint(const Dataset& ds, const Checkpoint& start, const TrainConfig& cfg,
                       const EpochCallback& on_epoch = {});

enum class EvalMode { kFcn, kFcnNlh, kFcnPdn, kBilinear };

const char* eval_mode_name(EvalMode m);
EvalMode parse_eval_mode(const std::string& name);

struct EvalReport {
  EvalMode mode = EvalMode::kBilinear;
  std::vector<int> indices;
  std::vector<double> rmse;
  double mean_rmse = 0;
};

Image predict(const Sample& s, const Checkpoint& ckpt, EvalMode mode);
EvalReport evaluate(const Dataset& ds, const std::vector<int>& indices, const Checkpoint& ckpt, EvalMode mode);
EvalReport evaluate(const Dataset& ds, Split split, const Checkpoint& ckpt, EvalMode mode);

// Fixed-parameter solver on d_mr with weights from guidance intensity differences.
Image guided_nlh(const Sample& s, const Neighborhood& nbh, const SolverParams& params, Real sigma_d, Real sigma_v);

// Projects HR depth into an lr_h×lr_w sensor, adds noise, fills holes and
// upsamples back to the HR grid.
Sample tofmark_prepare(const Image& hr_depth, const Image& intensity, const ProjectionMatrix& P, int lr_h, int lr_w,
                       double noise_c, std::uint64_t seed);

// Joint-model super-resolution of a single depth map.
Image upsample(const Image& lr, const Image& guidance, const Checkpoint& ckpt, int scale);

// Writes "epoch,train_loss,val_rmse" rows.
class CsvLog {
 public:
  explicit CsvLog(const std::string& path);
  void write(const EpochLog& row);

 private:
  std::string path_;
};

}  // namespace dpdn
