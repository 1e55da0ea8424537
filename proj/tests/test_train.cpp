#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "dpdn/train.hpp"

using namespace dpdn;

namespace {

std::string temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "dpdn_test_train" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

TrainConfig small_config() {
  TrainConfig cfg;
  cfg.gen_width = 16;
  cfg.gen_height = 16;
  cfg.gen_count = 10;
  cfg.scale = 2;
  cfg.side = 3;
  cfg.hidden = 4;
  cfg.pdn_iters = 2;
  cfg.nlh_iters = 5;
  cfg.pretrain_epochs = 1;
  cfg.joint_epochs = 1;
  return cfg;
}

bool same_params(const Checkpoint& a, const Checkpoint& b) {
  const auto pa = a.fcn.parameters();
  const auto pb = b.fcn.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) {
    if (pa[i].data().size() != pb[i].data().size()) return false;
    for (std::size_t j = 0; j < pa[i].numel(); ++j) {
      if (pa[i][j] != pb[i][j]) return false;
    }
  }
  const auto qa = a.pdn.parameters();
  const auto qb = b.pdn.parameters();
  if (qa.size() != qb.size()) return false;
  for (std::size_t i = 0; i < qa.size(); ++i) {
    if (qa[i][0] != qb[i][0]) return false;
  }
  return true;
}

Image constant(int h, int w, Real v) { return Image(h, w, v); }

}  // namespace

TEST(Config, ParseAndPrintRoundTrip) {
  TrainConfig cfg = TrainConfig::parse("# desk run\nscale = 8\nside=5\n\njoint_lr = 2.5e-5  # slower\ndepth_only = true\n");
  EXPECT_EQ(cfg.scale, 8);
  EXPECT_EQ(cfg.side, 5);
  EXPECT_EQ(cfg.joint_lr, 2.5e-5);
  EXPECT_TRUE(cfg.depth_only);
  EXPECT_EQ(TrainConfig::parse(cfg.to_string()), cfg);
}

TEST(Config, Defaults) {
  const TrainConfig cfg;
  EXPECT_EQ(cfg.pretrain_epochs, 25);
  EXPECT_EQ(cfg.pretrain_lr, 1e-3);
  EXPECT_EQ(cfg.pretrain_momentum, 0.9);
  EXPECT_EQ(cfg.joint_epochs, 10);
  EXPECT_EQ(cfg.joint_lr, 1e-4);
  EXPECT_EQ(cfg.side, 7);
  EXPECT_EQ(cfg.pdn_iters, 20);
  EXPECT_EQ(cfg.clip_norm, 0);
  EXPECT_NO_THROW(cfg.validate());
}

TEST(Config, Errors) {
  auto code = [](const std::string& text) {
    try {
      TrainConfig::parse(text).validate();
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::kState;
  };
  EXPECT_EQ(code("sied = 7\n"), ErrorCode::kConfig);
  EXPECT_EQ(code("side = 4\n"), ErrorCode::kConfig);
  EXPECT_EQ(code("side = 1\n"), ErrorCode::kConfig);
  EXPECT_EQ(code("scale = 3\n"), ErrorCode::kConfig);
  EXPECT_EQ(code("joint_lr = -1\n"), ErrorCode::kConfig);
  EXPECT_EQ(code("pretrain_epochs = -1\n"), ErrorCode::kConfig);
  EXPECT_EQ(code("clip_norm = -0.5\n"), ErrorCode::kConfig);
  EXPECT_EQ(code("side 7\n"), ErrorCode::kConfig);
  EXPECT_EQ(code("hidden = 6x\n"), ErrorCode::kConfig);
  try {
    TrainConfig::load("/nonexistent/cfg.txt");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kIo);
  }
}

TEST(Checkpoint, RoundTripIsBitExact) {
  TrainConfig cfg = small_config();
  Checkpoint c = Checkpoint::initial(cfg);
  c.loss_history = {0.5, 0.25, std::nan("")};
  c.pdn.lambda[1].mutable_data()[0] = Real(0.123456789);
  const auto bytes = serialize(c);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "DPDN");
  const Checkpoint back = deserialize(bytes);
  EXPECT_EQ(serialize(back), bytes);
  EXPECT_TRUE(same_params(c, back));
  EXPECT_EQ(back.config, cfg);

  const std::string path = temp_dir("ckpt") + "/a.ckpt";
  save_checkpoint(path, c);
  EXPECT_EQ(serialize(load_checkpoint(path)), bytes);
}

TEST(Checkpoint, CorruptInputIsIoError) {
  const auto bytes = serialize(Checkpoint::initial(small_config()));
  for (std::size_t cut : {std::size_t{0}, std::size_t{3}, std::size_t{9}, bytes.size() / 2, bytes.size() - 1}) {
    try {
      deserialize(std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(cut)));
      FAIL() << cut;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kIo);
    }
  }
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(deserialize(bad), Error);
  EXPECT_THROW(load_checkpoint("/nonexistent/a.ckpt"), Error);
}

TEST(Dataset, SplitsFollowIndexRanges) {
  EXPECT_EQ(split_for(0, 10, 0.8, 0.1), Split::kTrain);
  EXPECT_EQ(split_for(7, 10, 0.8, 0.1), Split::kTrain);
  EXPECT_EQ(split_for(8, 10, 0.8, 0.1), Split::kVal);
  EXPECT_EQ(split_for(9, 10, 0.8, 0.1), Split::kTest);
  EXPECT_EQ(parse_split(split_name(Split::kVal)), Split::kVal);
  EXPECT_THROW(parse_split("holdout"), Error);
}

TEST(Dataset, GenerationIsDeterministicAndShaped) {
  const TrainConfig cfg = small_config();
  const Dataset a = generate_dataset(cfg);
  const Dataset b = generate_dataset(cfg);
  ASSERT_EQ(a.size(), 10u);
  EXPECT_EQ(a.indices(Split::kTrain).size(), 8u);
  EXPECT_EQ(a.indices(Split::kVal), std::vector<int>{8});
  EXPECT_EQ(a.indices(Split::kTest), std::vector<int>{9});
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a.seeds[i], cfg.seed + i);
    EXPECT_EQ(a.samples[i].d_mr.data, b.samples[i].d_mr.data);
    EXPECT_EQ(a.samples[i].d_lr.height, 8);
    EXPECT_EQ(a.samples[i].target.height, 16);
  }
}

TEST(Dataset, WriteReadRoundTrip) {
  const TrainConfig cfg = small_config();
  const Dataset ds = generate_dataset(cfg);
  const std::string dir = temp_dir("ds");
  write_dataset(dir, ds, cfg);
  const Dataset back = read_dataset(dir);
  ASSERT_EQ(back.size(), ds.size());
  EXPECT_EQ(back.seeds, ds.seeds);
  EXPECT_EQ(back.splits, ds.splits);
  EXPECT_EQ(back.scale, ds.scale);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (std::size_t j = 0; j < ds.samples[i].target.size(); ++j) {
      EXPECT_EQ(back.samples[i].target.data[j], static_cast<Real>(static_cast<float>(ds.samples[i].target.data[j])));
    }
  }
  EXPECT_THROW(read_dataset(dir + "/missing"), Error);
}

TEST(Fnv1a, KnownValues) {
  EXPECT_EQ(fnv1a(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a("a"), 0xaf63dc4c8601ec8cULL);
}

TEST(Pretrain, ZeroEpochsReturnsInitialization) {
  TrainConfig cfg = small_config();
  cfg.pretrain_epochs = 0;
  const Dataset ds = generate_dataset(cfg);
  EXPECT_TRUE(same_params(pretrain(ds, cfg), Checkpoint::initial(cfg)));
}

TEST(Pretrain, ZeroLearningRateKeepsParamsAndLogsLoss) {
  TrainConfig cfg = small_config();
  cfg.gen_count = 1;
  cfg.split_train = 1;
  cfg.split_val = 0;
  cfg.pretrain_lr = 0;
  const Dataset ds = generate_dataset(cfg);
  std::vector<EpochLog> logs;
  const Checkpoint c = pretrain(ds, cfg, [&](const EpochLog& e) { logs.push_back(e); });
  EXPECT_TRUE(same_params(c, Checkpoint::initial(cfg)));
  ASSERT_EQ(c.loss_history.size(), 1u);
  EXPECT_GT(c.loss_history[0], 0);
  ASSERT_FALSE(logs.empty());
  EXPECT_EQ(logs.back().epoch, 1);
  EXPECT_TRUE(std::isnan(logs.back().val_rmse));
}

TEST(Pretrain, LossDecreasesOnSmallSet) {
  TrainConfig cfg = small_config();
  cfg.gen_count = 20;
  cfg.pretrain_epochs = 5;
  cfg.pretrain_lr = 1e-2;
  const Dataset ds = generate_dataset(cfg);
  const Checkpoint c = pretrain(ds, cfg);
  ASSERT_EQ(c.loss_history.size(), 5u);
  EXPECT_LT(c.loss_history.back(), c.loss_history.front());
}

TEST(Pretrain, EmptyTrainingSplitIsConfigError) {
  TrainConfig cfg = small_config();
  Dataset empty;
  EXPECT_THROW(pretrain(empty, cfg), Error);
}

TEST(TrainJoint, ZeroLearningRateKeepsParams) {
  TrainConfig cfg = small_config();
  cfg.joint_lr = 0;
  const Dataset ds = generate_dataset(cfg);
  const Checkpoint start = Checkpoint::initial(cfg);
  std::vector<EpochLog> logs;
  const Checkpoint c = train_joint(ds, start, cfg, [&](const EpochLog& e) { logs.push_back(e); });
  EXPECT_TRUE(same_params(c, start));
  ASSERT_EQ(logs.size(), 2u);
  EXPECT_EQ(logs[0].epoch, 0);
  EXPECT_TRUE(std::isfinite(logs[0].val_rmse));
  EXPECT_EQ(logs[1].val_rmse, logs[0].val_rmse);
}

TEST(TrainJoint, UpdatesParameters) {
  TrainConfig cfg = small_config();
  const Dataset ds = generate_dataset(cfg);
  const Checkpoint start = Checkpoint::initial(cfg);
  EXPECT_FALSE(same_params(train_joint(ds, start, cfg), start));
}

TEST(EvalMode, Names) {
  for (EvalMode m : {EvalMode::kFcn, EvalMode::kFcnNlh, EvalMode::kFcnPdn, EvalMode::kBilinear}) {
    EXPECT_EQ(parse_eval_mode(eval_mode_name(m)), m);
  }
  EXPECT_STREQ(eval_mode_name(EvalMode::kFcnNlh), "fcn+nlh");
  try {
    parse_eval_mode("pdn");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kConfig);
  }
}

TEST(Evaluate, BilinearOnNoiselessFullResolutionIsZero) {
  TrainConfig cfg = small_config();
  cfg.scale = 1;
  cfg.noise_c = 0;
  const Dataset ds = generate_dataset(cfg);
  const EvalReport r = evaluate(ds, Split::kTest, Checkpoint::initial(cfg), EvalMode::kBilinear);
  EXPECT_EQ(r.mean_rmse, 0);
}

TEST(Evaluate, IdentityJointModelMatchesBilinear) {
  TrainConfig cfg = small_config();
  cfg.sigma_d = 1e-6;  // every support weight underflows to zero
  const Dataset ds = generate_dataset(cfg);
  const Checkpoint zero = Checkpoint::zero(cfg);
  const std::vector<int> all{0, 1, 2, 3};
  const EvalReport a = evaluate(ds, all, zero, EvalMode::kFcnPdn);
  const EvalReport b = evaluate(ds, all, zero, EvalMode::kBilinear);
  EXPECT_EQ(a.rmse, b.rmse);
  EXPECT_EQ(a.indices, all);
  EXPECT_EQ(evaluate(ds, all, zero, EvalMode::kFcn).mean_rmse, b.mean_rmse);
}

TEST(Evaluate, HugeLambdaNlhApproachesFcn) {
  TrainConfig cfg = small_config();
  cfg.lambda0 = 1e7;
  cfg.nlh_iters = 50;
  const Dataset ds = generate_dataset(cfg);
  const Checkpoint c = Checkpoint::initial(cfg);
  const double fcn = evaluate(ds, Split::kTrain, c, EvalMode::kFcn).mean_rmse;
  const double nlh = evaluate(ds, Split::kTrain, c, EvalMode::kFcnNlh).mean_rmse;
  EXPECT_NEAR(nlh, fcn, 1e-3);
}

TEST(Evaluate, IsDeterministic) {
  const TrainConfig cfg = small_config();
  const Dataset ds = generate_dataset(cfg);
  const Checkpoint c = Checkpoint::initial(cfg);
  EXPECT_EQ(evaluate(ds, Split::kTrain, c, EvalMode::kFcnPdn).rmse,
            evaluate(ds, Split::kTrain, c, EvalMode::kFcnPdn).rmse);
}

TEST(GuidedNlh, ZeroWeightsKeepInput) {
  const TrainConfig cfg = small_config();
  const Dataset ds = generate_dataset(cfg);
  const Sample& s = ds.samples[0];
  const Neighborhood nbh = Neighborhood::square(3);
  const Image out = guided_nlh(s, nbh, SolverParams::defaults(nbh, 1, 0.01, 10), 1e-6, 1);
  EXPECT_EQ(out.data, s.d_mr.data);
}

TEST(Upsample, ShapeMismatchNamesBothShapes) {
  const Checkpoint c = Checkpoint::initial(small_config());
  try {
    upsample(constant(4, 4, 10), constant(16, 12, 0.5), c, 4);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kShape);
    const std::string msg = e.what();
    EXPECT_NE(msg.find("16x12"), std::string::npos) << msg;
    EXPECT_NE(msg.find("4x4"), std::string::npos) << msg;
  }
}

TEST(Upsample, ConstantDepthStaysConstant) {
  const TrainConfig cfg = small_config();
  const Checkpoint c = Checkpoint::zero(cfg);
  const Image out = upsample(constant(4, 4, 37), constant(8, 8, 0.5), c, 2);
  ASSERT_EQ(out.height, 8);
  for (Real v : out.data) EXPECT_NEAR(v, 37, 1e-6);
  EXPECT_EQ(upsample(constant(4, 4, 37), constant(8, 8, 0.5), c, 2).data, out.data);
}

TEST(TofmarkPrepare, IdentityNoiselessReproducesDepth) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(5, 9);
  Image hr(6, 8);
  for (auto& v : hr.data) v = static_cast<Real>(u(rng));
  const Sample s = tofmark_prepare(hr, constant(6, 8, 0.5), ProjectionMatrix::identity(), 6, 8, 0, 1);
  for (std::size_t i = 0; i < hr.size(); ++i) EXPECT_NEAR(s.d_mr.data[i], hr.data[i], 1e-12);
  EXPECT_EQ(s.guidance.data, constant(6, 8, 0.5).data);
}

TEST(TofmarkPrepare, ConstantDepthStaysConstant) {
  ProjectionMatrix P = ProjectionMatrix::downscale(4);
  P.m[3] = 0.7;  // sub-pixel shift, still in bounds for most pixels
  const Sample s = tofmark_prepare(constant(16, 16, 12), constant(16, 16, 0.2), P, 4, 4, 0, 1);
  for (Real v : s.d_mr.data) EXPECT_NEAR(v, 12, 1e-12);
}

TEST(TofmarkPrepare, ReproduciblePerSeed) {
  GenConfig gen;
  gen.width = 32;
  gen.height = 32;
  const RenderResult r = render(sample_scene(3, gen));
  const ProjectionMatrix P = ProjectionMatrix::downscale(4);
  const Sample a = tofmark_prepare(r.depth, r.intensity, P, 8, 8, 651, 5);
  const Sample b = tofmark_prepare(r.depth, r.intensity, P, 8, 8, 651, 5);
  const Sample c = tofmark_prepare(r.depth, r.intensity, P, 8, 8, 651, 6);
  EXPECT_EQ(a.d_mr.data, b.d_mr.data);
  EXPECT_NE(a.d_mr.data, c.d_mr.data);
}

TEST(CsvLog, WritesHeaderAndRows) {
  const std::string path = temp_dir("csv") + "/log.csv";
  CsvLog log(path);
  log.write({0, std::nan(""), 5.5});
  log.write({1, 0.25, 4.5});
  std::ifstream in(path);
  std::string header, row0, row1;
  std::getline(in, header);
  std::getline(in, row0);
  std::getline(in, row1);
  EXPECT_EQ(header, "epoch,train_loss,val_rmse");
  EXPECT_EQ(row0.substr(0, 2), "0,");
  EXPECT_EQ(row1.substr(0, 2), "1,");
}
