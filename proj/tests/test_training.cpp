#include <gtest/gtest.h>

#include <cmath>

#include "hjid/checks.hpp"
#include "hjid/error.hpp"
#include "hjid/evaluation.hpp"
#include "hjid/training.hpp"
#include "test_util.hpp"

namespace hjid {
namespace {

using testing::TempDir;
using testing::read_file;
using testing::write_file;

DatasetSplit small_split(Scenario scenario = Scenario::overlapped) {
  SyntheticConfig c;
  c.users_x = c.users_y = 40;
  c.overlap = 20;
  c.items_x = c.items_y = 30;
  auto ds = generate_synthetic(c, 3);
  SplitOptions o;
  o.seed = 3;
  o.num_negatives = 10;
  o.scenario = scenario;
  return split_overlapped(ds.x, ds.y, o);
}

TrainConfig small_config() {
  TrainConfig c;
  c.d = 4;
  c.N = 4;
  c.flow_hidden = 8;
  c.epochs = 2;
  c.batch_size = 16;
  c.seed = 5;
  return c;
}

TEST(Config, DefaultsValidateAndRoundTrip) {
  TrainConfig c;
  EXPECT_NO_THROW(validate(c));
  c.learning_rate = 0.0123;
  c.variant = AblationVariant::B;
  c.flow_kind = BijectionKind::affine_coupling;
  TrainConfig back = parse_config(format_config(c));
  EXPECT_EQ(format_config(back), format_config(c));
  EXPECT_EQ(back.variant, AblationVariant::B);
  EXPECT_DOUBLE_EQ(back.learning_rate, 0.0123);
}

TEST(Config, CommentsAndWhitespace) {
  auto c = parse_config("# comment\n  K = 4  \nk=1 # trailing\n\n");
  EXPECT_EQ(c.K, 4u);
  EXPECT_EQ(c.k, 1u);
}

TEST(Config, UnknownKeyAndBadValueNamed) {
  try {
    parse_config("wibble = 3\n");
    FAIL();
  } catch (const ArgumentError& e) {
    EXPECT_NE(std::string(e.what()).find("wibble"), std::string::npos);
  }
  EXPECT_THROW(parse_config("K = three\n"), ArgumentError);
}

TEST(Config, ShapeConstraints) {
  TrainConfig c;
  c.k = c.K;
  EXPECT_THROW(validate(c), ArgumentError);
  c = TrainConfig{};
  c.learning_rate = -1.0;
  EXPECT_THROW(validate(c), ArgumentError);
}

TEST(Config, VariantSwitches) {
  TrainConfig c;
  c.variant = AblationVariant::A;
  EXPECT_FALSE(c.uses_cross_path());
  EXPECT_EQ(c.effective_weights().w_s, 0.0);
  EXPECT_EQ(c.effective_weights().w_g, 0.0);
  c.variant = AblationVariant::C;
  EXPECT_FALSE(c.uses_flow());
  EXPECT_TRUE(c.uses_shallow_mmd());
  c.variant = AblationVariant::D;
  EXPECT_EQ(c.shallow_depth(), 0u);
  EXPECT_EQ(c.deep_width(), c.K * c.d);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Matrix x = Matrix::Constant(1, 2, 1.0);
  x(0, 1) = -3.0;
  std::vector<NamedParam> p{{"x", &x}};
  std::vector<Matrix> g{Matrix(2.0 * x)};
  Adam opt(0.1);
  opt.step(p, g);
  EXPECT_NEAR(x(0, 0), 0.9, 1e-7);
  EXPECT_NEAR(x(0, 1), -2.9, 1e-7);
  EXPECT_EQ(opt.steps(), 1u);
}

TEST(TrainStep, RepeatedStepsReduceToyLoss) {
  auto split = toy_split();
  auto config = toy_config();
  config.learning_rate = 0.01;
  TrainingView view = TrainingView::build(split, config);
  TrainState state = make_train_state(config, sizes_of(split));
  std::vector<Entity> batch = view.entities;
  const double before = evaluate_loss(state.model, view, batch, 1).total;
  for (int i = 0; i < 60; ++i) train_step(state, view, batch, 1);
  EXPECT_LT(evaluate_loss(state.model, view, batch, 1).total, before);
}

TEST(Loss, VariantComponentsSwitchedOff) {
  auto split = toy_split();
  for (auto v : {AblationVariant::A, AblationVariant::C}) {
    auto config = toy_config();
    config.variant = v;
    TrainingView view = TrainingView::build(split, config);
    HjidModel model(config, sizes_of(split));
    auto r = evaluate_loss(model, view, view.entities, 2);
    EXPECT_EQ(r.l_g, 0.0);
    if (v == AblationVariant::A) EXPECT_EQ(r.l_s, 0.0);
    EXPECT_NEAR(r.total, r.l_s - r.vib_x - r.vib_y, 1e-12);
  }
}

TEST(Loss, FullWithZeroAlignmentWeightsIsReconstructionOnly) {
  auto split = toy_split();
  auto config = toy_config();
  config.weights.w_s = 0.0;
  config.weights.w_g = 0.0;
  TrainingView view = TrainingView::build(split, config);
  HjidModel model(config, sizes_of(split));
  auto r = evaluate_loss(model, view, view.entities, 3);
  EXPECT_NEAR(r.total, -r.vib_x - r.vib_y, 1e-12);
}

TEST(Loss, SameSeedSameValue) {
  auto split = toy_split();
  auto config = toy_config();
  TrainingView view = TrainingView::build(split, config);
  HjidModel model(config, sizes_of(split));
  EXPECT_EQ(evaluate_loss(model, view, view.entities, 4).total, evaluate_loss(model, view, view.entities, 4).total);
}

TEST(Fit, OneLogRowPerEpochAndCleanAudit) {
  auto split = small_split();
  auto r = fit(small_config(), split);
  ASSERT_EQ(r.log.size(), 2u);
  EXPECT_EQ(r.log[0].epoch, 1u);
  EXPECT_EQ(r.log[1].epoch, 2u);
  for (const auto& rec : r.log) EXPECT_TRUE(std::isfinite(rec.loss.total));
  EXPECT_GT(r.audit.edges_checked, 0u);
  EXPECT_TRUE(r.audit.clean());
  EXPECT_EQ(r.checkpoint.epoch, 2u);
  EXPECT_GE(r.checkpoint.best_epoch, 1u);
  EXPECT_EQ(r.checkpoint.dataset_fingerprint, dataset_fingerprint(split));
}

TEST(Fit, NonOverlappedAuditClean) {
  auto split = small_split(Scenario::non_overlapped);
  auto r = fit(small_config(), split);
  EXPECT_TRUE(r.audit.clean());
  EXPECT_EQ(r.audit.overlapped_user_hits, 0u);
  auto report = evaluate(r.checkpoint.model, split);
  EXPECT_GT(report.queries, 0u);
  EXPECT_TRUE(std::isfinite(report.mrr));
}

TEST(Fit, DeterministicGivenSeed) {
  auto split = small_split();
  auto a = fit(small_config(), split), b = fit(small_config(), split);
  for (std::size_t i = 0; i < a.log.size(); ++i) EXPECT_EQ(epoch_record_json(a.log[i]), epoch_record_json(b.log[i]));
  TempDir dir;
  save_checkpoint(a.checkpoint, dir / "a.bin");
  save_checkpoint(b.checkpoint, dir / "b.bin");
  EXPECT_EQ(read_file(dir / "a.bin"), read_file(dir / "b.bin"));
}

TEST(Fit, PatienceStopsEarly) {
  auto split = small_split();
  auto c = small_config();
  c.epochs = 30;
  c.patience = 1;
  auto r = fit(c, split);
  EXPECT_LT(r.log.size(), 30u);
}

TEST(Checkpoint, RoundTripGivesIdenticalScores) {
  auto split = small_split();
  auto r = fit(small_config(), split);
  TempDir dir;
  save_checkpoint(r.checkpoint, dir / "c.bin");
  auto back = load_checkpoint(dir / "c.bin");
  EXPECT_EQ(back.best_epoch, r.checkpoint.best_epoch);
  EXPECT_EQ(back.dataset_fingerprint, r.checkpoint.dataset_fingerprint);
  auto e1 = evaluate(r.checkpoint.model, split), e2 = evaluate(back.model, split);
  EXPECT_EQ(metrics_json(e1, ""), metrics_json(e2, ""));
}

TEST(Checkpoint, CorruptionDetected) {
  auto split = toy_split();
  Checkpoint cp;
  cp.model = HjidModel(toy_config(), sizes_of(split));
  TempDir dir;
  save_checkpoint(cp, dir / "c.bin");
  const std::string bytes = read_file(dir / "c.bin");

  write_file(dir / "t.bin", bytes.substr(0, bytes.size() - 9));
  EXPECT_THROW(load_checkpoint(dir / "t.bin"), IntegrityError);

  std::string flipped = bytes;
  flipped[flipped.size() - 3] ^= 0x40;
  write_file(dir / "f.bin", flipped);
  EXPECT_THROW(load_checkpoint(dir / "f.bin"), IntegrityError);

  std::string versioned = bytes;
  versioned[8] = static_cast<char>(kCheckpointVersion + 1);
  write_file(dir / "v.bin", versioned);
  EXPECT_THROW(load_checkpoint(dir / "v.bin"), VersionError);

  EXPECT_THROW(load_checkpoint(dir / "missing.bin"), DataError);
}

TEST(Fingerprint, SensitiveToTrainingEdges) {
  auto a = toy_split();
  auto b = a;
  b.x.train_edges.pop_back();
  EXPECT_NE(dataset_fingerprint(a), dataset_fingerprint(b));
  EXPECT_EQ(dataset_fingerprint(a), dataset_fingerprint(toy_split()));
}

TEST(GradCheck, ToyLossGradientsMatchFiniteDifferences) {
  auto r = toy_loss_grad_check(toy_config());
  EXPECT_LT(r.max_relative_error, 1e-4) << r.worst_parameter;
  EXPECT_GT(r.coordinates, 100u);
}

TEST(GradCheck, HarnessCatchesScaledGradient) {
  auto r = toy_loss_grad_check(toy_config(), 1e-5, 1e-6, 2.0);
  EXPECT_NEAR(r.max_relative_error, 1.0, 1e-3);
}

}  // namespace
}  // namespace hjid
