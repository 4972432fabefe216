#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iterator>

#include "doctest.h"
#include "hymad/train.hpp"

using namespace hymad;
using namespace hymad::datagen;
using namespace hymad::train;
using hymad::model::ModelConfig;

namespace {

ModelConfig small_model() {
  ModelConfig cfg;
  cfg.filters = 4;
  cfg.kernel_lengths = {17};
  cfg.pool_stride = 64;  // T' = 125
  cfg.rnn_hidden = 8;
  cfg.d_model = 8;
  cfg.mlp_hidden = {16, 8};
  return cfg;
}

// Human vs vehicle singles, 20 of each, all in the training split.
Dataset two_class_toy() {
  std::vector<Waveform> corpus;
  for (auto cls : {EventClass::kHuman, EventClass::kVehicle}) {
    auto ev = gen_event(cls, 20, 77 + static_cast<std::uint64_t>(cls));
    std::move(ev.begin(), ev.end(), std::back_inserter(corpus));
  }
  auto parts = split(corpus, {1.0, 0.0, 0.0}, 1);
  ComboCounts counts{{"human", {20, 0, 0}}, {"vehicle", {20, 0, 0}}};
  return build_dataset(corpus, parts, counts, {}, 2);
}

Dataset small_dataset(std::size_t per_class) {
  DatasetConfig cfg;
  cfg.per_class = per_class;
  cfg.seed = 5;
  return generate_dataset(cfg);
}

}  // namespace

TEST_CASE("TrainConfig validation") {
  TrainConfig t;
  CHECK_NOTHROW(t.validate());
  t.batch_size = 0;
  CHECK_THROWS_AS(t.validate(), ValidationError);
  t = {};
  t.lr = -1.0;
  CHECK_THROWS_AS(t.validate(), ValidationError);
  t = {};
  t.max_epochs = 0;
  CHECK_THROWS_AS(t.validate(), ValidationError);
}

TEST_CASE("train on a separable toy set") {
  const auto ds = two_class_toy();
  const auto mcfg = small_model();
  TrainConfig t;
  t.lr = 1e-2;
  t.batch_size = 8;
  t.max_epochs = 20;
  t.seed = 3;
  auto result = train::train(ds, mcfg, t);
  const auto losses = result.record.losses();
  REQUIRE(losses.size() == 20);
  MESSAGE("first loss " << losses.front() << ", last loss " << losses.back());
  CHECK(losses.back() <= 0.5 * losses.front());
  CHECK(result.record.best_epoch == 20);

  auto ev = evaluate(ds.in_split(Split::kTrain), result.params, mcfg, 0.5, "train");
  CHECK(ev.report.strict_match == 1.0);

  SUBCASE("threshold near 1 predicts nothing") {
    auto none = evaluate(ds.in_split(Split::kTrain), result.params, mcfg, 1.0 - 1e-15, "train");
    CHECK(none.report.recall == 0.0);
  }

  SUBCASE("evaluation is deterministic") {
    auto again = evaluate(ds.in_split(Split::kTrain), result.params, mcfg, 0.5, "train");
    CHECK(again.report.to_text() == ev.report.to_text());
    CHECK(again.logits == ev.logits);
  }
}

TEST_CASE("train determinism and lr = 0") {
  const auto ds = small_dataset(6);
  const auto mcfg = small_model();
  TrainConfig t;
  t.lr = 1e-3;
  t.batch_size = 4;
  t.max_epochs = 2;

  auto a = train::train(ds, mcfg, t);
  auto b = train::train(ds, mcfg, t);
  REQUIRE(a.record.epochs.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(std::fabs(a.record.epochs[i].train_loss - b.record.epochs[i].train_loss) <= 1e-12);
    CHECK(a.record.epochs[i].param_digest == b.record.epochs[i].param_digest);
  }
  CHECK(a.params.digest() == b.params.digest());
  CHECK(a.record.epochs[0].param_digest != a.record.epochs[1].param_digest);

  auto other_seed = t;
  other_seed.seed = 2;
  CHECK(train::train(ds, mcfg, other_seed).record.losses() != a.record.losses());

  auto frozen = t;
  frozen.lr = 0.0;
  const auto init = model::init_params(mcfg, frozen.seed);
  auto f = train::train(ds, mcfg, frozen);
  CHECK(f.params.digest() == init.digest());
  for (const auto& e : f.record.epochs) CHECK(e.param_digest == init.digest());
}

TEST_CASE("NaN aborts with batch ids") {
  const auto ds = small_dataset(4);
  const auto mcfg = small_model();
  auto bad = model::init_params(mcfg, 1);
  bad.mlp_b.back().mutable_data()[0] = std::nan("");
  TrainOptions o;
  o.init = bad;
  TrainConfig t;
  t.batch_size = 3;
  t.max_epochs = 1;
  try {
    train::train(ds, mcfg, t, o);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("batch ids") != std::string::npos);
  }
}

TEST_CASE("run directory and checkpoint evaluation") {
  const auto ds = small_dataset(10);
  const auto mcfg = small_model();
  const auto dir = std::filesystem::temp_directory_path() / "hymad_test_run";
  std::filesystem::remove_all(dir);
  TrainConfig t;
  t.lr = 1e-3;
  t.batch_size = 8;
  t.max_epochs = 2;
  t.checkpoint_every = 1;
  TrainOptions o;
  o.run_dir = dir;
  std::size_t calls = 0;
  o.on_epoch = [&](const EpochRecord& e) {
    ++calls;
    CHECK(e.val.has_value());
  };
  auto result = train::train(ds, mcfg, t, o);
  CHECK(calls == 2);
  for (const char* f : {"best.ckpt", "last.ckpt", "epoch_1.ckpt", "epoch_2.ckpt", "run_record.txt"})
    CHECK(std::filesystem::exists(dir / f));

  auto direct = evaluate(ds.in_split(Split::kTest), result.best_params, mcfg, 0.5, "test");
  auto loaded = evaluate_checkpoint(dir / "best.ckpt", ds, Split::kTest, mcfg, 0.5);
  CHECK(loaded.logits == direct.logits);
  CHECK(loaded.report.to_text() == direct.report.to_text());

  write_eval(loaded, dir / "eval");
  for (const char* f : {"report.txt", "roc.csv", "pr.csv", "logits.csv"})
    CHECK(std::filesystem::exists(dir / "eval" / f));

  auto other = mcfg;
  other.rnn_hidden = 16;
  CHECK_THROWS_AS(evaluate_checkpoint(dir / "best.ckpt", ds, Split::kTest, other, 0.5),
                  CompatibilityError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("ablations") {
  auto variants = ablation_configs(model::ModelConfig{});
  REQUIRE(variants.size() == 4);
  CHECK(variants[0].second.kernel_lengths == std::vector<std::size_t>{65, 129, 257});
  CHECK(variants[0].second.fusion == model::FusionMode::kCrossAttention);
  CHECK(variants[1].second.fusion == model::FusionMode::kConcat);
  CHECK(variants[2].second.fusion == model::FusionMode::kFreqOnly);
  CHECK(variants[3].second.frontend == model::Frontend::kPlainConv);
  CHECK(variants[3].second.kernel_lengths == std::vector<std::size_t>{129});

  const auto ds = small_dataset(4);
  const auto before = ds.digest();
  auto base = small_model();
  TrainConfig t;
  t.lr = 1e-3;
  t.batch_size = 8;
  t.max_epochs = 1;
  auto rows = run_ablations(ds, base, t);
  CHECK(rows.size() == 4);
  CHECK(ds.digest() == before);
  auto table = ablation_table(rows);
  CHECK(std::count(table.begin(), table.end(), '\n') == 5);
  for (const char* col : {"f1", "precision", "recall", "auroc"}) CHECK(table.find(col) != std::string::npos);
}
