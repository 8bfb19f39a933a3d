#include <cmath>
#include <sstream>

#include "doctest.h"
#include "exnet/error.hpp"
#include "exnet/trainer.hpp"
#include "synthetic.hpp"

using namespace exnet;

namespace {

constexpr std::size_t kSize = 32;

ModelSpec small_spec() {
  ModelSpec s;
  s.input_height = kSize;
  s.input_width = kSize;
  return s;
}

TrainConfig small_config(std::size_t epochs) {
  TrainConfig c;
  c.epochs = epochs;
  c.batch_size = 8;
  c.seed = 11;
  return c;
}

std::vector<std::uint8_t> state_bytes(Model<double>& m) {
  std::ostringstream os;
  save_checkpoint(m, os);
  const std::string s = os.str();
  return {s.begin(), s.end()};
}

}  // namespace

TEST_CASE("config validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.epochs = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.learning_rate = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.momentum = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.dropout_rate = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("configured spec applies the regularization switches") {
  TrainConfig c;
  c.use_batchnorm = false;
  c.dropout_rate = 0.5;
  const ModelSpec s = configured_spec(small_spec(), c);
  CHECK_FALSE(s.use_batchnorm);
  CHECK(s.dropout_rate == 0.5);
  CHECK(s.input_height == kSize);
}

TEST_CASE("memorizes a 16-image subset") {
  const auto items = testsupport::blob_items(8, 3, kSize);
  TrainConfig c = small_config(30);
  c.learning_rate = 0.01;
  auto model = Model<float>::build(configured_spec(small_spec(), c), init_seed(c));
  const FitSummary s = fit<float>(model, items, items, c);
  REQUIRE(s.logs.size() == 30);
  CHECK(s.logs.back().train_loss < 0.1);
  CHECK(evaluate<float>(model, items).accuracy == 1.0);
  CHECK(s.logs.back().train_loss < s.logs.front().train_loss);
}

TEST_CASE("constant output layer predicts class 0 everywhere") {
  const auto items = testsupport::blob_items(4, 5, kSize);
  auto model = Model<double>::build(small_spec(), 1);
  for (auto& p : model.layer("output").parameters()) p.value->fill(0.0);
  const auto pred = predict<double>(model, items);
  for (const int p : pred) CHECK(p == 0);
  const MetricsReport r = evaluate<double>(model, items);
  CHECK(r.recall == 0.0);
  CHECK(r.accuracy == 0.5);
}

TEST_CASE("evaluation leaves model state untouched") {
  const auto items = testsupport::blob_items(4, 6, kSize);
  auto model = Model<double>::build(small_spec(), 2);
  model.set_mode(Mode::train);
  const auto before = state_bytes(model);
  const auto p1 = predict<double>(model, items);
  const auto p2 = predict<double>(model, items, 3);
  CHECK(p1 == p2);
  CHECK(state_bytes(model) == before);
  CHECK(model.mode() == Mode::train);
}

TEST_CASE("training is deterministic for a fixed seed") {
  const auto train = testsupport::blob_items(6, 7, kSize);
  const auto val = testsupport::blob_items(2, 8, kSize);
  const TrainConfig c = small_config(2);
  auto run = [&] {
    auto m = Model<double>::build(configured_spec(small_spec(), c), init_seed(c));
    const FitSummary s = fit<double>(m, train, val, c);
    return std::make_pair(s.logs.back().train_loss, state_bytes(m));
  };
  const auto a = run();
  const auto b = run();
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
}

TEST_CASE("divergence raises a training error") {
  const auto items = testsupport::blob_items(4, 9, kSize);
  TrainConfig c = small_config(5);
  c.learning_rate = 1e12;
  c.use_batchnorm = false;
  auto m = Model<float>::build(configured_spec(small_spec(), c), init_seed(c));
  try {
    fit<float>(m, items, items, c);
    FAIL("expected TrainingError");
  } catch (const TrainingError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("epoch") != std::string::npos);
    CHECK(msg.find("batch") != std::string::npos);
  }
}

TEST_CASE("fit rejects empty splits and bad configs") {
  const auto items = testsupport::blob_items(2, 1, kSize);
  TrainConfig c = small_config(1);
  auto m = Model<float>::build(small_spec(), 0);
  CHECK_THROWS_AS(fit<float>(m, {}, items, c), DataError);
  CHECK_THROWS_AS(fit<float>(m, items, {}, c), DataError);
  c.epochs = 0;
  CHECK_THROWS_AS(fit<float>(m, items, items, c), ConfigError);
}

TEST_CASE("epoch callback, log and best checkpoint") {
  const auto train = testsupport::blob_items(4, 2, kSize);
  const auto val = testsupport::blob_items(2, 3, kSize);
  const TrainConfig c = small_config(3);
  auto m = Model<float>::build(configured_spec(small_spec(), c), init_seed(c));
  const auto dir = testsupport::fresh_dir("trainer_best");
  FitOptions opt;
  opt.best_checkpoint = dir / "best.ckpt";
  std::size_t calls = 0;
  opt.on_epoch = [&](const EpochLog& log) { CHECK(log.epoch == ++calls); };
  const FitSummary s = fit<float>(m, train, val, c, opt);
  CHECK(calls == 3);
  CHECK(std::filesystem::exists(opt.best_checkpoint));
  CHECK(s.best_epoch >= 1);
  for (const auto& log : s.logs) CHECK(log.validation.f1 <= s.best_f1);
  CHECK(s.logs[s.best_epoch - 1].validation.f1 == s.best_f1);
  for (const auto& log : s.logs) {
    REQUIRE(log.validation.degree_of_overfitting.has_value());
    CHECK(*log.validation.degree_of_overfitting ==
          doctest::Approx(log.train_accuracy - log.validation.accuracy));
  }

  std::ostringstream os;
  write_epoch_log(os, s.logs);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  CHECK(line == kEpochLogHeader);
  std::size_t rows = 0;
  while (std::getline(is, line)) ++rows;
  CHECK(rows == 3);
}

TEST_CASE("dropout sweep") {
  const auto train = testsupport::blob_items(4, 4, kSize);
  const auto val = testsupport::blob_items(2, 5, kSize);
  const TrainConfig c = small_config(1);
  const std::vector<double> zero = {0.0};
  const SweepResult r = sweep_dropout<float>(small_spec(), train, val, c, zero);
  REQUIRE(r.rows.size() == 1);
  CHECK(r.rows[0].ok);

  auto m = Model<float>::build(configured_spec(small_spec(), c), init_seed(c));
  const FitSummary s = fit<float>(m, train, val, c);
  CHECK(r.rows[0].train_accuracy == s.logs.back().train_accuracy);
  CHECK(r.rows[0].validation_accuracy == s.logs.back().validation.accuracy);
  CHECK(r.rows[0].f1 == s.logs.back().validation.f1);
  CHECK(r.rows[0].overfit_degree == doctest::Approx(r.rows[0].train_accuracy - r.rows[0].validation_accuracy));

  const std::vector<double> unsorted = {0.5, 0.3};
  CHECK_THROWS_AS(sweep_dropout<float>(small_spec(), train, val, c, unsorted), ConfigError);
  const std::vector<double> out_of_range = {0.3, 1.0};
  CHECK_THROWS_AS(sweep_dropout<float>(small_spec(), train, val, c, out_of_range), ConfigError);

  SweepResult fake;
  fake.rows.push_back({0.3, 0.9, 0.8, 0.1, 0.75, true, {}});
  fake.rows.push_back({0.4, 0, 0, 0, 0, false, "diverged"});
  std::ostringstream os;
  write_sweep_csv(os, fake);
  CHECK(os.str() == std::string(kSweepHeader) + "\n0.30,0.900000,0.800000,0.100000,0.750000,ok\n0.40,,,,,failed: diverged\n");
}
