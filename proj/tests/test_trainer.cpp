#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>

#include "doctest.h"
#include "fldd/checkpoint.hpp"
#include "fldd/config.hpp"
#include "fldd/io.hpp"
#include "fldd/trainer.hpp"

using namespace fldd;

namespace {

RunConfig tiny_config() {
  RunConfig c;
  c.data.kind = "gmm";
  c.data.gmm.grid = 6;
  c.data.gmm.mean1 = {2.0, 2.0};
  c.data.gmm.mean2 = {5.0, 5.0};
  c.model.steps = 2;
  c.net.width = 16;
  c.net.depth = 2;
  c.net.time_dim = 4;
  c.optim.lr = 1e-2;
  c.trainer.steps = 20;
  c.trainer.warmup_steps = 10;
  c.trainer.tau_steps = 10;
  c.trainer.batch = 16;
  c.trainer.eval_every = 5;
  c.trainer.eval_size = 8;
  c.trainer.eval_tv_samples = 500;
  return c;
}

std::string temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("fldd_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

}  // namespace

TEST_SUITE("config") {

TEST_CASE("defaults and overrides") {
  RunConfig c = parse_config("# comment\nmodel.T = 4\nnet.width=32\n\ndata.kind=random-walk\ndata.length=5\n");
  CHECK(c.model.steps == 4);
  CHECK(c.net.width == 32);
  CHECK(c.data.length == 5);
  CHECK(c.optim.lr == 2e-4);
  CHECK(c.trainer.warmup_steps == 10000);
  apply_overrides(c, {"model.T=3", "trainer.seed=9"});
  CHECK(c.model.steps == 3);
  CHECK(c.trainer.seed == 9);
}

TEST_CASE("unknown keys and bad values are rejected") {
  CHECK_THROWS_AS(parse_config("model.steps=3\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("model.T=three\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("model.T\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("model.forward=sideways\n"), ConfigError);
  RunConfig c;
  CHECK_THROWS_AS(apply_overrides(c, {"nope=1"}), ConfigError);
}

TEST_CASE("canonical text round-trips") {
  RunConfig c = tiny_config();
  c.optim.lr = 0.1 + 0.2;
  c.model.forward = ForwardKind::Masked;
  c.model.prior = PriorKind::Absorbing;
  const std::string text = to_text(c);
  CHECK(to_text(parse_config(text)) == text);
  CHECK(parse_config(text).optim.lr == c.optim.lr);
}

TEST_CASE("structural validation") {
  RunConfig c = tiny_config();
  CHECK_NOTHROW(validate(c));
  c.model.forward = ForwardKind::Masked;
  CHECK_THROWS_AS(validate(c), ConfigError);
  c = tiny_config();
  c.net.time_dim = 3;
  CHECK_THROWS_AS(validate(c), ConfigError);
  c = tiny_config();
  c.model.steps = 0;
  CHECK_THROWS_AS(validate(c), ConfigError);
}

}

TEST_SUITE("checkpoint") {

TEST_CASE("serialization round-trips byte for byte") {
  Checkpoint ck;
  ck.put("a", nd::Array({2, 3}, {1, 2, 3, 4, 5, std::numeric_limits<double>::denorm_min()}));
  ck.put("b", nd::Array::scalar(-0.0));
  ck.put_text("note", "hello\nworld");
  ck.put_words("w", {0xffffffffffffffffull, 0x0123456789abcdefull});
  const auto bytes = ck.serialize();
  const Checkpoint back = Checkpoint::deserialize(bytes);
  CHECK(back.serialize() == bytes);
  CHECK(back.get_text("note") == "hello\nworld");
  CHECK(back.get_words("w")[1] == 0x0123456789abcdefull);
  CHECK(std::signbit(back.get("b")[0]));
}

TEST_CASE("version, truncation and trailing bytes are detected") {
  Checkpoint ck;
  ck.put("a", nd::Array::from({1, 2}));
  auto bytes = ck.serialize();
  auto bumped = bytes;
  bumped[4] = 2;
  CHECK_THROWS_AS(Checkpoint::deserialize(bumped), CheckpointVersionError);
  auto truncated = bytes;
  truncated.pop_back();
  CHECK_THROWS_AS(Checkpoint::deserialize(truncated), CheckpointError);
  auto trailing = bytes;
  trailing.push_back(0);
  CHECK_THROWS_AS(Checkpoint::deserialize(trailing), CheckpointError);
  auto magic = bytes;
  magic[0] = 'X';
  CHECK_THROWS_AS(Checkpoint::deserialize(magic), CheckpointError);
}

}

TEST_SUITE("trainer") {

TEST_CASE("zero steps save the initialization") {
  RunConfig c = tiny_config();
  c.trainer.steps = 0;
  Trainer trainer(c, make_dataset(c));
  const auto fresh = trainer.checkpoint().serialize();
  const std::string dir = temp_dir("zero");
  const auto rows = trainer.run(dir);
  CHECK(rows.size() == 1);
  CHECK(read_bytes(dir + "/final.bin") == fresh);
}

TEST_CASE("a fixed seed gives identical metrics") {
  const RunConfig c = tiny_config();
  Trainer a(c, make_dataset(c)), b(c, make_dataset(c));
  const auto ra = a.run(), rb = b.run();
  REQUIRE(ra.size() == rb.size());
  for (std::size_t i = 0; i < ra.size(); ++i) CHECK(format_metrics_row(ra[i]) == format_metrics_row(rb[i]));
  CHECK(a.checkpoint().serialize() == b.checkpoint().serialize());
}

TEST_CASE("phases switch at the warm-up boundary") {
  const RunConfig c = tiny_config();
  Trainer t(c, make_dataset(c));
  CHECK(t.phase(9) == Estimator::Relaxed);
  CHECK(t.phase(10) == Estimator::Reinforce);
  CHECK(t.tau(0).value() == 1.0);
  CHECK(!t.tau(10).has_value());
  const auto rows = t.run();
  CHECK(rows.front().step == 0);
  CHECK(rows.back().step == 20);
  CHECK(rows.back().phase == Estimator::Reinforce);
  CHECK(!rows.back().tau.has_value());
  CHECK(rows[1].tau.has_value());
}

TEST_CASE("resuming from a checkpoint continues the same run") {
  RunConfig c = tiny_config();
  Trainer straight(c, make_dataset(c));
  for (int i = 0; i < 14; ++i) straight.train_step();

  Trainer first(c, make_dataset(c));
  for (int i = 0; i < 7; ++i) first.train_step();
  const auto saved = Checkpoint::deserialize(first.checkpoint().serialize());
  Trainer second(c, make_dataset(c));
  second.restore(saved);
  CHECK(second.checkpoint().serialize() == saved.serialize());
  for (int i = 0; i < 7; ++i) second.train_step();
  CHECK(second.checkpoint().serialize() == straight.checkpoint().serialize());
}

TEST_CASE("a loaded model evaluates bit-identically") {
  const RunConfig c = tiny_config();
  Trainer t(c, make_dataset(c));
  for (int i = 0; i < 12; ++i) t.train_step();
  const LoadedModel loaded = load_model(Checkpoint::deserialize(t.checkpoint().serialize()));
  EvalOptions opts;
  opts.points = 16;
  opts.tv_samples = 1000;
  const auto a = evaluate(t.model(), t.data(), opts), b = evaluate(*loaded.model, t.data(), opts);
  CHECK(std::memcmp(&a.bound, &b.bound, sizeof(double)) == 0);
  CHECK(*a.tv == *b.tv);
  CHECK(*a.exact_nll == *b.exact_nll);
  CHECK(loaded.step == 12);
}

TEST_CASE("non-finite losses are skipped then abort the run") {
  const RunConfig c = tiny_config();
  Trainer t(c, make_dataset(c));
  t.model().reverse.network().output_bias().mutable_value()[0] = std::numeric_limits<double>::quiet_NaN();
  for (int i = 0; i < 99; ++i) CHECK(!t.train_step());
  CHECK_THROWS_AS(t.train_step(), TrainingAborted);
}

TEST_CASE("training never mutates the dataset") {
  const RunConfig c = tiny_config();
  const Dataset data = make_dataset(c);
  Trainer t(c, data);
  t.run();
  CHECK(t.data().points() == data.points());
  CHECK(t.data().weights() == data.weights());
}

TEST_CASE("bound stays above the exact NLL after training") {
  RunConfig c = tiny_config();
  c.trainer.steps = 60;
  c.trainer.warmup_steps = 30;
  c.trainer.tau_steps = 30;
  Trainer t(c, make_dataset(c));
  t.run();
  const auto law = exact_model_law(t.model().reverse);
  BoundEvaluator bound(t.model());
  Rng rng(1);
  for (std::size_t s = 0; s < law.size(); ++s) {
    const DataPoint x = decode_state(s, 6, 2);
    CHECK(bound(x, rng).total() >= -std::log(law[s]) - 1e-9);
  }
}

TEST_CASE("masked runs use an appended mask category") {
  RunConfig c = tiny_config();
  c.data.kind = "random-walk";
  c.data.length = 3;
  c.model.prior = PriorKind::Absorbing;
  c.model.forward = ForwardKind::Masked;
  const Dataset d = make_dataset(c);
  CHECK(d.categories() == random_walk_categories(3) + 1);
  Trainer t(c, d);
  CHECK(t.model().config.prior.mask == d.categories() - 1);
  const auto rows = t.run();
  CHECK(std::isfinite(*rows.back().bound));
}

TEST_CASE("metrics file layout") {
  const RunConfig c = tiny_config();
  Trainer t(c, make_dataset(c));
  const std::string dir = temp_dir("metrics");
  t.run(dir);
  std::ifstream in(dir + "/metrics.csv");
  std::string header, line;
  std::getline(in, header);
  CHECK(header == "step,phase,tau,loss,bound,exact_nll,tv");
  std::getline(in, line);
  CHECK(line.rfind("0,relaxed,1,,", 0) == 0);
  std::size_t rows = 1;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 5);
}

}

TEST_SUITE("io") {

TEST_CASE("samples csv is 1-based with a header") {
  const std::string csv = samples_csv({{0, 4}, {2, 1}}, 2);
  CHECK(csv == "x1,x2\n1,5\n3,2\n");
  CHECK(samples_csv({}, 3) == "x1,x2,x3\n");
  CHECK(parse_samples_csv(csv) == std::vector<DataPoint>{{0, 4}, {2, 1}});
}

TEST_CASE("P5 images") {
  const std::string img = pgm(2, 1, {0, 255});
  CHECK(img == std::string("P5\n2 1\n255\n") + std::string("\x00\xff", 2));
  const std::string grid = pgm_grid({{0, 1, 1, 0}, {1, 1, 1, 1}}, 2, {0, 255}, 2);
  CHECK(grid.rfind("P5\n5 2\n255\n", 0) == 0);
}

TEST_CASE("atomic writes leave no temporary file") {
  const std::string dir = temp_dir("atomic");
  atomic_write(dir + "/f.txt", std::string("abc"));
  CHECK(read_bytes(dir + "/f.txt") == std::vector<std::uint8_t>{'a', 'b', 'c'});
  CHECK(!std::filesystem::exists(dir + "/f.txt.tmp"));
}

}
