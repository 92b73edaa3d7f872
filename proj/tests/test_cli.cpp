#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "doctest.h"
#include "fldd/checkpoint.hpp"
#include "fldd/cli.hpp"
#include "fldd/config.hpp"
#include "fldd/io.hpp"
#include "fldd/trainer.hpp"

using namespace fldd;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result call(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("fldd_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir.string();
}

std::string write_config(const std::string& dir, const std::string& extra = "") {
  const std::string path = dir + "/run.cfg";
  std::ofstream(path) << "data.kind=gmm\ndata.grid=6\ndata.mean1=2,2\ndata.mean2=5,5\n"
                         "model.T=2\nnet.width=16\nnet.depth=2\nnet.time_dim=4\noptim.lr=0.01\n"
                         "trainer.steps=30\ntrainer.warmup_steps=15\ntrainer.tau_steps=15\ntrainer.batch=32\n"
                         "trainer.eval_every=10\ntrainer.eval_size=16\ntrainer.eval_tv_samples=1000\n"
                      << extra;
  return path;
}

double field(const std::string& text, const std::string& key) {
  const auto at = text.find(key + ": ");
  REQUIRE(at != std::string::npos);
  return std::stod(text.substr(at + key.size() + 2));
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("usage and config errors exit with 2") {
  CHECK(call({}).code == 2);
  CHECK(call({"train", "--config", "/nonexistent/run.cfg"}).code == 2);
  CHECK(call({"frobnicate"}).code == 2);
  const std::string dir = scratch("badkey");
  CHECK(call({"train", "--config", write_config(dir, "model.wings=2\n")}).code == 2);
  CHECK(call({"train", "--config", write_config(dir), "--set", "net.time_dim=3"}).code == 2);
  CHECK(call({"oracle-check", "--suite", "nope"}).code == 2);
  CHECK(call({"sample", "--ckpt", dir + "/missing.bin"}).code == 2);
}

TEST_CASE("training zero steps writes the initialization") {
  const std::string dir = scratch("zero");
  const auto r = call({"train", "--config", write_config(dir), "--set", "trainer.steps=0", "--out", dir + "/run"});
  REQUIRE(r.code == 0);
  RunConfig c = load_config(dir + "/run.cfg");
  c.trainer.steps = 0;
  c.trainer.out = dir + "/run";
  Trainer fresh(c, make_dataset(c));
  CHECK(read_bytes(dir + "/run/final.bin") == fresh.checkpoint().serialize());
}

TEST_CASE("train, sample and eval agree") {
  const std::string dir = scratch("flow");
  const auto train = call({"train", "--config", write_config(dir), "--out", dir + "/run"});
  REQUIRE(train.code == 0);
  CHECK(train.out.rfind("step,phase,tau,loss,bound,exact_nll,tv\n", 0) == 0);
  const std::string ckpt = dir + "/run/final.bin";

  SUBCASE("same run twice gives the same metrics") {
    REQUIRE(call({"train", "--config", dir + "/run.cfg", "--out", dir + "/run2"}).code == 0);
    CHECK(read_bytes(dir + "/run/metrics.csv") == read_bytes(dir + "/run2/metrics.csv"));
  }
  SUBCASE("zero samples give a header-only file") {
    REQUIRE(call({"sample", "--ckpt", ckpt, "--n", "0", "--out", dir + "/s0"}).code == 0);
    const auto bytes = read_bytes(dir + "/s0/samples.csv");
    CHECK(std::string(bytes.begin(), bytes.end()) == "x1,x2\n");
  }
  SUBCASE("a fixed seed reproduces samples") {
    REQUIRE(call({"sample", "--ckpt", ckpt, "--n", "50", "--seed", "3", "--out", dir + "/a"}).code == 0);
    REQUIRE(call({"sample", "--ckpt", ckpt, "--n", "50", "--seed", "3", "--out", dir + "/b"}).code == 0);
    CHECK(read_bytes(dir + "/a/samples.csv") == read_bytes(dir + "/b/samples.csv"));
    const auto bytes = read_bytes(dir + "/a/samples.csv");
    const auto pts = parse_samples_csv(std::string(bytes.begin(), bytes.end()));
    CHECK(pts.size() == 50);
    for (const auto& x : pts) CHECK((x[0] < 6 && x[1] < 6));
  }
  SUBCASE("a different step count is refused") {
    CHECK(call({"sample", "--ckpt", ckpt, "--steps", "3", "--out", dir + "/s"}).code == 2);
    CHECK(call({"sample", "--ckpt", ckpt, "--steps", "2", "--n", "5", "--out", dir + "/s"}).code == 0);
  }
  SUBCASE("sample and eval report the same TV") {
    const auto s = call({"sample", "--ckpt", ckpt, "--n", "100000", "--seed", "1", "--out", dir + "/tv"});
    REQUIRE(s.code == 0);
    const auto e = call({"eval", "--ckpt", ckpt, "--out", dir + "/eval.json", "--tv-samples", "100000"});
    REQUIRE(e.code == 0);
    CHECK(std::abs(field(s.out, "tv") - field(e.out, "tv")) < 0.01);
  }
  SUBCASE("eval writes every key") {
    REQUIRE(call({"eval", "--ckpt", ckpt, "--out", dir + "/eval.json"}).code == 0);
    std::ifstream in(dir + "/eval.json");
    const auto j = nlohmann::json::parse(in);
    for (const char* key : {"checkpoint", "step", "categories", "dims", "steps", "bound", "bound_per_dim", "exact_nll",
                            "bound_valid", "tv", "validity_rate", "factorization_gap", "reverse_entropy"}) {
      CHECK(j.contains(key));
    }
    CHECK(j["validity_rate"].is_null());
    CHECK(j["bound_valid"] == true);
    CHECK(j["bound"].get<double>() >= j["exact_nll"].get<double>());
    CHECK(j["reverse_entropy"].size() == 2);
  }
  SUBCASE("a newer checkpoint version exits with 4") {
    auto bytes = read_bytes(ckpt);
    bytes[4] = 7;
    atomic_write(dir + "/future.bin", bytes);
    CHECK(call({"sample", "--ckpt", dir + "/future.bin", "--out", dir + "/f"}).code == 4);
    CHECK(call({"eval", "--ckpt", dir + "/future.bin", "--out", dir + "/f.json"}).code == 4);
  }
}

TEST_CASE("an untrained single-step model on uniform data scores D log K") {
  const std::string dir = scratch("uniform");
  const std::string cfg = write_config(dir, "data.sigma=1e6\nmodel.T=1\ntrainer.steps=0\n");
  REQUIRE(call({"train", "--config", cfg, "--out", dir + "/run"}).code == 0);
  const auto e = call({"eval", "--ckpt", dir + "/run/final.bin", "--out", dir + "/eval.json"});
  REQUIRE(e.code == 0);
  CHECK(field(e.out, "bound") == doctest::Approx(2.0 * std::log(6.0)).epsilon(0.01));
  CHECK(field(e.out, "exact_nll") == doctest::Approx(2.0 * std::log(6.0)).epsilon(0.01));
}

TEST_CASE("random walks report a validity rate") {
  const std::string dir = scratch("walk");
  const std::string cfg = write_config(dir, "data.kind=random-walk\ndata.length=4\ntrainer.steps=0\n");
  REQUIRE(call({"train", "--config", cfg, "--out", dir + "/run"}).code == 0);
  const auto s = call({"sample", "--ckpt", dir + "/run/final.bin", "--n", "200", "--out", dir + "/s"});
  REQUIRE(s.code == 0);
  CHECK(s.out.find("validity_rate: ") != std::string::npos);
  const auto e = call({"eval", "--ckpt", dir + "/run/final.bin", "--out", dir + "/eval.json"});
  CHECK(e.out.find("validity_rate: null") == std::string::npos);
}

TEST_CASE("image trajectories are exported as PGM files") {
  const std::string dir = scratch("images");
  const std::string cfg = write_config(dir, std::string("data.kind=idx\ndata.images=") + FLDD_TEST_DATA_DIR +
                                               "/digits-images-idx3-ubyte\ndata.limit=20\n"
                                               "model.prior=absorbing\nmodel.forward=masked\ntrainer.steps=0\n");
  REQUIRE(call({"train", "--config", cfg, "--out", dir + "/run"}).code == 0);
  REQUIRE(call({"export-trajectories", "--ckpt", dir + "/run/final.bin", "--n", "2", "--out", dir + "/traj"}).code ==
          0);
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(dir + "/traj")) {
    CHECK(e.path().extension() == ".pgm");
    const auto bytes = read_bytes(e.path().string());
    CHECK(std::string(bytes.begin(), bytes.begin() + 2) == "P5");
    ++files;
  }
  CHECK(files == 2 * 3);
  REQUIRE(call({"sample", "--ckpt", dir + "/run/final.bin", "--n", "4", "--trajectory", "--out", dir + "/s"}).code == 0);
  CHECK(fs::exists(dir + "/s/grid_t0.pgm"));
  CHECK(fs::exists(dir + "/s/grid_t2.pgm"));
}

TEST_CASE("oracle-check prints one line per property") {
  const auto r = call({"oracle-check", "--suite", "coupling"});
  CHECK(r.code == 0);
  CHECK(r.out.rfind("PASS ", 0) == 0);
}

}
