#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "scdc/checkpoint.hpp"
#include "scdc/config.hpp"
#include "scdc/error.hpp"

using namespace scdc;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name, const std::string& content) {
  const fs::path p = fs::temp_directory_path() / ("scdc_test_" + name);
  std::ofstream(p) << content;
  return p;
}

void check_same(const std::vector<const nn::Parameter*>& a, const std::vector<const nn::Parameter*>& b) {
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i]->name == b[i]->name);
    CHECK(a[i]->value == b[i]->value);
  }
}

}  // namespace

TEST_CASE("config keys") {
  RunConfig c;
  c.set("K", "7");
  c.set("hidden", "30, 20");
  c.set("learning_rate", "0.003");
  c.set("robbins_monro", "true");
  c.set("seed", "42");
  c.set("optimizer", "momentum");
  c.set("data", "points.csv");
  CHECK(c.K == 7);
  CHECK(c.hidden == std::vector<std::size_t>{30, 20});
  CHECK(c.learning_rate == 0.003);
  CHECK(c.robbins_monro);
  CHECK(*c.seed == 42);
  CHECK(c.data == fs::path("points.csv"));
  CHECK_THROWS_AS(c.set("no_such_key", "1"), UsageError);
  CHECK_THROWS_AS(c.set("K", "seven"), UsageError);
  CHECK_THROWS_AS(c.set("K", "7x"), UsageError);
  CHECK_THROWS_AS(c.set("update_workers", "maybe"), UsageError);
  CHECK_THROWS_AS(c.set("optimizer", "rmsprop"), UsageError);
  CHECK(RunConfig::keys().front() == "model");
  for (const std::string& k : RunConfig::keys()) {
    std::string v = "2";
    if (k == "model") v = "scdc";
    if (k == "optimizer") v = "adam";
    if (k == "robbins_monro" || k == "update_workers" || k == "skip") v = "yes";
    CHECK_NOTHROW(RunConfig().set(k, v));
  }

  const vmp::BayesConfig b = c.bayes();
  CHECK(b.K == 7);
  CHECK(b.prior.K == 7);
  CHECK(b.prior.alpha0 == doctest::Approx(0.05 / 7));
  CHECK(b.optimizer.kind == nn::OptimizerKind::kSgdMomentum);
  CHECK(b.optimizer.learning_rate == 0.003);
  CHECK(RunConfig().bayes().optimizer.learning_rate == 1e-2);
  CHECK(RunConfig().scdc().optimizer.learning_rate == 1e-3);

  RunConfig bad;
  bad.model = "vae";
  CHECK_THROWS_AS(bad.validate(), UsageError);
  bad.model = "scdc";
  bad.batch_size = 0;
  CHECK_THROWS_AS(bad.validate(), UsageError);
}

TEST_CASE("config files") {
  const fs::path ok = temp_file("ok.cfg", "# comment\n\nK = 5\n  epochs=3  \nhidden = 8,8\n");
  const auto kv = read_config_file(ok);
  REQUIRE(kv.size() == 3);
  CHECK(kv[0] == std::make_pair(std::string("K"), std::string("5")));
  CHECK(kv[1] == std::make_pair(std::string("epochs"), std::string("3")));
  const fs::path bad = temp_file("bad.cfg", "K = 5\nnot a pair\n");
  try {
    read_config_file(bad);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find(":2") != std::string::npos);
  }
  CHECK_THROWS_AS(read_config_file("/nonexistent/dir/x.cfg"), IoError);
  fs::remove(ok);
  fs::remove(bad);
}

TEST_CASE("bayes checkpoint round trip") {
  std::mt19937_64 rng(1);
  vmp::BayesConfig c;
  c.K = 4;
  c.prior = MixturePrior::sparse_default(4, 2);
  c.hidden = {7, 5};
  c.skip = true;
  Checkpoint cp{"bayes", vmp::init_bayes_model(3, 2, c, rng), std::nullopt};
  cp.bayes->globals.workers[1].beta = expfam::BetaNat::from_shape(3.25, 0.5);

  const fs::path p = fs::temp_directory_path() / "scdc_test_bayes.json";
  save_checkpoint(p, cp);
  const Checkpoint back = load_checkpoint(p);
  fs::remove(p);
  REQUIRE(back.model == "bayes");
  REQUIRE(back.bayes);
  const vmp::BayesModel& a = *cp.bayes;
  const vmp::BayesModel& b = *back.bayes;
  CHECK(a.globals.pi.eta == b.globals.pi.eta);
  for (std::size_t k = 0; k < 4; ++k) {
    CHECK(a.globals.components[k].h1 == b.globals.components[k].h1);
    CHECK(a.globals.components[k].h2 == b.globals.components[k].h2);
    CHECK(a.globals.components[k].h3 == b.globals.components[k].h3);
    CHECK(a.globals.components[k].h4 == b.globals.components[k].h4);
  }
  CHECK(a.globals.workers[1].beta.eta == b.globals.workers[1].beta.eta);
  CHECK(a.prior.alpha0 == b.prior.alpha0);
  CHECK(a.prior.niw.S == b.prior.niw.S);
  CHECK(a.worker_prior.alpha.eta == b.worker_prior.alpha.eta);
  check_same(a.recognition.parameters(), b.recognition.parameters());
  check_same(a.decoder.parameters(), b.decoder.parameters());
  CHECK(a.decoder.spec().heads[1].clamp == b.decoder.spec().heads[1].clamp);
  CHECK(b.recognition.spec().skip);
  CHECK(checkpoint_to_string(cp) == checkpoint_to_string(back));
}

TEST_CASE("scdc checkpoint round trip") {
  std::mt19937_64 rng(2);
  amortized::ScdcConfig c;
  c.K = 3;
  c.hidden = {6};
  Checkpoint cp{"scdc", std::nullopt, amortized::init_scdc_model(2, 4, c, rng)};
  const Checkpoint back = checkpoint_from_string(checkpoint_to_string(cp));
  REQUIRE(back.scdc);
  auto pa = cp.scdc->parameters();
  auto pb = const_cast<amortized::ScdcModel&>(*back.scdc).parameters();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->value == pb[i]->value);
}

TEST_CASE("malformed checkpoints") {
  CHECK_THROWS_AS(checkpoint_from_string("{"), ParseError);
  CHECK_THROWS_AS(checkpoint_from_string("{\"format\": \"other\", \"version\": 1}"), ParseError);
  CHECK_THROWS_AS(checkpoint_from_string("{\"format\": \"scdc-checkpoint\", \"version\": 99}"), ParseError);
  CHECK_THROWS_AS(checkpoint_from_string("{\"format\": \"scdc-checkpoint\", \"version\": 1, \"model\": \"bayes\"}"),
                  ParseError);
  CHECK_THROWS_AS(load_checkpoint("/nonexistent/ckpt.json"), IoError);

  std::mt19937_64 rng(3);
  amortized::ScdcConfig c;
  c.K = 2;
  c.hidden = {3};
  const std::string good = checkpoint_to_string({"scdc", std::nullopt, amortized::init_scdc_model(2, 1, c, rng)});
  std::string truncated = good.substr(0, good.size() / 2);
  CHECK_THROWS_AS(checkpoint_from_string(truncated), ParseError);
}
