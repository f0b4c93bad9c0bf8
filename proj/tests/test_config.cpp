#include <doctest.h>

#include <fstream>
#include <set>

#include "egan/config.hpp"
#include "test_util.hpp"

using namespace egan;
using namespace egan::config;

TEST_CASE("defaults round-trip through INI") {
  const RunConfig c = default_run_config();
  RunConfig back;
  apply_ini(back, to_ini(c));
  CHECK(to_ini(back) == to_ini(c));
  CHECK(back.train.network == c.train.network);
  CHECK(back.train.hyper.adam_g.lr == c.train.hyper.adam_g.lr);
  CHECK(back.evaluate.classifier.lr == c.evaluate.classifier.lr);
}

TEST_CASE("awkward doubles survive the text form") {
  RunConfig c;
  c.train.hyper.adam_cn.lr = 0.1 + 0.2;
  c.train.hyper.adam_d.eps = 1e-300;
  RunConfig back;
  apply_ini(back, to_ini(c));
  CHECK(back.train.hyper.adam_cn.lr == c.train.hyper.adam_cn.lr);
  CHECK(back.train.hyper.adam_d.eps == c.train.hyper.adam_d.eps);
}

TEST_CASE("file values apply on top of defaults and flags on top of files") {
  test::TempDir dir("cfg");
  std::ofstream(dir / "run.cfg") << "; desk run\n[train]\nsteps = 10\nbatch_size = 16\n\n[network]\nd_z = 6\n";
  RunConfig c = load_config(dir / "run.cfg");
  CHECK(c.train.steps == 10);
  CHECK(c.train.batch_size == 16);
  CHECK(c.train.network.d_z == 6);
  CHECK(c.train.network.g_channels == desk_scale_network().g_channels);
  set_value(c, "train.steps", "25");
  CHECK(c.train.steps == 25);
  CHECK(c.train.batch_size == 16);
}

TEST_CASE("bad config input") {
  RunConfig c;
  CHECK_THROWS_AS(set_value(c, "train.stepz", "1"), ParseError);
  CHECK_THROWS_AS(set_value(c, "steps", "1"), ParseError);
  CHECK_THROWS_AS(set_value(c, "train.steps", "ten"), ParseError);
  CHECK_THROWS_AS(set_value(c, "train.steps", "10x"), ParseError);
  CHECK_THROWS_AS(set_value(c, "dataset.seed", "-1"), ParseError);
  CHECK_THROWS_AS(apply_ini(c, "[train]\nsteps = 1\n[bogus]\nx = 1\n"), ParseError);
  CHECK_THROWS_AS(apply_ini(c, "steps = 1\n"), ParseError);
  CHECK_THROWS_AS(apply_ini(c, "[train\n"), ParseError);
  CHECK_THROWS(load_config("/nonexistent/egan.cfg"));
}

TEST_CASE("every key is listed once") {
  const auto keys = known_keys();
  CHECK(std::set<std::string>(keys.begin(), keys.end()).size() == keys.size());
  RunConfig c;
  for (const auto& k : keys) CHECK_NOTHROW(set_value(c, k, "1"));
}
