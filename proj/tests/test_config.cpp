#include <cstdio>
#include <fstream>
#include <set>
#include <string>

#include "doctest.h"
#include "diffeeg/config.hpp"
#include "diffeeg/errors.hpp"

using namespace diffeeg;
using nlohmann::json;

TEST_CASE("keys are unique and round-trip through the nested document") {
  std::set<std::string> names;
  for (const auto& k : config_keys()) CHECK(names.insert(k.name).second);
  Config c;
  c.seed = 17;
  c.net.layers = 9;
  c.balance.method = BalanceMethod::kRecombine;
  c.clf.scales = {3, 9};
  Config back;
  apply_json(back, to_json(c));
  CHECK(to_json(back) == to_json(c));
  CHECK(back.seed == 17);
  CHECK(back.clf.scales == std::vector<std::size_t>{3, 9});
}

TEST_CASE("nested and dotted documents are equivalent") {
  Config a, b;
  apply_json(a, json::parse(R"({"net": {"layers": 4, "blocks": 2}, "eval": {"k": 3}})"));
  apply_json(b, json::parse(R"({"net.layers": 4, "net.blocks": 2, "eval.k": 3})"));
  CHECK(to_json(a) == to_json(b));
  CHECK(a.net.layers == 4);
  CHECK(a.policy.k == 3);
}

TEST_CASE("unknown keys and bad values are rejected") {
  Config c;
  CHECK_THROWS_AS(apply_json(c, json::parse(R"({"net": {"layerz": 4}})")), ConfigError);
  CHECK_THROWS_AS(apply_json(c, json::parse(R"({"colour": "blue"})")), ConfigError);
  CHECK_THROWS_AS(apply_json(c, json::parse(R"({"net": {"layers": "four"}})")), ConfigError);
  CHECK_THROWS_AS(apply_json(c, json::parse(R"({"net": {"layers": -1}})")), ConfigError);
  CHECK_THROWS_AS(apply_json(c, json::parse(R"({"net": {"layers": 2.5}})")), ConfigError);
  CHECK_THROWS_AS(apply_json(c, json::parse(R"([1, 2])")), ConfigError);
  CHECK_THROWS_AS(apply_override(c, "balance.method=smote"), ConfigError);
  CHECK_THROWS_AS(apply_override(c, "no_equals_sign"), ConfigError);
  CHECK_THROWS_AS(apply_override(c, "missing.key=1"), ConfigError);
}

TEST_CASE("overrides parse JSON values and fall back to strings") {
  Config c;
  apply_override(c, "fit.lr=0.01");
  apply_override(c, "clf.arch=cnn");
  apply_override(c, "clf.arch=\"transformer\"");
  apply_override(c, "synth.onsets=[100, 200.5]");
  CHECK(c.fit.lr == 0.01);
  CHECK(c.clf.arch == Arch::kTransformer);
  CHECK(c.synth_onsets == std::vector<double>{100.0, 200.5});
}

TEST_CASE("validation") {
  CHECK_NOTHROW(validate(Config{}));
  Config c;
  c.stft_hop = 16;
  CHECK_THROWS_AS(validate(c), ConfigError);
  c = Config{};
  c.dataset.interictal_gap_hours = 0.01;
  CHECK_THROWS_AS(validate(c), ConfigError);
  c = Config{};
  c.policy.k = 12;
  CHECK_THROWS_AS(validate(c), ConfigError);
  c = Config{};
  c.jobs = 0;
  CHECK_THROWS_AS(validate(c), ConfigError);
}

TEST_CASE("config files") {
  const std::string path = "test_config_tmp.json";
  {
    std::ofstream(path) << R"({"seed": 4, "train": {"iters": 12}})";
  }
  const auto c = load_config(path);
  CHECK(c.seed == 4);
  CHECK(c.train.iters == 12);
  {
    std::ofstream(path) << "{ not json";
  }
  CHECK_THROWS_AS(load_config(path), ConfigError);
  std::remove(path.c_str());
  CHECK_THROWS_AS(load_config("does/not/exist.json"), ConfigError);
}

TEST_CASE("key listing names every key with its default") {
  const auto text = describe_keys();
  for (const auto& k : config_keys()) CHECK(text.find(k.name) != std::string::npos);
  CHECK(text.find("\"downsample\"") != std::string::npos);
}
