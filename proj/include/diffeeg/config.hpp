#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "diffeeg/balance.hpp"
#include "diffeeg/classifiers.hpp"
#include "diffeeg/dataset.hpp"
#include "diffeeg/diffusion.hpp"
#include "diffeeg/evaluation.hpp"
#include "diffeeg/network.hpp"
#include "diffeeg/schedule.hpp"
#include "diffeeg/signal.hpp"

namespace diffeeg {

// Everything a command can be told. Defaults describe the desk-scale
// synthetic setup; geometry that follows from the data (channel count,
// segment length, conditioner size) is filled in at run time.
struct Config {
  std::string patient = "synthetic";
  std::uint64_t seed = 0;
  unsigned jobs = 1;

  SyntheticProfile synth;
  double synth_duration_s = 27000.0;
  std::vector<double> synth_onsets{4815.0, 13470.0, 22125.0};

  DatasetSpec dataset;
  ScheduleConfig schedule;
  EpsNetConfig net;
  std::size_t stft_window = 32;
  std::size_t stft_hop = 32;
  TrainOptions train;
  BalancePlan balance;
  ClassifierConfig clf;
  FitOptions fit;
  AlarmPolicy policy;
  std::size_t generate_count = 10;

  Config();
};

struct ConfigKey {
  std::string name;  // dotted path, e.g. "net.layers"
  std::string help;
  std::function<nlohmann::json(const Config&)> get;
  // Throws ConfigError when the value has the wrong type or range.
  std::function<void(Config&, const nlohmann::json&)> set;
};

const std::vector<ConfigKey>& config_keys();

// Nested objects address dotted keys. Unknown keys throw ConfigError.
void apply_json(Config& config, const nlohmann::json& doc);
// "key=value"; the value is read as JSON, or as a plain string if that fails.
void apply_override(Config& config, std::string_view assignment);
Config load_config(const std::string& path);

// Throws ConfigError when any part is out of range.
void validate(const Config& config);

// Every key as a nested document.
nlohmann::json to_json(const Config& config);
// One line per key: name, default, help.
std::string describe_keys();

}  // namespace diffeeg
