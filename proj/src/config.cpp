#include "diffeeg/config.hpp"

#include <fstream>
#include <sstream>

#include "diffeeg/errors.hpp"

namespace diffeeg {

using nlohmann::json;

Config::Config() {
  synth.signature_amp = 0.25;

  dataset.preictal_minutes = 5.0;
  dataset.interictal_gap_hours = 1.05;
  dataset.min_seizures = 2;
  dataset.segment_seconds = 8.0;

  net.residual_channels = 8;
  net.layers = 6;
  net.blocks = 2;

  train.iters = 200;
  train.lr = 1e-3;

  balance.window_s = 8.0;
  fit.epochs_max = 30;
}

namespace {

template <typename T>
T read_value(const std::string& key, const json& v) {
  try {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError("");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ConfigError("");
      if constexpr (std::is_unsigned_v<T>) {
        if (v.is_number_unsigned() == false && v.get<long long>() < 0) throw ConfigError("");
      }
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError("");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError("");
    }
    return v.get<T>();
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': unexpected value " + v.dump());
  }
}

template <typename T>
ConfigKey field(std::string name, std::string help, std::function<T&(Config&)> ref) {
  ConfigKey k;
  k.name = name;
  k.help = std::move(help);
  k.get = [ref](const Config& c) { return json(ref(const_cast<Config&>(c))); };
  k.set = [ref, name](Config& c, const json& v) {
    if constexpr (std::is_same_v<T, std::vector<double>> || std::is_same_v<T, std::vector<std::size_t>>) {
      if (!v.is_array()) throw ConfigError("config key '" + name + "': expected an array, got " + v.dump());
      T out;
      for (const auto& item : v) out.push_back(read_value<typename T::value_type>(name, item));
      ref(c) = std::move(out);
    } else {
      ref(c) = read_value<T>(name, v);
    }
  };
  return k;
}

#define DIFFEEG_FIELD(type, key, member, help) \
  field<type>(key, help, [](Config& c) -> type& { return c.member; })

std::vector<ConfigKey> build_keys() {
  std::vector<ConfigKey> keys{
      DIFFEEG_FIELD(std::string, "patient", patient, "patient label used in reports"),
      DIFFEEG_FIELD(std::uint64_t, "seed", seed, "root seed of every random stream"),
      DIFFEEG_FIELD(unsigned, "jobs", jobs, "worker threads for folds and sampling"),

      DIFFEEG_FIELD(std::size_t, "synth.channels", synth.channels, "synthetic EEG channels"),
      DIFFEEG_FIELD(double, "synth.sample_rate", synth.sample_rate, "Hz"),
      DIFFEEG_FIELD(double, "synth.background_hz", synth.background_hz, "background rhythm frequency"),
      DIFFEEG_FIELD(double, "synth.background_amp", synth.background_amp, "background rhythm amplitude"),
      DIFFEEG_FIELD(double, "synth.pink_level", synth.pink_level, "pink noise amplitude"),
      DIFFEEG_FIELD(double, "synth.signature_hz", synth.signature_hz, "preictal signature frequency"),
      DIFFEEG_FIELD(double, "synth.signature_amp", synth.signature_amp, "preictal signature amplitude at onset"),
      DIFFEEG_FIELD(double, "synth.ramp_s", synth.ramp_s, "seconds over which the signature builds up"),
      DIFFEEG_FIELD(double, "synth.ramp_floor", synth.ramp_floor, "signature fraction at the start of the ramp"),
      DIFFEEG_FIELD(double, "synth.seizure_s", synth.seizure_s, "seizure duration"),
      DIFFEEG_FIELD(double, "synth.ictal_amp", synth.ictal_amp, "ictal rhythm amplitude"),
      DIFFEEG_FIELD(double, "synth.duration_s", synth_duration_s, "recording length"),
      DIFFEEG_FIELD(std::vector<double>, "synth.onsets", synth_onsets, "seizure onsets in seconds"),

      DIFFEEG_FIELD(double, "dataset.preictal_minutes", dataset.preictal_minutes, "preictal window before onset"),
      DIFFEEG_FIELD(double, "dataset.interictal_gap_hours", dataset.interictal_gap_hours,
                    "minimum distance of interictal data from any seizure"),
      DIFFEEG_FIELD(double, "dataset.merge_gap_minutes", dataset.merge_gap_minutes,
                    "seizures closer than this are merged"),
      DIFFEEG_FIELD(int, "dataset.min_seizures", dataset.min_seizures, "admission needs more seizures than this"),
      DIFFEEG_FIELD(double, "dataset.max_seizures_per_day", dataset.max_seizures_per_day,
                    "admission needs fewer seizures per day than this"),
      DIFFEEG_FIELD(double, "dataset.min_inter_pre_ratio", dataset.min_inter_pre_ratio,
                    "admission needs a larger interictal:preictal ratio than this"),
      DIFFEEG_FIELD(double, "dataset.segment_seconds", dataset.segment_seconds, "segment length"),

      DIFFEEG_FIELD(int, "schedule.steps", schedule.steps, "diffusion steps T"),
      DIFFEEG_FIELD(double, "schedule.beta_start", schedule.beta_start, "first noise variance"),
      DIFFEEG_FIELD(double, "schedule.beta_end", schedule.beta_end, "last noise variance"),

      DIFFEEG_FIELD(std::size_t, "net.residual_channels", net.residual_channels, "residual channels C"),
      DIFFEEG_FIELD(std::size_t, "net.layers", net.layers, "residual layers N"),
      DIFFEEG_FIELD(std::size_t, "net.blocks", net.blocks, "dilation cycles; layers per cycle = layers / blocks"),
      DIFFEEG_FIELD(std::size_t, "net.kernel", net.kernel, "dilated convolution kernel size"),
      DIFFEEG_FIELD(std::size_t, "net.upsample_kernel_f", net.upsample_kernel_f,
                    "frequency kernel of the conditioner upsampler"),
      DIFFEEG_FIELD(double, "net.upsample_slope", net.upsample_slope, "leaky relu slope of the upsampler"),
      DIFFEEG_FIELD(std::size_t, "stft.window", stft_window, "conditioner STFT window in samples"),
      DIFFEEG_FIELD(std::size_t, "stft.hop", stft_hop, "conditioner STFT hop in samples"),

      DIFFEEG_FIELD(long, "train.iters", train.iters, "total diffusion training iterations"),
      DIFFEEG_FIELD(std::size_t, "train.batch", train.batch, "diffusion training batch size"),
      DIFFEEG_FIELD(double, "train.lr", train.lr, "diffusion Adam learning rate"),

      DIFFEEG_FIELD(double, "balance.window_s", balance.window_s, "sliding window length"),
      DIFFEEG_FIELD(double, "balance.stride_s", balance.stride_s, "sliding window stride"),

      DIFFEEG_FIELD(std::size_t, "clf.hidden", clf.hidden, "classifier width"),
      DIFFEEG_FIELD(std::vector<std::size_t>, "clf.scales", clf.scales, "cnn kernel sizes"),
      DIFFEEG_FIELD(std::size_t, "clf.dilation", clf.dilation, "cnn branch dilation"),
      DIFFEEG_FIELD(std::size_t, "clf.heads", clf.heads, "transformer attention heads"),
      DIFFEEG_FIELD(std::size_t, "clf.patch", clf.patch, "transformer embedding stride"),

      DIFFEEG_FIELD(double, "fit.lr", fit.lr, "classifier Adam learning rate"),
      DIFFEEG_FIELD(std::size_t, "fit.batch", fit.batch, "classifier batch size"),
      DIFFEEG_FIELD(int, "fit.epochs_max", fit.epochs_max, "classifier epoch limit"),
      DIFFEEG_FIELD(int, "fit.patience", fit.patience, "epochs without validation gain before stopping"),
      DIFFEEG_FIELD(int, "fit.min_epochs", fit.min_epochs, "epochs before early stopping may trigger"),

      DIFFEEG_FIELD(int, "eval.k", policy.k, "positive decisions needed among the last n"),
      DIFFEEG_FIELD(int, "eval.n", policy.n, "decision window"),
      DIFFEEG_FIELD(double, "eval.refractory_s", policy.refractory_s, "silence after an alarm"),
      DIFFEEG_FIELD(double, "eval.sph_s", policy.sph_s, "prediction horizon"),
      DIFFEEG_FIELD(double, "eval.sop_s", policy.sop_s, "occurrence period"),

      DIFFEEG_FIELD(std::size_t, "generate.count", generate_count, "segments written by generate"),
  };

  // Enumerations travel as names.
  ConfigKey method;
  method.name = "balance.method";
  method.help = "downsample | sliding | recombine | diffusion";
  method.get = [](const Config& c) { return json(std::string(to_string(c.balance.method))); };
  method.set = [](Config& c, const json& v) {
    try {
      c.balance.method = parse_balance_method(read_value<std::string>("balance.method", v));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  };
  keys.push_back(std::move(method));

  ConfigKey arch;
  arch.name = "clf.arch";
  arch.help = "mlp | cnn | transformer";
  arch.get = [](const Config& c) { return json(std::string(to_string(c.clf.arch))); };
  arch.set = [](Config& c, const json& v) {
    try {
      c.clf.arch = parse_arch(read_value<std::string>("clf.arch", v));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  };
  keys.push_back(std::move(arch));

  ConfigKey strides;
  strides.name = "net.upsample_t";
  strides.help = "time strides of the two upsampling layers; product must equal stft.hop";
  strides.get = [](const Config& c) { return json(std::vector<std::size_t>{c.net.upsample_t[0], c.net.upsample_t[1]}); };
  strides.set = [](Config& c, const json& v) {
    if (!v.is_array() || v.size() != 2) throw ConfigError("config key 'net.upsample_t': expected two strides");
    c.net.upsample_t = {read_value<std::size_t>("net.upsample_t", v[0]), read_value<std::size_t>("net.upsample_t", v[1])};
  };
  keys.push_back(std::move(strides));
  return keys;
}

#undef DIFFEEG_FIELD

const ConfigKey* find_key(std::string_view name) {
  for (const auto& k : config_keys())
    if (k.name == name) return &k;
  return nullptr;
}

void apply_flat(Config& config, const json& doc, const std::string& prefix) {
  if (!doc.is_object()) throw ConfigError("config: expected an object" + (prefix.empty() ? "" : " at '" + prefix + "'"));
  for (const auto& [name, value] : doc.items()) {
    const std::string key = prefix.empty() ? name : prefix + "." + name;
    if (const auto* k = find_key(key)) {
      k->set(config, value);
    } else if (value.is_object()) {
      apply_flat(config, value, key);
    } else {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = build_keys();
  return keys;
}

void apply_json(Config& config, const json& doc) { apply_flat(config, doc, ""); }

void apply_override(Config& config, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw ConfigError("override '" + std::string(assignment) + "' is not of the form key=value");
  }
  const std::string key(assignment.substr(0, eq));
  const std::string text(assignment.substr(eq + 1));
  const auto* k = find_key(key);
  if (!k) throw ConfigError("unknown config key '" + key + "'");
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  k->set(config, value);
}

Config load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  json doc = json::parse(in, nullptr, false, true);
  if (doc.is_discarded()) throw ConfigError("config file " + path + " is not valid JSON");
  Config config;
  apply_json(config, doc);
  return config;
}

void validate(const Config& c) {
  try {
    c.dataset.validate();
    c.policy.validate();
    if (c.schedule.steps < 1 || !(c.schedule.beta_start > 0.0) || !(c.schedule.beta_end < 1.0) ||
        c.schedule.beta_start > c.schedule.beta_end) {
      throw std::invalid_argument("schedule needs steps >= 1 and 0 < beta_start <= beta_end < 1");
    }
    if (c.stft_window == 0 || c.stft_hop == 0) throw std::invalid_argument("stft window and hop must be positive");
    if (c.net.hop() != c.stft_hop) {
      throw std::invalid_argument("net.upsample_t strides multiply to " + std::to_string(c.net.hop()) +
                                  " but stft.hop is " + std::to_string(c.stft_hop));
    }
    if (c.train.iters < 0 || c.train.batch == 0 || !(c.train.lr > 0.0)) {
      throw std::invalid_argument("train needs iters >= 0, batch >= 1 and lr > 0");
    }
    if (c.fit.batch == 0 || c.fit.epochs_max < 1 || c.fit.patience < 1 || !(c.fit.lr > 0.0)) {
      throw std::invalid_argument("fit needs batch >= 1, epochs_max >= 1, patience >= 1 and lr > 0");
    }
    if (!(c.balance.window_s > 0.0) || !(c.balance.stride_s > 0.0)) {
      throw std::invalid_argument("balance window and stride must be positive");
    }
    if (c.jobs == 0) throw std::invalid_argument("jobs must be at least 1");
    if (c.synth.channels == 0 || !(c.synth.sample_rate > 0.0) || !(c.synth_duration_s > 0.0)) {
      throw std::invalid_argument("synth needs channels, sample rate and duration above zero");
    }
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("invalid configuration: ") + e.what());
  }
}

json to_json(const Config& config) {
  json doc = json::object();
  for (const auto& k : config_keys()) doc[json::json_pointer("/" + [&] {
    std::string p = k.name;
    for (auto& ch : p)
      if (ch == '.') ch = '/';
    return p;
  }())] = k.get(config);
  return doc;
}

std::string describe_keys() {
  const Config defaults;
  std::ostringstream out;
  std::size_t width = 0;
  for (const auto& k : config_keys()) width = std::max(width, k.name.size());
  for (const auto& k : config_keys()) {
    out << "  " << k.name << std::string(width + 2 - k.name.size(), ' ') << k.get(defaults).dump() << "  " << k.help
        << "\n";
  }
  return out.str();
}

}  // namespace diffeeg
