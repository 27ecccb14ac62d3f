#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "diffeeg/checkpoint.hpp"
#include "diffeeg/config.hpp"
#include "diffeeg/errors.hpp"
#include "diffeeg/evaluation.hpp"
#include "diffeeg/model_io.hpp"
#include "diffeeg/pipeline.hpp"
#include "diffeeg/segment_store.hpp"

namespace fs = std::filesystem;
using namespace diffeeg;

namespace {

void log(const std::string& msg) { std::cerr << "[diffeeg] " << msg << "\n"; }

struct CommonOptions {
  std::string config_path;
  std::vector<std::string> sets;
  std::optional<unsigned> jobs;
  std::optional<std::uint64_t> seed;
  std::string balance;
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("--config", opts.config_path, "JSON config file");
  cmd->add_option("--set", opts.sets, "override a config key, key=value (repeatable)");
  cmd->add_option("--jobs", opts.jobs, "worker threads (default 1)");
  cmd->add_option("--seed", opts.seed, "root seed");
  cmd->add_option("--balance", opts.balance, "balancing method: downsample, sliding, recombine or diffusion");
}

// File first, then --set in order, then the dedicated flags.
Config resolve(const CommonOptions& opts, const std::string& command) {
  Config c = opts.config_path.empty() ? Config{} : load_config(opts.config_path);
  for (const auto& s : opts.sets) apply_override(c, s);
  if (opts.jobs) apply_override(c, "jobs=" + std::to_string(*opts.jobs));
  if (opts.seed) apply_override(c, "seed=" + std::to_string(*opts.seed));
  if (!opts.balance.empty()) apply_override(c, "balance.method=\"" + opts.balance + "\"");
  validate(c);
  log(command + " resolved config: " + to_json(c).dump());
  return c;
}

SegmentStore load_real(const std::string& path) {
  SegmentStore store = read_store(path);
  for (const auto& s : store.segments) {
    if (s.synthetic) throw ProtocolError(path + " contains synthetic segments; expected recorded data");
  }
  return store;
}

std::vector<double> onsets_from(const std::string& annotations_path, const Config& c) {
  std::vector<Annotation> all;
  for (const auto& [record, list] : read_annotations(annotations_path)) all.insert(all.end(), list.begin(), list.end());
  return merged_onsets(std::move(all), c.dataset);
}

std::vector<Segment> preictal_of(const std::vector<Segment>& segments) {
  std::vector<Segment> out;
  for (const auto& s : segments)
    if (s.preictal()) out.push_back(s);
  return out;
}

EpsNetConfig net_for(const Config& c, const SegmentStore& store) {
  EpsNetConfig net = c.net;
  net.input_channels = store.channels;
  net.segment_length = store.length;
  net.cond_bins = c.stft_window / 2 + 1;
  net.cond_frames = stft_frames(store.length, c.stft_window, c.stft_hop);
  try {
    net.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("network does not fit the data: ") + e.what());
  }
  return net;
}

DiffusionSource source_of(const DiffusionBundle& bundle, unsigned jobs) {
  DiffusionSource src;
  src.model = bundle.net.get();
  src.schedule = linear_schedule(bundle.schedule);
  src.stft_window = bundle.stft_window;
  src.stft_hop = bundle.stft_hop;
  src.jobs = jobs;
  return src;
}

void check_fits(const DiffusionBundle& bundle, const SegmentStore& store) {
  const auto& net = bundle.net->config();
  if (net.input_channels != store.channels || net.segment_length != store.length) {
    throw ConfigError("checkpoint expects " + std::to_string(net.input_channels) + "x" +
                      std::to_string(net.segment_length) + " segments, data has " + std::to_string(store.channels) +
                      "x" + std::to_string(store.length));
  }
}

void cmd_synth(const Config& c, const std::string& out, std::string annotations) {
  if (annotations.empty()) annotations = out + ".annotations.csv";
  SyntheticProfile profile = c.synth;
  profile.seed = c.seed;
  Recording rec;
  try {
    rec = synth_record(profile, c.synth_duration_s, c.synth_onsets);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("synth: ") + e.what());
  }
  rec.id = c.patient;
  const auto report = admit_patient({rec}, c.dataset);
  log("admission: " + std::to_string(report.seizures) + " seizures over " + std::to_string(report.days) + " days, " +
      std::to_string(report.interictal) + " interictal / " + std::to_string(report.preictal) + " preictal segments");
  if (!report.admitted) {
    std::string why;
    for (const auto& v : report.violations) why += (why.empty() ? "" : "; ") + v;
    throw ProtocolError("synthetic patient fails admission: " + why);
  }
  const auto patient = extract_patient({rec}, c.dataset);
  SegmentStore store;
  store.channels = rec.channels();
  store.length = segment_samples(rec.sample_rate, c.dataset.segment_seconds);
  store.sample_rate = static_cast<std::uint32_t>(rec.sample_rate);
  if (static_cast<double>(store.sample_rate) != rec.sample_rate) {
    throw ConfigError("synth.sample_rate must be a whole number of Hz for the segment store");
  }
  store.segments = patient.segments;
  write_store(out, store);
  write_annotations(annotations, {{rec.id, rec.annotations}});
  log("wrote " + std::to_string(store.segments.size()) + " segments to " + out + " and " +
      std::to_string(rec.annotations.size()) + " annotations to " + annotations);
}

void cmd_train_diffusion(const Config& c, const std::string& data, const std::string& out, std::string trace,
                         const std::string& resume) {
  if (trace.empty()) trace = out + ".trace.csv";
  const auto store = load_real(data);
  std::vector<TrainingExample> examples;
  for (const auto& s : store.segments)
    if (s.preictal()) examples.push_back({s.data, conditioner(s.data, c.stft_window, c.stft_hop)});
  if (examples.empty()) throw ProtocolError(data + " holds no preictal segments to train on");

  DiffusionBundle bundle;
  if (resume.empty()) {
    bundle.net = std::make_unique<EpsNet>(net_for(c, store), Rng(c.seed).split("epsnet").seed());
    bundle.schedule = c.schedule;
    bundle.stft_window = c.stft_window;
    bundle.stft_hop = c.stft_hop;
  } else {
    bundle = load_diffusion(read_checkpoint(resume));
    check_fits(bundle, store);
    if (bundle.stft_window != c.stft_window || bundle.stft_hop != c.stft_hop) {
      throw ConfigError("stft settings differ from the resumed checkpoint");
    }
    log("resuming from iteration " + std::to_string(bundle.state.iteration));
  }
  TrainOptions opts = c.train;
  opts.seed = Rng(c.seed).split("diffusion").seed();

  std::ofstream trace_out(trace, resume.empty() ? std::ios::trunc : std::ios::app);
  if (!trace_out) throw ConfigError("cannot write trace file " + trace);
  if (resume.empty()) trace_out << "iter,loss\n";
  trace_out.precision(17);
  const long report_every = std::max<long>(1, opts.iters / 10);
  bundle.state = train(examples, *bundle.net, linear_schedule(bundle.schedule), opts, std::move(bundle.state),
                       [&](long iter, double loss) {
                         trace_out << iter << ',' << loss << '\n';
                         if (iter % report_every == 0) log("iteration " + std::to_string(iter) + " loss " + std::to_string(loss));
                       });
  write_checkpoint(out, save_diffusion(bundle));
  log("wrote checkpoint " + out + " at iteration " + std::to_string(bundle.state.iteration));
}

void cmd_generate(const Config& c, const std::string& checkpoint, const std::string& data,
                  const std::string& annotations, const std::string& out) {
  const auto bundle = load_diffusion(read_checkpoint(checkpoint));
  auto store = load_real(data);
  check_fits(bundle, store);
  if (!annotations.empty()) attach_seizures(store.segments, onsets_from(annotations, c), store.sample_rate, c.dataset);
  const auto pool = preictal_of(store.segments);
  Rng rng = Rng(c.seed).split("generate");
  auto made = generate_preictal(pool, source_of(bundle, c.jobs), rng, c.generate_count);
  for (auto& s : made) s.data = normalize(s.data);
  SegmentStore result{store.channels, store.length, store.sample_rate, std::move(made)};
  write_store(out, result);
  log("wrote " + std::to_string(result.segments.size()) + " synthetic preictal segments to " + out);
}

void cmd_train_classifier(const Config& c, const std::string& data, const std::string& annotations,
                          const std::string& checkpoint, const std::string& out, std::string history) {
  if (history.empty()) history = out + ".history.csv";
  auto store = load_real(data);
  if (!annotations.empty()) attach_seizures(store.segments, onsets_from(annotations, c), store.sample_rate, c.dataset);
  const auto split = validation_split(store.segments);
  std::vector<Segment> train_set, validation;
  for (auto i : split.train) train_set.push_back(store.segments[i]);
  for (auto i : split.validation) validation.push_back(store.segments[i]);

  std::optional<DiffusionBundle> bundle;
  DiffusionSource source;
  if (c.balance.method == BalanceMethod::kDiffusion) {
    if (checkpoint.empty()) throw ConfigError("--balance diffusion needs --checkpoint");
    bundle = load_diffusion(read_checkpoint(checkpoint));
    check_fits(*bundle, store);
    source = source_of(*bundle, c.jobs);
  }
  Rng rng = Rng(c.seed).split("balance");
  auto balanced = balance(train_set, c.balance, store.sample_rate, rng, bundle ? &source : nullptr);
  for (auto& s : balanced)
    if (s.synthetic) s.data = normalize(s.data);
  const auto [inter, pre] = class_counts(balanced);
  log(std::string(to_string(c.balance.method)) + " balanced training set: " + std::to_string(inter) + " interictal, " +
      std::to_string(pre) + " preictal");

  ClassifierConfig cc = c.clf;
  cc.channels = store.channels;
  cc.length = store.length;
  auto clf = make_classifier(cc, Rng(c.seed).split("classifier").seed());
  FitOptions fo = c.fit;
  fo.seed = Rng(c.seed).split("fit").seed();
  const auto hist = fit(*clf, balanced, validation, fo);
  write_checkpoint(out, save_classifier(*clf));
  std::ofstream h(history);
  if (!h) throw ConfigError("cannot write history file " + history);
  h << "epoch,train_loss,val_sensitivity,val_specificity\n";
  h.precision(17);
  for (const auto& e : hist.epochs) h << e.epoch << ',' << e.train_loss << ',' << e.val_sensitivity << ',' << e.val_specificity << '\n';
  log("wrote classifier " + out + " (best epoch " + std::to_string(hist.best_epoch) + ")");
}

void cmd_evaluate(const Config& c, const std::string& data, const std::string& annotations, const std::string& out_dir,
                  const std::string& archs) {
  auto store = load_real(data);
  const auto onsets = onsets_from(annotations, c);
  attach_seizures(store.segments, onsets, store.sample_rate, c.dataset);

  CvOptions opts;
  opts.sample_rate = store.sample_rate;
  opts.plan = c.balance;
  opts.fit = c.fit;
  opts.policy = c.policy;
  opts.jobs = c.jobs;
  opts.seed = c.seed;
  opts.diffusion.net = c.net;
  opts.diffusion.schedule = c.schedule;
  opts.diffusion.train = c.train;
  opts.diffusion.stft_window = c.stft_window;
  opts.diffusion.stft_hop = c.stft_hop;
  opts.log = log;
  opts.classifiers.clear();
  std::vector<std::string> names;
  if (archs.empty()) {
    names.push_back(std::string(to_string(c.clf.arch)));
  } else {
    std::istringstream in(archs);
    for (std::string name; std::getline(in, name, ',');) names.push_back(name);
  }
  for (const auto& name : names) {
    ClassifierConfig cc = c.clf;
    try {
      cc.arch = parse_arch(name);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    cc.channels = store.channels;
    cc.length = store.length;
    opts.classifiers.push_back(cc);
  }
  if (c.balance.method == BalanceMethod::kDiffusion) net_for(c, store);

  const auto reports = run_cv(store.segments, onsets, opts);
  fs::create_directories(out_dir);
  const std::string stem = (fs::path(out_dir) / (c.patient + "_" + std::string(to_string(c.balance.method)))).string();
  write_file(stem + "_report.csv", report_csv(c.patient, reports));
  const auto summary = report_summary(c.patient, to_string(c.balance.method), reports);
  write_file(stem + "_summary.txt", summary);
  std::cout << summary;
  log("wrote " + stem + "_report.csv and " + stem + "_summary.txt");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DiffEEG: diffusion-based augmentation for EEG seizure prediction"};
  app.require_subcommand(1);
  const std::string keys = "\nConfig keys (--set key=value or a JSON file, nested objects allowed) and defaults:\n" + describe_keys();
  app.footer(keys);

  CommonOptions common;
  std::string out, data, annotations, checkpoint, trace, resume, history, out_dir = ".", archs;
  std::optional<std::size_t> count;

  auto* synth = app.add_subcommand("synth", "write a synthetic patient as a segment store and annotation CSV");
  add_common(synth, common);
  synth->add_option("--out", out, "segment store to write")->required();
  synth->add_option("--annotations", annotations, "annotation CSV to write (default <out>.annotations.csv)");

  auto* train_diff = app.add_subcommand("train-diffusion", "train the diffusion model on the preictal segments of a store");
  add_common(train_diff, common);
  train_diff->add_option("--data", data, "segment store")->required();
  train_diff->add_option("--out", out, "checkpoint to write")->required();
  train_diff->add_option("--trace", trace, "loss trace CSV (default <out>.trace.csv); appended when resuming");
  train_diff->add_option("--resume", resume, "checkpoint to continue from; train.iters is the total");

  auto* gen = app.add_subcommand("generate", "sample synthetic preictal segments from a trained checkpoint");
  add_common(gen, common);
  gen->add_option("--checkpoint", checkpoint, "diffusion checkpoint")->required();
  gen->add_option("--data", data, "segment store whose preictal spectrograms condition the samples")->required();
  gen->add_option("--annotations", annotations, "annotation CSV; groups recombination donors by seizure");
  gen->add_option("--count", count, "segments to generate (overrides generate.count)");
  gen->add_option("--out", out, "segment store to write")->required();

  auto* train_clf = app.add_subcommand("train-classifier", "balance a store and fit one classifier");
  add_common(train_clf, common);
  train_clf->add_option("--data", data, "segment store")->required();
  train_clf->add_option("--annotations", annotations, "annotation CSV; needed for per-seizure balancing");
  train_clf->add_option("--checkpoint", checkpoint, "diffusion checkpoint for --balance diffusion");
  train_clf->add_option("--out", out, "classifier checkpoint to write")->required();
  train_clf->add_option("--history", history, "per-epoch CSV (default <out>.history.csv)");

  auto* eval = app.add_subcommand("evaluate", "leave-one-seizure-out evaluation with alarm-level scoring");
  add_common(eval, common);
  eval->add_option("--data", data, "segment store")->required();
  eval->add_option("--annotations", annotations, "annotation CSV")->required();
  eval->add_option("--out-dir", out_dir, "directory for the report files");
  eval->add_option("--arch", archs, "comma-separated classifiers (default clf.arch)");

  for (auto* cmd : {synth, train_diff, gen, train_clf, eval}) cmd->footer(keys);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (synth->parsed()) {
      cmd_synth(resolve(common, "synth"), out, annotations);
    } else if (train_diff->parsed()) {
      cmd_train_diffusion(resolve(common, "train-diffusion"), data, out, trace, resume);
    } else if (gen->parsed()) {
      Config c = resolve(common, "generate");
      if (count) c.generate_count = *count;
      cmd_generate(c, checkpoint, data, annotations, out);
    } else if (train_clf->parsed()) {
      cmd_train_classifier(resolve(common, "train-classifier"), data, annotations, checkpoint, out, history);
    } else if (eval->parsed()) {
      cmd_evaluate(resolve(common, "evaluate"), data, annotations, out_dir, archs);
    }
  } catch (const ConfigError& e) {
    log(std::string("configuration error: ") + e.what());
    return 2;
  } catch (const FormatError& e) {
    log(std::string("format error: ") + e.what());
    return 3;
  } catch (const ProtocolError& e) {
    log(std::string("protocol violation: ") + e.what());
    return 4;
  } catch (const std::exception& e) {
    log(std::string("error: ") + e.what());
    return 1;
  }
  return 0;
}
