#include "commands.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include "exnet/augment.hpp"
#include "exnet/dataio.hpp"
#include "exnet/error.hpp"
#include "exnet/gradcheck.hpp"
#include "exnet/metrics.hpp"
#include "exnet/model.hpp"
#include "exnet/plot.hpp"
#include "exnet/trainer.hpp"

namespace exnet::cli {

namespace fs = std::filesystem;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Global {
  std::uint64_t seed = 0;
  std::string out = "out";
  std::string config;
  std::string precision = "single";
  unsigned threads = 0;
};

struct TrainFlags {
  std::string manifest;
  std::string augmented;
  std::string experiment;
  std::size_t epochs = 40;
  std::size_t batch_size = 32;
  double learning_rate = 0.02;
  double momentum = 0.9;
  double dropout = 0.0;
  bool batchnorm = true;
  std::size_t input_size = 224;
  bool standardize = false;
};

struct Preset {
  bool augmented;
  bool batchnorm;
  double dropout;
};

const std::map<std::string, Preset>& presets() {
  static const std::map<std::string, Preset> p = {
      {"original", {false, false, 0.0}},   {"augmented", {true, false, 0.0}},
      {"batchnorm", {true, true, 0.0}},    {"dropout", {true, false, 0.5}},
      {"batchnorm+dropout", {true, true, 0.5}},
  };
  return p;
}

std::string percent(double v) { return format_percent(v); }

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write " + path.string());
  os << text;
  if (!os) throw DataError("failed writing " + path.string());
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write " + path.string());
  return os;
}

std::ifstream open_in(const std::string& path, const char* what) {
  if (path.empty()) throw UsageError(std::string("--") + what + " is required");
  if (!fs::is_regular_file(path)) throw UsageError(std::string("--") + what + ": no such file '" + path + "'");
  return std::ifstream(path, std::ios::binary);
}

fs::path prepare_out(const Global& g) {
  const fs::path out(g.out);
  fs::create_directories(out);
  return out;
}

void add_train_flags(CLI::App* cmd, TrainFlags& f) {
  cmd->add_option("--manifest", f.manifest, "Split manifest CSV (path,label,split)");
  cmd->add_option("--augmented", f.augmented, "Augmented manifest; its rows derived from training sources extend the training set");
  cmd->add_option("--epochs", f.epochs, "Training epochs")->capture_default_str();
  cmd->add_option("--batch-size", f.batch_size, "Mini-batch size")->capture_default_str();
  cmd->add_option("--lr", f.learning_rate, "Learning rate")->capture_default_str();
  cmd->add_option("--momentum", f.momentum, "SGD momentum coefficient")->capture_default_str();
  cmd->add_option("--dropout", f.dropout, "Dropout rate after both hidden FC layers")->capture_default_str();
  cmd->add_flag("--batchnorm,!--no-batchnorm", f.batchnorm, "Batch norm after each conv (default on)");
  cmd->add_option("--input-size", f.input_size, "Square network input size")->capture_default_str();
  cmd->add_flag("--standardize", f.standardize, "Standardize inputs with training-set channel statistics");
}

Precision precision_of(const std::string& s) { return s == "double" ? Precision::f64 : Precision::f32; }

// ------------------------------------------------------------ data loading

struct Splits {
  std::vector<LabeledImage> train;
  std::vector<LabeledImage> validation;
  std::vector<LabeledImage> test;
};

std::vector<LabeledImage> load_reporting(std::span<const SampleRef> refs, std::size_t size, std::ostream& err) {
  LoadResult r = load_images(refs, size, size);
  for (const auto& e : r.errors) err << "warning: skipping " << e.path << ": " << e.message << '\n';
  return std::move(r.items);
}

Splits load_splits(const TrainFlags& f, std::ostream& err) {
  std::ifstream is = open_in(f.manifest, "manifest");
  const SplitManifest m = read_split_manifest(is);
  std::vector<SampleRef> train_refs = m.train;
  if (!f.augmented.empty()) {
    std::ifstream ais = open_in(f.augmented, "augmented");
    const std::set<std::string> sources = [&] {
      std::set<std::string> s;
      for (const auto& r : m.train) s.insert(r.path);
      return s;
    }();
    train_refs.clear();
    for (const auto& row : read_augment_manifest(ais)) {
      if (!row.failed() && sources.count(row.src_path)) train_refs.push_back({row.out_path, row.label});
    }
  }
  Splits s;
  s.train = load_reporting(train_refs, f.input_size, err);
  s.validation = load_reporting(m.validation, f.input_size, err);
  s.test = load_reporting(m.test, f.input_size, err);
  return s;
}

ModelSpec base_spec(const TrainFlags& f, std::span<const LabeledImage> train) {
  ModelSpec spec;
  spec.input_height = f.input_size;
  spec.input_width = f.input_size;
  if (f.standardize) {
    const InputNorm n = channel_statistics(train);
    spec.input_mean = n.mean;
    spec.input_std = n.std;
  }
  return spec;
}

TrainConfig train_config(const TrainFlags& f, const Global& g) {
  TrainConfig c;
  c.batch_size = f.batch_size;
  c.epochs = f.epochs;
  c.learning_rate = f.learning_rate;
  c.momentum = f.momentum;
  c.dropout_rate = f.dropout;
  c.use_batchnorm = f.batchnorm;
  c.seed = g.seed;
  c.precision = precision_of(g.precision);
  c.validate();
  return c;
}

// ---------------------------------------------------------------- commands

int cmd_split(const Global& g, const std::string& labels, const std::string& images,
              const std::vector<double>& fractions, bool unstratified, bool allow_empty, std::ostream& out,
              std::ostream& err) {
  if (labels.empty()) throw UsageError("--labels is required");
  if (images.empty()) throw UsageError("--images is required");
  if (!fs::is_regular_file(labels)) throw DataError("labels CSV not found: " + labels);
  if (!fs::is_directory(images)) throw DataError("image root is not a directory: " + images);
  if (fractions.size() != 3) throw UsageError("--fractions takes three values: train,validation,test");

  std::vector<SampleRef> refs;
  for (auto& r : read_labels_csv(labels, images)) {
    if (fs::is_regular_file(r.path)) {
      refs.push_back(std::move(r));
    } else {
      err << "warning: skipping missing image " << r.path << '\n';
    }
  }
  std::vector<int> y;
  for (const auto& r : refs) y.push_back(r.label);
  SplitOptions opt;
  opt.fractions = {fractions[0], fractions[1], fractions[2]};
  opt.stratified = !unstratified;
  opt.allow_empty = allow_empty;
  const SplitDataset split = stratified_split(y, opt, g.seed);

  const fs::path dir = prepare_out(g);
  std::ofstream os = open_out(dir / "split.csv");
  write_split_manifest(os, refs, split);
  for (const SplitName s : {SplitName::train, SplitName::validation, SplitName::test}) {
    std::size_t pos = 0;
    for (const std::size_t i : split[s]) pos += refs[i].label == 1;
    out << split_name(s) << ": " << split[s].size() << " (normal " << split[s].size() - pos << ", exudate " << pos
        << ")\n";
  }
  out << "wrote " << (dir / "split.csv").generic_string() << '\n';
  return kExitOk;
}

int cmd_augment(const Global& g, const std::string& manifest, const std::string& which, const std::string& ops,
                std::size_t resize, std::ostream& out) {
  const Recipe recipe = ops.empty() ? Recipe::default_recipe() : Recipe::parse(ops);
  std::ifstream is = open_in(manifest, "manifest");
  const SplitManifest m = read_split_manifest(is);
  std::vector<AugmentSource> sources;
  for (const SplitName s : {SplitName::train, SplitName::validation, SplitName::test}) {
    if (which != "all" && parse_split_name(which) != s) continue;
    for (const auto& r : m[s]) sources.push_back({r.path, r.label});
  }
  const fs::path dir = prepare_out(g);
  AugmentOptions opt;
  opt.out_dir = dir / "augmented";
  opt.resize = resize;
  const std::vector<AugmentRow> rows = build_augmented_dataset(sources, recipe, g.seed, opt);
  std::ofstream os = open_out(dir / "augmented.csv");
  write_augment_manifest(os, rows);
  std::size_t failed = 0;
  for (const auto& r : rows) failed += r.failed();
  char expected[32];
  std::snprintf(expected, sizeof expected, "%.3f", recipe.expected_outputs_per_input());
  out << sources.size() << " sources -> " << rows.size() - failed << " images (expected " << expected
      << " per source), " << failed << " failed\n";
  out << "wrote " << (dir / "augmented.csv").generic_string() << '\n';
  return kExitOk;
}

template <typename T>
int train_impl(const Global& g, const TrainFlags& f, std::ostream& out, std::ostream& err) {
  const TrainConfig cfg = train_config(f, g);
  const Splits s = load_splits(f, err);
  const ModelSpec spec = configured_spec(base_spec(f, s.train), cfg);
  const fs::path dir = prepare_out(g);

  Model<T> model = Model<T>::build(spec, init_seed(cfg));
  FitOptions fo;
  fo.best_checkpoint = dir / "best.ckpt";
  fo.on_epoch = [&](const EpochLog& l) {
    char line[160];
    std::snprintf(line, sizeof line, "epoch %zu/%zu loss=%.5f train_acc=%s val_acc=%s val_f1=%s\n", l.epoch,
                  cfg.epochs, l.train_loss, percent(l.train_accuracy).c_str(),
                  percent(l.validation.accuracy).c_str(), percent(l.validation.f1).c_str());
    out << line << std::flush;
  };
  const FitSummary summary = fit(model, s.train, s.validation, cfg, fo);
  save_checkpoint(model, dir / "final.ckpt");

  {
    std::ofstream os = open_out(dir / "epoch_log.csv");
    write_epoch_log(os, summary.logs);
  }
  const MetricsReport& final_val = summary.logs.back().validation;
  write_text(dir / "metrics.json", to_json(final_val));
  write_png(render_accuracy_curve(summary.logs), dir / "accuracy.png");
  write_png(render_confusion_matrix(final_val.confusion), dir / "confusion.png");
  if (!s.test.empty()) {
    const MetricsReport test = evaluate(model, s.test, cfg.batch_size);
    write_text(dir / "test_metrics.json", to_json(test));
    out << "test: f1=" << percent(test.f1) << " accuracy=" << percent(test.accuracy) << '\n';
  }
  out << "best validation f1 " << percent(summary.best_f1) << " at epoch " << summary.best_epoch << '\n';
  out << "wrote " << dir.generic_string() << "/{final.ckpt,best.ckpt,epoch_log.csv,metrics.json,accuracy.png,confusion.png}\n";
  return kExitOk;
}

void apply_preset(TrainFlags& f, CLI::App* cmd) {
  if (f.experiment.empty()) return;
  const auto it = presets().find(f.experiment);
  if (it == presets().end()) {
    throw UsageError("unknown experiment '" + f.experiment +
                     "'; valid: original, augmented, batchnorm, dropout, batchnorm+dropout");
  }
  const Preset& p = it->second;
  if (cmd->get_option("--batchnorm")->count() == 0) f.batchnorm = p.batchnorm;
  if (cmd->get_option("--dropout")->count() == 0) f.dropout = p.dropout;
  if (p.augmented && f.augmented.empty()) throw UsageError("experiment '" + f.experiment + "' needs --augmented");
  if (!p.augmented && !f.augmented.empty()) {
    throw UsageError("experiment '" + f.experiment + "' trains on the original images; drop --augmented");
  }
}

int cmd_train(const Global& g, TrainFlags f, CLI::App* cmd, std::ostream& out, std::ostream& err) {
  apply_preset(f, cmd);
  if (f.manifest.empty()) throw UsageError("--manifest is required");
  if (!fs::is_regular_file(f.manifest)) throw UsageError("--manifest: no such file '" + f.manifest + "'");
  return precision_of(g.precision) == Precision::f64 ? train_impl<double>(g, f, out, err)
                                                    : train_impl<float>(g, f, out, err);
}

template <typename T>
int eval_impl(const Global& g, const std::string& checkpoint, const std::string& manifest, SplitName split,
              std::ostream& out, std::ostream& err) {
  Model<T> model = load_checkpoint<T>(fs::path(checkpoint));
  std::ifstream is = open_in(manifest, "manifest");
  const SplitManifest m = read_split_manifest(is);
  const std::vector<LabeledImage> items = load_reporting(m[split], model.spec().input_height, err);
  const MetricsReport r = evaluate(model, items);
  const fs::path dir = prepare_out(g);
  const std::string stem = "eval_" + std::string(split_name(split));
  const std::string json = to_json(r);
  write_text(dir / (stem + ".json"), json);
  write_png(render_confusion_matrix(r.confusion), dir / (stem + "_confusion.png"));
  out << json;
  return kExitOk;
}

int cmd_eval(const Global& g, bool precision_given, const std::string& checkpoint, const std::string& manifest,
             const std::string& split, std::ostream& out, std::ostream& err) {
  if (checkpoint.empty()) throw UsageError("--checkpoint is required");
  if (!fs::is_regular_file(checkpoint)) throw UsageError("--checkpoint: no such file '" + checkpoint + "'");
  const SplitName s = parse_split_name(split);
  const Precision stored = checkpoint_precision(checkpoint);
  const Precision wanted = precision_given ? precision_of(g.precision) : stored;
  return wanted == Precision::f64 ? eval_impl<double>(g, checkpoint, manifest, s, out, err)
                                  : eval_impl<float>(g, checkpoint, manifest, s, out, err);
}

int cmd_sweep(const Global& g, TrainFlags f, const std::vector<double>& rates, std::ostream& out,
              std::ostream& err) {
  if (f.manifest.empty()) throw UsageError("--manifest is required");
  const TrainConfig cfg = train_config(f, g);
  const Splits s = load_splits(f, err);
  const ModelSpec base = base_spec(f, s.train);
  const SweepResult result = precision_of(g.precision) == Precision::f64
                                 ? sweep_dropout<double>(base, s.train, s.validation, cfg, rates)
                                 : sweep_dropout<float>(base, s.train, s.validation, cfg, rates);
  const fs::path dir = prepare_out(g);
  std::ofstream os = open_out(dir / "sweep.csv");
  write_sweep_csv(os, result);
  bool ok = true;
  for (const auto& r : result.rows) {
    char rate[16];
    std::snprintf(rate, sizeof rate, "%.0f%%", r.rate * 100.0);
    if (r.ok) {
      out << rate << "  train " << percent(r.train_accuracy) << "  val " << percent(r.validation_accuracy)
          << "  overfit " << percent(r.overfit_degree) << "  f1 " << percent(r.f1) << '\n';
    } else {
      ok = false;
      out << rate << "  failed: " << r.error << '\n';
    }
  }
  out << "wrote " << (dir / "sweep.csv").generic_string() << '\n';
  return ok ? kExitOk : kExitFailure;
}

int cmd_params(bool no_batchnorm, bool compare, std::size_t input_size, std::ostream& out) {
  ModelSpec spec;
  spec.use_batchnorm = !no_batchnorm;
  spec.input_height = input_size;
  spec.input_width = input_size;
  out << format_param_report(count_parameters(spec), compare);
  return kExitOk;
}

int cmd_gradcheck(const Global& g, double tolerance, std::size_t probes, std::ostream& out) {
  GradCheckOptions opt;
  opt.tolerance = tolerance;
  opt.seed = g.seed;
  opt.probes = probes;
  const GradCheckReport r = grad_check(ModelSpec::shrunken(), opt);
  out << format_gradcheck(r);
  return r.passed() ? kExitOk : kExitFailure;
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

/// Fills options not given on the command line from the config file.
void apply_config(const std::string& path, CLI::App& app, CLI::App* sub) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw UsageError("cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << is.rdbuf();
  for (const auto& [key, value] : parse_config_file(ss.str())) {
    if (key == "config") throw ConfigError("config file cannot name another config file");
    CLI::Option* opt = sub ? sub->get_option_no_throw("--" + key) : nullptr;
    if (!opt) opt = app.get_option_no_throw("--" + key);
    if (!opt) throw ConfigError("unknown config key '" + key + "'");
    if (opt->count() > 0) continue;
    opt->add_result(value);
    opt->run_callback();
  }
}

}  // namespace

std::vector<std::pair<std::string, std::string>> parse_config_file(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::istringstream is(text);
  std::string line;
  std::size_t n = 0;
  while (std::getline(is, line)) {
    ++n;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty() || line.front() == '[') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(n) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && (value.front() == '"' || value.front() == '\'') && value.back() == value.front()) {
      value = value.substr(1, value.size() - 2);
    }
    std::replace(key.begin(), key.end(), '_', '-');
    if (key.empty()) throw ConfigError("config line " + std::to_string(n) + ": empty key");
    out.emplace_back(std::move(key), std::move(value));
  }
  return out;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Lightweight CNN for exudate detection in fundus images", "exnet"};
  app.require_subcommand(1);
  app.fallthrough();
  Global g;
  app.add_option("--seed", g.seed, "Seed for every random draw")->capture_default_str();
  app.add_option("--out", g.out, "Directory receiving all outputs")->capture_default_str();
  app.add_option("--config", g.config, "key = value file supplying defaults for any flag");
  CLI::Option* precision_opt = app.add_option("--precision", g.precision, "Element precision")
                                   ->check(CLI::IsMember({"single", "double"}))
                                   ->capture_default_str();
  app.add_option("--threads", g.threads, "Worker threads for matrix kernels (0 = all cores)");

  std::string labels, images, split_fracs = "0.7,0.2,0.1";
  bool unstratified = false, allow_empty = false;
  CLI::App* split = app.add_subcommand("split", "Stratified train/validation/test manifest");
  split->add_option("--labels", labels, "CSV with image,grade or image,label");
  split->add_option("--images", images, "Image root directory");
  split->add_option("--fractions", split_fracs, "train,validation,test")->capture_default_str();
  split->add_flag("--unstratified", unstratified, "Allocate the pooled set instead of per class");
  split->add_flag("--allow-empty", allow_empty, "Permit zero fractions");

  std::string aug_manifest, aug_split = "all", aug_ops;
  std::size_t aug_resize = 0;
  CLI::App* augment = app.add_subcommand("augment", "Write augmented images and their manifest");
  augment->add_option("--manifest", aug_manifest, "Split manifest CSV");
  augment->add_option("--split", aug_split, "all, train, validation or test")->capture_default_str();
  augment->add_option("--ops", aug_ops, "Recipe 'op[+op][@p],...' (default: the published recipe)");
  augment->add_option("--resize", aug_resize, "Resize sources to NxN first (0 keeps size)");

  TrainFlags tf;
  CLI::App* train = app.add_subcommand("train", "Train and write checkpoints, logs and metrics");
  add_train_flags(train, tf);
  train->add_option("--experiment", tf.experiment,
                    "Preset: original, augmented, batchnorm, dropout, batchnorm+dropout");

  std::string ckpt, eval_manifest, eval_split = "test";
  CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a manifest split");
  eval->add_option("--checkpoint", ckpt, "Checkpoint file");
  eval->add_option("--manifest", eval_manifest, "Split manifest CSV");
  eval->add_option("--split", eval_split, "train, validation or test")->capture_default_str();

  TrainFlags sf;
  std::vector<double> rates = {0.3, 0.4, 0.5, 0.6, 0.7};
  CLI::App* sweep = app.add_subcommand("sweep", "Dropout-rate sweep");
  add_train_flags(sweep, sf);
  sweep->add_option("--rates", rates, "Dropout rates")->delimiter(',')->capture_default_str();

  bool no_bn = false, compare = false;
  std::size_t params_size = 224;
  CLI::App* params = app.add_subcommand("params", "Per-layer output shapes and parameter counts");
  params->add_flag("--no-batchnorm", no_bn, "Omit batch norm layers");
  params->add_flag("--compare", compare, "Append published counts of reference models");
  params->add_option("--input-size", params_size, "Square input size")->capture_default_str();

  double tolerance = 1e-4;
  std::size_t probes = 20;
  CLI::App* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient check in double precision");
  gradcheck->add_option("--tolerance", tolerance, "Relative error bound")->capture_default_str();
  gradcheck->add_option("--probes", probes, "Probes per checked tensor")->capture_default_str();

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    CLI::App* sub = app.get_subcommands().front();
    if (!g.config.empty()) apply_config(g.config, app, sub);
    set_num_threads(g.threads ? g.threads : std::max(1u, std::thread::hardware_concurrency()));

    if (sub == split) {
      std::vector<double> fr;
      std::stringstream ss(split_fracs);
      std::string item;
      while (std::getline(ss, item, ',')) {
        try {
          fr.push_back(std::stod(item));
        } catch (const std::exception&) {
          throw UsageError("--fractions: bad number '" + item + "'");
        }
      }
      return cmd_split(g, labels, images, fr, unstratified, allow_empty, out, err);
    }
    if (sub == augment) return cmd_augment(g, aug_manifest, aug_split, aug_ops, aug_resize, out);
    if (sub == train) return cmd_train(g, tf, train, out, err);
    if (sub == eval) return cmd_eval(g, precision_opt->count() > 0, ckpt, eval_manifest, eval_split, out, err);
    if (sub == sweep) return cmd_sweep(g, sf, rates, out, err);
    if (sub == params) return cmd_params(no_bn, compare, params_size, out);
    if (sub == gradcheck) return cmd_gradcheck(g, tolerance, probes, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const CLI::Error& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace exnet::cli
