// One PASS/FAIL line per acceptance criterion; exit status 1 if any fail.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "cli/commands.hpp"
#include "exnet/augment.hpp"
#include "exnet/csv.hpp"
#include "exnet/dataio.hpp"
#include "exnet/gradcheck.hpp"
#include "exnet/metrics.hpp"
#include "exnet/model.hpp"
#include "exnet/nn.hpp"
#include "exnet/rng.hpp"
#include "exnet/trainer.hpp"
#include "synthetic.hpp"

using namespace exnet;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int cli_run(std::vector<std::string> args, std::string* out_text = nullptr) {
  args.insert(args.begin(), "exnet");
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  if (out_text) *out_text = out.str();
  if (code != 0) std::fprintf(stderr, "%s", err.str().c_str());
  return code;
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[160];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

Outcome parameter_accounting() {
  std::string text;
  if (cli_run({"params"}, &text) != 0) return {false, "params command failed"};
  const ParamReport r = count_parameters(ModelSpec{});
  const std::map<std::string, std::size_t> expected = {{"conv1", 252},      {"bn1", 36}, {"conv2", 1476}, {"bn2", 72},
                                                       {"fc1", 4724010}, {"fc2", 3640}, {"output", 82}};
  for (const auto& row : r.rows) {
    const auto it = expected.find(row.name);
    const std::size_t want = it == expected.end() ? 0 : it->second;
    if (row.parameters != want) return {false, row.name + " has " + std::to_string(row.parameters)};
  }
  if (r.total != 4729568) return {false, "total " + std::to_string(r.total)};
  if (text.find("4,729,568") == std::string::npos) return {false, "total missing from params output"};
  return {true, "total 4,729,568"};
}

Outcome shape_chain() {
  auto m = Model<float>::build(ModelSpec{}, 0);
  m.set_mode(Mode::eval);
  std::vector<Shape> trace;
  m.forward(Tensor<float>({1, 3, 224, 224}, 0.5f), &trace);
  const std::vector<Shape> expected = {
      {1, 3, 224, 224}, {1, 9, 222, 222}, {1, 9, 222, 222}, {1, 9, 222, 222}, {1, 9, 111, 111},
      {1, 18, 109, 109}, {1, 18, 109, 109}, {1, 18, 109, 109}, {1, 18, 54, 54}, {1, 52488},
      {1, 90},           {1, 90},          {1, 40},          {1, 40},          {1, 2}};
  if (trace != expected) return {false, "trace differs"};
  return {true, "15 stages, pool 109->54"};
}

Outcome gradient_checks() {
  std::string text;
  const int code = cli_run({"gradcheck", "--tolerance", "1e-4"}, &text);
  const GradCheckReport r = grad_check(ModelSpec::shrunken(), {});
  double worst = 0.0;
  for (const auto& e : r.entries) worst = std::max(worst, e.max_relative_error);
  if (code != 0 || !r.passed()) return {false, text};
  return {true, std::to_string(r.entries.size()) + " checks, worst " + fmt("%.2e", worst)};
}

Tensor<double> random_tensor(Shape shape, std::uint64_t seed, double scale) {
  Rng rng(seed);
  Tensor<double> t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = scale * rng.normal() + 1.5;
  return t;
}

Outcome batch_norm_suite() {
  double worst_mean = 0.0, worst_var = 0.0, worst_grad = 0.0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const std::size_t n = 6, c = 4, plane = 49;
    BatchNorm2d<double> bn("bn", c);
    const auto x = random_tensor({n, c, 7, 7}, seed, 2.0);
    const auto y = bn.forward(x, Mode::train);
    const auto dx = bn.backward(random_tensor({n, c, 7, 7}, seed + 100, 1.0));
    for (std::size_t ch = 0; ch < c; ++ch) {
      double s = 0.0, g = 0.0;
      for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t i = 0; i < plane; ++i) {
          s += y[(b * c + ch) * plane + i];
          g += dx[(b * c + ch) * plane + i];
        }
      }
      const double mean = s / double(n * plane);
      double v = 0.0;
      for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t i = 0; i < plane; ++i) v += std::pow(y[(b * c + ch) * plane + i] - mean, 2);
      }
      worst_mean = std::max(worst_mean, std::abs(mean));
      worst_var = std::max(worst_var, std::abs(v / double(n * plane) - 1.0));
      worst_grad = std::max(worst_grad, std::abs(g));
    }
  }
  BatchNorm2d<double> bn("bn", 2);
  bn.params().beta[0] = 0.75;
  bn.params().beta[1] = -2.0;
  const auto y = bn.forward(Tensor<double>({3, 2, 4, 4}, 0.3), Mode::train);
  bool constant_ok = true;
  for (std::size_t i = 0; i < y.size(); ++i) constant_ok &= y[i] == ((i / 16) % 2 == 0 ? 0.75 : -2.0);
  const bool pass = worst_mean < 1e-6 && worst_var < 1e-4 && worst_grad < 1e-8 && constant_ok;
  return {pass, fmt("|mean| %.1e, |var-1| %.1e, |sum dx| %.1e", worst_mean, worst_var, worst_grad) +
                    (constant_ok ? ", constant->beta" : ", constant channel wrong")};
}

Outcome metric_formulas() {
  const double f1 = f1_score(0.69, 0.92);
  const MetricsReport deg = report({1, 0, 0, 1}, 0.9735, 0.8936);
  const MetricsReport fig = report({46, 16, 4, 34});
  const std::string d = format_percent(*deg.degree_of_overfitting);
  const bool pass = std::abs(f1 - 0.79) <= 0.005 && d == "7.99%" && fig.recall == 0.92;
  return {pass, "F1 " + format_percent(f1) + ", degree " + d + ", recall " + format_percent(fig.recall)};
}

int max_diff(const ImageBuf& a, const ImageBuf& b) {
  int m = 0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) m = std::max(m, std::abs(int(a.pixels[i]) - int(b.pixels[i])));
  return m;
}

double central_mae(const ImageBuf& a, const ImageBuf& b, double frac) {
  const double c = (a.width - 1) / 2.0, r = frac * a.width;
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t y = 0; y < a.height; ++y) {
    for (std::size_t x = 0; x < a.width; ++x) {
      if ((x - c) * (x - c) + (y - c) * (y - c) > r * r) continue;
      for (std::size_t ch = 0; ch < 3; ++ch) s += std::abs(int(a.at(x, y, ch)) - int(b.at(x, y, ch)));
      n += 3;
    }
  }
  return s / double(n) / 255.0;
}

Outcome augmentation_properties() {
  bool flip = true;
  int ident = 0;
  double worst_mae = 0.0, worst_sum = 0.0;
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const ImageBuf img = testsupport::fundus_image(seed, 224);
    flip &= hflip(hflip(img)) == img;
    ident = std::max({ident, max_diff(rotate(img, 0.0), img), max_diff(brightness(img, 1.0), img)});
    worst_mae = std::max(worst_mae, central_mae(img, rotate(rotate(img, 20.0), -20.0), 0.35));
  }
  bool blur_const = true;
  for (int radius = 1; radius <= 5; ++radius) {
    double s = 0.0;
    for (const double w : gaussian_kernel(radius, 0.0)) s += w;
    worst_sum = std::max(worst_sum, std::abs(s - 1.0));
    const ImageBuf flat(31, 17, 137);
    blur_const &= gaussian_blur(flat, radius) == flat;
  }
  const bool pass = flip && ident <= 1 && worst_sum <= 1e-9 && blur_const && worst_mae < 2.0 / 255.0;
  return {pass, fmt("identity step %.0f, kernel |sum-1| %.1e, rotate MAE %.5f", ident, worst_sum, worst_mae) +
                    (flip ? "" : ", hflip not involutive") + (blur_const ? "" : ", blur changes constant")};
}

Outcome synthetic_end_to_end() {
  const auto items = testsupport::blob_items(80, 2024, 224);
  std::vector<int> labels;
  for (const auto& it : items) labels.push_back(it.label);
  const SplitDataset split = stratified_split(labels, {}, 7);
  auto pick = [&](const std::vector<std::size_t>& idx) {
    std::vector<LabeledImage> out;
    for (const auto i : idx) out.push_back(items[i]);
    return out;
  };
  const auto train = pick(split.train), val = pick(split.validation);

  struct Result {
    double train_acc, f1, degree;
  };
  auto run = [&](double dropout) {
    TrainConfig c;
    c.seed = 1;
    c.dropout_rate = dropout;
    auto m = Model<float>::build(configured_spec(ModelSpec{}, c), init_seed(c));
    const FitSummary s = fit<float>(m, train, val, c);
    const EpochLog& last = s.logs.back();
    return Result{evaluate<float>(m, train).accuracy, last.validation.f1, *last.validation.degree_of_overfitting};
  };
  const Result plain = run(0.0);
  const Result drop = run(0.5);
  const bool pass = plain.train_acc == 1.0 && plain.f1 >= 0.95 && drop.degree <= plain.degree;
  return {pass, fmt("train acc %.4f, val F1 %.4f; ", plain.train_acc, plain.f1) +
                    fmt("degree %.4f without dropout, %.4f with 0.5", plain.degree, drop.degree)};
}

fs::path small_manifest(const fs::path& dir) {
  const auto ds = testsupport::write_blob_dataset(dir / "data", 12, 99, 32);
  cli_run({"--out", (dir / "split").string(), "--seed", "3", "split", "--labels", ds.labels_csv.string(), "--images",
           ds.root.string()});
  return dir / "split" / "split.csv";
}

Outcome determinism() {
  const fs::path dir = testsupport::fresh_dir("acceptance_determinism");
  const fs::path manifest = small_manifest(dir);
  for (const char* run : {"a", "b"}) {
    if (cli_run({"--out", (dir / run).string(), "--seed", "17", "train", "--manifest", manifest.string(),
                 "--epochs", "3", "--batch-size", "8", "--input-size", "32", "--dropout", "0.3"}) != 0) {
      return {false, "train failed"};
    }
  }
  for (const char* f : {"epoch_log.csv", "final.ckpt", "best.ckpt"}) {
    const std::string a = testsupport::read_file(dir / "a" / f), b = testsupport::read_file(dir / "b" / f);
    if (a.empty() || a != b) return {false, std::string(f) + " differs"};
  }
  return {true, "epoch log and checkpoints byte-identical"};
}

Outcome split_arithmetic() {
  std::vector<int> labels;
  for (int i = 0; i < 500; ++i) labels.push_back(i < 250 ? 0 : 1);
  const SplitDataset s = stratified_split(labels, {}, 0);
  std::size_t counts[2][3] = {};
  const std::vector<std::size_t>* parts[3] = {&s.train, &s.validation, &s.test};
  for (std::size_t p = 0; p < 3; ++p) {
    for (const auto i : *parts[p]) ++counts[labels[i]][p];
  }
  bool pass = true;
  for (const auto& c : counts) pass &= c[0] == 175 && c[1] == 50 && c[2] == 25;
  return {pass, fmt("per class %.0f/%.0f/%.0f", double(counts[1][0]), double(counts[1][1]), double(counts[1][2]))};
}

Outcome ablation_harness() {
  const fs::path dir = testsupport::fresh_dir("acceptance_sweep");
  const fs::path manifest = small_manifest(dir);
  if (cli_run({"--out", (dir / "sweep").string(), "sweep", "--manifest", manifest.string(), "--epochs", "2",
               "--batch-size", "8", "--input-size", "32", "--rates", "0.3,0.4,0.5,0.6,0.7"}) != 0) {
    return {false, "sweep failed"};
  }
  std::ifstream is(dir / "sweep" / "sweep.csv");
  const CsvTable t = read_csv(is);
  const std::vector<std::string> header = {"rate", "train_acc", "val_acc", "overfit_degree", "f1", "status"};
  if (t.header != header) return {false, "unexpected header"};
  if (t.rows.size() != 5) return {false, std::to_string(t.rows.size()) + " rows"};
  double worst = 0.0;
  for (const auto& row : t.rows) {
    const double degree = std::stod(row.fields[3]);
    worst = std::max(worst, std::abs(degree - (std::stod(row.fields[1]) - std::stod(row.fields[2]))));
  }
  return {worst <= 1e-4, fmt("5 rows, worst |degree-(train-val)| %.1e", worst)};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"parameter accounting", parameter_accounting},
      {"shape chain", shape_chain},
      {"gradient checks", gradient_checks},
      {"batch-norm suite", batch_norm_suite},
      {"metric formulas", metric_formulas},
      {"augmentation properties", augmentation_properties},
      {"synthetic end-to-end", synthetic_end_to_end},
      {"determinism", determinism},
      {"split arithmetic", split_arithmetic},
      {"ablation harness", ablation_harness},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!o.pass) ++failed;
    std::printf("criterion %zu %s: %s (%s) [%.2fs]\n", i + 1, criteria[i].first.c_str(), o.pass ? "PASS" : "FAIL",
                o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
