#include "exnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "exnet/error.hpp"
#include "exnet/rng.hpp"

namespace exnet {

bool GradCheckReport::passed() const {
  return !entries.empty() && std::all_of(entries.begin(), entries.end(), [](const LayerCheck& e) { return e.passed; });
}

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

namespace {

using Tensord = Tensor<double>;

Tensord random_tensor(const Shape& shape, Rng& rng, double scale = 1.0) {
  Tensord t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = scale * rng.normal();
  return t;
}

/// A scalar objective plus the hooks needed to probe it.
struct Objective {
  std::function<double()> value;           // recomputes the objective
  std::function<std::uint64_t()> signature;  // kink state of the last value()
};

/// Probes `count` random entries of `target` whose analytic derivative is
/// `analytic`, folding the worst relative error into `out`.
void probe_tensor(Tensord& target, const Tensord& analytic, const Objective& obj, std::uint64_t base_signature,
                  std::size_t count, double h, Rng& rng, LayerCheck& out) {
  const std::size_t max_attempts = count * 10;
  std::size_t accepted = 0;
  for (std::size_t attempt = 0; attempt < max_attempts && accepted < count; ++attempt) {
    const std::size_t i = static_cast<std::size_t>(rng.below(target.size()));
    const double saved = target[i];
    target[i] = saved + h;
    const double plus = obj.value();
    const bool plus_ok = obj.signature() == base_signature;
    target[i] = saved - h;
    const double minus = obj.value();
    const bool minus_ok = obj.signature() == base_signature;
    target[i] = saved;
    if (!plus_ok || !minus_ok) {
      ++out.redrawn;
      continue;
    }
    const double numeric = (plus - minus) / (2.0 * h);
    out.max_relative_error = std::max(out.max_relative_error, relative_error(analytic[i], numeric));
    ++accepted;
  }
  out.probes += accepted;
}

void zero_grads(Layer<double>& layer) {
  for (auto& p : layer.parameters()) p.grad->fill(0.0);
}

/// Checks a single layer against the objective sum(r * layer(x)).
LayerCheck check_layer(const std::string& label, Layer<double>& layer, Tensord input, const GradCheckOptions& opt,
                       Rng& rng) {
  LayerCheck out;
  out.layer = label;
  const Tensord first = layer.forward(input, Mode::train);
  const Tensord upstream = random_tensor(first.shape(), rng);
  zero_grads(layer);
  const Tensord input_grad = layer.backward(upstream);
  const std::uint64_t base = layer.activation_signature();

  std::vector<std::pair<Tensord*, Tensord>> targets;
  targets.emplace_back(&input, input_grad);
  for (auto& p : layer.parameters()) targets.emplace_back(p.value, *p.grad);

  const Objective obj{[&] { return dot(upstream, layer.forward(input, Mode::train)); },
                      [&] { return layer.activation_signature(); }};
  for (auto& [target, analytic] : targets) probe_tensor(*target, analytic, obj, base, opt.probes, opt.step, rng, out);
  out.passed = out.probes > 0 && out.max_relative_error < opt.tolerance;
  return out;
}

LayerCheck check_conv(const GradCheckOptions& opt, Rng& rng) {
  std::unique_ptr<Conv2d<double>> conv = opt.conv_factory ? opt.conv_factory("conv", 3, 4, 3)
                                                          : std::make_unique<Conv2d<double>>("conv", 3, 4, 3);
  conv->init_he_uniform(rng);
  auto& b = conv->params().bias;
  for (std::size_t i = 0; i < b.size(); ++i) b[i] = 0.1 * rng.normal();
  return check_layer("conv", *conv, random_tensor({2, 3, 7, 6}, rng), opt, rng);
}

LayerCheck check_batchnorm(const GradCheckOptions& opt, Rng& rng) {
  BatchNorm2d<double> bn("batchnorm", 3);
  auto& p = bn.params();
  for (std::size_t i = 0; i < 3; ++i) {
    p.gamma[i] = 1.0 + 0.5 * rng.normal();
    p.beta[i] = 0.5 * rng.normal();
  }
  Tensord x = random_tensor({4, 3, 3, 3}, rng, 2.0);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] += 1.0;
  return check_layer("batchnorm", bn, std::move(x), opt, rng);
}

LayerCheck check_relu(const GradCheckOptions& opt, Rng& rng) {
  ReLU<double> relu("relu");
  Tensord x({3, 2, 4, 4});
  for (std::size_t i = 0; i < x.size(); ++i) {
    double z;
    do z = rng.normal();
    while (std::abs(z) < 1e-3);
    x[i] = z;
  }
  return check_layer("relu", relu, std::move(x), opt, rng);
}

LayerCheck check_maxpool(const GradCheckOptions& opt, Rng& rng) {
  MaxPool2d<double> pool("maxpool", 2);
  return check_layer("maxpool", pool, random_tensor({2, 3, 7, 5}, rng), opt, rng);
}

LayerCheck check_linear(const GradCheckOptions& opt, Rng& rng) {
  Linear<double> fc("linear", 12, 5);
  fc.init_he_uniform(rng);
  auto& b = fc.params().bias;
  for (std::size_t i = 0; i < b.size(); ++i) b[i] = 0.1 * rng.normal();
  return check_layer("linear", fc, random_tensor({4, 12}, rng), opt, rng);
}

LayerCheck check_dropout(const GradCheckOptions& opt, Rng& rng) {
  Dropout<double> drop("dropout", 0.5, derive_seed(opt.seed, 0xD0));
  drop.set_mask_frozen(true);
  return check_layer("dropout", drop, random_tensor({4, 10}, rng), opt, rng);
}

LayerCheck check_softmax_ce(const GradCheckOptions& opt, Rng& rng) {
  LayerCheck out;
  out.layer = "softmax_ce";
  Tensord logits = random_tensor({6, 3}, rng, 2.0);
  std::vector<int> labels(6);
  for (auto& l : labels) l = static_cast<int>(rng.below(3));
  const Tensord analytic = softmax_cross_entropy(logits, std::span<const int>(labels)).grad;
  const Objective obj{[&] { return softmax_cross_entropy(logits, std::span<const int>(labels)).loss; },
                      [] { return std::uint64_t{0}; }};
  probe_tensor(logits, analytic, obj, 0, opt.probes, opt.step, rng, out);
  out.passed = out.probes > 0 && out.max_relative_error < opt.tolerance;
  return out;
}

LayerCheck check_model(const ModelSpec& spec, const GradCheckOptions& opt, Rng& rng) {
  LayerCheck out;
  out.layer = "model";
  Model<double> model = Model<double>::build(spec, derive_seed(opt.seed, 0x30DE));
  model.set_mode(Mode::train);
  for (const auto& layer : model.layers()) {
    if (auto* d = dynamic_cast<Dropout<double>*>(layer.get())) d->set_mask_frozen(true);
  }
  Shape shape = spec.input_shape();
  shape.insert(shape.begin(), opt.batch);
  Tensord x({shape});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.uniform();
  std::vector<int> labels(opt.batch);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % spec.classes);

  const auto loss = [&] {
    return softmax_cross_entropy(model.forward(x), std::span<const int>(labels)).loss;
  };
  model.zero_grad();
  const Tensord logits = model.forward(x);
  model.backward(softmax_cross_entropy(logits, std::span<const int>(labels)).grad);
  const std::uint64_t base = model.activation_signature();

  const Objective obj{loss, [&] { return model.activation_signature(); }};
  for (auto& p : model.parameters()) {
    // A bias feeding batch norm has an identically zero gradient; only rounding noise is left to compare.
    if (spec.use_batchnorm && p.name.starts_with("conv") && p.name.ends_with(".bias")) continue;
    const Tensord analytic = *p.grad;
    probe_tensor(*p.value, analytic, obj, base, opt.probes, opt.step, rng, out);
  }
  out.passed = out.probes > 0 && out.max_relative_error < opt.tolerance;
  return out;
}

}  // namespace

GradCheckReport grad_check(const ModelSpec& spec, const GradCheckOptions& options) {
  if (!(options.tolerance > 0.0)) throw ConfigError("gradcheck tolerance must be > 0");
  if (!(options.step > 0.0)) throw ConfigError("gradcheck step must be > 0");
  if (options.probes == 0 || options.batch < 2) throw ConfigError("gradcheck needs probes >= 1 and batch >= 2");
  spec.validate();
  GradCheckReport report;
  report.tolerance = options.tolerance;
  using Check = LayerCheck (*)(const GradCheckOptions&, Rng&);
  const Check checks[] = {check_conv, check_batchnorm, check_relu, check_maxpool,
                          check_linear, check_dropout, check_softmax_ce};
  std::uint64_t stream = 1;
  for (const Check c : checks) {
    Rng rng(derive_seed(options.seed, stream++));
    report.entries.push_back(c(options, rng));
  }
  Rng rng(derive_seed(options.seed, stream));
  report.entries.push_back(check_model(spec, options, rng));
  return report;
}

std::string format_gradcheck(const GradCheckReport& report) {
  std::string s;
  char line[160];
  for (const auto& e : report.entries) {
    std::snprintf(line, sizeof line, "%-12s max_rel_err=%.3e probes=%zu redrawn=%zu %s\n", e.layer.c_str(),
                  e.max_relative_error, e.probes, e.redrawn, e.passed ? "PASS" : "FAIL");
    s += line;
  }
  std::snprintf(line, sizeof line, "tolerance %.1e: %s\n", report.tolerance, report.passed() ? "PASS" : "FAIL");
  s += line;
  return s;
}

}  // namespace exnet
