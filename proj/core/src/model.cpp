#include "exnet/model.hpp"

#include <charconv>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "exnet/tensor_io.hpp"

namespace exnet {

// -------------------------------------------------------------- ModelSpec

void ModelSpec::validate() const {
  auto positive = [](std::size_t v, const char* what) {
    if (v == 0) throw ConfigError(std::string("model spec: ") + what + " must be >= 1");
  };
  positive(input_channels, "input_channels");
  positive(input_height, "input_height");
  positive(input_width, "input_width");
  positive(conv1_filters, "conv1_filters");
  positive(conv2_filters, "conv2_filters");
  positive(kernel, "kernel");
  positive(pool, "pool");
  positive(fc1, "fc1");
  positive(fc2, "fc2");
  if (classes < 2) throw ConfigError("model spec: classes must be >= 2");
  validate_dropout_rate(dropout_rate);
  if (!(bn_epsilon > 0.0)) throw ConfigError("model spec: bn_epsilon must be positive");
  if (!(bn_momentum > 0.0 && bn_momentum < 1.0)) throw ConfigError("model spec: bn_momentum must be in (0,1)");
  if (input_mean.size() != input_std.size() ||
      (!input_mean.empty() && input_mean.size() != input_channels)) {
    throw ConfigError("model spec: input_mean/input_std must both be empty or one value per channel");
  }
  for (const double s : input_std) {
    if (!(s > 0.0)) throw ConfigError("model spec: input_std entries must be positive");
  }
  try {
    const Window conv{kernel, kernel, 1};
    const Window pooling{pool, pool, pool};
    auto [h, w] = window_output(input_height, input_width, conv);
    std::tie(h, w) = window_output(h, w, pooling);
    std::tie(h, w) = window_output(h, w, conv);
    window_output(h, w, pooling);
  } catch (const ShapeError& e) {
    throw ConfigError(std::string("model spec: input too small for the network: ") + e.what());
  }
}

namespace {

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string format_list(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += format_double(v[i]);
  }
  return out;
}

std::size_t parse_size(const std::string& key, std::string_view v) {
  std::size_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size()) {
    throw FormatError("model spec: bad integer for " + key + ": '" + std::string(v) + "'");
  }
  return out;
}

double parse_double(const std::string& key, std::string_view v) {
  const std::string s(v);
  char* end = nullptr;
  const double out = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) {
    throw FormatError("model spec: bad number for " + key + ": '" + s + "'");
  }
  return out;
}

std::vector<double> parse_list(const std::string& key, std::string_view v) {
  std::vector<double> out;
  if (v.empty()) return out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = v.find(',', start);
    out.push_back(parse_double(key, v.substr(start, comma == std::string_view::npos ? v.npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace

std::string ModelSpec::serialize() const {
  std::ostringstream os;
  os << "input_channels=" << input_channels << '\n'
     << "input_height=" << input_height << '\n'
     << "input_width=" << input_width << '\n'
     << "conv1_filters=" << conv1_filters << '\n'
     << "conv2_filters=" << conv2_filters << '\n'
     << "kernel=" << kernel << '\n'
     << "pool=" << pool << '\n'
     << "fc1=" << fc1 << '\n'
     << "fc2=" << fc2 << '\n'
     << "classes=" << classes << '\n'
     << "use_batchnorm=" << (use_batchnorm ? "true" : "false") << '\n'
     << "dropout_rate=" << format_double(dropout_rate) << '\n'
     << "bn_epsilon=" << format_double(bn_epsilon) << '\n'
     << "bn_momentum=" << format_double(bn_momentum) << '\n'
     << "input_mean=" << format_list(input_mean) << '\n'
     << "input_std=" << format_list(input_std) << '\n';
  return os.str();
}

ModelSpec ModelSpec::parse(std::string_view text) {
  ModelSpec spec;
  std::map<std::string, bool> seen;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    const std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos) throw FormatError("model spec: malformed line '" + std::string(line) + "'");
    const std::string key(line.substr(0, eq));
    const std::string_view v = line.substr(eq + 1);
    if (seen[key]) throw FormatError("model spec: duplicate key " + key);
    seen[key] = true;
    if (key == "input_channels") spec.input_channels = parse_size(key, v);
    else if (key == "input_height") spec.input_height = parse_size(key, v);
    else if (key == "input_width") spec.input_width = parse_size(key, v);
    else if (key == "conv1_filters") spec.conv1_filters = parse_size(key, v);
    else if (key == "conv2_filters") spec.conv2_filters = parse_size(key, v);
    else if (key == "kernel") spec.kernel = parse_size(key, v);
    else if (key == "pool") spec.pool = parse_size(key, v);
    else if (key == "fc1") spec.fc1 = parse_size(key, v);
    else if (key == "fc2") spec.fc2 = parse_size(key, v);
    else if (key == "classes") spec.classes = parse_size(key, v);
    else if (key == "use_batchnorm") {
      if (v != "true" && v != "false") throw FormatError("model spec: bad boolean for use_batchnorm");
      spec.use_batchnorm = v == "true";
    } else if (key == "dropout_rate") spec.dropout_rate = parse_double(key, v);
    else if (key == "bn_epsilon") spec.bn_epsilon = parse_double(key, v);
    else if (key == "bn_momentum") spec.bn_momentum = parse_double(key, v);
    else if (key == "input_mean") spec.input_mean = parse_list(key, v);
    else if (key == "input_std") spec.input_std = parse_list(key, v);
    else throw FormatError("model spec: unknown key " + key);
  }
  try {
    spec.validate();
  } catch (const ConfigError& e) {
    throw FormatError(e.what());
  }
  return spec;
}

ModelSpec ModelSpec::shrunken() {
  ModelSpec spec;
  spec.input_height = 16;
  spec.input_width = 16;
  spec.use_batchnorm = true;
  spec.dropout_rate = 0.5;
  return spec;
}

// ------------------------------------------------------------------ Model

template <typename T>
void Model<T>::add(std::unique_ptr<Layer<T>> layer, std::string display) {
  layers_.push_back(std::move(layer));
  display_.push_back(std::move(display));
}

template <typename T>
Model<T> Model<T>::build(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  Model m;
  m.spec_ = spec;
  Rng rng(seed);

  auto conv1 = std::make_unique<Conv2d<T>>("conv1", spec.input_channels, spec.conv1_filters, spec.kernel);
  auto conv2 = std::make_unique<Conv2d<T>>("conv2", spec.conv1_filters, spec.conv2_filters, spec.kernel);

  const Window conv{spec.kernel, spec.kernel, 1};
  const Window pooling{spec.pool, spec.pool, spec.pool};
  auto [h, w] = window_output(spec.input_height, spec.input_width, conv);
  std::tie(h, w) = window_output(h, w, pooling);
  std::tie(h, w) = window_output(h, w, conv);
  std::tie(h, w) = window_output(h, w, pooling);
  const std::size_t flat = spec.conv2_filters * h * w;

  auto fc1 = std::make_unique<Linear<T>>("fc1", flat, spec.fc1);
  auto fc2 = std::make_unique<Linear<T>>("fc2", spec.fc1, spec.fc2);
  auto out = std::make_unique<Linear<T>>("output", spec.fc2, spec.classes);

  conv1->init_he_uniform(rng);
  conv2->init_he_uniform(rng);
  fc1->init_he_uniform(rng);
  fc2->init_he_uniform(rng);
  out->init_he_uniform(rng);

  conv1->set_input_grad_required(false);
  m.add(std::move(conv1), "Conv-1");
  if (spec.use_batchnorm) {
    m.add(std::make_unique<BatchNorm2d<T>>("bn1", spec.conv1_filters, spec.bn_epsilon, spec.bn_momentum),
          "BatchNorm2d");
  }
  m.add(std::make_unique<ReLU<T>>("relu1"), "ReLU");
  m.add(std::make_unique<MaxPool2d<T>>("pool1", spec.pool), "Max-Pool");
  m.add(std::move(conv2), "Conv-2");
  if (spec.use_batchnorm) {
    m.add(std::make_unique<BatchNorm2d<T>>("bn2", spec.conv2_filters, spec.bn_epsilon, spec.bn_momentum),
          "BatchNorm2d");
  }
  m.add(std::make_unique<ReLU<T>>("relu2"), "ReLU");
  m.add(std::make_unique<MaxPool2d<T>>("pool2", spec.pool), "Max-Pool");
  m.add(std::make_unique<Flatten<T>>("flatten"), "Flatten");
  m.add(std::move(fc1), "FullyConv1");
  m.add(std::make_unique<ReLU<T>>("relu3"), "ReLU");
  if (spec.dropout_rate > 0.0) {
    m.add(std::make_unique<Dropout<T>>("dropout1", spec.dropout_rate, derive_seed(seed, 0xD1)), "Dropout");
  }
  m.add(std::move(fc2), "FullyConv2");
  m.add(std::make_unique<ReLU<T>>("relu4"), "ReLU");
  if (spec.dropout_rate > 0.0) {
    m.add(std::make_unique<Dropout<T>>("dropout2", spec.dropout_rate, derive_seed(seed, 0xD2)), "Dropout");
  }
  m.add(std::move(out), "Output");
  return m;
}

template <typename T>
Tensor<T> Model<T>::forward(const Tensor<T>& batch, std::vector<Shape>* trace) {
  const Shape expected = spec_.input_shape();
  if (batch.rank() != 4 || !std::equal(expected.begin(), expected.end(), batch.shape().begin() + 1)) {
    throw_shape_error("model input " + shape_str(batch.shape()) + " does not match [N," +
                      shape_str(expected).substr(1));
  }
  if (trace) {
    trace->clear();
    trace->push_back(batch.shape());
  }
  Tensor<T> x = layers_.front()->forward(batch, mode_);
  if (trace) trace->push_back(x.shape());
  for (std::size_t i = 1; i < layers_.size(); ++i) {
    x = layers_[i]->forward(x, mode_);
    if (trace) trace->push_back(x.shape());
  }
  has_forward_ = true;
  forward_mode_ = mode_;
  return x;
}

template <typename T>
void Model<T>::backward(const Tensor<T>& logits_grad) {
  if (!has_forward_) throw StateError("model backward called without a recorded forward");
  if (forward_mode_ != Mode::train) throw StateError("model backward requires a train-mode forward");
  Tensor<T> g = logits_grad;
  for (std::size_t i = layers_.size(); i-- > 0;) g = layers_[i]->backward(g);
}

template <typename T>
void Model<T>::zero_grad() {
  for (auto& p : parameters()) p.grad->fill(T{});
}

template <typename T>
std::vector<ParamRef<T>> Model<T>::parameters() {
  std::vector<ParamRef<T>> out;
  for (auto& l : layers_) {
    for (auto& p : l->parameters()) out.push_back(std::move(p));
  }
  return out;
}

template <typename T>
std::vector<BufferRef<T>> Model<T>::buffers() {
  std::vector<BufferRef<T>> out;
  for (auto& l : layers_) {
    for (auto& b : l->buffers()) out.push_back(std::move(b));
  }
  return out;
}

template <typename T>
std::size_t Model<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l->parameter_count();
  return n;
}

template <typename T>
Layer<T>& Model<T>::layer(std::string_view name) {
  for (auto& l : layers_) {
    if (l->name() == name) return *l;
  }
  throw Error("no layer named " + std::string(name));
}

template <typename T>
std::uint64_t Model<T>::activation_signature() const {
  std::uint64_t h = 0;
  for (const auto& l : layers_) h = h * 1000003ULL ^ l->activation_signature();
  return h;
}

// ---------------------------------------------------------- param report

template <typename T>
ParamReport count_parameters(const Model<T>& model) {
  ParamReport r;
  Shape shape = model.spec().input_shape();
  shape.insert(shape.begin(), 1);
  r.rows.push_back({"Input", "input", model.spec().input_shape(), 0});
  const auto layers = model.layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    shape = layers[i]->output_shape(shape);
    const std::size_t trainable = layers[i]->parameter_count();
    const std::size_t params = trainable + layers[i]->buffer_count();
    r.rows.push_back({std::string(model.display_name(i)), layers[i]->name(), Shape(shape.begin() + 1, shape.end()),
                      params, trainable});
    r.total += params;
    r.trainable += trainable;
  }
  return r;
}

ParamReport count_parameters(const ModelSpec& spec) {
  return count_parameters(Model<float>::build(spec, 0));
}

namespace {

std::string with_commas(std::size_t v) {
  std::string s = std::to_string(v);
  for (int i = static_cast<int>(s.size()) - 3; i > 0; i -= 3) s.insert(static_cast<std::size_t>(i), ",");
  return s;
}

std::string table_shape(const Shape& s) {
  if (s.size() == 3) return std::to_string(s[0]) + ", " + std::to_string(s[1]) + "x" + std::to_string(s[2]);
  return std::to_string(s.back());
}

}  // namespace

std::string format_param_report(const ParamReport& report, bool compare) {
  std::ostringstream os;
  os << std::left << std::setw(14) << "Layer" << std::setw(16) << "Output Shape" << std::right << std::setw(12)
     << "Parameters" << '\n';
  os << std::string(42, '-') << '\n';
  for (const auto& row : report.rows) {
    os << std::left << std::setw(14) << row.layer << std::setw(16) << table_shape(row.output_shape) << std::right
       << std::setw(12) << (row.name == "input" || row.parameters == 0 ? std::string("---") : with_commas(row.parameters))
       << '\n';
  }
  os << std::string(42, '-') << '\n';
  char millions[32];
  std::snprintf(millions, sizeof millions, "%.2f", static_cast<double>(report.total) / 1e6);
  os << std::left << std::setw(30) << "Total Parameters" << std::right << std::setw(12) << with_commas(report.total)
     << "\n(" << millions << " million)\n";
  os << std::left << std::setw(30) << "Trainable Parameters" << std::right << std::setw(12)
     << with_commas(report.trainable) << '\n';
  if (compare) {
    os << '\n' << std::left << std::setw(30) << "Model" << std::right << std::setw(12) << "Params (M)" << '\n';
    os << std::string(42, '-') << '\n';
    for (const auto& ref : kReferenceModels) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.2f", ref.millions);
      os << std::left << std::setw(30) << ref.name << std::right << std::setw(12) << buf << '\n';
    }
    os << std::left << std::setw(30) << "Proposed (this build)" << std::right << std::setw(12) << millions << '\n';
  }
  return os.str();
}

// ------------------------------------------------------------ checkpoints

namespace {

constexpr char kCheckpointMagic[4] = {'E', 'X', 'C', 'K'};

template <typename T>
std::vector<std::pair<std::string, Tensor<T>*>> model_state(const Model<T>& model) {
  std::vector<std::pair<std::string, Tensor<T>*>> out;
  for (const auto& l : model.layers()) {
    for (auto& p : l->parameters()) out.emplace_back(p.name, p.value);
  }
  for (const auto& l : model.layers()) {
    for (auto& b : l->buffers()) out.emplace_back(b.name, b.value);
  }
  return out;
}

}  // namespace

template <typename T>
void save_checkpoint(const Model<T>& model, std::ostream& os) {
  os.write(kCheckpointMagic, 4);
  io::write_u32(os, kCheckpointVersion);
  io::write_u8(os, static_cast<std::uint8_t>(sizeof(T)));
  const std::string spec = model.spec().serialize();
  io::write_u64(os, spec.size());
  io::write_bytes(os, spec);
  const auto state = model_state(model);
  io::write_u64(os, state.size());
  for (const auto& [name, tensor] : state) {
    io::write_u64(os, name.size());
    io::write_bytes(os, name);
    write_tensor(os, *tensor);
  }
  if (!os) throw FormatError("failed writing checkpoint");
}

template <typename T>
void save_checkpoint(const Model<T>& model, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError("cannot open checkpoint for writing: " + path.string());
  save_checkpoint(model, os);
}

template <typename T>
Model<T> load_checkpoint(std::istream& is) {
  const std::string magic = io::read_bytes(is, 4);
  if (std::memcmp(magic.data(), kCheckpointMagic, 4) != 0) throw FormatError("not a checkpoint (bad magic)");
  const std::uint32_t version = io::read_u32(is);
  if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
  const std::uint8_t width = io::read_u8(is);
  if (width != sizeof(T)) {
    throw FormatError("checkpoint stores " + std::to_string(width * 8) + "-bit elements, expected " +
                      std::to_string(sizeof(T) * 8));
  }
  const std::uint64_t spec_len = io::read_u64(is);
  if (spec_len > (1u << 20)) throw FormatError("checkpoint spec too large");
  const ModelSpec spec = ModelSpec::parse(io::read_bytes(is, static_cast<std::size_t>(spec_len)));

  Model<T> model = Model<T>::build(spec, 0);
  auto state = model_state(model);
  const std::uint64_t count = io::read_u64(is);
  if (count != state.size()) {
    throw FormatError("checkpoint holds " + std::to_string(count) + " tensors, spec requires " +
                      std::to_string(state.size()));
  }
  for (auto& [name, target] : state) {
    const std::uint64_t name_len = io::read_u64(is);
    if (name_len > 256) throw FormatError("checkpoint tensor name too long");
    const std::string stored = io::read_bytes(is, static_cast<std::size_t>(name_len));
    if (stored != name) throw FormatError("checkpoint tensor '" + stored + "' where '" + name + "' expected");
    Tensor<T> t = read_tensor<T>(is);
    if (t.shape() != target->shape()) {
      throw FormatError("checkpoint tensor " + name + " has shape " + shape_str(t.shape()) + ", spec requires " +
                        shape_str(target->shape()));
    }
    *target = std::move(t);
  }
  if (is.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes after checkpoint");
  model.set_mode(Mode::eval);
  return model;
}

template <typename T>
Model<T> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open checkpoint: " + path.string());
  return load_checkpoint<T>(is);
}

Precision checkpoint_precision(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open checkpoint: " + path.string());
  const std::string magic = io::read_bytes(is, 4);
  if (std::memcmp(magic.data(), kCheckpointMagic, 4) != 0) throw FormatError("not a checkpoint (bad magic)");
  io::read_u32(is);
  const std::uint8_t width = io::read_u8(is);
  if (width == 4) return Precision::f32;
  if (width == 8) return Precision::f64;
  throw FormatError("bad checkpoint element width " + std::to_string(width));
}

#define EXNET_INSTANTIATE(T)                                                       \
  template class Model<T>;                                                         \
  template ParamReport count_parameters<T>(const Model<T>&);                       \
  template void save_checkpoint<T>(const Model<T>&, std::ostream&);                \
  template void save_checkpoint<T>(const Model<T>&, const std::filesystem::path&); \
  template Model<T> load_checkpoint<T>(std::istream&);                             \
  template Model<T> load_checkpoint<T>(const std::filesystem::path&);

EXNET_INSTANTIATE(float)
EXNET_INSTANTIATE(double)

#undef EXNET_INSTANTIATE

}  // namespace exnet
