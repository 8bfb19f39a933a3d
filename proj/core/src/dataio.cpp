#include "exnet/dataio.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <ostream>

#include "exnet/csv.hpp"
#include "exnet/error.hpp"
#include "exnet/rng.hpp"

namespace exnet {

Label binarize_grade(int grade) {
  if (grade < 0 || grade > 4) throw DataError("DR grade " + std::to_string(grade) + " outside 0..4");
  return grade == 0 ? Label::normal : Label::exudate;
}

namespace {

int parse_int_field(const std::string& s, std::size_t line, std::string_view column) {
  int v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size()) {
    throw FormatError("CSV line " + std::to_string(line) + ": bad " + std::string(column) + " '" + s + "'");
  }
  return v;
}

std::filesystem::path resolve_image(const std::filesystem::path& root, const std::string& name) {
  const std::filesystem::path direct = root / name;
  if (std::filesystem::exists(direct) || direct.has_extension()) return direct;
  for (const char* ext : {".png", ".jpeg", ".jpg"}) {
    std::filesystem::path p = direct;
    p += ext;
    if (std::filesystem::exists(p)) return p;
  }
  return direct;
}

}  // namespace

std::vector<SampleRef> read_labels_csv(const std::filesystem::path& labels_csv,
                                       const std::filesystem::path& image_root) {
  std::ifstream is(labels_csv);
  if (!is) throw DataError("cannot open labels CSV " + labels_csv.string());
  const CsvTable table = read_csv(is);
  const std::size_t image_col =
      table.column("image") != std::string_view::npos ? table.column("image") : table.column("out_path");
  if (image_col == std::string_view::npos) throw FormatError("labels CSV needs an 'image' or 'out_path' column");
  const std::size_t grade_col = table.column("grade");
  const std::size_t label_col = table.column("label");
  if (grade_col == std::string_view::npos && label_col == std::string_view::npos) {
    throw FormatError("labels CSV needs a 'grade' or 'label' column");
  }
  std::vector<SampleRef> refs;
  refs.reserve(table.rows.size());
  for (const auto& row : table.rows) {
    const std::string& image = row.fields[image_col];
    if (image.empty()) throw FormatError("CSV line " + std::to_string(row.line) + ": empty image name");
    int label;
    if (grade_col != std::string_view::npos) {
      const int grade = parse_int_field(row.fields[grade_col], row.line, "grade");
      if (grade < 0 || grade > 4) {
        throw FormatError("CSV line " + std::to_string(row.line) + ": grade " + std::to_string(grade) +
                          " outside 0..4");
      }
      label = static_cast<int>(binarize_grade(grade));
    } else {
      label = parse_int_field(row.fields[label_col], row.line, "label");
      if (label != 0 && label != 1) {
        throw FormatError("CSV line " + std::to_string(row.line) + ": label must be 0 or 1");
      }
    }
    refs.push_back({resolve_image(image_root, image).generic_string(), label});
  }
  return refs;
}

LoadResult load_images(std::span<const SampleRef> refs, std::size_t width, std::size_t height) {
  LoadResult out;
  out.items.reserve(refs.size());
  for (const auto& ref : refs) {
    try {
      ImageBuf img = read_image(ref.path);
      out.items.push_back({ref.path, resize_bilinear(img, width, height), ref.label});
    } catch (const DataError& e) {
      out.errors.push_back({ref.path, e.what()});
    }
  }
  return out;
}

LoadResult load_dataset(const std::filesystem::path& labels_csv, const std::filesystem::path& image_root,
                        std::size_t width, std::size_t height) {
  const auto refs = read_labels_csv(labels_csv, image_root);
  return load_images(refs, width, height);
}

// ----------------------------------------------------------------- split

std::string_view split_name(SplitName s) {
  switch (s) {
    case SplitName::train:
      return "train";
    case SplitName::validation:
      return "validation";
    case SplitName::test:
      return "test";
  }
  return "";
}

SplitName parse_split_name(std::string_view s) {
  if (s == "train") return SplitName::train;
  if (s == "validation" || s == "val") return SplitName::validation;
  if (s == "test") return SplitName::test;
  throw FormatError("unknown split name '" + std::string(s) + "'");
}

const std::vector<std::size_t>& SplitDataset::operator[](SplitName s) const {
  return s == SplitName::train ? train : s == SplitName::validation ? validation : test;
}

const std::vector<SampleRef>& SplitManifest::operator[](SplitName s) const {
  return s == SplitName::train ? train : s == SplitName::validation ? validation : test;
}

namespace {

void validate_fractions(const SplitOptions& options) {
  const auto& f = options.fractions;
  for (const double v : {f.train, f.validation, f.test}) {
    if (!(v >= 0.0 && v <= 1.0)) throw ConfigError("split fractions must lie in [0, 1]");
    if (v == 0.0 && !options.allow_empty) {
      throw ConfigError("zero split fraction requires allowing empty splits");
    }
  }
  if (std::abs(f.train + f.validation + f.test - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1");
}

}  // namespace

std::vector<std::size_t> apportion(std::size_t n, const SplitFractions& fractions) {
  const double f[3] = {fractions.train, fractions.validation, fractions.test};
  std::vector<std::size_t> counts(3);
  double remainder[3];
  std::size_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    const double exact = static_cast<double>(n) * f[i];
    // Guard against 174.99999999999997 style products.
    const double whole = std::floor(exact + 1e-9);
    counts[i] = static_cast<std::size_t>(whole);
    remainder[i] = exact - whole;
    assigned += counts[i];
  }
  while (assigned < n) {
    int best = 0;
    for (int i = 1; i < 3; ++i) {
      if (remainder[i] > remainder[best]) best = i;
    }
    ++counts[best];
    remainder[best] = -1.0;
    ++assigned;
  }
  return counts;
}

SplitDataset stratified_split(std::span<const int> labels, const SplitOptions& options, std::uint64_t seed) {
  validate_fractions(options);
  const double f[3] = {options.fractions.train, options.fractions.validation, options.fractions.test};
  SplitDataset out;
  out.fractions = options.fractions;
  out.seed = seed;
  std::vector<std::size_t>* targets[3] = {&out.train, &out.validation, &out.test};

  std::map<int, std::vector<std::size_t>> groups;
  if (options.stratified) {
    for (std::size_t i = 0; i < labels.size(); ++i) groups[labels[i]].push_back(i);
  } else {
    auto& all = groups[0];
    all.resize(labels.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
  }

  for (auto& [cls, members] : groups) {
    Rng rng(derive_seed(seed, options.stratified ? static_cast<std::uint64_t>(cls) + 1 : 0));
    rng.shuffle(std::span<std::size_t>(members));
    const auto counts = apportion(members.size(), options.fractions);
    std::size_t at = 0;
    for (int s = 0; s < 3; ++s) {
      if (f[s] > 0.0 && counts[s] == 0 && !options.allow_empty) {
        throw ConfigError(std::string(options.stratified ? "class " + std::to_string(cls) : "dataset") + " has " +
                          std::to_string(members.size()) + " items, too few for a non-empty " +
                          std::string(split_name(static_cast<SplitName>(s))) + " split");
      }
      targets[s]->insert(targets[s]->end(), members.begin() + static_cast<std::ptrdiff_t>(at),
                         members.begin() + static_cast<std::ptrdiff_t>(at + counts[s]));
      at += counts[s];
    }
  }
  for (auto* t : targets) std::sort(t->begin(), t->end());
  return out;
}

void write_split_manifest(std::ostream& os, std::span<const SampleRef> refs, const SplitDataset& split) {
  os << "path,label,split\n";
  for (const SplitName s : {SplitName::train, SplitName::validation, SplitName::test}) {
    for (const std::size_t i : split[s]) {
      write_csv_row(os, {refs[i].path, std::to_string(refs[i].label), std::string(split_name(s))});
    }
  }
}

SplitManifest read_split_manifest(std::istream& is) {
  const CsvTable table = read_csv(is);
  const std::size_t path_col = table.require_column("path");
  const std::size_t label_col = table.require_column("label");
  const std::size_t split_col = table.require_column("split");
  SplitManifest m;
  for (const auto& row : table.rows) {
    const int label = parse_int_field(row.fields[label_col], row.line, "label");
    if (label != 0 && label != 1) throw FormatError("CSV line " + std::to_string(row.line) + ": label must be 0 or 1");
    SampleRef ref{row.fields[path_col], label};
    SplitName s;
    try {
      s = parse_split_name(row.fields[split_col]);
    } catch (const FormatError& e) {
      throw FormatError("CSV line " + std::to_string(row.line) + ": " + e.what());
    }
    (s == SplitName::train ? m.train : s == SplitName::validation ? m.validation : m.test).push_back(std::move(ref));
  }
  return m;
}

// --------------------------------------------------------------- batches

InputNorm channel_statistics(std::span<const LabeledImage> items) {
  if (items.empty()) throw DataError("channel statistics of an empty set");
  double sum[3] = {};
  double sq[3] = {};
  std::size_t count = 0;
  for (const auto& it : items) {
    const auto& px = it.image.pixels;
    for (std::size_t i = 0; i < px.size(); i += 3) {
      for (int c = 0; c < 3; ++c) {
        const double v = px[i + c] / 255.0;
        sum[c] += v;
        sq[c] += v * v;
      }
    }
    count += px.size() / 3;
  }
  InputNorm n;
  for (int c = 0; c < 3; ++c) {
    const double mean = sum[c] / static_cast<double>(count);
    const double var = std::max(sq[c] / static_cast<double>(count) - mean * mean, 0.0);
    n.mean.push_back(mean);
    n.std.push_back(std::max(std::sqrt(var), 1e-6));
  }
  return n;
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, 0xE90C, epoch));
  rng.shuffle(std::span<std::size_t>(order));
  return order;
}

template <typename T>
Tensor<T> images_to_tensor(std::span<const LabeledImage* const> images, const InputNorm& norm) {
  if (images.empty()) throw DataError("cannot build a tensor from zero images");
  const std::size_t w = images.front()->image.width;
  const std::size_t h = images.front()->image.height;
  const bool standardize = !norm.mean.empty();
  if (standardize && (norm.mean.size() != 3 || norm.std.size() != 3)) {
    throw ConfigError("input normalization needs three channel values");
  }
  Tensor<T> out({images.size(), 3, h, w});
  const std::size_t plane = h * w;
  for (std::size_t n = 0; n < images.size(); ++n) {
    const ImageBuf& img = images[n]->image;
    if (img.width != w || img.height != h) throw_shape_error("images in a batch must share one size");
    T* base = out.data() + n * 3 * plane;
    for (std::size_t c = 0; c < 3; ++c) {
      const double mean = standardize ? norm.mean[c] : 0.0;
      const double inv = standardize ? 1.0 / norm.std[c] : 1.0;
      T* dst = base + c * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        dst[i] = static_cast<T>((img.pixels[i * 3 + c] / 255.0 - mean) * inv);
      }
    }
  }
  return out;
}

template <typename T>
BatchIterator<T>::BatchIterator(std::span<const LabeledImage> items, std::size_t batch_size, std::uint64_t seed,
                                std::size_t epoch, bool shuffle, InputNorm norm)
    : items_(items), batch_size_(batch_size), norm_(std::move(norm)) {
  if (batch_size_ == 0) throw ConfigError("batch size must be >= 1");
  if (shuffle) {
    order_ = epoch_order(items.size(), seed, epoch);
  } else {
    order_.resize(items.size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
  }
}

template <typename T>
bool BatchIterator<T>::next(Batch<T>& out) {
  if (cursor_ >= order_.size()) return false;
  const std::size_t end = std::min(order_.size(), cursor_ + batch_size_);
  std::vector<const LabeledImage*> picked;
  out.labels.clear();
  out.indices.assign(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                     order_.begin() + static_cast<std::ptrdiff_t>(end));
  for (const std::size_t i : out.indices) {
    picked.push_back(&items_[i]);
    out.labels.push_back(items_[i].label);
  }
  out.images = images_to_tensor<T>(picked, norm_);
  cursor_ = end;
  return true;
}

template <typename T>
std::size_t BatchIterator<T>::batch_count() const noexcept {
  return (order_.size() + batch_size_ - 1) / batch_size_;
}

template Tensor<float> images_to_tensor<float>(std::span<const LabeledImage* const>, const InputNorm&);
template Tensor<double> images_to_tensor<double>(std::span<const LabeledImage* const>, const InputNorm&);
template class BatchIterator<float>;
template class BatchIterator<double>;

}  // namespace exnet
