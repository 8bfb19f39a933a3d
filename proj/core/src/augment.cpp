#include "exnet/augment.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <numbers>
#include <ostream>

#include "exnet/csv.hpp"
#include "exnet/error.hpp"
#include "exnet/rng.hpp"

namespace exnet {

namespace {

std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

double parse_number(std::string_view s, std::string_view op) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size()) {
    throw ConfigError("bad parameter '" + std::string(s) + "' for augmentation op '" + std::string(op) + "'");
  }
  return v;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

}  // namespace

void AugmentOp::validate() const {
  switch (kind) {
    case AugmentKind::hflip:
      return;
    case AugmentKind::rotate:
      if (!(value > -180.0 && value <= 180.0)) throw ConfigError("rotation must be in (-180, 180] degrees");
      return;
    case AugmentKind::brightness:
      if (!(value > 0.0)) throw ConfigError("brightness factor must be positive");
      return;
    case AugmentKind::blur:
      if (!(value >= 1.0) || value != std::floor(value)) throw ConfigError("blur radius must be an integer >= 1");
      if (sigma < 0.0) throw ConfigError("blur sigma must be non-negative");
      return;
  }
}

std::string AugmentOp::label() const {
  switch (kind) {
    case AugmentKind::hflip:
      return "hflip";
    case AugmentKind::rotate:
      return "rotate:" + format_number(value);
    case AugmentKind::brightness:
      return "brightness:" + format_number(value);
    case AugmentKind::blur:
      return sigma > 0.0 ? "blur:" + format_number(value) + ":" + format_number(sigma)
                         : "blur:" + format_number(value);
  }
  return {};
}

AugmentOp AugmentOp::parse(std::string_view text) {
  text = trim(text);
  const std::size_t colon = text.find(':');
  const std::string_view name = text.substr(0, colon);
  const std::string_view args = colon == std::string_view::npos ? std::string_view{} : text.substr(colon + 1);
  AugmentOp op;
  if (name == "hflip" && args.empty() && colon == std::string_view::npos) {
    op = hflip();
  } else if (name == "rotate" && !args.empty()) {
    op = rotate(parse_number(args, name));
  } else if (name == "brightness" && !args.empty()) {
    op = brightness(parse_number(args, name));
  } else if (name == "blur" && !args.empty()) {
    const std::size_t second = args.find(':');
    op.kind = AugmentKind::blur;
    op.value = parse_number(args.substr(0, second), name);
    op.sigma = second == std::string_view::npos ? 0.0 : parse_number(args.substr(second + 1), name);
  } else {
    throw ConfigError("invalid augmentation op '" + std::string(text) + "'; valid ops: " + std::string(kValidOps));
  }
  op.validate();
  return op;
}

// ------------------------------------------------------------ transforms

ImageBuf hflip(const ImageBuf& image) {
  ImageBuf out(image.width, image.height);
  for (std::size_t y = 0; y < image.height; ++y) {
    for (std::size_t x = 0; x < image.width; ++x) {
      for (std::size_t c = 0; c < 3; ++c) out.at(image.width - 1 - x, y, c) = image.at(x, y, c);
    }
  }
  return out;
}

ImageBuf rotate(const ImageBuf& image, double degrees) {
  AugmentOp::rotate(degrees).validate();
  ImageBuf out(image.width, image.height);
  double cs;
  double sn;
  // Exact quarter turns keep the 90-degree mapping a pure permutation.
  if (std::fmod(degrees, 90.0) == 0.0) {
    const int quarter = static_cast<int>(std::lround(degrees / 90.0)) & 3;
    constexpr int kCos[4] = {1, 0, -1, 0};
    constexpr int kSin[4] = {0, 1, 0, -1};
    cs = kCos[quarter];
    sn = kSin[quarter];
  } else {
    const double rad = degrees * std::numbers::pi / 180.0;
    cs = std::cos(rad);
    sn = std::sin(rad);
  }
  const double cx = (static_cast<double>(image.width) - 1.0) / 2.0;
  const double cy = (static_cast<double>(image.height) - 1.0) / 2.0;
  const auto w = static_cast<long>(image.width);
  const auto h = static_cast<long>(image.height);
  auto sample = [&](long x, long y, std::size_t c) -> double {
    if (x < 0 || y < 0 || x >= w || y >= h) return 0.0;
    return image.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y), c);
  };
  for (std::size_t y = 0; y < image.height; ++y) {
    for (std::size_t x = 0; x < image.width; ++x) {
      const double dx = static_cast<double>(x) - cx;
      const double dy = static_cast<double>(y) - cy;
      // Inverse map of a counter-clockwise (on screen, y down) rotation.
      const double sx = cx + dx * cs - dy * sn;
      const double sy = cy + dx * sn + dy * cs;
      const double fx = std::floor(sx);
      const double fy = std::floor(sy);
      const double ax = sx - fx;
      const double ay = sy - fy;
      const auto x0 = static_cast<long>(fx);
      const auto y0 = static_cast<long>(fy);
      for (std::size_t c = 0; c < 3; ++c) {
        const double v = (1.0 - ay) * ((1.0 - ax) * sample(x0, y0, c) + ax * sample(x0 + 1, y0, c)) +
                         ay * ((1.0 - ax) * sample(x0, y0 + 1, c) + ax * sample(x0 + 1, y0 + 1, c));
        out.at(x, y, c) = quantize(v / 255.0);
      }
    }
  }
  return out;
}

ImageBuf brightness(const ImageBuf& image, double factor) {
  AugmentOp::brightness(factor).validate();
  ImageBuf out(image.width, image.height);
  for (std::size_t i = 0; i < image.pixels.size(); ++i) {
    out.pixels[i] = quantize(image.pixels[i] / 255.0 * factor);
  }
  return out;
}

std::vector<double> gaussian_kernel(int radius, double sigma) {
  if (radius < 1) throw ConfigError("blur radius must be >= 1");
  if (sigma <= 0.0) sigma = radius / 2.0;
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double v = std::exp(-0.5 * (i * i) / (sigma * sigma));
    k[static_cast<std::size_t>(i + radius)] = v;
    sum += v;
  }
  for (auto& v : k) v /= sum;
  return k;
}

ImageBuf gaussian_blur(const ImageBuf& image, int radius, double sigma) {
  const std::vector<double> k = gaussian_kernel(radius, sigma);
  const auto w = static_cast<long>(image.width);
  const auto h = static_cast<long>(image.height);
  std::vector<double> tmp(image.pixels.size());
  for (long y = 0; y < h; ++y) {
    for (long x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          const long sx = std::clamp(x + i, 0L, w - 1);
          acc += k[static_cast<std::size_t>(i + radius)] *
                 image.at(static_cast<std::size_t>(sx), static_cast<std::size_t>(y), c);
        }
        tmp[(static_cast<std::size_t>(y * w + x)) * 3 + c] = acc;
      }
    }
  }
  ImageBuf out(image.width, image.height);
  for (long y = 0; y < h; ++y) {
    for (long x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          const long sy = std::clamp(y + i, 0L, h - 1);
          acc += k[static_cast<std::size_t>(i + radius)] * tmp[static_cast<std::size_t>(sy * w + x) * 3 + c];
        }
        out.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y), c) = quantize(acc / 255.0);
      }
    }
  }
  return out;
}

ImageBuf apply(const ImageBuf& image, const AugmentOp& op) {
  op.validate();
  switch (op.kind) {
    case AugmentKind::hflip:
      return hflip(image);
    case AugmentKind::rotate:
      return rotate(image, op.value);
    case AugmentKind::brightness:
      return brightness(image, op.value);
    case AugmentKind::blur:
      return gaussian_blur(image, static_cast<int>(op.value), op.sigma);
  }
  return image;
}

ImageBuf apply(const ImageBuf& image, std::span<const AugmentOp> chain) {
  ImageBuf out = image;
  for (const auto& op : chain) out = apply(out, op);
  return out;
}

// ---------------------------------------------------------------- recipe

std::string RecipeEntry::label() const {
  std::string out;
  for (std::size_t i = 0; i < chain.size(); ++i) {
    if (i) out += '+';
    out += chain[i].label();
  }
  return out;
}

Recipe Recipe::default_recipe() {
  constexpr double p = 0.653;
  Recipe r;
  r.entries = {
      {{AugmentOp::hflip()}, 1.0},
      {{AugmentOp::rotate(45)}, p},
      {{AugmentOp::rotate(-45)}, p},
      {{AugmentOp::rotate(20)}, p},
      {{AugmentOp::rotate(-20)}, p},
      {{AugmentOp::brightness(1.38)}, p},
      {{AugmentOp::brightness(1.20)}, p},
      {{AugmentOp::blur(3)}, p},
  };
  return r;
}

Recipe Recipe::parse(std::string_view text) {
  Recipe r;
  text = trim(text);
  if (text.empty()) return r;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t comma = text.find(',', start);
    std::string_view item = trim(text.substr(start, comma == std::string_view::npos ? text.npos : comma - start));
    if (item.empty()) throw ConfigError("empty augmentation entry; valid ops: " + std::string(kValidOps));
    RecipeEntry entry;
    const std::size_t at = item.find('@');
    if (at != std::string_view::npos) {
      entry.probability = parse_number(item.substr(at + 1), item);
      item = item.substr(0, at);
    }
    std::size_t op_start = 0;
    while (true) {
      const std::size_t plus = item.find('+', op_start);
      entry.chain.push_back(
          AugmentOp::parse(item.substr(op_start, plus == std::string_view::npos ? item.npos : plus - op_start)));
      if (plus == std::string_view::npos) break;
      op_start = plus + 1;
    }
    r.entries.push_back(std::move(entry));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  r.validate();
  return r;
}

void Recipe::validate() const {
  for (const auto& e : entries) {
    if (e.chain.empty()) throw ConfigError("recipe entry with no ops");
    if (!(e.probability > 0.0 && e.probability <= 1.0)) throw ConfigError("recipe probability must be in (0, 1]");
    for (const auto& op : e.chain) op.validate();
  }
}

double Recipe::expected_outputs_per_input() const {
  double n = 1.0;
  for (const auto& e : entries) n += e.probability;
  return n;
}

std::vector<std::size_t> plan_variants(const Recipe& recipe, std::uint64_t seed, std::size_t sample_index) {
  Rng rng(derive_seed(seed, sample_index));
  std::vector<std::size_t> picked;
  for (std::size_t k = 0; k < recipe.entries.size(); ++k) {
    if (rng.uniform() < recipe.entries[k].probability) picked.push_back(k);
  }
  return picked;
}

// --------------------------------------------------------------- dataset

namespace {

std::string sanitize(std::string s) {
  for (auto& c : s) {
    if (c == ',' || c == '\n' || c == '\r' || c == '"') c = ' ';
  }
  return s;
}

}  // namespace

std::vector<AugmentRow> build_augmented_dataset(std::span<const AugmentSource> sources, const Recipe& recipe,
                                                std::uint64_t seed, const AugmentOptions& options) {
  recipe.validate();
  if (sources.empty()) throw DataError("augmentation needs at least one source image");
  const std::filesystem::path image_dir = options.out_dir / "images";
  if (!recipe.entries.empty()) std::filesystem::create_directories(image_dir);

  std::vector<AugmentRow> rows;
  for (std::size_t i = 0; i < sources.size(); ++i) {
    const AugmentSource& src = sources[i];
    const std::uint64_t sample_seed = derive_seed(seed, i);
    ImageBuf image;
    try {
      image = read_image(src.path);
      if (options.resize) image = resize_bilinear(image, options.resize, options.resize);
    } catch (const DataError& e) {
      rows.push_back({"", src.path, src.label, "error:" + sanitize(e.what()), sample_seed});
      continue;
    }
    rows.push_back({src.path, src.path, src.label, "original", sample_seed});
    const std::string stem = std::filesystem::path(src.path).stem().string();
    for (const std::size_t k : plan_variants(recipe, seed, i)) {
      const RecipeEntry& entry = recipe.entries[k];
      char prefix[32];
      std::snprintf(prefix, sizeof prefix, "%06zu_", i);
      const std::filesystem::path out = image_dir / (prefix + stem + "_v" + std::to_string(k) + ".png");
      write_png(exnet::apply(image, std::span<const AugmentOp>(entry.chain)), out);
      rows.push_back({out.generic_string(), src.path, src.label, entry.label(), sample_seed});
    }
  }
  return rows;
}

void write_augment_manifest(std::ostream& os, std::span<const AugmentRow> rows) {
  os << "out_path,src_path,label,ops,seed\n";
  for (const auto& r : rows) {
    write_csv_row(os, {r.out_path, r.src_path, std::to_string(r.label), r.ops, std::to_string(r.seed)});
  }
}

std::vector<AugmentRow> read_augment_manifest(std::istream& is) {
  const CsvTable table = read_csv(is);
  const std::size_t out_col = table.require_column("out_path");
  const std::size_t src_col = table.require_column("src_path");
  const std::size_t label_col = table.require_column("label");
  const std::size_t ops_col = table.require_column("ops");
  const std::size_t seed_col = table.require_column("seed");
  std::vector<AugmentRow> rows;
  for (const auto& row : table.rows) {
    AugmentRow r;
    r.out_path = row.fields[out_col];
    r.src_path = row.fields[src_col];
    r.ops = row.fields[ops_col];
    const std::string& label = row.fields[label_col];
    const std::string& seed = row.fields[seed_col];
    if (label != "0" && label != "1") {
      throw FormatError("augment manifest line " + std::to_string(row.line) + ": label must be 0 or 1");
    }
    r.label = label == "1";
    const auto [ptr, ec] = std::from_chars(seed.data(), seed.data() + seed.size(), r.seed);
    if (ec != std::errc{} || ptr != seed.data() + seed.size()) {
      throw FormatError("augment manifest line " + std::to_string(row.line) + ": bad seed");
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace exnet
