#include "synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "exnet/augment.hpp"
#include "exnet/rng.hpp"

namespace exnet::testsupport {

namespace {

void disc(ImageBuf& img, double cx, double cy, double r, const std::uint8_t rgb[3]) {
  const long x0 = std::max(0L, static_cast<long>(cx - r - 1));
  const long x1 = std::min(static_cast<long>(img.width) - 1, static_cast<long>(cx + r + 1));
  const long y0 = std::max(0L, static_cast<long>(cy - r - 1));
  const long y1 = std::min(static_cast<long>(img.height) - 1, static_cast<long>(cy + r + 1));
  for (long y = y0; y <= y1; ++y) {
    for (long x = x0; x <= x1; ++x) {
      const double dx = x - cx, dy = y - cy;
      if (dx * dx + dy * dy <= r * r) {
        for (std::size_t c = 0; c < 3; ++c) img.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y), c) = rgb[c];
      }
    }
  }
}

std::uint8_t clamp8(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

}  // namespace

ImageBuf blob_image(bool exudate, std::uint64_t seed, std::size_t size) {
  Rng rng(seed);
  ImageBuf img(size, size, 0);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.below(9));
  const double scale = static_cast<double>(size) / 224.0;
  const double margin = 20.0 * scale;
  const auto place = [&] { return rng.uniform(margin, static_cast<double>(size) - margin); };
  if (exudate) {
    const int n = 3 + static_cast<int>(rng.below(4));
    for (int i = 0; i < n; ++i) {
      const std::uint8_t yellow[3] = {clamp8(235 + rng.uniform(0, 20)), clamp8(205 + rng.uniform(0, 30)),
                                      clamp8(60 + rng.uniform(0, 40))};
      disc(img, place(), place(), std::max(2.0, rng.uniform(4.0, 10.0) * scale), yellow);
    }
  } else {
    const int n = static_cast<int>(rng.below(4));
    for (int i = 0; i < n; ++i) {
      const std::uint8_t red[3] = {clamp8(100 + rng.uniform(0, 40)), 20, 10};
      disc(img, place(), place(), std::max(2.0, rng.uniform(3.0, 8.0) * scale), red);
    }
  }
  return img;
}

ImageBuf fundus_image(std::uint64_t seed, std::size_t size) {
  Rng rng(seed);
  ImageBuf img(size, size, 0);
  const double c = (static_cast<double>(size) - 1.0) / 2.0;
  const double R = 0.46 * static_cast<double>(size);
  const double tint = rng.uniform(0.85, 1.15);
  const double odx = c + (rng.uniform() < 0.5 ? -1 : 1) * 0.22 * size, ody = c + rng.uniform(-0.05, 0.05) * size;
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      const double dx = x - c, dy = y - c;
      const double r = std::sqrt(dx * dx + dy * dy) / R;
      if (r > 1.0) continue;
      const double shade = 1.0 - 0.45 * r * r;
      const double od = std::exp(-((x - odx) * (x - odx) + (y - ody) * (y - ody)) / (2.0 * std::pow(0.05 * size, 2)));
      img.at(x, y, 0) = clamp8((175 * shade + 70 * od) * tint);
      img.at(x, y, 1) = clamp8((80 * shade + 140 * od) * tint);
      img.at(x, y, 2) = clamp8((35 * shade + 110 * od) * tint);
    }
  }
  const std::uint8_t vessel[3] = {110, 30, 20};
  for (int v = 0; v < 6; ++v) {
    double angle = rng.uniform(0.0, 2.0 * 3.141592653589793);
    double x = odx, y = ody;
    const double width = std::max(1.0, rng.uniform(1.0, 2.5) * size / 224.0);
    for (int step = 0; step < static_cast<int>(size); ++step) {
      angle += rng.uniform(-0.06, 0.06);
      x += std::cos(angle);
      y += std::sin(angle);
      const double dx = x - c, dy = y - c;
      if (dx * dx + dy * dy > R * R * 0.95) break;
      disc(img, x, y, width, vessel);
    }
  }
  return gaussian_blur(img, 2);
}

std::vector<LabeledImage> blob_items(std::size_t per_class, std::uint64_t seed, std::size_t size) {
  std::vector<LabeledImage> out;
  for (std::size_t i = 0; i < 2 * per_class; ++i) {
    const int label = static_cast<int>(i % 2);
    out.push_back({"blob_" + std::to_string(i), blob_image(label == 1, derive_seed(seed, i), size), label});
  }
  return out;
}

SyntheticDataset write_blob_dataset(const std::filesystem::path& dir, std::size_t per_class, std::uint64_t seed,
                                    std::size_t size) {
  SyntheticDataset ds;
  ds.root = dir / "images";
  ds.labels_csv = dir / "labels.csv";
  std::filesystem::create_directories(ds.root);
  std::ofstream csv(ds.labels_csv);
  csv << "image,label\n";
  for (const auto& item : blob_items(per_class, seed, size)) {
    const std::string name = item.path + ".png";
    write_png(item.image, ds.root / name);
    csv << name << ',' << item.label << '\n';
    ds.refs.push_back({(ds.root / name).generic_string(), item.label});
  }
  return ds;
}

std::filesystem::path fresh_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("exnet_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace exnet::testsupport
