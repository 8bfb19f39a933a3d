#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "doctest.h"
#include "exnet/dataio.hpp"
#include "exnet/error.hpp"
#include "synthetic.hpp"

using namespace exnet;

namespace {

std::vector<int> balanced_labels(std::size_t per_class) {
  std::vector<int> y;
  for (std::size_t i = 0; i < per_class; ++i) {
    y.push_back(0);
    y.push_back(1);
  }
  return y;
}

std::size_t count_label(const std::vector<std::size_t>& idx, const std::vector<int>& y, int label) {
  return static_cast<std::size_t>(std::count_if(idx.begin(), idx.end(), [&](std::size_t i) { return y[i] == label; }));
}

}  // namespace

TEST_CASE("grade binarization") {
  CHECK(binarize_grade(0) == Label::normal);
  for (int g = 1; g <= 4; ++g) CHECK(binarize_grade(g) == Label::exudate);
  CHECK_THROWS_AS(binarize_grade(5), DataError);
  CHECK_THROWS_AS(binarize_grade(-1), DataError);
}

TEST_CASE("largest-remainder apportionment") {
  CHECK(apportion(250, {}) == std::vector<std::size_t>{175, 50, 25});
  CHECK(apportion(500, {}) == std::vector<std::size_t>{350, 100, 50});
  CHECK(apportion(80, {}) == std::vector<std::size_t>{56, 16, 8});
  // 10 * (0.7, 0.2, 0.1) is exact; 11 gives 7.7, 2.2, 1.1 -> remainders .7, .2, .1.
  CHECK(apportion(11, {}) == std::vector<std::size_t>{8, 2, 1});
  // Equal remainders go to the earlier split.
  CHECK(apportion(1, {1.0 / 3, 1.0 / 3, 1.0 / 3}) == std::vector<std::size_t>{1, 0, 0});
  for (std::size_t n = 0; n < 300; ++n) {
    const auto c = apportion(n, {});
    CHECK(c[0] + c[1] + c[2] == n);
  }
}

TEST_CASE("stratified split of 250/250 is 175/50/25 per class") {
  const auto y = balanced_labels(250);
  const SplitDataset s = stratified_split(y, {}, 42);
  for (const int label : {0, 1}) {
    CHECK(count_label(s.train, y, label) == 175);
    CHECK(count_label(s.validation, y, label) == 50);
    CHECK(count_label(s.test, y, label) == 25);
  }
}

TEST_CASE("split lists are sorted, disjoint and covering") {
  std::vector<int> y;
  for (int i = 0; i < 97; ++i) y.push_back(i % 3 == 0 ? 1 : 0);
  for (const bool strat : {true, false}) {
    SplitOptions opt;
    opt.stratified = strat;
    const SplitDataset s = stratified_split(y, opt, 7);
    std::set<std::size_t> all;
    for (const auto* part : {&s.train, &s.validation, &s.test}) {
      CHECK(std::is_sorted(part->begin(), part->end()));
      all.insert(part->begin(), part->end());
    }
    CHECK(all.size() == y.size());
    CHECK(s.train.size() + s.validation.size() + s.test.size() == y.size());
  }
}

TEST_CASE("split is seed-determined") {
  const auto y = balanced_labels(40);
  const auto a = stratified_split(y, {}, 1);
  const auto b = stratified_split(y, {}, 1);
  const auto c = stratified_split(y, {}, 2);
  CHECK(a.train == b.train);
  CHECK(a.test == b.test);
  CHECK(a.train != c.train);
}

TEST_CASE("split configuration errors") {
  const auto y = balanced_labels(10);
  SplitOptions bad;
  bad.fractions = {0.5, 0.2, 0.2};
  CHECK_THROWS_AS(stratified_split(y, bad, 0), ConfigError);
  bad.fractions = {0.8, 0.2, 0.0};
  CHECK_THROWS_AS(stratified_split(y, bad, 0), ConfigError);
  bad.allow_empty = true;
  const auto s = stratified_split(y, bad, 0);
  CHECK(s.test.empty());
  // Two samples of a class cannot fill three non-empty splits.
  const std::vector<int> tiny = {0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 1};
  CHECK_THROWS_AS(stratified_split(tiny, {}, 0), ConfigError);
}

TEST_CASE("split manifest round trip") {
  std::vector<SampleRef> refs;
  for (int i = 0; i < 20; ++i) refs.push_back({"img/" + std::to_string(i) + ".png", i % 2});
  std::vector<int> y;
  for (const auto& r : refs) y.push_back(r.label);
  const auto split = stratified_split(y, {}, 3);
  std::stringstream ss;
  write_split_manifest(ss, refs, split);
  CHECK(ss.str().rfind("path,label,split\n", 0) == 0);
  const SplitManifest m = read_split_manifest(ss);
  CHECK(m.train.size() == split.train.size());
  CHECK(m.validation.size() == split.validation.size());
  CHECK(m.test.size() == split.test.size());
  CHECK(m.train.front().path == refs[split.train.front()].path);

  std::istringstream bad("path,label,split\na.png,1,holdout\n");
  CHECK_THROWS_AS(read_split_manifest(bad), FormatError);
}

TEST_CASE("labels CSV with grades and extension probing") {
  const auto dir = testsupport::fresh_dir("dataio_labels");
  write_png(ImageBuf(4, 4, 10), dir / "a.png");
  write_png(ImageBuf(4, 4, 20), dir / "b.png");
  std::ofstream(dir / "labels.csv") << "image,grade\na,0\nb.png,3\n";
  const auto refs = read_labels_csv(dir / "labels.csv", dir);
  REQUIRE(refs.size() == 2);
  CHECK(refs[0].path == (dir / "a.png").generic_string());
  CHECK(refs[0].label == 0);
  CHECK(refs[1].label == 1);

  std::ofstream(dir / "bad.csv") << "image,grade\na,0\nb,7\n";
  try {
    read_labels_csv(dir / "bad.csv", dir);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
  std::ofstream(dir / "aug.csv") << "out_path,src_path,label,ops,seed\n" << (dir / "a.png").string() << ",x,1,hflip,3\n";
  const auto aug = read_labels_csv(dir / "aug.csv", "/elsewhere");
  REQUIRE(aug.size() == 1);
  CHECK(aug[0].path == (dir / "a.png").generic_string());
  CHECK(aug[0].label == 1);

  std::ofstream(dir / "nolabel.csv") << "image,foo\na,0\n";
  CHECK_THROWS_AS(read_labels_csv(dir / "nolabel.csv", dir), FormatError);
}

TEST_CASE("loading reports unreadable files and resizes the rest") {
  const auto dir = testsupport::fresh_dir("dataio_load");
  write_png(testsupport::fundus_image(1, 40), dir / "ok.png");
  std::ofstream(dir / "broken.png") << "xx";
  const std::vector<SampleRef> refs = {{(dir / "ok.png").string(), 1}, {(dir / "broken.png").string(), 0}};
  const LoadResult r = load_images(refs, 16, 16);
  REQUIRE(r.items.size() == 1);
  CHECK(r.items[0].image.width == 16);
  REQUIRE(r.errors.size() == 1);
  CHECK(r.errors[0].path.find("broken.png") != std::string::npos);
}

TEST_CASE("batch tensors are CHW and scaled to [0,1]") {
  ImageBuf img(2, 1);
  img.at(0, 0, 0) = 255;
  img.at(1, 0, 2) = 51;
  const LabeledImage item{"x", img, 1};
  const LabeledImage* ptrs[] = {&item};
  const auto t = images_to_tensor<double>(ptrs);
  REQUIRE(t.shape() == Shape{1, 3, 1, 2});
  CHECK(t.at({0, 0, 0, 0}) == 1.0);
  CHECK(t.at({0, 2, 0, 1}) == doctest::Approx(0.2));
  CHECK(t.at({0, 1, 0, 0}) == 0.0);
  const auto n = images_to_tensor<double>(ptrs, InputNorm{{0.5, 0.0, 0.0}, {0.5, 1.0, 1.0}});
  CHECK(n.at({0, 0, 0, 0}) == 1.0);
  CHECK(n.at({0, 0, 0, 1}) == -1.0);
}

TEST_CASE("batch iterator covers every item once per epoch") {
  const auto items = testsupport::blob_items(5, 1, 8);
  BatchIterator<float> it(items, 4, 9, 1);
  CHECK(it.batch_count() == 3);
  Batch<float> b;
  std::vector<std::size_t> seen;
  std::vector<std::size_t> sizes;
  while (it.next(b)) {
    sizes.push_back(b.labels.size());
    for (std::size_t k = 0; k < b.indices.size(); ++k) {
      CHECK(b.labels[k] == items[b.indices[k]].label);
      seen.push_back(b.indices[k]);
    }
  }
  CHECK(sizes == std::vector<std::size_t>{4, 4, 2});
  std::sort(seen.begin(), seen.end());
  for (std::size_t i = 0; i < 10; ++i) CHECK(seen[i] == i);

  CHECK(epoch_order(10, 9, 1) == BatchIterator<float>(items, 4, 9, 1).order());
  CHECK(epoch_order(10, 9, 1) != epoch_order(10, 9, 2));
  BatchIterator<float> fixed(items, 4, 9, 1, false);
  CHECK(fixed.order().front() == 0);
  CHECK_THROWS_AS(BatchIterator<float>(items, 0, 0, 0), ConfigError);
}

TEST_CASE("channel statistics") {
  ImageBuf a(1, 1), b(1, 1);
  a.at(0, 0, 0) = 0;
  b.at(0, 0, 0) = 255;
  const std::vector<LabeledImage> items = {{"a", a, 0}, {"b", b, 1}};
  const InputNorm n = channel_statistics(items);
  CHECK(n.mean[0] == doctest::Approx(0.5));
  CHECK(n.std[0] == doctest::Approx(0.5));
  CHECK(n.std[1] > 0.0);
  CHECK_THROWS_AS(channel_statistics({}), DataError);
}
