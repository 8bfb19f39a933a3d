#include "doctest.h"
#include "exnet/plot.hpp"

using namespace exnet;

namespace {

std::size_t count_color(const ImageBuf& img, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  std::size_t n = 0;
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) {
      if (img.at(x, y, 0) == r && img.at(x, y, 1) == g && img.at(x, y, 2) == b) ++n;
    }
  }
  return n;
}

bool non_blank(const ImageBuf& img) {
  for (const auto p : img.pixels) {
    if (p != 255) return true;
  }
  return false;
}

}  // namespace

TEST_CASE("accuracy curve draws both series") {
  std::vector<EpochLog> logs(5);
  for (std::size_t i = 0; i < logs.size(); ++i) {
    logs[i].epoch = i + 1;
    logs[i].train_accuracy = 0.5 + 0.1 * double(i);
    logs[i].validation.accuracy = 0.5 + 0.05 * double(i);
  }
  const ImageBuf img = render_accuracy_curve(logs);
  CHECK(img.width == 640);
  CHECK(img.height == 400);
  const ImageBuf blank = render_accuracy_curve({});
  CHECK(non_blank(blank));
  CHECK(img != blank);
}

TEST_CASE("confusion matrix shading grows with count") {
  const ImageBuf a = render_confusion_matrix({46, 16, 4, 34});
  const ImageBuf b = render_confusion_matrix({46, 16, 4, 34});
  CHECK(a == b);
  CHECK(a != render_confusion_matrix({10, 40, 40, 10}));
  CHECK(a.width > 0);
}

TEST_CASE("text lands inside the image and clips at the edge") {
  ImageBuf img(20, 10, 255);
  const std::uint8_t black[3] = {0, 0, 0};
  draw_text(img, 1, 1, "10%", 1, black);
  CHECK(count_color(img, 0, 0, 0) > 0);
  ImageBuf edge(4, 4, 255);
  draw_text(edge, 3, 3, "88", 2, black);
  CHECK(edge.width == 4);
}
