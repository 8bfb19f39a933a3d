#include <fstream>

#include "doctest.h"
#include "exnet/error.hpp"
#include "exnet/image.hpp"
#include "synthetic.hpp"

using namespace exnet;

TEST_CASE("quantize rounds and clamps") {
  CHECK(quantize(0.0) == 0);
  CHECK(quantize(1.0) == 255);
  CHECK(quantize(-0.3) == 0);
  CHECK(quantize(1.7) == 255);
  CHECK(quantize(0.5) == 128);
  for (int v = 0; v < 256; ++v) CHECK(quantize(v / 255.0) == v);
}

TEST_CASE("PNG write/read is lossless") {
  const auto dir = testsupport::fresh_dir("image_png");
  const ImageBuf img = testsupport::fundus_image(3, 64);
  write_png(img, dir / "a.png");
  CHECK(read_image(dir / "a.png") == img);
}

TEST_CASE("unreadable files raise data errors naming the path") {
  const auto dir = testsupport::fresh_dir("image_bad");
  std::ofstream(dir / "junk.png") << "not an image";
  try {
    read_image(dir / "junk.png");
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("junk.png") != std::string::npos);
  }
  CHECK_THROWS_AS(read_image(dir / "missing.png"), DataError);
  // A JPEG header followed by garbage.
  std::ofstream(dir / "trunc.jpg", std::ios::binary) << "\xFF\xD8\xFF\xE0garbage";
  CHECK_THROWS_AS(read_image(dir / "trunc.jpg"), DataError);
}

TEST_CASE("bilinear resize") {
  ImageBuf flat(10, 7, 77);
  const ImageBuf r = resize_bilinear(flat, 23, 5);
  CHECK(r.width == 23);
  CHECK(r.height == 5);
  for (const auto p : r.pixels) CHECK(p == 77);
  const ImageBuf img = testsupport::fundus_image(1, 32);
  CHECK(resize_bilinear(img, 32, 32) == img);

  // 2x1 -> 4x1 with half-pixel centres: 0, 64, 191, 255 (rounded).
  ImageBuf ramp(2, 1);
  for (std::size_t c = 0; c < 3; ++c) ramp.at(1, 0, c) = 255;
  const ImageBuf up = resize_bilinear(ramp, 4, 1);
  CHECK(up.at(0, 0, 0) == 0);
  CHECK(up.at(1, 0, 0) == 64);
  CHECK(up.at(2, 0, 0) == 191);
  CHECK(up.at(3, 0, 0) == 255);
}
