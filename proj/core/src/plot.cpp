#include "exnet/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>

namespace exnet {

namespace {

struct Glyph {
  char c;
  std::uint8_t rows[5];  // three low bits per row, MSB leftmost
};

constexpr Glyph kFont[] = {
    {'0', {7, 5, 5, 5, 7}}, {'1', {2, 6, 2, 2, 7}}, {'2', {7, 1, 7, 4, 7}}, {'3', {7, 1, 7, 1, 7}},
    {'4', {5, 5, 7, 1, 1}}, {'5', {7, 4, 7, 1, 7}}, {'6', {7, 4, 7, 5, 7}}, {'7', {7, 1, 1, 1, 1}},
    {'8', {7, 5, 7, 5, 7}}, {'9', {7, 5, 7, 1, 7}}, {'.', {0, 0, 0, 0, 2}}, {'%', {5, 1, 2, 4, 5}},
    {'-', {0, 0, 7, 0, 0}}, {'A', {2, 5, 7, 5, 5}}, {'C', {7, 4, 4, 4, 7}}, {'D', {6, 5, 5, 5, 6}},
    {'E', {7, 4, 6, 4, 7}}, {'F', {7, 4, 6, 4, 4}}, {'H', {5, 5, 7, 5, 5}}, {'I', {7, 2, 2, 2, 7}},
    {'L', {4, 4, 4, 4, 7}}, {'M', {5, 7, 7, 5, 5}}, {'N', {5, 7, 7, 7, 5}}, {'O', {7, 5, 5, 5, 7}},
    {'P', {6, 5, 6, 4, 4}}, {'R', {6, 5, 6, 5, 5}}, {'S', {7, 4, 7, 1, 7}}, {'T', {7, 2, 2, 2, 2}},
    {'U', {5, 5, 5, 5, 7}}, {'V', {5, 5, 5, 5, 2}}, {'X', {5, 5, 2, 5, 5}},
};

const Glyph* find_glyph(char c) {
  for (const auto& g : kFont) {
    if (g.c == c) return &g;
  }
  return nullptr;
}

void put(ImageBuf& img, long x, long y, const std::uint8_t rgb[3]) {
  if (x < 0 || y < 0 || x >= static_cast<long>(img.width) || y >= static_cast<long>(img.height)) return;
  for (std::size_t c = 0; c < 3; ++c) img.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y), c) = rgb[c];
}

void fill_rect(ImageBuf& img, long x0, long y0, long x1, long y1, const std::uint8_t rgb[3]) {
  for (long y = y0; y < y1; ++y) {
    for (long x = x0; x < x1; ++x) put(img, x, y, rgb);
  }
}

void line(ImageBuf& img, long x0, long y0, long x1, long y1, const std::uint8_t rgb[3], int thickness) {
  const long dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
  const long sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
  long err = dx + dy;
  while (true) {
    for (int t = 0; t < thickness; ++t) {
      for (int u = 0; u < thickness; ++u) put(img, x0 + t, y0 + u, rgb);
    }
    if (x0 == x1 && y0 == y1) break;
    const long e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

constexpr std::uint8_t kBlack[3] = {0, 0, 0};
constexpr std::uint8_t kWhite[3] = {255, 255, 255};
constexpr std::uint8_t kGrid[3] = {220, 220, 220};
constexpr std::uint8_t kTrain[3] = {31, 119, 180};
constexpr std::uint8_t kVal[3] = {255, 127, 14};

}  // namespace

void draw_text(ImageBuf& img, std::size_t x, std::size_t y, std::string_view text, std::size_t scale,
               const std::uint8_t rgb[3]) {
  const long s = static_cast<long>(scale);
  long cx = static_cast<long>(x);
  for (const char ch : text) {
    if (const Glyph* g = find_glyph(ch)) {
      for (long r = 0; r < 5; ++r) {
        for (long c = 0; c < 3; ++c) {
          if (g->rows[r] & (4 >> c)) fill_rect(img, cx + c * s, static_cast<long>(y) + r * s, cx + (c + 1) * s,
                                               static_cast<long>(y) + (r + 1) * s, rgb);
        }
      }
    }
    cx += 4 * s;
  }
}

ImageBuf render_accuracy_curve(std::span<const EpochLog> logs) {
  constexpr long W = 640, H = 400, left = 60, right = 20, top = 40, bottom = 40;
  ImageBuf img(W, H, 255);
  const long pw = W - left - right, ph = H - top - bottom;
  for (int k = 0; k <= 4; ++k) {
    const long y = top + ph - ph * k / 4;
    line(img, left, y, left + pw, y, kGrid, 1);
    char label[8];
    std::snprintf(label, sizeof label, "%.2f", k / 4.0);
    draw_text(img, 8, static_cast<std::size_t>(y - 5), label, 2, kBlack);
  }
  line(img, left, top, left, top + ph, kBlack, 1);
  line(img, left, top + ph, left + pw, top + ph, kBlack, 1);
  draw_text(img, left, 10, "TRAIN", 2, kTrain);
  draw_text(img, left + 60, 10, "VAL", 2, kVal);
  if (!logs.empty()) {
    const std::string last = std::to_string(logs.back().epoch);
    draw_text(img, static_cast<std::size_t>(left + pw - 8 * static_cast<long>(last.size())), H - 28, last, 2, kBlack);
    draw_text(img, left, H - 28, "1", 2, kBlack);
  }
  const auto px = [&](std::size_t i) {
    return logs.size() < 2 ? left : left + static_cast<long>(i) * pw / static_cast<long>(logs.size() - 1);
  };
  const auto py = [&](double a) { return top + ph - static_cast<long>(std::lround(std::clamp(a, 0.0, 1.0) * ph)); };
  for (std::size_t i = 0; i < logs.size(); ++i) {
    const std::size_t j = i + 1 < logs.size() ? i + 1 : i;
    line(img, px(i), py(logs[i].train_accuracy), px(j), py(logs[j].train_accuracy), kTrain, 2);
    line(img, px(i), py(logs[i].validation.accuracy), px(j), py(logs[j].validation.accuracy), kVal, 2);
  }
  return img;
}

ImageBuf render_confusion_matrix(const ConfusionMatrix& cm) {
  constexpr long cell = 140, left = 70, top = 70;
  ImageBuf img(left + 2 * cell + 20, top + 2 * cell + 20, 255);
  const std::size_t counts[2][2] = {{cm.tp, cm.fn}, {cm.fp, cm.tn}};
  const char* tags[2][2] = {{"TP", "FN"}, {"FP", "TN"}};
  const std::size_t peak = std::max({cm.tp, cm.fn, cm.fp, cm.tn, std::size_t{1}});
  draw_text(img, left, 10, "PREDICTED", 2, kBlack);
  draw_text(img, left + 10, 40, "EXUDATE", 2, kBlack);
  draw_text(img, left + cell + 10, 40, "NORMAL", 2, kBlack);
  draw_text(img, 8, top + 60, "EXU", 2, kBlack);
  draw_text(img, 8, top + cell + 60, "NOR", 2, kBlack);
  for (int r = 0; r < 2; ++r) {
    for (int c = 0; c < 2; ++c) {
      const double t = static_cast<double>(counts[r][c]) / static_cast<double>(peak);
      const std::uint8_t shade[3] = {static_cast<std::uint8_t>(std::lround(255 - 200 * t)),
                                     static_cast<std::uint8_t>(std::lround(255 - 150 * t)), 255};
      const long x0 = left + c * cell, y0 = top + r * cell;
      fill_rect(img, x0, y0, x0 + cell, y0 + cell, shade);
      line(img, x0, y0, x0 + cell, y0, kBlack, 1);
      line(img, x0, y0, x0, y0 + cell, kBlack, 1);
      const std::uint8_t* ink = t > 0.6 ? kWhite : kBlack;
      draw_text(img, static_cast<std::size_t>(x0 + 8), static_cast<std::size_t>(y0 + 8), tags[r][c], 2, ink);
      const std::string n = std::to_string(counts[r][c]);
      draw_text(img, static_cast<std::size_t>(x0 + cell / 2 - 8 * static_cast<long>(n.size())),
                static_cast<std::size_t>(y0 + cell / 2 - 10), n, 4, ink);
    }
  }
  line(img, left + 2 * cell, top, left + 2 * cell, top + 2 * cell, kBlack, 1);
  line(img, left, top + 2 * cell, left + 2 * cell, top + 2 * cell, kBlack, 1);
  return img;
}

}  // namespace exnet
