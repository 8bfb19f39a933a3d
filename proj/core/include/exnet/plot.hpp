#pragma once

#include <span>
#include <string_view>

#include "exnet/image.hpp"
#include "exnet/metrics.hpp"
#include "exnet/trainer.hpp"

namespace exnet {

/// Train (blue) and validation (orange) accuracy over epochs on a [0,1]
/// axis. Empty logs give a blank chart with axes.
ImageBuf render_accuracy_curve(std::span<const EpochLog> logs);

/// 2x2 grid, rows actual Exudate/Normal, columns predicted Exudate/Normal,
/// shaded by count.
ImageBuf render_confusion_matrix(const ConfusionMatrix& cm);

/// Draws upper-case text with a 3x5 pixel font scaled by `scale`. Glyphs
/// outside digits, '.', '%', '-' and the letters used by the charts are
/// skipped as blanks.
void draw_text(ImageBuf& img, std::size_t x, std::size_t y, std::string_view text, std::size_t scale,
               const std::uint8_t rgb[3]);

}  // namespace exnet
