#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "exnet/image.hpp"

namespace exnet {

enum class AugmentKind { hflip, rotate, brightness, blur };

/// One label-preserving image transform.
///
///   hflip                 mirror across the vertical axis
///   rotate:<deg>          counter-clockwise about the centre, degrees in (-180, 180]
///   brightness:<factor>   multiply intensities, factor > 0
///   blur:<radius>[:sigma] separable Gaussian, window 2*radius+1, sigma defaults to radius/2
struct AugmentOp {
  AugmentKind kind = AugmentKind::hflip;
  double value = 0.0;
  double sigma = 0.0;

  static AugmentOp hflip() { return {AugmentKind::hflip, 0.0, 0.0}; }
  static AugmentOp rotate(double degrees) { return {AugmentKind::rotate, degrees, 0.0}; }
  static AugmentOp brightness(double factor) { return {AugmentKind::brightness, factor, 0.0}; }
  static AugmentOp blur(int radius, double sigma = 0.0) { return {AugmentKind::blur, static_cast<double>(radius), sigma}; }

  /// Throws ConfigError when parameters are out of range.
  void validate() const;

  /// Text form used in manifests and on the command line, e.g. "rotate:45".
  [[nodiscard]] std::string label() const;

  /// Inverse of label(). Throws ConfigError listing the valid ops.
  static AugmentOp parse(std::string_view text);

  friend bool operator==(const AugmentOp&, const AugmentOp&) = default;
};

inline constexpr std::string_view kValidOps = "hflip, rotate:<deg>, brightness:<factor>, blur:<radius>[:<sigma>]";

ImageBuf hflip(const ImageBuf& image);

/// Bilinear sampling, out-of-bounds treated as black.
ImageBuf rotate(const ImageBuf& image, double degrees);

/// Scales each intensity in [0,1] space and clamps.
ImageBuf brightness(const ImageBuf& image, double factor);

/// Edge-replicated separable Gaussian. sigma <= 0 selects radius / 2.
ImageBuf gaussian_blur(const ImageBuf& image, int radius, double sigma = 0.0);

/// Normalized 1-D Gaussian taps, length 2*radius+1.
std::vector<double> gaussian_kernel(int radius, double sigma);

ImageBuf apply(const ImageBuf& image, const AugmentOp& op);
ImageBuf apply(const ImageBuf& image, std::span<const AugmentOp> chain);

/// A chain of ops emitted as one variant with the given probability
/// (1.0 = always).
struct RecipeEntry {
  std::vector<AugmentOp> chain;
  double probability = 1.0;

  [[nodiscard]] std::string label() const;
};

/// Ordered augmentation plan. Whether entry k is emitted for sample i is
/// decided by the k-th uniform draw of an Rng seeded with
/// derive_seed(global seed, i), so the plan is a pure function of
/// (seed, sample index).
struct Recipe {
  std::vector<RecipeEntry> entries;

  /// hflip always, then rotate +/-45, rotate +/-20, brightness 1.38 and 1.20,
  /// blur radius 3 each with probability 0.653, giving about 6.57 outputs per
  /// source including the original.
  static Recipe default_recipe();

  /// Comma-separated entries, each "op[+op...][@probability]", e.g.
  /// "hflip,rotate:45@0.5,hflip+blur:3". Throws ConfigError.
  static Recipe parse(std::string_view text);

  [[nodiscard]] double expected_outputs_per_input() const;

  void validate() const;
};

/// Entry indices of `recipe` selected for one source sample.
std::vector<std::size_t> plan_variants(const Recipe& recipe, std::uint64_t seed, std::size_t sample_index);

struct AugmentSource {
  std::string path;
  int label = 0;
};

/// One output of the augmented set. Originals carry ops == "original" and
/// point at their source file; failed sources carry an empty out_path and
/// ops == "error:<message>".
struct AugmentRow {
  std::string out_path;
  std::string src_path;
  int label = 0;
  std::string ops;
  std::uint64_t seed = 0;

  [[nodiscard]] bool failed() const { return out_path.empty(); }
};

struct AugmentOptions {
  std::filesystem::path out_dir;
  /// When non-zero, sources are resized to resize x resize before transforms.
  std::size_t resize = 0;
};

/// Emits each source followed by its planned variants, in source order.
/// Unreadable sources are recorded as error rows and skipped.
std::vector<AugmentRow> build_augmented_dataset(std::span<const AugmentSource> sources, const Recipe& recipe,
                                                std::uint64_t seed, const AugmentOptions& options);

/// CSV with header `out_path,src_path,label,ops,seed`.
void write_augment_manifest(std::ostream& os, std::span<const AugmentRow> rows);
std::vector<AugmentRow> read_augment_manifest(std::istream& is);

}  // namespace exnet
