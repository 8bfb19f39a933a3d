#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "exnet/image.hpp"
#include "exnet/tensor.hpp"

namespace exnet {

enum class Label : int { normal = 0, exudate = 1 };

/// DR grade 0 is Normal; grades 1-4 are Exudate. Throws DataError otherwise.
Label binarize_grade(int grade);

/// A labelled image reference, before decoding.
struct SampleRef {
  std::string path;
  int label = 0;
};

/// Decoded sample, resized to the network input and kept as 8-bit pixels
/// (scaled to [0,1] when batched).
struct LabeledImage {
  std::string path;
  ImageBuf image;
  int label = 0;
};

struct ItemError {
  std::string path;
  std::string message;
};

struct LoadResult {
  std::vector<LabeledImage> items;
  std::vector<ItemError> errors;
};

/// Reads a labels CSV with header `image,grade` (grades 0-4, binarized) or
/// `image,label` (0/1). An augmented manifest is accepted too, its
/// `out_path` column standing in for `image`, which allows splitting after
/// augmentation. Image names are resolved against `image_root`; a
/// name without extension is tried with .png, .jpeg and .jpg. Throws
/// FormatError with the line number for malformed rows.
std::vector<SampleRef> read_labels_csv(const std::filesystem::path& labels_csv,
                                       const std::filesystem::path& image_root);

/// Decodes and bilinearly resizes every sample. Unreadable files are
/// reported in `errors` (naming the path) and skipped.
LoadResult load_images(std::span<const SampleRef> refs, std::size_t width = 224, std::size_t height = 224);

/// read_labels_csv + load_images.
LoadResult load_dataset(const std::filesystem::path& labels_csv, const std::filesystem::path& image_root,
                        std::size_t width = 224, std::size_t height = 224);

struct SplitFractions {
  double train = 0.7;
  double validation = 0.2;
  double test = 0.1;
};

struct SplitOptions {
  SplitFractions fractions;
  /// Per-class allocation; false shuffles and allocates the pooled set.
  bool stratified = true;
  /// Permits zero fractions (and therefore empty splits).
  bool allow_empty = false;
};

enum class SplitName { train, validation, test };
std::string_view split_name(SplitName s);
SplitName parse_split_name(std::string_view s);

/// Index partition of a dataset. The three lists are disjoint, cover every
/// index exactly once, and are each sorted ascending.
struct SplitDataset {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;
  SplitFractions fractions;
  std::uint64_t seed = 0;

  [[nodiscard]] const std::vector<std::size_t>& operator[](SplitName s) const;
};

/// Largest-remainder apportionment of n items over the fractions. Ties in
/// the remainder go to the earlier split.
std::vector<std::size_t> apportion(std::size_t n, const SplitFractions& fractions);

/// Shuffles each class (or the pool, when unstratified) with a seed derived
/// from `seed` and the class, then allocates counts by apportion(). Throws
/// ConfigError for invalid fractions or when a split with a positive
/// fraction would receive no item of some class.
SplitDataset stratified_split(std::span<const int> labels, const SplitOptions& options, std::uint64_t seed);

/// Split manifest: CSV `path,label,split`, rows grouped train, validation,
/// test and in dataset order within each group.
void write_split_manifest(std::ostream& os, std::span<const SampleRef> refs, const SplitDataset& split);

struct SplitManifest {
  std::vector<SampleRef> train;
  std::vector<SampleRef> validation;
  std::vector<SampleRef> test;

  [[nodiscard]] const std::vector<SampleRef>& operator[](SplitName s) const;
};
SplitManifest read_split_manifest(std::istream& is);

/// Per-channel input standardization; empty vectors mean identity.
struct InputNorm {
  std::vector<double> mean;
  std::vector<double> std;
};

/// Per-channel mean and standard deviation of [0,1] pixels over a set.
InputNorm channel_statistics(std::span<const LabeledImage> items);

/// Visiting order for one epoch: a permutation of [0, n) seeded by
/// derive_seed(seed, epoch).
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch);

template <typename T>
struct Batch {
  Tensor<T> images;  // [N, 3, H, W]
  std::vector<int> labels;
  std::vector<std::size_t> indices;  // positions in the source set
};

/// Packs images into [N, 3, H, W], channel planes in RGB order, values
/// pixel / 255 then optional standardization.
template <typename T>
Tensor<T> images_to_tensor(std::span<const LabeledImage* const> images, const InputNorm& norm = {});

/// Sequential batches over a fixed set. With shuffle on, the order is
/// epoch_order(size, seed, epoch); the last batch may be partial.
template <typename T>
class BatchIterator {
 public:
  BatchIterator(std::span<const LabeledImage> items, std::size_t batch_size, std::uint64_t seed, std::size_t epoch,
                bool shuffle = true, InputNorm norm = {});

  /// Fills `out` with the next batch; false once the epoch is exhausted.
  bool next(Batch<T>& out);

  [[nodiscard]] std::size_t batch_count() const noexcept;
  [[nodiscard]] const std::vector<std::size_t>& order() const noexcept { return order_; }

 private:
  std::span<const LabeledImage> items_;
  std::size_t batch_size_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  InputNorm norm_;
};

}  // namespace exnet
