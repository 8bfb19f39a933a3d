#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "exnet/dataio.hpp"
#include "exnet/image.hpp"

namespace exnet::testsupport {

/// Black field with faint noise. Exudate images carry 3-6 bright yellow
/// blobs; normal images carry 0-3 dark red spots.
ImageBuf blob_image(bool exudate, std::uint64_t seed, std::size_t size = 224);

/// Smooth fundus-like photograph: orange-red disc with radial shading, a
/// pale optic disc and darker vessels on a black surround.
ImageBuf fundus_image(std::uint64_t seed, std::size_t size = 224);

/// Balanced in-memory blob set, labels alternating normal/exudate.
std::vector<LabeledImage> blob_items(std::size_t per_class, std::uint64_t seed, std::size_t size = 224);

struct SyntheticDataset {
  std::filesystem::path root;        // directory of PNGs
  std::filesystem::path labels_csv;  // image,label
  std::vector<SampleRef> refs;
};

/// Writes blob_items() as PNG files plus an `image,label` CSV.
SyntheticDataset write_blob_dataset(const std::filesystem::path& dir, std::size_t per_class, std::uint64_t seed,
                                    std::size_t size = 224);

/// Fresh empty directory under the system temp path.
std::filesystem::path fresh_dir(const std::string& name);

std::string read_file(const std::filesystem::path& path);

}  // namespace exnet::testsupport
