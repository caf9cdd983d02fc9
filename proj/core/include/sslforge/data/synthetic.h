#ifndef SSLFORGE_DATA_SYNTHETIC_H_
#define SSLFORGE_DATA_SYNTHETIC_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "sslforge/data/image.h"

namespace sslforge {

struct LabeledImages {
  std::vector<Image> images;
  std::vector<std::uint16_t> labels;
  std::size_t num_classes = 0;

  std::size_t size() const { return images.size(); }
};

// Shape families, in label order. A dataset with k classes uses the first k.
inline constexpr const char* kShapeNames[] = {"disk",  "frame",        "triangle",
                                              "cross", "ring",         "square",
                                              "diamond", "saltire"};
inline constexpr std::size_t kMaxSyntheticClasses = 8;

// Procedurally rendered images: one shape (label = shape family) of random
// hue, position and scale over a dark textured background. Label i is
// i mod classes, so class counts differ by at most one. Image i depends only
// on (seed, i).
LabeledImages gen_synthetic_dataset(std::size_t n, std::size_t classes,
                                    std::size_t size, std::uint64_t seed);

// Dataset file: "SSLD" | u64 count | u32 H | u32 W | u32 C | count x u16 labels
// | f32 pixels (per image, channel-major). Little-endian.
void save_dataset(const std::filesystem::path& path, const LabeledImages& data);
LabeledImages load_dataset(const std::filesystem::path& path);

}  // namespace sslforge

#endif  // SSLFORGE_DATA_SYNTHETIC_H_
