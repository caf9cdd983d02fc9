#ifndef SSLFORGE_DATA_AUGMENT_H_
#define SSLFORGE_DATA_AUGMENT_H_

#include <cstddef>
#include <cstdint>
#include <variant>
#include <vector>

#include "sslforge/common/rng.h"
#include "sslforge/data/image.h"

namespace sslforge {

struct RandomResizedCrop {
  double probability = 1.0;
  double scale_min = 0.4;  // fraction of source area
  double scale_max = 1.0;
  double ratio_min = 3.0 / 4.0;
  double ratio_max = 4.0 / 3.0;
};

struct HorizontalFlip {
  double probability = 0.5;
};

// Multiplicative brightness, contrast around the mean luma, and saturation as
// a per-pixel blend with luma. Factors are drawn from [1 - s, 1 + s].
struct ColorJitter {
  double probability = 0.8;
  double brightness = 0.4;
  double contrast = 0.4;
  double saturation = 0.4;
};

struct Grayscale {
  double probability = 0.2;
};

// Separable Gaussian truncated at 3 sigma, edge-clamped.
struct GaussianBlur {
  double probability = 0.5;
  double sigma_min = 0.1;
  double sigma_max = 1.5;
};

using AugStep =
    std::variant<RandomResizedCrop, HorizontalFlip, ColorJitter, Grayscale, GaussianBlur>;

// Ordered augmentation list; each step fires independently with its own
// probability. The result is always resized to output_size x output_size.
struct AugPolicy {
  std::size_t output_size = 24;
  std::vector<AugStep> steps;

  // Throws ParameterError on probabilities outside [0,1], crop scale ranges
  // outside (0,1], or non-positive sizes.
  void validate() const;

  // Crop, flip, colour jitter, grayscale and blur with common defaults.
  static AugPolicy standard(std::size_t output_size, double scale_min, double scale_max);
  // Resize only.
  static AugPolicy identity(std::size_t output_size);
};

// Luma weights used by grayscale and saturation.
float luma(float r, float g, float b);

Image apply_augmentation(const Image& img, const AugPolicy& policy, Rng& rng);

// Two global crops plus optional local crops.
struct MultiCropPolicy {
  AugPolicy global = AugPolicy::standard(24, 0.4, 1.0);
  AugPolicy local = AugPolicy::standard(12, 0.05, 0.4);
};

struct ViewSet {
  std::vector<Image> global_views;  // exactly 2
  std::vector<Image> local_views;
  std::size_t source_index = 0;
  std::uint64_t seed = 0;

  std::size_t num_views() const { return global_views.size() + local_views.size(); }
  // Views 0, 1 are global; 2.. are local.
  const Image& view(std::size_t k) const {
    return k < global_views.size() ? global_views[k] : local_views[k - global_views.size()];
  }
};

ViewSet make_views(const Image& img, const MultiCropPolicy& policy, std::size_t n_local,
                   Rng& rng);

// Ordered (anchor, other) comparisons of multi-crop training: each of the two
// global views is compared against every other view, global or local. For
// n_local local views this yields 2 (n_local + 1) pairs, the global-global
// comparison appearing once from each anchor.
struct ViewPair {
  std::size_t anchor;
  std::size_t other;
  bool operator==(const ViewPair&) const = default;
};
std::vector<ViewPair> multicrop_pairs(std::size_t n_local);

struct MaskedImage {
  Image image;                      // masked patches set to zero
  std::vector<std::uint8_t> mask;   // grid_h x grid_w, 1 = masked
  std::size_t patch = 0;
  std::size_t grid_h = 0;
  std::size_t grid_w = 0;
  double ratio = 0.0;

  std::size_t masked_count() const;
  // Per-pixel mask broadcast over channels, matching Image::pixels layout.
  std::vector<double> pixel_mask(std::size_t channels) const;
};

// Zeroes round(ratio * patches) uniformly chosen patches. `patch` must divide
// both image sides and ratio must lie in (0, 1); otherwise ParameterError.
MaskedImage mask_patches(const Image& img, std::size_t patch, double ratio, Rng& rng);

}  // namespace sslforge

#endif  // SSLFORGE_DATA_AUGMENT_H_
