#ifndef SSLFORGE_DATA_IMAGE_H_
#define SSLFORGE_DATA_IMAGE_H_

#include <cstddef>
#include <span>
#include <vector>

#include "sslforge/tensor/tensor.h"

namespace sslforge {

// Planar (channel-major) RGB image with values in [0, 1].
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 3;
  std::vector<float> pixels;  // channels x height x width

  Image() = default;
  Image(std::size_t h, std::size_t w, std::size_t c = 3, float fill = 0.0f)
      : height(h), width(w), channels(c), pixels(h * w * c, fill) {}

  float at(std::size_t c, std::size_t y, std::size_t x) const {
    return pixels[(c * height + y) * width + x];
  }
  float& at(std::size_t c, std::size_t y, std::size_t x) {
    return pixels[(c * height + y) * width + x];
  }
  bool operator==(const Image&) const = default;
};

// Bilinear resample of the axis-aligned region (top, left, h, w), given in
// source pixel units, onto an out_h x out_w grid (pixel-centre alignment).
Image crop_resize(const Image& img, double top, double left, double h, double w,
                  std::size_t out_h, std::size_t out_w);
Image resize(const Image& img, std::size_t out_h, std::size_t out_w);

void clamp_unit(Image& img);

// N x C x H x W batch; all images must share one size.
Tensor images_to_tensor(std::span<const Image> images);
// N x (C*H*W)
Tensor images_to_flat(std::span<const Image> images);

}  // namespace sslforge

#endif  // SSLFORGE_DATA_IMAGE_H_
