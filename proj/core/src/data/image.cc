#include "sslforge/data/image.h"

#include <algorithm>
#include <cmath>

#include "sslforge/common/error.h"

namespace sslforge {

Image crop_resize(const Image& img, double top, double left, double h, double w,
                  std::size_t out_h, std::size_t out_w) {
  if (out_h == 0 || out_w == 0) throw ParameterError("crop_resize: empty output");
  Image out(out_h, out_w, img.channels);
  const double sy = h / static_cast<double>(out_h);
  const double sx = w / static_cast<double>(out_w);
  const double max_y = static_cast<double>(img.height - 1);
  const double max_x = static_cast<double>(img.width - 1);
  for (std::size_t oy = 0; oy < out_h; ++oy) {
    const double y = std::clamp(top + (oy + 0.5) * sy - 0.5, 0.0, max_y);
    const std::size_t y0 = static_cast<std::size_t>(y);
    const std::size_t y1 = std::min(y0 + 1, img.height - 1);
    const float fy = static_cast<float>(y - y0);
    for (std::size_t ox = 0; ox < out_w; ++ox) {
      const double x = std::clamp(left + (ox + 0.5) * sx - 0.5, 0.0, max_x);
      const std::size_t x0 = static_cast<std::size_t>(x);
      const std::size_t x1 = std::min(x0 + 1, img.width - 1);
      const float fx = static_cast<float>(x - x0);
      for (std::size_t c = 0; c < img.channels; ++c) {
        // a + t (b - a) form keeps constant regions exactly constant.
        const float a = img.at(c, y0, x0), b = img.at(c, y0, x1);
        const float cc = img.at(c, y1, x0), d = img.at(c, y1, x1);
        const float top_row = a + fx * (b - a);
        const float bottom_row = cc + fx * (d - cc);
        out.at(c, oy, ox) = top_row + fy * (bottom_row - top_row);
      }
    }
  }
  return out;
}

Image resize(const Image& img, std::size_t out_h, std::size_t out_w) {
  if (img.height == out_h && img.width == out_w) return img;
  return crop_resize(img, 0.0, 0.0, static_cast<double>(img.height),
                     static_cast<double>(img.width), out_h, out_w);
}

void clamp_unit(Image& img) {
  for (float& v : img.pixels) v = std::clamp(v, 0.0f, 1.0f);
}

Tensor images_to_tensor(std::span<const Image> images) {
  if (images.empty()) throw DimensionError("images_to_tensor: empty batch");
  const Image& first = images.front();
  std::vector<double> v;
  v.reserve(images.size() * first.pixels.size());
  for (const Image& im : images) {
    if (im.height != first.height || im.width != first.width ||
        im.channels != first.channels) {
      throw DimensionError("images_to_tensor: images differ in size");
    }
    v.insert(v.end(), im.pixels.begin(), im.pixels.end());
  }
  return Tensor({images.size(), first.channels, first.height, first.width}, std::move(v));
}

Tensor images_to_flat(std::span<const Image> images) {
  const Tensor t = images_to_tensor(images);
  return Tensor({t.dim(0), t.dim(1) * t.dim(2) * t.dim(3)}, t.vec());
}

}  // namespace sslforge
