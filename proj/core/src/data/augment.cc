#include "sslforge/data/augment.h"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "sslforge/common/error.h"

namespace sslforge {
namespace {

void check_probability(double p, const char* what) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw ParameterError(fmt::format("{}: probability {} outside [0, 1]", what, p));
  }
}

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

Image random_resized_crop(const Image& img, const RandomResizedCrop& op, std::size_t out,
                          Rng& rng) {
  const double h = static_cast<double>(img.height), w = static_cast<double>(img.width);
  const double area = h * w;
  const double log_lo = std::log(op.ratio_min), log_hi = std::log(op.ratio_max);
  for (int attempt = 0; attempt < 10; ++attempt) {
    const double target = area * rng.uniform(op.scale_min, op.scale_max);
    const double ratio = std::exp(rng.uniform(log_lo, log_hi));
    const double cw = std::round(std::sqrt(target * ratio));
    const double ch = std::round(std::sqrt(target / ratio));
    if (cw >= 1.0 && ch >= 1.0 && cw <= w && ch <= h) {
      const double top = std::floor(rng.uniform() * (h - ch + 1.0));
      const double left = std::floor(rng.uniform() * (w - cw + 1.0));
      return crop_resize(img, top, left, ch, cw, out, out);
    }
  }
  // Fallback: central crop at the clamped aspect ratio.
  const double side = std::min(h, w);
  return crop_resize(img, (h - side) / 2.0, (w - side) / 2.0, side, side, out, out);
}

void flip(Image& img) {
  for (std::size_t c = 0; c < img.channels; ++c) {
    for (std::size_t y = 0; y < img.height; ++y) {
      float* row = &img.at(c, y, 0);
      std::reverse(row, row + img.width);
    }
  }
}

void to_grayscale(Image& img) {
  const std::size_t plane = img.height * img.width;
  for (std::size_t p = 0; p < plane; ++p) {
    const float g = luma(img.pixels[p], img.pixels[plane + p], img.pixels[2 * plane + p]);
    img.pixels[p] = img.pixels[plane + p] = img.pixels[2 * plane + p] = g;
  }
}

void jitter(Image& img, const ColorJitter& op, Rng& rng) {
  const std::size_t plane = img.height * img.width;
  const float b = static_cast<float>(rng.uniform(1.0 - op.brightness, 1.0 + op.brightness));
  const float c = static_cast<float>(rng.uniform(1.0 - op.contrast, 1.0 + op.contrast));
  const float s = static_cast<float>(rng.uniform(1.0 - op.saturation, 1.0 + op.saturation));
  for (float& v : img.pixels) v *= b;
  clamp_unit(img);
  double mean_luma = 0.0;
  for (std::size_t p = 0; p < plane; ++p) {
    mean_luma += luma(img.pixels[p], img.pixels[plane + p], img.pixels[2 * plane + p]);
  }
  const float m = static_cast<float>(mean_luma / static_cast<double>(plane));
  for (float& v : img.pixels) v = m + c * (v - m);
  clamp_unit(img);
  for (std::size_t p = 0; p < plane; ++p) {
    const float g = luma(img.pixels[p], img.pixels[plane + p], img.pixels[2 * plane + p]);
    for (std::size_t ch = 0; ch < 3; ++ch) {
      float& v = img.pixels[ch * plane + p];
      v = g + s * (v - g);
    }
  }
  clamp_unit(img);
}

void blur(Image& img, double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<float> kernel(2 * radius + 1);
  double total = 0.0;
  for (int k = -radius; k <= radius; ++k) {
    const double v = std::exp(-0.5 * k * k / (sigma * sigma));
    kernel[k + radius] = static_cast<float>(v);
    total += v;
  }
  for (float& k : kernel) k = static_cast<float>(k / total);

  const int h = static_cast<int>(img.height), w = static_cast<int>(img.width);
  std::vector<float> tmp(img.pixels.size());
  for (std::size_t c = 0; c < img.channels; ++c) {
    const float* src = img.pixels.data() + c * h * w;
    float* mid = tmp.data() + c * h * w;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        float acc = 0.0f;
        for (int k = -radius; k <= radius; ++k) {
          acc += kernel[k + radius] * src[y * w + std::clamp(x + k, 0, w - 1)];
        }
        mid[y * w + x] = acc;
      }
    }
    float* dst = img.pixels.data() + c * h * w;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        float acc = 0.0f;
        for (int k = -radius; k <= radius; ++k) {
          acc += kernel[k + radius] * mid[std::clamp(y + k, 0, h - 1) * w + x];
        }
        dst[y * w + x] = acc;
      }
    }
  }
}

}  // namespace

float luma(float r, float g, float b) { return 0.299f * r + 0.587f * g + 0.114f * b; }

void AugPolicy::validate() const {
  if (output_size == 0) throw ParameterError("augmentation output size must be positive");
  for (const AugStep& step : steps) {
    std::visit(Overloaded{
                   [](const RandomResizedCrop& op) {
                     check_probability(op.probability, "crop");
                     if (!(op.scale_min > 0.0 && op.scale_min <= op.scale_max &&
                           op.scale_max <= 1.0)) {
                       throw ParameterError(fmt::format(
                           "crop scale range [{}, {}] not inside (0, 1]", op.scale_min,
                           op.scale_max));
                     }
                     if (!(op.ratio_min > 0.0 && op.ratio_min <= op.ratio_max)) {
                       throw ParameterError("crop aspect-ratio range is invalid");
                     }
                   },
                   [](const HorizontalFlip& op) { check_probability(op.probability, "flip"); },
                   [](const ColorJitter& op) {
                     check_probability(op.probability, "color jitter");
                     for (double s : {op.brightness, op.contrast, op.saturation}) {
                       if (!(s >= 0.0 && s <= 1.0)) {
                         throw ParameterError("jitter strengths must lie in [0, 1]");
                       }
                     }
                   },
                   [](const Grayscale& op) { check_probability(op.probability, "grayscale"); },
                   [](const GaussianBlur& op) {
                     check_probability(op.probability, "blur");
                     if (!(op.sigma_min > 0.0 && op.sigma_min <= op.sigma_max)) {
                       throw ParameterError("blur sigma range is invalid");
                     }
                   },
               },
               step);
  }
}

AugPolicy AugPolicy::standard(std::size_t output_size, double scale_min, double scale_max) {
  AugPolicy p;
  p.output_size = output_size;
  RandomResizedCrop crop;
  crop.scale_min = scale_min;
  crop.scale_max = scale_max;
  p.steps = {crop, HorizontalFlip{}, ColorJitter{}, Grayscale{}, GaussianBlur{}};
  return p;
}

AugPolicy AugPolicy::identity(std::size_t output_size) {
  AugPolicy p;
  p.output_size = output_size;
  return p;
}

Image apply_augmentation(const Image& img, const AugPolicy& policy, Rng& rng) {
  if (img.channels != 3) throw DimensionError("augmentation expects RGB images");
  const std::size_t out = policy.output_size;
  Image cur = img;
  for (const AugStep& step : policy.steps) {
    std::visit(Overloaded{
                   [&](const RandomResizedCrop& op) {
                     if (rng.bernoulli(op.probability)) {
                       cur = random_resized_crop(cur, op, out, rng);
                     }
                   },
                   [&](const HorizontalFlip& op) {
                     if (rng.bernoulli(op.probability)) flip(cur);
                   },
                   [&](const ColorJitter& op) {
                     if (rng.bernoulli(op.probability)) jitter(cur, op, rng);
                   },
                   [&](const Grayscale& op) {
                     if (rng.bernoulli(op.probability)) to_grayscale(cur);
                   },
                   [&](const GaussianBlur& op) {
                     if (rng.bernoulli(op.probability)) {
                       blur(cur, rng.uniform(op.sigma_min, op.sigma_max));
                     }
                   },
               },
               step);
  }
  cur = resize(cur, out, out);
  clamp_unit(cur);
  return cur;
}

ViewSet make_views(const Image& img, const MultiCropPolicy& policy, std::size_t n_local,
                   Rng& rng) {
  ViewSet views;
  views.global_views.reserve(2);
  for (int k = 0; k < 2; ++k) {
    views.global_views.push_back(apply_augmentation(img, policy.global, rng));
  }
  views.local_views.reserve(n_local);
  for (std::size_t k = 0; k < n_local; ++k) {
    views.local_views.push_back(apply_augmentation(img, policy.local, rng));
  }
  return views;
}

std::vector<ViewPair> multicrop_pairs(std::size_t n_local) {
  const std::size_t total = 2 + n_local;
  std::vector<ViewPair> pairs;
  pairs.reserve(2 * (total - 1));
  for (std::size_t g = 0; g < 2; ++g) {
    for (std::size_t v = 0; v < total; ++v) {
      if (v != g) pairs.push_back({g, v});
    }
  }
  return pairs;
}

std::size_t MaskedImage::masked_count() const {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

std::vector<double> MaskedImage::pixel_mask(std::size_t channels) const {
  const std::size_t h = grid_h * patch, w = grid_w * patch;
  std::vector<double> out(channels * h * w, 0.0);
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        out[(c * h + y) * w + x] = mask[(y / patch) * grid_w + x / patch] ? 1.0 : 0.0;
      }
    }
  }
  return out;
}

MaskedImage mask_patches(const Image& img, std::size_t patch, double ratio, Rng& rng) {
  if (patch == 0 || img.height % patch != 0 || img.width % patch != 0) {
    throw ParameterError(fmt::format("patch size {} does not divide {}x{}", patch,
                                     img.height, img.width));
  }
  if (!(ratio > 0.0 && ratio < 1.0)) {
    throw ParameterError(fmt::format("mask ratio {} outside (0, 1)", ratio));
  }
  MaskedImage out;
  out.patch = patch;
  out.ratio = ratio;
  out.grid_h = img.height / patch;
  out.grid_w = img.width / patch;
  const std::size_t total = out.grid_h * out.grid_w;
  const auto count = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(total)));
  out.mask.assign(total, 0);
  // Partial Fisher-Yates: the first `count` entries are a uniform subset.
  std::vector<std::size_t> order(total);
  for (std::size_t i = 0; i < total; ++i) order[i] = i;
  for (std::size_t i = 0; i < count; ++i) {
    std::swap(order[i], order[i + rng.below(total - i)]);
    out.mask[order[i]] = 1;
  }
  out.image = img;
  for (std::size_t c = 0; c < img.channels; ++c) {
    for (std::size_t y = 0; y < img.height; ++y) {
      for (std::size_t x = 0; x < img.width; ++x) {
        if (out.mask[(y / patch) * out.grid_w + x / patch]) out.image.at(c, y, x) = 0.0f;
      }
    }
  }
  return out;
}

}  // namespace sslforge
