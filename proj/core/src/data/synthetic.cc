#include "sslforge/data/synthetic.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include <fmt/format.h>

#include "sslforge/common/binary_io.h"
#include "sslforge/common/error.h"
#include "sslforge/common/rng.h"

namespace sslforge {
namespace {

struct Rgb {
  float r, g, b;
};

Rgb hsv_to_rgb(double h, double s, double v) {
  const double hh = std::fmod(h, 1.0) * 6.0;
  const int sector = static_cast<int>(hh);
  const double f = hh - sector;
  const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  switch (sector) {
    case 0: return {float(v), float(t), float(p)};
    case 1: return {float(q), float(v), float(p)};
    case 2: return {float(p), float(v), float(t)};
    case 3: return {float(p), float(q), float(v)};
    case 4: return {float(t), float(p), float(v)};
    default: return {float(v), float(p), float(q)};
  }
}

// Point membership for shape `kind` with half-extent r, offsets (dx, dy).
bool inside(std::size_t kind, double dx, double dy, double r) {
  const double ax = std::abs(dx), ay = std::abs(dy);
  const double thick = 0.3 * r;
  switch (kind) {
    case 0: return dx * dx + dy * dy <= r * r;
    case 1: {
      const double m = std::max(ax, ay);
      return m <= r && m >= r - thick;
    }
    case 2: return dy >= -r && dy <= r && ax <= 0.5 * (dy + r);
    case 3: return (ax <= thick && ay <= r) || (ay <= thick && ax <= r);
    case 4: {
      const double d = std::sqrt(dx * dx + dy * dy);
      return d <= r && d >= r - thick;
    }
    case 5: return std::max(ax, ay) <= 0.85 * r;
    case 6: return ax + ay <= r;
    default:
      return std::max(ax, ay) <= r &&
             (std::abs(dx - dy) <= thick || std::abs(dx + dy) <= thick);
  }
}

Image render(std::size_t kind, std::size_t size, Rng& rng) {
  Image img(size, size, 3);
  const double s = static_cast<double>(size);

  // Background: dark tint, low-amplitude oriented sinusoid, pixel noise.
  const double base = rng.uniform(0.05, 0.25);
  const double tint[3] = {rng.uniform(-0.04, 0.04), rng.uniform(-0.04, 0.04),
                          rng.uniform(-0.04, 0.04)};
  const double amp = rng.uniform(0.02, 0.08);
  const double freq = rng.uniform(0.2, 0.8);
  const double angle = rng.uniform(0.0, std::numbers::pi);
  const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double fx = freq * std::cos(angle), fy = freq * std::sin(angle);

  const double radius = rng.uniform(0.22, 0.38) * s;
  const double cx = rng.uniform(radius, s - radius);
  const double cy = rng.uniform(radius, s - radius);
  const Rgb color = hsv_to_rgb(rng.uniform(), rng.uniform(0.6, 1.0), rng.uniform(0.7, 1.0));
  const float rgb[3] = {color.r, color.g, color.b};

  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      // 2 x 2 supersampled coverage.
      int hits = 0;
      for (int sy = 0; sy < 2; ++sy) {
        for (int sx = 0; sx < 2; ++sx) {
          const double px = x + 0.25 + 0.5 * sx, py = y + 0.25 + 0.5 * sy;
          hits += inside(kind, px - cx, py - cy, radius) ? 1 : 0;
        }
      }
      const double coverage = hits / 4.0;
      const double texture = amp * std::sin(fx * x + fy * y + phase);
      for (std::size_t c = 0; c < 3; ++c) {
        const double bg = base + tint[c] + texture + rng.normal(0.0, 0.02);
        const double v = bg * (1.0 - coverage) + rgb[c] * coverage;
        img.at(c, y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
  return img;
}

}  // namespace

LabeledImages gen_synthetic_dataset(std::size_t n, std::size_t classes, std::size_t size,
                                    std::uint64_t seed) {
  if (classes < 2 || classes > kMaxSyntheticClasses) {
    throw ParameterError(fmt::format("synthetic dataset supports 2..{} classes, got {}",
                                     kMaxSyntheticClasses, classes));
  }
  if (size < 16) throw ParameterError("synthetic dataset image size must be >= 16");
  LabeledImages out;
  out.num_classes = classes;
  out.images.reserve(n);
  out.labels.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, i));
    const std::size_t label = i % classes;
    out.images.push_back(render(label, size, rng));
    out.labels.push_back(static_cast<std::uint16_t>(label));
  }
  return out;
}

void save_dataset(const std::filesystem::path& path, const LabeledImages& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  const std::size_t h = data.images.empty() ? 0 : data.images[0].height;
  const std::size_t w = data.images.empty() ? 0 : data.images[0].width;
  const std::size_t c = data.images.empty() ? 3 : data.images[0].channels;
  binary::put_magic(out, "SSLD");
  binary::put_le<std::uint64_t>(out, data.size());
  binary::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(h));
  binary::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(w));
  binary::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(c));
  for (auto label : data.labels) binary::put_le<std::uint16_t>(out, label);
  for (const Image& im : data.images) {
    if (im.height != h || im.width != w || im.channels != c) {
      throw DataError("save_dataset: images differ in size");
    }
    for (float v : im.pixels) binary::put_f32(out, v);
  }
  if (!out) throw DataError("write failed: " + path.string());
}

LabeledImages load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  binary::expect_magic(in, "SSLD");
  const auto count = binary::get_le<std::uint64_t>(in);
  const auto h = binary::get_le<std::uint32_t>(in);
  const auto w = binary::get_le<std::uint32_t>(in);
  const auto c = binary::get_le<std::uint32_t>(in);
  LabeledImages out;
  out.labels.resize(count);
  for (auto& label : out.labels) {
    label = binary::get_le<std::uint16_t>(in);
    out.num_classes = std::max<std::size_t>(out.num_classes, label + 1u);
  }
  out.images.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    Image im(h, w, c);
    for (float& v : im.pixels) v = binary::get_f32(in);
    out.images.push_back(std::move(im));
  }
  return out;
}

}  // namespace sslforge
