#include "sslforge/tensor/io.h"

#include <fstream>

#include "sslforge/common/binary_io.h"
#include "sslforge/common/error.h"

namespace sslforge {

void write_tensor(std::ostream& out, const Tensor& t) {
  binary::put_magic(out, "SSLT");
  binary::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.shape()) binary::put_le<std::uint64_t>(out, d);
  for (double v : t.values()) binary::put_f64(out, v);
}

Tensor read_tensor(std::istream& in) {
  binary::expect_magic(in, "SSLT");
  const auto rank = binary::get_le<std::uint32_t>(in);
  if (rank > 8) throw DataError("tensor dump: implausible rank");
  Shape shape(rank);
  for (auto& d : shape) d = binary::get_le<std::uint64_t>(in);
  std::vector<double> values(numel(shape));
  for (double& v : values) v = binary::get_f64(in);
  return Tensor(std::move(shape), std::move(values));
}

void save_tensor(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  write_tensor(out, t);
  if (!out) throw DataError("write failed: " + path.string());
}

Tensor load_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return read_tensor(in);
}

}  // namespace sslforge
