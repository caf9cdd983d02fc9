#ifndef SSLFORGE_TENSOR_IO_H_
#define SSLFORGE_TENSOR_IO_H_

#include <filesystem>
#include <iosfwd>

#include "sslforge/tensor/tensor.h"

namespace sslforge {

// Binary tensor dump, little-endian:
//   "SSLT" | u32 rank | rank x u64 dims | f64 payload (row-major)
void write_tensor(std::ostream& out, const Tensor& t);
Tensor read_tensor(std::istream& in);

void save_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor load_tensor(const std::filesystem::path& path);

}  // namespace sslforge

#endif  // SSLFORGE_TENSOR_IO_H_
