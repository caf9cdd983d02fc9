#ifndef SSLFORGE_COMMON_ERROR_H_
#define SSLFORGE_COMMON_ERROR_H_

#include <stdexcept>
#include <string>

namespace sslforge {

// Root of every exception the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor shapes that do not compose (matmul inner dims, elementwise ops).
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A scalar argument outside its documented domain (tau <= 0, ratio not in
// (0,1), K not dividing the batch, ...).
class ParameterError : public Error {
 public:
  using Error::Error;
};

// API misuse: non-scalar backward, double backward, teacher on the tape.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Input data that cannot be processed (NaN/Inf, all-zero embeddings, bad
// file headers).
class DataError : public Error {
 public:
  using Error::Error;
};

// Numerical breakdown: singular covariance, NaN loss during training.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// A phi/psi or model description that violates its declared properties.
class SpecError : public Error {
 public:
  using Error::Error;
};

// Invalid experiment configuration (unknown key, bad value).
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace sslforge

#endif  // SSLFORGE_COMMON_ERROR_H_
