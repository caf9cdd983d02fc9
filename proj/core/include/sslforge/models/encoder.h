#ifndef SSLFORGE_MODELS_ENCODER_H_
#define SSLFORGE_MODELS_ENCODER_H_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sslforge/models/params.h"
#include "sslforge/tensor/tensor.h"

namespace sslforge {

// Fully connected stack: affine layers with ReLU between them and none after
// the last. batch_norm[l] (if present and set) normalizes hidden layer l with
// batch statistics before its ReLU.
struct MlpSpec {
  std::vector<std::size_t> widths;  // output width of each layer
  std::vector<bool> batch_norm;

  void validate(const char* what) const;
  std::size_t out_width() const { return widths.back(); }
};

// Registers weights "<prefix>.l<k>.w" (in x out) and biases "<prefix>.l<k>.b"
// (1 x out). Normalized layers get "<prefix>.l<k>.gamma" / ".beta" in place
// of the bias.
void init_mlp(ParamSet& params, const std::string& prefix, const MlpSpec& spec,
              std::size_t in_width, std::uint64_t seed);
Tensor mlp_forward(const MlpSpec& spec, const ParamSet& params, const std::string& prefix,
                   const Tensor& x);

// Per-column standardization with biased batch variance, then affine.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);

enum class TrunkKind { kConv, kMlp, kLinear };

struct EncoderSpec {
  TrunkKind trunk = TrunkKind::kConv;
  // Conv trunk channels and nominal input size.
  std::size_t image_size = 24;
  std::size_t channels = 3;
  std::vector<std::size_t> conv_channels{16, 32, 64};
  // Mlp / linear trunk input width (flattened images or raw features).
  std::size_t input_dim = 0;
  MlpSpec trunk_mlp;           // mlp trunk
  std::size_t linear_dim = 0;  // linear trunk output width
  std::optional<MlpSpec> projector = MlpSpec{{128, 64}, {}};
  std::optional<MlpSpec> predictor = MlpSpec{{64, 64}, {}};

  void validate() const;
  std::size_t backbone_dim() const;
  std::size_t projector_dim() const;
};

// The representation at each tap.
struct Taps {
  Tensor backbone;
  Tensor projector;  // equals backbone when `spec` has no projector
  std::optional<Tensor> predictor;
};

// Glorot-uniform weights, zero biases, unit gamma; seeded.
ParamSet init_encoder(const EncoderSpec& spec, std::uint64_t seed);

// Conv trunk expects N x C x H x W (any H, W: the trunk ends in global average
// pooling); mlp and linear trunks expect N x input_dim.
// Throws SpecError when the input does not match `spec`.
Taps encode(const EncoderSpec& spec, const ParamSet& params, const Tensor& x);
// Backbone and projector only, for teacher branches.
Taps encode_without_predictor(const EncoderSpec& spec, const ParamSet& params,
                              const Tensor& x);

// Names of predictor parameters, which the teacher does not mirror.
bool is_predictor_param(const std::string& name);

}  // namespace sslforge

#endif  // SSLFORGE_MODELS_ENCODER_H_
