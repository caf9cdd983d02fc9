#include "sslforge/models/encoder.h"

#include <cmath>

#include <fmt/format.h>

#include "sslforge/common/error.h"
#include "sslforge/common/rng.h"
#include "sslforge/tensor/ops.h"

namespace sslforge {
namespace {

Tensor glorot(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> v(numel(shape));
  for (double& x : v) x = rng.uniform(-limit, limit);
  return Tensor::parameter(std::move(shape), std::move(v));
}

Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b) {
  return add(matmul(x, w), expand_rows(b, x.rows()));
}

std::string layer_name(const std::string& prefix, std::size_t l, const char* what) {
  return fmt::format("{}.l{}.{}", prefix, l, what);
}

bool has_bn(const MlpSpec& spec, std::size_t l) {
  return l < spec.batch_norm.size() && spec.batch_norm[l];
}

void require_columns(const Tensor& x, std::size_t width, const char* what) {
  if (x.rank() != 2 || x.cols() != width) {
    throw SpecError(fmt::format("{} expects N x {} input, got {}", what, width,
                                shape_string(x.shape())));
  }
}

}  // namespace

void MlpSpec::validate(const char* what) const {
  if (widths.empty()) throw SpecError(fmt::format("{} needs at least one layer", what));
  for (std::size_t w : widths) {
    if (w == 0) throw SpecError(fmt::format("{} has a zero-width layer", what));
  }
  if (batch_norm.size() > widths.size()) {
    throw SpecError(fmt::format("{} has more batch-norm flags than layers", what));
  }
}

void init_mlp(ParamSet& params, const std::string& prefix, const MlpSpec& spec,
              std::size_t in_width, std::uint64_t seed) {
  spec.validate(prefix.c_str());
  Rng rng(seed);
  std::size_t in = in_width;
  for (std::size_t l = 0; l < spec.widths.size(); ++l) {
    const std::size_t out = spec.widths[l];
    params.add(layer_name(prefix, l, "w"), glorot({in, out}, in, out, rng), true);
    if (has_bn(spec, l)) {
      params.add(layer_name(prefix, l, "gamma"), Tensor::filled({1, out}, 1.0), false);
      params.add(layer_name(prefix, l, "beta"), Tensor::zeros({1, out}), false);
    } else {
      params.add(layer_name(prefix, l, "b"), Tensor::zeros({1, out}), false);
    }
    in = out;
  }
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const std::size_t n = x.rows();
  const Tensor centered = sub(x, expand_rows(col_mean(x), n));
  const Tensor sd = sqrt(add_scalar(col_mean(square(centered)), eps));
  const Tensor normed = div(centered, expand_rows(sd, n));
  return add(mul(normed, expand_rows(gamma, n)), expand_rows(beta, n));
}

Tensor mlp_forward(const MlpSpec& spec, const ParamSet& params, const std::string& prefix,
                   const Tensor& x) {
  Tensor h = x;
  for (std::size_t l = 0; l < spec.widths.size(); ++l) {
    const Tensor& w = params.get(layer_name(prefix, l, "w"));
    require_columns(h, w.rows(), prefix.c_str());
    if (has_bn(spec, l)) {
      h = batch_norm(matmul(h, w), params.get(layer_name(prefix, l, "gamma")),
                     params.get(layer_name(prefix, l, "beta")));
    } else {
      h = affine(h, w, params.get(layer_name(prefix, l, "b")));
    }
    if (l + 1 < spec.widths.size()) h = relu(h);
  }
  return h;
}

void EncoderSpec::validate() const {
  switch (trunk) {
    case TrunkKind::kConv:
      if (conv_channels.empty() || conv_channels.size() > 4) {
        throw SpecError("conv trunk needs 1 to 4 blocks");
      }
      if (image_size < 4 || channels == 0) throw SpecError("conv trunk input too small");
      break;
    case TrunkKind::kMlp:
      if (input_dim == 0) throw SpecError("mlp trunk needs input_dim");
      trunk_mlp.validate("trunk");
      break;
    case TrunkKind::kLinear:
      if (input_dim == 0 || linear_dim == 0) {
        throw SpecError("linear trunk needs input_dim and linear_dim");
      }
      break;
  }
  if (projector) projector->validate("projector");
  if (predictor) {
    predictor->validate("predictor");
    if (predictor->out_width() != projector_dim()) {
      throw SpecError(fmt::format("predictor width {} must match projector width {}",
                                  predictor->out_width(), projector_dim()));
    }
  }
}

std::size_t EncoderSpec::backbone_dim() const {
  switch (trunk) {
    case TrunkKind::kConv:
      return conv_channels.back();
    case TrunkKind::kMlp:
      return trunk_mlp.out_width();
    case TrunkKind::kLinear:
      return linear_dim;
  }
  return 0;
}

std::size_t EncoderSpec::projector_dim() const {
  return projector ? projector->out_width() : backbone_dim();
}

ParamSet init_encoder(const EncoderSpec& spec, std::uint64_t seed) {
  spec.validate();
  ParamSet params;
  Rng rng(derive_seed(seed, 0));
  switch (spec.trunk) {
    case TrunkKind::kConv: {
      std::size_t in = spec.channels;
      for (std::size_t l = 0; l < spec.conv_channels.size(); ++l) {
        const std::size_t out = spec.conv_channels[l];
        params.add(fmt::format("trunk.conv{}.w", l), glorot({out, in, 3, 3}, in * 9, out * 9, rng),
                   true);
        params.add(fmt::format("trunk.conv{}.b", l), Tensor::zeros({1, out}), false);
        in = out;
      }
      break;
    }
    case TrunkKind::kMlp:
      init_mlp(params, "trunk", spec.trunk_mlp, spec.input_dim, derive_seed(seed, 1));
      break;
    case TrunkKind::kLinear:
      params.add("trunk.linear.w",
                 glorot({spec.input_dim, spec.linear_dim}, spec.input_dim, spec.linear_dim, rng),
                 true);
      break;
  }
  if (spec.projector) {
    init_mlp(params, "projector", *spec.projector, spec.backbone_dim(), derive_seed(seed, 2));
  }
  if (spec.predictor) {
    init_mlp(params, "predictor", *spec.predictor, spec.projector_dim(), derive_seed(seed, 3));
  }
  return params;
}

Taps encode_without_predictor(const EncoderSpec& spec, const ParamSet& params,
                              const Tensor& x) {
  Tensor h;
  switch (spec.trunk) {
    case TrunkKind::kConv: {
      if (x.rank() != 4 || x.dim(1) != spec.channels || x.dim(2) == 0 || x.dim(3) == 0) {
        throw SpecError(fmt::format("conv trunk expects N x {} x H x W input, got {}",
                                    spec.channels, shape_string(x.shape())));
      }
      h = x;
      for (std::size_t l = 0; l < spec.conv_channels.size(); ++l) {
        h = relu(conv2d(h, params.get(fmt::format("trunk.conv{}.w", l)),
                        params.get(fmt::format("trunk.conv{}.b", l)), 2, 1));
      }
      h = global_avg_pool(h);
      break;
    }
    case TrunkKind::kMlp:
      require_columns(x, spec.input_dim, "mlp trunk");
      h = mlp_forward(spec.trunk_mlp, params, "trunk", x);
      break;
    case TrunkKind::kLinear:
      require_columns(x, spec.input_dim, "linear trunk");
      h = matmul(x, params.get("trunk.linear.w"));
      break;
  }
  Taps taps{h, h, std::nullopt};
  if (spec.projector) taps.projector = mlp_forward(*spec.projector, params, "projector", h);
  return taps;
}

Taps encode(const EncoderSpec& spec, const ParamSet& params, const Tensor& x) {
  Taps taps = encode_without_predictor(spec, params, x);
  if (spec.predictor) {
    taps.predictor = mlp_forward(*spec.predictor, params, "predictor", taps.projector);
  }
  return taps;
}

bool is_predictor_param(const std::string& name) { return name.starts_with("predictor."); }

}  // namespace sslforge
