#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "dynlm/discretization.hpp"

namespace dynlm {

// Decoder-only causal transformer: pre-layer-norm residual blocks, learned
// positions (sinusoidal behind a flag), GELU feed-forward at 4x width,
// input/output embeddings tied by default. All math in 64-bit.
struct ModelConfig {
  std::uint32_t vocab = 2;
  std::uint32_t context = 1;
  std::uint32_t dim = 8;
  std::uint32_t layers = 1;
  std::uint32_t heads = 1;
  double dropout = 0.1;
  bool tie_embeddings = true;
  bool sinusoidal_positions = false;

  void validate() const;  // throws DataError on bad shape relations
  std::uint64_t param_count() const;

  static ModelConfig desk(std::uint32_t vocab) {
    return ModelConfig{vocab, 256, 128, 4, 4};
  }
  static ModelConfig full_scale(std::uint32_t vocab) {
    return ModelConfig{vocab, 1024, 768, 12, 12};
  }
};

struct Tensor {
  std::string name;
  std::vector<std::uint32_t> shape;
  std::vector<double> data;
  bool decay = true;      // weight decay applies
  bool trainable = true;  // sinusoidal position table is frozen

  std::size_t numel() const {
    std::size_t n = 1;
    for (auto s : shape) n *= s;
    return n;
  }
};

struct ParameterSet {
  ModelConfig config;
  std::vector<Tensor> tensors;

  Tensor& tensor(std::string_view name);
  const Tensor& tensor(std::string_view name) const;
  bool has_tensor(std::string_view name) const;
  std::uint64_t total_parameters() const;  // trainable tensor elements
};

// Weights N(0, 0.02), biases 0, layer-norm scale 1 / shift 0; the residual
// output projections are drawn at 0.02/sqrt(2*layers) to keep the stream
// variance flat across depth.
ParameterSet init_model(const ModelConfig& config, std::uint64_t seed);

// Same tensor layout, all zeros: gradient and moment holders.
ParameterSet zero_like(const ParameterSet& params);

// Full logits, row-major S x V. Inference mode: no dropout.
std::vector<double> forward(const ParameterSet& params, const std::vector<TokenId>& tokens);

// Final position's logits only; the hot path of autoregressive decoding.
std::vector<double> forward_last(const ParameterSet& params,
                                 const std::vector<TokenId>& tokens);

// Mean over positions of -log softmax(logits[t])[target[t]], computed with
// max subtraction.
double cross_entropy_loss(const std::vector<double>& logits, std::size_t positions,
                          std::uint32_t vocab, const TokenId* targets);

// Forward + exact backward: accumulates d(mean CE)/d(theta) into `grads`
// (+= semantics, so batches can sum then scale) and returns the loss.
// Dropout is applied only when train_mode is set and config.dropout > 0,
// with masks derived deterministically from dropout_seed.
double gradients(const ParameterSet& params, const std::vector<TokenId>& tokens,
                 const std::vector<TokenId>& targets, std::uint64_t dropout_seed,
                 ParameterSet& grads, bool train_mode = true);

// Loss under training-mode dropout without touching gradients (used by the
// dropout regression tests).
double training_loss(const ParameterSet& params, const std::vector<TokenId>& tokens,
                     const std::vector<TokenId>& targets, std::uint64_t dropout_seed);

}  // namespace dynlm
