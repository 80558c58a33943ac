#pragma once

#include <cstdint>
#include <vector>

#include "dynlm/transformer.hpp"

namespace dynlm {

struct SamplerConfig {
  double temperature = 1.0;  // 0 means argmax
  bool mask_to_observed = true;
  std::uint64_t max_new_tokens = 0;
  std::uint64_t seed = 0;
};

// Token-id indicator of everything present in the training data.
std::vector<std::uint8_t> observed_vocabulary(
    const std::vector<std::vector<TokenId>>& sequences, std::uint32_t vocab);

// softmax(z/T) over the final position's logits. With masking, non-observed
// tokens get probability exactly 0 and the rest renormalize. T = 0 returns
// a one-hot at the argmax, ties broken toward the smallest token id.
// `observed` may be null only when masking is off.
std::vector<double> next_token_distribution(const ParameterSet& params,
                                            const std::vector<TokenId>& prefix,
                                            const SamplerConfig& sampler,
                                            const std::vector<std::uint8_t>* observed);

// Appends max_new_tokens tokens one at a time, feeding the last C-1 tokens
// once the context fills. Deterministic given the seed; T = 0 draws nothing.
std::vector<TokenId> sample_continuation(const ParameterSet& params,
                                         const std::vector<TokenId>& prefix,
                                         const SamplerConfig& sampler,
                                         const std::vector<std::uint8_t>* observed);

}  // namespace dynlm
