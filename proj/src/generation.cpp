#include "dynlm/generation.hpp"

#include <cmath>
#include <limits>

#include "dynlm/common.hpp"
#include "dynlm/rng.hpp"

namespace dynlm {

std::vector<std::uint8_t> observed_vocabulary(
    const std::vector<std::vector<TokenId>>& sequences, std::uint32_t vocab) {
  std::vector<std::uint8_t> seen(vocab, 0);
  for (const auto& s : sequences) {
    for (TokenId t : s) {
      if (t >= vocab) throw DataError("observed_vocabulary: token id out of range");
      seen[t] = 1;
    }
  }
  return seen;
}

namespace {

std::vector<double> distribution_from_logits(std::vector<double> logits,
                                             const SamplerConfig& sampler,
                                             const std::vector<std::uint8_t>* observed) {
  const std::uint32_t v = std::uint32_t(logits.size());
  if (sampler.mask_to_observed) {
    if (!observed) throw DataError("masking requested but no observed vocabulary given");
    if (observed->size() != v)
      throw DataError("observed vocabulary size does not match the model vocabulary");
  }
  auto allowed = [&](std::uint32_t i) {
    return !sampler.mask_to_observed || (*observed)[i] != 0;
  };

  std::vector<double> probs(v, 0.0);
  if (sampler.temperature == 0.0) {
    // argmax over allowed ids; ties toward the smallest id via strict >
    std::int64_t best = -1;
    for (std::uint32_t i = 0; i < v; ++i) {
      if (!allowed(i)) continue;
      if (best < 0 || logits[i] > logits[best]) best = i;
    }
    if (best < 0) throw DataError("observed vocabulary is empty");
    probs[best] = 1.0;
    return probs;
  }
  if (!(sampler.temperature > 0.0))
    throw DataError("temperature must be >= 0");

  double mx = -std::numeric_limits<double>::infinity();
  for (std::uint32_t i = 0; i < v; ++i) {
    if (allowed(i)) mx = std::fmax(mx, logits[i] / sampler.temperature);
  }
  if (!std::isfinite(mx)) throw DataError("observed vocabulary is empty");
  double sum = 0.0;
  for (std::uint32_t i = 0; i < v; ++i) {
    if (!allowed(i)) continue;  // masked-out ids stay exactly 0
    probs[i] = std::exp(logits[i] / sampler.temperature - mx);
    sum += probs[i];
  }
  const double inv = 1.0 / sum;
  for (std::uint32_t i = 0; i < v; ++i) probs[i] *= inv;
  return probs;
}

}  // namespace

std::vector<double> next_token_distribution(const ParameterSet& params,
                                            const std::vector<TokenId>& prefix,
                                            const SamplerConfig& sampler,
                                            const std::vector<std::uint8_t>* observed) {
  if (prefix.empty()) throw DataError("next_token_distribution: empty prefix");
  return distribution_from_logits(forward_last(params, prefix), sampler, observed);
}

std::vector<TokenId> sample_continuation(const ParameterSet& params,
                                         const std::vector<TokenId>& prefix,
                                         const SamplerConfig& sampler,
                                         const std::vector<std::uint8_t>* observed) {
  const std::uint32_t c = params.config.context;
  if (prefix.size() > std::size_t(c) - 1)
    throw DataError("sample_continuation: prefix length " +
                    std::to_string(prefix.size()) + " exceeds context-1 = " +
                    std::to_string(c - 1));
  if (prefix.empty()) throw DataError("sample_continuation: empty prefix");

  std::vector<TokenId> out = prefix;
  out.reserve(prefix.size() + sampler.max_new_tokens);
  Rng rng(derive_seed(sampler.seed, 0x9e4));
  std::vector<TokenId> window;
  for (std::uint64_t step = 0; step < sampler.max_new_tokens; ++step) {
    const std::size_t keep = std::min<std::size_t>(out.size(), std::size_t(c) - 1);
    window.assign(out.end() - keep, out.end());
    const auto probs = distribution_from_logits(forward_last(params, window), sampler,
                                                observed);
    TokenId next = 0;
    if (sampler.temperature == 0.0) {
      for (std::uint32_t i = 0; i < probs.size(); ++i) {
        if (probs[i] == 1.0) {
          next = i;
          break;
        }
      }
    } else {
      // inverse CDF: smallest id whose cumulative mass exceeds the draw
      const double r = rng.uniform();
      double cdf = 0.0;
      next = TokenId(probs.size() - 1);
      for (std::uint32_t i = 0; i < probs.size(); ++i) {
        cdf += probs[i];
        if (r < cdf) {
          next = i;
          break;
        }
      }
    }
    out.push_back(next);
  }
  return out;
}

}  // namespace dynlm
