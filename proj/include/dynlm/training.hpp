#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "dynlm/transformer.hpp"

namespace dynlm {

// A window into one stored sequence: `len` tokens starting at `offset`.
// Input = tokens[0..len-1), target = tokens[1..len).
struct WindowRef {
  std::uint32_t seq = 0;
  std::uint64_t offset = 0;
  std::uint32_t len = 0;
};

// Cuts every sequence into windows of length context+1 at the given stride
// (stride 0 means stride = context), drops windows shorter than 3 tokens,
// shuffles deterministically by seed, groups into batches keeping the
// incomplete final batch.
std::vector<std::vector<WindowRef>> make_batches(
    const std::vector<std::vector<TokenId>>& sequences, std::uint32_t context,
    std::uint32_t stride, std::uint32_t batch_size, std::uint64_t seed);

struct AdamWHyper {
  double lr = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

struct OptimizerState {
  AdamWHyper hyper;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> m, v;  // aligned with params.tensors

  static OptimizerState init(const ParameterSet& params, const AdamWHyper& hyper);
};

// Decoupled update: moments from raw gradients, decay applied directly to
// the parameter. Decay skips biases and layer-norm tensors (tensor.decay
// legend) and frozen tensors are untouched. grad_clip > 0 rescales the
// global gradient norm to that bound first. Throws NumericError on a
// non-finite gradient, naming the step.
void adamw_step(ParameterSet& params, const ParameterSet& grads, OptimizerState& state,
                double grad_clip = 0.0);

struct TrainOptions {
  std::uint32_t batch_size = 2;
  std::uint32_t stride = 0;  // 0 -> context
  std::uint64_t steps = 2000;
  std::uint32_t eval_interval = 0;        // 0 -> evaluate only at the end
  std::uint32_t checkpoint_interval = 0;  // 0 -> only the final checkpoint
  std::uint32_t eval_window_cap = 64;     // held-out windows per evaluation
  std::uint64_t seed = 1;
  double grad_clip = 0.0;  // off by default
  std::string checkpoint_dir;  // empty -> keep everything in memory
  std::string loss_csv_path;   // empty -> no CSV
  bool deterministic = true;   // recorded in outputs; the pipeline is
                               // deterministic by construction either way
  bool verbose = false;
};

struct TrainRun {
  std::vector<double> train_loss;  // one entry per completed step
  std::vector<std::pair<std::uint64_t, double>> eval_history;
  double final_eval = std::numeric_limits<double>::quiet_NaN();
  std::string final_checkpoint;  // empty when checkpoint_dir unset
  std::uint64_t steps_completed = 0;
};

struct TrainResult {
  ParameterSet params;
  TrainRun run;
};

// Full loop: make_batches -> gradients -> adamw_step, cycling epochs with
// per-epoch reshuffles. Evaluation runs with dropout off. Checkpoints are
// written atomically; on a non-finite loss the last good checkpoint is
// left in place and NumericError is thrown.
TrainResult train(const std::vector<std::vector<TokenId>>& train_sequences,
                  const std::vector<std::vector<TokenId>>& eval_sequences,
                  const ModelConfig& config, const AdamWHyper& hyper,
                  const TrainOptions& options);

// Mean next-token cross-entropy over windows of the given sequences,
// dropout off. Used for held-out reporting.
double evaluate_loss(const ParameterSet& params,
                     const std::vector<std::vector<TokenId>>& sequences,
                     std::uint32_t window_cap = 0);

}  // namespace dynlm
