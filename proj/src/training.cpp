#include "dynlm/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "dynlm/common.hpp"
#include "dynlm/io.hpp"
#include "dynlm/rng.hpp"

namespace dynlm {

std::vector<std::vector<WindowRef>> make_batches(
    const std::vector<std::vector<TokenId>>& sequences, std::uint32_t context,
    std::uint32_t stride, std::uint32_t batch_size, std::uint64_t seed) {
  if (context < 1) throw DataError("make_batches: context must be >= 1");
  if (batch_size < 1) throw DataError("make_batches: batch_size must be >= 1");
  if (stride == 0) stride = context;

  std::vector<WindowRef> windows;
  for (std::uint32_t si = 0; si < sequences.size(); ++si) {
    const std::uint64_t len = sequences[si].size();
    const std::uint64_t want = std::uint64_t(context) + 1;
    for (std::uint64_t off = 0; off < len; off += stride) {
      const std::uint64_t have = std::min<std::uint64_t>(want, len - off);
      // a 2-token tail is dropped: windows carry at least 3 tokens
      if (have < 3) break;
      windows.push_back(WindowRef{si, off, std::uint32_t(have)});
      if (have < want) break;  // reached the end of the sequence
    }
  }

  // Fisher-Yates with the project generator
  Rng rng(derive_seed(seed, 0xba7c4));
  for (std::size_t i = windows.size(); i > 1; --i) {
    const std::size_t j = std::size_t(rng.next_u64() % i);
    std::swap(windows[i - 1], windows[j]);
  }

  std::vector<std::vector<WindowRef>> batches;
  for (std::size_t i = 0; i < windows.size(); i += batch_size) {
    const std::size_t end = std::min(windows.size(), i + batch_size);
    batches.emplace_back(windows.begin() + i, windows.begin() + end);
  }
  return batches;
}

OptimizerState OptimizerState::init(const ParameterSet& params, const AdamWHyper& hyper) {
  OptimizerState st;
  st.hyper = hyper;
  st.m.reserve(params.tensors.size());
  st.v.reserve(params.tensors.size());
  for (const auto& t : params.tensors) {
    st.m.emplace_back(t.numel(), 0.0);
    st.v.emplace_back(t.numel(), 0.0);
  }
  return st;
}

void adamw_step(ParameterSet& params, const ParameterSet& grads, OptimizerState& state,
                double grad_clip) {
  if (grads.tensors.size() != params.tensors.size())
    throw DataError("adamw_step: gradient layout mismatch");
  const AdamWHyper& h = state.hyper;
  state.step += 1;
  const double bc1 = 1.0 - std::pow(h.beta1, double(state.step));
  const double bc2 = 1.0 - std::pow(h.beta2, double(state.step));

  double clip_scale = 1.0;
  if (grad_clip > 0.0) {
    double sq = 0.0;
    for (std::size_t ti = 0; ti < params.tensors.size(); ++ti) {
      if (!params.tensors[ti].trainable) continue;
      for (double g : grads.tensors[ti].data) sq += g * g;
    }
    const double norm = std::sqrt(sq);
    if (norm > grad_clip) clip_scale = grad_clip / norm;
  }

  for (std::size_t ti = 0; ti < params.tensors.size(); ++ti) {
    Tensor& t = params.tensors[ti];
    if (!t.trainable) continue;
    const Tensor& g = grads.tensors[ti];
    if (g.data.size() != t.data.size())
      throw DataError("adamw_step: shape mismatch for tensor " + t.name);
    std::vector<double>& m = state.m[ti];
    std::vector<double>& v = state.v[ti];
    const bool decay = t.decay && h.weight_decay != 0.0;
    for (std::size_t i = 0; i < t.data.size(); ++i) {
      const double gi = g.data[i] * clip_scale;
      if (!std::isfinite(gi))
        throw NumericError("non-finite gradient in tensor " + t.name + " at step " +
                           std::to_string(state.step));
      m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * gi;
      v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * gi * gi;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      t.data[i] -= h.lr * mhat / (std::sqrt(vhat) + h.eps);
      if (decay) t.data[i] -= h.lr * h.weight_decay * t.data[i];
    }
  }
}

namespace {

void materialize(const std::vector<std::vector<TokenId>>& seqs, const WindowRef& w,
                 std::vector<TokenId>& input, std::vector<TokenId>& target) {
  const auto& s = seqs[w.seq];
  input.assign(s.begin() + w.offset, s.begin() + w.offset + w.len - 1);
  target.assign(s.begin() + w.offset + 1, s.begin() + w.offset + w.len);
}

}  // namespace

double evaluate_loss(const ParameterSet& params,
                     const std::vector<std::vector<TokenId>>& sequences,
                     std::uint32_t window_cap) {
  const auto batches =
      make_batches(sequences, params.config.context, 0, 1, /*seed=*/0);
  if (batches.empty()) throw DataError("evaluate_loss: no usable windows");
  double total = 0.0;
  std::uint64_t positions = 0;
  std::uint32_t used = 0;
  std::vector<TokenId> input, target;
  for (const auto& batch : batches) {
    for (const auto& w : batch) {
      materialize(sequences, w, input, target);
      const auto logits = forward(params, input);
      total += cross_entropy_loss(logits, input.size(), params.config.vocab,
                                  target.data()) *
               double(input.size());
      positions += input.size();
      if (window_cap != 0 && ++used >= window_cap) break;
    }
    if (window_cap != 0 && used >= window_cap) break;
  }
  return total / double(positions);
}

TrainResult train(const std::vector<std::vector<TokenId>>& train_sequences,
                  const std::vector<std::vector<TokenId>>& eval_sequences,
                  const ModelConfig& config, const AdamWHyper& hyper,
                  const TrainOptions& options) {
  config.validate();
  for (const auto& s : train_sequences) {
    for (TokenId t : s) {
      if (t >= config.vocab)
        throw DataError("train: token id " + std::to_string(t) +
                        " exceeds the configured vocabulary");
    }
  }

  TrainResult result;
  result.params = init_model(config, derive_seed(options.seed, 0x1417));
  OptimizerState opt = OptimizerState::init(result.params, hyper);

  std::FILE* csv = nullptr;
  if (!options.loss_csv_path.empty()) {
    csv = std::fopen(options.loss_csv_path.c_str(), "wb");
    if (!csv) throw DataError("cannot open loss CSV: " + options.loss_csv_path);
    std::fprintf(csv, "step,train_loss,eval_loss\n");
  }
  auto close_csv = [&csv]() {
    if (csv) {
      std::fclose(csv);
      csv = nullptr;
    }
  };

  const bool want_eval = !eval_sequences.empty();
  auto run_eval = [&]() {
    return want_eval
               ? evaluate_loss(result.params, eval_sequences, options.eval_window_cap)
               : std::numeric_limits<double>::quiet_NaN();
  };
  auto write_checkpoint = [&](const std::string& name) {
    if (options.checkpoint_dir.empty()) return std::string();
    std::filesystem::create_directories(options.checkpoint_dir);
    const std::string path = options.checkpoint_dir + "/" + name;
    save_checkpoint(path, Checkpoint{result.params, opt.step, options.seed});
    return path;
  };

  std::vector<TokenId> input, target;
  ParameterSet grads = zero_like(result.params);
  std::uint64_t epoch = 0;
  std::vector<std::vector<WindowRef>> batches;
  std::size_t batch_cursor = 0;

  try {
    while (result.run.steps_completed < options.steps) {
      if (batch_cursor >= batches.size()) {
        batches = make_batches(train_sequences, config.context, options.stride,
                               options.batch_size, derive_seed(options.seed, epoch));
        ++epoch;
        batch_cursor = 0;
        if (batches.empty()) throw DataError("train: no usable training windows");
      }
      const auto& batch = batches[batch_cursor++];

      for (auto& t : grads.tensors) std::fill(t.data.begin(), t.data.end(), 0.0);
      double loss_sum = 0.0;
      std::uint64_t position_sum = 0;
      for (std::size_t bi = 0; bi < batch.size(); ++bi) {
        materialize(train_sequences, batch[bi], input, target);
        const std::uint64_t dropout_seed = derive_seed(
            options.seed, 0xd0 + result.run.steps_completed * 131 + bi);
        const double loss =
            gradients(result.params, input, target, dropout_seed, grads, true);
        loss_sum += loss * double(input.size());
        position_sum += input.size();
      }
      // gradients accumulated per-sequence-mean-scaled; renormalize to the
      // batch position mean
      const double batch_scale = 1.0 / double(batch.size());
      for (auto& t : grads.tensors)
        for (double& g : t.data) g *= batch_scale;
      const double step_loss = loss_sum / double(position_sum);
      if (!std::isfinite(step_loss)) {
        throw NumericError("non-finite training loss at step " +
                           std::to_string(result.run.steps_completed + 1));
      }

      adamw_step(result.params, grads, opt, options.grad_clip);
      result.run.train_loss.push_back(step_loss);
      result.run.steps_completed += 1;

      const bool eval_now = want_eval && options.eval_interval != 0 &&
                            result.run.steps_completed % options.eval_interval == 0;
      double eval_loss = std::numeric_limits<double>::quiet_NaN();
      if (eval_now) {
        eval_loss = run_eval();
        result.run.eval_history.emplace_back(result.run.steps_completed, eval_loss);
      }
      if (csv) {
        if (std::isnan(eval_loss))
          std::fprintf(csv, "%llu,%.17g,\n",
                       (unsigned long long)result.run.steps_completed, step_loss);
        else
          std::fprintf(csv, "%llu,%.17g,%.17g\n",
                       (unsigned long long)result.run.steps_completed, step_loss,
                       eval_loss);
      }
      if (options.verbose && result.run.steps_completed % 100 == 0)
        std::fprintf(stderr, "step %llu loss %.4f\n",
                     (unsigned long long)result.run.steps_completed, step_loss);

      if (options.checkpoint_interval != 0 &&
          result.run.steps_completed % options.checkpoint_interval == 0 &&
          result.run.steps_completed < options.steps) {
        write_checkpoint("step-" + std::to_string(result.run.steps_completed) +
                         ".ckpt");
      }
    }
  } catch (...) {
    close_csv();
    throw;
  }

  if (want_eval) {
    result.run.final_eval = run_eval();
    result.run.eval_history.emplace_back(result.run.steps_completed,
                                         result.run.final_eval);
    if (csv)
      std::fprintf(csv, "%llu,,%.17g\n", (unsigned long long)result.run.steps_completed,
                   result.run.final_eval);
  }
  close_csv();
  result.run.final_checkpoint = write_checkpoint("final.ckpt");
  return result;
}

}  // namespace dynlm
