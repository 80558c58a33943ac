#include "dynlm/transformer.hpp"

#include <cmath>
#include <cstring>

#include "dynlm/common.hpp"
#include "dynlm/linalg.hpp"
#include "dynlm/rng.hpp"

namespace dynlm {

namespace {

constexpr double kLnEps = 1e-5;
// Additive mask; far enough below any reachable score that exp underflows
// to exactly 0 after max subtraction, which is what makes causality
// bit-exact rather than approximate.
constexpr double kMaskValue = -1e30;
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

std::string layer_name(std::uint32_t l, const char* suffix) {
  return "h" + std::to_string(l) + "." + suffix;
}

// Dropout mask streams are labeled by (site, layer) so masks depend only on
// (dropout_seed, site, layer, element index).
enum class DropSite : std::uint64_t { embedding = 1, attn_probs = 2, attn_out = 3, mlp_out = 4 };

std::uint64_t drop_stream(DropSite site, std::uint32_t layer) {
  return (std::uint64_t(site) << 32) | layer;
}

struct Dropout {
  bool active = false;
  double keep_scale = 1.0;
  double p = 0.0;
  std::uint64_t seed = 0;

  std::vector<std::uint8_t> apply(DropSite site, std::uint32_t layer, double* x,
                                  std::size_t n) const {
    if (!active) return {};
    Rng rng(derive_seed(seed, drop_stream(site, layer)));
    std::vector<std::uint8_t> mask(n);
    for (std::size_t i = 0; i < n; ++i) {
      const bool keep = rng.uniform() >= p;
      mask[i] = keep;
      x[i] = keep ? x[i] * keep_scale : 0.0;
    }
    return mask;
  }

  void apply_saved(const std::vector<std::uint8_t>& mask, double* g) const {
    if (!active) return;
    for (std::size_t i = 0; i < mask.size(); ++i) g[i] = mask[i] ? g[i] * keep_scale : 0.0;
  }
};

struct LayerCache {
  std::vector<double> x_in;      // residual stream entering the block [S,D]
  std::vector<double> ln1_out;   // [S,D]
  std::vector<double> ln1_mu, ln1_rstd;
  std::vector<double> q, k, v;   // [S,D]
  std::vector<double> probs;     // [H,S,S]
  std::vector<double> att_mix;   // heads' probs*v, concatenated [S,D]
  std::vector<double> x_mid;     // stream after attention add [S,D]
  std::vector<double> ln2_out;
  std::vector<double> ln2_mu, ln2_rstd;
  std::vector<double> fc_pre;    // [S,4D]
  std::vector<double> fc_erf;    // erf(fc_pre/sqrt2), reused by backward
  std::vector<double> fc_act;    // gelu output [S,4D]
  std::vector<std::uint8_t> drop_probs, drop_att, drop_mlp;
};

struct ForwardCache {
  std::vector<double> h0;  // embedded input after dropout [S,D]
  std::vector<std::uint8_t> drop_emb;
  std::vector<LayerCache> layers;
  std::vector<double> x_final;  // stream before the final norm
  std::vector<double> lnf_out;
  std::vector<double> lnf_mu, lnf_rstd;
  std::vector<double> probs;  // softmax of logits [S,V], for the loss backward
};

void layernorm_forward(const double* x, std::size_t s, std::uint32_t d,
                       const double* gain, const double* bias, double* out, double* mu,
                       double* rstd) {
  for (std::size_t i = 0; i < s; ++i) {
    const double* row = x + i * d;
    double m = 0.0;
    for (std::uint32_t j = 0; j < d; ++j) m += row[j];
    m /= d;
    double var = 0.0;
    for (std::uint32_t j = 0; j < d; ++j) {
      const double c = row[j] - m;
      var += c * c;
    }
    var /= d;
    const double r = 1.0 / std::sqrt(var + kLnEps);
    mu[i] = m;
    rstd[i] = r;
    double* orow = out + i * d;
    for (std::uint32_t j = 0; j < d; ++j) orow[j] = (row[j] - m) * r * gain[j] + bias[j];
  }
}

// dx from dy, also accumulating dgain/dbias
void layernorm_backward(const double* x, const double* dy, std::size_t s,
                        std::uint32_t d, const double* gain, const double* mu,
                        const double* rstd, double* dx, double* dgain, double* dbias) {
  for (std::size_t i = 0; i < s; ++i) {
    const double* xrow = x + i * d;
    const double* dyrow = dy + i * d;
    double* dxrow = dx + i * d;
    const double m = mu[i], r = rstd[i];
    double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
    for (std::uint32_t j = 0; j < d; ++j) {
      const double xhat = (xrow[j] - m) * r;
      const double dxhat = dyrow[j] * gain[j];
      sum_dxhat += dxhat;
      sum_dxhat_xhat += dxhat * xhat;
      dgain[j] += dyrow[j] * xhat;
      dbias[j] += dyrow[j];
    }
    const double inv_d = 1.0 / d;
    for (std::uint32_t j = 0; j < d; ++j) {
      const double xhat = (xrow[j] - m) * r;
      const double dxhat = dyrow[j] * gain[j];
      dxrow[j] = r * (dxhat - inv_d * sum_dxhat - xhat * inv_d * sum_dxhat_xhat);
    }
  }
}

// y = x W + b with W stored [in, out]
void linear_forward(const double* x, std::size_t s, std::uint32_t in, std::uint32_t out,
                    const double* w, const double* b, double* y) {
  linalg::gemm_nn(int(s), int(out), int(in), 1.0, x, int(in), w, int(out), 0.0, y,
                  int(out));
  for (std::size_t i = 0; i < s; ++i) {
    double* row = y + i * out;
    for (std::uint32_t j = 0; j < out; ++j) row[j] += b[j];
  }
}

// accumulates dW, db; writes (or accumulates, per beta) dx
void linear_backward(const double* x, const double* dy, std::size_t s, std::uint32_t in,
                     std::uint32_t out, const double* w, double* dx, double dx_beta,
                     double* dw, double* db) {
  if (dx)
    linalg::gemm_nt(int(s), int(in), int(out), 1.0, dy, int(out), w, int(out), dx_beta,
                    dx, int(in));
  linalg::gemm_tn(int(in), int(out), int(s), 1.0, x, int(in), dy, int(out), 1.0, dw,
                  int(out));
  for (std::size_t i = 0; i < s; ++i) {
    const double* row = dy + i * out;
    for (std::uint32_t j = 0; j < out; ++j) db[j] += row[j];
  }
}

void softmax_rows_masked(double* scores, std::size_t s, std::size_t row_len) {
  for (std::size_t i = 0; i < s; ++i) {
    double* row = scores + i * row_len;
    double mx = row[0];
    for (std::size_t j = 1; j < row_len; ++j) mx = std::fmax(mx, row[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < row_len; ++j) {
      row[j] = std::exp(row[j] - mx);
      sum += row[j];
    }
    const double inv = 1.0 / sum;
    for (std::size_t j = 0; j < row_len; ++j) row[j] *= inv;
  }
}

struct RunConfig {
  bool training = false;
  std::uint64_t dropout_seed = 0;
  bool last_only = false;   // logits for the final position only
  bool need_probs = false;  // keep softmax(logits) for the loss backward
};

// Returns logits: [S,V] or [1,V] when last_only.
std::vector<double> run_forward(const ParameterSet& params,
                                const std::vector<TokenId>& tokens, ForwardCache* cache,
                                const RunConfig& rc) {
  const ModelConfig& cfg = params.config;
  const std::size_t s = tokens.size();
  if (s == 0) throw DataError("forward: empty token sequence");
  if (s > cfg.context)
    throw DataError("forward: sequence length " + std::to_string(s) +
                    " exceeds context " + std::to_string(cfg.context));
  for (TokenId t : tokens) {
    if (t >= cfg.vocab)
      throw DataError("forward: token id " + std::to_string(t) + " >= vocabulary " +
                      std::to_string(cfg.vocab));
  }
  const std::uint32_t d = cfg.dim, hds = cfg.heads, dh = d / hds, v = cfg.vocab;
  const double scale = 1.0 / std::sqrt(double(dh));

  Dropout drop;
  drop.active = rc.training && cfg.dropout > 0.0;
  drop.p = cfg.dropout;
  drop.keep_scale = drop.active ? 1.0 / (1.0 - cfg.dropout) : 1.0;
  drop.seed = rc.dropout_seed;

  const Tensor& tok_emb = params.tensor("tok_emb");
  const Tensor& pos_emb = params.tensor("pos_emb");

  std::vector<double> x(s * d);
  for (std::size_t i = 0; i < s; ++i) {
    const double* te = tok_emb.data.data() + std::size_t(tokens[i]) * d;
    const double* pe = pos_emb.data.data() + i * d;
    double* row = x.data() + i * d;
    for (std::uint32_t j = 0; j < d; ++j) row[j] = te[j] + pe[j];
  }
  {
    auto mask = drop.apply(DropSite::embedding, 0, x.data(), x.size());
    if (cache) cache->drop_emb = std::move(mask);
  }
  if (cache) {
    cache->h0 = x;
    cache->layers.resize(cfg.layers);
  }

  std::vector<double> scores(s * s);
  for (std::uint32_t l = 0; l < cfg.layers; ++l) {
    LayerCache* lc = cache ? &cache->layers[l] : nullptr;
    if (lc) lc->x_in = x;

    const Tensor& ln1g = params.tensor(layer_name(l, "ln1.g"));
    const Tensor& ln1b = params.tensor(layer_name(l, "ln1.b"));
    std::vector<double> a(s * d), mu(s), rstd(s);
    layernorm_forward(x.data(), s, d, ln1g.data.data(), ln1b.data.data(), a.data(),
                      mu.data(), rstd.data());

    std::vector<double> q(s * d), k(s * d), vv(s * d);
    linear_forward(a.data(), s, d, d, params.tensor(layer_name(l, "attn.q_w")).data.data(),
                   params.tensor(layer_name(l, "attn.q_b")).data.data(), q.data());
    linear_forward(a.data(), s, d, d, params.tensor(layer_name(l, "attn.k_w")).data.data(),
                   params.tensor(layer_name(l, "attn.k_b")).data.data(), k.data());
    linear_forward(a.data(), s, d, d, params.tensor(layer_name(l, "attn.v_w")).data.data(),
                   params.tensor(layer_name(l, "attn.v_b")).data.data(), vv.data());

    std::vector<double> mix(s * d);
    std::vector<double> probs_all;
    if (lc) probs_all.resize(std::size_t(hds) * s * s);
    for (std::uint32_t h = 0; h < hds; ++h) {
      const double* qh = q.data() + h * dh;
      const double* kh = k.data() + h * dh;
      const double* vh = vv.data() + h * dh;
      linalg::gemm_nt(int(s), int(s), int(dh), scale, qh, int(d), kh, int(d), 0.0,
                      scores.data(), int(s));
      for (std::size_t i = 0; i < s; ++i) {
        double* row = scores.data() + i * s;
        for (std::size_t j = i + 1; j < s; ++j) row[j] += kMaskValue;
      }
      softmax_rows_masked(scores.data(), s, s);
      if (drop.active) {
        auto mask = drop.apply(DropSite::attn_probs, l * hds + h, scores.data(),
                               scores.size());
        if (lc) {
          lc->drop_probs.insert(lc->drop_probs.end(), mask.begin(), mask.end());
        }
      }
      if (lc)
        std::memcpy(probs_all.data() + std::size_t(h) * s * s, scores.data(),
                    sizeof(double) * s * s);
      linalg::gemm_nn(int(s), int(dh), int(s), 1.0, scores.data(), int(s), vh, int(d),
                      0.0, mix.data() + h * dh, int(d));
    }

    std::vector<double> att(s * d);
    linear_forward(mix.data(), s, d, d, params.tensor(layer_name(l, "attn.o_w")).data.data(),
                   params.tensor(layer_name(l, "attn.o_b")).data.data(), att.data());
    {
      auto mask = drop.apply(DropSite::attn_out, l, att.data(), att.size());
      if (lc) lc->drop_att = std::move(mask);
    }
    for (std::size_t i = 0; i < s * d; ++i) x[i] += att[i];
    if (lc) {
      lc->ln1_out = std::move(a);
      lc->ln1_mu = std::move(mu);
      lc->ln1_rstd = std::move(rstd);
      lc->q = std::move(q);
      lc->k = std::move(k);
      lc->v = std::move(vv);
      lc->probs = std::move(probs_all);
      lc->att_mix = std::move(mix);
      lc->x_mid = x;
    }

    const Tensor& ln2g = params.tensor(layer_name(l, "ln2.g"));
    const Tensor& ln2b = params.tensor(layer_name(l, "ln2.b"));
    std::vector<double> a2(s * d), mu2(s), rstd2(s);
    layernorm_forward(x.data(), s, d, ln2g.data.data(), ln2b.data.data(), a2.data(),
                      mu2.data(), rstd2.data());

    const std::uint32_t dff = 4 * d;
    std::vector<double> pre(s * dff);
    linear_forward(a2.data(), s, d, dff, params.tensor(layer_name(l, "mlp.fc_w")).data.data(),
                   params.tensor(layer_name(l, "mlp.fc_b")).data.data(), pre.data());
    std::vector<double> act(s * dff);
    std::vector<double> erf_vals;
    if (lc) erf_vals.resize(s * dff);
    for (std::size_t i = 0; i < s * dff; ++i) {
      const double e = std::erf(pre[i] * kInvSqrt2);
      if (lc) erf_vals[i] = e;
      act[i] = 0.5 * pre[i] * (1.0 + e);
    }
    std::vector<double> ff(s * d);
    linear_forward(act.data(), s, dff, d, params.tensor(layer_name(l, "mlp.proj_w")).data.data(),
                   params.tensor(layer_name(l, "mlp.proj_b")).data.data(), ff.data());
    {
      auto mask = drop.apply(DropSite::mlp_out, l, ff.data(), ff.size());
      if (lc) lc->drop_mlp = std::move(mask);
    }
    for (std::size_t i = 0; i < s * d; ++i) x[i] += ff[i];
    if (lc) {
      lc->ln2_out = std::move(a2);
      lc->ln2_mu = std::move(mu2);
      lc->ln2_rstd = std::move(rstd2);
      lc->fc_pre = std::move(pre);
      lc->fc_erf = std::move(erf_vals);
      lc->fc_act = std::move(act);
    }
  }

  if (cache) cache->x_final = x;
  const Tensor& lnfg = params.tensor("ln_f.g");
  const Tensor& lnfb = params.tensor("ln_f.b");
  const std::size_t out_rows = rc.last_only ? 1 : s;
  const double* norm_src = x.data() + (rc.last_only ? (s - 1) * d : 0);
  std::vector<double> hf(out_rows * d), muf(out_rows), rstdf(out_rows);
  layernorm_forward(norm_src, out_rows, d, lnfg.data.data(), lnfb.data.data(), hf.data(),
                    muf.data(), rstdf.data());
  if (cache) {
    cache->lnf_out = hf;
    cache->lnf_mu = std::move(muf);
    cache->lnf_rstd = std::move(rstdf);
  }

  const Tensor& head =
      cfg.tie_embeddings ? params.tensor("tok_emb") : params.tensor("head_w");
  std::vector<double> logits(out_rows * v);
  linalg::gemm_nt(int(out_rows), int(v), int(d), 1.0, hf.data(), int(d),
                  head.data.data(), int(d), 0.0, logits.data(), int(v));
  return logits;
}

}  // namespace

void ModelConfig::validate() const {
  if (vocab < 2) throw DataError("model config: vocabulary must be >= 2");
  if (context < 1) throw DataError("model config: context must be >= 1");
  if (dim == 0 || layers == 0 || heads == 0)
    throw DataError("model config: dim, layers, heads must be positive");
  if (dim % heads != 0) throw DataError("model config: dim must be divisible by heads");
  if (!(dropout >= 0.0 && dropout < 1.0))
    throw DataError("model config: dropout must be in [0, 1)");
}

std::uint64_t ModelConfig::param_count() const {
  const std::uint64_t d = dim, v = vocab, c = context, l = layers;
  std::uint64_t per_layer = 4 * d          // two layer norms
                            + 4 * (d * d + d)  // q, k, v, output projections
                            + (d * 4 * d + 4 * d) + (4 * d * d + d);  // feed-forward
  std::uint64_t total = v * d + c * d + l * per_layer + 2 * d;
  if (!tie_embeddings) total += v * d;
  return total;
}

Tensor& ParameterSet::tensor(std::string_view name) {
  for (auto& t : tensors) {
    if (t.name == name) return t;
  }
  throw DataError("no tensor named \"" + std::string(name) + "\"");
}

const Tensor& ParameterSet::tensor(std::string_view name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return t;
  }
  throw DataError("no tensor named \"" + std::string(name) + "\"");
}

bool ParameterSet::has_tensor(std::string_view name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return true;
  }
  return false;
}

std::uint64_t ParameterSet::total_parameters() const {
  std::uint64_t n = 0;
  for (const auto& t : tensors) n += t.numel();
  return n;
}

ParameterSet init_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  const std::uint32_t d = config.dim, v = config.vocab, c = config.context;
  ParameterSet ps;
  ps.config = config;
  Rng rng(derive_seed(seed, 0x1a17));

  auto add = [&ps](std::string name, std::vector<std::uint32_t> shape, bool decay) -> Tensor& {
    Tensor t;
    t.name = std::move(name);
    t.shape = std::move(shape);
    t.data.assign(t.numel(), 0.0);
    t.decay = decay;
    ps.tensors.push_back(std::move(t));
    return ps.tensors.back();
  };
  auto fill_normal = [&rng](Tensor& t, double stddev) {
    for (double& x : t.data) x = rng.normal(0.0, stddev);
  };

  const double std_base = 0.02;
  // residual branches sum over 2L projections; shrink them to keep the
  // stream's variance independent of depth
  const double std_resid = std_base / std::sqrt(2.0 * config.layers);

  fill_normal(add("tok_emb", {v, d}, true), std_base);
  Tensor& pos = add("pos_emb", {c, d}, true);
  if (config.sinusoidal_positions) {
    pos.trainable = false;
    for (std::uint32_t p = 0; p < c; ++p) {
      for (std::uint32_t j = 0; j < d; ++j) {
        const double rate = std::pow(10000.0, -2.0 * double(j / 2) / double(d));
        pos.data[std::size_t(p) * d + j] =
            (j % 2 == 0) ? std::sin(p * rate) : std::cos(p * rate);
      }
    }
  } else {
    fill_normal(pos, std_base);
  }
  for (std::uint32_t l = 0; l < config.layers; ++l) {
    Tensor& ln1g = add(layer_name(l, "ln1.g"), {d}, false);
    ln1g.data.assign(d, 1.0);
    add(layer_name(l, "ln1.b"), {d}, false);
    fill_normal(add(layer_name(l, "attn.q_w"), {d, d}, true), std_base);
    add(layer_name(l, "attn.q_b"), {d}, false);
    fill_normal(add(layer_name(l, "attn.k_w"), {d, d}, true), std_base);
    add(layer_name(l, "attn.k_b"), {d}, false);
    fill_normal(add(layer_name(l, "attn.v_w"), {d, d}, true), std_base);
    add(layer_name(l, "attn.v_b"), {d}, false);
    fill_normal(add(layer_name(l, "attn.o_w"), {d, d}, true), std_resid);
    add(layer_name(l, "attn.o_b"), {d}, false);
    Tensor& ln2g = add(layer_name(l, "ln2.g"), {d}, false);
    ln2g.data.assign(d, 1.0);
    add(layer_name(l, "ln2.b"), {d}, false);
    fill_normal(add(layer_name(l, "mlp.fc_w"), {d, 4 * d}, true), std_base);
    add(layer_name(l, "mlp.fc_b"), {4 * d}, false);
    fill_normal(add(layer_name(l, "mlp.proj_w"), {4 * d, d}, true), std_resid);
    add(layer_name(l, "mlp.proj_b"), {d}, false);
  }
  Tensor& lnfg = add("ln_f.g", {d}, false);
  lnfg.data.assign(d, 1.0);
  add("ln_f.b", {d}, false);
  if (!config.tie_embeddings) fill_normal(add("head_w", {v, d}, true), std_base);
  return ps;
}

ParameterSet zero_like(const ParameterSet& params) {
  ParameterSet z;
  z.config = params.config;
  z.tensors.reserve(params.tensors.size());
  for (const auto& t : params.tensors) {
    Tensor g;
    g.name = t.name;
    g.shape = t.shape;
    g.decay = t.decay;
    g.trainable = t.trainable;
    g.data.assign(t.numel(), 0.0);
    z.tensors.push_back(std::move(g));
  }
  return z;
}

std::vector<double> forward(const ParameterSet& params,
                            const std::vector<TokenId>& tokens) {
  return run_forward(params, tokens, nullptr, RunConfig{});
}

std::vector<double> forward_last(const ParameterSet& params,
                                 const std::vector<TokenId>& tokens) {
  RunConfig rc;
  rc.last_only = true;
  return run_forward(params, tokens, nullptr, rc);
}

double cross_entropy_loss(const std::vector<double>& logits, std::size_t positions,
                          std::uint32_t vocab, const TokenId* targets) {
  if (positions == 0) throw DataError("cross_entropy_loss: no positions");
  if (logits.size() != positions * vocab)
    throw DataError("cross_entropy_loss: logits shape mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < positions; ++i) {
    const double* row = logits.data() + i * vocab;
    if (targets[i] >= vocab) throw DataError("cross_entropy_loss: target out of range");
    double mx = row[0];
    for (std::uint32_t j = 1; j < vocab; ++j) mx = std::fmax(mx, row[j]);
    double sum = 0.0;
    for (std::uint32_t j = 0; j < vocab; ++j) sum += std::exp(row[j] - mx);
    total += std::log(sum) - (row[targets[i]] - mx);
  }
  return total / double(positions);
}

namespace {

double run_backward(const ParameterSet& params, const std::vector<TokenId>& tokens,
                    const std::vector<TokenId>& targets, std::uint64_t dropout_seed,
                    ParameterSet* grads, bool train_mode) {
  const ModelConfig& cfg = params.config;
  const std::size_t s = tokens.size();
  if (targets.size() != s) throw DataError("gradients: target length mismatch");
  const std::uint32_t d = cfg.dim, hds = cfg.heads, dh = d / hds, v = cfg.vocab;
  const std::uint32_t dff = 4 * d;
  const double scale = 1.0 / std::sqrt(double(dh));

  ForwardCache cache;
  RunConfig rc;
  rc.training = train_mode;
  rc.dropout_seed = dropout_seed;
  std::vector<double> logits = run_forward(params, tokens, &cache, rc);
  const double loss = cross_entropy_loss(logits, s, v, targets.data());
  if (!grads) return loss;

  Dropout drop;
  drop.active = train_mode && cfg.dropout > 0.0;
  drop.p = cfg.dropout;
  drop.keep_scale = drop.active ? 1.0 / (1.0 - cfg.dropout) : 1.0;
  drop.seed = dropout_seed;

  // d(mean CE)/d(logits) = (softmax - onehot) / S
  std::vector<double> dlogits(std::move(logits));
  const double inv_s = 1.0 / double(s);
  for (std::size_t i = 0; i < s; ++i) {
    double* row = dlogits.data() + i * v;
    double mx = row[0];
    for (std::uint32_t j = 1; j < v; ++j) mx = std::fmax(mx, row[j]);
    double sum = 0.0;
    for (std::uint32_t j = 0; j < v; ++j) {
      row[j] = std::exp(row[j] - mx);
      sum += row[j];
    }
    const double inv = 1.0 / sum;
    for (std::uint32_t j = 0; j < v; ++j) row[j] *= inv * inv_s;
    row[targets[i]] -= inv_s;
  }

  const Tensor& head =
      cfg.tie_embeddings ? params.tensor("tok_emb") : params.tensor("head_w");
  Tensor& dhead = cfg.tie_embeddings ? grads->tensor("tok_emb") : grads->tensor("head_w");

  // logits = lnf_out * head^T
  std::vector<double> dlnf(s * d);
  linalg::gemm_nn(int(s), int(d), int(v), 1.0, dlogits.data(), int(v),
                  head.data.data(), int(d), 0.0, dlnf.data(), int(d));
  linalg::gemm_tn(int(v), int(d), int(s), 1.0, dlogits.data(), int(v),
                  cache.lnf_out.data(), int(d), 1.0, dhead.data.data(), int(d));

  std::vector<double> dx(s * d);
  layernorm_backward(cache.x_final.data(), dlnf.data(), s, d,
                     params.tensor("ln_f.g").data.data(), cache.lnf_mu.data(),
                     cache.lnf_rstd.data(), dx.data(),
                     grads->tensor("ln_f.g").data.data(),
                     grads->tensor("ln_f.b").data.data());

  std::vector<double> dscores(s * s);
  for (std::uint32_t li = cfg.layers; li-- > 0;) {
    const LayerCache& lc = cache.layers[li];

    // feed-forward branch: dx splits into the residual passthrough and the
    // branch gradient
    std::vector<double> dff_out = dx;  // gradient at the branch output
    drop.apply_saved(lc.drop_mlp, dff_out.data());

    std::vector<double> dact(s * dff);
    linear_backward(lc.fc_act.data(), dff_out.data(), s, dff, d,
                    params.tensor(layer_name(li, "mlp.proj_w")).data.data(), dact.data(),
                    0.0, grads->tensor(layer_name(li, "mlp.proj_w")).data.data(),
                    grads->tensor(layer_name(li, "mlp.proj_b")).data.data());
    // gelu'(x) = 0.5 (1 + erf(x/sqrt2)) + x phi(x)
    std::vector<double> dpre(s * dff);
    for (std::size_t i = 0; i < s * dff; ++i) {
      const double xv = lc.fc_pre[i];
      const double pdf = kInvSqrt2Pi * std::exp(-0.5 * xv * xv);
      dpre[i] = dact[i] * (0.5 * (1.0 + lc.fc_erf[i]) + xv * pdf);
    }
    std::vector<double> dln2(s * d);
    linear_backward(lc.ln2_out.data(), dpre.data(), s, d, dff,
                    params.tensor(layer_name(li, "mlp.fc_w")).data.data(), dln2.data(),
                    0.0, grads->tensor(layer_name(li, "mlp.fc_w")).data.data(),
                    grads->tensor(layer_name(li, "mlp.fc_b")).data.data());
    // += : residual passthrough keeps dx, branch adds through the norm
    {
      std::vector<double> dmid(s * d);
      layernorm_backward(lc.x_mid.data(), dln2.data(), s, d,
                         params.tensor(layer_name(li, "ln2.g")).data.data(),
                         lc.ln2_mu.data(), lc.ln2_rstd.data(), dmid.data(),
                         grads->tensor(layer_name(li, "ln2.g")).data.data(),
                         grads->tensor(layer_name(li, "ln2.b")).data.data());
      for (std::size_t i = 0; i < s * d; ++i) dx[i] += dmid[i];
    }

    // attention branch
    std::vector<double> datt = dx;
    drop.apply_saved(lc.drop_att, datt.data());

    std::vector<double> dmix(s * d);
    linear_backward(lc.att_mix.data(), datt.data(), s, d, d,
                    params.tensor(layer_name(li, "attn.o_w")).data.data(), dmix.data(),
                    0.0, grads->tensor(layer_name(li, "attn.o_w")).data.data(),
                    grads->tensor(layer_name(li, "attn.o_b")).data.data());

    std::vector<double> dq(s * d, 0.0), dk(s * d, 0.0), dv(s * d, 0.0);
    for (std::uint32_t h = 0; h < hds; ++h) {
      const double* probs = lc.probs.data() + std::size_t(h) * s * s;
      const double* vh = lc.v.data() + h * dh;
      const double* qh = lc.q.data() + h * dh;
      const double* kh = lc.k.data() + h * dh;
      // dV_h = P^T dMix_h
      linalg::gemm_tn(int(s), int(dh), int(s), 1.0, probs, int(s), dmix.data() + h * dh,
                      int(d), 0.0, dv.data() + h * dh, int(d));
      // dP = dMix_h V_h^T
      linalg::gemm_nt(int(s), int(s), int(dh), 1.0, dmix.data() + h * dh, int(d), vh,
                      int(d), 0.0, dscores.data(), int(s));
      if (drop.active) {
        const std::uint8_t* mask = lc.drop_probs.data() + std::size_t(h) * s * s;
        for (std::size_t i = 0; i < s * s; ++i)
          dscores[i] = mask[i] ? dscores[i] * drop.keep_scale : 0.0;
      }
      // softmax backward: dS = P (dP - rowsum(P dP)); masked entries have
      // P = 0 exactly, so their dS vanishes with no special casing
      for (std::size_t i = 0; i < s; ++i) {
        double* drow = dscores.data() + i * s;
        const double* prow = probs + i * s;
        double dot = 0.0;
        for (std::size_t j = 0; j < s; ++j) dot += prow[j] * drow[j];
        for (std::size_t j = 0; j < s; ++j) drow[j] = prow[j] * (drow[j] - dot);
      }
      // dQ_h = scale dS K_h ; dK_h = scale dS^T Q_h
      linalg::gemm_nn(int(s), int(dh), int(s), scale, dscores.data(), int(s), kh, int(d),
                      0.0, dq.data() + h * dh, int(d));
      linalg::gemm_tn(int(s), int(dh), int(s), scale, dscores.data(), int(s), qh, int(d),
                      0.0, dk.data() + h * dh, int(d));
    }

    std::vector<double> dln1(s * d);
    linear_backward(lc.ln1_out.data(), dq.data(), s, d, d,
                    params.tensor(layer_name(li, "attn.q_w")).data.data(), dln1.data(),
                    0.0, grads->tensor(layer_name(li, "attn.q_w")).data.data(),
                    grads->tensor(layer_name(li, "attn.q_b")).data.data());
    linear_backward(lc.ln1_out.data(), dk.data(), s, d, d,
                    params.tensor(layer_name(li, "attn.k_w")).data.data(), dln1.data(),
                    1.0, grads->tensor(layer_name(li, "attn.k_w")).data.data(),
                    grads->tensor(layer_name(li, "attn.k_b")).data.data());
    linear_backward(lc.ln1_out.data(), dv.data(), s, d, d,
                    params.tensor(layer_name(li, "attn.v_w")).data.data(), dln1.data(),
                    1.0, grads->tensor(layer_name(li, "attn.v_w")).data.data(),
                    grads->tensor(layer_name(li, "attn.v_b")).data.data());
    {
      std::vector<double> din(s * d);
      layernorm_backward(lc.x_in.data(), dln1.data(), s, d,
                         params.tensor(layer_name(li, "ln1.g")).data.data(),
                         lc.ln1_mu.data(), lc.ln1_rstd.data(), din.data(),
                         grads->tensor(layer_name(li, "ln1.g")).data.data(),
                         grads->tensor(layer_name(li, "ln1.b")).data.data());
      for (std::size_t i = 0; i < s * d; ++i) dx[i] += din[i];
    }
  }

  // embedding gradients
  drop.apply_saved(cache.drop_emb, dx.data());
  Tensor& dtok = grads->tensor("tok_emb");
  for (std::size_t i = 0; i < s; ++i) {
    double* dst = dtok.data.data() + std::size_t(tokens[i]) * d;
    const double* src = dx.data() + i * d;
    for (std::uint32_t j = 0; j < d; ++j) dst[j] += src[j];
  }
  if (params.tensor("pos_emb").trainable) {
    Tensor& dpos = grads->tensor("pos_emb");
    for (std::size_t i = 0; i < s; ++i) {
      double* dst = dpos.data.data() + i * d;
      const double* src = dx.data() + i * d;
      for (std::uint32_t j = 0; j < d; ++j) dst[j] += src[j];
    }
  }
  return loss;
}

}  // namespace

double gradients(const ParameterSet& params, const std::vector<TokenId>& tokens,
                 const std::vector<TokenId>& targets, std::uint64_t dropout_seed,
                 ParameterSet& grads, bool train_mode) {
  return run_backward(params, tokens, targets, dropout_seed, &grads, train_mode);
}

double training_loss(const ParameterSet& params, const std::vector<TokenId>& tokens,
                     const std::vector<TokenId>& targets, std::uint64_t dropout_seed) {
  return run_backward(params, tokens, targets, dropout_seed, nullptr, true);
}

}  // namespace dynlm
