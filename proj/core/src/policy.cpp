#include "ton/policy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "kernels.hpp"
#include "ton/rng.hpp"

namespace ton {

void PolicyConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("PolicyConfig: " + what); };
  if (vocab_size < 2) fail("vocab_size must be >= 2");
  if (embed_dim < 1 || n_layers < 1 || n_heads < 1 || max_context < 2 || mlp_hidden < 1) {
    fail("all sizes must be positive");
  }
  if (embed_dim % n_heads != 0) fail("embed_dim must be divisible by n_heads");
  if (!(init_std > 0.0)) fail("init_std must be positive");
}

void DecodingConfig::validate() const {
  if (!(temperature > 0.0)) throw std::invalid_argument("DecodingConfig: temperature must be > 0");
  if (max_new_tokens < 1) throw std::invalid_argument("DecodingConfig: max_new_tokens must be >= 1");
}

// ---------------------------------------------------------------- params

PolicyParams PolicyParams::zeros(const PolicyConfig& config) {
  config.validate();
  const auto d = static_cast<std::size_t>(config.embed_dim);
  const auto dh = static_cast<std::size_t>(config.head_dim());
  const auto hidden = static_cast<std::size_t>(config.mlp_hidden);
  const auto vocab = static_cast<std::size_t>(config.vocab_size);

  PolicyParams p;
  p.config_ = config;
  p.token_embedding = Tensor::zeros(vocab, d);
  p.position_embedding = Tensor::zeros(static_cast<std::size_t>(config.max_context), d);
  for (int b = 0; b < config.n_layers; ++b) {
    BlockParams blk;
    blk.ln1_gain = Tensor::row(std::vector<double>(d, 1.0));
    blk.ln1_bias = Tensor::zeros(1, d);
    for (int h = 0; h < config.n_heads; ++h) {
      blk.heads.push_back({Tensor::zeros(d, dh), Tensor::zeros(d, dh), Tensor::zeros(d, dh),
                           Tensor::zeros(dh, d)});
    }
    blk.attn_bias = Tensor::zeros(1, d);
    blk.ln2_gain = Tensor::row(std::vector<double>(d, 1.0));
    blk.ln2_bias = Tensor::zeros(1, d);
    blk.mlp_in = Tensor::zeros(d, hidden);
    blk.mlp_in_bias = Tensor::zeros(1, hidden);
    blk.mlp_out = Tensor::zeros(hidden, d);
    blk.mlp_out_bias = Tensor::zeros(1, d);
    p.blocks.push_back(std::move(blk));
  }
  p.final_gain = Tensor::row(std::vector<double>(d, 1.0));
  p.final_bias = Tensor::zeros(1, d);
  p.unembed = Tensor::zeros(d, vocab);
  p.unembed_bias = Tensor::zeros(1, vocab);
  return p;
}

PolicyParams PolicyParams::init(const PolicyConfig& config, std::uint64_t seed) {
  PolicyParams p = zeros(config);
  Rng rng(seed);
  auto gaussian = [&](Tensor& t) {
    for (double& v : t.data) v = config.init_std * rng.normal();
  };
  gaussian(p.token_embedding);
  gaussian(p.position_embedding);
  for (BlockParams& blk : p.blocks) {
    for (AttentionHead& h : blk.heads) {
      gaussian(h.wq);
      gaussian(h.wk);
      gaussian(h.wv);
      gaussian(h.wo);
    }
    gaussian(blk.mlp_in);
    gaussian(blk.mlp_out);
  }
  gaussian(p.unembed);
  return p;
}

void PolicyParams::for_each(const std::function<void(std::string_view, Tensor&)>& fn) {
  fn("token_embedding", token_embedding);
  fn("position_embedding", position_embedding);
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    BlockParams& blk = blocks[b];
    const std::string pre = "blocks." + std::to_string(b) + ".";
    fn(pre + "ln1_gain", blk.ln1_gain);
    fn(pre + "ln1_bias", blk.ln1_bias);
    for (std::size_t h = 0; h < blk.heads.size(); ++h) {
      const std::string hp = pre + "heads." + std::to_string(h) + ".";
      fn(hp + "wq", blk.heads[h].wq);
      fn(hp + "wk", blk.heads[h].wk);
      fn(hp + "wv", blk.heads[h].wv);
      fn(hp + "wo", blk.heads[h].wo);
    }
    fn(pre + "attn_bias", blk.attn_bias);
    fn(pre + "ln2_gain", blk.ln2_gain);
    fn(pre + "ln2_bias", blk.ln2_bias);
    fn(pre + "mlp_in", blk.mlp_in);
    fn(pre + "mlp_in_bias", blk.mlp_in_bias);
    fn(pre + "mlp_out", blk.mlp_out);
    fn(pre + "mlp_out_bias", blk.mlp_out_bias);
  }
  fn("final_gain", final_gain);
  fn("final_bias", final_bias);
  fn("unembed", unembed);
  fn("unembed_bias", unembed_bias);
}

void PolicyParams::for_each(const std::function<void(std::string_view, const Tensor&)>& fn) const {
  const_cast<PolicyParams*>(this)->for_each(
      [&](std::string_view name, Tensor& t) { fn(name, t); });
}

std::size_t PolicyParams::parameter_count() const {
  std::size_t n = 0;
  for_each([&](std::string_view, const Tensor& t) { n += t.size(); });
  return n;
}

void PolicyParams::zero_grad() {
  for_each([](std::string_view, Tensor& t) { t.zero_grad(); });
}

FrozenPolicy snapshot(const PolicyParams& params) {
  auto copy = std::make_shared<PolicyParams>(params);
  copy->for_each([](std::string_view, Tensor& t) { t.grad.clear(); });
  return copy;
}

double parameter_distance(const PolicyParams& a, const PolicyParams& b) {
  std::vector<const Tensor*> lhs;
  a.for_each([&](std::string_view, const Tensor& t) { lhs.push_back(&t); });
  std::size_t i = 0;
  double total = 0.0;
  b.for_each([&](std::string_view name, const Tensor& t) {
    if (i >= lhs.size() || lhs[i]->shape != t.shape) {
      throw ShapeError("parameter_distance: mismatched tensor " + std::string(name));
    }
    for (std::size_t k = 0; k < t.size(); ++k) {
      const double d = lhs[i]->data[k] - t.data[k];
      total += d * d;
    }
    ++i;
  });
  return std::sqrt(total);
}

// ---------------------------------------------------------------- forward

namespace {

void check_context(const PolicyConfig& cfg, std::span<const int> context) {
  if (context.empty()) throw std::invalid_argument("forward_logits: empty context");
  if (context.size() > static_cast<std::size_t>(cfg.max_context)) {
    throw ContextOverflow("forward_logits: context of " + std::to_string(context.size()) +
                          " tokens exceeds max_context " + std::to_string(cfg.max_context));
  }
  for (int t : context) {
    if (t < 0 || t >= cfg.vocab_size) {
      throw std::out_of_range("forward_logits: token " + std::to_string(t) + " outside vocabulary");
    }
  }
}

template <typename Bind>
Var forward_impl(const PolicyParams& p, std::span<const int> context, Bind bind) {
  const PolicyConfig& cfg = p.config();
  check_context(cfg, context);
  std::vector<int> positions(context.size());
  for (std::size_t i = 0; i < positions.size(); ++i) positions[i] = static_cast<int>(i);

  Var x = ops::add(ops::embedding(bind(p.token_embedding), context),
                   ops::embedding(bind(p.position_embedding), positions));
  const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.head_dim()));
  for (const BlockParams& blk : p.blocks) {
    Var h = ops::layer_norm(x, bind(blk.ln1_gain), bind(blk.ln1_bias));
    Var attn{};
    for (const AttentionHead& head : blk.heads) {
      Var q = ops::matmul(h, bind(head.wq));
      Var k = ops::matmul(h, bind(head.wk));
      Var v = ops::matmul(h, bind(head.wv));
      Var mixed = ops::matmul(ops::causal_attention(q, k, scale), v);
      Var out = ops::matmul(mixed, bind(head.wo));
      attn = attn.tape ? ops::add(attn, out) : out;
    }
    x = ops::add(x, ops::add(attn, bind(blk.attn_bias)));
    Var h2 = ops::layer_norm(x, bind(blk.ln2_gain), bind(blk.ln2_bias));
    Var hidden = ops::relu(ops::add(ops::matmul(h2, bind(blk.mlp_in)), bind(blk.mlp_in_bias)));
    x = ops::add(x, ops::add(ops::matmul(hidden, bind(blk.mlp_out)), bind(blk.mlp_out_bias)));
  }
  Var hf = ops::layer_norm(x, bind(p.final_gain), bind(p.final_bias));
  return ops::add(ops::matmul(hf, bind(p.unembed)), bind(p.unembed_bias));
}

void check_split(std::span<const int> full, std::size_t prompt_len) {
  if (prompt_len < 1 || prompt_len >= full.size()) {
    throw std::out_of_range("sequence_logprobs: prompt_len " + std::to_string(prompt_len) +
                            " invalid for sequence of " + std::to_string(full.size()));
  }
}

}  // namespace

Var forward_logits(Tape& tape, PolicyParams& params, std::span<const int> context) {
  return forward_impl(params, context,
                      [&](const Tensor& t) { return tape.param(const_cast<Tensor&>(t)); });
}

Var forward_logits(Tape& tape, const PolicyParams& params, std::span<const int> context) {
  return forward_impl(params, context, [&](const Tensor& t) { return tape.borrow(t); });
}

Var sequence_logprobs(Tape& tape, PolicyParams& params, std::span<const int> full,
                      std::size_t prompt_len) {
  check_split(full, prompt_len);
  const std::size_t n = full.size() - prompt_len;
  Var logits = forward_logits(tape, params, full.first(full.size() - 1));
  Var rows = ops::slice_rows(logits, prompt_len - 1, n);
  std::vector<int> targets(full.begin() + static_cast<std::ptrdiff_t>(prompt_len), full.end());
  return ops::pick(ops::log_softmax_rows(rows), targets);
}

std::vector<double> sequence_logprobs(const PolicyParams& params, std::span<const int> full,
                                      std::size_t prompt_len) {
  check_split(full, prompt_len);
  IncrementalDecoder dec(params);
  std::vector<double> out;
  out.reserve(full.size() - prompt_len);
  std::vector<double> row;
  for (std::size_t i = 0; i + 1 < full.size(); ++i) {
    const auto logits = dec.feed(full[i]);
    if (i + 1 < prompt_len) continue;
    row.assign(logits.begin(), logits.end());
    kernels::log_softmax_inplace(row);
    const int target = full[i + 1];
    if (target < 0 || target >= static_cast<int>(row.size())) {
      throw std::out_of_range("sequence_logprobs: token outside vocabulary");
    }
    out.push_back(row[static_cast<std::size_t>(target)]);
  }
  return out;
}

// ---------------------------------------------------------------- decoder

IncrementalDecoder::IncrementalDecoder(const PolicyParams& params) : params_(params) {
  const PolicyConfig& cfg = params.config();
  const auto nb = static_cast<std::size_t>(cfg.n_layers);
  const auto nh = static_cast<std::size_t>(cfg.n_heads);
  keys_.assign(nb, std::vector<std::vector<double>>(nh));
  values_.assign(nb, std::vector<std::vector<double>>(nh));
  const auto d = static_cast<std::size_t>(cfg.embed_dim);
  x_.resize(d);
  h_.resize(d);
  o_.resize(d);
  hidden_.resize(static_cast<std::size_t>(cfg.mlp_hidden));
  logits_.resize(static_cast<std::size_t>(cfg.vocab_size));
}

namespace {

void layer_norm_row(std::span<const double> x, const Tensor& gain, const Tensor& bias,
                    std::span<double> out) {
  const std::size_t n = x.size();
  double mu = 0.0;
  for (double v : x) mu += v;
  mu /= static_cast<double>(n);
  double var = 0.0;
  for (double v : x) var += (v - mu) * (v - mu);
  var /= static_cast<double>(n);
  const double inv = 1.0 / std::sqrt(var + 1e-5);
  for (std::size_t c = 0; c < n; ++c) out[c] = (x[c] - mu) * inv * gain.data[c] + bias.data[c];
}

}  // namespace

std::span<const double> IncrementalDecoder::feed(int token) {
  const PolicyConfig& cfg = params_.config();
  if (position_ >= static_cast<std::size_t>(cfg.max_context)) {
    throw ContextOverflow("IncrementalDecoder: max_context " + std::to_string(cfg.max_context) +
                          " reached");
  }
  if (token < 0 || token >= cfg.vocab_size) {
    throw std::out_of_range("IncrementalDecoder: token " + std::to_string(token) +
                            " outside vocabulary");
  }
  const auto d = static_cast<std::size_t>(cfg.embed_dim);
  const auto dh = static_cast<std::size_t>(cfg.head_dim());
  const auto hidden = static_cast<std::size_t>(cfg.mlp_hidden);
  const std::size_t t = position_ + 1;  // visible positions
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  const double* te = params_.token_embedding.data.data() + static_cast<std::size_t>(token) * d;
  const double* pe = params_.position_embedding.data.data() + position_ * d;
  for (std::size_t c = 0; c < d; ++c) x_[c] = te[c] + pe[c];

  q_.resize(dh);
  k_.resize(dh);
  v_.resize(dh);
  std::vector<double> mixed(dh), attn(d), contrib(d);
  for (std::size_t b = 0; b < params_.blocks.size(); ++b) {
    const BlockParams& blk = params_.blocks[b];
    layer_norm_row(x_, blk.ln1_gain, blk.ln1_bias, h_);
    for (std::size_t hi = 0; hi < blk.heads.size(); ++hi) {
      const AttentionHead& head = blk.heads[hi];
      std::fill(q_.begin(), q_.end(), 0.0);
      std::fill(k_.begin(), k_.end(), 0.0);
      std::fill(v_.begin(), v_.end(), 0.0);
      kernels::gemm_nn(1, dh, d, h_.data(), head.wq.data.data(), q_.data());
      kernels::gemm_nn(1, dh, d, h_.data(), head.wk.data.data(), k_.data());
      kernels::gemm_nn(1, dh, d, h_.data(), head.wv.data.data(), v_.data());
      auto& kc = keys_[b][hi];
      auto& vc = values_[b][hi];
      kc.insert(kc.end(), k_.begin(), k_.end());
      vc.insert(vc.end(), v_.begin(), v_.end());

      scores_.assign(t, 0.0);
      kernels::gemm_nt(1, t, dh, q_.data(), kc.data(), scores_.data());
      for (double& s : scores_) s *= scale;
      kernels::softmax_inplace(scores_);
      std::fill(mixed.begin(), mixed.end(), 0.0);
      kernels::gemm_nn(1, dh, t, scores_.data(), vc.data(), mixed.data());
      std::fill(contrib.begin(), contrib.end(), 0.0);
      kernels::gemm_nn(1, d, dh, mixed.data(), head.wo.data.data(), contrib.data());
      if (hi == 0) {
        attn = contrib;
      } else {
        for (std::size_t c = 0; c < d; ++c) attn[c] += contrib[c];
      }
    }
    for (std::size_t c = 0; c < d; ++c) x_[c] += attn[c] + blk.attn_bias.data[c];

    layer_norm_row(x_, blk.ln2_gain, blk.ln2_bias, h_);
    std::fill(hidden_.begin(), hidden_.end(), 0.0);
    kernels::gemm_nn(1, hidden, d, h_.data(), blk.mlp_in.data.data(), hidden_.data());
    for (std::size_t c = 0; c < hidden; ++c) {
      const double z = hidden_[c] + blk.mlp_in_bias.data[c];
      hidden_[c] = z > 0.0 ? z : 0.0;
    }
    std::fill(o_.begin(), o_.end(), 0.0);
    kernels::gemm_nn(1, d, hidden, hidden_.data(), blk.mlp_out.data.data(), o_.data());
    for (std::size_t c = 0; c < d; ++c) x_[c] += o_[c] + blk.mlp_out_bias.data[c];
  }
  layer_norm_row(x_, params_.final_gain, params_.final_bias, h_);
  std::fill(logits_.begin(), logits_.end(), 0.0);
  kernels::gemm_nn(1, logits_.size(), d, h_.data(), params_.unembed.data.data(), logits_.data());
  for (std::size_t c = 0; c < logits_.size(); ++c) logits_[c] += params_.unembed_bias.data[c];
  ++position_;
  return logits_;
}

// ---------------------------------------------------------------- sampling

Completion sample(const PolicyParams& params, std::span<const int> prompt,
                  const DecodingConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const auto max_context = static_cast<std::size_t>(params.config().max_context);
  if (prompt.empty()) throw std::invalid_argument("sample: empty prompt");
  if (prompt.size() >= max_context) {
    throw ContextOverflow("sample: prompt of " + std::to_string(prompt.size()) +
                          " tokens leaves no room under max_context");
  }
  Rng rng(seed);
  IncrementalDecoder dec(params);
  std::span<const double> logits;
  for (int t : prompt) logits = dec.feed(t);

  Completion out;
  std::vector<double> logp, probs;
  for (int step = 0; step < cfg.max_new_tokens; ++step) {
    if (prompt.size() + out.tokens.size() >= max_context) {
      out.truncated = true;
      break;
    }
    logp.assign(logits.begin(), logits.end());
    kernels::log_softmax_inplace(logp);

    std::size_t choice = 0;
    if (cfg.greedy) {
      for (std::size_t i = 1; i < logits.size(); ++i) {
        if (logits[i] > logits[choice]) choice = i;
      }
    } else {
      probs.resize(logits.size());
      for (std::size_t i = 0; i < logits.size(); ++i) probs[i] = logits[i] / cfg.temperature;
      kernels::softmax_inplace(probs);
      const double u = rng.uniform();
      double acc = 0.0;
      choice = probs.size();
      for (std::size_t i = 0; i < probs.size(); ++i) {
        acc += probs[i];
        if (u < acc) {
          choice = i;
          break;
        }
      }
      if (choice == probs.size()) {
        // u landed in the rounding gap above the cumulative sum.
        choice = 0;
        for (std::size_t i = probs.size(); i-- > 0;) {
          if (probs[i] > 0.0) {
            choice = i;
            break;
          }
        }
      }
    }
    const int token = static_cast<int>(choice);
    out.tokens.push_back(token);
    out.logprobs.push_back(logp[choice]);
    if (token == cfg.stop_token) break;
    if (step + 1 < cfg.max_new_tokens && prompt.size() + out.tokens.size() < max_context) {
      logits = dec.feed(token);
    }
  }
  return out;
}

}  // namespace ton
