#pragma once

// Small causal transformer over the task vocabulary. The tape forward pass
// is used for training; IncrementalDecoder runs the same network one token
// at a time without a tape for sampling and scoring.

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ton/diffcore.hpp"
#include "ton/grammar.hpp"

namespace ton {

struct PolicyConfig {
  int vocab_size = tok::kVocabSize;
  int embed_dim = 64;
  int n_layers = 2;
  int n_heads = 2;
  int max_context = 256;
  int mlp_hidden = 256;
  double init_std = 0.02;

  // Throws std::invalid_argument.
  void validate() const;
  int head_dim() const { return embed_dim / n_heads; }
  bool operator==(const PolicyConfig&) const = default;
};

class ContextOverflow : public std::length_error {
 public:
  using std::length_error::length_error;
};

struct AttentionHead {
  Tensor wq, wk, wv;  // [embed, head_dim]
  Tensor wo;          // [head_dim, embed]
};

struct BlockParams {
  Tensor ln1_gain, ln1_bias;
  std::vector<AttentionHead> heads;
  Tensor attn_bias;  // [1, embed]
  Tensor ln2_gain, ln2_bias;
  Tensor mlp_in, mlp_in_bias;    // [embed, hidden], [1, hidden]
  Tensor mlp_out, mlp_out_bias;  // [hidden, embed], [1, embed]
};

class PolicyParams {
 public:
  PolicyParams() = default;
  // Gaussian(0, init_std) weights, zero biases, unit layer-norm gains.
  static PolicyParams init(const PolicyConfig& config, std::uint64_t seed);
  // Correctly shaped, all weights zero.
  static PolicyParams zeros(const PolicyConfig& config);

  const PolicyConfig& config() const { return config_; }

  Tensor token_embedding;     // [vocab, embed]
  Tensor position_embedding;  // [max_context, embed]
  std::vector<BlockParams> blocks;
  Tensor final_gain, final_bias;
  Tensor unembed, unembed_bias;  // [embed, vocab], [1, vocab]

  // Visits every parameter tensor in a fixed order with a stable name.
  void for_each(const std::function<void(std::string_view, Tensor&)>& fn);
  void for_each(const std::function<void(std::string_view, const Tensor&)>& fn) const;

  std::size_t parameter_count() const;
  void zero_grad();

 private:
  PolicyConfig config_;
};

// Frozen copy used as the sampling policy and the KL reference. Shared and
// never mutated after creation.
using FrozenPolicy = std::shared_ptr<const PolicyParams>;

FrozenPolicy snapshot(const PolicyParams& params);

// Logits [len(context), vocab]. Gradients flow into params on backward().
Var forward_logits(Tape& tape, PolicyParams& params, std::span<const int> context);
// Same network, parameters borrowed read-only.
Var forward_logits(Tape& tape, const PolicyParams& params, std::span<const int> context);

// Entry j is log pi(full[prompt_len + j] | full[< prompt_len + j]); shape
// [len(full) - prompt_len, 1], differentiable w.r.t. params.
Var sequence_logprobs(Tape& tape, PolicyParams& params, std::span<const int> full,
                      std::size_t prompt_len);
// Tape-free evaluation of the same quantity.
std::vector<double> sequence_logprobs(const PolicyParams& params, std::span<const int> full,
                                      std::size_t prompt_len);

// Runs the network one position at a time, caching keys and values.
class IncrementalDecoder {
 public:
  explicit IncrementalDecoder(const PolicyParams& params);

  // Appends a token and returns logits for the next position. Throws
  // ContextOverflow past max_context.
  std::span<const double> feed(int token);
  std::size_t position() const { return position_; }

 private:
  const PolicyParams& params_;
  std::size_t position_ = 0;
  // [block][head] -> rows of cached keys / values, head_dim each.
  std::vector<std::vector<std::vector<double>>> keys_, values_;
  std::vector<double> x_, h_, q_, k_, v_, o_, scores_, hidden_, logits_;
};

struct DecodingConfig {
  double temperature = 1.0;
  int max_new_tokens = 32;
  bool greedy = false;
  int stop_token = tok::kEos;

  void validate() const;
};

struct Completion {
  std::vector<int> tokens;
  // Temperature-1 log-probabilities of the chosen tokens.
  std::vector<double> logprobs;
  bool truncated = false;  // ran into max_context

  bool ended() const { return !tokens.empty() && tokens.back() == tok::kEos; }
};

// Greedy decoding picks the lowest token id among tied maxima; otherwise
// draws from softmax(logits / temperature) with a generator seeded by seed.
Completion sample(const PolicyParams& params, std::span<const int> prompt,
                  const DecodingConfig& cfg, std::uint64_t seed);

// Euclidean distance between two parameter sets of the same shape.
double parameter_distance(const PolicyParams& a, const PolicyParams& b);

// JSON checkpoint: config plus named parameter arrays. Doubles round-trip
// exactly.
void save_checkpoint(const PolicyParams& params, const std::string& path);
PolicyParams load_checkpoint(const std::string& path);
std::string checkpoint_to_string(const PolicyParams& params);
PolicyParams checkpoint_from_string(std::string_view text);

}  // namespace ton
