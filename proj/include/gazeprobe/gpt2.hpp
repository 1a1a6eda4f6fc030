#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "gazeprobe/bpe.hpp"
#include "gazeprobe/gptw.hpp"
#include "gazeprobe/tensor.hpp"

namespace gazeprobe::gpt2 {

using bpe::TokenId;

struct ModelConfig {
  int n_layer = 0;
  int n_head = 0;
  int d_model = 0;
  int vocab_size = 0;
  int max_positions = 0;
  double eps = 1e-5;
  tensor::GeluKind gelu = tensor::GeluKind::Tanh;

  int head_dim() const { return d_model / n_head; }
};

struct LoadOptions {
  // Override the head count / epsilon found in the file (or the defaults).
  std::optional<int> n_head;
  std::optional<double> eps;
  tensor::GeluKind gelu = tensor::GeluKind::Tanh;
};

struct CaptureFlags {
  bool ffn = true;        // FFN sublayer output, before the residual add
  bool attention = true;  // post-softmax attention weights
  bool residual = false;  // embeddings, attention sublayer outputs, residual stream after each block
  bool attn_value_norms = false;  // weights scaled by the norm of the attended value vector
};

// Everything recorded by one forward pass. Per-layer vectors are indexed
// from 0 (layer l in 1..L lives at l-1).
struct Trace {
  std::vector<TokenId> tokens;
  Matrix logits;                              // T x vocab
  std::vector<Matrix> ffn_out;                // L of T x d
  std::vector<std::vector<Matrix>> attn;      // L x H of T x T
  std::vector<std::vector<Matrix>> attn_value_weighted;
  Matrix embeddings;                          // T x d
  std::vector<Matrix> attn_out;               // L of T x d
  std::vector<Matrix> residual_stream;        // L of T x d

  std::size_t length() const { return tokens.size(); }
};

class Model {
 public:
  // Builds from GPT-2-named tensors ("h.{i}.attn.c_attn.weight", ...). An
  // optional "transformer." prefix is stripped. Tensors named "meta.*" carry
  // scalar settings (n_head, layer_norm_epsilon) and are not parameters.
  static Model from_tensors(const std::vector<gptw::NamedTensor>& tensors, const LoadOptions& opts = {});
  static Model load(const std::filesystem::path& weights, const LoadOptions& opts = {});

  const ModelConfig& config() const { return config_; }
  std::size_t parameter_tensor_count() const { return parameter_tensors_; }

  Trace forward(std::span<const TokenId> tokens, const CaptureFlags& capture = {}) const;

  void set_tokenizer(bpe::BpeTokenizer tok);
  const bpe::BpeTokenizer& tokenizer() const;
  bool has_tokenizer() const { return tokenizer_.has_value(); }

 private:
  struct Layer {
    RowVector ln1_gain, ln1_bias;
    Matrix w_q, w_k, w_v;
    RowVector b_q, b_k, b_v;
    Matrix w_attn_proj;
    RowVector b_attn_proj;
    RowVector ln2_gain, ln2_bias;
    Matrix w_fc;
    RowVector b_fc;
    Matrix w_mlp_proj;
    RowVector b_mlp_proj;
  };

  ModelConfig config_;
  std::size_t parameter_tensors_ = 0;
  Matrix token_embedding_;     // vocab x d
  Matrix position_embedding_;  // max_positions x d
  std::vector<Layer> layers_;
  RowVector lnf_gain_, lnf_bias_;
  std::optional<bpe::BpeTokenizer> tokenizer_;
};

Model load_model(const std::filesystem::path& weights, const std::filesystem::path& vocab,
                 const std::filesystem::path& merges, const LoadOptions& opts = {});

// log-softmax of the logits row at `position`: the next-token distribution.
RowVector next_token_logprobs(const Trace& trace, std::size_t position);

// Random GPT-2-layout checkpoint (conv-style [in, out] weights, fused qkv)
// with meta tensors recording n_head and epsilon.
std::vector<gptw::NamedTensor> random_checkpoint(const ModelConfig& config, std::uint64_t seed,
                                                 double stddev = 0.2);

}  // namespace gazeprobe::gpt2
