#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "hymad/ops.hpp"
#include "hymad/optim.hpp"
#include "hymad/sincnet.hpp"
#include "hymad/tensor.hpp"

namespace hymad::model {

enum class FusionMode { kCrossAttention, kConcat, kFreqOnly, kTempOnly };
enum class Frontend { kSinc, kPlainConv };

std::string to_string(FusionMode mode);
FusionMode parse_fusion_mode(const std::string& text);
std::string to_string(Frontend frontend);
Frontend parse_frontend(const std::string& text);

struct ModelConfig {
  // Frontend: one branch per kernel length, `filters` bands each.
  std::size_t filters = 32;
  std::vector<std::size_t> kernel_lengths = {129};
  Frontend frontend = Frontend::kSinc;
  sincnet::InitStrategy init = sincnet::InitStrategy::kLowBand;
  sincnet::Window window = sincnet::Window::kHamming;
  double fs = 8000.0;
  std::size_t input_len = 8000;
  std::size_t pool_stride = 16;

  std::size_t rnn_hidden = 64;
  std::size_t d_model = 64;
  std::size_t n_heads = 1;
  std::vector<std::size_t> mlp_hidden = {256, 128};
  std::size_t n_labels = 4;
  FusionMode fusion = FusionMode::kCrossAttention;
  bool positional_encoding = true;
  bool residual_norm = true;
  double threshold = 0.5;

  std::size_t branches() const { return kernel_lengths.size(); }
  std::size_t total_filters() const { return filters * branches(); }
  std::size_t seq_len() const { return input_len / pool_stride; }

  /// Throws ValidationError naming the offending field.
  void validate() const;
  /// Canonical one-line-per-field text; the config digest hashes this.
  std::string canonical() const;
  std::uint64_t digest() const;
};

/// Projection weights of one attention unit (Q/K/V/O all d_model x d_model).
struct AttentionParams {
  Tensor w_q, w_k, w_v, w_o;
};

/// Self-attention unit plus its residual layer-norm affine parameters.
struct SelfAttentionParams {
  AttentionParams attn;
  Tensor ln_gamma, ln_beta;
};

struct ModelParams {
  std::vector<sincnet::SincFilterBank> sinc_banks;  // frontend = sinc
  std::vector<Tensor> conv_kernels;                 // frontend = plain conv
  Tensor freq_proj_w, freq_proj_b;
  RnnParams rnn;
  Tensor temp_proj_w, temp_proj_b;
  SelfAttentionParams self_freq, self_temp;
  AttentionParams cross_freq, cross_temp;
  std::vector<Tensor> mlp_w, mlp_b;

  /// Every learnable tensor in a fixed order with a stable name.
  std::vector<NamedParam> named() const;
  std::vector<Tensor> tensors() const;
  std::size_t count() const;
  /// FNV-1a over all parameter values in named() order.
  std::uint64_t digest() const;
  /// Deep copy with fresh leaves.
  ModelParams clone() const;
};

/// Fresh parameters for `cfg`; deterministic in `seed`.
ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed);

/// Sinusoidal encoding: P[t,2i] = sin(t / 10000^(2i/d)), P[t,2i+1] = cos(...).
Tensor positional_encoding(std::size_t length, std::size_t d_model);

/// E + P for a T x d_model sequence.
Tensor add_positional(const Tensor& embedding);

/// Multi-head attention with separate query and key/value sources; heads
/// split the d_model columns evenly and are re-joined before W_O.
Tensor project_attention(const Tensor& query_src, const Tensor& kv_src,
                         const AttentionParams& p, std::size_t n_heads);

/// LayerNorm(X + Attn(X W_Q, X W_K, X W_V) W_O), or just the attention term
/// when `residual_norm` is off.
Tensor self_attention_block(const Tensor& x, const SelfAttentionParams& p,
                            std::size_t n_heads, bool residual_norm);

/// [Attn(Q: A_sinc, KV: A_rnn) ⊕ Attn(Q: A_rnn, KV: A_sinc)], width 2·d_model.
Tensor cross_fuse(const Tensor& a_sinc, const Tensor& a_rnn,
                  const AttentionParams& freq_query,
                  const AttentionParams& temp_query, std::size_t n_heads);

/// Frequency feature sequence F (T' x C_total) from a waveform.
Tensor frontend_features(const Tensor& waveform, const ModelConfig& cfg,
                         const ModelParams& params);

/// Projection, positional encoding, self/cross attention and fusion over
/// the feature sequence; returns the T' x width sequence fed to pooling.
Tensor fuse_sequence(const Tensor& features, const ModelConfig& cfg,
                     const ModelParams& params);

/// Mean-pool over time then the MLP head; returns [n_labels] logits.
Tensor classify(const Tensor& fused, const ModelConfig& cfg,
                const ModelParams& params);

/// Full pipeline for one normalized waveform of cfg.input_len samples.
Tensor forward(std::span<const double> waveform, const ModelConfig& cfg,
               const ModelParams& params);

/// Per-sample forward of every waveform, stacked into N x n_labels.
Tensor forward_batch(const std::vector<std::span<const double>>& waveforms,
                     const ModelConfig& cfg, const ModelParams& params);

/// Indices j with sigmoid(logit_j) > threshold (strict).
std::vector<std::size_t> predict(std::span<const double> logits,
                                 double threshold);

/// 0/1 row of predict() over all labels.
std::vector<int> predict_bits(std::span<const double> logits,
                              double threshold);

// Checkpoint: magic, format version, config digest, canonical config text,
// then named parameter blobs (shape-prefixed little-endian float64).
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& cfg,
                     const ModelParams& params);

struct Checkpoint {
  std::uint64_t config_digest = 0;
  std::string config_text;
  ModelParams params;
};

/// Loads parameters for `cfg`; throws CompatibilityError if the stored
/// digest differs from cfg.digest() or a tensor is missing/mis-shaped.
Checkpoint load_checkpoint(const std::filesystem::path& path,
                           const ModelConfig& cfg);

/// Reads only the header (digest and canonical config text).
Checkpoint read_checkpoint_header(const std::filesystem::path& path);

/// Parses the canonical text produced by ModelConfig::canonical().
ModelConfig parse_canonical(const std::string& text);

}  // namespace hymad::model
