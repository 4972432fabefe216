#include <cmath>
#include <string>

#include "hymad/digest.hpp"
#include "hymad/model.hpp"
#include "hymad/random.hpp"

namespace hymad::model {

namespace {

bool uses_freq_stream(const ModelConfig& cfg) {
  return cfg.fusion != FusionMode::kTempOnly;
}
bool uses_temp_stream(const ModelConfig& cfg) {
  return cfg.fusion != FusionMode::kFreqOnly;
}
bool uses_cross(const ModelConfig& cfg) {
  return cfg.fusion == FusionMode::kCrossAttention;
}

std::size_t fused_width(const ModelConfig& cfg) {
  return uses_freq_stream(cfg) && uses_temp_stream(cfg) ? 2 * cfg.d_model
                                                        : cfg.d_model;
}

// Calls fn(name, tensor&) for every defined parameter tensor in a fixed
// order. Works for const and non-const ModelParams.
template <typename Params, typename Fn>
void visit(Params& p, Fn&& fn) {
  auto maybe = [&](const std::string& name, auto& t) {
    if (t.defined()) fn(name, t);
  };
  for (std::size_t b = 0; b < p.sinc_banks.size(); ++b) {
    const auto prefix = "sinc.b" + std::to_string(b) + ".";
    maybe(prefix + "theta1", p.sinc_banks[b].theta1);
    maybe(prefix + "theta2", p.sinc_banks[b].theta2);
  }
  for (std::size_t b = 0; b < p.conv_kernels.size(); ++b)
    maybe("conv.b" + std::to_string(b) + ".kernels", p.conv_kernels[b]);
  maybe("freq_proj.w", p.freq_proj_w);
  maybe("freq_proj.b", p.freq_proj_b);
  maybe("rnn.w_h", p.rnn.w_h);
  maybe("rnn.w_x", p.rnn.w_x);
  maybe("rnn.b", p.rnn.b);
  maybe("temp_proj.w", p.temp_proj_w);
  maybe("temp_proj.b", p.temp_proj_b);
  auto attn = [&](const std::string& prefix, auto& a) {
    maybe(prefix + ".w_q", a.w_q);
    maybe(prefix + ".w_k", a.w_k);
    maybe(prefix + ".w_v", a.w_v);
    maybe(prefix + ".w_o", a.w_o);
  };
  attn("self_freq", p.self_freq.attn);
  maybe("self_freq.ln_gamma", p.self_freq.ln_gamma);
  maybe("self_freq.ln_beta", p.self_freq.ln_beta);
  attn("self_temp", p.self_temp.attn);
  maybe("self_temp.ln_gamma", p.self_temp.ln_gamma);
  maybe("self_temp.ln_beta", p.self_temp.ln_beta);
  attn("cross_freq", p.cross_freq);
  attn("cross_temp", p.cross_temp);
  for (std::size_t i = 0; i < p.mlp_w.size(); ++i) {
    maybe("mlp." + std::to_string(i) + ".w", p.mlp_w[i]);
    maybe("mlp." + std::to_string(i) + ".b", p.mlp_b[i]);
  }
}

// Each tensor draws from its own stream keyed by name, so a tensor's
// initial values do not depend on which other tensors a mode creates.
class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : seed_(seed) {}

  Tensor uniform(const std::string& name, Shape shape, double bound) const {
    Rng rng(mix_seed(seed_, fnv1a(name)));
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = rng.uniform(-bound, bound);
    return Tensor::from(std::move(shape), std::move(v), true);
  }

  Tensor xavier(const std::string& name, std::size_t fan_in,
                std::size_t fan_out) const {
    const double bound =
        std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    return uniform(name, {fan_in, fan_out}, bound);
  }

  static Tensor constant(Shape shape, double value) {
    return Tensor::full(std::move(shape), value, true);
  }

 private:
  std::uint64_t seed_;
};

AttentionParams init_attention(const Initializer& init,
                               const std::string& prefix, std::size_t d) {
  return {init.xavier(prefix + ".w_q", d, d), init.xavier(prefix + ".w_k", d, d),
          init.xavier(prefix + ".w_v", d, d), init.xavier(prefix + ".w_o", d, d)};
}

SelfAttentionParams init_self(const Initializer& init, const std::string& prefix,
                              std::size_t d) {
  return {init_attention(init, prefix, d), Initializer::constant({d}, 1.0),
          Initializer::constant({d}, 0.0)};
}

}  // namespace

std::vector<NamedParam> ModelParams::named() const {
  std::vector<NamedParam> out;
  visit(*this, [&](const std::string& name, const Tensor& t) {
    out.push_back({name, t});
  });
  return out;
}

std::vector<Tensor> ModelParams::tensors() const {
  std::vector<Tensor> out;
  visit(*this, [&](const std::string&, const Tensor& t) { out.push_back(t); });
  return out;
}

std::size_t ModelParams::count() const {
  std::size_t n = 0;
  visit(*this, [&](const std::string&, const Tensor& t) { n += t.numel(); });
  return n;
}

std::uint64_t ModelParams::digest() const {
  Fnv1a h;
  visit(*this, [&](const std::string& name, const Tensor& t) {
    h.update(name);
    h.update(t.data());
  });
  return h.value();
}

ModelParams ModelParams::clone() const {
  ModelParams copy = *this;
  visit(copy, [](const std::string&, Tensor& t) {
    const bool rg = t.requires_grad();
    t = t.detach();
    t.set_requires_grad(rg);
  });
  return copy;
}

ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const Initializer init(seed);
  const auto d = cfg.d_model, c_total = cfg.total_filters(), h = cfg.rnn_hidden;
  ModelParams p;

  for (std::size_t b = 0; b < cfg.branches(); ++b) {
    auto bank = sincnet::init_filterbank(cfg.filters, cfg.fs, cfg.init,
                                         cfg.kernel_lengths[b], cfg.window);
    if (cfg.frontend == Frontend::kSinc) {
      p.sinc_banks.push_back(std::move(bank));
    } else {
      // Free kernels start from the same band-pass shapes.
      NoGradGuard guard;
      Tensor k = sincnet::sinc_kernels(bank).detach();
      k.set_requires_grad(true);
      p.conv_kernels.push_back(k);
    }
  }

  if (uses_freq_stream(cfg)) {
    p.freq_proj_w = init.xavier("freq_proj.w", c_total, d);
    p.freq_proj_b = Initializer::constant({d}, 0.0);
    p.self_freq = init_self(init, "self_freq", d);
  }
  if (uses_temp_stream(cfg)) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(h));
    p.rnn.w_h = init.uniform("rnn.w_h", {h, h}, bound);
    p.rnn.w_x = init.uniform("rnn.w_x", {h, c_total}, bound);
    p.rnn.b = Initializer::constant({h}, 0.0);
    p.temp_proj_w = init.xavier("temp_proj.w", h, d);
    p.temp_proj_b = Initializer::constant({d}, 0.0);
    p.self_temp = init_self(init, "self_temp", d);
  }
  if (uses_cross(cfg)) {
    p.cross_freq = init_attention(init, "cross_freq", d);
    p.cross_temp = init_attention(init, "cross_temp", d);
  }

  std::size_t in = fused_width(cfg);
  std::vector<std::size_t> widths = cfg.mlp_hidden;
  widths.push_back(cfg.n_labels);
  for (std::size_t i = 0; i < widths.size(); ++i) {
    p.mlp_w.push_back(init.xavier("mlp." + std::to_string(i) + ".w", in, widths[i]));
    p.mlp_b.push_back(Initializer::constant({widths[i]}, 0.0));
    in = widths[i];
  }
  return p;
}

Tensor positional_encoding(std::size_t length, std::size_t d_model) {
  if (d_model == 0 || d_model % 2 != 0) {
    throw ValidationError("positional_encoding: d_model must be even, got " +
                          std::to_string(d_model));
  }
  std::vector<double> p(length * d_model);
  for (std::size_t t = 0; t < length; ++t) {
    for (std::size_t i = 0; i < d_model / 2; ++i) {
      const double denom =
          std::pow(10000.0, static_cast<double>(2 * i) / static_cast<double>(d_model));
      const double arg = static_cast<double>(t) / denom;
      p[t * d_model + 2 * i] = std::sin(arg);
      p[t * d_model + 2 * i + 1] = std::cos(arg);
    }
  }
  return Tensor::from({length, d_model}, std::move(p));
}

Tensor add_positional(const Tensor& embedding) {
  if (embedding.ndim() != 2) {
    throw ShapeError("add_positional: expected T x d_model, got " +
                     shape_str(embedding.shape()));
  }
  return add(embedding, positional_encoding(embedding.dim(0), embedding.dim(1)));
}

Tensor project_attention(const Tensor& query_src, const Tensor& kv_src,
                         const AttentionParams& p, std::size_t n_heads) {
  Tensor q = matmul(query_src, p.w_q);
  Tensor k = matmul(kv_src, p.w_k);
  Tensor v = matmul(kv_src, p.w_v);
  Tensor heads;
  if (n_heads == 1) {
    heads = attention(q, k, v);
  } else {
    const auto d = cols_of(q);
    if (n_heads == 0 || d % n_heads != 0) {
      throw ShapeError("project_attention: " + std::to_string(n_heads) +
                       " heads do not divide width " + std::to_string(d));
    }
    const auto dk = d / n_heads;
    for (std::size_t h = 0; h < n_heads; ++h) {
      Tensor head = attention(slice_cols(q, h * dk, (h + 1) * dk),
                              slice_cols(k, h * dk, (h + 1) * dk),
                              slice_cols(v, h * dk, (h + 1) * dk));
      heads = h == 0 ? head : concat_cols(heads, head);
    }
  }
  return matmul(heads, p.w_o);
}

Tensor self_attention_block(const Tensor& x, const SelfAttentionParams& p,
                            std::size_t n_heads, bool residual_norm) {
  Tensor a = project_attention(x, x, p.attn, n_heads);
  if (!residual_norm) return a;
  return layer_norm_rows(add(x, a), p.ln_gamma, p.ln_beta);
}

Tensor cross_fuse(const Tensor& a_sinc, const Tensor& a_rnn,
                  const AttentionParams& freq_query,
                  const AttentionParams& temp_query, std::size_t n_heads) {
  if (rows_of(a_sinc) != rows_of(a_rnn)) {
    throw ShapeError("cross_fuse: stream lengths differ (" +
                     std::to_string(rows_of(a_sinc)) + " vs " +
                     std::to_string(rows_of(a_rnn)) + ")");
  }
  if (cols_of(a_sinc) != cols_of(a_rnn)) {
    throw ShapeError("cross_fuse: stream widths differ");
  }
  Tensor c_freq = project_attention(a_sinc, a_rnn, freq_query, n_heads);
  Tensor c_temp = project_attention(a_rnn, a_sinc, temp_query, n_heads);
  return concat_cols(c_freq, c_temp);
}

Tensor frontend_features(const Tensor& waveform, const ModelConfig& cfg,
                         const ModelParams& params) {
  if (waveform.numel() != cfg.input_len) {
    throw ValidationError("forward: expected " + std::to_string(cfg.input_len) +
                          " samples, got " + std::to_string(waveform.numel()));
  }
  Tensor stacked;
  for (std::size_t b = 0; b < cfg.branches(); ++b) {
    Tensor kernels = cfg.frontend == Frontend::kSinc
                         ? sincnet::sinc_kernels(params.sinc_banks.at(b))
                         : params.conv_kernels.at(b);
    Tensor branch = conv1d_same_pooled(waveform, kernels, cfg.pool_stride);
    stacked = b == 0 ? branch : concat_rows({stacked, branch});
  }
  return transpose(stacked);  // T' x C_total
}

Tensor fuse_sequence(const Tensor& features, const ModelConfig& cfg,
                     const ModelParams& params) {
  auto encode = [&](Tensor e) {
    return cfg.positional_encoding ? add_positional(e) : e;
  };
  Tensor a_sinc, a_rnn;
  if (uses_freq_stream(cfg)) {
    Tensor e_freq = encode(add_row(matmul(features, params.freq_proj_w), params.freq_proj_b));
    a_sinc = self_attention_block(e_freq, params.self_freq, cfg.n_heads, cfg.residual_norm);
  }
  if (uses_temp_stream(cfg)) {
    Tensor states = rnn_forward(features, params.rnn,
                                Tensor::zeros({cfg.rnn_hidden}));
    Tensor e_temp = encode(add_row(matmul(states, params.temp_proj_w), params.temp_proj_b));
    a_rnn = self_attention_block(e_temp, params.self_temp, cfg.n_heads, cfg.residual_norm);
  }
  switch (cfg.fusion) {
    case FusionMode::kCrossAttention:
      return cross_fuse(a_sinc, a_rnn, params.cross_freq, params.cross_temp,
                        cfg.n_heads);
    case FusionMode::kConcat:
      return concat_cols(a_sinc, a_rnn);
    case FusionMode::kFreqOnly:
      return a_sinc;
    case FusionMode::kTempOnly:
      return a_rnn;
  }
  throw UsageError("fuse_sequence: unhandled fusion mode");
}

Tensor classify(const Tensor& fused, const ModelConfig& cfg,
                const ModelParams& params) {
  Tensor h = mean_rows(fused);
  const auto layers = params.mlp_w.size();
  for (std::size_t i = 0; i < layers; ++i) {
    const auto act = i + 1 < layers ? Activation::kRelu : Activation::kLinear;
    h = dense(h, params.mlp_w[i], params.mlp_b[i], act);
  }
  return h.reshape({cfg.n_labels});
}

Tensor forward(std::span<const double> waveform, const ModelConfig& cfg,
               const ModelParams& params) {
  if (waveform.size() != cfg.input_len) {
    throw ValidationError("forward: expected " + std::to_string(cfg.input_len) +
                          " samples, got " + std::to_string(waveform.size()));
  }
  Tensor x = Tensor::from({cfg.input_len},
                          std::vector<double>(waveform.begin(), waveform.end()));
  Tensor features = frontend_features(x, cfg, params);
  return classify(fuse_sequence(features, cfg, params), cfg, params);
}

Tensor forward_batch(const std::vector<std::span<const double>>& waveforms,
                     const ModelConfig& cfg, const ModelParams& params) {
  std::vector<Tensor> rows;
  rows.reserve(waveforms.size());
  for (const auto& w : waveforms)
    rows.push_back(forward(w, cfg, params).reshape({1, cfg.n_labels}));
  return concat_rows(rows);
}

std::vector<std::size_t> predict(std::span<const double> logits,
                                 double threshold) {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < logits.size(); ++j) {
    const double z = logits[j];
    const double p = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z))
                              : std::exp(z) / (1.0 + std::exp(z));
    if (p > threshold) out.push_back(j);
  }
  return out;
}

std::vector<int> predict_bits(std::span<const double> logits,
                              double threshold) {
  std::vector<int> bits(logits.size(), 0);
  for (auto j : predict(logits, threshold)) bits[j] = 1;
  return bits;
}

}  // namespace hymad::model
