#include <charconv>
#include <cstdio>
#include <map>
#include <sstream>

#include "hymad/digest.hpp"
#include "hymad/model.hpp"

namespace hymad::model {

namespace {

std::string join(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(v[i]);
  }
  return out;
}

std::string fmt_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void fail(const std::string& field, const std::string& why) {
  throw ValidationError("model." + field + ": " + why);
}

std::size_t parse_size(const std::string& field, const std::string& text) {
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    fail(field, "expected a non-negative integer, got '" + text + "'");
  }
  return v;
}

std::vector<std::size_t> parse_sizes(const std::string& field,
                                     const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_size(field, item));
  return out;
}

}  // namespace

std::string to_string(FusionMode mode) {
  switch (mode) {
    case FusionMode::kCrossAttention: return "cross_attention";
    case FusionMode::kConcat: return "concat";
    case FusionMode::kFreqOnly: return "freq_only";
    case FusionMode::kTempOnly: return "temp_only";
  }
  return "?";
}

FusionMode parse_fusion_mode(const std::string& text) {
  if (text == "cross_attention") return FusionMode::kCrossAttention;
  if (text == "concat") return FusionMode::kConcat;
  if (text == "freq_only") return FusionMode::kFreqOnly;
  if (text == "temp_only") return FusionMode::kTempOnly;
  fail("fusion_mode", "unknown mode '" + text +
                          "' (cross_attention|concat|freq_only|temp_only)");
  return {};
}

std::string to_string(Frontend frontend) {
  return frontend == Frontend::kSinc ? "sinc" : "plain_conv";
}

Frontend parse_frontend(const std::string& text) {
  if (text == "sinc") return Frontend::kSinc;
  if (text == "plain_conv") return Frontend::kPlainConv;
  fail("frontend", "unknown frontend '" + text + "' (sinc|plain_conv)");
  return {};
}

void ModelConfig::validate() const {
  if (filters == 0) fail("filters", "must be >= 1");
  if (kernel_lengths.empty()) fail("kernel_lengths", "needs at least one branch");
  for (auto l : kernel_lengths) {
    if (l % 2 == 0) fail("kernel_lengths", "lengths must be odd, got " + std::to_string(l));
    if (l > input_len) fail("kernel_lengths", "length exceeds input_len");
  }
  if (!(fs > 0.0)) fail("fs", "must be positive");
  if (pool_stride == 0 || pool_stride > input_len) {
    fail("pool_stride", "must be in [1, input_len]");
  }
  if (rnn_hidden == 0) fail("rnn_hidden", "must be >= 1");
  if (d_model == 0 || d_model % 2 != 0) fail("d_model", "must be even and positive");
  if (n_heads == 0 || d_model % n_heads != 0) {
    fail("n_heads", "must divide d_model");
  }
  if (n_labels == 0) fail("n_labels", "must be >= 1");
  for (auto h : mlp_hidden)
    if (h == 0) fail("mlp_hidden", "widths must be >= 1");
  if (!(threshold > 0.0 && threshold < 1.0)) fail("threshold", "must lie in (0, 1)");
}

std::string ModelConfig::canonical() const {
  std::ostringstream os;
  os << "filters=" << filters << '\n'
     << "kernel_lengths=" << join(kernel_lengths) << '\n'
     << "frontend=" << to_string(frontend) << '\n'
     << "init=" << (init == sincnet::InitStrategy::kLinear ? "linear" : "low_band") << '\n'
     << "window=" << (window == sincnet::Window::kHamming ? "hamming" : "none") << '\n'
     << "fs=" << fmt_double(fs) << '\n'
     << "input_len=" << input_len << '\n'
     << "pool_stride=" << pool_stride << '\n'
     << "rnn_hidden=" << rnn_hidden << '\n'
     << "d_model=" << d_model << '\n'
     << "n_heads=" << n_heads << '\n'
     << "mlp_hidden=" << join(mlp_hidden) << '\n'
     << "n_labels=" << n_labels << '\n'
     << "fusion_mode=" << to_string(fusion) << '\n'
     << "positional_encoding=" << (positional_encoding ? 1 : 0) << '\n'
     << "residual_norm=" << (residual_norm ? 1 : 0) << '\n';
  return os.str();
}

std::uint64_t ModelConfig::digest() const { return fnv1a(canonical()); }

ModelConfig parse_canonical(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail("<checkpoint>", "malformed line '" + line + "'");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto get = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) fail(key, "missing from checkpoint config");
    return it->second;
  };
  ModelConfig cfg;
  cfg.filters = parse_size("filters", get("filters"));
  cfg.kernel_lengths = parse_sizes("kernel_lengths", get("kernel_lengths"));
  cfg.frontend = parse_frontend(get("frontend"));
  cfg.init = get("init") == "linear" ? sincnet::InitStrategy::kLinear
                                     : sincnet::InitStrategy::kLowBand;
  cfg.window = get("window") == "none" ? sincnet::Window::kNone : sincnet::Window::kHamming;
  cfg.fs = std::stod(get("fs"));
  cfg.input_len = parse_size("input_len", get("input_len"));
  cfg.pool_stride = parse_size("pool_stride", get("pool_stride"));
  cfg.rnn_hidden = parse_size("rnn_hidden", get("rnn_hidden"));
  cfg.d_model = parse_size("d_model", get("d_model"));
  cfg.n_heads = parse_size("n_heads", get("n_heads"));
  cfg.mlp_hidden = parse_sizes("mlp_hidden", get("mlp_hidden"));
  cfg.n_labels = parse_size("n_labels", get("n_labels"));
  cfg.fusion = parse_fusion_mode(get("fusion_mode"));
  cfg.positional_encoding = get("positional_encoding") == "1";
  cfg.residual_norm = get("residual_norm") == "1";
  cfg.validate();
  return cfg;
}

}  // namespace hymad::model
