#include <cstring>
#include <fstream>
#include <map>

#include "hymad/binary_io.hpp"
#include "hymad/digest.hpp"
#include "hymad/model.hpp"

namespace hymad::model {

namespace {

constexpr char kMagic[8] = {'H', 'Y', 'M', 'A', 'D', 'C', 'K', 'P'};

struct Header {
  std::uint64_t digest = 0;
  std::string config_text;
};

Header read_header(std::istream& is, const std::filesystem::path& path) {
  char magic[8];
  is.read(magic, 8);
  if (is.gcount() != 8 || std::memcmp(magic, kMagic, 8) != 0) {
    throw CompatibilityError(path.string() + ": not a checkpoint file");
  }
  const auto version = binio::get_u32(is);
  if (version != kCheckpointVersion) {
    throw CompatibilityError(path.string() + ": checkpoint version " +
                             std::to_string(version) + " unsupported");
  }
  Header h;
  h.digest = binio::get_u64(is);
  h.config_text = binio::get_string(is);
  return h;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint " + path.string());
  return is;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& cfg,
                     const ModelParams& params) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write checkpoint " + path.string());
  os.write(kMagic, 8);
  binio::put_u32(os, kCheckpointVersion);
  binio::put_u64(os, cfg.digest());
  binio::put_string(os, cfg.canonical());
  const auto named = params.named();
  binio::put_u32(os, static_cast<std::uint32_t>(named.size()));
  for (const auto& [name, t] : named) {
    binio::put_string(os, name);
    binio::put_u32(os, static_cast<std::uint32_t>(t.ndim()));
    for (auto d : t.shape()) binio::put_u64(os, d);
    for (double v : t.data()) binio::put_f64(os, v);
  }
  if (!os) throw IoError("write failed for checkpoint " + path.string());
}

Checkpoint read_checkpoint_header(const std::filesystem::path& path) {
  auto is = open_in(path);
  auto h = read_header(is, path);
  Checkpoint ck;
  ck.config_digest = h.digest;
  ck.config_text = std::move(h.config_text);
  return ck;
}

Checkpoint load_checkpoint(const std::filesystem::path& path,
                           const ModelConfig& cfg) {
  auto is = open_in(path);
  auto h = read_header(is, path);
  if (h.digest != cfg.digest()) {
    throw CompatibilityError("checkpoint " + path.string() + " was written for config " +
                             hex_digest(h.digest) + ", current model config is " +
                             hex_digest(cfg.digest()));
  }
  std::map<std::string, Tensor> stored;
  const auto count = binio::get_u32(is);
  for (std::uint32_t i = 0; i < count; ++i) {
    auto name = binio::get_string(is);
    const auto ndim = binio::get_u32(is);
    if (ndim > 8) throw IoError("checkpoint tensor '" + name + "' has bad rank");
    Shape shape(ndim);
    for (auto& d : shape) d = binio::get_u64(is);
    const auto n = shape_numel(shape);
    if (n > (1u << 28)) throw IoError("checkpoint tensor '" + name + "' is too large");
    std::vector<double> values(n);
    for (auto& v : values) v = binio::get_f64(is);
    stored.emplace(std::move(name), Tensor::from(std::move(shape), std::move(values)));
  }

  Checkpoint ck;
  ck.config_digest = h.digest;
  ck.config_text = std::move(h.config_text);
  ck.params = init_params(cfg, 0);
  for (auto& [name, target] : ck.params.named()) {
    auto it = stored.find(name);
    if (it == stored.end()) {
      throw CompatibilityError("checkpoint lacks parameter '" + name + "'");
    }
    if (it->second.shape() != target.shape()) {
      throw CompatibilityError("checkpoint parameter '" + name + "' has shape " +
                               shape_str(it->second.shape()) + ", expected " +
                               shape_str(target.shape()));
    }
    Tensor t = target;  // shares storage with ck.params
    std::copy(it->second.data().begin(), it->second.data().end(), t.mutable_data().begin());
  }
  return ck;
}

}  // namespace hymad::model
