#include <cstring>
#include <fstream>

#include <json.hpp>

#include "hymad/binary_io.hpp"
#include "hymad/datagen.hpp"
#include "hymad/digest.hpp"

namespace hymad::datagen {

namespace {

using nlohmann::json;

constexpr char kShardMagic[8] = {'H', 'Y', 'M', 'A', 'D', 'S', 'H', 'D'};

json range_json(const Range& r) { return json::array({r.lo, r.hi}); }

Range range_from(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

json config_json(const DatasetConfig& c) {
  const auto& m = c.model;
  return {
      {"seed", c.seed},
      {"per_class", c.per_class},
      {"ratios", {c.ratios.train, c.ratios.val, c.ratios.test}},
      {"max_delay", c.mix.max_delay},
      {"scale", {c.mix.scale_lo, c.mix.scale_hi}},
      {"model",
       {{"step_rate", range_json(m.step_rate)},
        {"step_decay", range_json(m.step_decay)},
        {"step_carrier", range_json(m.step_carrier)},
        {"first_step", range_json(m.first_step)},
        {"step_jitter", m.step_jitter},
        {"animal_rate", range_json(m.animal_rate)},
        {"animal_jitter", m.animal_jitter},
        {"animal_amplitude", range_json(m.animal_amplitude)},
        {"animal_decay", range_json(m.animal_decay)},
        {"animal_carrier", range_json(m.animal_carrier)},
        {"rumble_band", range_json(m.rumble_band)},
        {"rumble_components", m.rumble_components},
        {"am_rate", range_json(m.am_rate)},
        {"am_depth", range_json(m.am_depth)},
        {"noise_floor", m.noise_floor}}},
  };
}

DatasetConfig config_from(const json& j) {
  DatasetConfig c;
  c.seed = j.at("seed").get<std::uint64_t>();
  c.per_class = j.at("per_class").get<std::size_t>();
  const auto& r = j.at("ratios");
  c.ratios = {r.at(0).get<double>(), r.at(1).get<double>(), r.at(2).get<double>()};
  c.mix.max_delay = j.at("max_delay").get<std::size_t>();
  c.mix.scale_lo = j.at("scale").at(0).get<double>();
  c.mix.scale_hi = j.at("scale").at(1).get<double>();
  const auto& m = j.at("model");
  c.model.step_rate = range_from(m.at("step_rate"));
  c.model.step_decay = range_from(m.at("step_decay"));
  c.model.step_carrier = range_from(m.at("step_carrier"));
  c.model.first_step = range_from(m.at("first_step"));
  c.model.step_jitter = m.at("step_jitter").get<double>();
  c.model.animal_rate = range_from(m.at("animal_rate"));
  c.model.animal_jitter = m.at("animal_jitter").get<double>();
  c.model.animal_amplitude = range_from(m.at("animal_amplitude"));
  c.model.animal_decay = range_from(m.at("animal_decay"));
  c.model.animal_carrier = range_from(m.at("animal_carrier"));
  c.model.rumble_band = range_from(m.at("rumble_band"));
  c.model.rumble_components = m.at("rumble_components").get<std::size_t>();
  c.model.am_rate = range_from(m.at("am_rate"));
  c.model.am_depth = range_from(m.at("am_depth"));
  c.model.noise_floor = m.at("noise_floor").get<double>();
  return c;
}

std::filesystem::path shard_path(const std::filesystem::path& dir, Split s) {
  return dir / (to_string(s) + ".bin");
}

}  // namespace

void write_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  json records = json::array();
  for (const auto& smp : ds.samples) {
    const auto& w = smp.wave;
    records.push_back({{"id", w.id},
                       {"split", to_string(w.split)},
                       {"combo", smp.combo},
                       {"labels", w.labels.bits},
                       {"source_ids", w.source_ids},
                       {"delay", smp.delay},
                       {"a", smp.a},
                       {"b", smp.b},
                       {"seed", w.seed}});
  }
  json sources = json::object();
  for (auto s : kAllSplits) sources[to_string(s)] = ds.sources.of(s);
  json counts = json::object();
  for (const auto& smp : ds.samples) {
    auto& slot = counts[smp.combo][to_string(smp.wave.split)];
    slot = slot.is_null() ? 1 : slot.get<std::size_t>() + 1;
  }
  json manifest = {{"format", "hymad-dataset"},
                   {"version", kDatasetVersion},
                   {"seed", ds.config.seed},
                   {"config", config_json(ds.config)},
                   {"config_digest", hex_digest(ds.config.digest())},
                   {"dataset_digest", hex_digest(ds.digest())},
                   {"label_order", {"human", "animal", "vehicle", "no_event"}},
                   {"counts", counts},
                   {"sources", sources},
                   {"samples", records}};

  {
    std::ofstream os(dir / "manifest.json", std::ios::trunc);
    if (!os) throw IoError("cannot write " + (dir / "manifest.json").string());
    os << manifest.dump(1) << '\n';
    if (!os) throw IoError("write failed for manifest");
  }

  for (auto s : kAllSplits) {
    const auto frames = ds.in_split(s);
    std::ofstream os(shard_path(dir, s), std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write " + shard_path(dir, s).string());
    os.write(kShardMagic, 8);
    binio::put_u32(os, kDatasetVersion);
    binio::put_u32(os, static_cast<std::uint32_t>(kSegmentLen));
    binio::put_u64(os, frames.size());
    for (const auto* smp : frames) {
      binio::put_u8(os, smp->wave.labels.pack());
      binio::put_u64(os, smp->wave.id);
      for (double v : smp->wave.samples) binio::put_f64(os, v);
    }
    if (!os) throw IoError("write failed for " + shard_path(dir, s).string());
  }
}

Dataset load_dataset(const std::filesystem::path& dir) {
  std::ifstream ms(dir / "manifest.json");
  if (!ms) throw IoError("cannot open " + (dir / "manifest.json").string());
  json manifest;
  try {
    manifest = json::parse(ms);
  } catch (const json::exception& e) {
    throw IoError("malformed manifest: " + std::string(e.what()));
  }

  Dataset ds;
  try {
    if (manifest.at("format") != "hymad-dataset") throw IoError("not a dataset manifest");
    const auto version = manifest.at("version").get<std::uint32_t>();
    if (version != kDatasetVersion) {
      throw CompatibilityError("dataset version " + std::to_string(version) + " unsupported");
    }
    ds.config = config_from(manifest.at("config"));
    for (auto s : kAllSplits)
      ds.sources.ids[static_cast<std::size_t>(s)] =
          manifest.at("sources").at(to_string(s)).get<std::vector<std::uint64_t>>();
    for (const auto& r : manifest.at("samples")) {
      Sample smp;
      smp.wave.id = r.at("id").get<std::uint64_t>();
      smp.wave.split = parse_split(r.at("split").get<std::string>());
      smp.combo = r.at("combo").get<std::string>();
      smp.wave.labels.bits = r.at("labels").get<std::array<std::uint8_t, kNumLabels>>();
      smp.wave.source_ids = r.at("source_ids").get<std::vector<std::uint64_t>>();
      smp.delay = r.at("delay").get<std::size_t>();
      smp.a = r.at("a").get<double>();
      smp.b = r.at("b").get<double>();
      smp.wave.seed = r.at("seed").get<std::uint64_t>();
      ds.samples.push_back(std::move(smp));
    }
  } catch (const json::exception& e) {
    throw IoError("malformed manifest: " + std::string(e.what()));
  } catch (const ValidationError& e) {
    throw IoError("malformed manifest: " + std::string(e.what()));
  }

  std::map<std::uint64_t, Sample*> by_id;
  for (auto& smp : ds.samples) by_id[smp.wave.id] = &smp;
  for (auto s : kAllSplits) {
    const auto path = shard_path(dir, s);
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());
    char magic[8];
    is.read(magic, 8);
    if (is.gcount() != 8 || std::memcmp(magic, kShardMagic, 8) != 0) {
      throw IoError(path.string() + " is not a dataset shard");
    }
    if (binio::get_u32(is) != kDatasetVersion) throw CompatibilityError(path.string() + ": version mismatch");
    if (binio::get_u32(is) != kSegmentLen) throw IoError(path.string() + ": unexpected frame length");
    const auto n = binio::get_u64(is);
    for (std::uint64_t k = 0; k < n; ++k) {
      const auto labels = LabelVector::unpack(binio::get_u8(is));
      const auto id = binio::get_u64(is);
      auto it = by_id.find(id);
      if (it == by_id.end() || it->second->wave.split != s) {
        throw IoError(path.string() + ": frame id " + std::to_string(id) + " not in manifest split");
      }
      if (!(it->second->wave.labels == labels)) {
        throw IoError(path.string() + ": labels of frame " + std::to_string(id) +
                      " disagree with manifest");
      }
      auto& samples = it->second->wave.samples;
      samples.resize(kSegmentLen);
      for (auto& v : samples) v = binio::get_f64(is);
    }
  }
  for (const auto& smp : ds.samples) {
    if (smp.wave.samples.size() != kSegmentLen) {
      throw IoError("sample " + std::to_string(smp.wave.id) + " has no frame in its shard");
    }
  }
  const auto stored = manifest.at("dataset_digest").get<std::string>();
  if (stored != hex_digest(ds.digest())) {
    throw CompatibilityError("dataset digest mismatch: manifest says " + stored +
                             ", data hashes to " + hex_digest(ds.digest()));
  }
  return ds;
}

}  // namespace hymad::datagen
