#include "hymad/datagen.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>

#include "hymad/digest.hpp"
#include "hymad/random.hpp"

namespace hymad::datagen {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
// Onset ramp of an impulse; keeps the attack from being a broadband click.
constexpr double kAttack = 0.002;

std::string fmt(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void check_range(const char* field, const Range& r) {
  if (!(std::isfinite(r.lo) && std::isfinite(r.hi) && r.lo >= 0.0 && r.hi >= r.lo)) {
    throw ValidationError(std::string("dataset.") + field +
                          ": expected 0 <= lo <= hi, got [" + fmt(r.lo) + ", " +
                          fmt(r.hi) + "]");
  }
}

double draw(Rng& rng, const Range& r) { return rng.uniform(r.lo, r.hi); }

// Adds one damped sinusoidal impulse starting at t0 seconds.
void add_impulse(std::vector<double>& x, double t0, double amplitude,
                 double decay, double carrier, double phase) {
  const auto start = static_cast<std::size_t>(std::max(0.0, std::ceil(t0 * kSampleRate)));
  const double tail = t0 + 12.0 * decay;  // exp(-12) is below the noise floor
  for (std::size_t i = start; i < x.size(); ++i) {
    const double t = static_cast<double>(i) / kSampleRate;
    if (t > tail) break;
    const double dt = t - t0;
    x[i] += amplitude * (1.0 - std::exp(-dt / kAttack)) * std::exp(-dt / decay) *
            std::sin(kTwoPi * carrier * dt + phase);
  }
}

std::vector<double> footsteps(Rng& rng, const EventModel& m) {
  std::vector<double> x(kSegmentLen, 0.0);
  const double period = 1.0 / draw(rng, m.step_rate);
  const double decay = draw(rng, m.step_decay);
  const double carrier = draw(rng, m.step_carrier);
  for (double t = draw(rng, m.first_step); t < 1.0;
       t += period * (1.0 + m.step_jitter * rng.uniform(-1.0, 1.0))) {
    add_impulse(x, t, rng.uniform(0.8, 1.2), decay, carrier, rng.uniform(0.0, kTwoPi));
  }
  return x;
}

std::vector<double> animal_steps(Rng& rng, const EventModel& m) {
  std::vector<double> x(kSegmentLen, 0.0);
  const double period = 1.0 / draw(rng, m.animal_rate);
  const double decay = draw(rng, m.animal_decay);
  const double carrier = draw(rng, m.animal_carrier);
  for (double t = rng.uniform(0.0, period); t < 1.0;
       t += period * (1.0 + m.animal_jitter * rng.uniform(-1.0, 1.0))) {
    add_impulse(x, t, draw(rng, m.animal_amplitude), decay, carrier,
                rng.uniform(0.0, kTwoPi));
  }
  return x;
}

std::vector<double> rumble(Rng& rng, const EventModel& m) {
  const std::size_t k = m.rumble_components;
  std::vector<double> freq(k), amp(k), phase(k);
  for (std::size_t j = 0; j < k; ++j) {
    freq[j] = draw(rng, m.rumble_band);
    amp[j] = rng.uniform(0.5, 1.0) / std::sqrt(static_cast<double>(k));
    phase[j] = rng.uniform(0.0, kTwoPi);
  }
  const double am_rate = draw(rng, m.am_rate);
  const double am_depth = draw(rng, m.am_depth);
  const double am_phase = rng.uniform(0.0, kTwoPi);
  std::vector<double> x(kSegmentLen);
  for (std::size_t i = 0; i < kSegmentLen; ++i) {
    const double t = static_cast<double>(i) / kSampleRate;
    double v = 0.0;
    for (std::size_t j = 0; j < k; ++j) v += amp[j] * std::sin(kTwoPi * freq[j] * t + phase[j]);
    x[i] = v * (1.0 + am_depth * std::sin(kTwoPi * am_rate * t + am_phase));
  }
  return x;
}

}  // namespace

std::string to_string(EventClass cls) {
  switch (cls) {
    case EventClass::kHuman: return "human";
    case EventClass::kAnimal: return "animal";
    case EventClass::kVehicle: return "vehicle";
    case EventClass::kNoEvent: return "no_event";
  }
  return "?";
}

EventClass parse_event_class(const std::string& text) {
  for (auto c : kAllClasses)
    if (to_string(c) == text) return c;
  throw ValidationError("unknown event class '" + text +
                        "' (human|animal|vehicle|no_event)");
}

std::string to_string(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "?";
}

Split parse_split(const std::string& text) {
  for (auto s : kAllSplits)
    if (to_string(s) == text) return s;
  throw ValidationError("unknown split '" + text + "' (train|val|test)");
}

LabelVector LabelVector::of(EventClass cls) {
  LabelVector v;
  v.bits[static_cast<std::size_t>(cls)] = 1;
  return v;
}

LabelVector LabelVector::merged(const LabelVector& other) const {
  LabelVector v;
  for (std::size_t j = 0; j < 3; ++j) v.bits[j] = bits[j] | other.bits[j];
  v.bits[3] = v.activity_count() == 0 ? 1 : 0;
  return v;
}

std::size_t LabelVector::activity_count() const {
  return static_cast<std::size_t>(bits[0] + bits[1] + bits[2]);
}

bool LabelVector::valid() const {
  for (auto b : bits)
    if (b > 1) return false;
  const auto n = activity_count();
  return n <= 2 && (bits[3] == 1) == (n == 0);
}

std::uint8_t LabelVector::pack() const {
  std::uint8_t byte = 0;
  for (std::size_t j = 0; j < kNumLabels; ++j)
    byte |= static_cast<std::uint8_t>((bits[j] & 1u) << j);
  return byte;
}

LabelVector LabelVector::unpack(std::uint8_t byte) {
  LabelVector v;
  for (std::size_t j = 0; j < kNumLabels; ++j) v.bits[j] = (byte >> j) & 1u;
  return v;
}

std::string LabelVector::name() const {
  std::string out;
  for (std::size_t j = 0; j < kNumLabels; ++j) {
    if (!bits[j]) continue;
    if (!out.empty()) out += '+';
    out += to_string(static_cast<EventClass>(j));
  }
  return out.empty() ? "none" : out;
}

void EventModel::validate() const {
  check_range("step_rate", step_rate);
  check_range("step_decay", step_decay);
  check_range("step_carrier", step_carrier);
  check_range("first_step", first_step);
  check_range("animal_rate", animal_rate);
  check_range("animal_amplitude", animal_amplitude);
  check_range("animal_decay", animal_decay);
  check_range("animal_carrier", animal_carrier);
  check_range("rumble_band", rumble_band);
  check_range("am_rate", am_rate);
  check_range("am_depth", am_depth);
  if (step_rate.lo <= 0.0 || animal_rate.lo <= 0.0 || step_decay.lo <= 0.0 ||
      animal_decay.lo <= 0.0) {
    throw ValidationError("dataset: rates and decays must be positive");
  }
  if (rumble_components == 0) throw ValidationError("dataset.rumble_components: must be >= 1");
  if (!(noise_floor > 0.0 && std::isfinite(noise_floor))) {
    throw ValidationError("dataset.noise_floor: must be positive");
  }
  if (step_jitter < 0.0 || step_jitter >= 1.0 || animal_jitter < 0.0 || animal_jitter >= 1.0) {
    throw ValidationError("dataset: jitter must lie in [0, 1)");
  }
}

std::uint64_t source_id(EventClass cls, std::size_t index) {
  return (static_cast<std::uint64_t>(cls) + 1) << 32 | static_cast<std::uint64_t>(index);
}

EventClass class_of_source(std::uint64_t id) {
  const auto tag = id >> 32;
  if (tag < 1 || tag > 4) throw ValidationError("not a corpus source id: " + std::to_string(id));
  return static_cast<EventClass>(tag - 1);
}

std::vector<Waveform> gen_event(EventClass cls, std::size_t n,
                                std::uint64_t split_seed,
                                const EventModel& model) {
  if (static_cast<unsigned>(cls) > 3) throw ValidationError("gen_event: unknown class");
  model.validate();
  std::vector<Waveform> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto seed = mix_seed(split_seed, i);
    Rng rng(seed);
    std::vector<double> x;
    switch (cls) {
      case EventClass::kHuman: x = footsteps(rng, model); break;
      case EventClass::kAnimal: x = animal_steps(rng, model); break;
      case EventClass::kVehicle: x = rumble(rng, model); break;
      case EventClass::kNoEvent: x.assign(kSegmentLen, 0.0); break;
    }
    for (auto& v : x) v += model.noise_floor * rng.normal();
    Waveform w;
    w.id = source_id(cls, i);
    w.samples = normalize(x);
    w.source_ids = {w.id};
    w.labels = LabelVector::of(cls);
    w.seed = seed;
    out.push_back(std::move(w));
  }
  return out;
}

std::vector<double> normalize(std::span<const double> x) {
  std::vector<double> out(x.size(), 0.0);
  if (x.empty()) return out;
  const double n = static_cast<double>(x.size());
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / n);
  if (sd < 1e-12) return out;
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - mean) / sd;
  return out;
}

std::vector<double> mix(std::span<const double> primary,
                        std::span<const double> secondary, std::size_t delay,
                        double a, double b) {
  if (primary.size() != secondary.size()) {
    throw ValidationError("mix: waveform lengths differ (" + std::to_string(primary.size()) +
                          " vs " + std::to_string(secondary.size()) + ")");
  }
  std::vector<double> out(primary.size());
  for (std::size_t t = 0; t < out.size(); ++t) {
    out[t] = a * primary[t];
    if (t >= delay) out[t] += b * secondary[t - delay];
  }
  return out;
}

Waveform superpose(const Waveform& primary, const Waveform& secondary,
                   std::size_t delay, double a, double b, std::size_t max_delay) {
  if (primary.split != secondary.split) {
    throw LeakageError("superpose: cannot mix a " + to_string(primary.split) +
                       " source with a " + to_string(secondary.split) + " source");
  }
  if (primary.samples.size() != kSegmentLen || secondary.samples.size() != kSegmentLen) {
    throw ValidationError("superpose: waveforms must have " + std::to_string(kSegmentLen) +
                          " samples");
  }
  if (delay > max_delay) {
    throw ValidationError("superpose: delay " + std::to_string(delay) + " exceeds " +
                          std::to_string(max_delay));
  }
  if (!(a > 0.0) || !(b >= 0.0) || !std::isfinite(a) || !std::isfinite(b)) {
    throw ValidationError("superpose: scales need a > 0 and b >= 0");
  }
  Waveform w;
  w.samples = normalize(mix(primary.samples, secondary.samples, delay, a, b));
  w.labels = primary.labels.merged(secondary.labels);
  w.source_ids = primary.source_ids;
  for (auto id : secondary.source_ids)
    if (std::find(w.source_ids.begin(), w.source_ids.end(), id) == w.source_ids.end())
      w.source_ids.push_back(id);
  w.split = primary.split;
  return w;
}

void SplitRatios::validate() const {
  if (train < 0.0 || val < 0.0 || test < 0.0) {
    throw ValidationError("dataset.ratios: ratios must be non-negative");
  }
  if (std::fabs(train + val + test - 1.0) > 1e-9) {
    throw ValidationError("dataset.ratios: ratios must sum to 1, got " +
                          fmt(train + val + test));
  }
}

std::array<std::size_t, 3> SplitRatios::counts(std::size_t n) const {
  const auto nd = static_cast<double>(n);
  auto n_train = static_cast<std::size_t>(std::llround(train * nd));
  auto n_val = static_cast<std::size_t>(std::llround(val * nd));
  n_train = std::min(n_train, n);
  n_val = std::min(n_val, n - n_train);
  return {n_train, n_val, n - n_train - n_val};
}

Split SplitAssignment::split_of(std::uint64_t id) const {
  for (auto s : kAllSplits) {
    const auto& v = of(s);
    if (std::find(v.begin(), v.end(), id) != v.end()) return s;
  }
  throw ValidationError("id " + std::to_string(id) + " is in no split");
}

SplitAssignment split(const std::vector<Waveform>& corpus,
                      const SplitRatios& ratios, std::uint64_t seed) {
  ratios.validate();
  std::map<std::size_t, std::vector<std::uint64_t>> by_class;
  for (const auto& w : corpus) {
    if (w.labels.activity_count() > 1 || !w.labels.valid()) {
      throw ValidationError("split: corpus must hold single-event waveforms");
    }
    std::size_t cls = 0;
    while (!w.labels.bits[cls]) ++cls;
    by_class[cls].push_back(w.id);
  }
  SplitAssignment out;
  for (auto& [cls, ids] : by_class) {
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
      throw ValidationError("split: duplicate corpus id");
    }
    Rng rng(mix_seed(seed, cls));
    rng.shuffle(ids.begin(), ids.end());
    const auto n = ratios.counts(ids.size());
    auto it = ids.begin();
    for (std::size_t s = 0; s < 3; ++s) {
      auto end = it + static_cast<std::ptrdiff_t>(n[s]);
      out.ids[s].insert(out.ids[s].end(), it, end);
      it = end;
    }
  }
  return out;
}

std::string Combo::name() const { return labels().name(); }

LabelVector Combo::labels() const {
  LabelVector v = LabelVector::of(classes.at(0));
  for (std::size_t i = 1; i < classes.size(); ++i) v = v.merged(LabelVector::of(classes[i]));
  return v;
}

const std::vector<Combo>& standard_combos() {
  static const std::vector<Combo> combos = {
      {{EventClass::kHuman}},
      {{EventClass::kAnimal}},
      {{EventClass::kVehicle}},
      {{EventClass::kNoEvent}},
      {{EventClass::kHuman, EventClass::kAnimal}},
      {{EventClass::kHuman, EventClass::kVehicle}},
      {{EventClass::kVehicle, EventClass::kAnimal}},
  };
  return combos;
}

Combo parse_combo(const std::string& name) {
  for (const auto& c : standard_combos())
    if (c.name() == name) return c;
  throw ValidationError("unknown combo '" + name + "'");
}

void MixConfig::validate() const {
  if (max_delay > kSegmentLen) {
    throw ValidationError("dataset.max_delay: must be <= " + std::to_string(kSegmentLen));
  }
  if (!(scale_lo > 0.0 && scale_hi >= scale_lo && std::isfinite(scale_hi))) {
    throw ValidationError("dataset.scale: need 0 < scale_lo <= scale_hi");
  }
}

void DatasetConfig::validate() const {
  if (per_class == 0) throw ValidationError("dataset.per_class: must be >= 1");
  ratios.validate();
  mix.validate();
  model.validate();
}

std::string DatasetConfig::canonical() const {
  std::ostringstream os;
  auto range = [&](const char* key, const Range& r) {
    os << key << '=' << fmt(r.lo) << ',' << fmt(r.hi) << '\n';
  };
  os << "seed=" << seed << '\n'
     << "per_class=" << per_class << '\n'
     << "ratios=" << fmt(ratios.train) << ',' << fmt(ratios.val) << ',' << fmt(ratios.test) << '\n'
     << "max_delay=" << mix.max_delay << '\n'
     << "scale=" << fmt(mix.scale_lo) << ',' << fmt(mix.scale_hi) << '\n';
  range("step_rate", model.step_rate);
  range("step_decay", model.step_decay);
  range("step_carrier", model.step_carrier);
  range("first_step", model.first_step);
  os << "step_jitter=" << fmt(model.step_jitter) << '\n';
  range("animal_rate", model.animal_rate);
  os << "animal_jitter=" << fmt(model.animal_jitter) << '\n';
  range("animal_amplitude", model.animal_amplitude);
  range("animal_decay", model.animal_decay);
  range("animal_carrier", model.animal_carrier);
  range("rumble_band", model.rumble_band);
  os << "rumble_components=" << model.rumble_components << '\n';
  range("am_rate", model.am_rate);
  range("am_depth", model.am_depth);
  os << "noise_floor=" << fmt(model.noise_floor) << '\n';
  return os.str();
}

std::uint64_t DatasetConfig::digest() const { return fnv1a(canonical()); }

std::vector<const Sample*> Dataset::in_split(Split s) const {
  std::vector<const Sample*> out;
  for (const auto& smp : samples)
    if (smp.wave.split == s) out.push_back(&smp);
  return out;
}

std::uint64_t Dataset::digest() const {
  Fnv1a h;
  h.update(config.canonical());
  for (auto s : kAllSplits) {
    h.update(to_string(s));
    for (auto id : sources.of(s)) h.update_u64(id);
  }
  for (const auto& smp : samples) {
    const auto& w = smp.wave;
    h.update_u64(w.id);
    h.update_u64(static_cast<std::uint64_t>(w.split));
    h.update_u64(w.labels.pack());
    h.update(smp.combo);
    for (auto id : w.source_ids) h.update_u64(id);
    h.update_u64(smp.delay);
    const double scales[2] = {smp.a, smp.b};
    h.update(std::span<const double>(scales));
    h.update_u64(w.seed);
    h.update(w.samples);
  }
  return h.value();
}

Dataset build_dataset(const std::vector<Waveform>& corpus,
                      const SplitAssignment& splits, const ComboCounts& counts,
                      const MixConfig& mix_cfg, std::uint64_t seed) {
  mix_cfg.validate();
  std::map<std::uint64_t, const Waveform*> by_id;
  for (const auto& w : corpus) by_id[w.id] = &w;

  // pool[split][class] -> source waveforms, in split order
  std::array<std::array<std::vector<const Waveform*>, 4>, 3> pool;
  for (auto s : kAllSplits) {
    for (auto id : splits.of(s)) {
      auto it = by_id.find(id);
      if (it == by_id.end()) throw ValidationError("split id " + std::to_string(id) + " not in corpus");
      if (it->second->split != s) {
        throw LeakageError("source " + std::to_string(id) + " is tagged " +
                           to_string(it->second->split) + " but assigned to " + to_string(s));
      }
      pool[static_cast<std::size_t>(s)][static_cast<std::size_t>(class_of_source(id))]
          .push_back(it->second);
    }
  }

  Dataset ds;
  ds.sources = splits;
  std::uint64_t next_id = 0;
  const double log_lo = std::log(mix_cfg.scale_lo), log_hi = std::log(mix_cfg.scale_hi);
  for (auto s : kAllSplits) {
    const auto si = static_cast<std::size_t>(s);
    for (const auto& combo : standard_combos()) {
      auto it = counts.find(combo.name());
      const std::size_t n = it == counts.end() ? 0 : it->second[si];
      if (n == 0) continue;
      for (auto cls : combo.classes) {
        if (pool[si][static_cast<std::size_t>(cls)].empty()) {
          throw ValidationError("build_dataset: no " + to_string(cls) + " sources in the " +
                                to_string(s) + " split for combo " + combo.name());
        }
      }
      for (std::size_t k = 0; k < n; ++k) {
        const auto sample_seed = mix_seed(seed, next_id);
        Rng rng(sample_seed);
        Sample smp;
        smp.combo = combo.name();
        if (combo.classes.size() == 1) {
          const auto& src = pool[si][static_cast<std::size_t>(combo.classes[0])];
          smp.wave = *src[k % src.size()];
        } else {
          auto first = combo.classes[0], second = combo.classes[1];
          if (rng.uniform() < 0.5) std::swap(first, second);
          const auto& p = pool[si][static_cast<std::size_t>(first)];
          const auto& q = pool[si][static_cast<std::size_t>(second)];
          const Waveform& primary = *p[rng.index(p.size())];
          const Waveform& secondary = *q[rng.index(q.size())];
          smp.delay = rng.index(mix_cfg.max_delay + 1);
          smp.a = std::exp(rng.uniform(log_lo, log_hi));
          smp.b = std::exp(rng.uniform(log_lo, log_hi));
          smp.wave = superpose(primary, secondary, smp.delay, smp.a, smp.b, mix_cfg.max_delay);
        }
        smp.wave.id = next_id++;
        smp.wave.split = s;
        smp.wave.seed = sample_seed;
        ds.samples.push_back(std::move(smp));
      }
    }
  }
  return ds;
}

Dataset generate_dataset(const DatasetConfig& cfg) {
  cfg.validate();
  std::vector<Waveform> corpus;
  for (auto cls : kAllClasses) {
    auto events = gen_event(cls, cfg.per_class,
                            mix_seed(cfg.seed, 1000 + static_cast<std::uint64_t>(cls)),
                            cfg.model);
    std::move(events.begin(), events.end(), std::back_inserter(corpus));
  }
  auto parts = split(corpus, cfg.ratios, mix_seed(cfg.seed, 2000));
  for (auto& w : corpus) w.split = parts.split_of(w.id);

  ComboCounts counts;
  for (const auto& combo : standard_combos()) counts[combo.name()] = cfg.ratios.counts(cfg.per_class);
  Dataset ds = build_dataset(corpus, parts, counts, cfg.mix, mix_seed(cfg.seed, 3000));
  ds.config = cfg;
  return ds;
}

std::vector<std::string> check_leakage(const Dataset& ds) {
  std::vector<std::string> problems;
  std::map<std::uint64_t, Split> home;
  for (auto s : kAllSplits) {
    for (auto id : ds.sources.of(s)) {
      auto [it, fresh] = home.emplace(id, s);
      if (!fresh) {
        problems.push_back("source " + std::to_string(id) + " listed in " +
                           to_string(it->second) + " and " + to_string(s));
      }
    }
  }
  for (const auto& smp : ds.samples) {
    for (auto id : smp.wave.source_ids) {
      auto it = home.find(id);
      if (it == home.end()) {
        problems.push_back("sample " + std::to_string(smp.wave.id) + " uses unknown source " +
                           std::to_string(id));
      } else if (it->second != smp.wave.split) {
        problems.push_back("sample " + std::to_string(smp.wave.id) + " (" +
                           to_string(smp.wave.split) + ") uses " + to_string(it->second) +
                           " source " + std::to_string(id));
      }
    }
  }
  return problems;
}

}  // namespace hymad::datagen
