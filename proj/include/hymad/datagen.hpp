#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "hymad/errors.hpp"

namespace hymad::datagen {

inline constexpr double kSampleRate = 8000.0;
inline constexpr std::size_t kSegmentLen = 8000;
inline constexpr std::size_t kNumLabels = 4;
inline constexpr std::uint32_t kDatasetVersion = 1;

enum class EventClass { kHuman = 0, kAnimal = 1, kVehicle = 2, kNoEvent = 3 };
enum class Split { kTrain = 0, kVal = 1, kTest = 2 };

inline constexpr std::array<EventClass, 4> kAllClasses = {
    EventClass::kHuman, EventClass::kAnimal, EventClass::kVehicle,
    EventClass::kNoEvent};
inline constexpr std::array<Split, 3> kAllSplits = {Split::kTrain, Split::kVal,
                                                    Split::kTest};

std::string to_string(EventClass cls);
EventClass parse_event_class(const std::string& text);
std::string to_string(Split split);
Split parse_split(const std::string& text);

/// Bits ordered [human, animal, vehicle, no_event].
struct LabelVector {
  std::array<std::uint8_t, kNumLabels> bits{};

  static LabelVector of(EventClass cls);
  /// Union of activity bits; no_event is set iff no activity remains.
  LabelVector merged(const LabelVector& other) const;
  std::size_t activity_count() const;
  /// no_event exclusive with activities and at most two activities.
  bool valid() const;
  /// Bit j of the byte holds bits[j].
  std::uint8_t pack() const;
  static LabelVector unpack(std::uint8_t byte);
  std::string name() const;  // e.g. "human+vehicle", "no_event"

  bool operator==(const LabelVector&) const = default;
};

struct Waveform {
  std::uint64_t id = 0;
  std::vector<double> samples;
  std::vector<std::uint64_t> source_ids;
  LabelVector labels;
  Split split = Split::kTrain;
  std::uint64_t seed = 0;
};

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

/// Parameter ranges of the synthetic signatures. Times in seconds,
/// frequencies in Hz, amplitudes relative to a unit-peak footstep.
struct EventModel {
  Range step_rate{1.5, 2.5};
  Range step_decay{0.030, 0.050};
  Range step_carrier{90.0, 150.0};
  Range first_step{0.0, 0.2};
  double step_jitter = 0.05;  // fraction of the step period

  Range animal_rate{3.0, 6.0};
  double animal_jitter = 0.3;
  Range animal_amplitude{0.3, 0.7};
  Range animal_decay{0.015, 0.025};
  Range animal_carrier{200.0, 320.0};

  Range rumble_band{5.0, 80.0};
  std::size_t rumble_components = 48;
  Range am_rate{0.3, 2.0};
  Range am_depth{0.3, 0.8};

  double noise_floor = 0.02;

  void validate() const;
};

/// Corpus id of the `index`-th generated event of `cls`.
std::uint64_t source_id(EventClass cls, std::size_t index);
EventClass class_of_source(std::uint64_t id);

/// `n` normalized single-event waveforms. Event i is drawn from
/// mix_seed(split_seed, i) so any one can be regenerated alone.
std::vector<Waveform> gen_event(EventClass cls, std::size_t n,
                                std::uint64_t split_seed,
                                const EventModel& model = {});

/// (x - mean) / std with population std; all zeros when std < 1e-12.
std::vector<double> normalize(std::span<const double> x);

/// a·primary[t] + b·secondary[t - delay], zero where t - delay < 0.
std::vector<double> mix(std::span<const double> primary,
                        std::span<const double> secondary, std::size_t delay,
                        double a, double b);

/// Normalized mix with union labels and sources. Throws LeakageError if
/// the inputs belong to different splits.
Waveform superpose(const Waveform& primary, const Waveform& secondary,
                   std::size_t delay, double a, double b,
                   std::size_t max_delay = 4000);

struct SplitRatios {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;

  void validate() const;
  /// Per-split counts for n items; train and val are rounded, test
  /// takes the remainder.
  std::array<std::size_t, 3> counts(std::size_t n) const;
};

struct SplitAssignment {
  std::array<std::vector<std::uint64_t>, 3> ids;

  const std::vector<std::uint64_t>& of(Split s) const {
    return ids[static_cast<std::size_t>(s)];
  }
  /// Throws ValidationError for an unknown id.
  Split split_of(std::uint64_t id) const;
};

/// Per-class stratified shuffle split of single-event waveforms.
SplitAssignment split(const std::vector<Waveform>& corpus,
                      const SplitRatios& ratios, std::uint64_t seed);

/// A label combination: one class or an unordered pair of activities.
struct Combo {
  std::vector<EventClass> classes;

  std::string name() const;
  LabelVector labels() const;
};

/// The four single classes followed by human+animal, human+vehicle,
/// vehicle+animal.
const std::vector<Combo>& standard_combos();
Combo parse_combo(const std::string& name);

struct MixConfig {
  std::size_t max_delay = 4000;
  double scale_lo = 0.5;
  double scale_hi = 2.0;

  void validate() const;
};

/// Requested samples per combo name, indexed by split.
using ComboCounts = std::map<std::string, std::array<std::size_t, 3>>;

struct Sample {
  Waveform wave;  // id is the dataset sample id
  std::string combo;
  std::size_t delay = 0;
  double a = 1.0;
  double b = 0.0;
};

struct DatasetConfig {
  std::uint64_t seed = 1;
  std::size_t per_class = 400;
  SplitRatios ratios;
  MixConfig mix;
  EventModel model;

  void validate() const;
  std::string canonical() const;
  std::uint64_t digest() const;
};

struct Dataset {
  DatasetConfig config;
  SplitAssignment sources;
  std::vector<Sample> samples;

  std::vector<const Sample*> in_split(Split s) const;
  /// FNV-1a over config, sample records and waveform bytes.
  std::uint64_t digest() const;
};

/// Mixes the corpus into samples. Singles reuse a source waveform as is;
/// pairs draw both members from the sample's own split with a uniform
/// delay and log-uniform scales. Sample k uses mix_seed(seed, k).
Dataset build_dataset(const std::vector<Waveform>& corpus,
                      const SplitAssignment& splits, const ComboCounts& counts,
                      const MixConfig& mix_cfg, std::uint64_t seed);

/// Corpus generation, split and mixing for all seven combos with
/// cfg.per_class samples each.
Dataset generate_dataset(const DatasetConfig& cfg);

/// Violations of the split discipline, one message each; empty if clean.
std::vector<std::string> check_leakage(const Dataset& ds);

/// Writes manifest.json plus train.bin / val.bin / test.bin.
void write_dataset(const Dataset& ds, const std::filesystem::path& dir);
/// Reads a directory written by write_dataset; IoError on malformed files.
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace hymad::datagen
