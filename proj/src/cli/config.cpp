#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "hymad/cli.hpp"
#include "hymad/digest.hpp"

extern char** environ;

namespace hymad::cli {

namespace {

using Setter = std::function<void(AppConfig&, const std::string&)>;

[[noreturn]] void bad(const std::string& key, const std::string& why) {
  throw ValidationError(key + ": " + why);
}

std::string trim(std::string s) {
  auto ws = [](unsigned char c) { return std::isspace(c) != 0; };
  s.erase(s.begin(), std::find_if_not(s.begin(), s.end(), ws));
  s.erase(std::find_if_not(s.rbegin(), s.rend(), ws).base(), s.end());
  return s;
}

// "a, b" and "[a, b]" both split to {"a", "b"}; "" and "[]" to {}.
std::vector<std::string> split_list(std::string text) {
  text = trim(text);
  if (text.size() >= 2 && text.front() == '[' && text.back() == ']')
    text = text.substr(1, text.size() - 2);
  std::vector<std::string> out;
  if (trim(text).empty()) return out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

double to_double(const std::string& key, const std::string& text) {
  const auto t = trim(text);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size() || !std::isfinite(v))
    bad(key, "expected a number, got '" + text + "'");
  return v;
}

std::uint64_t to_u64(const std::string& key, const std::string& text) {
  const auto t = trim(text);
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size())
    bad(key, "expected a non-negative integer, got '" + text + "'");
  return v;
}

std::size_t to_size(const std::string& key, const std::string& text) {
  return static_cast<std::size_t>(to_u64(key, text));
}

bool to_bool(const std::string& key, const std::string& text) {
  const auto t = trim(text);
  if (t == "1" || t == "true" || t == "on" || t == "yes") return true;
  if (t == "0" || t == "false" || t == "off" || t == "no") return false;
  bad(key, "expected a boolean, got '" + text + "'");
}

std::vector<double> to_doubles(const std::string& key, const std::string& text,
                               std::size_t n) {
  const auto items = split_list(text);
  if (items.size() != n)
    bad(key, "expected " + std::to_string(n) + " comma-separated values, got '" + text + "'");
  std::vector<double> out;
  for (const auto& it : items) out.push_back(to_double(key, it));
  return out;
}

std::vector<std::size_t> to_sizes(const std::string& key, const std::string& text) {
  std::vector<std::size_t> out;
  for (const auto& it : split_list(text)) out.push_back(to_size(key, it));
  return out;
}

datagen::Range to_range(const std::string& key, const std::string& text) {
  const auto v = to_doubles(key, text, 2);
  return {v[0], v[1]};
}

template <class T>
T parse_as(const std::string& key, const std::string& text,
           T (*parse)(const std::string&)) {
  try {
    return parse(trim(text));
  } catch (const std::exception& e) {
    const std::string msg = e.what();
    if (msg.rfind(key, 0) == 0) throw;
    bad(key, msg);
  }
}

std::string fmt(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::map<std::string, Setter> make_setters() {
  std::map<std::string, Setter> s;
  using K = const std::string&;

  // [dataset]
  s["dataset.seed"] = [](AppConfig& c, K v) { c.dataset.seed = to_u64("dataset.seed", v); };
  s["dataset.per_class"] = [](AppConfig& c, K v) {
    c.dataset.per_class = to_size("dataset.per_class", v);
  };
  s["dataset.ratios"] = [](AppConfig& c, K v) {
    const auto r = to_doubles("dataset.ratios", v, 3);
    c.dataset.ratios = {r[0], r[1], r[2]};
  };
  s["dataset.max_delay"] = [](AppConfig& c, K v) {
    c.dataset.mix.max_delay = to_size("dataset.max_delay", v);
  };
  s["dataset.scale"] = [](AppConfig& c, K v) {
    const auto r = to_range("dataset.scale", v);
    c.dataset.mix.scale_lo = r.lo;
    c.dataset.mix.scale_hi = r.hi;
  };
  auto range = [&](const char* name, datagen::Range datagen::EventModel::*field) {
    const std::string key = std::string("dataset.") + name;
    s[key] = [key, field](AppConfig& c, K v) { c.dataset.model.*field = to_range(key, v); };
  };
  auto scalar = [&](const char* name, double datagen::EventModel::*field) {
    const std::string key = std::string("dataset.") + name;
    s[key] = [key, field](AppConfig& c, K v) { c.dataset.model.*field = to_double(key, v); };
  };
  using EM = datagen::EventModel;
  range("step_rate", &EM::step_rate);
  range("step_decay", &EM::step_decay);
  range("step_carrier", &EM::step_carrier);
  range("first_step", &EM::first_step);
  scalar("step_jitter", &EM::step_jitter);
  range("animal_rate", &EM::animal_rate);
  scalar("animal_jitter", &EM::animal_jitter);
  range("animal_amplitude", &EM::animal_amplitude);
  range("animal_decay", &EM::animal_decay);
  range("animal_carrier", &EM::animal_carrier);
  range("rumble_band", &EM::rumble_band);
  s["dataset.rumble_components"] = [](AppConfig& c, K v) {
    c.dataset.model.rumble_components = to_size("dataset.rumble_components", v);
  };
  range("am_rate", &EM::am_rate);
  range("am_depth", &EM::am_depth);
  scalar("noise_floor", &EM::noise_floor);

  // [model]
  auto msize = [&](const char* name, std::size_t model::ModelConfig::*field) {
    const std::string key = std::string("model.") + name;
    s[key] = [key, field](AppConfig& c, K v) { c.model.*field = to_size(key, v); };
  };
  using MC = model::ModelConfig;
  msize("filters", &MC::filters);
  msize("input_len", &MC::input_len);
  msize("pool_stride", &MC::pool_stride);
  msize("rnn_hidden", &MC::rnn_hidden);
  msize("d_model", &MC::d_model);
  msize("n_heads", &MC::n_heads);
  msize("n_labels", &MC::n_labels);
  s["model.kernel_lengths"] = [](AppConfig& c, K v) {
    c.model.kernel_lengths = to_sizes("model.kernel_lengths", v);
  };
  s["model.mlp_hidden"] = [](AppConfig& c, K v) {
    c.model.mlp_hidden = to_sizes("model.mlp_hidden", v);
  };
  s["model.frontend"] = [](AppConfig& c, K v) {
    c.model.frontend = parse_as("model.frontend", v, &model::parse_frontend);
  };
  s["model.fusion_mode"] = [](AppConfig& c, K v) {
    c.model.fusion = parse_as("model.fusion_mode", v, &model::parse_fusion_mode);
  };
  s["model.init"] = [](AppConfig& c, K v) {
    const auto t = trim(v);
    if (t == "linear") c.model.init = sincnet::InitStrategy::kLinear;
    else if (t == "low_band") c.model.init = sincnet::InitStrategy::kLowBand;
    else bad("model.init", "unknown strategy '" + v + "' (linear|low_band)");
  };
  s["model.window"] = [](AppConfig& c, K v) {
    const auto t = trim(v);
    if (t == "hamming") c.model.window = sincnet::Window::kHamming;
    else if (t == "none") c.model.window = sincnet::Window::kNone;
    else bad("model.window", "unknown window '" + v + "' (hamming|none)");
  };
  s["model.fs"] = [](AppConfig& c, K v) { c.model.fs = to_double("model.fs", v); };
  s["model.positional_encoding"] = [](AppConfig& c, K v) {
    c.model.positional_encoding = to_bool("model.positional_encoding", v);
  };
  s["model.residual_norm"] = [](AppConfig& c, K v) {
    c.model.residual_norm = to_bool("model.residual_norm", v);
  };

  // [train]
  s["train.lr"] = [](AppConfig& c, K v) { c.train.lr = to_double("train.lr", v); };
  s["train.weight_decay"] = [](AppConfig& c, K v) {
    c.train.weight_decay = to_double("train.weight_decay", v);
  };
  s["train.target_val_exact"] = [](AppConfig& c, K v) {
    c.train.target_val_exact = to_double("train.target_val_exact", v);
  };
  s["train.seed"] = [](AppConfig& c, K v) { c.train.seed = to_u64("train.seed", v); };
  auto tsize = [&](const char* name, std::size_t train::TrainConfig::*field) {
    const std::string key = std::string("train.") + name;
    s[key] = [key, field](AppConfig& c, K v) { c.train.*field = to_size(key, v); };
  };
  using TC = train::TrainConfig;
  tsize("batch_size", &TC::batch_size);
  tsize("max_epochs", &TC::max_epochs);
  tsize("eval_every", &TC::eval_every);
  tsize("checkpoint_every", &TC::checkpoint_every);
  tsize("patience", &TC::patience);
  tsize("max_train_samples", &TC::max_train_samples);

  // [eval]
  s["eval.split"] = [](AppConfig& c, K v) {
    c.eval_split = parse_as("eval.split", v, &datagen::parse_split);
  };
  s["eval.threshold"] = [](AppConfig& c, K v) {
    c.model.threshold = to_double("eval.threshold", v);
  };
  return s;
}

const std::map<std::string, Setter>& setters() {
  static const auto table = make_setters();
  return table;
}

const std::set<std::string> kSections = {"dataset", "model", "train", "eval"};

}  // namespace

void AppConfig::validate() const {
  dataset.validate();
  model.validate();
  train.validate();
  if (!(model.threshold > 0.0 && model.threshold < 1.0))
    throw ValidationError("eval.threshold: must lie in (0, 1), got " + fmt(model.threshold));
}

std::string AppConfig::to_ini() const {
  std::ostringstream os;
  os << "[dataset]\n" << dataset.canonical() << "\n[model]\n" << model.canonical()
     << "\n[train]\n" << train.canonical() << "\n[eval]\n"
     << "split=" << datagen::to_string(eval_split) << '\n'
     << "threshold=" << fmt(model.threshold) << '\n';
  return os.str();
}

std::uint64_t AppConfig::digest() const { return fnv1a(to_ini()); }

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& [k, _] : setters()) out.push_back(k);
  return out;
}

void set_value(AppConfig& cfg, const std::string& key, const std::string& value) {
  auto it = setters().find(key);
  if (it == setters().end()) bad(key, "unknown configuration key");
  it->second(cfg, value);
}

LoadedConfig load_config(const std::optional<std::filesystem::path>& file,
                         const Environment& env) {
  namespace pt = boost::property_tree;
  LoadedConfig out;
  if (file) {
    if (!std::filesystem::is_regular_file(*file))
      throw IoError("cannot open config " + file->string());
    pt::ptree tree;
    try {
      pt::read_ini(file->string(), tree);
    } catch (const pt::ini_parser_error& e) {
      throw ValidationError("config: " + std::string(e.what()));
    }
    for (const auto& [section, body] : tree) {
      if (!body.data().empty()) bad(section, "keys must appear inside a [section]");
      if (!kSections.count(section)) bad(section, "unknown config section");
      out.sections.insert(section);
      for (const auto& [key, value] : body) {
        const auto full = section + "." + key;
        const auto text = value.get_value<std::string>();
        set_value(out.config, full, text);
        out.settings.push_back({"file", full, text});
      }
    }
  }
  // Sorted by variable name, so the application order is stable.
  for (const auto& [name, value] : env) {
    const std::string prefix = "HYMAD_";
    if (name.rfind(prefix, 0) != 0) continue;
    std::string rest = name.substr(prefix.size());
    std::transform(rest.begin(), rest.end(), rest.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    const auto cut = rest.find('_');
    const auto section = rest.substr(0, cut);
    if (cut == std::string::npos || !kSections.count(section))
      bad(name, "environment override must look like HYMAD_<SECTION>_<KEY>");
    const auto full = section + "." + rest.substr(cut + 1);
    if (!setters().count(full)) bad(name, "unknown configuration key " + full);
    set_value(out.config, full, value);
    out.settings.push_back({"env", full, value});
    out.sections.insert(section);
  }
  return out;
}

Environment process_environment() {
  Environment env;
  for (char** e = environ; e && *e; ++e) {
    const std::string entry = *e;
    const auto eq = entry.find('=');
    if (eq != std::string::npos) env[entry.substr(0, eq)] = entry.substr(eq + 1);
  }
  return env;
}

}  // namespace hymad::cli
