#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "hymad/cli.hpp"
#include "hymad/digest.hpp"

namespace hymad::cli {

namespace fs = std::filesystem;

namespace {

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  os << text;
  if (!os) throw IoError("write failed for " + path.string());
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

std::vector<std::string> list_files(const fs::path& dir) {
  std::vector<std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) out.push_back(fs::relative(e.path(), dir).generic_string());
  std::sort(out.begin(), out.end());
  return out;
}

struct Context {
  std::ostream& out;
  AppConfig cfg;
  std::vector<Setting> settings;
  std::set<std::string> sections;
  fs::path out_dir;
  RunManifest manifest;
};

void finish(Context& ctx) {
  ctx.manifest.config_digest = hex_digest(ctx.cfg.digest());
  for (const auto& s : ctx.settings)
    if (s.source != "file") ctx.manifest.overrides.push_back(s);
  ctx.manifest.finished_at = utc_now();
  ctx.manifest.outputs = list_files(ctx.out_dir);
  if (std::find(ctx.manifest.outputs.begin(), ctx.manifest.outputs.end(), "run_manifest.json") ==
      ctx.manifest.outputs.end()) {
    ctx.manifest.outputs.push_back("run_manifest.json");
    std::sort(ctx.manifest.outputs.begin(), ctx.manifest.outputs.end());
  }
  write_text(ctx.out_dir / "run_manifest.json", ctx.manifest.to_json());
}

void cmd_generate(Context& ctx) {
  using namespace datagen;
  auto ds = generate_dataset(ctx.cfg.dataset);
  const auto leaks = check_leakage(ds);
  if (!leaks.empty()) throw LeakageError("split leakage: " + leaks.front());
  write_dataset(ds, ctx.out_dir);
  write_text(ctx.out_dir / "config.ini", ctx.cfg.to_ini());
  ctx.manifest.dataset_digest = hex_digest(ds.digest());

  std::map<std::string, std::array<std::size_t, 3>> counts;
  for (const auto& s : ds.samples) ++counts[s.combo][static_cast<std::size_t>(s.wave.split)];
  char line[128];
  std::snprintf(line, sizeof line, "%-16s %8s %8s %8s\n", "class", "train", "val", "test");
  ctx.out << line;
  std::array<std::size_t, 3> total{};
  for (const auto& [combo, c] : counts) {
    std::snprintf(line, sizeof line, "%-16s %8zu %8zu %8zu\n", combo.c_str(), c[0], c[1], c[2]);
    ctx.out << line;
    for (std::size_t i = 0; i < 3; ++i) total[i] += c[i];
  }
  std::snprintf(line, sizeof line, "%-16s %8zu %8zu %8zu\n", "total", total[0], total[1], total[2]);
  ctx.out << line << "dataset digest " << ctx.manifest.dataset_digest << " written to "
          << ctx.out_dir.string() << '\n';
}

void cmd_train(Context& ctx, const fs::path& dataset_dir) {
  const auto ds = datagen::load_dataset(dataset_dir);
  ctx.manifest.dataset_digest = hex_digest(ds.digest());
  write_text(ctx.out_dir / "config.ini", ctx.cfg.to_ini());

  train::TrainOptions opts;
  opts.run_dir = ctx.out_dir;
  opts.on_epoch = [&](const train::EpochRecord& e) {
    char line[200];
    if (e.val) {
      std::snprintf(line, sizeof line,
                    "epoch %zu train_loss %.6f val_loss %.6f val_exact %.4f val_hamming %.4f (%.1fs)\n",
                    e.epoch, e.train_loss, *e.val_loss, e.val->strict_match, e.val->hamming,
                    e.seconds);
    } else {
      std::snprintf(line, sizeof line, "epoch %zu train_loss %.6f (%.1fs)\n", e.epoch,
                    e.train_loss, e.seconds);
    }
    ctx.out << line << std::flush;
    ctx.manifest.epoch_seconds.push_back(e.seconds);
  };

  train::TrainResult result;
  try {
    result = train::train(ds, ctx.cfg.model, ctx.cfg.train, opts);
  } catch (const NumericError& e) {
    const auto diag = ctx.out_dir / "nan_diagnostic.txt";
    write_text(diag, std::string(e.what()) + "\n\n" + ctx.cfg.to_ini());
    finish(ctx);
    throw NumericError(std::string(e.what()) + "; diagnostic written to " + diag.string());
  }

  const auto val = ds.in_split(datagen::Split::kVal);
  if (!val.empty()) {
    auto ev = train::evaluate(val, result.best_params, ctx.cfg.model, ctx.cfg.model.threshold,
                              "val");
    train::write_eval(ev, ctx.out_dir / "val");
  }
  ctx.out << "best epoch " << result.record.best_epoch << ", stopped: "
          << result.record.stop_reason << "\nrun written to " << ctx.out_dir.string() << '\n';
}

void cmd_evaluate(Context& ctx, const fs::path& dataset_dir,
                  const std::optional<std::string>& checkpoint, bool ablate) {
  const auto ds = datagen::load_dataset(dataset_dir);
  ctx.manifest.dataset_digest = hex_digest(ds.digest());

  if (ablate) {
    write_text(ctx.out_dir / "config.ini", ctx.cfg.to_ini());
    auto rows = train::run_ablations(
        ds, ctx.cfg.model, ctx.cfg.train,
        [&](const std::string& name, const train::EpochRecord& e) {
          ctx.out << name << " epoch " << e.epoch << " train_loss " << e.train_loss << '\n'
                  << std::flush;
        });
    make_dir(ctx.out_dir / "ablation");
    for (const auto& r : rows)
      write_text(ctx.out_dir / "ablation" / (r.name + "_run_record.txt"), r.record.to_text());
    const auto table = train::ablation_table(rows);
    write_text(ctx.out_dir / "ablation.txt", table);
    ctx.out << table;
    return;
  }

  if (!checkpoint) throw ValidationError("evaluate: --checkpoint is required unless --ablate");
  // The model shape comes from the checkpoint unless the config file or
  // environment says otherwise; then the two must agree.
  auto mcfg = ctx.cfg.model;
  if (!ctx.sections.count("model")) {
    mcfg = model::parse_canonical(model::read_checkpoint_header(*checkpoint).config_text);
    mcfg.threshold = ctx.cfg.model.threshold;
    ctx.cfg.model = mcfg;
  }
  auto ev = train::evaluate_checkpoint(*checkpoint, ds, ctx.cfg.eval_split, mcfg, mcfg.threshold);
  train::write_eval(ev, ctx.out_dir);
  write_text(ctx.out_dir / "config.ini", ctx.cfg.to_ini());
  ctx.out << ev.report.to_text();
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ValidationError*>(&e) || dynamic_cast<const ShapeError*>(&e) ||
      dynamic_cast<const UsageError*>(&e))
    return kExitConfig;
  if (dynamic_cast<const IoError*>(&e)) return kExitIo;
  if (dynamic_cast<const CompatibilityError*>(&e) || dynamic_cast<const LeakageError*>(&e))
    return kExitCompat;
  if (dynamic_cast<const NumericError*>(&e)) return kExitNumeric;
  return kExitFailure;
}

}  // namespace

std::string RunManifest::to_json() const {
  nlohmann::ordered_json j;
  j["command"] = command;
  j["config_digest"] = config_digest;
  j["dataset_digest"] = dataset_digest;
  j["tool_version"] = tool_version;
  j["started_at"] = started_at;
  j["finished_at"] = finished_at;
  if (!epoch_seconds.empty()) j["epoch_seconds"] = epoch_seconds;
  j["outputs"] = outputs;
  auto& ov = j["overrides"] = nlohmann::ordered_json::array();
  for (const auto& s : overrides)
    ov.push_back({{"source", s.source}, {"key", s.key}, {"value", s.value}});
  return j.dump(2) + "\n";
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err,
        const Environment& env) {
  CLI::App app{"Multi-label seismic event detection: dataset, training, evaluation", "hymad"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  std::optional<std::string> config_path, seed;
  std::string out_dir = "hymad_out";
  app.add_option("--config", config_path, "INI config with [dataset] [model] [train] [eval]");
  app.add_option("--seed", seed, "Seed for dataset generation and training");
  app.add_option("--out", out_dir, "Output directory")->capture_default_str();

  // Subcommand flags are collected as raw text and applied through the
  // config setters so errors name the config key.
  std::vector<std::pair<std::string, std::optional<std::string>*>> mapped;
  auto flag = [&](CLI::App* sub, const std::string& name, const std::string& key,
                  std::optional<std::string>& slot, const std::string& help) {
    sub->add_option(name, slot, help + " (" + key + ")");
    mapped.emplace_back(key, &slot);
  };

  auto* gen = app.add_subcommand("generate", "Generate the synthetic dataset into --out");
  std::optional<std::string> per_class;
  flag(gen, "--per-class", "dataset.per_class", per_class, "Source events per class");

  auto* tr = app.add_subcommand("train", "Train a model; the run directory is --out");
  std::string train_dataset;
  std::optional<std::string> fusion, epochs, lr, batch;
  tr->add_option("--dataset", train_dataset, "Dataset directory")->required();
  flag(tr, "--fusion", "model.fusion_mode", fusion, "Fusion mode");
  flag(tr, "--epochs", "train.max_epochs", epochs, "Maximum epochs");
  flag(tr, "--lr", "train.lr", lr, "Learning rate");
  flag(tr, "--batch-size", "train.batch_size", batch, "Mini-batch size");

  auto* ev = app.add_subcommand("evaluate", "Evaluate a checkpoint or run the ablation table");
  std::string eval_dataset;
  std::optional<std::string> checkpoint, split, threshold;
  bool ablate = false;
  ev->add_option("--dataset", eval_dataset, "Dataset directory")->required();
  ev->add_option("--checkpoint", checkpoint, "Checkpoint file");
  flag(ev, "--split", "eval.split", split, "train|val|test");
  flag(ev, "--threshold", "eval.threshold", threshold, "Decision threshold");
  ev->add_flag("--ablate", ablate, "Train and compare the four ablation variants");

  for (auto* sub : {gen, tr, ev}) sub->fallthrough();

  try {
    try {
      app.parse(argc, argv);
    } catch (const CLI::CallForVersion&) {
      out << kToolVersion << '\n';
      return kExitOk;
    } catch (const CLI::Success&) {
      out << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
      return kExitOk;
    } catch (const CLI::ParseError& e) {
      err << "error: " << e.what() << '\n';
      return kExitConfig;
    }

    const auto started = utc_now();
    auto loaded = load_config(config_path ? std::optional<fs::path>(*config_path) : std::nullopt,
                              env);
    Context ctx{out, loaded.config, loaded.settings, loaded.sections, out_dir, {}};
    auto apply = [&](const std::string& key, const std::string& value) {
      set_value(ctx.cfg, key, value);
      ctx.settings.push_back({"flag", key, value});
    };
    if (seed) {
      apply("dataset.seed", *seed);
      apply("train.seed", *seed);
    }
    for (const auto& [key, slot] : mapped)
      if (*slot) apply(key, **slot);
    ctx.cfg.validate();

    ctx.manifest.started_at = started;
    make_dir(ctx.out_dir);
    if (gen->parsed()) {
      ctx.manifest.command = "generate";
      cmd_generate(ctx);
    } else if (tr->parsed()) {
      ctx.manifest.command = "train";
      cmd_train(ctx, train_dataset);
    } else {
      ctx.manifest.command = ablate ? "evaluate --ablate" : "evaluate";
      cmd_evaluate(ctx, eval_dataset, checkpoint, ablate);
    }
    finish(ctx);
    return kExitOk;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e);
  }
}

}  // namespace hymad::cli
