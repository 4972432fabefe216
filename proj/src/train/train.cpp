#include "hymad/train.hpp"

#include <chrono>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "hymad/digest.hpp"
#include "hymad/random.hpp"

namespace hymad::train {

namespace {

using datagen::Sample;
using datagen::Split;

std::string fmt(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

Tensor target_of(const Sample& s) {
  std::vector<double> y(datagen::kNumLabels);
  for (std::size_t j = 0; j < y.size(); ++j) y[j] = s.wave.labels.bits[j];
  return Tensor::from({1, datagen::kNumLabels}, std::move(y));
}

double sigmoid(double z) {
  return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

std::string id_list(const std::vector<const Sample*>& batch) {
  std::string out;
  for (const auto* s : batch) {
    if (!out.empty()) out += ',';
    out += std::to_string(s->wave.id);
  }
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  os << text;
  if (!os) throw IoError("write failed for " + path.string());
}

// Exact-match first, then lower validation loss.
bool better(const EpochRecord& a, const EpochRecord& b) {
  if (a.val->strict_match != b.val->strict_match) return a.val->strict_match > b.val->strict_match;
  return *a.val_loss < *b.val_loss;
}

std::size_t odd_at_least(std::size_t v) { return v % 2 == 0 ? v + 1 : v; }

}  // namespace

void TrainConfig::validate() const {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ValidationError("train.lr: must be >= 0");
  if (batch_size == 0) throw ValidationError("train.batch_size: must be >= 1");
  if (max_epochs == 0) throw ValidationError("train.max_epochs: must be >= 1");
  if (!(weight_decay >= 0.0)) throw ValidationError("train.weight_decay: must be >= 0");
  if (eval_every == 0) throw ValidationError("train.eval_every: must be >= 1");
  if (target_val_exact < 0.0 || target_val_exact > 1.0) {
    throw ValidationError("train.target_val_exact: must lie in [0, 1]");
  }
}

std::string TrainConfig::canonical() const {
  std::ostringstream os;
  os << "lr=" << fmt(lr) << '\n'
     << "batch_size=" << batch_size << '\n'
     << "max_epochs=" << max_epochs << '\n'
     << "seed=" << seed << '\n'
     << "weight_decay=" << fmt(weight_decay) << '\n'
     << "eval_every=" << eval_every << '\n'
     << "checkpoint_every=" << checkpoint_every << '\n'
     << "patience=" << patience << '\n'
     << "target_val_exact=" << fmt(target_val_exact) << '\n'
     << "max_train_samples=" << max_train_samples << '\n';
  return os.str();
}

std::vector<double> RunRecord::losses() const {
  std::vector<double> out;
  for (const auto& e : epochs) out.push_back(e.train_loss);
  return out;
}

std::string RunRecord::to_text() const {
  std::ostringstream os;
  os << "dataset_digest: " << hex_digest(dataset_digest) << '\n'
     << "model_digest: " << hex_digest(model_digest) << '\n'
     << "best_epoch: " << best_epoch << '\n'
     << "stop_reason: " << stop_reason << '\n';
  std::istringstream cfg(train_config);
  for (std::string line; std::getline(cfg, line);) os << "train." << line << '\n';
  os << "\nepoch,train_loss,val_loss,val_exact,val_hamming,val_f1,val_auroc,param_digest\n";
  for (const auto& e : epochs) {
    os << e.epoch << ',' << fmt(e.train_loss) << ',';
    if (e.val) {
      os << fmt(*e.val_loss) << ',' << fmt(e.val->strict_match) << ',' << fmt(e.val->hamming)
         << ',' << fmt(e.val->f1) << ',' << (e.val->auroc ? fmt(*e.val->auroc) : "nan");
    } else {
      os << ",,,,";
    }
    os << ',' << hex_digest(e.param_digest) << '\n';
  }
  return os.str();
}

std::vector<std::string> label_names() {
  std::vector<std::string> out;
  for (auto c : datagen::kAllClasses) out.push_back(datagen::to_string(c));
  return out;
}

TrainResult train(const datagen::Dataset& ds, const model::ModelConfig& mcfg,
                  const TrainConfig& tcfg, const TrainOptions& options) {
  tcfg.validate();
  mcfg.validate();
  if (mcfg.input_len != datagen::kSegmentLen || mcfg.n_labels != datagen::kNumLabels) {
    throw CompatibilityError("model expects " + std::to_string(mcfg.input_len) + " samples and " +
                             std::to_string(mcfg.n_labels) + " labels; dataset has " +
                             std::to_string(datagen::kSegmentLen) + " and " +
                             std::to_string(datagen::kNumLabels));
  }
  auto train_set = ds.in_split(Split::kTrain);
  const auto val_set = ds.in_split(Split::kVal);
  if (train_set.empty()) throw ValidationError("train: dataset has no training samples");

  TrainResult result;
  result.params = options.init ? options.init->clone() : model::init_params(mcfg, tcfg.seed);
  auto params = result.params.tensors();
  AdamW opt(params, {.lr = tcfg.lr, .weight_decay = tcfg.weight_decay});

  auto& rec = result.record;
  rec.dataset_digest = ds.digest();
  rec.model_digest = mcfg.digest();
  rec.train_config = tcfg.canonical();
  rec.stop_reason = "max_epochs";
  std::optional<EpochRecord> best;
  std::size_t stale = 0;

  if (options.run_dir) {
    std::error_code ec;
    std::filesystem::create_directories(*options.run_dir, ec);
    if (ec) throw IoError("cannot create " + options.run_dir->string() + ": " + ec.message());
  }

  for (std::size_t epoch = 1; epoch <= tcfg.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(mix_seed(tcfg.seed, 100 + epoch));
    auto order = train_set;
    rng.shuffle(order.begin(), order.end());
    if (tcfg.max_train_samples && order.size() > tcfg.max_train_samples)
      order.resize(tcfg.max_train_samples);

    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += tcfg.batch_size) {
      const std::vector<const Sample*> batch(
          order.begin() + static_cast<std::ptrdiff_t>(start),
          order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + tcfg.batch_size)));
      const double inv = 1.0 / static_cast<double>(batch.size());
      opt.zero_grad();
      for (const auto* s : batch) {
        const auto where = " at epoch " + std::to_string(epoch) + " on sample " +
                           std::to_string(s->wave.id) + " (batch ids " + id_list(batch) + ")";
        double value = 0.0;
        try {
          Tensor logits = model::forward(s->wave.samples, mcfg, result.params);
          Tensor loss = bce_with_logits(logits.reshape({1, mcfg.n_labels}), target_of(*s));
          value = loss.item();
          if (std::isfinite(value)) backward(scale(loss, inv));
        } catch (const NumericError& e) {
          throw NumericError(std::string(e.what()) + where);
        }
        if (!std::isfinite(value)) throw NumericError("non-finite loss" + where);
        loss_sum += value;
      }
      try {
        opt.step();
      } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + " at epoch " + std::to_string(epoch) +
                           " (batch ids " + id_list(batch) + ")");
      }
    }

    EpochRecord er;
    er.epoch = epoch;
    er.train_loss = loss_sum / static_cast<double>(order.size());
    if (!val_set.empty() && epoch % tcfg.eval_every == 0) {
      auto ev = evaluate(val_set, result.params, mcfg, mcfg.threshold, "val");
      er.val = ev.report;
      er.val_loss = ev.mean_loss;
    }
    er.param_digest = result.params.digest();

    bool improved = false;
    if (er.val && (!best || better(er, *best))) {
      best = er;
      rec.best_epoch = epoch;
      result.best_params = result.params.clone();
      improved = true;
      stale = 0;
    } else if (er.val) {
      ++stale;
    }
    er.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    rec.epochs.push_back(er);

    if (options.run_dir) {
      const auto& dir = *options.run_dir;
      if (improved) model::save_checkpoint(dir / "best.ckpt", mcfg, result.best_params);
      model::save_checkpoint(dir / "last.ckpt", mcfg, result.params);
      if (tcfg.checkpoint_every && epoch % tcfg.checkpoint_every == 0) {
        model::save_checkpoint(dir / ("epoch_" + std::to_string(epoch) + ".ckpt"), mcfg,
                               result.params);
      }
      write_text(dir / "run_record.txt", rec.to_text());
    }
    if (options.on_epoch) options.on_epoch(er);

    if (er.val && tcfg.target_val_exact > 0.0 && er.val->strict_match >= tcfg.target_val_exact) {
      rec.stop_reason = "target_val_exact";
      break;
    }
    if (tcfg.patience && stale >= tcfg.patience) {
      rec.stop_reason = "patience";
      break;
    }
  }

  if (!best) {
    // No validation split: the final parameters are the only candidate.
    result.best_params = result.params.clone();
    rec.best_epoch = rec.epochs.back().epoch;
    if (options.run_dir) model::save_checkpoint(*options.run_dir / "best.ckpt", mcfg, result.best_params);
  }
  if (options.run_dir) write_text(*options.run_dir / "run_record.txt", rec.to_text());
  return result;
}

EvalResult evaluate(const std::vector<const datagen::Sample*>& samples,
                    const model::ModelParams& params,
                    const model::ModelConfig& mcfg, double threshold,
                    const std::string& split_name) {
  if (samples.empty()) throw ValidationError("evaluate: split '" + split_name + "' is empty");
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw ValidationError("evaluate: threshold must lie in (0, 1)");
  }
  NoGradGuard no_grad;
  EvalResult out;
  metrics::ScoreMatrix scores;
  metrics::BinaryMatrix pred, truth;
  double loss_sum = 0.0;
  for (const auto* s : samples) {
    Tensor logits = model::forward(s->wave.samples, mcfg, params);
    loss_sum += bce_with_logits(logits.reshape({1, mcfg.n_labels}), target_of(*s)).item();
    std::vector<double> z(logits.data().begin(), logits.data().end());
    std::vector<double> p(z.size());
    for (std::size_t j = 0; j < z.size(); ++j) p[j] = sigmoid(z[j]);
    pred.push_back(model::predict_bits(z, threshold));
    truth.emplace_back(s->wave.labels.bits.begin(), s->wave.labels.bits.end());
    scores.push_back(std::move(p));
    out.ids.push_back(s->wave.id);
    out.logits.push_back(std::move(z));
  }
  out.mean_loss = loss_sum / static_cast<double>(samples.size());
  out.report = metrics::make_report(scores, pred, truth, label_names(), threshold, split_name);
  out.roc = metrics::curve_points(scores, truth, metrics::CurveKind::kRoc);
  out.pr = metrics::curve_points(scores, truth, metrics::CurveKind::kPr);
  return out;
}

EvalResult evaluate_checkpoint(const std::filesystem::path& checkpoint,
                               const datagen::Dataset& ds, datagen::Split split,
                               const model::ModelConfig& mcfg, double threshold) {
  auto ck = model::load_checkpoint(checkpoint, mcfg);
  return evaluate(ds.in_split(split), ck.params, mcfg, threshold, datagen::to_string(split));
}

void write_eval(const EvalResult& result, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  std::string report = result.report.to_text();
  for (const auto& n : result.roc.notices) report += "notice: roc " + n + '\n';
  write_text(dir / "report.txt", report);
  write_text(dir / "roc.csv", metrics::curve_csv(result.roc.points, label_names()));
  write_text(dir / "pr.csv", metrics::curve_csv(result.pr.points, label_names()));
  std::ostringstream logits;
  logits << "id";
  for (const auto& n : label_names()) logits << ',' << n;
  logits << '\n';
  for (std::size_t i = 0; i < result.ids.size(); ++i) {
    logits << result.ids[i];
    for (double z : result.logits[i]) logits << ',' << fmt(z);
    logits << '\n';
  }
  write_text(dir / "logits.csv", logits.str());
}

std::vector<std::pair<std::string, model::ModelConfig>> ablation_configs(
    const model::ModelConfig& base) {
  using model::FusionMode;
  model::ModelConfig full = base;
  full.frontend = model::Frontend::kSinc;
  full.fusion = FusionMode::kCrossAttention;
  if (full.kernel_lengths.size() < 2) {
    const auto l = base.kernel_lengths.at(0);
    full.kernel_lengths = {odd_at_least(l / 2), l, 2 * l - 1};
  }
  auto concat = full;
  concat.fusion = FusionMode::kConcat;
  auto freq = full;
  freq.fusion = FusionMode::kFreqOnly;
  auto single = full;
  single.frontend = model::Frontend::kPlainConv;
  single.kernel_lengths = {base.kernel_lengths.at(0)};
  return {{"full", full},
          {"concat_fusion", concat},
          {"freq_only", freq},
          {"no_multi_scale", single}};
}

std::vector<AblationRow> run_ablations(
    const datagen::Dataset& ds, const model::ModelConfig& base,
    const TrainConfig& tcfg,
    const std::function<void(const std::string&, const EpochRecord&)>& on_epoch) {
  std::vector<AblationRow> rows;
  for (auto& [name, cfg] : ablation_configs(base)) {
    TrainOptions opts;
    if (on_epoch) opts.on_epoch = [&, n = name](const EpochRecord& e) { on_epoch(n, e); };
    auto result = train(ds, cfg, tcfg, opts);
    AblationRow row;
    row.name = name;
    row.config = cfg;
    row.test = evaluate(ds.in_split(Split::kTest), result.best_params, cfg, cfg.threshold, "test")
                   .report;
    row.record = std::move(result.record);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string ablation_table(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  char line[200];
  std::snprintf(line, sizeof line, "%-16s %10s %10s %10s %10s %10s %10s\n", "variant", "exact",
                "hamming", "precision", "recall", "f1", "auroc");
  os << line;
  for (const auto& r : rows) {
    const auto& m = r.test;
    std::snprintf(line, sizeof line, "%-16s %10.4f %10.4f %10.4f %10.4f %10.4f %10s\n",
                  r.name.c_str(), m.strict_match, m.hamming, m.precision, m.recall, m.f1,
                  m.auroc ? std::to_string(*m.auroc).substr(0, 6).c_str() : "n/a");
    os << line;
  }
  return os.str();
}

}  // namespace hymad::train
