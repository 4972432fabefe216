#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "hymad/datagen.hpp"
#include "hymad/metrics.hpp"
#include "hymad/model.hpp"

namespace hymad::train {

struct TrainConfig {
  double lr = 1e-2;
  std::size_t batch_size = 128;
  std::size_t max_epochs = 200;
  std::uint64_t seed = 1;
  double weight_decay = 0.01;
  std::size_t eval_every = 1;        // epochs between validation passes
  std::size_t checkpoint_every = 0;  // 0: only best.ckpt and last.ckpt
  std::size_t patience = 0;          // evals without improvement; 0 disables
  /// Stop once validation exact-match reaches this value; 0 disables.
  double target_val_exact = 0.0;
  /// Use at most this many training samples per epoch; 0 means all.
  std::size_t max_train_samples = 0;

  void validate() const;
  std::string canonical() const;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  std::optional<double> val_loss;
  std::optional<metrics::MetricsReport> val;
  double seconds = 0.0;
  std::uint64_t param_digest = 0;
};

struct RunRecord {
  std::uint64_t dataset_digest = 0;
  std::uint64_t model_digest = 0;
  std::string train_config;
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;  // 0 when never validated
  std::string stop_reason;

  std::vector<double> losses() const;
  /// Header plus one row per epoch. Wall time is left out so the text
  /// is reproducible.
  std::string to_text() const;
};

struct TrainResult {
  model::ModelParams params;       // parameters after the last epoch
  model::ModelParams best_params;  // best validation exact-match
  RunRecord record;
};

struct TrainOptions {
  /// When set: best.ckpt, last.ckpt, periodic checkpoints and
  /// run_record.txt are written here as training progresses.
  std::optional<std::filesystem::path> run_dir;
  std::function<void(const EpochRecord&)> on_epoch;
  /// Starting parameters; init_params(cfg, seed) when absent.
  std::optional<model::ModelParams> init;
};

/// Mini-batch AdamW on BCE-with-logits over the train split. Batch
/// gradients are accumulated sample by sample (each backward scaled by
/// 1/B), which equals the gradient of the batch-mean loss. Throws
/// NumericError naming the batch's sample ids on a non-finite loss or
/// gradient.
TrainResult train(const datagen::Dataset& ds, const model::ModelConfig& mcfg,
                  const TrainConfig& tcfg, const TrainOptions& options = {});

struct EvalResult {
  metrics::MetricsReport report;
  metrics::CurveResult roc;
  metrics::CurveResult pr;
  double mean_loss = 0.0;
  std::vector<std::uint64_t> ids;
  std::vector<std::vector<double>> logits;
};

/// Forward pass over `samples` without recording a graph; predictions at
/// threshold τ, scores are sigmoid probabilities.
EvalResult evaluate(const std::vector<const datagen::Sample*>& samples,
                    const model::ModelParams& params,
                    const model::ModelConfig& mcfg, double threshold,
                    const std::string& split_name);

/// Loads a checkpoint for `mcfg` (CompatibilityError on digest mismatch)
/// and evaluates one split.
EvalResult evaluate_checkpoint(const std::filesystem::path& checkpoint,
                               const datagen::Dataset& ds, datagen::Split split,
                               const model::ModelConfig& mcfg, double threshold);

/// report.txt, roc.csv, pr.csv and logits.csv into `dir`.
void write_eval(const EvalResult& result, const std::filesystem::path& dir);

std::vector<std::string> label_names();

struct AblationRow {
  std::string name;
  model::ModelConfig config;
  metrics::MetricsReport test;
  RunRecord record;
};

/// The four comparison variants derived from `base`:
///   full             multi-scale sinc front end, cross-attention fusion
///   concat fusion    as full, streams concatenated
///   freq only        as full, no temporal stream
///   no multi-scale   one plain-conv branch, cross-attention fusion
/// If `base` has a single kernel length L the multi-scale set is
/// {L/2 rounded up to odd, L, 2L-1}.
std::vector<std::pair<std::string, model::ModelConfig>> ablation_configs(
    const model::ModelConfig& base);

/// Trains each variant with the same seed and data and evaluates the
/// best-validation parameters on the test split.
std::vector<AblationRow> run_ablations(
    const datagen::Dataset& ds, const model::ModelConfig& base,
    const TrainConfig& tcfg,
    const std::function<void(const std::string&, const EpochRecord&)>& on_epoch = {});

/// Fixed-width comparison table: variant, exact, hamming, P, R, F1, AUROC.
std::string ablation_table(const std::vector<AblationRow>& rows);

}  // namespace hymad::train
