#ifndef CONTRAIL_PIPELINE_HPP
#define CONTRAIL_PIPELINE_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "contrail/data.hpp"
#include "contrail/hough.hpp"
#include "contrail/ingest.hpp"
#include "contrail/losses.hpp"
#include "contrail/model.hpp"

namespace contrail::pipeline {

namespace fs = std::filesystem;

struct RunConfig {
  std::string loss_id = "dice";
  int64_t steps = 0;  // 0 = default for the loss (4000 for sr, 8000 otherwise)
  int batch_size = 8;
  double learning_rate = 1e-4;
  uint64_t seed = 42;
  int64_t eval_every = 100;
  int64_t checkpoint_every = 1000;
  int threads = 2;
  double eval_threshold = 0.5;
  std::string manifest_path;
  std::string out_dir = "runs/default";
  std::string pretrained_encoder;  // optional path to an encoder archive

  data::AugmentationConfig augment;
  model::ModelConfig model;
  losses::FocalConfig focal;
  losses::SRLossConfig sr;

  int64_t effective_steps() const;
  void validate() const;  // throws ConfigError

  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig from_json_file(const fs::path& path);
};

// Data manifest: one scene per line, "scene_id image_path mask_path split".
struct ManifestEntry {
  std::string scene_id;
  std::string image_path;
  std::string mask_path;
  ingest::Split split = ingest::Split::kTrain;
};

std::vector<ManifestEntry> read_manifest(const fs::path& path);
void append_manifest(const fs::path& path, const ManifestEntry& entry);
std::vector<ingest::LabeledScene> load_scenes(
    const std::vector<ManifestEntry>& entries,
    std::optional<ingest::Split> only = std::nullopt);

// Metrics log: append-only text lines "step split iou loss".
struct MetricEntry {
  int64_t step = 0;
  std::string split;
  double iou = 0.0;
  double loss = 0.0;
};

std::vector<MetricEntry> read_metrics_log(const fs::path& path);

// One evaluation point: train and val metrics at a step.
struct EvalPoint {
  int64_t step = 0;
  double train_iou = 0.0, train_loss = 0.0;
  double val_iou = 0.0, val_loss = 0.0;
};

// Checkpoint directory layout: model.pt, optim.pt, meta.json.
struct Checkpoint {
  model::ResUNet model{nullptr};
  model::ModelConfig model_config;
  RunConfig run_config;
  int64_t step = 0;
};

void save_checkpoint(const fs::path& dir, const model::ResUNet& model,
                     torch::optim::Adam& optimizer, int64_t step,
                     const RunConfig& cfg);
Checkpoint load_checkpoint(const fs::path& dir);
void load_optimizer_state(const fs::path& dir, torch::optim::Adam& optimizer);

struct TrainState {
  model::ResUNet model{nullptr};
  int64_t step = 0;
  std::vector<EvalPoint> history;  // one entry per evaluation
  fs::path final_checkpoint;
  fs::path metrics_log;
};

// Runs the training loop, evaluating IoU on the un-augmented eval split
// every eval_every steps and writing checkpoints plus metrics.log under
// cfg.out_dir. Resuming continues the metric log of the original run.
TrainState train(const RunConfig& cfg,
                 const std::optional<fs::path>& resume_checkpoint = std::nullopt);

struct EvalRow {
  std::string scene_id;
  double iou = 0.0;
};
struct EvalReport {
  std::vector<EvalRow> rows;
  double mean_iou = 0.0;
};

// Deterministic per-scene IoU of a checkpointed model over the manifest's
// eval split (center-cropped, augmentation-free). oracle = true scores the
// ground truth against itself instead of running the model.
EvalReport evaluate(const fs::path& checkpoint_dir, const fs::path& manifest,
                    const std::optional<fs::path>& table_out = std::nullopt,
                    bool oracle = false);
EvalReport evaluate_scenes(model::ResUNet& model,
                           const std::vector<ingest::LabeledScene>& scenes,
                           int out_size, double threshold);

struct PredictResult {
  fs::path mask_png;
  fs::path overlay_png;
  Mask mask;
};

// Predicts a contrail mask for an arbitrary image. Inputs larger than the
// model's training size are tiled into overlapping multiple-of-32 windows
// (32 px overlap) and max-blended; force_whole disables tiling.
PredictResult predict(const fs::path& checkpoint_dir, const fs::path& image_path,
                      const fs::path& out_dir, bool force_whole = false);

struct HoughDiagnostics {
  hough::LineSet target_lines;
  hough::LineSet prediction_lines;
  fs::path figure;
};

// Six-panel figure: target mask / rendered target lines / target Hough map
// on the first row, the same for the prediction on the second. The
// prediction comes from pred_mask_path if given, else from running the
// checkpoint on probe_image, else it is the target itself.
HoughDiagnostics diagnose_hough(
    const fs::path& target_mask_path, const fs::path& out_dir,
    const std::optional<fs::path>& pred_mask_path = std::nullopt,
    const std::optional<fs::path>& checkpoint_dir = std::nullopt,
    const std::optional<fs::path>& probe_image = std::nullopt,
    int n_theta = 180, double rho_resolution = 1.0,
    double extract_threshold = 0.5, int nms_radius = 2);

// IoU-vs-step curves for one or more metrics logs, one train and one val
// polyline per log.
void plot_metrics(const std::vector<fs::path>& logs, const fs::path& out_png);

}  // namespace contrail::pipeline

#endif  // CONTRAIL_PIPELINE_HPP
