// contrail: command-line front end for the contrail segmentation toolkit.
//
// Subcommands: ingest, train, evaluate, predict, diagnose-hough, plot-metrics.
// Exit codes: 0 success, 2 config error, 3 data error, 4 divergence abort.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "contrail/errors.hpp"
#include "contrail/pipeline.hpp"

namespace {

using contrail::pipeline::RunConfig;

struct TrainArgs {
  std::string config_file;
  std::optional<std::string> loss, manifest, out_dir, encoder_variant,
      pretrained;
  std::optional<int64_t> steps, eval_every, checkpoint_every;
  std::optional<int> batch_size, threads, out_size, encoder_depth;
  std::optional<double> lr, alpha, gamma;
  std::optional<uint64_t> seed;
  std::optional<std::string> resume;
};

RunConfig resolve_config(const TrainArgs& a) {
  RunConfig cfg;
  if (!a.config_file.empty()) cfg = RunConfig::from_json_file(a.config_file);
  if (a.loss) cfg.loss_id = *a.loss;
  if (a.manifest) cfg.manifest_path = *a.manifest;
  if (a.out_dir) cfg.out_dir = *a.out_dir;
  if (a.steps) cfg.steps = *a.steps;
  if (a.eval_every) cfg.eval_every = *a.eval_every;
  if (a.checkpoint_every) cfg.checkpoint_every = *a.checkpoint_every;
  if (a.batch_size) cfg.batch_size = *a.batch_size;
  if (a.threads) cfg.threads = *a.threads;
  if (a.out_size) cfg.augment.out_size = *a.out_size;
  if (a.encoder_depth) cfg.model.encoder_depth = *a.encoder_depth;
  if (a.encoder_variant) cfg.model.encoder_variant = *a.encoder_variant;
  if (a.pretrained) cfg.pretrained_encoder = *a.pretrained;
  if (a.lr) cfg.learning_rate = *a.lr;
  if (a.alpha) cfg.sr.alpha = *a.alpha;
  if (a.gamma) cfg.focal.gamma = *a.gamma;
  if (a.seed) cfg.seed = *a.seed;
  if (cfg.manifest_path.empty()) {
    throw contrail::ConfigError("a data manifest is required (--manifest)");
  }
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"contrail segmentation toolkit"};
  app.require_subcommand(1);

  // ingest ------------------------------------------------------------------
  auto* ingest_cmd = app.add_subcommand(
      "ingest", "convert a two-band scene into a normalized labeled scene");
  std::string scene_path, mask_path, scene_id, split = "train", out_dir = "data";
  std::string manifest_out;
  int band_a = 13, band_b = 15;
  double lo_pct = 2.0, hi_pct = 98.0;
  ingest_cmd->add_option("--scene", scene_path,
                         "scene file (.nc) or BTDR stem")->required();
  ingest_cmd->add_option("--mask", mask_path, "label mask PNG")->required();
  ingest_cmd->add_option("--scene-id", scene_id, "scene identifier")->required();
  ingest_cmd->add_option("--split", split, "train|eval");
  ingest_cmd->add_option("--out", out_dir, "output directory");
  ingest_cmd->add_option("--manifest", manifest_out, "manifest file to append");
  ingest_cmd->add_option("--band-a", band_a, "shorter-wavelength band id");
  ingest_cmd->add_option("--band-b", band_b, "longer-wavelength band id");
  ingest_cmd->add_option("--lo", lo_pct, "low normalization percentile");
  ingest_cmd->add_option("--hi", hi_pct, "high normalization percentile");

  // train -------------------------------------------------------------------
  auto* train_cmd = app.add_subcommand("train", "train a segmentation model");
  TrainArgs ta;
  train_cmd->add_option("--config", ta.config_file, "run configuration JSON");
  train_cmd->add_option("--loss", ta.loss, "dice|logdice|focal|sr");
  train_cmd->add_option("--manifest", ta.manifest, "data manifest");
  train_cmd->add_option("--out", ta.out_dir, "run output directory");
  train_cmd->add_option("--steps", ta.steps, "training steps");
  train_cmd->add_option("--batch-size", ta.batch_size, "batch size");
  train_cmd->add_option("--lr", ta.lr, "learning rate");
  train_cmd->add_option("--seed", ta.seed, "RNG seed override");
  train_cmd->add_option("--eval-every", ta.eval_every, "evaluation period");
  train_cmd->add_option("--checkpoint-every", ta.checkpoint_every,
                        "checkpoint period");
  train_cmd->add_option("--threads", ta.threads, "CPU threads");
  train_cmd->add_option("--out-size", ta.out_size, "training crop size");
  train_cmd->add_option("--encoder", ta.encoder_variant, "resnet18|resnet34");
  train_cmd->add_option("--encoder-depth", ta.encoder_depth, "2..5");
  train_cmd->add_option("--pretrained-encoder", ta.pretrained,
                        "encoder weight archive to load");
  train_cmd->add_option("--alpha", ta.alpha, "SR pixel-term weight");
  train_cmd->add_option("--gamma", ta.gamma, "focal gamma");
  train_cmd->add_option("--resume", ta.resume, "checkpoint directory to resume");

  // evaluate ----------------------------------------------------------------
  auto* eval_cmd = app.add_subcommand("evaluate", "per-scene IoU of a checkpoint");
  std::string eval_ck, eval_manifest, eval_table;
  bool eval_oracle = false;
  eval_cmd->add_option("--checkpoint", eval_ck, "checkpoint directory");
  eval_cmd->add_option("--manifest", eval_manifest, "data manifest")->required();
  eval_cmd->add_option("--table", eval_table, "output table path");
  eval_cmd->add_flag("--oracle", eval_oracle,
                     "score ground truth against itself (no model)");

  // predict -----------------------------------------------------------------
  auto* pred_cmd = app.add_subcommand("predict", "segment an arbitrary image");
  std::string pred_ck, pred_image, pred_out = "predictions";
  bool pred_whole = false;
  pred_cmd->add_option("--checkpoint", pred_ck, "checkpoint directory")->required();
  pred_cmd->add_option("--image", pred_image, "input image")->required();
  pred_cmd->add_option("--out", pred_out, "output directory");
  pred_cmd->add_flag("--whole", pred_whole, "disable tiled inference");

  // diagnose-hough ----------------------------------------------------------
  auto* diag_cmd = app.add_subcommand(
      "diagnose-hough", "six-panel Hough-space view of target vs prediction");
  std::string diag_mask, diag_out = "diagnostics";
  std::string diag_pred, diag_ck, diag_image;
  int diag_ntheta = 180, diag_nms = 2;
  double diag_threshold = 0.5;
  diag_cmd->add_option("--mask", diag_mask, "target mask PNG")->required();
  diag_cmd->add_option("--out", diag_out, "output directory");
  diag_cmd->add_option("--pred-mask", diag_pred, "prediction mask PNG");
  diag_cmd->add_option("--checkpoint", diag_ck, "checkpoint for prediction");
  diag_cmd->add_option("--image", diag_image, "probe image for the checkpoint");
  diag_cmd->add_option("--n-theta", diag_ntheta, "theta bins");
  diag_cmd->add_option("--threshold", diag_threshold, "line extraction threshold");
  diag_cmd->add_option("--nms-radius", diag_nms, "suppression radius in bins");

  // plot-metrics ------------------------------------------------------------
  auto* plot_cmd = app.add_subcommand("plot-metrics", "IoU-vs-step curves");
  std::vector<std::string> plot_logs;
  std::string plot_out = "iou_curves.png";
  plot_cmd->add_option("logs", plot_logs, "metrics.log files")->required();
  plot_cmd->add_option("--out", plot_out, "output PNG");

  CLI11_PARSE(app, argc, argv);

  try {
    namespace cp = contrail::pipeline;
    namespace ci = contrail::ingest;

    if (*ingest_cmd) {
      auto [a, b] = ci::load_scene(scene_path, band_a, band_b);
      auto btd = ci::compute_btd(a, b);
      auto norm = ci::normalize(btd, lo_pct, hi_pct);
      if (norm.degenerate) {
        std::cerr << "warning: degenerate percentile range; image set to 0.5\n";
      }
      auto scene = ci::pair_with_mask(norm.image, mask_path, scene_id,
                                      ci::split_from_string(split));
      auto files = ci::save_scene(scene, out_dir, &norm, lo_pct, hi_pct);
      if (!manifest_out.empty()) {
        cp::append_manifest(manifest_out,
                            {scene_id, files.image_png.string(),
                             files.mask_png.string(), scene.split});
      }
      std::cout << "wrote " << files.image_png.string() << "\n";
    } else if (*train_cmd) {
      auto cfg = resolve_config(ta);
      std::optional<std::filesystem::path> resume;
      if (ta.resume) resume = *ta.resume;
      auto state = cp::train(cfg, resume);
      std::cout << "model parameters: "
                << contrail::model::parameter_count(state.model) << "\n";
      std::cout << "finished at step " << state.step << "; checkpoint "
                << state.final_checkpoint.string() << "\n";
      if (!state.history.empty()) {
        std::cout << "final val IoU " << state.history.back().val_iou << "\n";
      }
    } else if (*eval_cmd) {
      if (!eval_oracle && eval_ck.empty()) {
        throw contrail::ConfigError("--checkpoint is required unless --oracle");
      }
      std::optional<std::filesystem::path> table;
      if (!eval_table.empty()) table = eval_table;
      auto report = cp::evaluate(eval_ck, eval_manifest, table, eval_oracle);
      for (const auto& row : report.rows) {
        std::cout << row.scene_id << " " << row.iou << "\n";
      }
      std::cout << "mean " << report.mean_iou << "\n";
    } else if (*pred_cmd) {
      auto result = cp::predict(pred_ck, pred_image, pred_out, pred_whole);
      std::cout << "wrote " << result.mask_png.string() << " and "
                << result.overlay_png.string() << "\n";
    } else if (*diag_cmd) {
      std::optional<std::filesystem::path> pred, ck, img;
      if (!diag_pred.empty()) pred = diag_pred;
      if (!diag_ck.empty()) ck = diag_ck;
      if (!diag_image.empty()) img = diag_image;
      auto diag = cp::diagnose_hough(diag_mask, diag_out, pred, ck, img,
                                     diag_ntheta, 1.0, diag_threshold, diag_nms);
      std::cout << "target lines: " << diag.target_lines.size()
                << ", prediction lines: " << diag.prediction_lines.size()
                << "\nwrote " << diag.figure.string() << "\n";
    } else if (*plot_cmd) {
      std::vector<std::filesystem::path> logs(plot_logs.begin(), plot_logs.end());
      cp::plot_metrics(logs, plot_out);
      std::cout << "wrote " << plot_out << "\n";
    }
  } catch (const contrail::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return contrail::kExitConfigError;
  } catch (const contrail::DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << "\n";
    return contrail::kExitDivergence;
  } catch (const contrail::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return contrail::kExitDataError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return contrail::kExitFailure;
  }
  return contrail::kExitOk;
}
