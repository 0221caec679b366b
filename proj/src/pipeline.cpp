#include "contrail/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>

#include "contrail/errors.hpp"
#include "contrail/png_io.hpp"

namespace contrail::pipeline {

namespace {

torch::Tensor image_to_tensor(const Image& img) {
  auto t = torch::empty({img.height, img.width}, torch::kFloat32);
  std::memcpy(t.data_ptr<float>(), img.data.data(), img.size() * sizeof(float));
  return t;
}

torch::Tensor mask_to_tensor(const Mask& mask) {
  auto t = torch::empty({mask.height, mask.width}, torch::kFloat32);
  auto* p = t.data_ptr<float>();
  for (size_t i = 0; i < mask.size(); ++i) p[i] = mask.data[i] ? 1.0f : 0.0f;
  return t;
}

Mask tensor_to_mask(const torch::Tensor& binary) {
  auto t = binary.to(torch::kBool).contiguous();
  Mask m(static_cast<int>(t.size(0)), static_cast<int>(t.size(1)));
  auto* p = t.data_ptr<bool>();
  for (size_t i = 0; i < m.size(); ++i) m.data[i] = p[i] ? 1 : 0;
  return m;
}

// [B,1,H,W] image batch and [B,1,H,W] mask batch from samples.
std::pair<torch::Tensor, torch::Tensor> batch_to_tensors(
    const std::vector<data::Sample>& samples) {
  std::vector<torch::Tensor> imgs, msks;
  imgs.reserve(samples.size());
  msks.reserve(samples.size());
  for (const auto& s : samples) {
    imgs.push_back(image_to_tensor(s.image).unsqueeze(0));
    msks.push_back(mask_to_tensor(s.mask).unsqueeze(0));
  }
  return {torch::stack(imgs), torch::stack(msks)};
}

struct LossFn {
  losses::LossId id;
  losses::FocalConfig focal;
  losses::SRLossConfig sr;
  std::optional<hough::HoughGrid> grid;  // built lazily for sr

  torch::Tensor operator()(const torch::Tensor& p, const torch::Tensor& g) {
    switch (id) {
      case losses::LossId::kDice: return losses::dice_loss(p, g);
      case losses::LossId::kLogDice: return losses::log_dice_loss(p, g);
      case losses::LossId::kFocal: return losses::focal_loss(p, g, focal);
      case losses::LossId::kSR: {
        if (!grid) {
          grid = hough::build_grid(static_cast<int>(p.size(-2)),
                                   static_cast<int>(p.size(-1)), sr.n_theta,
                                   sr.rho_resolution);
        }
        // The Hough transform runs per 2-D map; squeeze the channel dim.
        auto p2 = p.dim() == 4 ? p.squeeze(1) : p;
        auto g2 = g.dim() == 4 ? g.squeeze(1) : g;
        return losses::sr_loss(p2, g2, *grid, sr);
      }
    }
    throw ConfigError("unhandled loss id");
  }
};

LossFn make_loss_fn(const RunConfig& cfg) {
  return LossFn{losses::parse_loss_id(cfg.loss_id), cfg.focal, cfg.sr, {}};
}

// Center-crops/pads every scene to out_size and stacks image+mask tensors.
std::vector<std::pair<torch::Tensor, torch::Tensor>> prepare_eval_inputs(
    const std::vector<ingest::LabeledScene>& scenes, int out_size) {
  std::vector<std::pair<torch::Tensor, torch::Tensor>> out;
  out.reserve(scenes.size());
  for (const auto& s : scenes) {
    auto [img, msk] =
        data::pad_or_crop(s.image, s.mask, out_size, data::Placement::kCentered);
    out.emplace_back(image_to_tensor(img), mask_to_tensor(msk));
  }
  return out;
}

struct SplitMetrics {
  double iou = 0.0;
  double loss = 0.0;
};

SplitMetrics eval_split(model::ResUNet& model,
                        const std::vector<std::pair<torch::Tensor, torch::Tensor>>& inputs,
                        LossFn& loss_fn, double threshold) {
  torch::NoGradGuard no_grad;
  model->eval();
  double iou_sum = 0.0, loss_sum = 0.0;
  for (const auto& [img, msk] : inputs) {
    auto x = model::replicate_channels(img.unsqueeze(0).unsqueeze(0));
    auto logits = model->forward(x);
    auto p = torch::sigmoid(logits);
    auto g = msk.unsqueeze(0).unsqueeze(0);
    iou_sum += losses::iou_metric(p, g, threshold);
    loss_sum += loss_fn(p, g).item<double>();
  }
  const double n = static_cast<double>(inputs.size());
  return SplitMetrics{iou_sum / n, loss_sum / n};
}

void write_metric_line(std::ofstream& log, const MetricEntry& e) {
  log << e.step << ' ' << e.split << ' ' << std::setprecision(17) << e.iou
      << ' ' << e.loss << '\n';
  log.flush();
}

int round_up_32(int v) { return (v + 31) / 32 * 32; }

}  // namespace

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

void save_checkpoint(const fs::path& dir, const model::ResUNet& model,
                     torch::optim::Adam& optimizer, int64_t step,
                     const RunConfig& cfg) {
  fs::create_directories(dir);
  {
    torch::serialize::OutputArchive archive;
    model->save(archive);
    archive.save_to((dir / "model.pt").string());
  }
  {
    torch::serialize::OutputArchive archive;
    optimizer.save(archive);
    archive.save_to((dir / "optim.pt").string());
  }
  nlohmann::json meta;
  meta["model"] = model->config.to_json();
  meta["step"] = step;
  meta["seed"] = cfg.seed;
  meta["loss"] = cfg.loss_id;
  meta["run_config"] = cfg.to_json();
  std::ofstream out(dir / "meta.json");
  out << meta.dump(2) << '\n';
}

Checkpoint load_checkpoint(const fs::path& dir) {
  const auto meta_path = dir / "meta.json";
  std::ifstream in(meta_path);
  if (!in) throw DataError("checkpoint metadata missing: " + meta_path.string());
  nlohmann::json meta;
  try {
    in >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed checkpoint metadata: " + std::string(e.what()));
  }

  Checkpoint ck;
  ck.model_config = model::ModelConfig::from_json(meta.at("model"));
  ck.run_config = RunConfig::from_json(meta.at("run_config"));
  ck.step = meta.at("step");
  ck.model = model::build(ck.model_config);
  torch::serialize::InputArchive archive;
  try {
    archive.load_from((dir / "model.pt").string());
  } catch (const c10::Error& e) {
    throw DataError("cannot read checkpoint weights: " + e.msg());
  }
  ck.model->load(archive);
  return ck;
}

void load_optimizer_state(const fs::path& dir, torch::optim::Adam& optimizer) {
  torch::serialize::InputArchive archive;
  try {
    archive.load_from((dir / "optim.pt").string());
  } catch (const c10::Error& e) {
    throw DataError("cannot read optimizer state: " + e.msg());
  }
  optimizer.load(archive);
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

TrainState train(const RunConfig& cfg,
                 const std::optional<fs::path>& resume_checkpoint) {
  cfg.validate();
  at::set_num_threads(cfg.threads);
  torch::manual_seed(cfg.seed);

  auto entries = read_manifest(cfg.manifest_path);
  auto train_scenes = load_scenes(entries, ingest::Split::kTrain);
  auto eval_scenes = load_scenes(entries, ingest::Split::kEval);
  if (train_scenes.empty() || eval_scenes.empty()) {
    throw DataError("manifest must list at least one train and one eval scene");
  }

  const int out_size = cfg.augment.out_size;
  model::ResUNet net{nullptr};
  int64_t start_step = 0;
  if (resume_checkpoint) {
    auto ck = load_checkpoint(*resume_checkpoint);
    if (ck.model_config.to_json() != cfg.model.to_json()) {
      throw ConfigError("resume checkpoint model config differs from run config");
    }
    net = ck.model;
    start_step = ck.step;
  } else {
    net = model::build(cfg.model);
    if (!cfg.pretrained_encoder.empty()) {
      model::load_pretrained_encoder(net, cfg.pretrained_encoder);
    }
  }

  torch::optim::Adam optimizer(net->parameters(),
                               torch::optim::AdamOptions(cfg.learning_rate));
  if (resume_checkpoint) {
    load_optimizer_state(*resume_checkpoint, optimizer);
  }

  data::StepStream stream(train_scenes, cfg.augment, cfg.seed, cfg.batch_size);
  auto loss_fn = make_loss_fn(cfg);

  auto train_inputs = prepare_eval_inputs(train_scenes, out_size);
  auto eval_inputs = prepare_eval_inputs(eval_scenes, out_size);

  fs::create_directories(fs::path(cfg.out_dir) / "checkpoints");
  const fs::path log_path = fs::path(cfg.out_dir) / "metrics.log";
  std::ofstream log(log_path, resume_checkpoint ? std::ios::app : std::ios::trunc);
  if (!log) throw DataError("cannot open metrics log: " + log_path.string());

  TrainState state;
  state.model = net;
  state.metrics_log = log_path;

  const int64_t total_steps = cfg.effective_steps();
  fs::path last_checkpoint;

  auto checkpoint_at = [&](int64_t step) {
    char name[32];
    std::snprintf(name, sizeof(name), "step_%06lld",
                  static_cast<long long>(step));
    fs::path dir = fs::path(cfg.out_dir) / "checkpoints" / name;
    save_checkpoint(dir, net, optimizer, step, cfg);
    std::ofstream latest(fs::path(cfg.out_dir) / "checkpoints" / "latest");
    latest << name << '\n';
    return dir;
  };

  for (int64_t step = start_step + 1; step <= total_steps; ++step) {
    net->train();
    auto samples = stream.batch(step - 1);
    auto [imgs, msks] = batch_to_tensors(samples);
    auto x = model::replicate_channels(imgs);

    auto logits = net->forward(x);
    auto p = torch::sigmoid(logits);
    auto loss = loss_fn(p, msks);

    const double loss_value = loss.item<double>();
    if (!std::isfinite(loss_value)) {
      fs::path dir = fs::path(cfg.out_dir) / "checkpoints" / "diverged_last_good";
      save_checkpoint(dir, net, optimizer, step - 1, cfg);
      throw DivergenceError("loss became non-finite at step " +
                            std::to_string(step) + "; last good checkpoint: " +
                            dir.string());
    }

    optimizer.zero_grad();
    loss.backward();
    optimizer.step();
    state.step = step;

    if (step % cfg.eval_every == 0) {
      auto train_m = eval_split(net, train_inputs, loss_fn, cfg.eval_threshold);
      auto val_m = eval_split(net, eval_inputs, loss_fn, cfg.eval_threshold);
      write_metric_line(log, {step, "train", train_m.iou, loss_value});
      write_metric_line(log, {step, "val", val_m.iou, val_m.loss});
      state.history.push_back(
          {step, train_m.iou, loss_value, val_m.iou, val_m.loss});
    }
    if (step % cfg.checkpoint_every == 0 && step != total_steps) {
      last_checkpoint = checkpoint_at(step);
    }
  }

  state.final_checkpoint = checkpoint_at(total_steps);
  return state;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

EvalReport evaluate_scenes(model::ResUNet& model,
                           const std::vector<ingest::LabeledScene>& scenes,
                           int out_size, double threshold) {
  torch::NoGradGuard no_grad;
  model->eval();
  EvalReport report;
  double total = 0.0;
  for (const auto& s : scenes) {
    auto [img, msk] =
        data::pad_or_crop(s.image, s.mask, out_size, data::Placement::kCentered);
    auto x = model::replicate_channels(
        image_to_tensor(img).unsqueeze(0).unsqueeze(0));
    auto p = torch::sigmoid(model->forward(x));
    double iou = losses::iou_metric(p, mask_to_tensor(msk).unsqueeze(0).unsqueeze(0),
                                    threshold);
    report.rows.push_back({s.scene_id, iou});
    total += iou;
  }
  report.mean_iou = scenes.empty() ? 0.0 : total / static_cast<double>(scenes.size());
  return report;
}

EvalReport evaluate(const fs::path& checkpoint_dir, const fs::path& manifest,
                    const std::optional<fs::path>& table_out, bool oracle) {
  auto entries = read_manifest(manifest);
  auto scenes = load_scenes(entries, ingest::Split::kEval);
  if (scenes.empty()) throw DataError("manifest lists no eval scenes");

  EvalReport report;
  if (oracle) {
    // Ground truth scored as its own prediction; sanity anchor for the metric.
    double total = 0.0;
    for (const auto& s : scenes) {
      auto g = mask_to_tensor(s.mask);
      double iou = losses::iou_metric(g, g, 0.5);
      report.rows.push_back({s.scene_id, iou});
      total += iou;
    }
    report.mean_iou = total / static_cast<double>(scenes.size());
  } else {
    auto ck = load_checkpoint(checkpoint_dir);
    report = evaluate_scenes(ck.model, scenes, ck.run_config.augment.out_size,
                             ck.run_config.eval_threshold);
  }

  if (table_out) {
    std::ofstream out(*table_out);
    if (!out) throw DataError("cannot write table: " + table_out->string());
    for (const auto& row : report.rows) {
      out << row.scene_id << ' ' << std::setprecision(17) << row.iou << '\n';
    }
    out << "mean " << std::setprecision(17) << report.mean_iou << '\n';
  }
  return report;
}

// ---------------------------------------------------------------------------
// Prediction with tiled inference
// ---------------------------------------------------------------------------

namespace {

torch::Tensor forward_window(model::ResUNet& model, const torch::Tensor& window) {
  auto x = model::replicate_channels(window.unsqueeze(0).unsqueeze(0));
  return torch::sigmoid(model->forward(x)).squeeze(0).squeeze(0);
}

std::vector<int> window_positions(int extent, int window, int stride) {
  std::vector<int> pos{0};
  while (pos.back() + window < extent) {
    pos.push_back(std::min(pos.back() + stride, extent - window));
  }
  return pos;
}

}  // namespace

PredictResult predict(const fs::path& checkpoint_dir, const fs::path& image_path,
                      const fs::path& out_dir, bool force_whole) {
  auto ck = load_checkpoint(checkpoint_dir);
  ck.model->eval();
  torch::NoGradGuard no_grad;

  Image img = read_unit_gray(image_path);
  const int h = img.height, w = img.width;
  const int window = ck.run_config.augment.out_size;
  constexpr int kOverlap = 32;

  // Zero-pad to a multiple of 32 so every window is valid model input.
  const int ph = std::max(round_up_32(h), 32);
  const int pw = std::max(round_up_32(w), 32);
  auto canvas = torch::zeros({ph, pw}, torch::kFloat32);
  canvas.narrow(0, 0, h).narrow(1, 0, w).copy_(image_to_tensor(img));

  torch::Tensor probs;
  if (force_whole || (ph <= window && pw <= window)) {
    probs = forward_window(ck.model, canvas);
  } else {
    probs = torch::zeros({ph, pw}, torch::kFloat32);
    const int wh = std::min(window, ph);
    const int ww = std::min(window, pw);
    const auto ys = window_positions(ph, wh, std::max(wh - kOverlap, 1));
    const auto xs = window_positions(pw, ww, std::max(ww - kOverlap, 1));
    for (int y : ys) {
      for (int x : xs) {
        auto tile = canvas.narrow(0, y, wh).narrow(1, x, ww);
        auto p = forward_window(ck.model, tile);
        auto region = probs.narrow(0, y, wh).narrow(1, x, ww);
        region.copy_(torch::maximum(region, p));
      }
    }
  }

  auto cropped = probs.narrow(0, 0, h).narrow(1, 0, w);
  Mask mask = tensor_to_mask(cropped > 0.5);

  fs::create_directories(out_dir);
  const std::string stem = image_path.stem().string();
  PredictResult result;
  result.mask = mask;
  result.mask_png = out_dir / (stem + "_mask.png");
  result.overlay_png = out_dir / (stem + "_overlay.png");
  write_mask_png(result.mask_png, mask);
  write_overlay_png(result.overlay_png, img, mask);
  return result;
}

}  // namespace contrail::pipeline
