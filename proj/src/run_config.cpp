#include <fstream>
#include <set>
#include <sstream>

#include "contrail/errors.hpp"
#include "contrail/pipeline.hpp"

namespace contrail::pipeline {

int64_t RunConfig::effective_steps() const {
  if (steps > 0) return steps;
  return losses::parse_loss_id(loss_id) == losses::LossId::kSR ? 4000 : 8000;
}

void RunConfig::validate() const {
  losses::parse_loss_id(loss_id);
  if (effective_steps() <= 0) throw ConfigError("steps must be positive");
  if (batch_size <= 0) throw ConfigError("batch_size must be positive");
  if (learning_rate <= 0.0) throw ConfigError("learning_rate must be positive");
  if (eval_every <= 0 || eval_every > effective_steps()) {
    throw ConfigError("eval_every must be in [1, steps]");
  }
  if (checkpoint_every <= 0) throw ConfigError("checkpoint_every must be positive");
  if (threads <= 0) throw ConfigError("threads must be positive");
  if (eval_threshold <= 0.0 || eval_threshold >= 1.0) {
    throw ConfigError("eval_threshold must be in (0, 1)");
  }
  if (sr.alpha < 0.0 || sr.alpha > 1.0) throw ConfigError("sr.alpha must be in [0,1]");
  if (focal.gamma < 0.0) throw ConfigError("focal.gamma must be >= 0");
  augment.validate();
  model.validate();
  const int divisor = 1 << model.encoder_depth;
  if (augment.out_size % divisor != 0) {
    throw ConfigError("out_size must be divisible by 2^encoder_depth");
  }
}

namespace {

template <typename T>
void maybe_get(const nlohmann::json& j, const char* key, T* out) {
  if (j.contains(key)) *out = j.at(key).get<T>();
}

void maybe_get_pair(const nlohmann::json& j, const char* key,
                    std::pair<double, double>* out) {
  if (j.contains(key)) {
    auto v = j.at(key).get<std::vector<double>>();
    if (v.size() != 2) throw ConfigError(std::string(key) + " must be [min, max]");
    *out = {v[0], v[1]};
  }
}

const std::set<std::string>& known_keys() {
  static const std::set<std::string> kKeys = {
      "loss", "steps", "batch_size", "learning_rate", "seed", "eval_every",
      "checkpoint_every", "threads", "eval_threshold", "manifest", "out_dir",
      "pretrained_encoder", "augment", "model", "focal", "sr"};
  return kKeys;
}

}  // namespace

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j;
  j["loss"] = loss_id;
  j["steps"] = steps;
  j["batch_size"] = batch_size;
  j["learning_rate"] = learning_rate;
  j["seed"] = seed;
  j["eval_every"] = eval_every;
  j["checkpoint_every"] = checkpoint_every;
  j["threads"] = threads;
  j["eval_threshold"] = eval_threshold;
  j["manifest"] = manifest_path;
  j["out_dir"] = out_dir;
  j["pretrained_encoder"] = pretrained_encoder;
  j["augment"] = {
      {"out_size", augment.out_size},
      {"rotate_limit_deg", augment.rotate_limit_deg},
      {"scale_range", {augment.scale_range.first, augment.scale_range.second}},
      {"shift_fraction", augment.shift_fraction},
      {"perspective_strength",
       {augment.perspective_strength.first, augment.perspective_strength.second}},
      {"brightness_limit", augment.brightness_limit},
      {"contrast_limit", augment.contrast_limit},
      {"gamma_range", {augment.gamma_range.first, augment.gamma_range.second}},
      {"p_affine", augment.p_affine},
      {"p_perspective", augment.p_perspective},
      {"p_brightness_contrast", augment.p_brightness_contrast},
      {"p_gamma", augment.p_gamma},
  };
  j["model"] = model.to_json();
  j["focal"] = {{"gamma", focal.gamma}};
  j["sr"] = {{"alpha", sr.alpha},
             {"n_theta", sr.n_theta},
             {"rho_resolution", sr.rho_resolution},
             {"tau", sr.tau},
             {"beta", sr.beta}};
  return j;
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known_keys().count(it.key())) {
      throw ConfigError("unknown run-config key '" + it.key() + "'");
    }
  }
  RunConfig cfg;
  maybe_get(j, "loss", &cfg.loss_id);
  maybe_get(j, "steps", &cfg.steps);
  maybe_get(j, "batch_size", &cfg.batch_size);
  maybe_get(j, "learning_rate", &cfg.learning_rate);
  maybe_get(j, "seed", &cfg.seed);
  maybe_get(j, "eval_every", &cfg.eval_every);
  maybe_get(j, "checkpoint_every", &cfg.checkpoint_every);
  maybe_get(j, "threads", &cfg.threads);
  maybe_get(j, "eval_threshold", &cfg.eval_threshold);
  maybe_get(j, "manifest", &cfg.manifest_path);
  maybe_get(j, "out_dir", &cfg.out_dir);
  maybe_get(j, "pretrained_encoder", &cfg.pretrained_encoder);
  if (j.contains("augment")) {
    const auto& a = j.at("augment");
    maybe_get(a, "out_size", &cfg.augment.out_size);
    maybe_get(a, "rotate_limit_deg", &cfg.augment.rotate_limit_deg);
    maybe_get_pair(a, "scale_range", &cfg.augment.scale_range);
    maybe_get(a, "shift_fraction", &cfg.augment.shift_fraction);
    maybe_get_pair(a, "perspective_strength", &cfg.augment.perspective_strength);
    maybe_get(a, "brightness_limit", &cfg.augment.brightness_limit);
    maybe_get(a, "contrast_limit", &cfg.augment.contrast_limit);
    maybe_get_pair(a, "gamma_range", &cfg.augment.gamma_range);
    maybe_get(a, "p_affine", &cfg.augment.p_affine);
    maybe_get(a, "p_perspective", &cfg.augment.p_perspective);
    maybe_get(a, "p_brightness_contrast", &cfg.augment.p_brightness_contrast);
    maybe_get(a, "p_gamma", &cfg.augment.p_gamma);
  }
  if (j.contains("model")) cfg.model = model::ModelConfig::from_json(j.at("model"));
  if (j.contains("focal")) maybe_get(j.at("focal"), "gamma", &cfg.focal.gamma);
  if (j.contains("sr")) {
    const auto& s = j.at("sr");
    maybe_get(s, "alpha", &cfg.sr.alpha);
    maybe_get(s, "n_theta", &cfg.sr.n_theta);
    maybe_get(s, "rho_resolution", &cfg.sr.rho_resolution);
    maybe_get(s, "tau", &cfg.sr.tau);
    maybe_get(s, "beta", &cfg.sr.beta);
  }
  cfg.validate();
  return cfg;
}

RunConfig RunConfig::from_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed JSON in " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

// ---------------------------------------------------------------------------
// Manifest and metrics log
// ---------------------------------------------------------------------------

std::vector<ManifestEntry> read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest: " + path.string());
  std::vector<ManifestEntry> entries;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream row(line);
    ManifestEntry e;
    std::string split;
    if (!(row >> e.scene_id >> e.image_path >> e.mask_path >> split)) {
      throw DataError("malformed manifest line " + std::to_string(lineno) +
                      " in " + path.string());
    }
    e.split = ingest::split_from_string(split);
    entries.push_back(std::move(e));
  }
  return entries;
}

void append_manifest(const fs::path& path, const ManifestEntry& entry) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw DataError("cannot append to manifest: " + path.string());
  out << entry.scene_id << ' ' << entry.image_path << ' ' << entry.mask_path
      << ' ' << ingest::to_string(entry.split) << '\n';
}

std::vector<ingest::LabeledScene> load_scenes(
    const std::vector<ManifestEntry>& entries,
    std::optional<ingest::Split> only) {
  std::vector<ingest::LabeledScene> scenes;
  for (const auto& e : entries) {
    if (only && e.split != *only) continue;
    scenes.push_back(
        ingest::load_labeled(e.image_path, e.mask_path, e.scene_id, e.split));
  }
  return scenes;
}

std::vector<MetricEntry> read_metrics_log(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open metrics log: " + path.string());
  std::vector<MetricEntry> entries;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream row(line);
    MetricEntry e;
    if (!(row >> e.step >> e.split >> e.iou >> e.loss)) {
      throw DataError("malformed metrics line " + std::to_string(lineno) +
                      " in " + path.string());
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

}  // namespace contrail::pipeline
