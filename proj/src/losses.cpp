#include "contrail/losses.hpp"

#include "contrail/errors.hpp"

namespace contrail::losses {

namespace {

void check_shapes(const torch::Tensor& p, const torch::Tensor& g,
                  const char* where) {
  TORCH_CHECK(p.sizes() == g.sizes(), where,
              ": prediction and ground truth shapes differ (", p.sizes(), " vs ",
              g.sizes(), ")");
}

}  // namespace

torch::Tensor focal_loss(const torch::Tensor& p, const torch::Tensor& g,
                         const FocalConfig& cfg) {
  check_shapes(p, g, "focal_loss");
  auto gt = g.to(p.scalar_type());
  auto pt = (p * gt + (1.0 - p) * (1.0 - gt)).clamp(kProbEps, 1.0 - kProbEps);
  return (-(1.0 - pt).pow(cfg.gamma) * pt.log()).mean();
}

torch::Tensor dice_loss(const torch::Tensor& p, const torch::Tensor& g) {
  check_shapes(p, g, "dice_loss");
  auto gt = g.to(p.scalar_type());
  auto inter = (p * gt).sum();
  return 1.0 - (2.0 * inter + 1.0) / (gt.sum() + p.sum() + 1.0);
}

torch::Tensor log_dice_loss(const torch::Tensor& p, const torch::Tensor& g) {
  check_shapes(p, g, "log_dice_loss");
  auto gt = g.to(p.scalar_type());
  auto inter = (p * gt).sum();
  return -torch::log((2.0 * inter + 1.0) / (gt.sum() + p.sum() + 1.0));
}

torch::Tensor hough_dice_term(const torch::Tensor& p, const torch::Tensor& g,
                              const hough::HoughGrid& grid,
                              const SRLossConfig& cfg) {
  check_shapes(p, g, "hough_dice_term");
  auto ph = hough::squash(hough::soft_accumulate(p, grid), cfg.tau, cfg.beta).values;
  auto gh = hough::squash(hough::soft_accumulate(g.to(p.scalar_type()), grid),
                          cfg.tau, cfg.beta).values;
  auto inter = (ph * gh).sum();
  return 1.0 - (2.0 * inter + 1.0) / (ph.pow(2).sum() + gh.pow(2).sum() + 1.0);
}

torch::Tensor sr_loss(const torch::Tensor& p, const torch::Tensor& g,
                      const hough::HoughGrid& grid, const SRLossConfig& cfg) {
  TORCH_CHECK(cfg.alpha >= 0.0 && cfg.alpha <= 1.0, "sr_loss: alpha must be in [0,1]");
  auto pixel = dice_loss(p, g);
  if (cfg.alpha == 1.0) return pixel;
  auto hough_term = hough_dice_term(p, g, grid, cfg);
  return cfg.alpha * pixel + (1.0 - cfg.alpha) * hough_term;
}

double iou_metric(const torch::Tensor& p, const torch::Tensor& g,
                  double threshold) {
  check_shapes(p, g, "iou_metric");
  torch::NoGradGuard no_grad;
  auto pb = p > threshold;
  auto gb = g > 0.5;
  double inter = (pb & gb).sum().item<double>();
  double uni = (pb | gb).sum().item<double>();
  return uni == 0.0 ? 1.0 : inter / uni;
}

LossId parse_loss_id(const std::string& id) {
  if (id == "dice") return LossId::kDice;
  if (id == "logdice") return LossId::kLogDice;
  if (id == "focal") return LossId::kFocal;
  if (id == "sr") return LossId::kSR;
  throw ConfigError("unknown loss '" + id + "' (expected dice|logdice|focal|sr)");
}

std::string to_string(LossId id) {
  switch (id) {
    case LossId::kDice: return "dice";
    case LossId::kLogDice: return "logdice";
    case LossId::kFocal: return "focal";
    case LossId::kSR: return "sr";
  }
  return "?";
}

}  // namespace contrail::losses
