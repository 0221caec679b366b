#ifndef CONTRAIL_LOSSES_HPP
#define CONTRAIL_LOSSES_HPP

#include <string>

#include <torch/torch.h>

#include "contrail/hough.hpp"

namespace contrail::losses {

// Probability clamp applied before logarithms.
constexpr double kProbEps = 1e-7;

struct FocalConfig {
  double gamma = 2.0;  // must be > 0 for the focal effect; 0 reduces to BCE
};

// The loss grid is deliberately coarser in rho than the diagnostics grid:
// with 1 px bins a prediction shifted a few pixels off the target line shares
// no Hough support with it and scores worse than scattered noise, inverting
// the purpose of the term. 6 px bins give the comparison the spatial
// tolerance it needs while theta stays at 1-degree resolution.
struct SRLossConfig {
  double alpha = 0.5;  // weight of the pixel-space term, in [0, 1]
  int n_theta = 180;
  double rho_resolution = 6.0;
  double tau = 0.2;
  double beta = 20.0;
};

// Focal loss, mean over pixels: -(1 - p_t)^gamma * log(p_t) with p_t = p
// where g = 1 and 1 - p elsewhere.
torch::Tensor focal_loss(const torch::Tensor& p, const torch::Tensor& g,
                         const FocalConfig& cfg = {});

// Dice loss with batch-level sums and Laplace smoothing:
// 1 - (2 * sum(g*p) + 1) / (sum(g) + sum(p) + 1).
torch::Tensor dice_loss(const torch::Tensor& p, const torch::Tensor& g);

// Negated log of the smoothed Dice coefficient, so 0 is the optimum.
torch::Tensor log_dice_loss(const torch::Tensor& p, const torch::Tensor& g);

// Dice disagreement between soft Hough maps of prediction and target:
// maps are squash(soft_accumulate(.)), compared with the squared-denominator
// Dice 1 - (2*sum(ph*gh) + 1) / (sum(ph^2) + sum(gh^2) + 1), which is exactly
// zero when the maps coincide (the maps are soft, so the plain-sum form
// would not be).
torch::Tensor hough_dice_term(const torch::Tensor& p, const torch::Tensor& g,
                              const hough::HoughGrid& grid,
                              const SRLossConfig& cfg = {});

// SR loss: alpha * dice(p, g) + (1 - alpha) * hough_dice_term(p, g).
torch::Tensor sr_loss(const torch::Tensor& p, const torch::Tensor& g,
                      const hough::HoughGrid& grid,
                      const SRLossConfig& cfg = {});

// IoU of binarized prediction (p > threshold) against g; 1.0 when both are
// empty.
double iou_metric(const torch::Tensor& p, const torch::Tensor& g,
                  double threshold = 0.5);

enum class LossId { kDice, kLogDice, kFocal, kSR };

LossId parse_loss_id(const std::string& id);  // "dice" | "logdice" | "focal" | "sr"
std::string to_string(LossId id);

}  // namespace contrail::losses

#endif  // CONTRAIL_LOSSES_HPP
