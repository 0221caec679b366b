#ifndef CONTRAIL_HOUGH_HPP
#define CONTRAIL_HOUGH_HPP

#include <vector>

#include <torch/torch.h>

#include "contrail/raster.hpp"

namespace contrail::hough {

// Discretized (rho, theta) space over a fixed image frame.
//
// Coordinates are centered on the image: x' = x - (w-1)/2, y' = y - (h-1)/2
// with y growing downward, and rho(theta) = x' cos(theta) + y' sin(theta).
// Theta spans [0, pi) uniformly; rho bins sit at integer multiples of the
// resolution, symmetric about 0 and wide enough to cover every pixel center,
// so n_rho = 2 * ceil(rho_max / resolution) + 1.
struct HoughGrid {
  int n_theta = 0;
  int n_rho = 0;
  int n_half = 0;             // bins on each side of rho = 0
  double rho_resolution = 1.0;
  double rho_max = 0.0;       // max |rho| over pixel centers (half diagonal)
  double min_vote_length = 8.0;
  int image_height = 0;
  int image_width = 0;
  std::vector<double> theta_values;  // radians, [0, pi)
  std::vector<double> rho_values;    // pixels, [-n_half*res, +n_half*res]

  // Per-bin vote mass of a full frame (the line's in-image length in vote
  // units); the normalization denominator. Shape [n_rho, n_theta], float64.
  torch::Tensor vote_length;
};

// min_vote_length floors the normalization denominator so bins whose line
// barely clips the frame cannot reach full density from a pixel or two;
// lines shorter than that are not considered meaningful.
HoughGrid build_grid(int height, int width, int n_theta = 180,
                     double rho_resolution = 1.0,
                     double min_vote_length = 8.0);

struct HoughAccumulator {
  // [n_rho, n_theta] for a single mask, [B, n_rho, n_theta] for a batch.
  torch::Tensor values;
  const HoughGrid* grid = nullptr;
};

// Raw soft votes: A[i,j] = sum_pixels mask(x,y) * k(|rho(x,y,theta_j) -
// rho_i| / w) with the triangular kernel k(d) = max(0, 1 - d) and w the rho
// bin width. Linear in the mask and differentiable w.r.t. it. Accepts [H,W]
// or [B,H,W]; float32 or float64.
torch::Tensor soft_votes(const torch::Tensor& mask, const HoughGrid& grid);

// Normalized accumulator: values = A / max(L, min_vote_length) where L is
// the vote length of each bin, i.e. per-line masked-pixel density in [0, 1].
HoughAccumulator soft_accumulate(const torch::Tensor& mask, const HoughGrid& grid);

// Soft line-presence scores: logistic(beta * (values - tau)).
HoughAccumulator squash(const HoughAccumulator& acc, double tau = 0.25,
                        double beta = 20.0);

struct Line {
  double rho = 0.0;
  double theta = 0.0;
  double support = 0.0;
  int rho_bin = 0;
  int theta_bin = 0;
};
using LineSet = std::vector<Line>;

// Peak extraction: bins with support >= threshold that are local maxima of
// their 8-neighborhood, then greedy non-maximum suppression within the
// Chebyshev nms_radius, strongest first. Theta wraps modulo n_theta with the
// rho sign flipped.
LineSet extract_lines(const HoughAccumulator& acc, double threshold = 0.5,
                      int nms_radius = 2);

// 1-pixel-wide rasterization of each line, clipped to the frame.
Mask render_lines(const LineSet& lines, int height, int width);

}  // namespace contrail::hough

#endif  // CONTRAIL_HOUGH_HPP
