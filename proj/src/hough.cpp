#include "contrail/hough.hpp"

#include <algorithm>
#include <cmath>

#include "contrail/errors.hpp"

namespace contrail::hough {

namespace {

constexpr double kLengthEps = 1e-6;

// Core accumulation. masks: [B, N] flattened pixels. Returns [B, n_rho,
// n_theta]. Each pixel's rho value falls between two adjacent bins and is
// split linearly between them, which realizes the triangular kernel.
torch::Tensor votes_flat(const torch::Tensor& masks, const HoughGrid& grid) {
  const auto dt = masks.scalar_type();
  const int64_t batch = masks.size(0);
  const int64_t n = masks.size(1);
  const int64_t n_rho = grid.n_rho;

  TORCH_CHECK(n == static_cast<int64_t>(grid.image_height) * grid.image_width,
              "mask size does not match grid frame");

  auto opts = torch::TensorOptions().dtype(dt);
  auto xs = torch::empty({n}, opts);
  auto ys = torch::empty({n}, opts);
  {
    const double cx = (grid.image_width - 1) / 2.0;
    const double cy = (grid.image_height - 1) / 2.0;
    AT_DISPATCH_FLOATING_TYPES(dt, "hough_coords", [&] {
      auto* xp = xs.data_ptr<scalar_t>();
      auto* yp = ys.data_ptr<scalar_t>();
      for (int64_t i = 0; i < n; ++i) {
        xp[i] = static_cast<scalar_t>((i % grid.image_width) - cx);
        yp[i] = static_cast<scalar_t>((i / grid.image_width) - cy);
      }
    });
  }

  const auto m_t = masks.t().contiguous();  // [N, B] for row-wise index_add
  std::vector<torch::Tensor> columns;
  columns.reserve(grid.n_theta);
  for (int j = 0; j < grid.n_theta; ++j) {
    const double cj = std::cos(grid.theta_values[j]);
    const double sj = std::sin(grid.theta_values[j]);
    auto f = (xs * cj + ys * sj) / grid.rho_resolution +
             static_cast<double>(grid.n_half);
    auto i0 = f.floor();
    auto frac = f - i0;
    auto idx0 = i0.to(torch::kLong).clamp(0, n_rho - 1);
    auto idx1 = (idx0 + 1).clamp(0, n_rho - 1);
    // Keep the upper-neighbor weight only where that bin exists.
    auto w1 = torch::where(i0 + 1 <= static_cast<double>(n_rho - 1), frac,
                           torch::zeros_like(frac));
    auto w0 = 1.0 - frac;
    auto col = torch::zeros({n_rho, batch}, masks.options())
                   .index_add(0, idx0, m_t * w0.unsqueeze(1))
                   .index_add(0, idx1, m_t * w1.unsqueeze(1));
    columns.push_back(col);  // [n_rho, B]
  }
  return torch::stack(columns, 2).permute({1, 0, 2});  // [B, n_rho, n_theta]
}

torch::Tensor to_batched(const torch::Tensor& mask, bool* was_2d) {
  TORCH_CHECK(mask.dim() == 2 || mask.dim() == 3,
              "mask must be [H,W] or [B,H,W]");
  *was_2d = mask.dim() == 2;
  auto m = *was_2d ? mask.unsqueeze(0) : mask;
  return m.reshape({m.size(0), -1});
}

}  // namespace

HoughGrid build_grid(int height, int width, int n_theta, double rho_resolution,
                     double min_vote_length) {
  if (height <= 0 || width <= 0) throw ConfigError("build_grid: positive dims required");
  if (n_theta < 2) throw ConfigError("build_grid: n_theta must be >= 2");
  if (rho_resolution <= 0.0) throw ConfigError("build_grid: rho_resolution must be > 0");

  HoughGrid g;
  g.n_theta = n_theta;
  g.min_vote_length = std::max(min_vote_length, kLengthEps);
  g.rho_resolution = rho_resolution;
  g.image_height = height;
  g.image_width = width;
  g.rho_max = 0.5 * std::hypot(static_cast<double>(width - 1),
                               static_cast<double>(height - 1));
  g.n_half = static_cast<int>(std::ceil(g.rho_max / rho_resolution));
  g.n_rho = 2 * g.n_half + 1;

  g.theta_values.resize(n_theta);
  for (int j = 0; j < n_theta; ++j) {
    g.theta_values[j] = M_PI * static_cast<double>(j) / n_theta;
  }
  g.rho_values.resize(g.n_rho);
  for (int i = 0; i < g.n_rho; ++i) {
    g.rho_values[i] = (i - g.n_half) * rho_resolution;
  }

  {
    torch::NoGradGuard no_grad;
    auto ones = torch::ones(
        {1, static_cast<int64_t>(height) * width},
        torch::TensorOptions().dtype(torch::kFloat64));
    g.vote_length = votes_flat(ones, g).squeeze(0);
  }
  return g;
}

torch::Tensor soft_votes(const torch::Tensor& mask, const HoughGrid& grid) {
  bool was_2d = false;
  auto flat = to_batched(mask, &was_2d);
  auto votes = votes_flat(flat, grid);
  return was_2d ? votes.squeeze(0) : votes;
}

HoughAccumulator soft_accumulate(const torch::Tensor& mask, const HoughGrid& grid) {
  auto votes = soft_votes(mask, grid);
  auto length =
      grid.vote_length.to(mask.scalar_type()).clamp_min(grid.min_vote_length);
  return HoughAccumulator{votes / length, &grid};
}

HoughAccumulator squash(const HoughAccumulator& acc, double tau, double beta) {
  return HoughAccumulator{torch::sigmoid(beta * (acc.values - tau)), acc.grid};
}

LineSet extract_lines(const HoughAccumulator& acc, double threshold,
                      int nms_radius) {
  TORCH_CHECK(acc.grid != nullptr, "accumulator has no grid");
  const HoughGrid& grid = *acc.grid;
  auto values = acc.values;
  TORCH_CHECK(values.dim() == 2, "extract_lines expects a single accumulator");
  auto v = values.detach().to(torch::kFloat64).contiguous();
  auto a = v.accessor<double, 2>();

  // Neighbor lookup with the theta wrap: stepping past the theta range lands
  // on the mirrored rho bin.
  auto value_at = [&](int i, int j) {
    if (j < 0 || j >= grid.n_theta) {
      j = (j + grid.n_theta) % grid.n_theta;
      i = grid.n_rho - 1 - i;
    }
    if (i < 0 || i >= grid.n_rho) return -1.0;
    return a[i][j];
  };

  // Stage 1: threshold + local maximum over the 8-neighborhood. Plateaus are
  // broken lexicographically so exactly one bin per plateau survives.
  struct Candidate { double support; int i, j; };
  std::vector<Candidate> cands;
  for (int i = 0; i < grid.n_rho; ++i) {
    for (int j = 0; j < grid.n_theta; ++j) {
      const double v = a[i][j];
      if (v < threshold) continue;
      bool is_peak = true;
      for (int di = -1; di <= 1 && is_peak; ++di) {
        for (int dj = -1; dj <= 1 && is_peak; ++dj) {
          if (di == 0 && dj == 0) continue;
          const double nv = value_at(i + di, j + dj);
          if (nv > v) is_peak = false;
          if (nv == v && (di < 0 || (di == 0 && dj < 0))) is_peak = false;
        }
      }
      if (is_peak) cands.push_back({v, i, j});
    }
  }
  std::sort(cands.begin(), cands.end(), [](const Candidate& x, const Candidate& y) {
    if (x.support != y.support) return x.support > y.support;
    if (x.i != y.i) return x.i < y.i;
    return x.j < y.j;
  });

  // Chebyshev bin distance, allowing the theta wrap with rho sign flip.
  auto within = [&](int i0, int j0, int i1, int j1) {
    int dj = std::abs(j0 - j1);
    int direct = std::max(std::abs(i0 - i1), dj);
    int wrapped = std::max(std::abs((grid.n_rho - 1 - i0) - i1), grid.n_theta - dj);
    return std::min(direct, wrapped) <= nms_radius;
  };

  LineSet lines;
  for (const auto& c : cands) {
    bool suppressed = false;
    for (const auto& l : lines) {
      if (within(c.i, c.j, l.rho_bin, l.theta_bin)) { suppressed = true; break; }
    }
    if (suppressed) continue;
    lines.push_back(Line{grid.rho_values[c.i], grid.theta_values[c.j],
                         c.support, c.i, c.j});
  }
  return lines;
}

Mask render_lines(const LineSet& lines, int height, int width) {
  Mask out(height, width, 0);
  const double cx = (width - 1) / 2.0;
  const double cy = (height - 1) / 2.0;
  for (const auto& line : lines) {
    const double c = std::cos(line.theta);
    const double s = std::sin(line.theta);
    if (std::abs(s) >= std::abs(c)) {
      // Closer to horizontal: walk columns.
      for (int x = 0; x < width; ++x) {
        const double yp = (line.rho - (x - cx) * c) / s;
        const long y = std::lround(yp + cy);
        if (y >= 0 && y < height) out.at(static_cast<int>(y), x) = 1;
      }
    } else {
      for (int y = 0; y < height; ++y) {
        const double xp = (line.rho - (y - cy) * s) / c;
        const long x = std::lround(xp + cx);
        if (x >= 0 && x < width) out.at(y, static_cast<int>(x)) = 1;
      }
    }
  }
  return out;
}

}  // namespace contrail::hough
