#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest_compat.hpp"

#include "contrail/errors.hpp"
#include "contrail/losses.hpp"
#include "testing.hpp"

using namespace contrail;
using namespace contrail::losses;

namespace {

// Shared fixture for the line-structure discrimination checks: a line target,
// the same line shifted 3 px, and scattered dots with identical pixel-space
// Dice (same foreground count, zero overlap with the target).
struct LinePair {
  torch::Tensor target, shifted, dots;
};

LinePair make_line_pair(int n = 33) {
  auto g = torch::zeros({n, n}, torch::kFloat64);
  auto line = torch::zeros({n, n}, torch::kFloat64);
  auto dots = torch::zeros({n, n}, torch::kFloat64);
  const int target_row = n / 2;
  const int shifted_row = target_row + 3;
  for (int x = 0; x < n; ++x) {
    g[target_row][x] = 1.0;
    line[shifted_row][x] = 1.0;
  }
  Rng rng(4242);
  int placed = 0;
  while (placed < n) {
    int y = static_cast<int>(rng.uniform_int(n));
    int x = static_cast<int>(rng.uniform_int(n));
    if (y == target_row || y == shifted_row) continue;
    if (dots[y][x].item<double>() != 0.0) continue;
    dots[y][x] = 1.0;
    ++placed;
  }
  return {g, line, dots};
}

}  // namespace

TEST_CASE("focal loss") {
  SUBCASE("perfect binary prediction is ~0") {
    auto g = torch::tensor({{1.0, 0.0}, {0.0, 1.0}});
    auto loss = focal_loss(g, g, {2.0});
    CHECK(loss.item<double>() >= 0.0);
    CHECK(loss.item<double>() < 1e-12);
  }
  SUBCASE("single pixel direct evaluation") {
    auto p = torch::full({1, 1}, 0.9);
    auto g = torch::ones({1, 1});
    auto loss = focal_loss(p, g, {2.0});
    CHECK(loss.item<double>() ==
          doctest::Approx(-0.01 * std::log(0.9)).epsilon(1e-6));
    CHECK(loss.item<double>() == doctest::Approx(1.0536e-3).epsilon(1e-3));
  }
  SUBCASE("gamma -> 0 equals binary cross-entropy") {
    torch::manual_seed(17);
    auto p = torch::rand({16, 16}, torch::kFloat64) * 0.98 + 0.01;
    auto g = (torch::rand({16, 16}, torch::kFloat64) > 0.5).to(torch::kFloat64);
    auto loss = focal_loss(p, g, {0.0});
    auto bce = -(g * p.log() + (1.0 - g) * (1.0 - p).log()).mean();
    CHECK(loss.item<double>() == doctest::Approx(bce.item<double>()).epsilon(1e-6));
  }
  SUBCASE("shape mismatch throws") {
    CHECK_THROWS(focal_loss(torch::rand({2, 2}), torch::ones({3, 2})));
  }
}

TEST_CASE("dice loss") {
  SUBCASE("perfect prediction is exactly 0 for any foreground count") {
    for (int fg : {0, 1, 5, 64}) {
      auto g = torch::zeros({16, 16});
      g.reshape({-1}).narrow(0, 0, fg).fill_(1.0);
      CHECK(dice_loss(g, g).item<double>() == 0.0);
    }
  }
  SUBCASE("all-ones vs all-zeros, N=4") {
    auto p = torch::ones({2, 2});
    auto g = torch::zeros({2, 2});
    CHECK(dice_loss(p, g).item<double>() == doctest::Approx(0.8));
  }
  SUBCASE("empty-empty smoothing case") {
    auto z = torch::zeros({3, 3});
    CHECK(dice_loss(z, z).item<double>() == 0.0);
  }
  SUBCASE("permutation invariance") {
    torch::manual_seed(3);
    auto p = torch::rand({64}, torch::kFloat64);
    auto g = (torch::rand({64}, torch::kFloat64) > 0.6).to(torch::kFloat64);
    auto perm = torch::randperm(64);
    auto a = dice_loss(p, g).item<double>();
    auto b = dice_loss(p.index({perm}), g.index({perm})).item<double>();
    CHECK(a == doctest::Approx(b).epsilon(1e-12));
  }
}

TEST_CASE("log dice loss") {
  SUBCASE("perfect prediction") {
    auto g = torch::tensor({{1.0, 0.0}, {1.0, 0.0}});
    CHECK(log_dice_loss(g, g).item<double>() == doctest::Approx(0.0));
  }
  SUBCASE("all-ones vs all-zeros, N=4") {
    auto p = torch::ones({2, 2});
    auto g = torch::zeros({2, 2});
    CHECK(log_dice_loss(p, g).item<double>() ==
          doctest::Approx(std::log(5.0)).epsilon(1e-6));
  }
  SUBCASE("improving overlap never increases the loss") {
    torch::manual_seed(11);
    for (int trial = 0; trial < 50; ++trial) {
      auto p = torch::rand({12, 12}, torch::kFloat64);
      auto g = (torch::rand({12, 12}, torch::kFloat64) > 0.7).to(torch::kFloat64);
      double t = 0.1 + 0.8 * torch::rand({1}).item<double>();
      auto closer = p + t * (g - p);  // strictly better overlap
      CHECK(log_dice_loss(closer, g).item<double>() <=
            log_dice_loss(p, g).item<double>() + 1e-9);
    }
  }
}

TEST_CASE("sr loss") {
  auto grid = hough::build_grid(16, 16, 60);

  SUBCASE("alpha = 1 equals pixel dice exactly") {
    torch::manual_seed(23);
    auto p = torch::rand({16, 16}, torch::kFloat64);
    auto g = (torch::rand({16, 16}, torch::kFloat64) > 0.5).to(torch::kFloat64);
    SRLossConfig cfg;
    cfg.alpha = 1.0;
    CHECK(sr_loss(p, g, grid, cfg).item<double>() ==
          dice_loss(p, g).item<double>());
  }
  SUBCASE("identical binary masks give zero") {
    contrail::Mask mask(16, 16);
    testing::stroke_line(mask, 8, 8, 40.0, 1.0);
    auto g = testing::mask_tensor(mask, torch::kFloat64);
    SRLossConfig cfg;
    CHECK(sr_loss(g, g, grid, cfg).item<double>() ==
          doctest::Approx(0.0).epsilon(1e-9));
    CHECK(hough_dice_term(g, g, grid, cfg).item<double>() ==
          doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("convex combination bound") {
    torch::manual_seed(31);
    SRLossConfig cfg;
    cfg.alpha = 0.3;
    for (int trial = 0; trial < 10; ++trial) {
      auto p = torch::rand({16, 16}, torch::kFloat64);
      auto g = (torch::rand({16, 16}, torch::kFloat64) > 0.8).to(torch::kFloat64);
      double pix = dice_loss(p, g).item<double>();
      double hof = hough_dice_term(p, g, grid, cfg).item<double>();
      double sr = sr_loss(p, g, grid, cfg).item<double>();
      CHECK(sr >= std::min(pix, hof) - 1e-9);
      CHECK(sr <= std::max(pix, hof) + 1e-9);
    }
  }
  SUBCASE("shifted line beats scattered dots in Hough space") {
    auto pair = make_line_pair(33);
    SRLossConfig cfg;
    auto g33 = hough::build_grid(33, 33, cfg.n_theta, cfg.rho_resolution);

    // Identical pixel-space Dice by construction.
    double d_line = dice_loss(pair.shifted, pair.target).item<double>();
    double d_dots = dice_loss(pair.dots, pair.target).item<double>();
    CHECK(d_line == doctest::Approx(d_dots).epsilon(1e-12));

    double h_line = hough_dice_term(pair.shifted, pair.target, g33, cfg).item<double>();
    double h_dots = hough_dice_term(pair.dots, pair.target, g33, cfg).item<double>();
    CHECK(h_line + 0.05 < h_dots);

    // And therefore the full SR loss prefers the line.
    CHECK(sr_loss(pair.shifted, pair.target, g33, cfg).item<double>() <
          sr_loss(pair.dots, pair.target, g33, cfg).item<double>());
  }
  SUBCASE("Hough term is not permutation invariant") {
    auto pair = make_line_pair(33);
    SRLossConfig cfg;
    auto g33 = hough::build_grid(33, 33, cfg.n_theta, cfg.rho_resolution);
    // The dots are a pixel permutation of the shifted line (same count);
    // pixel Dice ties while the Hough term separates them by > 0.05.
    CHECK(pair.dots.sum().item<double>() == pair.shifted.sum().item<double>());
    double h_line = hough_dice_term(pair.shifted, pair.target, g33, cfg).item<double>();
    double h_dots = hough_dice_term(pair.dots, pair.target, g33, cfg).item<double>();
    CHECK(std::abs(h_dots - h_line) > 0.05);
  }
}

TEST_CASE("losses are non-negative and zero only at equality") {
  torch::manual_seed(41);
  auto grid = hough::build_grid(12, 12, 45);
  for (int trial = 0; trial < 10; ++trial) {
    auto g = (torch::rand({12, 12}, torch::kFloat64) > 0.7).to(torch::kFloat64);
    auto p = torch::rand({12, 12}, torch::kFloat64);
    // Imperfect prediction: all strictly positive.
    if ((p - g).abs().max().item<double>() > 1e-3) {
      CHECK(focal_loss(p, g).item<double>() > 0.0);
      CHECK(dice_loss(p, g).item<double>() > 0.0);
      CHECK(log_dice_loss(p, g).item<double>() > 0.0);
      CHECK(sr_loss(p, g, grid).item<double>() > 0.0);
    }
    // Equality: all ~0.
    CHECK(focal_loss(g, g).item<double>() < 1e-6);
    CHECK(dice_loss(g, g).item<double>() < 1e-6);
    CHECK(log_dice_loss(g, g).item<double>() < 1e-6);
    CHECK(sr_loss(g, g, grid).item<double>() < 1e-6);
  }
}

TEST_CASE("gradients match finite differences") {
  torch::manual_seed(53);
  auto grid = hough::build_grid(8, 8, 30);
  auto p0 = torch::rand({8, 8}, torch::kFloat64) * 0.9 + 0.05;
  auto g = (torch::rand({8, 8}, torch::kFloat64) > 0.6).to(torch::kFloat64);

  CHECK(testing::max_rel_grad_error(
            [&](const torch::Tensor& p) { return dice_loss(p, g); }, p0) < 1e-3);
  CHECK(testing::max_rel_grad_error(
            [&](const torch::Tensor& p) { return log_dice_loss(p, g); }, p0) < 1e-3);
  CHECK(testing::max_rel_grad_error(
            [&](const torch::Tensor& p) { return focal_loss(p, g, {2.0}); }, p0) < 1e-3);
  CHECK(testing::max_rel_grad_error(
            [&](const torch::Tensor& p) { return sr_loss(p, g, grid, {}); }, p0) < 1e-3);
}

TEST_CASE("iou metric") {
  SUBCASE("equal masks") {
    auto g = torch::tensor({{1.0, 0.0}, {0.0, 1.0}});
    CHECK(iou_metric(g, g, 0.5) == 1.0);
  }
  SUBCASE("disjoint equal-area masks") {
    auto p = torch::tensor({{1.0, 0.0}, {1.0, 0.0}});
    auto g = torch::tensor({{0.0, 1.0}, {0.0, 1.0}});
    CHECK(iou_metric(p, g, 0.5) == 0.0);
  }
  SUBCASE("half-overlapping areas give 1/3") {
    auto p = torch::zeros({4, 4});
    auto g = torch::zeros({4, 4});
    p.index_put_({torch::indexing::Slice(0, 2), torch::indexing::Slice()}, 1.0);
    g.index_put_({torch::indexing::Slice(1, 3), torch::indexing::Slice()}, 1.0);
    CHECK(iou_metric(p, g, 0.5) == doctest::Approx(1.0 / 3.0));
  }
  SUBCASE("both empty defined as 1") {
    auto z = torch::zeros({3, 3});
    CHECK(iou_metric(z, z, 0.5) == 1.0);
  }
}

TEST_CASE("loss id registry") {
  CHECK(parse_loss_id("dice") == LossId::kDice);
  CHECK(parse_loss_id("logdice") == LossId::kLogDice);
  CHECK(parse_loss_id("focal") == LossId::kFocal);
  CHECK(parse_loss_id("sr") == LossId::kSR);
  CHECK_THROWS_AS(parse_loss_id("tversky"), ConfigError);
  CHECK(to_string(LossId::kSR) == "sr");
}
