#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest_compat.hpp"

#include "contrail/errors.hpp"
#include "contrail/hough.hpp"
#include "testing.hpp"

using namespace contrail;
using namespace contrail::hough;

TEST_CASE("grid arithmetic") {
  SUBCASE("320x320 default grid") {
    auto g = build_grid(320, 320, 180, 1.0);
    CHECK(g.n_rho == 453);
    CHECK(g.n_theta == 180);
    CHECK(g.theta_values[0] == 0.0);
    CHECK(g.theta_values[1] == doctest::Approx(M_PI / 180.0));
    CHECK(g.rho_values.front() == doctest::Approx(-226.0));
    CHECK(g.rho_values.back() == doctest::Approx(226.0));
    // Every pixel-center rho stays within the covered range.
    CHECK(g.rho_max <= 226.0);
  }
  SUBCASE("2x2 grid") {
    auto g = build_grid(2, 2, 180, 1.0);
    CHECK(g.rho_max == doctest::Approx(std::sqrt(2.0) / 2.0));
    CHECK(g.n_rho == 3);
  }
  SUBCASE("uniform spacing") {
    auto g = build_grid(33, 47, 90, 0.5);
    for (size_t i = 1; i < g.theta_values.size(); ++i) {
      CHECK(g.theta_values[i] - g.theta_values[i - 1] ==
            doctest::Approx(M_PI / 90.0));
    }
    for (size_t i = 1; i < g.rho_values.size(); ++i) {
      CHECK(g.rho_values[i] - g.rho_values[i - 1] == doctest::Approx(0.5));
    }
  }
  SUBCASE("invalid arguments") {
    CHECK_THROWS_AS(build_grid(0, 4), ConfigError);
    CHECK_THROWS_AS(build_grid(4, 4, 1), ConfigError);
  }
}

TEST_CASE("zero mask accumulates to zero") {
  auto g = build_grid(16, 16, 90);
  auto acc = soft_accumulate(torch::zeros({16, 16}), g);
  CHECK(acc.values.abs().max().item<double>() == 0.0);
}

TEST_CASE("single center pixel votes rho=0 at every theta") {
  auto g = build_grid(33, 33, 60);
  auto mask = torch::zeros({33, 33});
  mask[16][16] = 1.0;
  auto votes = soft_votes(mask, g);
  for (int j = 0; j < g.n_theta; ++j) {
    // rho = 0 exactly: full triangular weight lands on the central bin.
    CHECK(votes[g.n_half][j].item<double>() == doctest::Approx(1.0));
  }
  auto acc = soft_accumulate(mask, g);
  // theta = 0 column: peak at the central rho bin.
  auto col = acc.values.index({torch::indexing::Slice(), 0});
  CHECK(col.argmax().item<int64_t>() == g.n_half);
}

TEST_CASE("horizontal line peaks at theta=pi/2 with rho = r - 16") {
  const int r = 7;
  auto g = build_grid(33, 33, 180);
  auto mask = torch::zeros({33, 33});
  mask.index_put_({r, torch::indexing::Slice()}, 1.0);
  auto acc = soft_accumulate(mask, g);

  auto flat_idx = acc.values.argmax().item<int64_t>();
  int rho_bin = static_cast<int>(flat_idx / g.n_theta);
  int theta_bin = static_cast<int>(flat_idx % g.n_theta);
  CHECK(theta_bin == 90);
  CHECK(g.rho_values[rho_bin] == doctest::Approx(r - 16.0));
  CHECK(acc.values[rho_bin][theta_bin].item<double>() >= 0.9);

  // Brute-force agreement on the same mask.
  auto brute = testing::brute_force_accumulator(mask, g);
  auto fast = soft_accumulate(mask.to(torch::kFloat64), g).values;
  CHECK((fast - brute).abs().max().item<double>() < 1e-6);
}

TEST_CASE("brute-force equivalence on random masks") {
  Rng rng(2024);
  for (int trial = 0; trial < 25; ++trial) {
    int h = 4 + static_cast<int>(rng.uniform_int(13));
    int w = 4 + static_cast<int>(rng.uniform_int(13));
    auto g = build_grid(h, w, 45);
    auto mask = torch::rand({h, w}, torch::kFloat64);
    auto fast = soft_accumulate(mask, g).values;
    auto brute = testing::brute_force_accumulator(mask, g);
    CHECK((fast - brute).abs().max().item<double>() < 1e-6);
  }
}

TEST_CASE("raw votes are linear in the mask") {
  auto g = build_grid(12, 12, 36);
  auto m1 = torch::rand({12, 12}, torch::kFloat64);
  auto m2 = torch::rand({12, 12}, torch::kFloat64);
  auto lhs = soft_votes(2.5 * m1 + 0.75 * m2, g);
  auto rhs = 2.5 * soft_votes(m1, g) + 0.75 * soft_votes(m2, g);
  CHECK((lhs - rhs).abs().max().item<double>() < 1e-9);
}

TEST_CASE("accumulation is reproducible bit for bit") {
  auto g = build_grid(24, 24, 90);
  auto mask = torch::rand({24, 24});
  auto a = soft_accumulate(mask, g).values;
  auto b = soft_accumulate(mask, g).values;
  CHECK(torch::equal(a, b));
}

TEST_CASE("accumulator gradients match finite differences") {
  auto g = build_grid(16, 16, 45);
  Rng rng(5150);
  for (int trial = 0; trial < 3; ++trial) {
    auto mask = torch::rand({16, 16}, torch::kFloat64);
    int i = 10 + trial, j = 7 * (trial + 1);
    auto f = [&](const torch::Tensor& m) {
      return soft_accumulate(m, g).values[i][j];
    };
    CHECK(testing::max_rel_grad_error(f, mask) < 1e-3);
  }
}

TEST_CASE("squash values") {
  auto g = build_grid(8, 8, 30);
  auto acc = soft_accumulate(torch::rand({8, 8}), g);

  SUBCASE("midpoint maps to one half") {
    HoughAccumulator at_tau{torch::full({3, 3}, 0.25), &g};
    auto s = squash(at_tau, 0.25, 20.0);
    CHECK(s.values.min().item<double>() == doctest::Approx(0.5));
    CHECK(s.values.max().item<double>() == doctest::Approx(0.5));
  }
  SUBCASE("saturation at large beta") {
    HoughAccumulator ones{torch::ones({2, 2}), &g};
    auto s = squash(ones, 0.25, 400.0);
    CHECK(s.values.min().item<double>() > 0.999999);
  }
  SUBCASE("direct evaluation: logistic(5)") {
    HoughAccumulator half{torch::full({1, 1}, 0.5), &g};
    auto s = squash(half, 0.25, 20.0);
    CHECK(s.values[0][0].item<double>() == doctest::Approx(0.993307).epsilon(1e-4));
  }
  SUBCASE("monotone in the accumulator value") {
    auto s1 = squash(acc, 0.25, 20.0).values;
    auto s2 = squash(HoughAccumulator{acc.values + 0.01, &g}, 0.25, 20.0).values;
    CHECK((s2 - s1).min().item<double>() > 0.0);
  }
}

TEST_CASE("rotating a line mask by 90 degrees shifts theta by n_theta/2") {
  const int n = 33;
  auto run = [&](double angle_deg) {
    contrail::Mask mask(n, n);
    testing::stroke_line(mask, 16.0, 11.0, angle_deg, 0.6);
    auto g = build_grid(n, n, 60);
    auto t = testing::mask_tensor(mask);

    // Rotation taking old centered coords (a, b) to (-b, a), i.e. theta
    // advances by +pi/2.
    auto rotated = torch::rot90(t, -1, {0, 1});

    auto acc0 = soft_accumulate(t, g).values;
    auto acc1 = soft_accumulate(rotated, g).values;
    int64_t a0 = acc0.argmax().item<int64_t>();
    int64_t a1 = acc1.argmax().item<int64_t>();
    int r0 = static_cast<int>(a0 / g.n_theta), t0 = static_cast<int>(a0 % g.n_theta);
    int r1 = static_cast<int>(a1 / g.n_theta), t1 = static_cast<int>(a1 % g.n_theta);

    const int shifted = t0 + g.n_theta / 2;
    if (shifted < g.n_theta) {
      CHECK(t1 == shifted);
      CHECK(r1 == r0);
    } else {
      CHECK(t1 == shifted - g.n_theta);
      CHECK(r1 == g.n_rho - 1 - r0);
    }
  };
  run(30.0);   // no wrap
  run(120.0);  // wraps past pi with rho negation
}

TEST_CASE("extract_lines") {
  SUBCASE("empty accumulator yields no lines") {
    auto g = build_grid(16, 16, 60);
    auto acc = soft_accumulate(torch::zeros({16, 16}), g);
    CHECK(extract_lines(acc, 0.5, 2).empty());
  }
  SUBCASE("one synthetic line is recovered within one bin") {
    const int n = 33;
    contrail::Mask mask(n, n);
    testing::stroke_line(mask, 16.0, 16.0, 35.0, 0.6);
    auto g = build_grid(n, n, 180);
    auto acc = soft_accumulate(testing::mask_tensor(mask), g);
    auto lines = extract_lines(acc, 0.5, 2);
    REQUIRE(lines.size() == 1);
    // Stroke runs at 35 deg from x axis; its normal is at 125 deg.
    CHECK(std::abs(lines[0].theta - 125.0 * M_PI / 180.0) <=
          M_PI / 180.0 + 1e-9);
    CHECK(std::abs(lines[0].rho - 0.0) <= 1.0 + 1e-9);
  }
  SUBCASE("two parallel lines 6 px apart resolve as exactly two") {
    const int n = 65;
    contrail::Mask mask(n, n);
    testing::stroke_line(mask, 32.0, 29.0, 0.0, 0.45);
    testing::stroke_line(mask, 32.0, 35.0, 0.0, 0.45);
    auto g = build_grid(n, n, 180);
    auto acc = soft_accumulate(testing::mask_tensor(mask), g);
    auto lines = extract_lines(acc, 0.5, 2);
    REQUIRE(lines.size() == 2);
    std::vector<double> rhos = {lines[0].rho, lines[1].rho};
    std::sort(rhos.begin(), rhos.end());
    CHECK(rhos[0] == doctest::Approx(-3.0).epsilon(0.4));
    CHECK(rhos[1] == doctest::Approx(3.0).epsilon(0.4));
  }
}

TEST_CASE("render_lines rasterization") {
  SUBCASE("theta=0 is the center column") {
    LineSet lines{{0.0, 0.0, 1.0, 0, 0}};
    auto m = render_lines(lines, 33, 33);
    for (int y = 0; y < 33; ++y) CHECK(m.at(y, 16) == 1);
    CHECK(m.foreground_count() == 33);
  }
  SUBCASE("theta=pi/2 is the center row") {
    LineSet lines{{0.0, M_PI / 2.0, 1.0, 0, 0}};
    auto m = render_lines(lines, 33, 33);
    for (int x = 0; x < 33; ++x) CHECK(m.at(16, x) == 1);
    CHECK(m.foreground_count() == 33);
  }
  SUBCASE("render then accumulate recovers the same argmax bin") {
    auto g = build_grid(49, 49, 120);
    const int rho_bin = g.n_half + 6;
    const int theta_bin = 37;
    LineSet lines{{g.rho_values[rho_bin], g.theta_values[theta_bin], 1.0,
                   rho_bin, theta_bin}};
    auto rendered = render_lines(lines, 49, 49);
    auto acc = soft_accumulate(testing::mask_tensor(rendered), g);
    auto flat = acc.values.argmax().item<int64_t>();
    CHECK(static_cast<int>(flat / g.n_theta) == rho_bin);
    CHECK(static_cast<int>(flat % g.n_theta) == theta_bin);
  }
}
