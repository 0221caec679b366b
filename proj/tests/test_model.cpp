#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest_compat.hpp"

#include "contrail/errors.hpp"
#include "contrail/model.hpp"
#include "testing.hpp"

using namespace contrail;
using namespace contrail::model;

namespace {

ModelConfig tiny_config(int depth = 3) {
  ModelConfig cfg;
  cfg.encoder_variant = "resnet18";
  cfg.encoder_depth = depth;
  cfg.decoder_channels.assign(depth, 16);
  return cfg;
}

}  // namespace

TEST_CASE("config validation") {
  ModelConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.encoder_variant = "vgg16";
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = ModelConfig{};
  cfg.encoder_depth = 4;  // decoder_channels still has 5 entries
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = ModelConfig{};
  cfg.decoder_channels = {256, 128, 64, 32, 0};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  SUBCASE("json round trip") {
    ModelConfig a = tiny_config(4);
    auto b = ModelConfig::from_json(a.to_json());
    CHECK(a.to_json() == b.to_json());
  }
}

TEST_CASE("default config maps 320x320x3 to 320x320x1 logits") {
  torch::manual_seed(1);
  auto net = build(ModelConfig{});
  net->eval();
  torch::NoGradGuard no_grad;
  auto y = net->forward(torch::rand({1, 3, 320, 320}));
  CHECK(y.sizes() == torch::IntArrayRef({1, 1, 320, 320}));
  CHECK(parameter_count(net) > 20'000'000);  // resnet34 encoder scale
}

TEST_CASE("encoder_depth 4 keeps 64x64 output") {
  torch::manual_seed(2);
  ModelConfig cfg = tiny_config(4);
  auto net = build(cfg);
  net->eval();
  torch::NoGradGuard no_grad;
  auto y = net->forward(torch::rand({2, 3, 64, 64}));
  CHECK(y.sizes() == torch::IntArrayRef({2, 1, 64, 64}));
}

TEST_CASE("shape round trip across input sizes") {
  torch::manual_seed(3);
  auto net = build(tiny_config(5));
  net->eval();
  torch::NoGradGuard no_grad;
  for (int size : {32, 64, 160, 320}) {
    auto y = net->forward(torch::rand({1, 3, size, size}));
    CHECK(y.size(2) == size);
    CHECK(y.size(3) == size);
  }
  auto y8 = net->forward(torch::rand({8, 3, 320, 320}));
  CHECK(y8.sizes() == torch::IntArrayRef({8, 1, 320, 320}));
}

TEST_CASE("indivisible spatial dims are rejected") {
  torch::manual_seed(4);
  auto net = build(tiny_config(4));  // needs divisibility by 16
  CHECK_THROWS_AS(net->forward(torch::rand({1, 3, 40, 40})),
                  std::invalid_argument);
}

TEST_CASE("residual block with zeroed F_res is the identity") {
  torch::manual_seed(5);
  BasicBlock block(16, 16, 1);  // no projection
  block->eval();
  torch::NoGradGuard no_grad;
  // Zero the residual branch's last layer: conv2 weights and bn2 affine.
  block->conv2->weight.zero_();
  block->bn2->weight.zero_();
  block->bn2->bias.zero_();
  auto x = torch::rand({1, 16, 12, 12});  // non-negative, as after a relu
  auto y = block->forward(x);
  CHECK(torch::equal(y, x));
}

TEST_CASE("eval forward is deterministic and batch-consistent") {
  torch::manual_seed(6);
  auto net = build(tiny_config(3));
  net->eval();
  torch::NoGradGuard no_grad;
  auto x = torch::rand({1, 3, 32, 32});
  auto a = net->forward(x);
  auto b = net->forward(x);
  CHECK(torch::equal(a, b));

  // Two identical images in one batch produce identical logit maps.
  auto batch = torch::cat({x, x});
  auto y = net->forward(batch);
  CHECK(torch::equal(y[0], y[1]));
}

TEST_CASE("all-zero and all-one inputs produce different outputs") {
  torch::manual_seed(7);
  auto net = build(tiny_config(3));
  net->eval();
  torch::NoGradGuard no_grad;
  auto y0 = net->forward(torch::zeros({1, 3, 32, 32}));
  auto y1 = net->forward(torch::ones({1, 3, 32, 32}));
  CHECK((y0 - y1).abs().max().item<double>() > 1e-6);
}

TEST_CASE("replicate_channels copies the band") {
  auto img = torch::rand({17, 13});
  auto three = replicate_channels(img);
  CHECK(three.sizes() == torch::IntArrayRef({3, 17, 13}));
  for (int c = 0; c < 3; ++c) CHECK(torch::equal(three[c], img));

  auto batch = torch::rand({2, 1, 8, 8});
  auto out = replicate_channels(batch);
  CHECK(out.sizes() == torch::IntArrayRef({2, 3, 8, 8}));
  CHECK(torch::equal(out.select(1, 0), batch.squeeze(1)));
  CHECK_THROWS(replicate_channels(torch::rand({2, 2, 8, 8})));
}

TEST_CASE("gradient through replicate_channels sums the per-channel maps") {
  torch::manual_seed(8);
  auto net = build(tiny_config(3));
  net->eval();

  auto x = torch::rand({1, 1, 32, 32}).requires_grad_(true);
  auto y3 = replicate_channels(x);
  net->forward(y3).sum().backward();
  auto grad_source = x.grad().clone();

  auto x3 = replicate_channels(x.detach()).detach().requires_grad_(true);
  net->forward(x3).sum().backward();
  auto grad_channels = x3.grad().sum(1, /*keepdim=*/true);
  CHECK((grad_source - grad_channels).abs().max().item<double>() < 1e-5);

  // Finite-difference spot check on a few pixels of the scalar output.
  auto net64 = build(tiny_config(3));
  net64->eval();
  net64->to(torch::kFloat64);
  auto f = [&](const torch::Tensor& img) {
    return net64->forward(replicate_channels(img)).sum();
  };
  auto x0 = torch::rand({1, 1, 32, 32}, torch::kFloat64);
  auto xg = x0.clone().requires_grad_(true);
  f(xg).backward();
  auto analytic = xg.grad();
  contrail::Rng rng(77);
  torch::NoGradGuard no_grad;
  for (int probe = 0; probe < 6; ++probe) {
    int y = static_cast<int>(rng.uniform_int(32));
    int x_pix = static_cast<int>(rng.uniform_int(32));
    const double step = 1e-5;
    auto xp = x0.clone();
    auto xm = x0.clone();
    xp[0][0][y][x_pix] += step;
    xm[0][0][y][x_pix] -= step;
    double fd = (f(xp).item<double>() - f(xm).item<double>()) / (2 * step);
    double an = analytic[0][0][y][x_pix].item<double>();
    CHECK(std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6}) < 1e-3);
  }
}

TEST_CASE("encoder weight export and pretrained load") {
  testing::TempDir dir("encoder");
  torch::manual_seed(9);
  auto donor = build(tiny_config(3));
  auto path = dir / "encoder.pt";
  export_encoder(donor, path);

  torch::manual_seed(10);
  auto receiver = build(tiny_config(3));

  // Decoder baseline to verify it stays untouched.
  std::vector<torch::Tensor> decoder_before;
  for (const auto& p : receiver->named_parameters()) {
    if (p.key().rfind("encoder.", 0) != 0) {
      decoder_before.push_back(p.value().detach().clone());
    }
  }
  // Fresh inits differ between seeds.
  CHECK(!torch::equal(donor->encoder->conv1->weight,
                      receiver->encoder->conv1->weight));

  load_pretrained_encoder(receiver, path);
  CHECK(torch::equal(donor->encoder->conv1->weight,
                     receiver->encoder->conv1->weight));
  size_t i = 0;
  for (const auto& p : receiver->named_parameters()) {
    if (p.key().rfind("encoder.", 0) != 0) {
      CHECK(torch::equal(decoder_before[i++], p.value()));
    }
  }

  SUBCASE("wrong-variant weights name the first offending entry") {
    auto cfg34 = tiny_config(3);
    cfg34.encoder_variant = "resnet34";
    auto other = build(cfg34);
    CHECK_THROWS_WITH_AS(load_pretrained_encoder(other, path),
                         doctest::Contains("missing entry"), DataError);
    // Reverse direction: extra archive entries are rejected too.
    auto path34 = dir / "encoder34.pt";
    export_encoder(other, path34);
    auto back = build(tiny_config(3));
    CHECK_THROWS_WITH_AS(load_pretrained_encoder(back, path34),
                         doctest::Contains("unexpected entry"), DataError);
  }
  SUBCASE("missing file is a data error") {
    auto lost = build(tiny_config(3));
    CHECK_THROWS_AS(load_pretrained_encoder(lost, dir / "missing.pt"), DataError);
  }
}

TEST_CASE("loaded encoder produces non-constant feature maps") {
  testing::TempDir dir("encfeat");
  torch::manual_seed(11);
  auto donor = build(tiny_config(4));
  auto path = dir / "enc.pt";
  export_encoder(donor, path);

  torch::manual_seed(12);
  auto net = build(tiny_config(4));
  load_pretrained_encoder(net, path);
  net->eval();
  torch::NoGradGuard no_grad;

  auto scene = testing::synthetic_scene(64, 64, 13, 3);
  auto x = replicate_channels(
      testing::image_tensor(scene.image).unsqueeze(0).unsqueeze(0));
  auto stages = net->encoder_features(x);
  REQUIRE(stages.size() == 4);
  for (const auto& stage : stages) {
    CHECK(stage.var().item<double>() > 0.0);
  }
}
