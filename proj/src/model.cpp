#include "contrail/model.hpp"

#include <algorithm>
#include <sstream>

#include "contrail/errors.hpp"

namespace contrail::model {

namespace {

const std::vector<int>& blocks_for_variant(const std::string& variant) {
  static const std::vector<int> kResNet18 = {2, 2, 2, 2};
  static const std::vector<int> kResNet34 = {3, 4, 6, 3};
  if (variant == "resnet18") return kResNet18;
  if (variant == "resnet34") return kResNet34;
  throw ConfigError("unknown encoder variant '" + variant +
                    "' (expected resnet18|resnet34)");
}

torch::nn::Conv2d conv3x3(int in_ch, int out_ch, int stride = 1) {
  return torch::nn::Conv2d(torch::nn::Conv2dOptions(in_ch, out_ch, 3)
                               .stride(stride)
                               .padding(1)
                               .bias(false));
}

}  // namespace

void ModelConfig::validate() const {
  blocks_for_variant(encoder_variant);
  if (encoder_depth < 2 || encoder_depth > 5) {
    throw ConfigError("encoder_depth must be in [2, 5]");
  }
  if (static_cast<int>(decoder_channels.size()) != encoder_depth) {
    throw ConfigError("decoder_channels must have exactly encoder_depth entries");
  }
  for (int c : decoder_channels) {
    if (c <= 0) throw ConfigError("decoder channels must be positive");
  }
  if (in_channels <= 0 || out_channels <= 0) {
    throw ConfigError("channel counts must be positive");
  }
}

nlohmann::json ModelConfig::to_json() const {
  return nlohmann::json{{"encoder_depth", encoder_depth},
                        {"encoder_variant", encoder_variant},
                        {"decoder_channels", decoder_channels},
                        {"in_channels", in_channels},
                        {"out_channels", out_channels},
                        {"use_pretrained", use_pretrained}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig cfg;
  if (j.contains("encoder_depth")) cfg.encoder_depth = j.at("encoder_depth");
  if (j.contains("encoder_variant")) cfg.encoder_variant = j.at("encoder_variant");
  if (j.contains("decoder_channels"))
    cfg.decoder_channels = j.at("decoder_channels").get<std::vector<int>>();
  if (j.contains("in_channels")) cfg.in_channels = j.at("in_channels");
  if (j.contains("out_channels")) cfg.out_channels = j.at("out_channels");
  if (j.contains("use_pretrained")) cfg.use_pretrained = j.at("use_pretrained");
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------------------
// BasicBlock
// ---------------------------------------------------------------------------

BasicBlockImpl::BasicBlockImpl(int in_channels, int out_channels, int stride) {
  conv1 = register_module("conv1", conv3x3(in_channels, out_channels, stride));
  bn1 = register_module("bn1", torch::nn::BatchNorm2d(out_channels));
  conv2 = register_module("conv2", conv3x3(out_channels, out_channels));
  bn2 = register_module("bn2", torch::nn::BatchNorm2d(out_channels));
  if (stride != 1 || in_channels != out_channels) {
    projection = torch::nn::Sequential(
        torch::nn::Conv2d(torch::nn::Conv2dOptions(in_channels, out_channels, 1)
                              .stride(stride)
                              .bias(false)),
        torch::nn::BatchNorm2d(out_channels));
    register_module("projection", projection);
  }
}

torch::Tensor BasicBlockImpl::forward(torch::Tensor x) {
  auto identity = projection.is_empty() ? x : projection->forward(x);
  auto out = torch::relu(bn1->forward(conv1->forward(x)));
  out = bn2->forward(conv2->forward(out));
  return torch::relu(out + identity);
}

// ---------------------------------------------------------------------------
// Encoder
// ---------------------------------------------------------------------------

ResNetEncoderImpl::ResNetEncoderImpl(const std::string& variant, int depth,
                                     int in_channels)
    : depth_(depth) {
  const auto& blocks = blocks_for_variant(variant);

  conv1 = register_module(
      "conv1", torch::nn::Conv2d(torch::nn::Conv2dOptions(in_channels, 64, 7)
                                     .stride(2)
                                     .padding(3)
                                     .bias(false)));
  bn1 = register_module("bn1", torch::nn::BatchNorm2d(64));
  maxpool = register_module(
      "maxpool", torch::nn::MaxPool2d(
                     torch::nn::MaxPool2dOptions(3).stride(2).padding(1)));

  stage_channels_ = {64};
  const int stage_ch[4] = {64, 128, 256, 512};
  int in_ch = 64;
  for (int s = 0; s < depth - 1; ++s) {
    int out_ch = stage_ch[s];
    int stride = s == 0 ? 1 : 2;  // layer1 keeps the maxpool's stride
    auto layer = make_layer(in_ch, out_ch, blocks[s], stride);
    layers.push_back(register_module("layer" + std::to_string(s + 1), layer));
    stage_channels_.push_back(out_ch);
    in_ch = out_ch;
  }
}

torch::nn::Sequential ResNetEncoderImpl::make_layer(int in_ch, int out_ch,
                                                    int blocks, int stride) {
  torch::nn::Sequential layer;
  layer->push_back(BasicBlock(in_ch, out_ch, stride));
  for (int b = 1; b < blocks; ++b) {
    layer->push_back(BasicBlock(out_ch, out_ch, 1));
  }
  return layer;
}

std::vector<torch::Tensor> ResNetEncoderImpl::forward_stages(torch::Tensor x) {
  std::vector<torch::Tensor> stages;
  stages.reserve(depth_);
  auto h = torch::relu(bn1->forward(conv1->forward(x)));
  stages.push_back(h);  // stride 2
  h = maxpool->forward(h);
  for (auto& layer : layers) {
    h = layer->forward(h);
    stages.push_back(h);  // stride 4, 8, ...
  }
  return stages;
}

// ---------------------------------------------------------------------------
// Decoder
// ---------------------------------------------------------------------------

DecoderBlockImpl::DecoderBlockImpl(int in_channels, int skip_channels,
                                   int out_channels) {
  up = register_module(
      "up", torch::nn::ConvTranspose2d(
                torch::nn::ConvTranspose2dOptions(in_channels, out_channels, 2)
                    .stride(2)));
  conv1 = register_module("conv1", conv3x3(out_channels + skip_channels, out_channels));
  bn1 = register_module("bn1", torch::nn::BatchNorm2d(out_channels));
  conv2 = register_module("conv2", conv3x3(out_channels, out_channels));
  bn2 = register_module("bn2", torch::nn::BatchNorm2d(out_channels));
}

torch::Tensor DecoderBlockImpl::forward(torch::Tensor x, const torch::Tensor& skip) {
  auto h = up->forward(x);
  if (skip.defined()) h = torch::cat({h, skip}, 1);
  h = torch::relu(bn1->forward(conv1->forward(h)));
  return torch::relu(bn2->forward(conv2->forward(h)));
}

// ---------------------------------------------------------------------------
// ResUNet
// ---------------------------------------------------------------------------

ResUNetImpl::ResUNetImpl(ModelConfig cfg) : config(std::move(cfg)) {
  config.validate();
  encoder = register_module(
      "encoder", ResNetEncoder(config.encoder_variant, config.encoder_depth,
                               config.in_channels));

  const auto& enc_ch = encoder->stage_channels();
  const int depth = config.encoder_depth;
  int in_ch = enc_ch.back();
  for (int i = 0; i < depth; ++i) {
    // Decoder stage i consumes encoder stage depth-1-i resolution and
    // concatenates encoder stage depth-2-i features; the last stage,
    // which restores full resolution, has no skip.
    int skip_idx = depth - 2 - i;
    int skip_ch = skip_idx >= 0 ? enc_ch[skip_idx] : 0;
    int out_ch = config.decoder_channels[i];
    decoder_blocks.push_back(DecoderBlock(in_ch, skip_ch, out_ch));
    register_module("decoder" + std::to_string(i), decoder_blocks.back());
    in_ch = out_ch;
  }
  head = register_module(
      "head", torch::nn::Conv2d(torch::nn::Conv2dOptions(
                  config.decoder_channels.back(), config.out_channels, 1)));
}

torch::Tensor ResUNetImpl::forward(torch::Tensor x) {
  const int64_t divisor = 1ll << config.encoder_depth;
  TORCH_CHECK(x.dim() == 4, "forward expects [B,C,H,W]");
  if (x.size(2) % divisor != 0 || x.size(3) % divisor != 0) {
    std::ostringstream msg;
    msg << "input " << x.size(2) << "x" << x.size(3)
        << " is not divisible by 2^encoder_depth = " << divisor;
    throw std::invalid_argument(msg.str());
  }
  auto stages = encoder->forward_stages(x);
  auto h = stages.back();
  const int depth = config.encoder_depth;
  for (int i = 0; i < depth; ++i) {
    int skip_idx = depth - 2 - i;
    h = decoder_blocks[i]->forward(
        h, skip_idx >= 0 ? stages[skip_idx] : torch::Tensor());
  }
  return head->forward(h);
}

std::vector<torch::Tensor> ResUNetImpl::encoder_features(torch::Tensor x) {
  return encoder->forward_stages(x);
}

ResUNet build(const ModelConfig& cfg) { return ResUNet(cfg); }

int64_t parameter_count(const ResUNet& model) {
  int64_t n = 0;
  for (const auto& p : model->parameters()) n += p.numel();
  return n;
}

torch::Tensor replicate_channels(const torch::Tensor& image) {
  if (image.dim() == 2) return image.unsqueeze(0).repeat({3, 1, 1});
  if (image.dim() == 3) {
    TORCH_CHECK(image.size(0) == 1, "expected a single-channel image");
    return image.repeat({3, 1, 1});
  }
  if (image.dim() == 4) {
    TORCH_CHECK(image.size(1) == 1, "expected a single-channel batch");
    return image.repeat({1, 3, 1, 1});
  }
  TORCH_CHECK(false, "replicate_channels expects 2-4 dims");
}

// ---------------------------------------------------------------------------
// Encoder weight archives
// ---------------------------------------------------------------------------

namespace {

std::string join_names(const std::vector<std::string>& names) {
  std::string out;
  for (const auto& n : names) {
    out += n;
    out += '\n';
  }
  return out;
}

std::vector<std::string> split_names(const std::string& joined) {
  std::vector<std::string> out;
  std::istringstream in(joined);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

}  // namespace

void export_encoder(const ResUNet& model, const std::filesystem::path& path) {
  torch::serialize::OutputArchive archive;
  std::vector<std::string> names;
  for (const auto& p : model->encoder->named_parameters()) {
    names.push_back("param/" + p.key());
    archive.write(names.back(), p.value().detach().clone());
  }
  for (const auto& b : model->encoder->named_buffers()) {
    names.push_back("buffer/" + b.key());
    archive.write(names.back(), b.value().detach().clone());
  }
  archive.write("variant", model->config.encoder_variant);
  archive.write("names", join_names(names));
  archive.save_to(path.string());
}

void load_pretrained_encoder(ResUNet& model, const std::filesystem::path& weights) {
  torch::serialize::InputArchive archive;
  try {
    archive.load_from(weights.string());
  } catch (const c10::Error& e) {
    throw DataError("cannot read encoder weights '" + weights.string() +
                    "': " + e.msg());
  }

  c10::IValue names_value;
  if (!archive.try_read("names", names_value)) {
    throw DataError("encoder weights file lacks a name manifest: " +
                    weights.string());
  }
  std::vector<std::string> archived = split_names(names_value.toStringRef());
  std::sort(archived.begin(), archived.end());

  std::vector<std::pair<std::string, torch::Tensor>> targets;
  for (const auto& p : model->encoder->named_parameters()) {
    targets.emplace_back("param/" + p.key(), p.value());
  }
  for (const auto& b : model->encoder->named_buffers()) {
    targets.emplace_back("buffer/" + b.key(), b.value());
  }

  // Mismatch detection before any mutation: report the first offender.
  std::vector<std::string> expected;
  expected.reserve(targets.size());
  for (const auto& t : targets) expected.push_back(t.first);
  std::sort(expected.begin(), expected.end());
  for (const auto& name : expected) {
    if (!std::binary_search(archived.begin(), archived.end(), name)) {
      throw DataError("encoder weights mismatch: missing entry '" + name + "'");
    }
  }
  for (const auto& name : archived) {
    if (!std::binary_search(expected.begin(), expected.end(), name)) {
      throw DataError("encoder weights mismatch: unexpected entry '" + name + "'");
    }
  }

  std::vector<std::pair<torch::Tensor, torch::Tensor>> updates;
  for (auto& [name, tensor] : targets) {
    torch::Tensor stored;
    archive.read(name, stored);
    if (stored.sizes() != tensor.sizes()) {
      std::ostringstream msg;
      msg << "encoder weights mismatch at '" << name << "': archive "
          << stored.sizes() << " vs model " << tensor.sizes();
      throw DataError(msg.str());
    }
    updates.emplace_back(tensor, stored);
  }

  torch::NoGradGuard no_grad;
  for (auto& [dst, src] : updates) dst.copy_(src);
}

}  // namespace contrail::model
