#ifndef CONTRAIL_MODEL_HPP
#define CONTRAIL_MODEL_HPP

#include <filesystem>
#include <string>
#include <vector>

#include <torch/torch.h>

#include <json.hpp>

namespace contrail::model {

struct ModelConfig {
  int encoder_depth = 5;                       // downsampling stages, 2..5
  std::string encoder_variant = "resnet34";    // resnet18 | resnet34
  std::vector<int> decoder_channels = {256, 128, 64, 32, 16};
  int in_channels = 3;
  int out_channels = 1;
  bool use_pretrained = false;

  void validate() const;  // throws ConfigError
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

// Residual block: output = relu(input + F_res(input)), with a strided 1x1
// projection on the skip when the shape changes.
struct BasicBlockImpl : torch::nn::Module {
  BasicBlockImpl(int in_channels, int out_channels, int stride);
  torch::Tensor forward(torch::Tensor x);

  torch::nn::Conv2d conv1{nullptr}, conv2{nullptr};
  torch::nn::BatchNorm2d bn1{nullptr}, bn2{nullptr};
  torch::nn::Sequential projection{nullptr};  // null when the skip is the identity
};
TORCH_MODULE(BasicBlock);

// ResNet backbone truncated to `depth` downsampling stages. Stage i output
// has stride 2^i; forward_stages returns them shallowest first.
struct ResNetEncoderImpl : torch::nn::Module {
  ResNetEncoderImpl(const std::string& variant, int depth, int in_channels);

  std::vector<torch::Tensor> forward_stages(torch::Tensor x);
  const std::vector<int>& stage_channels() const { return stage_channels_; }

  torch::nn::Conv2d conv1{nullptr};
  torch::nn::BatchNorm2d bn1{nullptr};
  torch::nn::MaxPool2d maxpool{nullptr};
  std::vector<torch::nn::Sequential> layers;

 private:
  torch::nn::Sequential make_layer(int in_ch, int out_ch, int blocks, int stride);
  std::vector<int> stage_channels_;
  int depth_;
};
TORCH_MODULE(ResNetEncoder);

// Decoder stage: transposed-conv upsampling, skip concatenation, double conv.
struct DecoderBlockImpl : torch::nn::Module {
  DecoderBlockImpl(int in_channels, int skip_channels, int out_channels);
  torch::Tensor forward(torch::Tensor x, const torch::Tensor& skip);

  torch::nn::ConvTranspose2d up{nullptr};
  torch::nn::Conv2d conv1{nullptr}, conv2{nullptr};
  torch::nn::BatchNorm2d bn1{nullptr}, bn2{nullptr};
};
TORCH_MODULE(DecoderBlock);

struct ResUNetImpl : torch::nn::Module {
  explicit ResUNetImpl(ModelConfig cfg);

  // images: [B, in_channels, H, W] with H, W divisible by 2^encoder_depth.
  // Returns logits [B, out_channels, H, W].
  torch::Tensor forward(torch::Tensor x);
  std::vector<torch::Tensor> encoder_features(torch::Tensor x);

  ModelConfig config;
  ResNetEncoder encoder{nullptr};
  std::vector<DecoderBlock> decoder_blocks;
  torch::nn::Conv2d head{nullptr};
};
TORCH_MODULE(ResUNet);

ResUNet build(const ModelConfig& cfg);
int64_t parameter_count(const ResUNet& model);

// [H,W] -> [3,H,W], [1,H,W] -> [3,H,W], [B,1,H,W] -> [B,3,H,W] by copying.
torch::Tensor replicate_channels(const torch::Tensor& image);

// Encoder weight archive: a torch serialization archive holding every
// encoder parameter and buffer by name plus a name manifest, so loading can
// report the first missing, extra, or shape-mismatched entry.
void export_encoder(const ResUNet& model, const std::filesystem::path& path);
void load_pretrained_encoder(ResUNet& model, const std::filesystem::path& weights);

}  // namespace contrail::model

#endif  // CONTRAIL_MODEL_HPP
