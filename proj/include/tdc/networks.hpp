#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tdc/autodiff.hpp"
#include "tdc/rng.hpp"

namespace tdc {

struct NetworkConfig {
  int base_channels = 16;
  int feature_stride = 4;
  int feature_channels = 16;
  int injection_scales = 3;
  int plane_count = 45;
  bool use_injection = true;  // false: injection net sees only the cost volume
  std::uint64_t init_seed = 2024;

  void validate() const;
  // both spatial image dims must be divisible by this
  int image_divisor() const { return feature_stride * 8; }

  bool operator==(const NetworkConfig&) const = default;
};

struct Conv2dLayer {
  Parameter weight, bias;
  int stride = 1, padding = 0;

  Conv2dLayer() = default;
  Conv2dLayer(const std::string& name, int in_ch, int out_ch, int ksize, int stride_,
              int padding_, Rng& rng);
  Var operator()(Tape& t, Var x);
  void collect(std::vector<Parameter*>& out);
  int param_count() const { return weight.numel() + bias.numel(); }
};

struct Conv3dLayer {
  Parameter weight, bias;
  int stride = 1, padding = 0;

  Conv3dLayer() = default;
  Conv3dLayer(const std::string& name, int in_ch, int out_ch, int ksize, int stride_,
              int padding_, Rng& rng);
  Var operator()(Tape& t, Var x);
  void collect(std::vector<Parameter*>& out);
  int param_count() const { return weight.numel() + bias.numel(); }
};

// U-Net over the feature grid: a stride-reducing stem, three resolution
// levels (base, 2*base, 4*base channels) with skip connections, 1x1 head to
// plane_count channels, softmax over planes.
class SingleViewNet {
 public:
  SingleViewNet(const NetworkConfig& cfg, Rng& rng);

  // rgb [3,H,W], raw_depth_norm [1,H,W] in [0,1], mask [1,H,W] in {0,1};
  // returns the single-view probability volume [N, H/stride, W/stride]
  Var forward(Tape& t, Var rgb, Var raw_depth_norm, Var mask);

  void collect(std::vector<Parameter*>& out);
  int param_count() const;

 private:
  NetworkConfig cfg_;
  std::vector<Conv2dLayer> stem_;
  Conv2dLayer enc0_, enc1_, enc2_, dec1_, dec0_, head_;
};

// Shared-parameter feature extractor: stem to the stride-4 grid, average-pool
// pyramid branches {1,2,4,8} with 1x1 convs, nearest upsample, 3x3 fuse.
class SppExtractor {
 public:
  SppExtractor(const NetworkConfig& cfg, Rng& rng);

  Var forward(Tape& t, Var image);  // [3,H,W] -> [C_f, H/stride, W/stride]

  void collect(std::vector<Parameter*>& out);
  int param_count() const;
  static const std::vector<int>& pool_factors();

 private:
  NetworkConfig cfg_;
  std::vector<Conv2dLayer> stem_;
  std::vector<Conv2dLayer> branch_;
  Conv2dLayer fuse_;
};

// Multi-scale encoder/decoder over the cost volume. Each encoder level sees
// the single-view probability volume max-pooled to its resolution; the
// decoder mirrors with nearest upsampling and skip connections. With
// use_injection=false the same structure runs on the cost volume alone.
class InjectionNet {
 public:
  InjectionNet(const NetworkConfig& cfg, Rng& rng);

  // cost [C,N,h,w], prob [N,h,w] -> enhanced cost [C,N,h,w]
  Var forward(Tape& t, Var cost, Var prob);

  void collect(std::vector<Parameter*>& out);
  int param_count() const;

 private:
  NetworkConfig cfg_;
  std::vector<Conv3dLayer> encoders_;
  Conv3dLayer bottleneck_;
  std::vector<Conv3dLayer> decoders_;  // decoders_[k] produces resolution 1/2^k
};

// Three 3D convolutions (C -> base -> base -> 1) with relu between; the
// squeezed [N,h,w] scores feed the plane softmax.
class CostRegularizer {
 public:
  CostRegularizer(const NetworkConfig& cfg, Rng& rng);

  Var forward(Tape& t, Var cost);  // [C,N,h,w] -> [N,h,w] pre-softmax scores

  void collect(std::vector<Parameter*>& out);
  int param_count() const;

 private:
  Conv3dLayer conv1_, conv2_, conv3_;
};

// Two 3x3 convs on concat(reference features, multi-view probability volume)
// to 2 channels, softmax over the pair: confidences sum to one per pixel.
class ConfidenceHead {
 public:
  ConfidenceHead(const NetworkConfig& cfg, Rng& rng);

  // returns (confidence_multi [h,w], confidence_single [h,w])
  std::pair<Var, Var> forward(Tape& t, Var ref_features, Var multi_prob);

  void collect(std::vector<Parameter*>& out);
  int param_count() const;

 private:
  Conv2dLayer conv1_, conv2_;
};

struct Models {
  NetworkConfig config;

 private:
  Rng init_rng_;  // declared before the nets: members initialize in order

 public:
  SingleViewNet single_view;
  SppExtractor spp;
  InjectionNet injection;
  CostRegularizer regularizer;
  ConfidenceHead confidence;

  explicit Models(const NetworkConfig& cfg);

  std::vector<Parameter*> parameters();
  void zero_grad();
  int param_count();
};

}  // namespace tdc
