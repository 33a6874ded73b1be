#include "tdc/networks.hpp"

#include <cmath>
#include <stdexcept>

namespace tdc {

namespace {

bool is_power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

int log2_int(int v) {
  int n = 0;
  while ((1 << n) < v) ++n;
  return n;
}

void check_divisible(int height, int width, int divisor, const char* net) {
  if (height % divisor != 0 || width % divisor != 0) {
    throw std::invalid_argument(std::string(net) + ": input dims " + std::to_string(height) +
                                "x" + std::to_string(width) + " must be divisible by " +
                                std::to_string(divisor));
  }
}

}  // namespace

void NetworkConfig::validate() const {
  if (!is_power_of_two(feature_stride)) {
    throw std::invalid_argument("network config: feature_stride must be a power of two");
  }
  if (base_channels < 1 || feature_channels < 1) {
    throw std::invalid_argument("network config: channel widths must be positive");
  }
  if (injection_scales < 1) {
    throw std::invalid_argument("network config: injection_scales must be >= 1");
  }
  if (plane_count < 2) {
    throw std::invalid_argument("network config: plane_count must be >= 2");
  }
}

Conv2dLayer::Conv2dLayer(const std::string& name, int in_ch, int out_ch, int ksize,
                         int stride_, int padding_, Rng& rng)
    : weight(Parameter::uniform_init(name + ".weight", {out_ch, in_ch, ksize, ksize},
                                     in_ch * ksize * ksize, rng)),
      bias(name + ".bias", Tensor({out_ch})),
      stride(stride_),
      padding(padding_) {}

Var Conv2dLayer::operator()(Tape& t, Var x) {
  return t.bias_channels(t.conv2d(x, t.watch(weight), stride, padding), t.watch(bias));
}

void Conv2dLayer::collect(std::vector<Parameter*>& out) {
  out.push_back(&weight);
  out.push_back(&bias);
}

Conv3dLayer::Conv3dLayer(const std::string& name, int in_ch, int out_ch, int ksize,
                         int stride_, int padding_, Rng& rng)
    : weight(Parameter::uniform_init(name + ".weight", {out_ch, in_ch, ksize, ksize, ksize},
                                     in_ch * ksize * ksize * ksize, rng)),
      bias(name + ".bias", Tensor({out_ch})),
      stride(stride_),
      padding(padding_) {}

Var Conv3dLayer::operator()(Tape& t, Var x) {
  return t.bias_channels(t.conv3d(x, t.watch(weight), stride, padding), t.watch(bias));
}

void Conv3dLayer::collect(std::vector<Parameter*>& out) {
  out.push_back(&weight);
  out.push_back(&bias);
}

// ---------------------------------------------------------------------------
// SingleViewNet

SingleViewNet::SingleViewNet(const NetworkConfig& cfg, Rng& rng) : cfg_(cfg) {
  const int b = cfg.base_channels;
  int in_ch = 5;  // rgb + raw depth + mask
  for (int s = 0; s < log2_int(cfg.feature_stride); ++s) {
    stem_.emplace_back("single_view.stem" + std::to_string(s), in_ch, b, 3, 2, 1, rng);
    in_ch = b;
  }
  if (stem_.empty()) {  // stride 1: plain stem conv
    stem_.emplace_back("single_view.stem0", in_ch, b, 3, 1, 1, rng);
  }
  enc0_ = Conv2dLayer("single_view.enc0", b, b, 3, 1, 1, rng);
  enc1_ = Conv2dLayer("single_view.enc1", b, 2 * b, 3, 2, 1, rng);
  enc2_ = Conv2dLayer("single_view.enc2", 2 * b, 4 * b, 3, 2, 1, rng);
  dec1_ = Conv2dLayer("single_view.dec1", 4 * b + 2 * b, 2 * b, 3, 1, 1, rng);
  dec0_ = Conv2dLayer("single_view.dec0", 2 * b + b, b, 3, 1, 1, rng);
  head_ = Conv2dLayer("single_view.head", b, cfg.plane_count, 1, 1, 0, rng);
}

Var SingleViewNet::forward(Tape& t, Var rgb, Var raw_depth_norm, Var mask) {
  const int H = rgb->value.dim(1), W = rgb->value.dim(2);
  check_divisible(H, W, cfg_.feature_stride * 4, "single_view_net");

  Var x = t.concat({rgb, raw_depth_norm, mask}, 0);
  for (auto& conv : stem_) x = t.relu(conv(t, x));
  Var e0 = t.relu(enc0_(t, x));
  Var e1 = t.relu(enc1_(t, e0));
  Var e2 = t.relu(enc2_(t, e1));
  Var d1 = t.relu(dec1_(t, t.concat({t.upsample2d_nearest(e2, 2), e1}, 0)));
  Var d0 = t.relu(dec0_(t, t.concat({t.upsample2d_nearest(d1, 2), e0}, 0)));
  return t.softmax(head_(t, d0), 0);
}

void SingleViewNet::collect(std::vector<Parameter*>& out) {
  for (auto& c : stem_) c.collect(out);
  enc0_.collect(out);
  enc1_.collect(out);
  enc2_.collect(out);
  dec1_.collect(out);
  dec0_.collect(out);
  head_.collect(out);
}

int SingleViewNet::param_count() const {
  int n = 0;
  for (const auto& c : stem_) n += c.param_count();
  return n + enc0_.param_count() + enc1_.param_count() + enc2_.param_count() +
         dec1_.param_count() + dec0_.param_count() + head_.param_count();
}

// ---------------------------------------------------------------------------
// SppExtractor

const std::vector<int>& SppExtractor::pool_factors() {
  static const std::vector<int> factors{1, 2, 4, 8};
  return factors;
}

SppExtractor::SppExtractor(const NetworkConfig& cfg, Rng& rng) : cfg_(cfg) {
  const int b = cfg.base_channels;
  int in_ch = 3;
  for (int s = 0; s < log2_int(cfg.feature_stride); ++s) {
    stem_.emplace_back("spp.stem" + std::to_string(s), in_ch, b, 3, 2, 1, rng);
    in_ch = b;
  }
  if (stem_.empty()) {
    stem_.emplace_back("spp.stem0", in_ch, b, 3, 1, 1, rng);
  }
  for (size_t i = 0; i < pool_factors().size(); ++i) {
    branch_.emplace_back("spp.branch" + std::to_string(pool_factors()[i]), b, b, 1, 1, 0, rng);
  }
  fuse_ = Conv2dLayer("spp.fuse", b * static_cast<int>(pool_factors().size()),
                      cfg.feature_channels, 3, 1, 1, rng);
}

Var SppExtractor::forward(Tape& t, Var image) {
  const int H = image->value.dim(1), W = image->value.dim(2);
  check_divisible(H, W, cfg_.feature_stride * pool_factors().back(), "spp_extractor");

  Var x = image;
  for (auto& conv : stem_) x = t.relu(conv(t, x));
  std::vector<Var> branches;
  for (size_t i = 0; i < branch_.size(); ++i) {
    const int f = pool_factors()[i];
    Var y = f == 1 ? x : t.avg_pool2d(x, f, f);
    y = t.relu(branch_[i](t, y));
    if (f > 1) y = t.upsample2d_nearest(y, f);
    branches.push_back(y);
  }
  return fuse_(t, t.concat(branches, 0));
}

void SppExtractor::collect(std::vector<Parameter*>& out) {
  for (auto& c : stem_) c.collect(out);
  for (auto& c : branch_) c.collect(out);
  fuse_.collect(out);
}

int SppExtractor::param_count() const {
  int n = 0;
  for (const auto& c : stem_) n += c.param_count();
  for (const auto& c : branch_) n += c.param_count();
  return n + fuse_.param_count();
}

// ---------------------------------------------------------------------------
// InjectionNet

InjectionNet::InjectionNet(const NetworkConfig& cfg, Rng& rng) : cfg_(cfg) {
  const int c = cfg.feature_channels;
  const int b = cfg.base_channels;
  const int levels = cfg.injection_scales - 1;  // stride-2 encoders
  const int prob_ch = cfg.use_injection ? 1 : 0;

  int in_ch = c + prob_ch;
  for (int k = 0; k < levels; ++k) {
    const int out_ch = b << k;
    encoders_.emplace_back("injection.enc" + std::to_string(k), in_ch, out_ch, 3, 2, 1, rng);
    in_ch = out_ch + prob_ch;
  }
  const int mid_in = levels > 0 ? (b << (levels - 1)) : (c + prob_ch);
  const int mid_out = levels > 0 ? (b << (levels - 1)) : b;
  bottleneck_ = Conv3dLayer("injection.mid", mid_in, mid_out, 3, 1, 1, rng);

  decoders_.resize(std::max(levels, 1));
  int up_ch = mid_out;
  for (int k = levels - 1; k >= 1; --k) {
    const int skip_ch = b << (k - 1);
    decoders_[k] = Conv3dLayer("injection.dec" + std::to_string(k), up_ch + skip_ch,
                               skip_ch, 3, 1, 1, rng);
    up_ch = skip_ch;
  }
  decoders_[0] = Conv3dLayer("injection.dec0", up_ch + c + prob_ch, c, 3, 1, 1, rng);
}

Var InjectionNet::forward(Tape& t, Var cost, Var prob) {
  const Tensor& cv = cost->value;
  if (cv.rank() != 4) throw std::invalid_argument("injection_net: cost must be [C,N,h,w]");
  const int N = cv.dim(1), h = cv.dim(2), w = cv.dim(3);
  if (prob->value.rank() != 3 || prob->value.dim(0) != N || prob->value.dim(1) != h ||
      prob->value.dim(2) != w) {
    throw std::invalid_argument("injection_net: prob " + prob->value.shape_str() +
                                " does not match cost " + cv.shape_str());
  }
  const int levels = cfg_.injection_scales - 1;
  const int align = 1 << levels;
  const auto pad_to = [align](int v) { return (v + align - 1) / align * align - v; };
  const int pd = pad_to(N), ph = pad_to(h), pw = pad_to(w);

  Var in = t.pad3d_end(cost, pd, ph, pw);
  Var prob_vol = t.pad3d_end(t.reshape(prob, {1, N, h, w}), pd, ph, pw);
  if (cfg_.use_injection) in = t.concat({in, prob_vol}, 0);

  std::vector<Var> encoded;
  Var x = in;
  for (int k = 0; k < levels; ++k) {
    Var input = x;
    if (k > 0 && cfg_.use_injection) {
      input = t.concat({x, t.maxpool3d(prob_vol, 1 << k, 1 << k)}, 0);
    }
    x = t.relu(encoders_[k](t, input));
    encoded.push_back(x);
  }
  x = t.relu(bottleneck_(t, x));
  for (int k = levels - 1; k >= 1; --k) {
    x = t.relu(decoders_[k](t, t.concat({t.upsample3d_nearest(x, 2), encoded[k - 1]}, 0)));
  }
  Var up = levels > 0 ? t.upsample3d_nearest(x, 2) : x;
  Var out = decoders_[0](t, t.concat({up, in}, 0));
  return t.crop3d_end(out, N, h, w);
}

void InjectionNet::collect(std::vector<Parameter*>& out) {
  for (auto& c : encoders_) c.collect(out);
  bottleneck_.collect(out);
  for (auto& c : decoders_) c.collect(out);
}

int InjectionNet::param_count() const {
  int n = bottleneck_.param_count();
  for (const auto& c : encoders_) n += c.param_count();
  for (const auto& c : decoders_) n += c.param_count();
  return n;
}

// ---------------------------------------------------------------------------
// CostRegularizer

CostRegularizer::CostRegularizer(const NetworkConfig& cfg, Rng& rng) {
  const int c = cfg.feature_channels;
  const int b = cfg.base_channels;
  conv1_ = Conv3dLayer("regularizer.conv1", c, b, 3, 1, 1, rng);
  conv2_ = Conv3dLayer("regularizer.conv2", b, b, 3, 1, 1, rng);
  conv3_ = Conv3dLayer("regularizer.conv3", b, 1, 3, 1, 1, rng);
}

Var CostRegularizer::forward(Tape& t, Var cost) {
  Var x = t.relu(conv1_(t, cost));
  x = t.relu(conv2_(t, x));
  x = conv3_(t, x);
  const Tensor& v = x->value;
  return t.reshape(x, {v.dim(1), v.dim(2), v.dim(3)});
}

void CostRegularizer::collect(std::vector<Parameter*>& out) {
  conv1_.collect(out);
  conv2_.collect(out);
  conv3_.collect(out);
}

int CostRegularizer::param_count() const {
  return conv1_.param_count() + conv2_.param_count() + conv3_.param_count();
}

// ---------------------------------------------------------------------------
// ConfidenceHead

ConfidenceHead::ConfidenceHead(const NetworkConfig& cfg, Rng& rng) {
  conv1_ = Conv2dLayer("confidence.conv1", cfg.feature_channels + cfg.plane_count,
                       cfg.base_channels, 3, 1, 1, rng);
  conv2_ = Conv2dLayer("confidence.conv2", cfg.base_channels, 2, 3, 1, 1, rng);
}

std::pair<Var, Var> ConfidenceHead::forward(Tape& t, Var ref_features, Var multi_prob) {
  const Tensor& fv = ref_features->value;
  const Tensor& pv = multi_prob->value;
  if (fv.dim(1) != pv.dim(1) || fv.dim(2) != pv.dim(2)) {
    throw std::invalid_argument("confidence_head: features " + fv.shape_str() +
                                " and probability volume " + pv.shape_str() + " disagree");
  }
  Var x = t.relu(conv1_(t, t.concat({ref_features, multi_prob}, 0)));
  Var pair = t.softmax(conv2_(t, x), 0);
  const int h = fv.dim(1), w = fv.dim(2);
  Var c_multi = t.reshape(t.slice_axis0(pair, 0, 1), {h, w});
  Var c_single = t.reshape(t.slice_axis0(pair, 1, 1), {h, w});
  return {c_multi, c_single};
}

void ConfidenceHead::collect(std::vector<Parameter*>& out) {
  conv1_.collect(out);
  conv2_.collect(out);
}

int ConfidenceHead::param_count() const {
  return conv1_.param_count() + conv2_.param_count();
}

// ---------------------------------------------------------------------------
// Models

namespace {
NetworkConfig validated(NetworkConfig cfg) {
  cfg.validate();
  return cfg;
}
}  // namespace

Models::Models(const NetworkConfig& cfg)
    : config(validated(cfg)),
      init_rng_(cfg.init_seed),
      single_view(config, init_rng_),
      spp(config, init_rng_),
      injection(config, init_rng_),
      regularizer(config, init_rng_),
      confidence(config, init_rng_) {}

std::vector<Parameter*> Models::parameters() {
  std::vector<Parameter*> out;
  single_view.collect(out);
  spp.collect(out);
  injection.collect(out);
  regularizer.collect(out);
  confidence.collect(out);
  return out;
}

void Models::zero_grad() {
  for (Parameter* p : parameters()) p->zero_grad();
}

int Models::param_count() {
  int n = 0;
  for (Parameter* p : parameters()) n += p->numel();
  return n;
}

}  // namespace tdc
