#pragma once

#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "tdc/rng.hpp"
#include "tdc/tensor.hpp"

namespace tdc {

// Trainable weight: value plus accumulated gradient under this identifier.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string name_, Tensor init)
      : name(std::move(name_)), value(std::move(init)), grad(value.shape()) {}

  // uniform in +-sqrt(1/fan_in)
  static Parameter uniform_init(std::string name, std::vector<int> shape, int fan_in,
                                Rng& rng);

  void zero_grad() { grad.fill(0.0); }
  int numel() const { return value.numel(); }
};

class Tape;

struct Node {
  Tensor value;
  Tensor grad;  // same shape as value, zero-initialized
  std::function<void(Node&)> backprop;  // pulls this node's grad into its inputs
  Parameter* param = nullptr;           // set on parameter leaves
};

// Non-owning handle; the Tape owns all nodes and outlives them.
using Var = Node*;

// Ordered record of executed operations. Replaying the record in reverse
// populates gradients for every Parameter touched by the forward pass.
// Single-writer: one forward/backward at a time per tape.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var watch(Parameter& p);  // same leaf on repeated calls

  // elementwise
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double s);
  Var relu(Var a);
  Var abs(Var a);

  // convolution / pooling; weight layouts [Cout,Cin,k,k] and [Cout,Cin,k,k,k]
  Var conv2d(Var input, Var weights, int stride, int padding);
  Var conv3d(Var input, Var weights, int stride, int padding);
  Var bias_channels(Var x, Var bias);  // x [C,...], bias [C]
  Var maxpool3d(Var x, int window, int stride);
  Var avg_pool2d(Var x, int window, int stride);

  Var softmax(Var x, int axis);

  // feature [C,H,W], coords [H',W',2] as (u,v); zero outside the image
  Var bilinear_sample(Var feature, Var coords);

  Var upsample2d_nearest(Var x, int factor);
  Var upsample3d_nearest(Var x, int factor);
  Var upsample2d_bilinear(Var x, int factor);

  Var concat(const std::vector<Var>& xs, int axis);
  Var slice_axis0(Var x, int start, int count);
  Var reshape(Var x, std::vector<int> shape);
  // zero-pad / crop at the trailing end of the last three axes of [C,D,H,W]
  Var pad3d_end(Var x, int pad_d, int pad_h, int pad_w);
  Var crop3d_end(Var x, int size_d, int size_h, int size_w);

  Var sum(Var x);
  Var mean(Var x);
  // collapse axis 0 by fixed weights: out = sum_k w[k] * x[k,...]
  Var expect_axis0(Var x, std::vector<double> weights);

  // escape hatch for bespoke differentiable ops (e.g. depth-map normals)
  Var make_node(Tensor value, std::function<void(Node&)> backprop);

  // loss must be scalar; accumulates into Parameter::grad of every watched
  // parameter. May be called more than once; gradients sum across calls.
  void backward(Var loss);

  size_t size() const { return nodes_.size(); }

 private:
  std::vector<std::unique_ptr<Node>> nodes_;
  std::unordered_map<Parameter*, Var> watched_;
};

void check_same_shape(const Tensor& a, const Tensor& b, const char* op);

}  // namespace tdc
