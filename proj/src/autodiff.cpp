#include "tdc/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace tdc {

namespace {

// first output index o with o*stride >= lo, clamped to >= 0
inline int out_lo(int lo, int stride) {
  if (lo <= 0) return 0;
  return (lo + stride - 1) / stride;
}

// last output index o with o*stride <= hi; negative means empty
inline int out_hi(int hi, int stride, int limit) {
  if (hi < 0) return -1;
  return std::min(limit - 1, hi / stride);
}

inline int conv_out_dim(int in, int k, int stride, int padding) {
  return (in + 2 * padding - k) / stride + 1;
}

}  // namespace

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape_str() +
                                " vs " + b.shape_str());
  }
}

Parameter Parameter::uniform_init(std::string name, std::vector<int> shape, int fan_in,
                                  Rng& rng) {
  Tensor t(std::move(shape));
  const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
  for (int i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-bound, bound);
  return Parameter(std::move(name), std::move(t));
}

Var Tape::make_node(Tensor value, std::function<void(Node&)> backprop) {
  auto node = std::make_unique<Node>();
  node->value = std::move(value);
  node->grad = Tensor(node->value.shape());
  node->backprop = std::move(backprop);
  nodes_.push_back(std::move(node));
  return nodes_.back().get();
}

Var Tape::constant(Tensor value) { return make_node(std::move(value), nullptr); }

Var Tape::watch(Parameter& p) {
  auto it = watched_.find(&p);
  if (it != watched_.end()) return it->second;
  Var leaf = make_node(p.value, nullptr);
  leaf->param = &p;
  watched_.emplace(&p, leaf);
  return leaf;
}

Var Tape::add(Var a, Var b) {
  check_same_shape(a->value, b->value, "add");
  Tensor out(a->value.shape());
  const int n = out.numel();
  for (int i = 0; i < n; ++i) out[i] = a->value[i] + b->value[i];
  return make_node(std::move(out), [a, b](Node& self) {
    const int n = self.grad.numel();
    for (int i = 0; i < n; ++i) {
      a->grad[i] += self.grad[i];
      b->grad[i] += self.grad[i];
    }
  });
}

Var Tape::sub(Var a, Var b) {
  check_same_shape(a->value, b->value, "sub");
  Tensor out(a->value.shape());
  const int n = out.numel();
  for (int i = 0; i < n; ++i) out[i] = a->value[i] - b->value[i];
  return make_node(std::move(out), [a, b](Node& self) {
    const int n = self.grad.numel();
    for (int i = 0; i < n; ++i) {
      a->grad[i] += self.grad[i];
      b->grad[i] -= self.grad[i];
    }
  });
}

Var Tape::mul(Var a, Var b) {
  check_same_shape(a->value, b->value, "mul");
  Tensor out(a->value.shape());
  const int n = out.numel();
  for (int i = 0; i < n; ++i) out[i] = a->value[i] * b->value[i];
  return make_node(std::move(out), [a, b](Node& self) {
    const int n = self.grad.numel();
    for (int i = 0; i < n; ++i) {
      a->grad[i] += self.grad[i] * b->value[i];
      b->grad[i] += self.grad[i] * a->value[i];
    }
  });
}

Var Tape::scale(Var a, double s) {
  Tensor out(a->value.shape());
  const int n = out.numel();
  for (int i = 0; i < n; ++i) out[i] = a->value[i] * s;
  return make_node(std::move(out), [a, s](Node& self) {
    const int n = self.grad.numel();
    for (int i = 0; i < n; ++i) a->grad[i] += self.grad[i] * s;
  });
}

Var Tape::relu(Var a) {
  Tensor out(a->value.shape());
  const int n = out.numel();
  for (int i = 0; i < n; ++i) out[i] = a->value[i] > 0.0 ? a->value[i] : 0.0;
  return make_node(std::move(out), [a](Node& self) {
    const int n = self.grad.numel();
    for (int i = 0; i < n; ++i) {
      if (a->value[i] > 0.0) a->grad[i] += self.grad[i];
    }
  });
}

Var Tape::abs(Var a) {
  Tensor out(a->value.shape());
  const int n = out.numel();
  for (int i = 0; i < n; ++i) out[i] = std::fabs(a->value[i]);
  return make_node(std::move(out), [a](Node& self) {
    const int n = self.grad.numel();
    for (int i = 0; i < n; ++i) {
      if (a->value[i] > 0.0)
        a->grad[i] += self.grad[i];
      else if (a->value[i] < 0.0)
        a->grad[i] -= self.grad[i];
      // subgradient 0 at 0
    }
  });
}

Var Tape::conv2d(Var input, Var weights, int stride, int padding) {
  const Tensor& x = input->value;
  const Tensor& w = weights->value;
  if (x.rank() != 3) throw std::invalid_argument("conv2d: input must be [C,H,W], got " + x.shape_str());
  if (w.rank() != 4) throw std::invalid_argument("conv2d: weights must be [Cout,Cin,k,k], got " + w.shape_str());
  const int k = w.dim(2);
  if (w.dim(3) != k || k % 2 == 0) {
    throw std::invalid_argument("conv2d: kernel must be square and odd-sized, got " + w.shape_str());
  }
  if (stride < 1) throw std::invalid_argument("conv2d: stride must be positive");
  if (padding < 0) throw std::invalid_argument("conv2d: padding must be non-negative");
  if (x.dim(0) != w.dim(1)) {
    throw std::invalid_argument("conv2d: input channels of " + x.shape_str() +
                                " do not match weight channels of " + w.shape_str());
  }
  const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
  if (H + 2 * padding < k || W + 2 * padding < k) {
    throw std::invalid_argument("conv2d: spatial dims of " + x.shape_str() +
                                " too small for kernel " + w.shape_str());
  }
  const int Cout = w.dim(0);
  const int Ho = conv_out_dim(H, k, stride, padding);
  const int Wo = conv_out_dim(W, k, stride, padding);

  Tensor out({Cout, Ho, Wo});
  for (int co = 0; co < Cout; ++co) {
    for (int ci = 0; ci < C; ++ci) {
      for (int ky = 0; ky < k; ++ky) {
        const int oy0 = out_lo(padding - ky, stride);
        const int oy1 = out_hi(H - 1 + padding - ky, stride, Ho);
        for (int kx = 0; kx < k; ++kx) {
          const double wv = w.at(co, ci, ky, kx);
          const int ox0 = out_lo(padding - kx, stride);
          const int ox1 = out_hi(W - 1 + padding - kx, stride, Wo);
          for (int oy = oy0; oy <= oy1; ++oy) {
            const int iy = oy * stride - padding + ky;
            const double* xr = &x.at(ci, iy, ox0 * stride - padding + kx);
            double* orow = &out.at(co, oy, ox0);
            for (int ox = ox0; ox <= ox1; ++ox) {
              *orow += wv * *xr;
              ++orow;
              xr += stride;
            }
          }
        }
      }
    }
  }

  return make_node(std::move(out), [input, weights, stride, padding, k](Node& self) {
    const Tensor& x = input->value;
    const Tensor& w = weights->value;
    const Tensor& g = self.grad;
    const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
    const int Cout = w.dim(0), Ho = g.dim(1), Wo = g.dim(2);
    for (int co = 0; co < Cout; ++co) {
      for (int ci = 0; ci < C; ++ci) {
        for (int ky = 0; ky < k; ++ky) {
          const int oy0 = out_lo(padding - ky, stride);
          const int oy1 = out_hi(H - 1 + padding - ky, stride, Ho);
          for (int kx = 0; kx < k; ++kx) {
            const double wv = w.at(co, ci, ky, kx);
            const int ox0 = out_lo(padding - kx, stride);
            const int ox1 = out_hi(W - 1 + padding - kx, stride, Wo);
            double dw = 0.0;
            for (int oy = oy0; oy <= oy1; ++oy) {
              const int iy = oy * stride - padding + ky;
              const double* xr = &x.at(ci, iy, ox0 * stride - padding + kx);
              double* dxr = &input->grad.at(ci, iy, ox0 * stride - padding + kx);
              const double* gr = &g.at(co, oy, ox0);
              for (int ox = ox0; ox <= ox1; ++ox) {
                const double gv = *gr++;
                dw += *xr * gv;
                *dxr += wv * gv;
                xr += stride;
                dxr += stride;
              }
            }
            weights->grad.at(co, ci, ky, kx) += dw;
          }
        }
      }
    }
  });
}

Var Tape::conv3d(Var input, Var weights, int stride, int padding) {
  const Tensor& x = input->value;
  const Tensor& w = weights->value;
  if (x.rank() != 4) throw std::invalid_argument("conv3d: input must be [C,D,H,W], got " + x.shape_str());
  if (w.rank() != 5) throw std::invalid_argument("conv3d: weights must be [Cout,Cin,k,k,k], got " + w.shape_str());
  const int k = w.dim(2);
  if (w.dim(3) != k || w.dim(4) != k || k % 2 == 0) {
    throw std::invalid_argument("conv3d: kernel must be cubic and odd-sized, got " + w.shape_str());
  }
  if (stride < 1) throw std::invalid_argument("conv3d: stride must be positive");
  if (padding < 0) throw std::invalid_argument("conv3d: padding must be non-negative");
  if (x.dim(0) != w.dim(1)) {
    throw std::invalid_argument("conv3d: input channels of " + x.shape_str() +
                                " do not match weight channels of " + w.shape_str());
  }
  const int C = x.dim(0), D = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (D + 2 * padding < k || H + 2 * padding < k || W + 2 * padding < k) {
    throw std::invalid_argument("conv3d: dims of " + x.shape_str() + " too small for kernel " +
                                w.shape_str());
  }
  const int Cout = w.dim(0);
  const int Do = conv_out_dim(D, k, stride, padding);
  const int Ho = conv_out_dim(H, k, stride, padding);
  const int Wo = conv_out_dim(W, k, stride, padding);

  Tensor out({Cout, Do, Ho, Wo});
  for (int co = 0; co < Cout; ++co) {
    for (int ci = 0; ci < C; ++ci) {
      for (int kd = 0; kd < k; ++kd) {
        const int od0 = out_lo(padding - kd, stride);
        const int od1 = out_hi(D - 1 + padding - kd, stride, Do);
        for (int ky = 0; ky < k; ++ky) {
          const int oy0 = out_lo(padding - ky, stride);
          const int oy1 = out_hi(H - 1 + padding - ky, stride, Ho);
          for (int kx = 0; kx < k; ++kx) {
            const double wv = w.data()[(((co * C + ci) * k + kd) * k + ky) * k + kx];
            if (wv == 0.0) continue;
            const int ox0 = out_lo(padding - kx, stride);
            const int ox1 = out_hi(W - 1 + padding - kx, stride, Wo);
            for (int od = od0; od <= od1; ++od) {
              const int id = od * stride - padding + kd;
              for (int oy = oy0; oy <= oy1; ++oy) {
                const int iy = oy * stride - padding + ky;
                const double* xr = &x.at(ci, id, iy, ox0 * stride - padding + kx);
                double* orow = &out.at(co, od, oy, ox0);
                for (int ox = ox0; ox <= ox1; ++ox) {
                  *orow += wv * *xr;
                  ++orow;
                  xr += stride;
                }
              }
            }
          }
        }
      }
    }
  }

  return make_node(std::move(out), [input, weights, stride, padding, k](Node& self) {
    const Tensor& x = input->value;
    const Tensor& w = weights->value;
    const Tensor& g = self.grad;
    const int C = x.dim(0), D = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int Cout = w.dim(0), Do = g.dim(1), Ho = g.dim(2), Wo = g.dim(3);
    for (int co = 0; co < Cout; ++co) {
      for (int ci = 0; ci < C; ++ci) {
        for (int kd = 0; kd < k; ++kd) {
          const int od0 = out_lo(padding - kd, stride);
          const int od1 = out_hi(D - 1 + padding - kd, stride, Do);
          for (int ky = 0; ky < k; ++ky) {
            const int oy0 = out_lo(padding - ky, stride);
            const int oy1 = out_hi(H - 1 + padding - ky, stride, Ho);
            for (int kx = 0; kx < k; ++kx) {
              const double wv = w.data()[(((co * C + ci) * k + kd) * k + ky) * k + kx];
              const int ox0 = out_lo(padding - kx, stride);
              const int ox1 = out_hi(W - 1 + padding - kx, stride, Wo);
              double dw = 0.0;
              for (int od = od0; od <= od1; ++od) {
                const int id = od * stride - padding + kd;
                for (int oy = oy0; oy <= oy1; ++oy) {
                  const int iy = oy * stride - padding + ky;
                  const double* xr = &x.at(ci, id, iy, ox0 * stride - padding + kx);
                  double* dxr = &input->grad.at(ci, id, iy, ox0 * stride - padding + kx);
                  const double* gr = &g.at(co, od, oy, ox0);
                  for (int ox = ox0; ox <= ox1; ++ox) {
                    const double gv = *gr++;
                    dw += *xr * gv;
                    *dxr += wv * gv;
                    xr += stride;
                    dxr += stride;
                  }
                }
              }
              weights->grad.data()[(((co * C + ci) * k + kd) * k + ky) * k + kx] += dw;
            }
          }
        }
      }
    }
  });
}

Var Tape::bias_channels(Var x, Var bias) {
  const int C = x->value.dim(0);
  if (bias->value.rank() != 1 || bias->value.dim(0) != C) {
    throw std::invalid_argument("bias_channels: bias " + bias->value.shape_str() +
                                " does not match channels of " + x->value.shape_str());
  }
  const int inner = x->value.numel() / C;
  Tensor out(x->value.shape());
  for (int c = 0; c < C; ++c) {
    const double b = bias->value[c];
    const double* xr = x->value.data() + c * inner;
    double* orow = out.data() + c * inner;
    for (int i = 0; i < inner; ++i) orow[i] = xr[i] + b;
  }
  return make_node(std::move(out), [x, bias, C, inner](Node& self) {
    for (int c = 0; c < C; ++c) {
      const double* gr = self.grad.data() + c * inner;
      double* dxr = x->grad.data() + c * inner;
      double db = 0.0;
      for (int i = 0; i < inner; ++i) {
        dxr[i] += gr[i];
        db += gr[i];
      }
      bias->grad[c] += db;
    }
  });
}

Var Tape::maxpool3d(Var x, int window, int stride) {
  const Tensor& v = x->value;
  if (v.rank() != 4) throw std::invalid_argument("maxpool3d: input must be [C,D,H,W], got " + v.shape_str());
  if (window < 1) throw std::invalid_argument("maxpool3d: window must be >= 1");
  if (stride < 1) throw std::invalid_argument("maxpool3d: stride must be positive");
  const int C = v.dim(0), D = v.dim(1), H = v.dim(2), W = v.dim(3);
  if (window > D || window > H || window > W) {
    throw std::invalid_argument("maxpool3d: window " + std::to_string(window) +
                                " exceeds input dims " + v.shape_str());
  }
  const int Do = (D - window) / stride + 1;
  const int Ho = (H - window) / stride + 1;
  const int Wo = (W - window) / stride + 1;

  Tensor out({C, Do, Ho, Wo});
  auto argmax = std::make_shared<std::vector<int>>(out.numel());
  int oi = 0;
  for (int c = 0; c < C; ++c) {
    for (int od = 0; od < Do; ++od) {
      for (int oy = 0; oy < Ho; ++oy) {
        for (int ox = 0; ox < Wo; ++ox, ++oi) {
          double best = -std::numeric_limits<double>::infinity();
          int best_idx = -1;
          for (int kd = 0; kd < window; ++kd) {
            for (int ky = 0; ky < window; ++ky) {
              const int base =
                  ((c * D + od * stride + kd) * H + oy * stride + ky) * W + ox * stride;
              for (int kx = 0; kx < window; ++kx) {
                const double val = v[base + kx];
                if (val > best) {  // strict: ties keep the lowest linear index
                  best = val;
                  best_idx = base + kx;
                }
              }
            }
          }
          out[oi] = best;
          (*argmax)[oi] = best_idx;
        }
      }
    }
  }
  return make_node(std::move(out), [x, argmax](Node& self) {
    const int n = self.grad.numel();
    for (int i = 0; i < n; ++i) x->grad[(*argmax)[i]] += self.grad[i];
  });
}

Var Tape::avg_pool2d(Var x, int window, int stride) {
  const Tensor& v = x->value;
  if (v.rank() != 3) throw std::invalid_argument("avg_pool2d: input must be [C,H,W], got " + v.shape_str());
  if (window < 1) throw std::invalid_argument("avg_pool2d: window must be >= 1");
  if (stride < 1) throw std::invalid_argument("avg_pool2d: stride must be positive");
  const int C = v.dim(0), H = v.dim(1), W = v.dim(2);
  if (window > H || window > W) {
    throw std::invalid_argument("avg_pool2d: window " + std::to_string(window) +
                                " exceeds input dims " + v.shape_str());
  }
  const int Ho = (H - window) / stride + 1;
  const int Wo = (W - window) / stride + 1;
  const double inv = 1.0 / (static_cast<double>(window) * window);

  Tensor out({C, Ho, Wo});
  for (int c = 0; c < C; ++c) {
    for (int oy = 0; oy < Ho; ++oy) {
      for (int ox = 0; ox < Wo; ++ox) {
        double s = 0.0;
        for (int ky = 0; ky < window; ++ky) {
          const double* row = &v.at(c, oy * stride + ky, ox * stride);
          for (int kx = 0; kx < window; ++kx) s += row[kx];
        }
        out.at(c, oy, ox) = s * inv;
      }
    }
  }
  return make_node(std::move(out), [x, window, stride, inv](Node& self) {
    const Tensor& g = self.grad;
    const int C = g.dim(0), Ho = g.dim(1), Wo = g.dim(2);
    for (int c = 0; c < C; ++c) {
      for (int oy = 0; oy < Ho; ++oy) {
        for (int ox = 0; ox < Wo; ++ox) {
          const double gv = g.at(c, oy, ox) * inv;
          for (int ky = 0; ky < window; ++ky) {
            double* row = &x->grad.at(c, oy * stride + ky, ox * stride);
            for (int kx = 0; kx < window; ++kx) row[kx] += gv;
          }
        }
      }
    }
  });
}

Var Tape::softmax(Var x, int axis) {
  const Tensor& v = x->value;
  if (axis < 0 || axis >= v.rank()) {
    throw std::invalid_argument("softmax: axis " + std::to_string(axis) +
                                " invalid for shape " + v.shape_str());
  }
  const int L = v.dim(axis);
  int outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= v.dim(i);
  for (int i = axis + 1; i < v.rank(); ++i) inner *= v.dim(i);

  Tensor out(v.shape());
  for (int o = 0; o < outer; ++o) {
    for (int i = 0; i < inner; ++i) {
      const int base = o * L * inner + i;
      double hi = -std::numeric_limits<double>::infinity();
      for (int l = 0; l < L; ++l) hi = std::max(hi, v[base + l * inner]);
      double z = 0.0;
      for (int l = 0; l < L; ++l) {
        const double e = std::exp(v[base + l * inner] - hi);
        out[base + l * inner] = e;
        z += e;
      }
      const double invz = 1.0 / z;
      for (int l = 0; l < L; ++l) out[base + l * inner] *= invz;
    }
  }
  Var result = make_node(std::move(out), nullptr);
  result->backprop = [x, result, L, outer, inner](Node& self) {
    const Tensor& p = result->value;
    for (int o = 0; o < outer; ++o) {
      for (int i = 0; i < inner; ++i) {
        const int base = o * L * inner + i;
        double dot = 0.0;
        for (int l = 0; l < L; ++l) dot += self.grad[base + l * inner] * p[base + l * inner];
        for (int l = 0; l < L; ++l) {
          x->grad[base + l * inner] += p[base + l * inner] * (self.grad[base + l * inner] - dot);
        }
      }
    }
  };
  return result;
}

Var Tape::bilinear_sample(Var feature, Var coords) {
  const Tensor& f = feature->value;
  const Tensor& c = coords->value;
  if (f.rank() != 3) throw std::invalid_argument("bilinear_sample: feature must be [C,H,W], got " + f.shape_str());
  if (c.rank() != 3 || c.dim(2) != 2) {
    throw std::invalid_argument("bilinear_sample: coords must be [H,W,2], got " + c.shape_str());
  }
  const int C = f.dim(0), H = f.dim(1), W = f.dim(2);
  const int Ho = c.dim(0), Wo = c.dim(1);

  Tensor out({C, Ho, Wo});
  for (int y = 0; y < Ho; ++y) {
    for (int x = 0; x < Wo; ++x) {
      const double u = c.at(y, x, 0);
      const double v = c.at(y, x, 1);
      // anything at or beyond one pixel outside contributes nothing;
      // the guard also keeps the int conversion below safe for sentinels
      if (!(u > -1.0 && u < static_cast<double>(W) && v > -1.0 &&
            v < static_cast<double>(H))) {
        continue;
      }
      const int u0 = static_cast<int>(std::floor(u));
      const int v0 = static_cast<int>(std::floor(v));
      const double a = u - u0;
      const double b = v - v0;
      const double w00 = (1.0 - a) * (1.0 - b), w10 = a * (1.0 - b);
      const double w01 = (1.0 - a) * b, w11 = a * b;
      const bool in_u0 = u0 >= 0 && u0 < W, in_u1 = u0 + 1 >= 0 && u0 + 1 < W;
      const bool in_v0 = v0 >= 0 && v0 < H, in_v1 = v0 + 1 >= 0 && v0 + 1 < H;
      for (int ch = 0; ch < C; ++ch) {
        double s = 0.0;
        if (in_v0) {
          if (in_u0) s += w00 * f.at(ch, v0, u0);
          if (in_u1) s += w10 * f.at(ch, v0, u0 + 1);
        }
        if (in_v1) {
          if (in_u0) s += w01 * f.at(ch, v0 + 1, u0);
          if (in_u1) s += w11 * f.at(ch, v0 + 1, u0 + 1);
        }
        out.at(ch, y, x) = s;
      }
    }
  }
  return make_node(std::move(out), [feature, coords](Node& self) {
    const Tensor& f = feature->value;
    const Tensor& c = coords->value;
    const int C = f.dim(0), H = f.dim(1), W = f.dim(2);
    const int Ho = c.dim(0), Wo = c.dim(1);
    for (int y = 0; y < Ho; ++y) {
      for (int x = 0; x < Wo; ++x) {
        const double u = c.at(y, x, 0);
        const double v = c.at(y, x, 1);
        if (!(u > -1.0 && u < static_cast<double>(W) && v > -1.0 &&
              v < static_cast<double>(H))) {
          continue;
        }
        const int u0 = static_cast<int>(std::floor(u));
        const int v0 = static_cast<int>(std::floor(v));
        const double a = u - u0;
        const double b = v - v0;
        const bool in_u0 = u0 >= 0 && u0 < W, in_u1 = u0 + 1 >= 0 && u0 + 1 < W;
        const bool in_v0 = v0 >= 0 && v0 < H, in_v1 = v0 + 1 >= 0 && v0 + 1 < H;
        double du = 0.0, dv = 0.0;
        for (int ch = 0; ch < C; ++ch) {
          const double g = self.grad.at(ch, y, x);
          if (g == 0.0) continue;
          const double f00 = (in_v0 && in_u0) ? f.at(ch, v0, u0) : 0.0;
          const double f10 = (in_v0 && in_u1) ? f.at(ch, v0, u0 + 1) : 0.0;
          const double f01 = (in_v1 && in_u0) ? f.at(ch, v0 + 1, u0) : 0.0;
          const double f11 = (in_v1 && in_u1) ? f.at(ch, v0 + 1, u0 + 1) : 0.0;
          if (in_v0) {
            if (in_u0) feature->grad.at(ch, v0, u0) += (1.0 - a) * (1.0 - b) * g;
            if (in_u1) feature->grad.at(ch, v0, u0 + 1) += a * (1.0 - b) * g;
          }
          if (in_v1) {
            if (in_u0) feature->grad.at(ch, v0 + 1, u0) += (1.0 - a) * b * g;
            if (in_u1) feature->grad.at(ch, v0 + 1, u0 + 1) += a * b * g;
          }
          du += g * ((1.0 - b) * (f10 - f00) + b * (f11 - f01));
          dv += g * ((1.0 - a) * (f01 - f00) + a * (f11 - f10));
        }
        coords->grad.at(y, x, 0) += du;
        coords->grad.at(y, x, 1) += dv;
      }
    }
  });
}

Var Tape::upsample2d_nearest(Var x, int factor) {
  const Tensor& v = x->value;
  if (v.rank() != 3) throw std::invalid_argument("upsample2d_nearest: input must be [C,H,W]");
  if (factor < 1) throw std::invalid_argument("upsample2d_nearest: factor must be >= 1");
  const int C = v.dim(0), H = v.dim(1), W = v.dim(2);
  Tensor out({C, H * factor, W * factor});
  for (int c = 0; c < C; ++c) {
    for (int y = 0; y < H * factor; ++y) {
      const double* in_row = &v.at(c, y / factor, 0);
      double* out_row = &out.at(c, y, 0);
      for (int xx = 0; xx < W * factor; ++xx) out_row[xx] = in_row[xx / factor];
    }
  }
  return make_node(std::move(out), [x, factor, C, H, W](Node& self) {
    for (int c = 0; c < C; ++c) {
      for (int y = 0; y < H * factor; ++y) {
        double* dxr = &x->grad.at(c, y / factor, 0);
        const double* gr = &self.grad.at(c, y, 0);
        for (int xx = 0; xx < W * factor; ++xx) dxr[xx / factor] += gr[xx];
      }
    }
  });
}

Var Tape::upsample3d_nearest(Var x, int factor) {
  const Tensor& v = x->value;
  if (v.rank() != 4) throw std::invalid_argument("upsample3d_nearest: input must be [C,D,H,W]");
  if (factor < 1) throw std::invalid_argument("upsample3d_nearest: factor must be >= 1");
  const int C = v.dim(0), D = v.dim(1), H = v.dim(2), W = v.dim(3);
  Tensor out({C, D * factor, H * factor, W * factor});
  for (int c = 0; c < C; ++c) {
    for (int d = 0; d < D * factor; ++d) {
      for (int y = 0; y < H * factor; ++y) {
        const double* in_row = &v.at(c, d / factor, y / factor, 0);
        double* out_row = &out.at(c, d, y, 0);
        for (int xx = 0; xx < W * factor; ++xx) out_row[xx] = in_row[xx / factor];
      }
    }
  }
  return make_node(std::move(out), [x, factor, C, D, H, W](Node& self) {
    for (int c = 0; c < C; ++c) {
      for (int d = 0; d < D * factor; ++d) {
        for (int y = 0; y < H * factor; ++y) {
          double* dxr = &x->grad.at(c, d / factor, y / factor, 0);
          const double* gr = &self.grad.at(c, d, y, 0);
          for (int xx = 0; xx < W * factor; ++xx) dxr[xx / factor] += gr[xx];
        }
      }
    }
  });
}

namespace {
// source index pair and weight for align_corners=false bilinear upsampling
struct LerpTap {
  int i0, i1;
  double w1;  // weight of i1; i0 gets 1-w1
};

std::vector<LerpTap> lerp_taps(int in_dim, int factor) {
  std::vector<LerpTap> taps(in_dim * factor);
  for (int o = 0; o < in_dim * factor; ++o) {
    double s = (o + 0.5) / factor - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(in_dim - 1));
    int i0 = static_cast<int>(std::floor(s));
    i0 = std::min(i0, in_dim - 1);
    const int i1 = std::min(i0 + 1, in_dim - 1);
    taps[o] = {i0, i1, s - i0};
  }
  return taps;
}
}  // namespace

Var Tape::upsample2d_bilinear(Var x, int factor) {
  const Tensor& v = x->value;
  if (v.rank() != 3) throw std::invalid_argument("upsample2d_bilinear: input must be [C,H,W]");
  if (factor < 1) throw std::invalid_argument("upsample2d_bilinear: factor must be >= 1");
  const int C = v.dim(0), H = v.dim(1), W = v.dim(2);
  const auto ty = lerp_taps(H, factor);
  const auto tx = lerp_taps(W, factor);
  Tensor out({C, H * factor, W * factor});
  for (int c = 0; c < C; ++c) {
    for (int y = 0; y < H * factor; ++y) {
      const auto& ry = ty[y];
      const double* r0 = &v.at(c, ry.i0, 0);
      const double* r1 = &v.at(c, ry.i1, 0);
      double* orow = &out.at(c, y, 0);
      for (int xx = 0; xx < W * factor; ++xx) {
        const auto& rx = tx[xx];
        const double top = r0[rx.i0] * (1.0 - rx.w1) + r0[rx.i1] * rx.w1;
        const double bot = r1[rx.i0] * (1.0 - rx.w1) + r1[rx.i1] * rx.w1;
        orow[xx] = top * (1.0 - ry.w1) + bot * ry.w1;
      }
    }
  }
  return make_node(std::move(out), [x, factor, C, H, W, ty, tx](Node& self) {
    for (int c = 0; c < C; ++c) {
      for (int y = 0; y < H * factor; ++y) {
        const auto& ry = ty[y];
        double* d0 = &x->grad.at(c, ry.i0, 0);
        double* d1 = &x->grad.at(c, ry.i1, 0);
        const double* gr = &self.grad.at(c, y, 0);
        for (int xx = 0; xx < W * factor; ++xx) {
          const auto& rx = tx[xx];
          const double g = gr[xx];
          d0[rx.i0] += g * (1.0 - ry.w1) * (1.0 - rx.w1);
          d0[rx.i1] += g * (1.0 - ry.w1) * rx.w1;
          d1[rx.i0] += g * ry.w1 * (1.0 - rx.w1);
          d1[rx.i1] += g * ry.w1 * rx.w1;
        }
      }
    }
  });
}

Var Tape::concat(const std::vector<Var>& xs, int axis) {
  if (xs.empty()) throw std::invalid_argument("concat: no inputs");
  const int rank = xs[0]->value.rank();
  if (axis < 0 || axis >= rank) throw std::invalid_argument("concat: bad axis");
  std::vector<int> shape = xs[0]->value.shape();
  int total_axis = 0;
  for (const Var& x : xs) {
    if (x->value.rank() != rank) throw std::invalid_argument("concat: rank mismatch");
    for (int i = 0; i < rank; ++i) {
      if (i != axis && x->value.dim(i) != shape[i]) {
        throw std::invalid_argument("concat: shape mismatch " + x->value.shape_str() +
                                    " vs " + xs[0]->value.shape_str());
      }
    }
    total_axis += x->value.dim(axis);
  }
  shape[axis] = total_axis;
  int outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= shape[i];
  for (int i = axis + 1; i < rank; ++i) inner *= shape[i];

  Tensor out(shape);
  int offset = 0;
  for (const Var& x : xs) {
    const int len = x->value.dim(axis) * inner;
    for (int o = 0; o < outer; ++o) {
      std::copy_n(x->value.data() + o * len, len,
                  out.data() + o * total_axis * inner + offset);
    }
    offset += len;
  }
  auto inputs = xs;
  return make_node(std::move(out), [inputs, axis, outer, inner, total_axis](Node& self) {
    int offset = 0;
    for (const Var& x : inputs) {
      const int len = x->value.dim(axis) * inner;
      for (int o = 0; o < outer; ++o) {
        const double* gr = self.grad.data() + o * total_axis * inner + offset;
        double* dxr = x->grad.data() + o * len;
        for (int i = 0; i < len; ++i) dxr[i] += gr[i];
      }
      offset += len;
    }
  });
}

Var Tape::slice_axis0(Var x, int start, int count) {
  const Tensor& v = x->value;
  if (start < 0 || count < 1 || start + count > v.dim(0)) {
    throw std::invalid_argument("slice_axis0: range [" + std::to_string(start) + "," +
                                std::to_string(start + count) + ") invalid for " + v.shape_str());
  }
  const int inner = v.numel() / v.dim(0);
  std::vector<int> shape = v.shape();
  shape[0] = count;
  Tensor out(shape);
  std::copy_n(v.data() + start * inner, count * inner, out.data());
  return make_node(std::move(out), [x, start, inner, count](Node& self) {
    const double* gr = self.grad.data();
    double* dxr = x->grad.data() + start * inner;
    for (int i = 0; i < count * inner; ++i) dxr[i] += gr[i];
  });
}

Var Tape::reshape(Var x, std::vector<int> shape) {
  if (shape_numel(shape) != x->value.numel()) {
    throw std::invalid_argument("reshape: cannot view " + x->value.shape_str() + " as requested shape");
  }
  Tensor out(std::move(shape), std::vector<double>(x->value.data(), x->value.data() + x->value.numel()));
  return make_node(std::move(out), [x](Node& self) {
    const int n = self.grad.numel();
    for (int i = 0; i < n; ++i) x->grad[i] += self.grad[i];
  });
}

Var Tape::pad3d_end(Var x, int pad_d, int pad_h, int pad_w) {
  const Tensor& v = x->value;
  if (v.rank() != 4) throw std::invalid_argument("pad3d_end: input must be [C,D,H,W]");
  if (pad_d < 0 || pad_h < 0 || pad_w < 0) throw std::invalid_argument("pad3d_end: negative pad");
  const int C = v.dim(0), D = v.dim(1), H = v.dim(2), W = v.dim(3);
  Tensor out({C, D + pad_d, H + pad_h, W + pad_w});
  for (int c = 0; c < C; ++c) {
    for (int d = 0; d < D; ++d) {
      for (int y = 0; y < H; ++y) {
        std::copy_n(&v.at(c, d, y, 0), W, &out.at(c, d, y, 0));
      }
    }
  }
  return make_node(std::move(out), [x, C, D, H, W](Node& self) {
    for (int c = 0; c < C; ++c) {
      for (int d = 0; d < D; ++d) {
        for (int y = 0; y < H; ++y) {
          const double* gr = &self.grad.at(c, d, y, 0);
          double* dxr = &x->grad.at(c, d, y, 0);
          for (int xx = 0; xx < W; ++xx) dxr[xx] += gr[xx];
        }
      }
    }
  });
}

Var Tape::crop3d_end(Var x, int size_d, int size_h, int size_w) {
  const Tensor& v = x->value;
  if (v.rank() != 4) throw std::invalid_argument("crop3d_end: input must be [C,D,H,W]");
  if (size_d > v.dim(1) || size_h > v.dim(2) || size_w > v.dim(3) || size_d < 1 ||
      size_h < 1 || size_w < 1) {
    throw std::invalid_argument("crop3d_end: bad target size for " + v.shape_str());
  }
  const int C = v.dim(0);
  Tensor out({C, size_d, size_h, size_w});
  for (int c = 0; c < C; ++c) {
    for (int d = 0; d < size_d; ++d) {
      for (int y = 0; y < size_h; ++y) {
        std::copy_n(&v.at(c, d, y, 0), size_w, &out.at(c, d, y, 0));
      }
    }
  }
  return make_node(std::move(out), [x, C, size_d, size_h, size_w](Node& self) {
    for (int c = 0; c < C; ++c) {
      for (int d = 0; d < size_d; ++d) {
        for (int y = 0; y < size_h; ++y) {
          const double* gr = &self.grad.at(c, d, y, 0);
          double* dxr = &x->grad.at(c, d, y, 0);
          for (int xx = 0; xx < size_w; ++xx) dxr[xx] += gr[xx];
        }
      }
    }
  });
}

Var Tape::sum(Var x) {
  double s = 0.0;
  for (int i = 0; i < x->value.numel(); ++i) s += x->value[i];
  return make_node(Tensor::scalar(s), [x](Node& self) {
    const double g = self.grad[0];
    for (int i = 0; i < x->grad.numel(); ++i) x->grad[i] += g;
  });
}

Var Tape::mean(Var x) {
  const double inv = 1.0 / x->value.numel();
  double s = 0.0;
  for (int i = 0; i < x->value.numel(); ++i) s += x->value[i];
  return make_node(Tensor::scalar(s * inv), [x, inv](Node& self) {
    const double g = self.grad[0] * inv;
    for (int i = 0; i < x->grad.numel(); ++i) x->grad[i] += g;
  });
}

Var Tape::expect_axis0(Var x, std::vector<double> weights) {
  const Tensor& v = x->value;
  if (v.rank() < 1 || v.dim(0) != static_cast<int>(weights.size())) {
    throw std::invalid_argument("expect_axis0: " + std::to_string(weights.size()) +
                                " weights do not match axis 0 of " + v.shape_str());
  }
  const int K = v.dim(0);
  const int inner = v.numel() / K;
  std::vector<int> shape(v.shape().begin() + 1, v.shape().end());
  if (shape.empty()) shape = {1};
  Tensor out(shape);
  for (int k = 0; k < K; ++k) {
    const double w = weights[k];
    const double* xr = v.data() + k * inner;
    for (int i = 0; i < inner; ++i) out[i] += w * xr[i];
  }
  return make_node(std::move(out), [x, weights = std::move(weights), K, inner](Node& self) {
    for (int k = 0; k < K; ++k) {
      const double w = weights[k];
      double* dxr = x->grad.data() + k * inner;
      for (int i = 0; i < inner; ++i) dxr[i] += w * self.grad[i];
    }
  });
}

void Tape::backward(Var loss) {
  if (loss->value.numel() != 1) {
    throw std::invalid_argument("backward: loss must be scalar, got " + loss->value.shape_str());
  }
  for (auto& node : nodes_) node->grad.fill(0.0);
  loss->grad[0] = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if ((*it)->backprop) (*it)->backprop(**it);
  }
  for (auto& [param, leaf] : watched_) {
    for (int i = 0; i < param->grad.numel(); ++i) param->grad[i] += leaf->grad[i];
  }
}

}  // namespace tdc
