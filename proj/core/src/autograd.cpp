// Copyright 2026 The signrecon Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "signrecon/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <unordered_set>

#include "signrecon/errors.hpp"

namespace signrecon::ag {

namespace {

thread_local bool g_grad_enabled = true;

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
  return out + "]";
}

void expect(bool cond, const std::string& msg) {
  if (!cond) throw InvalidInputError(msg);
}

// Creates the output node. Inputs and the closure are only retained when the
// result participates in a gradient computation.
Var make_result(Shape shape, std::vector<double> value, std::initializer_list<Var> inputs,
                std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  bool needs = false;
  if (g_grad_enabled) {
    for (const auto& in : inputs) needs = needs || (in.defined() && in.requires_grad());
  }
  if (needs) {
    node->requires_grad = true;
    for (const auto& in : inputs) node->inputs.push_back(in.defined() ? in.node_ptr() : nullptr);
    node->backward = std::move(backward_fn);
  }
  return Var::from_node(std::move(node));
}

bool wants_grad(const std::shared_ptr<Node>& n) { return n && n->requires_grad; }

}  // namespace

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

double* Node::grad_data() {
  if (grad.empty()) grad.assign(value.size(), 0.0);
  return grad.data();
}

Var::Var(Shape shape, std::vector<double> values, bool requires_grad)
    : node_(std::make_shared<Node>()) {
  if (ag::numel(shape) != values.size()) {
    throw InvalidInputError("Var: " + std::to_string(values.size()) +
                            " values do not fill shape " + shape_str(shape));
  }
  node_->shape = std::move(shape);
  node_->value = std::move(values);
  node_->requires_grad = requires_grad;
}

Var Var::zeros(Shape shape, bool requires_grad) {
  const auto n = ag::numel(shape);
  return Var(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Var Var::from_node(std::shared_ptr<Node> node) {
  Var v;
  v.node_ = std::move(node);
  return v;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

void backward(const Var& loss) {
  expect(loss.defined() && loss.numel() == 1, "backward: loss must be a single element");
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS -> topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{loss.node(), 0}};
  visited.insert(loss.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child && child->requires_grad && visited.insert(child).second) {
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->grad_data()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
  // Interior gradients are not needed after the sweep.
  for (Node* n : order) {
    if (n->backward) {
      n->grad.clear();
      n->grad.shrink_to_fit();
    }
  }
}

// ---- elementwise -----------------------------------------------------------

Var add(const Var& a, const Var& b) {
  const Var terms[] = {a, b};
  return add_n(terms);
}

Var add_n(std::span<const Var> terms) {
  expect(!terms.empty(), "add_n: no terms");
  const Shape& shape = terms[0].shape();
  std::vector<double> out(terms[0].value());
  for (std::size_t t = 1; t < terms.size(); ++t) {
    expect(terms[t].shape() == shape, "add: shape mismatch " + shape_str(shape) + " vs " +
                                          shape_str(terms[t].shape()));
    const auto& v = terms[t].value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += v[i];
  }
  auto node = std::make_shared<Node>();
  node->shape = shape;
  node->value = std::move(out);
  if (g_grad_enabled &&
      std::any_of(terms.begin(), terms.end(), [](const Var& v) { return v.requires_grad(); })) {
    node->requires_grad = true;
    for (const auto& t : terms) node->inputs.push_back(t.node_ptr());
    node->backward = [](Node& self) {
      for (auto& in : self.inputs) {
        if (!wants_grad(in)) continue;
        double* g = in->grad_data();
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
      }
    };
  }
  return Var::from_node(std::move(node));
}

Var sub(const Var& a, const Var& b) { return add(a, scale(b, -1.0)); }

Var scale(const Var& a, double factor) {
  std::vector<double> out(a.value());
  for (auto& v : out) v *= factor;
  return make_result(a.shape(), std::move(out), {a}, [factor](Node& self) {
    double* g = self.inputs[0]->grad_data();
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += factor * self.grad[i];
  });
}

Var add_scalar(const Var& a, double c) {
  std::vector<double> out(a.value());
  for (auto& v : out) v += c;
  return make_result(a.shape(), std::move(out), {a}, [](Node& self) {
    double* g = self.inputs[0]->grad_data();
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
  });
}

Var reshape(const Var& a, Shape shape) {
  if (numel(shape) != a.numel()) {
    throw InvalidInputError("reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape));
  }
  return make_result(std::move(shape), a.value(), {a}, [](Node& self) {
    double* g = self.inputs[0]->grad_data();
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
  });
}

Var relu(const Var& a) {
  std::vector<double> out(a.value());
  for (auto& v : out) v = v > 0.0 || std::isnan(v) ? v : 0.0;  // NaN propagates
  return make_result(a.shape(), std::move(out), {a}, [](Node& self) {
    double* g = self.inputs[0]->grad_data();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (self.value[i] > 0.0) g[i] += self.grad[i];
    }
  });
}

// ---- dense -----------------------------------------------------------------

Var linear(const Var& x, const Var& weight, const Var& bias) {
  expect(x.shape().size() == 2 && weight.shape().size() == 2,
         "linear: expected x [B, in] and W [out, in]");
  const int batch = x.dim(0), in = x.dim(1), outd = weight.dim(0);
  expect(weight.dim(1) == in, "linear: weight " + shape_str(weight.shape()) +
                                  " incompatible with input " + shape_str(x.shape()));
  if (bias.defined()) {
    expect(bias.numel() == static_cast<std::size_t>(outd), "linear: bias length mismatch");
  }
  std::vector<double> out(static_cast<std::size_t>(batch) * outd);
  const auto& xv = x.value();
  const auto& wv = weight.value();
  for (int b = 0; b < batch; ++b) {
    for (int o = 0; o < outd; ++o) {
      double s = bias.defined() ? bias.value()[o] : 0.0;
      const double* wr = &wv[static_cast<std::size_t>(o) * in];
      const double* xr = &xv[static_cast<std::size_t>(b) * in];
      for (int i = 0; i < in; ++i) s += wr[i] * xr[i];
      out[static_cast<std::size_t>(b) * outd + o] = s;
    }
  }
  return make_result({batch, outd}, std::move(out), {x, weight, bias},
                     [batch, in, outd](Node& self) {
                       const auto& xn = self.inputs[0];
                       const auto& wn = self.inputs[1];
                       const auto& bn = self.inputs[2];
                       const double* g = self.grad.data();
                       if (wants_grad(xn)) {
                         double* gx = xn->grad_data();
                         for (int b = 0; b < batch; ++b)
                           for (int o = 0; o < outd; ++o) {
                             const double go = g[b * outd + o];
                             const double* wr = &wn->value[static_cast<std::size_t>(o) * in];
                             for (int i = 0; i < in; ++i) gx[b * in + i] += go * wr[i];
                           }
                       }
                       if (wants_grad(wn)) {
                         double* gw = wn->grad_data();
                         for (int b = 0; b < batch; ++b)
                           for (int o = 0; o < outd; ++o) {
                             const double go = g[b * outd + o];
                             const double* xr = &xn->value[static_cast<std::size_t>(b) * in];
                             for (int i = 0; i < in; ++i) gw[o * in + i] += go * xr[i];
                           }
                       }
                       if (wants_grad(bn)) {
                         double* gb = bn->grad_data();
                         for (int b = 0; b < batch; ++b)
                           for (int o = 0; o < outd; ++o) gb[o] += g[b * outd + o];
                       }
                     });
}

namespace {

// Standardisation of `count` slabs of length `len`. Writes y and per-slab
// (sigma + eps, sigma).
void standardise(const double* x, double* y, std::size_t count, std::size_t len, double eps,
                 std::vector<double>& denom, std::vector<double>& sigma) {
  denom.resize(count);
  sigma.resize(count);
  for (std::size_t s = 0; s < count; ++s) {
    const double* xs = x + s * len;
    double mean = 0.0;
    for (std::size_t i = 0; i < len; ++i) mean += xs[i];
    mean /= static_cast<double>(len);
    double var = 0.0;
    for (std::size_t i = 0; i < len; ++i) {
      const double d = xs[i] - mean;
      var += d * d;
    }
    var /= static_cast<double>(len);
    const double sd = std::sqrt(var);
    const double den = sd + eps;
    double* ys = y + s * len;
    for (std::size_t i = 0; i < len; ++i) ys[i] = (xs[i] - mean) / den;
    denom[s] = den;
    sigma[s] = sd;
  }
}

// d/dx of y = (x - mean) / (sigma + eps) given upstream gy.
void standardise_backward(const double* y, const double* gy, double* gx, std::size_t len,
                          double den, double sd) {
  const double n = static_cast<double>(len);
  double gsum = 0.0, gydot = 0.0;
  for (std::size_t i = 0; i < len; ++i) {
    gsum += gy[i];
    gydot += gy[i] * y[i];
  }
  const double gmean = gsum / n;
  // d_i = y_i * den; dsigma/dx_i = d_i / (n * sigma).
  const double coeff = sd > 0.0 ? gydot * den / (n * sd) : 0.0;
  for (std::size_t i = 0; i < len; ++i) gx[i] += (gy[i] - gmean - coeff * y[i]) / den;
}

}  // namespace

Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps) {
  expect(x.shape().size() == 2, "layer_norm: expected [B, n]");
  const int batch = x.dim(0), n = x.dim(1);
  expect(n >= 1, "layer_norm: empty rows");
  expect(gain.numel() == static_cast<std::size_t>(n) && bias.numel() == static_cast<std::size_t>(n),
         "layer_norm: gain/bias length mismatch");
  auto y = std::make_shared<std::vector<double>>(x.numel());
  auto denom = std::make_shared<std::vector<double>>();
  auto sigma = std::make_shared<std::vector<double>>();
  standardise(x.value().data(), y->data(), batch, n, eps, *denom, *sigma);
  std::vector<double> out(x.numel());
  for (int b = 0; b < batch; ++b)
    for (int i = 0; i < n; ++i)
      out[b * n + i] = gain.value()[i] * (*y)[b * n + i] + bias.value()[i];
  return make_result(x.shape(), std::move(out), {x, gain, bias},
                     [batch, n, y, denom, sigma](Node& self) {
                       const auto& xn = self.inputs[0];
                       const auto& gn = self.inputs[1];
                       const auto& bn = self.inputs[2];
                       const double* g = self.grad.data();
                       if (wants_grad(gn)) {
                         double* gg = gn->grad_data();
                         for (int b = 0; b < batch; ++b)
                           for (int i = 0; i < n; ++i) gg[i] += g[b * n + i] * (*y)[b * n + i];
                       }
                       if (wants_grad(bn)) {
                         double* gb = bn->grad_data();
                         for (int b = 0; b < batch; ++b)
                           for (int i = 0; i < n; ++i) gb[i] += g[b * n + i];
                       }
                       if (wants_grad(xn)) {
                         double* gx = xn->grad_data();
                         std::vector<double> gy(static_cast<std::size_t>(n));
                         for (int b = 0; b < batch; ++b) {
                           for (int i = 0; i < n; ++i) gy[i] = g[b * n + i] * gn->value[i];
                           standardise_backward(y->data() + b * n, gy.data(), gx + b * n, n,
                                                (*denom)[b], (*sigma)[b]);
                         }
                       }
                     });
}

Var embedding(const Var& table, std::span<const int> ids) {
  expect(table.shape().size() == 2, "embedding: expected table [vocab, dim]");
  const int vocab = table.dim(0), dim = table.dim(1);
  const int batch = static_cast<int>(ids.size());
  std::vector<int> idv(ids.begin(), ids.end());
  std::vector<double> out(static_cast<std::size_t>(batch) * dim, 0.0);
  for (int b = 0; b < batch; ++b) {
    const int id = idv[b];
    expect(id < vocab, "embedding: id " + std::to_string(id) + " outside vocabulary of " +
                           std::to_string(vocab));
    if (id < 0) continue;
    std::copy_n(&table.value()[static_cast<std::size_t>(id) * dim], dim, &out[b * dim]);
  }
  return make_result({batch, dim}, std::move(out), {table}, [idv, dim](Node& self) {
    double* gt = self.inputs[0]->grad_data();
    for (std::size_t b = 0; b < idv.size(); ++b) {
      if (idv[b] < 0) continue;
      for (int d = 0; d < dim; ++d) gt[idv[b] * dim + d] += self.grad[b * dim + d];
    }
  });
}

Var row_mask(const Var& x, std::span<const std::uint8_t> keep) {
  expect(x.shape().size() == 2 && keep.size() == static_cast<std::size_t>(x.dim(0)),
         "row_mask: keep length must equal batch size");
  const int n = x.dim(1);
  std::vector<std::uint8_t> kv(keep.begin(), keep.end());
  std::vector<double> out(x.value());
  for (std::size_t b = 0; b < kv.size(); ++b)
    if (!kv[b]) std::fill_n(&out[b * n], n, 0.0);
  return make_result(x.shape(), std::move(out), {x}, [kv, n](Node& self) {
    double* g = self.inputs[0]->grad_data();
    for (std::size_t b = 0; b < kv.size(); ++b) {
      if (!kv[b]) continue;
      for (int i = 0; i < n; ++i) g[b * n + i] += self.grad[b * n + i];
    }
  });
}

Var slice_cols(const Var& x, int begin, int end) {
  expect(x.shape().size() == 2 && 0 <= begin && begin <= end && end <= x.dim(1),
         "slice_cols: bad range");
  const int batch = x.dim(0), n = x.dim(1), w = end - begin;
  std::vector<double> out(static_cast<std::size_t>(batch) * w);
  for (int b = 0; b < batch; ++b)
    std::copy_n(&x.value()[b * n + begin], w, &out[b * w]);
  return make_result({batch, w}, std::move(out), {x}, [batch, n, w, begin](Node& self) {
    double* g = self.inputs[0]->grad_data();
    for (int b = 0; b < batch; ++b)
      for (int i = 0; i < w; ++i) g[b * n + begin + i] += self.grad[b * w + i];
  });
}

// ---- convolution -----------------------------------------------------------

namespace {

struct ConvGeom {
  int batch, cin, cout, height, width, k, pad;
  std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
};

// Valid output index range for a kernel offset d along an axis of length n.
inline void valid_range(int d, int n, int& lo, int& hi) {
  lo = std::max(0, -d);
  hi = std::min(n, n - d);
}

void conv_forward(const ConvGeom& g, const double* x, const double* w, const double* bias,
                  double* out) {
  const std::size_t plane = g.plane();
  for (int b = 0; b < g.batch; ++b) {
    for (int co = 0; co < g.cout; ++co) {
      double* op = out + (static_cast<std::size_t>(b) * g.cout + co) * plane;
      std::fill_n(op, plane, bias ? bias[co] : 0.0);
      for (int ci = 0; ci < g.cin; ++ci) {
        const double* ip = x + (static_cast<std::size_t>(b) * g.cin + ci) * plane;
        const double* wk = w + (static_cast<std::size_t>(co) * g.cin + ci) * g.k * g.k;
        for (int ky = 0; ky < g.k; ++ky) {
          const int dy = ky - g.pad;
          int y0, y1;
          valid_range(dy, g.height, y0, y1);
          for (int kx = 0; kx < g.k; ++kx) {
            const int dx = kx - g.pad;
            int x0, x1;
            valid_range(dx, g.width, x0, x1);
            const double wv = wk[ky * g.k + kx];
            for (int y = y0; y < y1; ++y) {
              double* orow = op + static_cast<std::size_t>(y) * g.width;
              const double* irow = ip + static_cast<std::size_t>(y + dy) * g.width + dx;
#pragma omp simd
              for (int xx = x0; xx < x1; ++xx) orow[xx] += wv * irow[xx];
            }
          }
        }
      }
    }
  }
}

void conv_backward_input(const ConvGeom& g, const double* gout, const double* w, double* gx) {
  const std::size_t plane = g.plane();
  for (int b = 0; b < g.batch; ++b) {
    for (int ci = 0; ci < g.cin; ++ci) {
      double* gp = gx + (static_cast<std::size_t>(b) * g.cin + ci) * plane;
      for (int co = 0; co < g.cout; ++co) {
        const double* op = gout + (static_cast<std::size_t>(b) * g.cout + co) * plane;
        const double* wk = w + (static_cast<std::size_t>(co) * g.cin + ci) * g.k * g.k;
        for (int ky = 0; ky < g.k; ++ky) {
          const int dy = ky - g.pad;
          int y0, y1;
          valid_range(dy, g.height, y0, y1);
          for (int kx = 0; kx < g.k; ++kx) {
            const int dx = kx - g.pad;
            int x0, x1;
            valid_range(dx, g.width, x0, x1);
            const double wv = wk[ky * g.k + kx];
            for (int y = y0; y < y1; ++y) {
              const double* orow = op + static_cast<std::size_t>(y) * g.width;
              double* irow = gp + static_cast<std::size_t>(y + dy) * g.width + dx;
#pragma omp simd
              for (int xx = x0; xx < x1; ++xx) irow[xx] += wv * orow[xx];
            }
          }
        }
      }
    }
  }
}

void conv_backward_weight(const ConvGeom& g, const double* gout, const double* x, double* gw,
                          double* gb) {
  const std::size_t plane = g.plane();
  for (int b = 0; b < g.batch; ++b) {
    for (int co = 0; co < g.cout; ++co) {
      const double* op = gout + (static_cast<std::size_t>(b) * g.cout + co) * plane;
      if (gb) {
        double s = 0.0;
#pragma omp simd reduction(+ : s)
        for (std::size_t i = 0; i < plane; ++i) s += op[i];
        gb[co] += s;
      }
      if (!gw) continue;
      for (int ci = 0; ci < g.cin; ++ci) {
        const double* ip = x + (static_cast<std::size_t>(b) * g.cin + ci) * plane;
        double* wk = gw + (static_cast<std::size_t>(co) * g.cin + ci) * g.k * g.k;
        for (int ky = 0; ky < g.k; ++ky) {
          const int dy = ky - g.pad;
          int y0, y1;
          valid_range(dy, g.height, y0, y1);
          for (int kx = 0; kx < g.k; ++kx) {
            const int dx = kx - g.pad;
            int x0, x1;
            valid_range(dx, g.width, x0, x1);
            double s = 0.0;
            for (int y = y0; y < y1; ++y) {
              const double* orow = op + static_cast<std::size_t>(y) * g.width;
              const double* irow = ip + static_cast<std::size_t>(y + dy) * g.width + dx;
#pragma omp simd reduction(+ : s)
              for (int xx = x0; xx < x1; ++xx) s += orow[xx] * irow[xx];
            }
            wk[ky * g.k + kx] += s;
          }
        }
      }
    }
  }
}

}  // namespace

Var conv2d(const Var& x, const Var& weight, const Var& bias) {
  expect(x.shape().size() == 4, "conv2d: expected input [B, C, H, W], got " + shape_str(x.shape()));
  expect(weight.shape().size() == 4 && weight.dim(2) == weight.dim(3) && weight.dim(2) % 2 == 1,
         "conv2d: expected odd square kernel [Cout, Cin, k, k]");
  expect(weight.dim(1) == x.dim(1), "conv2d: weight " + shape_str(weight.shape()) +
                                        " incompatible with input " + shape_str(x.shape()));
  ConvGeom g{x.dim(0), x.dim(1), weight.dim(0), x.dim(2), x.dim(3), weight.dim(2),
             weight.dim(2) / 2};
  if (bias.defined()) {
    expect(bias.numel() == static_cast<std::size_t>(g.cout), "conv2d: bias length mismatch");
  }
  std::vector<double> out(static_cast<std::size_t>(g.batch) * g.cout * g.plane());
  conv_forward(g, x.value().data(), weight.value().data(),
               bias.defined() ? bias.value().data() : nullptr, out.data());
  return make_result({g.batch, g.cout, g.height, g.width}, std::move(out), {x, weight, bias},
                     [g](Node& self) {
                       const auto& xn = self.inputs[0];
                       const auto& wn = self.inputs[1];
                       const auto& bn = self.inputs[2];
                       if (wants_grad(xn)) {
                         conv_backward_input(g, self.grad.data(), wn->value.data(),
                                             xn->grad_data());
                       }
                       double* gw = wants_grad(wn) ? wn->grad_data() : nullptr;
                       double* gb = wants_grad(bn) ? bn->grad_data() : nullptr;
                       if (gw || gb) {
                         conv_backward_weight(g, self.grad.data(), xn->value.data(), gw, gb);
                       }
                     });
}

Var instance_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  expect(x.shape().size() == 4, "instance_norm: expected [B, C, H, W]");
  const int batch = x.dim(0), ch = x.dim(1);
  const std::size_t slabs = static_cast<std::size_t>(batch) * ch;
  const std::size_t plane = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
  for (const Var* p : {&gamma, &beta}) {
    if (p->defined()) {
      expect(p->shape().size() == 2 && p->dim(0) == batch && p->dim(1) == ch,
             "instance_norm: affine parameters must be [B, C] = [" + std::to_string(batch) + "," +
                 std::to_string(ch) + "], got " + shape_str(p->shape()));
    }
  }
  auto y = std::make_shared<std::vector<double>>(x.numel());
  auto denom = std::make_shared<std::vector<double>>();
  auto sigma = std::make_shared<std::vector<double>>();
  standardise(x.value().data(), y->data(), slabs, plane, eps, *denom, *sigma);
  std::vector<double> out(x.numel());
  for (std::size_t s = 0; s < slabs; ++s) {
    const double gm = gamma.defined() ? gamma.value()[s] : 1.0;
    const double bt = beta.defined() ? beta.value()[s] : 0.0;
    const double* ys = y->data() + s * plane;
    double* os = out.data() + s * plane;
    for (std::size_t i = 0; i < plane; ++i) os[i] = gm * ys[i] + bt;
  }
  return make_result(x.shape(), std::move(out), {x, gamma, beta},
                     [slabs, plane, y, denom, sigma](Node& self) {
                       const auto& xn = self.inputs[0];
                       const auto& gn = self.inputs[1];
                       const auto& bn = self.inputs[2];
                       const double* g = self.grad.data();
                       double* ggam = wants_grad(gn) ? gn->grad_data() : nullptr;
                       double* gbet = wants_grad(bn) ? bn->grad_data() : nullptr;
                       double* gx = wants_grad(xn) ? xn->grad_data() : nullptr;
                       std::vector<double> gy(plane);
                       for (std::size_t s = 0; s < slabs; ++s) {
                         const double* ys = y->data() + s * plane;
                         const double* gs = g + s * plane;
                         if (ggam || gbet) {
                           double sg = 0.0, sgy = 0.0;
                           for (std::size_t i = 0; i < plane; ++i) {
                             sg += gs[i];
                             sgy += gs[i] * ys[i];
                           }
                           if (ggam) ggam[s] += sgy;
                           if (gbet) gbet[s] += sg;
                         }
                         if (gx) {
                           const double gm = gn ? gn->value[s] : 1.0;
                           for (std::size_t i = 0; i < plane; ++i) gy[i] = gm * gs[i];
                           standardise_backward(ys, gy.data(), gx + s * plane, plane,
                                                (*denom)[s], (*sigma)[s]);
                         }
                       }
                     });
}

Var max_pool2(const Var& x) {
  expect(x.shape().size() == 4 && x.dim(2) % 2 == 0 && x.dim(3) % 2 == 0,
         "max_pool2: expected [B, C, H, W] with even H and W");
  const int slabs = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  const int ho = h / 2, wo = w / 2;
  std::vector<double> out(static_cast<std::size_t>(slabs) * ho * wo);
  auto argmax = std::make_shared<std::vector<std::uint32_t>>(out.size());
  const auto& xv = x.value();
  for (int s = 0; s < slabs; ++s)
    for (int r = 0; r < ho; ++r)
      for (int c = 0; c < wo; ++c) {
        std::size_t best = static_cast<std::size_t>(s) * h * w + (2 * r) * w + 2 * c;
        for (int dr = 0; dr < 2; ++dr)
          for (int dc = 0; dc < 2; ++dc) {
            const std::size_t idx = static_cast<std::size_t>(s) * h * w + (2 * r + dr) * w +
                                    (2 * c + dc);
            if (xv[idx] > xv[best]) best = idx;
          }
        const std::size_t o = (static_cast<std::size_t>(s) * ho + r) * wo + c;
        out[o] = xv[best];
        (*argmax)[o] = static_cast<std::uint32_t>(best);
      }
  return make_result({x.dim(0), x.dim(1), ho, wo}, std::move(out), {x}, [argmax](Node& self) {
    double* g = self.inputs[0]->grad_data();
    for (std::size_t o = 0; o < self.grad.size(); ++o) g[(*argmax)[o]] += self.grad[o];
  });
}

Var upsample2(const Var& x) {
  expect(x.shape().size() == 4, "upsample2: expected [B, C, H, W]");
  const int slabs = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  const int ho = 2 * h, wo = 2 * w;
  std::vector<double> out(static_cast<std::size_t>(slabs) * ho * wo);
  const auto& xv = x.value();
  for (int s = 0; s < slabs; ++s)
    for (int r = 0; r < ho; ++r)
      for (int c = 0; c < wo; ++c)
        out[(static_cast<std::size_t>(s) * ho + r) * wo + c] =
            xv[(static_cast<std::size_t>(s) * h + r / 2) * w + c / 2];
  return make_result({x.dim(0), x.dim(1), ho, wo}, std::move(out), {x},
                     [slabs, h, w, ho, wo](Node& self) {
                       double* g = self.inputs[0]->grad_data();
                       for (int s = 0; s < slabs; ++s)
                         for (int r = 0; r < ho; ++r)
                           for (int c = 0; c < wo; ++c)
                             g[(static_cast<std::size_t>(s) * h + r / 2) * w + c / 2] +=
                                 self.grad[(static_cast<std::size_t>(s) * ho + r) * wo + c];
                     });
}

// ---- losses / MRI ------------------------------------------------------------

Var mae(const Var& pred, const Var& target) {
  expect(pred.shape() == target.shape(), "mae: shape mismatch " + shape_str(pred.shape()) +
                                             " vs " + shape_str(target.shape()));
  const auto& p = pred.value();
  const auto& t = target.value();
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - t[i]);
  const double n = static_cast<double>(p.size());
  return make_result({1}, {s / n}, {pred, target}, [n](Node& self) {
    const auto& pn = self.inputs[0];
    const auto& tn = self.inputs[1];
    const double g = self.grad[0] / n;
    for (int which = 0; which < 2; ++which) {
      const auto& target_node = which == 0 ? pn : tn;
      if (!wants_grad(target_node)) continue;
      const double sign = which == 0 ? 1.0 : -1.0;
      double* gi = target_node->grad_data();
      for (std::size_t i = 0; i < pn->value.size(); ++i) {
        const double d = pn->value[i] - tn->value[i];
        if (d > 0.0) gi[i] += sign * g;
        else if (d < 0.0) gi[i] -= sign * g;
      }
    }
  });
}

Var data_consistency(const Var& pred, std::shared_ptr<const Measurements> measured,
                     const mri::DCConfig& cfg) {
  cfg.validate();
  expect(pred.shape().size() == 4 && pred.dim(1) == 1,
         "data_consistency: expected single-channel images [B, 1, H, W]");
  const int batch = pred.dim(0), h = pred.dim(2), w = pred.dim(3);
  expect(measured && measured->kspace.size() == static_cast<std::size_t>(batch) &&
             measured->masks.size() == static_cast<std::size_t>(batch),
         "data_consistency: measurements do not match batch size");
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  auto z = std::make_shared<std::vector<mri::Complex>>(static_cast<std::size_t>(batch) * plane);
  std::vector<double> out(static_cast<std::size_t>(batch) * plane);
  const bool hard = cfg.hard();
  const double lambda = cfg.lambda;
  for (int b = 0; b < batch; ++b) {
    const auto& y = measured->kspace[b];
    const auto& m = measured->masks[b];
    expect(y.height == h && y.width == w && m.width() == w,
           "data_consistency: measurement shape mismatch");
    std::span<mri::Complex> k(z->data() + b * plane, plane);
    const double* p = pred.value().data() + b * plane;
    for (std::size_t i = 0; i < plane; ++i) k[i] = p[i];
    mri::fft2c_inplace(k, h, w);
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) {
        if (!m.sampled(c)) continue;
        auto& kv = k[static_cast<std::size_t>(r) * w + c];
        const auto& yv = y.values[static_cast<std::size_t>(r) * w + c];
        kv = hard ? yv : (kv + lambda * yv) / (1.0 + lambda);
      }
    mri::ifft2c_inplace(k, h, w);
    for (std::size_t i = 0; i < plane; ++i) out[b * plane + i] = std::abs(k[i]);
  }
  return make_result(pred.shape(), std::move(out), {pred},
                     [batch, h, w, plane, z, measured, hard, lambda](Node& self) {
                       double* gp = self.inputs[0]->grad_data();
                       std::vector<mri::Complex> gk(plane);
                       for (int b = 0; b < batch; ++b) {
                         const mri::Complex* zb = z->data() + b * plane;
                         const double* g = self.grad.data() + b * plane;
                         for (std::size_t i = 0; i < plane; ++i) {
                           const double mag = std::abs(zb[i]);
                           gk[i] = mag > 0.0 ? g[i] * zb[i] / mag : mri::Complex{};
                         }
                         // Adjoint of the unitary inverse transform.
                         mri::fft2c_inplace(gk, h, w);
                         const auto& m = measured->masks[b];
                         for (int r = 0; r < h; ++r)
                           for (int c = 0; c < w; ++c) {
                             if (!m.sampled(c)) continue;
                             auto& v = gk[static_cast<std::size_t>(r) * w + c];
                             v = hard ? mri::Complex{} : v / (1.0 + lambda);
                           }
                         mri::ifft2c_inplace(gk, h, w);
                         for (std::size_t i = 0; i < plane; ++i) gp[b * plane + i] += gk[i].real();
                       }
                     });
}

}  // namespace signrecon::ag
