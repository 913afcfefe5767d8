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

#pragma once

// Minimal reverse-mode automatic differentiation over dense double tensors.
//
// A Var is a shared handle to a graph node. Operations record their inputs and
// a backward closure when any input requires a gradient and grad mode is on;
// backward() walks the recorded graph in reverse topological order and
// accumulates into Node::grad. Feature maps are NCHW, vectors are [batch, n].

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "signrecon/mri_forward.hpp"

namespace signrecon::ag {

using Shape = std::vector<int>;

std::size_t numel(const Shape& shape);

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  /// Lazily allocated gradient buffer.
  double* grad_data();
};

class Var {
 public:
  Var() = default;
  Var(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Var zeros(Shape shape, bool requires_grad = false);
  static Var from_node(std::shared_ptr<Node> node);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int dim(std::size_t i) const { return node_->shape[i]; }
  std::size_t numel() const { return node_->value.size(); }
  bool requires_grad() const { return node_->requires_grad; }

  const std::vector<double>& value() const { return node_->value; }
  /// Mutable storage, for parameters and test fixtures only.
  std::vector<double>& mutable_value() { return node_->value; }
  double item() const { return node_->value.at(0); }

  /// Gradient; empty when nothing has been accumulated.
  const std::vector<double>& grad() const { return node_->grad; }
  void zero_grad() { node_->grad.clear(); }

  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// Seeds d(loss)/d(loss) = 1 and propagates to every reachable input.
void backward(const Var& scalar_loss);

bool grad_enabled();

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// ---- elementwise -----------------------------------------------------------

Var add(const Var& a, const Var& b);
Var add_n(std::span<const Var> terms);
Var sub(const Var& a, const Var& b);
Var scale(const Var& a, double factor);
Var add_scalar(const Var& a, double c);
/// Same values, new shape with the same element count.
Var reshape(const Var& a, Shape shape);
Var relu(const Var& a);

// ---- dense layers on [batch, n] --------------------------------------------

/// y = x W^T + b with W [out, in]; b may be undefined.
Var linear(const Var& x, const Var& weight, const Var& bias);

/// Standardises each row (population std, (sigma + eps) denominator), then gain/bias.
Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps);

/// Row lookup of table [vocab, dim]; a negative id yields a zero row.
Var embedding(const Var& table, std::span<const int> ids);

/// Multiplies row i by keep[i] (0 or 1).
Var row_mask(const Var& x, std::span<const std::uint8_t> keep);

/// Columns [begin, end) of a [batch, n] tensor.
Var slice_cols(const Var& x, int begin, int end);

// ---- feature maps [B, C, H, W] ---------------------------------------------

/// Zero-padded "same" convolution, odd square kernel, stride 1. bias may be undefined.
Var conv2d(const Var& x, const Var& weight, const Var& bias);

/// Per-(sample, channel) spatial standardisation followed by gamma * y + beta,
/// with gamma/beta of shape [B, C]. Undefined gamma/beta mean 1 and 0.
Var instance_norm(const Var& x, const Var& gamma, const Var& beta, double eps);

Var max_pool2(const Var& x);
Var upsample2(const Var& x);

// ---- losses / MRI ------------------------------------------------------------

/// Mean absolute error, returned as a one-element tensor.
Var mae(const Var& pred, const Var& target);

struct Measurements {
  std::vector<mri::KSpaceGrid> kspace;  // already masked
  std::vector<mri::SamplingMask> masks;
};

/// Batched data consistency on single-channel images [B, 1, H, W]; returns the
/// magnitude of the corrected image.
Var data_consistency(const Var& pred, std::shared_ptr<const Measurements> measured,
                     const mri::DCConfig& cfg);

}  // namespace signrecon::ag
