#pragma once
// Layers, optimizer and embeddings built on the autodiff tape.

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "dans/autodiff.hpp"
#include "dans/rng.hpp"

namespace dans {

inline Matrix xavier_uniform(Index rows, Index cols, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = dist(rng);
  return m;
}

// y = x W + b with W stored (in x out).
struct Linear {
  Tensor weight;
  Tensor bias;

  Linear() = default;
  Linear(Index in, Index out, Rng& rng) : weight(xavier_uniform(in, out, rng)), bias(Matrix::Zero(1, out)) {}

  Index in_dim() const { return weight.rows(); }
  Index out_dim() const { return weight.cols(); }

  Var forward(Tape& tape, Var x) { return tape.add(tape.matmul(x, tape.param(weight)), tape.param(bias)); }
};

// Fully connected stack with ReLU between layers and a linear output.
struct Mlp {
  std::vector<Linear> layers;

  Mlp() = default;
  Mlp(const std::vector<Index>& sizes, Rng& rng) {
    for (std::size_t i = 0; i + 1 < sizes.size(); ++i) layers.emplace_back(sizes[i], sizes[i + 1], rng);
  }

  Var forward(Tape& tape, Var x) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      x = layers[i].forward(tape, x);
      if (i + 1 < layers.size()) x = tape.relu(x);
    }
    return x;
  }

  std::vector<Tensor*> parameters() {
    std::vector<Tensor*> out;
    for (auto& l : layers) {
      out.push_back(&l.weight);
      out.push_back(&l.bias);
    }
    return out;
  }
};

struct LayerNorm {
  Tensor gain;
  Tensor shift;

  LayerNorm() = default;
  explicit LayerNorm(Index dim) : gain(Matrix::Ones(1, dim)), shift(Matrix::Zero(1, dim)) {}

  Var forward(Tape& tape, Var x) { return tape.layer_norm(x, tape.param(gain), tape.param(shift), 1e-5); }
};

struct AdamWOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

// Adam with decoupled weight decay.
class AdamW {
 public:
  struct Moments {
    Matrix m;
    Matrix v;
  };

  AdamW() = default;
  AdamW(std::vector<Tensor*> params, AdamWOptions opts) : params_(std::move(params)), opts_(opts) {
    for (auto* p : params_) moments_.push_back({Matrix::Zero(p->rows(), p->cols()), Matrix::Zero(p->rows(), p->cols())});
  }

  void zero_grad() {
    for (auto* p : params_) p->zero_grad();
  }

  void step() {
    ++steps_;
    const double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(steps_));
    const double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(steps_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      Tensor& p = *params_[i];
      if (!p.has_grad()) continue;
      auto& [m, v] = moments_[i];
      m = opts_.beta1 * m + (1.0 - opts_.beta1) * p.grad;
      v = opts_.beta2 * v + (1.0 - opts_.beta2) * p.grad.cwiseProduct(p.grad);
      if (opts_.weight_decay != 0.0) p.value *= (1.0 - opts_.lr * opts_.weight_decay);
      p.value.array() -= opts_.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + opts_.eps);
    }
  }

  double lr() const { return opts_.lr; }
  void set_lr(double lr) { opts_.lr = lr; }
  long steps() const { return steps_; }
  const AdamWOptions& options() const { return opts_; }
  const std::vector<Moments>& moments() const { return moments_; }

  // Optimizer state without parameter pointers, for snapshots.
  struct State {
    std::vector<Moments> moments;
    long steps = 0;
    double lr = 0.0;
  };
  State state() const { return {moments_, steps_, opts_.lr}; }
  void restore(const State& s) {
    moments_ = s.moments;
    steps_ = s.steps;
    opts_.lr = s.lr;
  }

 private:
  std::vector<Tensor*> params_;
  std::vector<Moments> moments_;
  AdamWOptions opts_;
  long steps_ = 0;
};

// Sinusoidal embedding: (sin(t w_0), cos(t w_0), sin(t w_1), ...) with
// w_i = 10000^(-2i/dim).
inline RowVector time_embedding(int t, int dim) {
  RowVector out(dim);
  for (int i = 0; 2 * i < dim; ++i) {
    const double w = std::pow(10000.0, -2.0 * i / static_cast<double>(dim));
    out(2 * i) = std::sin(t * w);
    if (2 * i + 1 < dim) out(2 * i + 1) = std::cos(t * w);
  }
  return out;
}

}  // namespace dans
