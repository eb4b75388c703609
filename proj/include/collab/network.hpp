#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "collab/rng.hpp"

namespace collab {

enum class Activation { Identity, Tanh };

/// Fully connected network whose weights live in a caller-owned flat
/// parameter span, so several networks can share one vector for the
/// optimizer, gradient clipping and checkpoints. Samples are columns.
class Mlp {
 public:
  struct Cache {
    std::vector<Eigen::MatrixXd> activations;  // [0] is the input
  };

  Mlp() = default;
  Mlp(std::vector<int> widths, Activation hidden, Activation output = Activation::Identity);

  int input_width() const { return widths_.front(); }
  int output_width() const { return widths_.back(); }
  int layer_count() const { return static_cast<int>(widths_.size()) - 1; }
  const std::vector<int>& widths() const { return widths_; }
  std::size_t parameter_count() const;

  /// Glorot-uniform weights, zero biases; the last layer is scaled by
  /// `output_gain`.
  void initialize(std::span<double> params, RngStream& rng, double output_gain = 1.0) const;

  Eigen::MatrixXd forward(std::span<const double> params, const Eigen::MatrixXd& x,
                          Cache* cache = nullptr) const;

  /// Accumulates dL/dparams into `grads` and returns dL/dx.
  Eigen::MatrixXd backward(std::span<const double> params, const Cache& cache,
                           const Eigen::MatrixXd& grad_out, std::span<double> grads) const;

 private:
  Activation activation_of(int layer) const {
    return layer + 1 == layer_count() ? output_ : hidden_;
  }
  std::size_t weight_offset(int layer) const { return offsets_[layer]; }
  std::size_t bias_offset(int layer) const {
    return offsets_[layer] + static_cast<std::size_t>(widths_[layer]) * widths_[layer + 1];
  }

  std::vector<int> widths_;
  std::vector<std::size_t> offsets_;
  Activation hidden_ = Activation::Tanh;
  Activation output_ = Activation::Identity;
};

struct AdamConfig {
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class Adam {
 public:
  Adam() = default;
  Adam(std::size_t size, AdamConfig config);

  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad);
  long steps() const { return steps_; }
  const AdamConfig& config() const { return config_; }

 private:
  AdamConfig config_;
  Eigen::VectorXd m_;
  Eigen::VectorXd v_;
  long steps_ = 0;
};

/// Rescales `grad` in place so its L2 norm is at most `max_norm`; returns the
/// norm before clipping.
double clip_global_norm(Eigen::VectorXd& grad, double max_norm);

}  // namespace collab
