#include "collab/network.hpp"

#include <cmath>

#include "collab/errors.hpp"

namespace collab {

using Eigen::MatrixXd;

namespace {

using ConstMatMap = Eigen::Map<const MatrixXd>;
using MatMap = Eigen::Map<MatrixXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;
using VecMap = Eigen::Map<Eigen::VectorXd>;

}  // namespace

Mlp::Mlp(std::vector<int> widths, Activation hidden, Activation output)
    : widths_(std::move(widths)), hidden_(hidden), output_(output) {
  if (widths_.size() < 2) throw InputError("Mlp needs at least an input and an output width");
  std::size_t off = 0;
  for (int l = 0; l < layer_count(); ++l) {
    offsets_.push_back(off);
    off += static_cast<std::size_t>(widths_[l]) * widths_[l + 1] + widths_[l + 1];
  }
  offsets_.push_back(off);
}

std::size_t Mlp::parameter_count() const { return offsets_.empty() ? 0 : offsets_.back(); }

void Mlp::initialize(std::span<double> params, RngStream& rng, double output_gain) const {
  for (int l = 0; l < layer_count(); ++l) {
    const int in = widths_[l];
    const int out = widths_[l + 1];
    double limit = std::sqrt(6.0 / (in + out));
    if (l + 1 == layer_count()) limit *= output_gain;
    double* w = params.data() + weight_offset(l);
    for (std::size_t k = 0; k < static_cast<std::size_t>(in) * out; ++k) {
      w[k] = (2.0 * rng.uniform() - 1.0) * limit;
    }
    double* b = params.data() + bias_offset(l);
    for (int k = 0; k < out; ++k) b[k] = 0.0;
  }
}

MatrixXd Mlp::forward(std::span<const double> params, const MatrixXd& x, Cache* cache) const {
  if (x.rows() != input_width()) {
    throw ContractViolation("Mlp::forward: expected " + std::to_string(input_width()) +
                            " input rows, got " + std::to_string(x.rows()));
  }
  if (cache) {
    cache->activations.clear();
    cache->activations.push_back(x);
  }
  MatrixXd h = x;
  for (int l = 0; l < layer_count(); ++l) {
    const ConstMatMap w(params.data() + weight_offset(l), widths_[l + 1], widths_[l]);
    const ConstVecMap b(params.data() + bias_offset(l), widths_[l + 1]);
    MatrixXd z = w * h;
    z.colwise() += b;
    if (activation_of(l) == Activation::Tanh) z = z.array().tanh().matrix();
    h = std::move(z);
    if (cache) cache->activations.push_back(h);
  }
  return h;
}

MatrixXd Mlp::backward(std::span<const double> params, const Cache& cache,
                       const MatrixXd& grad_out, std::span<double> grads) const {
  MatrixXd delta = grad_out;
  for (int l = layer_count() - 1; l >= 0; --l) {
    const MatrixXd& out = cache.activations[l + 1];
    if (activation_of(l) == Activation::Tanh) {
      delta = (delta.array() * (1.0 - out.array().square())).matrix();
    }
    const MatrixXd& in = cache.activations[l];
    MatMap gw(grads.data() + weight_offset(l), widths_[l + 1], widths_[l]);
    VecMap gb(grads.data() + bias_offset(l), widths_[l + 1]);
    gw.noalias() += delta * in.transpose();
    gb += delta.rowwise().sum();
    const ConstMatMap w(params.data() + weight_offset(l), widths_[l + 1], widths_[l]);
    delta = w.transpose() * delta;
  }
  return delta;
}

Adam::Adam(std::size_t size, AdamConfig config)
    : config_(config),
      m_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(size))),
      v_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(size))) {}

void Adam::step(Eigen::VectorXd& params, const Eigen::VectorXd& grad) {
  ++steps_;
  m_ = config_.beta1 * m_ + (1.0 - config_.beta1) * grad;
  v_ = config_.beta2 * v_ + (1.0 - config_.beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
  params.array() -= config_.learning_rate * (m_.array() / c1) /
                    ((v_.array() / c2).sqrt() + config_.epsilon);
}

double clip_global_norm(Eigen::VectorXd& grad, double max_norm) {
  const double norm = grad.norm();
  if (norm > max_norm && norm > 0.0) grad *= max_norm / norm;
  return norm;
}

}  // namespace collab
