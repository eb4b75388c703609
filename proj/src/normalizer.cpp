#include "collab/normalizer.hpp"

#include "collab/errors.hpp"

namespace collab {

RunningNormalizer::RunningNormalizer(int dim)
    : count_(Eigen::VectorXd::Zero(dim)),
      mean_(Eigen::VectorXd::Zero(dim)),
      m2_(Eigen::VectorXd::Zero(dim)) {}

void RunningNormalizer::update(const Eigen::VectorXd& x) {
  if (x.size() != mean_.size()) throw ContractViolation("normalizer dimension mismatch");
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    count_[i] += 1.0;
    const double delta = x[i] - mean_[i];
    mean_[i] += delta / count_[i];
    m2_[i] += delta * (x[i] - mean_[i]);
  }
}

void RunningNormalizer::update(const Eigen::MatrixXd& batch) {
  for (Eigen::Index c = 0; c < batch.cols(); ++c) update(Eigen::VectorXd(batch.col(c)));
}

Eigen::VectorXd RunningNormalizer::variance() const {
  Eigen::VectorXd var = Eigen::VectorXd::Zero(mean_.size());
  for (Eigen::Index i = 0; i < var.size(); ++i) {
    if (count_[i] > 0.0) var[i] = std::max(0.0, m2_[i] / count_[i]);
  }
  return var;
}

Eigen::VectorXd RunningNormalizer::stddev() const { return variance().cwiseSqrt(); }

Eigen::VectorXd RunningNormalizer::apply(const Eigen::VectorXd& x) const {
  if (x.size() != mean_.size()) throw ContractViolation("normalizer dimension mismatch");
  const Eigen::VectorXd sd = stddev();
  Eigen::VectorXd out(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (count_[i] < 1.0) {
      out[i] = x[i];
    } else {
      out[i] = std::clamp((x[i] - mean_[i]) / std::max(sd[i], kStdFloor), -kClip, kClip);
    }
  }
  return out;
}

Eigen::MatrixXd RunningNormalizer::apply(const Eigen::MatrixXd& batch) const {
  Eigen::MatrixXd out(batch.rows(), batch.cols());
  for (Eigen::Index c = 0; c < batch.cols(); ++c) out.col(c) = apply(Eigen::VectorXd(batch.col(c)));
  return out;
}

void RunningNormalizer::assign_slice(int offset, const RunningNormalizer& other) {
  if (offset < 0 || offset + other.dim() > dim()) throw ContractViolation("normalizer slice out of range");
  count_.segment(offset, other.dim()) = other.count_;
  mean_.segment(offset, other.dim()) = other.mean_;
  m2_.segment(offset, other.dim()) = other.m2_;
}

void RunningNormalizer::set_state(Eigen::VectorXd count, Eigen::VectorXd mean, Eigen::VectorXd m2) {
  if (count.size() != mean.size() || mean.size() != m2.size()) {
    throw ValidationError("normalizer state vectors differ in length");
  }
  count_ = std::move(count);
  mean_ = std::move(mean);
  m2_ = std::move(m2);
}

}  // namespace collab
