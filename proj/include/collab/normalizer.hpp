#pragma once

#include <Eigen/Dense>

namespace collab {

/// Per-feature running mean/variance (Welford). Features with fewer than one
/// observation pass through unchanged.
class RunningNormalizer {
 public:
  static constexpr double kStdFloor = 1e-8;
  static constexpr double kClip = 10.0;

  RunningNormalizer() = default;
  explicit RunningNormalizer(int dim);

  int dim() const { return static_cast<int>(mean_.size()); }

  void update(const Eigen::VectorXd& x);
  void update(const Eigen::MatrixXd& batch);  // samples are columns

  Eigen::VectorXd apply(const Eigen::VectorXd& x) const;
  Eigen::MatrixXd apply(const Eigen::MatrixXd& batch) const;

  Eigen::VectorXd variance() const;  // population variance
  Eigen::VectorXd stddev() const;

  /// Copies the statistics of `other` into features [offset, offset + other.dim()).
  void assign_slice(int offset, const RunningNormalizer& other);

  const Eigen::VectorXd& count() const { return count_; }
  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::VectorXd& m2() const { return m2_; }
  void set_state(Eigen::VectorXd count, Eigen::VectorXd mean, Eigen::VectorXd m2);

 private:
  Eigen::VectorXd count_;
  Eigen::VectorXd mean_;
  Eigen::VectorXd m2_;
};

}  // namespace collab
