#pragma once

#include <Eigen/Core>
#include <span>
#include <vector>

namespace cbo {

/// Axis-aligned box lower <= x <= upper with lower < upper componentwise.
class BoxDomain {
 public:
  BoxDomain() = default;
  BoxDomain(Eigen::VectorXd lower, Eigen::VectorXd upper);
  static BoxDomain unit(std::size_t dims);
  static BoxDomain uniform(std::size_t dims, double lo, double hi);

  std::size_t dims() const { return static_cast<std::size_t>(lower_.size()); }
  const Eigen::VectorXd& lower() const { return lower_; }
  const Eigen::VectorXd& upper() const { return upper_; }
  Eigen::VectorXd width() const { return upper_ - lower_; }
  Eigen::VectorXd center() const { return 0.5 * (lower_ + upper_); }

  bool contains(const Eigen::VectorXd& x, double tol = 0.0) const;
  Eigen::VectorXd clamp(const Eigen::VectorXd& x) const;

  /// Affine map onto [0, 1]^D and back.
  Eigen::VectorXd to_unit(const Eigen::VectorXd& x) const;
  Eigen::VectorXd from_unit(const Eigen::VectorXd& u) const;

  /// Smallest normalized distance of x to any face; 0 on the boundary, 0.5 at the center.
  double boundary_distance(const Eigen::VectorXd& x) const;

  bool operator==(const BoxDomain&) const = default;

 private:
  Eigen::VectorXd lower_;
  Eigen::VectorXd upper_;
};

/// Concatenates two boxes: (a, b) -> a x b.
BoxDomain product(const BoxDomain& a, const BoxDomain& b);

inline Eigen::VectorXd to_vector(std::span<const double> x) {
  return Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
}

inline std::vector<double> to_std(const Eigen::VectorXd& x) { return {x.data(), x.data() + x.size()}; }

}  // namespace cbo
