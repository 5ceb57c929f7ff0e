#pragma once

#include <Eigen/Core>
#include <span>

namespace cbo::gp {

/// N observations of a D-dimensional input with scalar output.
struct Dataset {
  Eigen::MatrixXd inputs;   // N x D
  Eigen::VectorXd outputs;  // N

  Dataset() = default;
  Dataset(Eigen::MatrixXd x, Eigen::VectorXd y);
  static Dataset empty(std::size_t dims);

  std::size_t size() const { return static_cast<std::size_t>(inputs.rows()); }
  std::size_t dims() const { return static_cast<std::size_t>(inputs.cols()); }

  /// Throws InputError on shape mismatch or non-finite entries.
  void validate() const;
  void append(std::span<const double> x, double y);
};

}  // namespace cbo::gp
