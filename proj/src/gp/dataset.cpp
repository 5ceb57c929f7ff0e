#include "cbo/gp/dataset.hpp"

#include "cbo/core/errors.hpp"

namespace cbo::gp {

Dataset::Dataset(Eigen::MatrixXd x, Eigen::VectorXd y) : inputs(std::move(x)), outputs(std::move(y)) { validate(); }

Dataset Dataset::empty(std::size_t dims) {
  Dataset d;
  d.inputs.resize(0, static_cast<Eigen::Index>(dims));
  d.outputs.resize(0);
  return d;
}

void Dataset::validate() const {
  if (inputs.rows() != outputs.size())
    throw InputError("Dataset: " + std::to_string(inputs.rows()) + " inputs but " + std::to_string(outputs.size()) +
                     " outputs");
  if (!inputs.allFinite() || !outputs.allFinite()) throw InputError("Dataset: non-finite entries");
}

void Dataset::append(std::span<const double> x, double y) {
  if (static_cast<Eigen::Index>(x.size()) != inputs.cols())
    throw InputError("Dataset::append: input dimension mismatch");
  const Eigen::Index n = inputs.rows();
  inputs.conservativeResize(n + 1, Eigen::NoChange);
  outputs.conservativeResize(n + 1);
  for (Eigen::Index d = 0; d < inputs.cols(); ++d) inputs(n, d) = x[static_cast<std::size_t>(d)];
  outputs[n] = y;
}

}  // namespace cbo::gp
