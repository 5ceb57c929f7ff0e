#include <algorithm>
#include <cmath>

#include "cbo/core/box_domain.hpp"
#include "cbo/core/errors.hpp"

namespace cbo {

BoxDomain::BoxDomain(Eigen::VectorXd lower, Eigen::VectorXd upper)
    : lower_(std::move(lower)), upper_(std::move(upper)) {
  if (lower_.size() != upper_.size()) throw InputError("BoxDomain: bound dimensions differ");
  if (lower_.size() == 0) throw InputError("BoxDomain: zero-dimensional domain");
  for (Eigen::Index d = 0; d < lower_.size(); ++d) {
    if (!std::isfinite(lower_[d]) || !std::isfinite(upper_[d]) || !(lower_[d] < upper_[d]))
      throw InputError("BoxDomain: require finite lower < upper in every dimension");
  }
}

BoxDomain BoxDomain::unit(std::size_t dims) { return uniform(dims, 0.0, 1.0); }

BoxDomain BoxDomain::uniform(std::size_t dims, double lo, double hi) {
  const auto n = static_cast<Eigen::Index>(dims);
  return BoxDomain(Eigen::VectorXd::Constant(n, lo), Eigen::VectorXd::Constant(n, hi));
}

bool BoxDomain::contains(const Eigen::VectorXd& x, double tol) const {
  if (x.size() != lower_.size()) return false;
  for (Eigen::Index d = 0; d < x.size(); ++d)
    if (!(x[d] >= lower_[d] - tol && x[d] <= upper_[d] + tol)) return false;
  return true;
}

Eigen::VectorXd BoxDomain::clamp(const Eigen::VectorXd& x) const {
  if (x.size() != lower_.size()) throw InputError("BoxDomain::clamp: dimension mismatch");
  return x.cwiseMax(lower_).cwiseMin(upper_);
}

Eigen::VectorXd BoxDomain::to_unit(const Eigen::VectorXd& x) const {
  if (x.size() != lower_.size()) throw InputError("BoxDomain::to_unit: dimension mismatch");
  return (x - lower_).cwiseQuotient(upper_ - lower_);
}

Eigen::VectorXd BoxDomain::from_unit(const Eigen::VectorXd& u) const {
  if (u.size() != lower_.size()) throw InputError("BoxDomain::from_unit: dimension mismatch");
  return lower_ + u.cwiseProduct(upper_ - lower_);
}

double BoxDomain::boundary_distance(const Eigen::VectorXd& x) const {
  const Eigen::VectorXd u = to_unit(x);
  double best = 0.5;
  for (Eigen::Index d = 0; d < u.size(); ++d) best = std::min({best, u[d], 1.0 - u[d]});
  return std::max(best, 0.0);
}

BoxDomain product(const BoxDomain& a, const BoxDomain& b) {
  Eigen::VectorXd lo(a.dims() + b.dims()), hi(a.dims() + b.dims());
  lo << a.lower(), b.lower();
  hi << a.upper(), b.upper();
  return BoxDomain(std::move(lo), std::move(hi));
}

}  // namespace cbo
