#pragma once

#include <json.hpp>

#include "cbo/core/box_domain.hpp"
#include "cbo/gp/gp_regressor.hpp"

namespace cbo::gp {

nlohmann::json to_json(const BoxDomain& box);
BoxDomain box_from_json(const nlohmann::json& j);

nlohmann::json to_json(const KernelSpec& kernel);
KernelSpec kernel_from_json(const nlohmann::json& j);

nlohmann::json to_json(const Dataset& data);
Dataset dataset_from_json(const nlohmann::json& j);

nlohmann::json to_json(const GpOptions& options);
GpOptions gp_options_from_json(const nlohmann::json& j);

/// {"type": "gp", kernel, noise_variance, options, data}. Reloading
/// re-factorizes, so predictions reproduce exactly.
nlohmann::json to_json(const GPRegressor& model);
GPRegressor gp_from_json(const nlohmann::json& j);

nlohmann::json to_json(const Eigen::MatrixXd& m);
Eigen::MatrixXd matrix_from_json(const nlohmann::json& j, Eigen::Index cols_if_empty = 0);
nlohmann::json to_json(const Eigen::VectorXd& v);
Eigen::VectorXd vector_from_json(const nlohmann::json& j);

}  // namespace cbo::gp
