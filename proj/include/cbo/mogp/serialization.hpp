#pragma once

#include <json.hpp>

#include "cbo/mogp/mogp_regressor.hpp"

namespace cbo::mogp {

nlohmann::json to_json(const MultiDataset& data);
MultiDataset multi_dataset_from_json(const nlohmann::json& j);

/// {"type": "mogp", kernel, coregionalization {a, d}, noise_variance, options, data}.
nlohmann::json to_json(const MOGPRegressor& model);
MOGPRegressor mogp_from_json(const nlohmann::json& j);

}  // namespace cbo::mogp
