#include "cbo/mogp/serialization.hpp"

#include "cbo/core/errors.hpp"
#include "cbo/gp/serialization.hpp"

namespace cbo::mogp {

using nlohmann::json;

json to_json(const MultiDataset& data) {
  return {{"dims", data.dims()},
          {"outputs_count", data.outputs_count()},
          {"inputs", gp::to_json(data.inputs)},
          {"outputs", gp::to_json(data.outputs)}};
}

MultiDataset multi_dataset_from_json(const json& j) {
  const auto dims = j.at("dims").get<Eigen::Index>();
  const auto q = j.at("outputs_count").get<Eigen::Index>();
  return MultiDataset(gp::matrix_from_json(j.at("inputs"), dims), gp::matrix_from_json(j.at("outputs"), q));
}

json to_json(const MOGPRegressor& model) {
  return {{"type", "mogp"},
          {"kernel", gp::to_json(model.base_kernel())},
          {"coregionalization",
           {{"a", gp::to_json(model.coregionalization().a)}, {"d", gp::to_json(model.coregionalization().d)}}},
          {"noise_variance", model.noise_variance()},
          {"options", gp::to_json(model.options())},
          {"data", to_json(model.data())}};
}

MOGPRegressor mogp_from_json(const json& j) {
  try {
    if (j.at("type").get<std::string>() != "mogp") throw IoError("model document is not a multi-output GP");
    CoregionalizationMatrix b;
    b.a = gp::matrix_from_json(j.at("coregionalization").at("a"));
    b.d = gp::vector_from_json(j.at("coregionalization").at("d"));
    return MOGPRegressor(multi_dataset_from_json(j.at("data")), gp::kernel_from_json(j.at("kernel")), std::move(b),
                         j.at("noise_variance").get<double>(), gp::gp_options_from_json(j.at("options")));
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed MOGP document: ") + e.what());
  }
}

}  // namespace cbo::mogp
