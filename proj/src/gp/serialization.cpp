#include "cbo/gp/serialization.hpp"

#include "cbo/core/errors.hpp"

namespace cbo::gp {

using nlohmann::json;

json to_json(const Eigen::VectorXd& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

Eigen::VectorXd vector_from_json(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

json to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::vector<double> r(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index c = 0; c < m.cols(); ++c) r[static_cast<std::size_t>(c)] = m(i, c);
    rows.push_back(r);
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j, Eigen::Index cols_if_empty) {
  if (!j.is_array()) throw IoError("expected a JSON array of rows");
  if (j.empty()) return Eigen::MatrixXd(0, cols_if_empty);
  const auto cols = static_cast<Eigen::Index>(j.front().size());
  Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()), cols);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const auto r = j[static_cast<std::size_t>(i)].get<std::vector<double>>();
    if (static_cast<Eigen::Index>(r.size()) != cols) throw IoError("ragged matrix in JSON");
    for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = r[static_cast<std::size_t>(c)];
  }
  return m;
}

json to_json(const BoxDomain& box) { return {{"lower", to_json(box.lower())}, {"upper", to_json(box.upper())}}; }

BoxDomain box_from_json(const json& j) {
  return BoxDomain(vector_from_json(j.at("lower")), vector_from_json(j.at("upper")));
}

json to_json(const KernelSpec& k) {
  json j{{"family", to_string(k.family)}, {"lengthscales", k.lengthscales}, {"signal_variance", k.signal_variance}};
  if (k.family == KernelFamily::Product) {
    json slices = json::array();
    for (const KernelSlice& s : k.slices)
      slices.push_back({{"family", to_string(s.family)}, {"first_dim", s.first_dim}, {"n_dims", s.n_dims}});
    j["slices"] = slices;
  }
  return j;
}

KernelSpec kernel_from_json(const json& j) {
  KernelSpec k;
  k.family = kernel_family_from_string(j.at("family").get<std::string>());
  k.lengthscales = j.at("lengthscales").get<std::vector<double>>();
  k.signal_variance = j.at("signal_variance").get<double>();
  if (j.contains("slices")) {
    for (const json& s : j.at("slices"))
      k.slices.push_back({kernel_family_from_string(s.at("family").get<std::string>()),
                          s.at("first_dim").get<std::size_t>(), s.at("n_dims").get<std::size_t>()});
  }
  k.validate();
  return k;
}

json to_json(const Dataset& data) {
  return {{"dims", data.dims()}, {"inputs", to_json(data.inputs)}, {"outputs", to_json(data.outputs)}};
}

Dataset dataset_from_json(const json& j) {
  const auto dims = j.at("dims").get<Eigen::Index>();
  return Dataset(matrix_from_json(j.at("inputs"), dims), vector_from_json(j.at("outputs")));
}

json to_json(const GpOptions& options) {
  json opts{{"standardize_outputs", options.standardize_outputs}};
  opts["input_box"] = options.input_box ? to_json(*options.input_box) : json(nullptr);
  return opts;
}

GpOptions gp_options_from_json(const json& o) {
  GpOptions opts;
  opts.standardize_outputs = o.at("standardize_outputs").get<bool>();
  if (!o.at("input_box").is_null()) opts.input_box = box_from_json(o.at("input_box"));
  return opts;
}

json to_json(const GPRegressor& model) {
  return {{"type", "gp"},
          {"kernel", to_json(model.kernel())},
          {"noise_variance", model.noise_variance()},
          {"options", to_json(model.options())},
          {"data", to_json(model.data())}};
}

GPRegressor gp_from_json(const json& j) {
  try {
    if (j.at("type").get<std::string>() != "gp") throw IoError("model document is not a single-output GP");
    return GPRegressor(dataset_from_json(j.at("data")), kernel_from_json(j.at("kernel")),
                       j.at("noise_variance").get<double>(), gp_options_from_json(j.at("options")));
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed GP document: ") + e.what());
  }
}

}  // namespace cbo::gp
