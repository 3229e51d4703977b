#include "nosaf/checkpoint.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "nosaf/errors.hpp"
#include "nosaf/version.hpp"

namespace nosaf {

using nlohmann::json;

json model_config_to_json(const ModelConfig& cfg) {
  json j;
  j["variant"] = variant_name(cfg.variant);
  j["layers"] = cfg.layers;
  j["hidden"] = cfg.hidden;
  j["filter_proj"] = cfg.filter_proj;
  j["filter_hidden"] = cfg.filter_hidden;
  j["leaky_slope"] = cfg.leaky_slope;
  j["dropout"] = cfg.dropout;
  j["disable_cpm"] = cfg.disable_cpm;
  j["disable_node_weights"] = cfg.disable_node_weights;
  j["disable_codebank"] = cfg.disable_codebank;
  return j;
}

ModelConfig model_config_from_json(const json& j) {
  static const std::set<std::string> known = {
      "variant",      "layers",      "hidden",
      "filter_proj",  "filter_hidden", "leaky_slope",
      "dropout",      "disable_cpm", "disable_node_weights",
      "disable_codebank"};
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) throw ArgumentError("model config: unknown key '" + key + "'");
  ModelConfig cfg;
  try {
    if (j.contains("variant")) cfg.variant = parse_variant(j["variant"].get<std::string>());
    if (j.contains("layers")) cfg.layers = j["layers"].get<int>();
    if (j.contains("hidden")) cfg.hidden = j["hidden"].get<int>();
    if (j.contains("filter_proj")) cfg.filter_proj = j["filter_proj"].get<int>();
    if (j.contains("filter_hidden")) cfg.filter_hidden = j["filter_hidden"].get<int>();
    if (j.contains("leaky_slope")) cfg.leaky_slope = j["leaky_slope"].get<double>();
    if (j.contains("dropout")) cfg.dropout = j["dropout"].get<double>();
    if (j.contains("disable_cpm")) cfg.disable_cpm = j["disable_cpm"].get<bool>();
    if (j.contains("disable_node_weights"))
      cfg.disable_node_weights = j["disable_node_weights"].get<bool>();
    if (j.contains("disable_codebank")) cfg.disable_codebank = j["disable_codebank"].get<bool>();
  } catch (const json::exception& e) {
    throw ArgumentError(std::string("model config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& cfg,
                     const ModelParams& params) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ArgumentError("save_checkpoint: cannot open " + path.string());

  // Values are written by hand at 17 significant digits so doubles
  // round-trip exactly (nlohmann can't be told a float precision).
  char buf[32];
  out << "{\n";
  out << "  \"version\": \"" << kVersion << "\",\n";
  out << "  \"feature_dim\": " << params.feature_dim << ",\n";
  out << "  \"num_classes\": " << params.num_classes << ",\n";
  out << "  \"config\": " << model_config_to_json(cfg).dump() << ",\n";
  out << "  \"params\": {\n";
  bool first = true;
  params.visit_fields([&](const std::string& name, const Mat& m, bool) {
    if (!first) out << ",\n";
    first = false;
    out << "    \"" << name << "\": {\"shape\": [" << m.rows() << ", " << m.cols()
        << "], \"values\": [";
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        std::snprintf(buf, sizeof buf, "%.17g", m(i, j));
        if (i != 0 || j != 0) out << ", ";
        out << buf;
      }
    out << "]}";
  });
  out << "\n  }\n}\n";
  if (!out) throw ArgumentError("save_checkpoint: write failed for " + path.string());
}

std::pair<ModelConfig, ModelParams> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("load_checkpoint: cannot open " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.filename().string() + ": " + e.what());
  }
  for (const char* key : {"version", "feature_dim", "num_classes", "config", "params"})
    if (!doc.contains(key))
      throw IntegrityError(path.filename().string() + ": missing key '" + key + "'");

  const ModelConfig cfg = model_config_from_json(doc["config"]);
  const int feature_dim = doc["feature_dim"].get<int>();
  const int num_classes = doc["num_classes"].get<int>();
  ModelParams params = init_params(cfg, feature_dim, num_classes, 0);  // shape template

  const json& stored = doc["params"];
  std::set<std::string> expected;
  params.visit_fields([&](const std::string& name, Mat& m, bool) {
    expected.insert(name);
    if (!stored.contains(name))
      throw IntegrityError(path.filename().string() + ": missing parameter '" + name + "'");
    const json& entry = stored[name];
    const auto shape = entry.at("shape");
    const auto rows = shape.at(0).get<Eigen::Index>();
    const auto cols = shape.at(1).get<Eigen::Index>();
    if (rows != m.rows() || cols != m.cols())
      throw IntegrityError(path.filename().string() + ": parameter '" + name + "' is " +
                           std::to_string(rows) + "x" + std::to_string(cols) +
                           ", config implies " + std::to_string(m.rows()) + "x" +
                           std::to_string(m.cols()));
    const auto& values = entry.at("values");
    if (static_cast<Eigen::Index>(values.size()) != rows * cols)
      throw IntegrityError(path.filename().string() + ": parameter '" + name + "' holds " +
                           std::to_string(values.size()) + " values for shape " +
                           std::to_string(rows) + "x" + std::to_string(cols));
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j)
        m(i, j) = values[static_cast<std::size_t>(i * cols + j)].get<double>();
  });
  for (const auto& [key, _] : stored.items())
    if (!expected.count(key))
      throw IntegrityError(path.filename().string() + ": unknown parameter '" + key + "'");
  return {cfg, std::move(params)};
}

}  // namespace nosaf
