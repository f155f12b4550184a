#include "expertroute/registry.hpp"

#include <fstream>
#include <unordered_set>

#include "expertroute/error.hpp"

namespace expertroute {

ModelRegistry::ModelRegistry(std::vector<ModelInfo> models) : models_(std::move(models)) {
  std::unordered_set<std::string> seen;
  for (auto& m : models_) {
    if (m.model_id.empty()) throw DataError("registry: empty model_id");
    if (!seen.insert(m.model_id).second) {
      throw DataError("registry: duplicate model_id '" + m.model_id + "'");
    }
    if (m.display_name.empty()) m.display_name = m.model_id;
  }
}

std::optional<std::size_t> ModelRegistry::index_of(std::string_view model_id) const noexcept {
  for (std::size_t i = 0; i < models_.size(); ++i) {
    if (models_[i].model_id == model_id) return i;
  }
  return std::nullopt;
}

std::vector<std::string> ModelRegistry::ids() const {
  std::vector<std::string> out;
  out.reserve(models_.size());
  for (const auto& m : models_) out.push_back(m.model_id);
  return out;
}

ModelRegistry ModelRegistry::from_json(const nlohmann::json& doc) {
  if (!doc.is_object() || !doc.contains("models") || !doc["models"].is_array()) {
    throw DataError("registry: expected an object with a \"models\" array");
  }
  std::vector<ModelInfo> models;
  for (const auto& entry : doc["models"]) {
    if (!entry.is_object() || !entry.contains("model_id") || !entry["model_id"].is_string()) {
      throw DataError("registry: every model needs a string \"model_id\"");
    }
    ModelInfo info;
    info.model_id = entry["model_id"].get<std::string>();
    if (auto it = entry.find("endpoint"); it != entry.end() && !it->is_null()) {
      if (!it->is_string()) throw DataError("registry: endpoint must be a string");
      info.endpoint = it->get<std::string>();
    }
    if (auto it = entry.find("display_name"); it != entry.end() && !it->is_null()) {
      if (!it->is_string()) throw DataError("registry: display_name must be a string");
      info.display_name = it->get<std::string>();
    }
    models.push_back(std::move(info));
  }
  return ModelRegistry(std::move(models));
}

nlohmann::ordered_json ModelRegistry::to_json() const {
  nlohmann::ordered_json models = nlohmann::ordered_json::array();
  for (const auto& m : models_) {
    nlohmann::ordered_json entry;
    entry["model_id"] = m.model_id;
    entry["display_name"] = m.display_name;
    if (m.endpoint) entry["endpoint"] = *m.endpoint;
    models.push_back(std::move(entry));
  }
  nlohmann::ordered_json doc;
  doc["models"] = std::move(models);
  return doc;
}

ModelRegistry load_registry(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open registry file: " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("registry " + path.string() + ": " + e.what());
  }
  return ModelRegistry::from_json(doc);
}

void save_registry(const ModelRegistry& registry, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write registry file: " + path.string());
  out << registry.to_json().dump(2) << '\n';
}

}  // namespace expertroute
