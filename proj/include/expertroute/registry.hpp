#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace expertroute {

struct ModelInfo {
  std::string model_id;
  std::optional<std::string> endpoint;
  std::string display_name;

  bool operator==(const ModelInfo&) const = default;
};

/// Ordered candidate set. The order is canonical: every reward vector,
/// distribution and weight row is indexed by position in the registry.
class ModelRegistry {
 public:
  ModelRegistry() = default;
  /// Throws DataError on duplicate or empty model ids.
  explicit ModelRegistry(std::vector<ModelInfo> models);

  std::size_t size() const noexcept { return models_.size(); }
  bool empty() const noexcept { return models_.empty(); }
  const ModelInfo& operator[](std::size_t i) const { return models_.at(i); }
  const std::vector<ModelInfo>& models() const noexcept { return models_; }
  std::optional<std::size_t> index_of(std::string_view model_id) const noexcept;
  std::vector<std::string> ids() const;

  bool operator==(const ModelRegistry&) const = default;

  static ModelRegistry from_json(const nlohmann::json& doc);
  nlohmann::ordered_json to_json() const;

 private:
  std::vector<ModelInfo> models_;
};

ModelRegistry load_registry(const std::filesystem::path& path);
void save_registry(const ModelRegistry& registry, const std::filesystem::path& path);

}  // namespace expertroute
