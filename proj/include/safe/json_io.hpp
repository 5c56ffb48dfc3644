#pragma once

#include "safe/model.hpp"
#include "safe/safe_unlearner.hpp"
#include "safe/shift_estimator.hpp"

#include <json.hpp>

#include <filesystem>

namespace safe {

using Json = nlohmann::json;

[[nodiscard]] Json vector_to_json(const Eigen::Ref<const Vector>& v);
[[nodiscard]] Vector vector_from_json(const Json& j);
/// Row-major nested arrays.
[[nodiscard]] Json matrix_to_json(const Eigen::Ref<const Matrix>& m);
[[nodiscard]] Matrix matrix_from_json(const Json& j);

/// {"arch": {"input_dim", "hidden_dim", "num_classes"}, "theta": [...]}
[[nodiscard]] Json model_to_json(const ModelParams& params);
[[nodiscard]] ModelParams model_from_json(const Json& j);
void save_model(const std::filesystem::path& path, const ModelParams& params);
[[nodiscard]] ModelParams load_model(const std::filesystem::path& path);

/// {"proj_dim", "size_d0", "size_dt", "classes": [{"label", "n", "n0", "count",
///  "frozen", "mu", "sigma"}]}
[[nodiscard]] Json stats_snapshot(const ShiftModel& model);

/// Full engine state: w_0, config, retention gradient, ledger, projection,
/// whiteners, per-class stats and the perturbation RNG.
[[nodiscard]] Json engine_checkpoint(const SafeEngine& engine);
[[nodiscard]] SafeEngine engine_from_checkpoint(const Json& j);

[[nodiscard]] Json safe_config_to_json(const SafeConfig& c);
[[nodiscard]] SafeConfig safe_config_from_json(const Json& j);

[[nodiscard]] Json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const Json& j);

}  // namespace safe
