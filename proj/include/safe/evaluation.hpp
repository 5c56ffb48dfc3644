#pragma once

#include "safe/data.hpp"
#include "safe/model.hpp"

#include <optional>

namespace safe {

/// Argmax accuracy (ties to the lowest class). Empty data has no accuracy.
[[nodiscard]] std::optional<double> accuracy(const ModelParams& params, const Eigen::Ref<const RowMatrix>& x,
                                             std::span<const int> y);
[[nodiscard]] std::optional<double> accuracy(const ModelParams& params, const Dataset& data);

/// Per-sample attack features: max probability, true-class probability,
/// prediction entropy.
[[nodiscard]] RowMatrix confidence_features(const ModelParams& params, const Eigen::Ref<const RowMatrix>& x,
                                            std::span<const int> y);

inline constexpr Eigen::Index kMiaMaxPerSide = 10000;

/// Trains a seeded logistic attacker (members = 1, non-members = 0, classes
/// weighted to balance) and returns the fraction of `probe` rows it labels as
/// members. Identical features everywhere leave the attacker with the
/// majority class; a tie scores 0.5.
[[nodiscard]] double mia_attack_from_features(const Eigen::Ref<const RowMatrix>& members,
                                              const Eigen::Ref<const RowMatrix>& non_members,
                                              const Eigen::Ref<const RowMatrix>& probe, std::uint64_t seed);

/// Membership attack on the forgotten points. Up to 10000 remaining points
/// act as members and up to 10000 test points as non-members.
[[nodiscard]] std::optional<double> mia_attack(const ModelParams& params, const Dataset& remaining,
                                               const Dataset& test, const Eigen::Ref<const RowMatrix>& forget_x,
                                               std::span<const int> forget_y, std::uint64_t seed);

}  // namespace safe
