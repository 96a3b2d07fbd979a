#pragma once

#include <span>
#include <vector>

#include "formlab/dataset.hpp"
#include "formlab/features.hpp"

namespace formlab {

/// k-nearest-neighbour baseline over z-scored inputs (normalizer fit on the
/// training split). Euclidean distance; equal distances resolve to the lower
/// training row.
struct KnnModel {
    std::size_t k = 5;
    std::size_t classes = 0;
    Normalizer normalizer;
    std::vector<std::vector<double>> inputs;  ///< normalized training inputs
    std::vector<std::optional<int>> categories;
    std::vector<std::optional<double>> ranks;
};

inline constexpr std::size_t kDefaultNeighbours = 5;

KnnModel knn_fit(const LabeledDataset& ds, std::size_t k = kDefaultNeighbours);

/// Category probabilities are the vote fractions among the k neighbours that
/// carry a category; rank is the mean over neighbours that carry a rank.
Prediction knn_predict(const KnnModel& m, std::span<const double> x);

/// Training row indices (into KnnModel::inputs) of the k nearest neighbours.
std::vector<std::size_t> knn_neighbours(const KnnModel& m, std::span<const double> x);

}  // namespace formlab
