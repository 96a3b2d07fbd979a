#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "formlab/dataset.hpp"

namespace formlab {

/// Top probability minus the highest alternative. Throws for K < 2.
double confidence_margin(const CategoryDistribution& p);

struct ScoredPrediction {
    CategoryDistribution probs;
    int truth = 0;
};

/// One quartile of predictions ranked by confidence margin.
struct QuartileRow {
    double lower_percent = 0.0;  ///< 0, 25, 50, 75
    double upper_percent = 0.0;  ///< 25, 50, 75, 100
    double min_margin = 0.0;
    double max_margin = 0.0;
    std::size_t count = 0;
    std::size_t correct = 0;
    double accuracy = 0.0;
};

struct MarginOutcome {
    double margin = 0.0;
    bool correct = false;
};

/// Sorts by margin (stable, ascending), splits into four quartiles whose sizes
/// differ by at most one (the first N mod 4 quartiles take the extra row) and
/// reports accuracy from the lowest-confidence quartile to the highest.
/// Throws for fewer than 4 rows.
std::vector<QuartileRow> quartile_report(std::span<const MarginOutcome> rows);
std::vector<QuartileRow> quartile_report(std::span<const ScoredPrediction> preds);

using ConfusionMatrix = std::vector<std::vector<std::size_t>>;  ///< [true][predicted]

ConfusionMatrix confusion_matrix(std::span<const int> predicted, std::span<const int> truth, std::size_t classes);

struct Metrics {
    std::size_t validation_count = 0;
    bool has_category = false;
    bool has_rank = false;
    double accuracy = 0.0;
    double rank_rmse = 0.0;
    ConfusionMatrix confusion;
    std::vector<QuartileRow> quartiles;  ///< empty with fewer than 4 rows or K < 2
};

/// Scores a predictor on the validation side. Accuracy uses argmax with ties
/// toward the lower label id; rank RMSE is sqrt(mean((pred - true)^2)).
Metrics evaluate(const Predictor& predict, const LabeledDataset& ds);

std::string format_metrics(const Metrics& m, const std::vector<std::string>& label_names);

}  // namespace formlab
