#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace formlab {

enum class Split { train, validation };

struct LabeledRow {
    std::vector<double> input;
    std::optional<int> category;  ///< index into LabeledDataset::label_names
    std::optional<double> rank;   ///< 0..10
    Split split = Split::train;
    std::uint64_t id = 0;         ///< provenance only, not used by learners
};

struct LabeledDataset {
    std::vector<LabeledRow> rows;
    std::vector<std::string> label_names;

    /// Throws ValidationError on ragged inputs, label ids out of range, ranks
    /// outside [0,10] or non-finite inputs.
    void validate() const;

    std::size_t input_dim() const { return rows.empty() ? 0 : rows.front().input.size(); }
    std::vector<const LabeledRow*> side(Split s) const;
};

/// Softmax output over the label set.
struct CategoryDistribution {
    std::vector<double> probs;

    std::size_t size() const { return probs.size(); }
    /// Index of the largest probability; ties resolve to the lower label id.
    int argmax() const;
};

struct Prediction {
    std::optional<CategoryDistribution> category;
    std::optional<double> rank;
};

/// Anything that maps an input vector to a prediction (MLP, k-NN, fixtures).
using Predictor = std::function<Prediction(std::span<const double>)>;

}  // namespace formlab
