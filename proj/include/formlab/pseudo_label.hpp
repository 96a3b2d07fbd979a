#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "formlab/mlp.hpp"

namespace formlab {

struct UnlabeledRecord {
    std::uint64_t id = 0;
    std::optional<std::vector<double>> features;
};

struct ProposedLabel {
    std::uint64_t id = 0;
    int category = 0;
    std::string label;
    double margin = 0.0;
};

struct PseudoLabelResult {
    std::vector<ProposedLabel> proposals;
    std::vector<std::string> warnings;
};

/// Proposes the feature model's predicted category for every record whose
/// confidence margin is at least `tau`. Records without features are skipped
/// with a warning.
PseudoLabelResult pseudo_label(const MlpModel& feature_model, const std::vector<UnlabeledRecord>& records, double tau);

}  // namespace formlab
