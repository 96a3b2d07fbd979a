#include "formlab/pseudo_label.hpp"

#include "formlab/error.hpp"
#include "formlab/metrics.hpp"

namespace formlab {

PseudoLabelResult pseudo_label(const MlpModel& feature_model, const std::vector<UnlabeledRecord>& records, double tau)
{
    if (!feature_model.has_classifier()) throw ValidationError("pseudo-labelling needs a classifier head");
    PseudoLabelResult out;
    for (const auto& r : records) {
        if (!r.features || r.features->size() != feature_model.input_dim) {
            out.warnings.push_back("record " + std::to_string(r.id) + ": no usable feature vector, skipped");
            continue;
        }
        const auto pred = mlp_predict(feature_model, *r.features);
        const double margin = confidence_margin(*pred.category);
        if (margin < tau) continue;
        const int c = pred.category->argmax();
        out.proposals.push_back({r.id, c, feature_model.label_names[static_cast<std::size_t>(c)], margin});
    }
    return out;
}

}  // namespace formlab
