#include "formlab/dataset.hpp"

#include <cmath>

#include "formlab/error.hpp"

namespace formlab {

void LabeledDataset::validate() const
{
    const std::size_t d = input_dim();
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto& row = rows[r];
        const std::string where = "row " + std::to_string(r);
        if (row.input.size() != d) throw ValidationError(where + ": input dimension mismatch");
        for (double x : row.input)
            if (!std::isfinite(x)) throw ValidationError(where + ": non-finite input");
        if (row.category && (*row.category < 0 || static_cast<std::size_t>(*row.category) >= label_names.size()))
            throw ValidationError(where + ": category id out of range");
        if (row.rank && !(*row.rank >= 0.0 && *row.rank <= 10.0))
            throw ValidationError(where + ": rank outside [0,10]");
    }
}

std::vector<const LabeledRow*> LabeledDataset::side(Split s) const
{
    std::vector<const LabeledRow*> out;
    for (const auto& r : rows)
        if (r.split == s) out.push_back(&r);
    return out;
}

int CategoryDistribution::argmax() const
{
    int best = 0;
    for (std::size_t i = 1; i < probs.size(); ++i)
        if (probs[i] > probs[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
    return best;
}

}  // namespace formlab
