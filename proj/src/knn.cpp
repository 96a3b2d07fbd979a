#include "formlab/knn.hpp"

#include <algorithm>
#include <numeric>

#include "formlab/error.hpp"

namespace formlab {

KnnModel knn_fit(const LabeledDataset& ds, std::size_t k)
{
    ds.validate();
    if (k < 1) throw ValidationError("k must be at least 1");
    const auto train = ds.side(Split::train);
    if (train.empty()) throw ValidationError("k-NN needs a non-empty training split");
    if (train.size() < k) throw ValidationError("k exceeds the number of training rows");

    KnnModel m;
    m.k = k;
    m.classes = ds.label_names.size();
    std::vector<std::vector<double>> raw;
    for (const auto* r : train) raw.push_back(r->input);
    m.normalizer = fit_normalizer(raw);
    for (const auto* r : train) {
        m.inputs.push_back(normalize(r->input, m.normalizer));
        m.categories.push_back(r->category);
        m.ranks.push_back(r->rank);
    }
    return m;
}

std::vector<std::size_t> knn_neighbours(const KnnModel& m, std::span<const double> x)
{
    const auto q = normalize(x, m.normalizer);
    std::vector<double> dist(m.inputs.size());
    for (std::size_t r = 0; r < m.inputs.size(); ++r) {
        double s = 0.0;
        for (std::size_t i = 0; i < q.size(); ++i) {
            const double d = q[i] - m.inputs[r][i];
            s += d * d;
        }
        dist[r] = s;
    }
    std::vector<std::size_t> idx(m.inputs.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(m.k), idx.end(),
                      [&dist](std::size_t a, std::size_t b) { return dist[a] < dist[b] || (dist[a] == dist[b] && a < b); });
    idx.resize(m.k);
    return idx;
}

Prediction knn_predict(const KnnModel& m, std::span<const double> x)
{
    if (x.size() != m.normalizer.dim())
        throw ValidationError("k-NN expects input dim " + std::to_string(m.normalizer.dim()) + ", got " +
                              std::to_string(x.size()));
    const auto nb = knn_neighbours(m, x);
    Prediction p;
    if (m.classes > 0) {
        std::vector<double> votes(m.classes, 0.0);
        std::size_t voters = 0;
        for (auto r : nb)
            if (m.categories[r]) {
                votes[static_cast<std::size_t>(*m.categories[r])] += 1.0;
                ++voters;
            }
        if (voters > 0) {
            for (auto& v : votes) v /= static_cast<double>(voters);
            p.category = CategoryDistribution{votes};
        }
    }
    double sum = 0.0;
    std::size_t ranked = 0;
    for (auto r : nb)
        if (m.ranks[r]) {
            sum += *m.ranks[r];
            ++ranked;
        }
    if (ranked > 0) p.rank = sum / static_cast<double>(ranked);
    return p;
}

}  // namespace formlab
