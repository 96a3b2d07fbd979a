#include "formlab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "formlab/error.hpp"

namespace formlab {

double confidence_margin(const CategoryDistribution& p)
{
    if (p.size() < 2) throw ValidationError("confidence margin needs at least two categories");
    double top = -1.0, second = -1.0;
    for (double v : p.probs) {
        if (v > top) {
            second = top;
            top = v;
        } else if (v > second) {
            second = v;
        }
    }
    return std::clamp(top - second, 0.0, 1.0);
}

std::vector<QuartileRow> quartile_report(std::span<const MarginOutcome> rows)
{
    if (rows.size() < 4) throw ValidationError("quartile report needs at least 4 predictions");
    std::vector<std::size_t> order(rows.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&rows](std::size_t a, std::size_t b) { return rows[a].margin < rows[b].margin; });

    const std::size_t base = rows.size() / 4, extra = rows.size() % 4;
    std::vector<QuartileRow> out(4);
    std::size_t pos = 0;
    for (std::size_t q = 0; q < 4; ++q) {
        auto& row = out[q];
        row.lower_percent = 25.0 * static_cast<double>(q);
        row.upper_percent = 25.0 * static_cast<double>(q + 1);
        row.count = base + (q < extra ? 1 : 0);
        row.min_margin = rows[order[pos]].margin;
        for (std::size_t k = 0; k < row.count; ++k, ++pos) {
            const auto& r = rows[order[pos]];
            row.max_margin = r.margin;
            if (r.correct) ++row.correct;
        }
        row.accuracy = static_cast<double>(row.correct) / static_cast<double>(row.count);
    }
    return out;
}

std::vector<QuartileRow> quartile_report(std::span<const ScoredPrediction> preds)
{
    std::vector<MarginOutcome> rows;
    rows.reserve(preds.size());
    for (const auto& p : preds) rows.push_back({confidence_margin(p.probs), p.probs.argmax() == p.truth});
    return quartile_report(rows);
}

ConfusionMatrix confusion_matrix(std::span<const int> predicted, std::span<const int> truth, std::size_t classes)
{
    if (predicted.size() != truth.size()) throw ValidationError("prediction and truth lengths differ");
    ConfusionMatrix m(classes, std::vector<std::size_t>(classes, 0));
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] < 0 || static_cast<std::size_t>(truth[i]) >= classes || predicted[i] < 0 ||
            static_cast<std::size_t>(predicted[i]) >= classes)
            throw ValidationError("label out of range at row " + std::to_string(i));
        ++m[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(predicted[i])];
    }
    return m;
}

Metrics evaluate(const Predictor& predict, const LabeledDataset& ds)
{
    ds.validate();
    const auto val = ds.side(Split::validation);
    if (val.empty()) throw ValidationError("validation split is empty");
    Metrics m;
    m.validation_count = val.size();

    std::vector<int> preds, truths;
    std::vector<ScoredPrediction> scored;
    double sq = 0.0;
    std::size_t ranked = 0;
    for (const auto* row : val) {
        const Prediction p = predict(row->input);
        if (p.category && row->category) {
            preds.push_back(p.category->argmax());
            truths.push_back(*row->category);
            scored.push_back({*p.category, *row->category});
        }
        if (p.rank && row->rank) {
            const double d = *p.rank - *row->rank;
            sq += d * d;
            ++ranked;
        }
    }
    if (!truths.empty()) {
        m.has_category = true;
        m.confusion = confusion_matrix(preds, truths, ds.label_names.size());
        std::size_t hit = 0;
        for (std::size_t i = 0; i < truths.size(); ++i) hit += preds[i] == truths[i] ? 1 : 0;
        m.accuracy = static_cast<double>(hit) / static_cast<double>(truths.size());
        if (scored.size() >= 4 && ds.label_names.size() >= 2) m.quartiles = quartile_report(scored);
    }
    if (ranked > 0) {
        m.has_rank = true;
        m.rank_rmse = std::sqrt(sq / static_cast<double>(ranked));
    }
    return m;
}

std::string format_metrics(const Metrics& m, const std::vector<std::string>& label_names)
{
    std::string out;
    char buf[160];
    std::snprintf(buf, sizeof buf, "validation rows: %zu\n", m.validation_count);
    out += buf;
    if (m.has_category) {
        std::snprintf(buf, sizeof buf, "accuracy: %.4f\n", m.accuracy);
        out += buf;
        out += "confusion (rows = true, cols = predicted):\n";
        for (std::size_t i = 0; i < m.confusion.size(); ++i) {
            std::snprintf(buf, sizeof buf, "  %-12s", i < label_names.size() ? label_names[i].c_str() : "?");
            out += buf;
            for (auto c : m.confusion[i]) {
                std::snprintf(buf, sizeof buf, " %5zu", c);
                out += buf;
            }
            out += "\n";
        }
        if (!m.quartiles.empty()) {
            out += "confidence quartile   accuracy\n";
            for (auto it = m.quartiles.rbegin(); it != m.quartiles.rend(); ++it) {
                std::snprintf(buf, sizeof buf, "  %3.0f%% to %3.0f%%      %6.1f%%\n", it->lower_percent,
                              it->upper_percent, 100.0 * it->accuracy);
                out += buf;
            }
        }
    }
    if (m.has_rank) {
        std::snprintf(buf, sizeof buf, "rank rmse: %.4f\n", m.rank_rmse);
        out += buf;
    }
    return out;
}

}  // namespace formlab
