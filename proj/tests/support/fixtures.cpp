#include "fixtures.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "formlab/csv.hpp"

namespace fixtures {

using namespace formlab;

std::string path(const std::string& name) { return std::string(FORMLAB_FIXTURES) + "/" + name; }

std::string read(const std::string& name)
{
    std::ifstream in(path(name), std::ios::binary);
    if (!in) throw std::runtime_error("missing fixture " + name);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

LabeledDataset load_planted(const std::string& name)
{
    const auto rows = csv::parse(read(name));
    LabeledDataset ds;
    int max_label = -1;
    for (std::size_t n = 1; n < rows.size(); ++n) {
        const auto& f = rows[n];
        LabeledRow row;
        row.id = n;
        row.split = f[0] == "train" ? Split::train : Split::validation;
        for (std::size_t i = 1; i <= 12; ++i) row.input.push_back(std::stod(f[i]));
        if (!f[13].empty()) {
            row.category = std::stoi(f[13]);
            max_label = std::max(max_label, *row.category);
        }
        if (!f[14].empty()) row.rank = std::stod(f[14]);
        ds.rows.push_back(std::move(row));
    }
    for (int c = 0; c <= max_label; ++c) ds.label_names.push_back("class" + std::to_string(c));
    return ds;
}

MlpModel linear_logit_model(const std::array<double, 12>& w, double b)
{
    MlpModel m = mlp_init(12, HeadKind::classifier, {"below", "above"}, 0, {2, 2});
    auto& l0 = m.layers[0];
    for (std::size_t i = 0; i < 12; ++i) {
        l0.w(0, i) = static_cast<float>(w[i]);
        l0.w(1, i) = static_cast<float>(-w[i]);
    }
    l0.bias = {static_cast<float>(b), static_cast<float>(-b)};
    auto& l1 = m.layers[1];
    l1.weights = {1.0f, -1.0f, -1.0f, 1.0f};
    l1.bias = {0.0f, 0.0f};
    auto& l2 = m.layers[2];
    l2.weights = {0.0f, 0.0f, 1.0f, -1.0f};
    l2.bias = {0.0f, 0.0f};
    return m;
}

Genotype reference_genotype()
{
    std::array<double, 12> u;
    u.fill(0.5);
    return make_genotype(u);
}

Genotype no_food_genotype()
{
    std::array<double, 12> u;
    u.fill(0.5);
    u[6] = 0.0;  // food_base_rate lower bound is 0
    u[7] = 0.5;  // curvature_food_bias maps [-1,1], midpoint 0
    return make_genotype(u);
}

BruteKnn brute_knn(const LabeledDataset& ds, std::size_t k, const std::vector<double>& x)
{
    std::vector<const LabeledRow*> train;
    for (const auto& r : ds.rows)
        if (r.split == Split::train) train.push_back(&r);
    const std::size_t d = x.size();
    std::vector<double> mean(d, 0.0), sd(d, 0.0);
    for (const auto* r : train)
        for (std::size_t i = 0; i < d; ++i) mean[i] += r->input[i] / static_cast<double>(train.size());
    for (const auto* r : train)
        for (std::size_t i = 0; i < d; ++i) sd[i] += std::pow(r->input[i] - mean[i], 2) / static_cast<double>(train.size());
    for (auto& s : sd) s = std::max(std::sqrt(s), 1e-8);

    std::vector<std::pair<double, std::size_t>> dist;
    for (std::size_t t = 0; t < train.size(); ++t) {
        double s = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            const double a = (x[i] - mean[i]) / sd[i], c = (train[t]->input[i] - mean[i]) / sd[i];
            s += (a - c) * (a - c);
        }
        dist.emplace_back(s, t);
    }
    std::sort(dist.begin(), dist.end());

    BruteKnn out;
    std::vector<double> votes(ds.label_names.size(), 0.0);
    double voters = 0.0, rank_sum = 0.0, ranked = 0.0;
    for (std::size_t n = 0; n < k; ++n) {
        const auto* r = train[dist[n].second];
        if (r->category) {
            votes[static_cast<std::size_t>(*r->category)] += 1.0;
            voters += 1.0;
        }
        if (r->rank) {
            rank_sum += *r->rank;
            ranked += 1.0;
        }
    }
    if (voters > 0.0) {
        for (auto& v : votes) v /= voters;
        out.votes = votes;
    }
    if (ranked > 0.0) {
        out.has_rank = true;
        out.rank = rank_sum / ranked;
    }
    return out;
}

std::vector<std::vector<std::size_t>> brute_confusion(const std::vector<int>& predicted, const std::vector<int>& truth,
                                                      std::size_t classes)
{
    std::vector<std::vector<std::size_t>> m(classes, std::vector<std::size_t>(classes, 0));
    for (std::size_t t = 0; t < classes; ++t)
        for (std::size_t p = 0; p < classes; ++p)
            for (std::size_t i = 0; i < truth.size(); ++i)
                if (truth[i] == static_cast<int>(t) && predicted[i] == static_cast<int>(p)) ++m[t][p];
    return m;
}

std::array<BruteQuartile, 4> brute_quartiles(const std::vector<double>& margins, const std::vector<bool>& correct)
{
    // Selection order: repeatedly take the smallest remaining margin, earliest index first.
    const std::size_t n = margins.size();
    std::vector<bool> taken(n, false);
    std::vector<std::size_t> order;
    for (std::size_t step = 0; step < n; ++step) {
        std::size_t best = n;
        for (std::size_t i = 0; i < n; ++i)
            if (!taken[i] && (best == n || margins[i] < margins[best])) best = i;
        taken[best] = true;
        order.push_back(best);
    }
    std::array<BruteQuartile, 4> q{};
    std::size_t pos = 0;
    for (std::size_t k = 0; k < 4; ++k) {
        q[k].count = n / 4 + (k < n % 4 ? 1 : 0);
        for (std::size_t j = 0; j < q[k].count; ++j, ++pos)
            if (correct[order[pos]]) ++q[k].correct;
    }
    return q;
}

BruteMetrics brute_evaluate(const Predictor& predict, const LabeledDataset& ds)
{
    BruteMetrics out;
    std::vector<int> pred, truth;
    std::vector<double> margins;
    std::vector<bool> correct;
    double sq = 0.0, ranked = 0.0;
    for (const auto& r : ds.rows) {
        if (r.split != Split::validation) continue;
        const auto p = predict(r.input);
        if (p.category && r.category) {
            const auto& pr = p.category->probs;
            std::size_t best = 0;
            for (std::size_t c = 1; c < pr.size(); ++c)
                if (pr[c] > pr[best]) best = c;
            double second = 0.0;
            for (std::size_t c = 0; c < pr.size(); ++c)
                if (c != best) second = std::max(second, pr[c]);
            pred.push_back(static_cast<int>(best));
            truth.push_back(*r.category);
            margins.push_back(pr[best] - second);
            correct.push_back(static_cast<int>(best) == *r.category);
        }
        if (p.rank && r.rank) {
            sq += (*p.rank - *r.rank) * (*p.rank - *r.rank);
            ranked += 1.0;
        }
    }
    std::size_t hits = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == truth[i];
    if (!pred.empty()) out.accuracy = static_cast<double>(hits) / static_cast<double>(pred.size());
    if (ranked > 0.0) out.rmse = std::sqrt(sq / ranked);
    out.confusion = brute_confusion(pred, truth, ds.label_names.size());
    if (pred.size() >= 4) out.quartiles = brute_quartiles(margins, correct);
    return out;
}

}  // namespace fixtures
