#pragma once

#include <array>
#include <string>
#include <vector>

#include "formlab/dataset.hpp"
#include "formlab/metrics.hpp"
#include "formlab/mlp.hpp"
#include "formlab/morphogen.hpp"

namespace fixtures {

std::string path(const std::string& name);
std::string read(const std::string& name);

/// Loads split,u0..u11,category,rank CSVs written by tests/oracles.
formlab::LabeledDataset load_planted(const std::string& name);

/// Two-class genotype model whose logit difference is w.u + b (class 1 minus
/// class 0), built from ReLU pairs so it is exactly linear everywhere.
formlab::MlpModel linear_logit_model(const std::array<double, 12>& w, double b);

/// Reference genotype for goldens: every parameter at 0.5.
formlab::Genotype reference_genotype();

/// Genotype with no food income (base rate and curvature bias both zero).
formlab::Genotype no_food_genotype();

// Independent recomputations used as oracles.

struct BruteKnn {
    std::vector<double> votes;  ///< empty when no neighbour has a category
    bool has_rank = false;
    double rank = 0.0;
};
BruteKnn brute_knn(const formlab::LabeledDataset& ds, std::size_t k, const std::vector<double>& x);

std::vector<std::vector<std::size_t>> brute_confusion(const std::vector<int>& predicted, const std::vector<int>& truth,
                                                      std::size_t classes);

struct BruteQuartile {
    std::size_t count = 0;
    std::size_t correct = 0;
};
std::array<BruteQuartile, 4> brute_quartiles(const std::vector<double>& margins, const std::vector<bool>& correct);

struct BruteMetrics {
    double accuracy = 0.0;
    double rmse = 0.0;
    std::vector<std::vector<std::size_t>> confusion;
    std::array<BruteQuartile, 4> quartiles{};
};
BruteMetrics brute_evaluate(const formlab::Predictor& predict, const formlab::LabeledDataset& ds);

}  // namespace fixtures
