#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace formlab {

/// Row-major point set: one inner vector per point.
using PointSet = std::vector<std::vector<double>>;

enum class EmbedMethod { tsne, pca };
enum class SourceSpace { genotype, feature };

std::string to_string(EmbedMethod m);
std::string to_string(SourceSpace s);

struct TsneParams {
    double perplexity = 30.0;
    std::size_t iterations = 1000;
    std::uint64_t seed = 0;
    double exaggeration = 12.0;
    std::size_t exaggeration_iterations = 250;
    double learning_rate = 200.0;
    double initial_momentum = 0.5;
    double final_momentum = 0.8;
    std::size_t momentum_switch = 250;
};

struct EmbeddingLayout {
    std::vector<std::array<double, 2>> coords;
    EmbedMethod method = EmbedMethod::pca;
    SourceSpace space = SourceSpace::genotype;
    TsneParams params;               ///< meaningful for t-SNE only
    std::vector<double> kl_history;  ///< KL(P||Q) after each t-SNE iteration
};

/// Projection of the centred data onto the two leading covariance
/// eigenvectors, found by power iteration with deflation (1000 iterations,
/// tolerance 1e-10). Each eigenvector is signed so its largest-magnitude
/// component is positive. Throws for N < 2 or d < 2.
EmbeddingLayout pca2(const PointSet& x);

/// Leading eigenpairs as computed by pca2 (vectors are unit length).
struct PrincipalAxes {
    std::array<std::vector<double>, 2> vectors;
    std::array<double, 2> variances{};
    std::vector<double> mean;
};
PrincipalAxes principal_axes(const PointSet& x);

/// Row-conditional affinities p(j|i) (N x N, row-major) from Gaussian kernels
/// whose precision is bisected (at most 50 steps) until |ln(perplexity_i) -
/// ln(target)| < 1e-5. Optionally reports each row's achieved perplexity.
std::vector<double> conditional_affinities(const PointSet& x, double perplexity,
                                           std::vector<double>* row_perplexity = nullptr);

/// Symmetrized joint affinities (p(j|i) + p(i|j)) / 2N.
std::vector<double> joint_affinities(const PointSet& x, double perplexity);

/// KL(P || Q) for a layout, Q from the Student-t kernel (floored at 1e-12).
double kl_divergence(const std::vector<double>& p, const std::vector<std::array<double, 2>>& y);

/// Exact t-SNE. Requires 1 < perplexity < N/3 and N <= 5000.
EmbeddingLayout tsne(const PointSet& x, const TsneParams& params = {});

struct LayoutPoint {
    std::uint64_t id = 0;
    std::optional<std::string> category;
    std::optional<int> rank;
};

/// Five display bands for the 0-10 rank scale: 0-1, 2-3, 4-5, 6-7, 8-10.
int score_band(int rank);

/// CSV "id,x,y,category,rank"; coordinates printed with 12 significant digits;
/// absent category or rank leaves the field empty.
std::string layout_csv(const EmbeddingLayout& layout, const std::vector<LayoutPoint>& points);

struct LayoutRow {
    LayoutPoint point;
    double x = 0.0;
    double y = 0.0;
};
std::vector<LayoutRow> parse_layout_csv(const std::string& text);

}  // namespace formlab
