#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "formlab/dataset.hpp"
#include "formlab/embed.hpp"
#include "formlab/image.hpp"
#include "formlab/mlp.hpp"
#include "formlab/morphogen.hpp"

namespace formlab {

struct SweepGrid {
    Genotype base;
    std::size_t dim_i = 0;  ///< varies along columns
    std::size_t dim_j = 1;  ///< varies along rows
    std::pair<double, double> range_i{0.0, 1.0};
    std::pair<double, double> range_j{0.0, 1.0};
    std::size_t resolution = 0;
    std::vector<Genotype> cells;  ///< row-major, resolution x resolution

    const Genotype& cell(std::size_t r, std::size_t c) const { return cells[r * resolution + c]; }
};

inline constexpr std::size_t kSweepSeparator = 2;
inline constexpr std::uint8_t kSeparatorValue = 128;

SweepGrid sweep_grid(const Genotype& base, std::size_t i, std::size_t j, std::pair<double, double> range_i,
                     std::pair<double, double> range_j, std::size_t resolution);

/// Grows every cell with the same seed and tiles the renders row-major with
/// 2-pixel mid-gray separators.
Image sweep_render(const SweepGrid& grid, std::uint64_t seed, int tile_resolution);

struct CrossSection {
    SweepGrid grid;
    std::vector<std::string> label_names;
    std::vector<std::optional<int>> category;  ///< absent for a rank-only model
    std::vector<double> margin;                ///< 0 for a rank-only model
    std::vector<std::optional<double>> rank;   ///< absent for a category-only model
};

CrossSection cross_section(const Predictor& predict, const std::vector<std::string>& label_names,
                           const SweepGrid& grid);
CrossSection cross_section(const MlpModel& model, const SweepGrid& grid);

std::string cross_section_csv(const CrossSection& cs);

struct Transition {
    std::array<std::size_t, 2> a{};  ///< (row, col), earlier in row-major order
    std::array<std::size_t, 2> b{};
    int category_a = 0;
    int category_b = 0;
    Genotype midpoint;
};

/// Every 4-connected pair of cells whose predicted categories differ, each
/// reported once, ordered by the row-major index of its first cell (right
/// neighbour before lower neighbour).
std::vector<Transition> find_transitions(const CrossSection& cs);

struct DescentResult {
    Genotype genotype;
    double start_margin = 0.0;
    double margin = 0.0;
    std::size_t steps = 0;
    bool converged = false;  ///< margin fell below the threshold
};

inline constexpr double kBoundaryMargin = 0.02;

/// Steps a fixed distance along the normalized negative margin gradient,
/// projecting onto the unit box, until the margin drops below 0.02.
DescentResult boundary_descent(const MlpModel& model, const Genotype& start, std::size_t max_steps = 500,
                               double step = 0.01);

struct SampleCriteria {
    double min_rank = -std::numeric_limits<double>::infinity();
    std::optional<int> category;
};

struct Candidate {
    Genotype genotype;
    std::optional<double> rank;
    std::optional<int> category;
    double margin = 0.0;
};

struct SampleResult {
    std::vector<Candidate> candidates;  ///< sorted by predicted rank, descending
    std::size_t draws = 0;
    std::vector<std::string> warnings;
};

/// Draws uniform genotypes until n meet the criteria or 1000 * n draws are spent.
SampleResult monte_carlo_sample(const Predictor& predict, const SampleCriteria& criteria, std::size_t n,
                                std::uint64_t seed);

struct ClimbStep {
    Genotype genotype;
    double rank = 0.0;
    std::size_t iteration = 0;  ///< 0 for the start point
};

/// Gaussian perturbation hill climbing on predicted rank; only strict
/// improvements are accepted. Returns the accepted trajectory.
std::vector<ClimbStep> hill_climb(const Predictor& predict, const Genotype& start, std::size_t iterations,
                                  double sigma, std::uint64_t seed);

/// Ids whose layout point lies within `radius` of `point`, nearest first.
std::vector<std::uint64_t> neighbors_in_layout(const EmbeddingLayout& layout, std::span<const std::uint64_t> ids,
                                               std::array<double, 2> point, double radius);

/// Predictor over genotype u-vectors backed by an MLP.
Predictor mlp_predictor(const MlpModel& model);

}  // namespace formlab
