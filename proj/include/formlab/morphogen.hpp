#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "formlab/image.hpp"

namespace formlab {

inline constexpr std::size_t kGenotypeSize = 12;
inline constexpr std::size_t kInitialCells = 16;
inline constexpr std::size_t kDefaultCellBudget = 4096;
inline constexpr int kDefaultResolution = 256;

/// One entry of the parameter range table: physical = lo + u * (hi - lo).
struct ParameterRange {
    std::string_view name;
    double lo;
    double hi;
};

/// The 12 growth parameters, in genotype order.
///
///   0 spring_stiffness       loop-neighbour spring constant
///   1 rest_length            spring rest length, world units
///   2 repulsion_strength
///   3 repulsion_radius       multiple of rest_length
///   4 smoothing              pull toward the neighbour midpoint
///   5 normal_push            signed push along the outward normal
///   6 food_base_rate         food per step
///   7 curvature_food_bias    food per radian of turning angle
///   8 split_threshold        food needed to divide
///   9 damping                velocity retention per step
///  10 food_noise             relative jitter on food income
///  11 duration              steps = round(100 + 1900 * duration)
extern const std::array<ParameterRange, kGenotypeSize> kParameterRanges;

struct Genotype {
    std::array<double, kGenotypeSize> u{};         ///< normalized, in [0,1]
    std::array<double, kGenotypeSize> physical{};  ///< mapped through kParameterRanges

    bool operator==(const Genotype&) const = default;
};

struct ValidatedGenotype {
    Genotype genotype;
    std::vector<std::size_t> clamped;  ///< indices that were pulled back into [0,1]
};

/// Clamps to the unit box and maps to physical values. Throws ParameterError on
/// a non-finite entry or ValidationError on wrong arity.
ValidatedGenotype validate_genotype(std::span<const double> raw);

/// Convenience for already-in-box vectors (throws if clamping would be needed).
Genotype make_genotype(std::span<const double> u);

struct Cell {
    double x = 0.0;
    double y = 0.0;
    double food = 0.0;

    bool operator==(const Cell&) const = default;
};

struct GrowthResult {
    std::vector<Cell> cells;
    std::size_t steps_run = 0;
    bool viable = false;   ///< grew past the initial ring without blowing up
    bool blow_up = false;  ///< halted on a non-finite or out-of-bounds coordinate
    double rest_length = 0.0;

    /// Number of cells after each completed step (index 0 is the initial ring).
    std::vector<std::size_t> count_history;

    std::size_t cell_count() const { return cells.size(); }
};

/// Total simulation steps for a genotype.
std::size_t growth_steps(const Genotype& g);

/// Runs the 2D differential-growth system. Deterministic in (g, seed, budget).
GrowthResult grow(const Genotype& g, std::uint64_t seed, std::size_t budget = kDefaultCellBudget);

/// Splats cells as disks of radius rest_length/2 over the world window
/// [-1,1]^2 (y up) and tone-maps accumulated coverage with 255*(1-exp(-d)).
Image render(const GrowthResult& r, int resolution = kDefaultResolution);

/// True when fewer than 0.5% or more than 99.5% of pixels are above mid-gray.
bool classify_empty(const Image& img);

/// Line-based text form used for golden fixtures.
std::string serialize_growth(const GrowthResult& r);
GrowthResult parse_growth(const std::string& text);

}  // namespace formlab
