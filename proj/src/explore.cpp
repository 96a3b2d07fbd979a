#include "formlab/explore.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "formlab/csv.hpp"
#include "formlab/error.hpp"
#include "formlab/metrics.hpp"
#include "formlab/rng.hpp"

namespace formlab {

namespace {

Genotype with_dims(const Genotype& base, std::size_t i, double ui, std::size_t j, double uj)
{
    auto u = base.u;
    u[i] = ui;
    u[j] = uj;
    return validate_genotype(u).genotype;
}

void check_range(std::pair<double, double> r, const char* name)
{
    if (!std::isfinite(r.first) || !std::isfinite(r.second) || r.first < 0.0 || r.second > 1.0)
        throw ValidationError(std::string("sweep range for ") + name + " must lie within [0,1]");
    if (!(r.first < r.second)) throw ValidationError(std::string("degenerate sweep range for ") + name);
}

std::string fmt(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

}  // namespace

SweepGrid sweep_grid(const Genotype& base, std::size_t i, std::size_t j, std::pair<double, double> range_i,
                     std::pair<double, double> range_j, std::size_t resolution)
{
    if (i >= kGenotypeSize || j >= kGenotypeSize) throw ValidationError("sweep dimension out of range");
    if (i == j) throw ValidationError("sweep dimensions must differ");
    if (resolution < 2 || resolution > 64) throw ValidationError("sweep resolution must be in [2, 64]");
    check_range(range_i, "dim_i");
    check_range(range_j, "dim_j");

    SweepGrid g;
    g.base = base;
    g.dim_i = i;
    g.dim_j = j;
    g.range_i = range_i;
    g.range_j = range_j;
    g.resolution = resolution;
    g.cells.reserve(resolution * resolution);
    const double denom = static_cast<double>(resolution - 1);
    for (std::size_t r = 0; r < resolution; ++r) {
        const double uj = range_j.first + static_cast<double>(r) * (range_j.second - range_j.first) / denom;
        for (std::size_t c = 0; c < resolution; ++c) {
            const double ui = range_i.first + static_cast<double>(c) * (range_i.second - range_i.first) / denom;
            g.cells.push_back(with_dims(base, i, ui, j, uj));
        }
    }
    return g;
}

Image sweep_render(const SweepGrid& grid, std::uint64_t seed, int tile_resolution)
{
    const std::size_t r = grid.resolution;
    if (r < 2) throw ValidationError("sweep grid needs resolution >= 2");
    if (tile_resolution <= 0 || r * static_cast<std::size_t>(tile_resolution) > 8192)
        throw ValidationError("contact sheet exceeds 8192 pixels per side");
    const int tile = tile_resolution;
    const int side = static_cast<int>(r) * tile + static_cast<int>((r - 1) * kSweepSeparator);
    Image sheet(side, side, kSeparatorValue);
    for (std::size_t row = 0; row < r; ++row)
        for (std::size_t col = 0; col < r; ++col) {
            const Image img = render(grow(grid.cell(row, col), seed), tile);
            const int ox = static_cast<int>(col) * (tile + static_cast<int>(kSweepSeparator));
            const int oy = static_cast<int>(row) * (tile + static_cast<int>(kSweepSeparator));
            for (int y = 0; y < tile; ++y)
                std::copy_n(&img.pixels[static_cast<std::size_t>(y) * tile], tile,
                            &sheet.pixels[static_cast<std::size_t>(oy + y) * side + ox]);
        }
    return sheet;
}

Predictor mlp_predictor(const MlpModel& model)
{
    return [&model](std::span<const double> x) { return mlp_predict(model, x); };
}

CrossSection cross_section(const Predictor& predict, const std::vector<std::string>& label_names,
                           const SweepGrid& grid)
{
    CrossSection cs;
    cs.grid = grid;
    cs.label_names = label_names;
    const std::size_t n = grid.cells.size();
    cs.category.resize(n);
    cs.margin.assign(n, 0.0);
    cs.rank.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        const Prediction p = predict(grid.cells[k].u);
        if (p.category) {
            if (p.category->size() != label_names.size())
                throw ValidationError("predictor category count differs from the label set");
            cs.category[k] = p.category->argmax();
            cs.margin[k] = p.category->size() >= 2 ? confidence_margin(*p.category) : 1.0;
        }
        if (p.rank) cs.rank[k] = std::clamp(*p.rank, 0.0, 10.0);
    }
    return cs;
}

CrossSection cross_section(const MlpModel& model, const SweepGrid& grid)
{
    if (model.input_dim != kGenotypeSize)
        throw ValidationError("cross-section needs a genotype model (input dim 12), got " +
                              std::to_string(model.input_dim));
    return cross_section(mlp_predictor(model), model.label_names, grid);
}

std::string cross_section_csv(const CrossSection& cs)
{
    std::string out = "row,col,u_i,u_j,category,margin,rank\n";
    const std::size_t r = cs.grid.resolution;
    for (std::size_t row = 0; row < r; ++row)
        for (std::size_t col = 0; col < r; ++col) {
            const std::size_t k = row * r + col;
            const auto& g = cs.grid.cells[k];
            std::string cat;
            if (cs.category[k]) cat = cs.label_names.at(static_cast<std::size_t>(*cs.category[k]));
            out += csv::join({std::to_string(row), std::to_string(col), fmt(g.u[cs.grid.dim_i]),
                              fmt(g.u[cs.grid.dim_j]), cat, fmt(cs.margin[k]),
                              cs.rank[k] ? fmt(*cs.rank[k]) : ""});
            out += '\n';
        }
    return out;
}

std::vector<Transition> find_transitions(const CrossSection& cs)
{
    std::vector<Transition> out;
    const std::size_t r = cs.grid.resolution;
    auto consider = [&](std::size_t r0, std::size_t c0, std::size_t r1, std::size_t c1) {
        const auto& ca = cs.category[r0 * r + c0];
        const auto& cb = cs.category[r1 * r + c1];
        if (!ca || !cb || *ca == *cb) return;
        Transition t;
        t.a = {r0, c0};
        t.b = {r1, c1};
        t.category_a = *ca;
        t.category_b = *cb;
        std::array<double, kGenotypeSize> mid{};
        const auto& ga = cs.grid.cell(r0, c0);
        const auto& gb = cs.grid.cell(r1, c1);
        for (std::size_t d = 0; d < kGenotypeSize; ++d) mid[d] = 0.5 * (ga.u[d] + gb.u[d]);
        t.midpoint = validate_genotype(mid).genotype;
        out.push_back(std::move(t));
    };
    for (std::size_t row = 0; row < r; ++row)
        for (std::size_t col = 0; col < r; ++col) {
            if (col + 1 < r) consider(row, col, row, col + 1);
            if (row + 1 < r) consider(row, col, row + 1, col);
        }
    return out;
}

DescentResult boundary_descent(const MlpModel& model, const Genotype& start, std::size_t max_steps, double step)
{
    if (!model.has_classifier() || model.classes() < 2)
        throw ValidationError("boundary descent needs a classifier with at least two categories");
    if (model.input_dim != kGenotypeSize) throw ValidationError("boundary descent needs a genotype model");

    DescentResult res;
    res.genotype = start;
    std::array<double, kGenotypeSize> u = start.u;
    res.start_margin = res.margin = objective_value(model, u, Objective::margin());
    while (res.margin >= kBoundaryMargin && res.steps < max_steps) {
        const auto g = input_gradient(model, u, Objective::margin());
        double norm = 0.0;
        for (double v : g) norm += v * v;
        norm = std::sqrt(norm);
        if (norm == 0.0 || !std::isfinite(norm)) break;
        for (std::size_t d = 0; d < kGenotypeSize; ++d) u[d] = std::clamp(u[d] - step * g[d] / norm, 0.0, 1.0);
        ++res.steps;
        res.margin = objective_value(model, u, Objective::margin());
    }
    res.genotype = validate_genotype(u).genotype;
    res.converged = res.margin < kBoundaryMargin;
    return res;
}

SampleResult monte_carlo_sample(const Predictor& predict, const SampleCriteria& criteria, std::size_t n,
                                std::uint64_t seed)
{
    if (n < 1) throw ValidationError("sample size must be at least 1");
    SampleResult res;
    SplitMix64 rng(seed);
    const std::size_t budget = 1000 * n;
    while (res.candidates.size() < n && res.draws < budget) {
        std::array<double, kGenotypeSize> u{};
        for (auto& v : u) v = rng.uniform();
        ++res.draws;
        const Prediction p = predict(u);
        Candidate c;
        c.rank = p.rank;
        if (p.category) {
            c.category = p.category->argmax();
            c.margin = p.category->size() >= 2 ? confidence_margin(*p.category) : 1.0;
        }
        if (std::isfinite(criteria.min_rank) && (!c.rank || *c.rank < criteria.min_rank)) continue;
        if (criteria.category && c.category != criteria.category) continue;
        c.genotype = make_genotype(u);
        res.candidates.push_back(std::move(c));
    }
    if (res.candidates.size() < n)
        res.warnings.push_back("draw budget of " + std::to_string(budget) + " exhausted with " +
                               std::to_string(res.candidates.size()) + " of " + std::to_string(n) +
                               " candidates accepted");
    std::stable_sort(res.candidates.begin(), res.candidates.end(), [](const Candidate& a, const Candidate& b) {
        return a.rank.value_or(-1.0) > b.rank.value_or(-1.0);
    });
    return res;
}

std::vector<ClimbStep> hill_climb(const Predictor& predict, const Genotype& start, std::size_t iterations,
                                  double sigma, std::uint64_t seed)
{
    if (iterations < 1) throw ValidationError("hill climbing needs at least one iteration");
    if (!(sigma >= 0.0)) throw ValidationError("step sigma must be non-negative");
    auto rank_of = [&predict](std::span<const double> u) {
        const Prediction p = predict(u);
        if (!p.rank) throw ValidationError("hill climbing needs a model with a rank head");
        return *p.rank;
    };
    std::vector<ClimbStep> path{{start, rank_of(start.u), 0}};
    SplitMix64 rng(seed);
    for (std::size_t it = 1; it <= iterations; ++it) {
        std::array<double, kGenotypeSize> u = path.back().genotype.u;
        for (auto& v : u) v = std::clamp(v + sigma * rng.gaussian(), 0.0, 1.0);
        const double r = rank_of(u);
        if (r > path.back().rank) path.push_back({make_genotype(u), r, it});
    }
    return path;
}

std::vector<std::uint64_t> neighbors_in_layout(const EmbeddingLayout& layout, std::span<const std::uint64_t> ids,
                                               std::array<double, 2> point, double radius)
{
    if (layout.coords.empty()) throw ValidationError("layout is empty");
    if (ids.size() != layout.coords.size()) throw ValidationError("id count differs from layout size");
    std::vector<std::pair<double, std::size_t>> hits;
    for (std::size_t k = 0; k < ids.size(); ++k) {
        const double d = std::hypot(layout.coords[k][0] - point[0], layout.coords[k][1] - point[1]);
        if (d <= radius) hits.emplace_back(d, k);
    }
    std::sort(hits.begin(), hits.end());
    std::vector<std::uint64_t> out;
    out.reserve(hits.size());
    for (const auto& h : hits) out.push_back(ids[h.second]);
    return out;
}

}  // namespace formlab
