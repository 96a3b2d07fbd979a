#include "formlab/morphogen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>

#include "formlab/error.hpp"
#include "formlab/rng.hpp"

namespace formlab {

const std::array<ParameterRange, kGenotypeSize> kParameterRanges = {{
    {"spring_stiffness", 0.0, 1.0},
    {"rest_length", 0.005, 0.02},
    {"repulsion_strength", 0.0, 1.0},
    {"repulsion_radius", 0.0, 4.0},
    {"smoothing", 0.0, 1.0},
    {"normal_push", -1.0, 1.0},
    {"food_base_rate", 0.0, 0.2},
    {"curvature_food_bias", -1.0, 1.0},
    {"split_threshold", 0.5, 5.0},
    {"damping", 0.5, 1.0},
    {"food_noise", 0.0, 1.0},
    {"duration", 0.0, 1.0},
}};

namespace {

constexpr double kDt = 0.1;
constexpr double kInitialRadius = 0.1;
constexpr double kWorldBound = 10.0;
constexpr double kLengthFloor = 1e-12;
constexpr double kSplitJitter = 0.1;  // in rest lengths

struct Vec2 {
    double x = 0.0, y = 0.0;
};
inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
inline Vec2& operator+=(Vec2& a, Vec2 b)
{
    a.x += b.x;
    a.y += b.y;
    return a;
}
inline double norm(Vec2 a) { return std::sqrt(a.x * a.x + a.y * a.y); }

struct Params {
    double stiffness, rest, repulsion, radius, smoothing, push;
    double food_base, food_curvature, split_threshold, damping, food_noise;
    std::size_t steps;
};

Params unpack(const Genotype& g)
{
    const auto& p = g.physical;
    return {p[0], p[1], p[2], p[3] * p[1], p[4], p[5], p[6], p[7], p[8], p[9], p[10], growth_steps(g)};
}

// Verlet neighbour list for the short-range repulsion. Pairs closer than
// radius + skin are cached and only rebuilt when the cell list changes or some
// cell has moved more than skin/2 since the last build, so every pair within
// the radius is always present. Pairs are generated in a fixed order and the
// forces summed in that order, which keeps the run bit-reproducible.
class NeighborList {
public:
    explicit NeighborList(double radius) : radius_(radius), skin_(0.5 * radius) {}

    void update(const std::vector<Vec2>& pos)
    {
        if (pos.size() == anchor_.size()) {
            const double limit = 0.25 * skin_ * skin_;
            bool stale = false;
            for (std::size_t i = 0; i < pos.size() && !stale; ++i) {
                const Vec2 d = pos[i] - anchor_[i];
                stale = d.x * d.x + d.y * d.y > limit;
            }
            if (!stale) return;
        }
        rebuild(pos);
    }

    // Kernel: strength * (1 - l^2/radius^2) * (p_i - p_j) for l < radius, a
    // smooth bump that vanishes at contact distance 0 and at the radius.
    void add_forces(const std::vector<Vec2>& pos, double strength, std::vector<Vec2>& force) const
    {
        const double inv_r2 = 1.0 / (radius_ * radius_);
        for (std::size_t i = 0; i + 1 < row_.size(); ++i) {
            const Vec2 pi = pos[i];
            double fx = 0.0, fy = 0.0;
            for (std::uint32_t k = row_[i]; k < row_[i + 1]; ++k) {
                const std::uint32_t j = cols_[k];
                const double dx = pi.x - pos[j].x, dy = pi.y - pos[j].y;
                const double w = strength * std::max(0.0, 1.0 - (dx * dx + dy * dy) * inv_r2);
                fx += w * dx;
                fy += w * dy;
                force[j].x -= w * dx;
                force[j].y -= w * dy;
            }
            force[i].x += fx;
            force[i].y += fy;
        }
    }

private:
    void rebuild(const std::vector<Vec2>& pos)
    {
        anchor_ = pos;
        cols_.clear();
        row_.assign(1, 0);
        const std::size_t n = pos.size();
        double minx = pos[0].x, miny = pos[0].y, maxx = pos[0].x, maxy = pos[0].y;
        for (const auto& p : pos) {
            minx = std::min(minx, p.x);
            miny = std::min(miny, p.y);
            maxx = std::max(maxx, p.x);
            maxy = std::max(maxy, p.y);
        }
        const double reach = radius_ + skin_;
        const double size = std::max({reach, (maxx - minx) / 1024.0, (maxy - miny) / 1024.0});
        const auto nx = static_cast<std::size_t>((maxx - minx) / size) + 1;
        const auto ny = static_cast<std::size_t>((maxy - miny) / size) + 1;

        std::vector<std::uint32_t> bucket(n), start(nx * ny + 1, 0), order(n);
        for (std::size_t i = 0; i < n; ++i) {
            const auto bx = std::min(nx - 1, static_cast<std::size_t>((pos[i].x - minx) / size));
            const auto by = std::min(ny - 1, static_cast<std::size_t>((pos[i].y - miny) / size));
            bucket[i] = static_cast<std::uint32_t>(by * nx + bx);
            ++start[bucket[i] + 1];
        }
        for (std::size_t b = 0; b < nx * ny; ++b) start[b + 1] += start[b];
        std::vector<std::uint32_t> fill(start.begin(), start.end() - 1);
        for (std::size_t i = 0; i < n; ++i) order[fill[bucket[i]]++] = static_cast<std::uint32_t>(i);

        const double reach2 = reach * reach;
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t bx = bucket[i] % nx, by = bucket[i] / nx;
            for (std::size_t y = (by > 0 ? by - 1 : 0); y <= std::min(by + 1, ny - 1); ++y) {
                for (std::size_t x = (bx > 0 ? bx - 1 : 0); x <= std::min(bx + 1, nx - 1); ++x) {
                    const std::size_t b = y * nx + x;
                    for (std::uint32_t k = start[b]; k < start[b + 1]; ++k) {
                        const std::uint32_t j = order[k];
                        if (j <= i) continue;
                        const Vec2 d = pos[i] - pos[j];
                        if (d.x * d.x + d.y * d.y < reach2) cols_.push_back(j);
                    }
                }
            }
            row_.push_back(static_cast<std::uint32_t>(cols_.size()));
        }
    }

    double radius_;
    double skin_;
    std::vector<Vec2> anchor_;
    std::vector<std::uint32_t> row_;   // CSR offsets, one row per cell
    std::vector<std::uint32_t> cols_;  // partners j > i
};

double turning_angle(Vec2 prev, Vec2 cur, Vec2 next)
{
    const Vec2 a = cur - prev, b = next - cur;
    const double cross = a.x * b.y - a.y * b.x;
    const double dot = a.x * b.x + a.y * b.y;
    if (cross == 0.0 && dot == 0.0) return 0.0;
    return std::abs(std::atan2(cross, dot));
}

}  // namespace

ValidatedGenotype validate_genotype(std::span<const double> raw)
{
    if (raw.size() != kGenotypeSize)
        throw ValidationError("genotype needs " + std::to_string(kGenotypeSize) + " parameters, got " +
                              std::to_string(raw.size()));
    ValidatedGenotype out;
    for (std::size_t i = 0; i < kGenotypeSize; ++i) {
        double v = raw[i];
        if (!std::isfinite(v)) throw ParameterError(i, "non-finite parameter " + std::to_string(i));
        if (v < 0.0 || v > 1.0) {
            v = std::clamp(v, 0.0, 1.0);
            out.clamped.push_back(i);
        }
        out.genotype.u[i] = v;
        const auto& r = kParameterRanges[i];
        out.genotype.physical[i] = r.lo + v * (r.hi - r.lo);
    }
    return out;
}

Genotype make_genotype(std::span<const double> u)
{
    auto v = validate_genotype(u);
    if (!v.clamped.empty())
        throw ParameterError(v.clamped.front(), "parameter " + std::to_string(v.clamped.front()) + " outside [0,1]");
    return v.genotype;
}

std::size_t growth_steps(const Genotype& g)
{
    return static_cast<std::size_t>(std::lround(100.0 + 1900.0 * g.physical[11]));
}

// PRNG consumption per step: one symmetric draw per cell (index order) for the
// food noise, then two symmetric draws per division (x then y jitter), in the
// order the divisions happen.
GrowthResult grow(const Genotype& g, std::uint64_t seed, std::size_t budget)
{
    if (budget < kInitialCells)
        throw ValidationError("cell budget must be at least " + std::to_string(kInitialCells));
    const Params p = unpack(g);
    SplitMix64 rng(seed);

    std::vector<Vec2> pos(kInitialCells), vel(kInitialCells);
    std::vector<double> food(kInitialCells, 0.0);
    for (std::size_t k = 0; k < kInitialCells; ++k) {
        const double a = 2.0 * std::numbers::pi * static_cast<double>(k) / kInitialCells;
        pos[k] = {kInitialRadius * std::cos(a), kInitialRadius * std::sin(a)};
    }

    GrowthResult res;
    res.rest_length = p.rest;
    res.count_history.push_back(pos.size());

    const bool repel = p.radius > 0.0 && p.repulsion > 0.0;
    NeighborList neighbors(p.radius);
    std::vector<Vec2> force, next_pos, next_vel;
    for (std::size_t step = 0; step < p.steps; ++step) {
        const std::size_t n = pos.size();
        force.assign(n, Vec2{});
        for (std::size_t i = 0; i < n; ++i) {
            const Vec2 prev = pos[(i + n - 1) % n], next = pos[(i + 1) % n], cur = pos[i];
            Vec2 f;
            for (const Vec2 nb : {prev, next}) {
                const Vec2 d = nb - cur;
                const double l = std::max(norm(d), kLengthFloor);
                f += (p.stiffness * (l - p.rest) / l) * d;
            }
            f += p.smoothing * (0.5 * (prev + next) - cur);
            const Vec2 t = next - prev;
            const double tl = norm(t);
            if (tl > kLengthFloor) f += (p.push * p.rest / tl) * Vec2{t.y, -t.x};
            force[i] = f;
        }
        if (repel) {
            neighbors.update(pos);
            neighbors.add_forces(pos, p.repulsion, force);
        }

        next_pos.resize(n);
        next_vel.resize(n);
        bool bad = false;
        for (std::size_t i = 0; i < n; ++i) {
            next_vel[i] = p.damping * vel[i] + kDt * force[i];
            next_pos[i] = pos[i] + kDt * next_vel[i];
            const auto& q = next_pos[i];
            if (!std::isfinite(q.x) || !std::isfinite(q.y) || std::abs(q.x) > kWorldBound ||
                std::abs(q.y) > kWorldBound)
                bad = true;
        }
        if (bad) {
            res.blow_up = true;
            break;
        }
        pos.swap(next_pos);
        vel.swap(next_vel);

        for (std::size_t i = 0; i < n; ++i) {
            const double angle = turning_angle(pos[(i + n - 1) % n], pos[i], pos[(i + 1) % n]);
            const double eta = rng.symmetric();
            const double income = std::max(0.0, p.food_base + p.food_curvature * angle);
            food[i] += income * (1.0 + p.food_noise * eta);
        }

        std::vector<Vec2> grown_pos, grown_vel;
        std::vector<double> grown_food;
        grown_pos.reserve(std::min(2 * n, budget));
        grown_vel.reserve(grown_pos.capacity());
        grown_food.reserve(grown_pos.capacity());
        std::size_t total = n;
        for (std::size_t i = 0; i < n; ++i) {
            const bool split = food[i] > p.split_threshold && total < budget;
            grown_pos.push_back(pos[i]);
            grown_vel.push_back(vel[i]);
            grown_food.push_back(split ? 0.0 : food[i]);
            if (!split) continue;
            const std::size_t j = (i + 1) % n;
            const double jx = rng.symmetric(), jy = rng.symmetric();
            const Vec2 mid = 0.5 * (pos[i] + pos[j]) + (kSplitJitter * p.rest) * Vec2{jx, jy};
            grown_pos.push_back(mid);
            grown_vel.push_back(0.5 * (vel[i] + vel[j]));
            grown_food.push_back(0.0);
            ++total;
        }
        pos.swap(grown_pos);
        vel.swap(grown_vel);
        food.swap(grown_food);
        res.steps_run = step + 1;
        res.count_history.push_back(pos.size());
        if (pos.size() >= budget) break;
    }

    res.cells.resize(pos.size());
    for (std::size_t i = 0; i < pos.size(); ++i) res.cells[i] = {pos[i].x, pos[i].y, food[i]};
    res.viable = !res.blow_up && res.cells.size() > kInitialCells;
    return res;
}

Image render(const GrowthResult& r, int resolution)
{
    if (resolution != 128 && resolution != 256 && resolution != 512)
        throw ValidationError("resolution must be 128, 256 or 512");
    constexpr int kSub = 4;
    const double scale = resolution / 2.0;  // pixels per world unit
    const double radius = 0.5 * r.rest_length * scale;
    const double r2 = radius * radius;
    std::vector<double> density(static_cast<std::size_t>(resolution) * resolution, 0.0);

    for (const auto& c : r.cells) {
        const double cx = (c.x + 1.0) * scale;
        const double cy = (1.0 - c.y) * scale;
        const int x0 = std::max(0, static_cast<int>(std::floor(cx - radius)));
        const int x1 = std::min(resolution - 1, static_cast<int>(std::floor(cx + radius)));
        const int y0 = std::max(0, static_cast<int>(std::floor(cy - radius)));
        const int y1 = std::min(resolution - 1, static_cast<int>(std::floor(cy + radius)));
        for (int py = y0; py <= y1; ++py) {
            for (int px = x0; px <= x1; ++px) {
                int hits = 0;
                for (int sy = 0; sy < kSub; ++sy) {
                    const double dy = py + (sy + 0.5) / kSub - cy;
                    for (int sx = 0; sx < kSub; ++sx) {
                        const double dx = px + (sx + 0.5) / kSub - cx;
                        if (dx * dx + dy * dy <= r2) ++hits;
                    }
                }
                density[static_cast<std::size_t>(py) * resolution + px] += static_cast<double>(hits) / (kSub * kSub);
            }
        }
    }

    Image img(resolution, resolution);
    for (std::size_t i = 0; i < density.size(); ++i)
        img.pixels[i] = static_cast<std::uint8_t>(std::lround(255.0 * (1.0 - std::exp(-density[i]))));
    return img;
}

bool classify_empty(const Image& img)
{
    const std::size_t total = img.pixels.size();
    if (total == 0) return true;
    const auto lit = static_cast<std::size_t>(std::count_if(img.pixels.begin(), img.pixels.end(),
                                                            [](std::uint8_t v) { return v > 127; }));
    // fraction < 0.005 or > 0.995, in exact integer arithmetic
    return lit * 1000 < 5 * total || lit * 1000 > 995 * total;
}

std::string serialize_growth(const GrowthResult& r)
{
    std::string out = "formlab-growth 1\n";
    char buf[128];
    std::snprintf(buf, sizeof buf, "steps_run %zu\nviable %d\nblow_up %d\nrest_length %.17g\ncells %zu\n", r.steps_run,
                  r.viable ? 1 : 0, r.blow_up ? 1 : 0, r.rest_length, r.cells.size());
    out += buf;
    for (const auto& c : r.cells) {
        std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g\n", c.x, c.y, c.food);
        out += buf;
    }
    return out;
}

GrowthResult parse_growth(const std::string& text)
{
    std::istringstream in(text);
    std::string tag;
    int version = 0;
    in >> tag >> version;
    if (tag != "formlab-growth" || version != 1) throw FormatError("not a growth record");
    GrowthResult r;
    int viable = 0, blow_up = 0;
    std::size_t n = 0;
    auto expect = [&in](const char* key) {
        std::string k;
        in >> k;
        if (k != key) throw FormatError(std::string("expected '") + key + "'");
    };
    expect("steps_run");
    in >> r.steps_run;
    expect("viable");
    in >> viable;
    expect("blow_up");
    in >> blow_up;
    expect("rest_length");
    in >> r.rest_length;
    expect("cells");
    in >> n;
    if (!in) throw FormatError("malformed growth header");
    r.viable = viable != 0;
    r.blow_up = blow_up != 0;
    r.cells.resize(n);
    for (auto& c : r.cells) {
        std::string sx, sy, sf;
        in >> sx >> sy >> sf;
        if (!in) throw FormatError("truncated cell list");
        c = {std::strtod(sx.c_str(), nullptr), std::strtod(sy.c_str(), nullptr), std::strtod(sf.c_str(), nullptr)};
    }
    return r;
}

}  // namespace formlab
