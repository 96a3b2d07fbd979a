#include "formlab/embed.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "formlab/csv.hpp"
#include "formlab/error.hpp"
#include "formlab/rng.hpp"

namespace formlab {

namespace {

constexpr std::size_t kPowerIterations = 1000;
constexpr double kPowerTolerance = 1e-10;
constexpr int kBisectionSteps = 50;
constexpr double kPerplexityTolerance = 1e-5;
constexpr double kQFloor = 1e-12;

void check_points(const PointSet& x)
{
    const std::size_t d = x.empty() ? 0 : x.front().size();
    for (const auto& row : x) {
        if (row.size() != d) throw ValidationError("ragged point set");
        for (double v : row)
            if (!std::isfinite(v)) throw ValidationError("non-finite coordinate in point set");
    }
}

std::vector<double> squared_distances(const PointSet& x)
{
    const std::size_t n = x.size();
    std::vector<double> d(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < x[i].size(); ++k) {
                const double t = x[i][k] - x[j][k];
                s += t * t;
            }
            d[i * n + j] = d[j * n + i] = s;
        }
    return d;
}

// Unit leading eigenvector of a symmetric PSD matrix; returns its eigenvalue.
double power_iteration(const std::vector<double>& c, std::size_t d, std::vector<double>& v)
{
    SplitMix64 rng(0x5eed);
    v.resize(d);
    double len = 0.0;
    for (auto& e : v) {
        e = rng.symmetric() + 2.0;  // strictly positive start avoids exact orthogonality in symmetric setups
        len += e * e;
    }
    len = std::sqrt(len);
    for (auto& e : v) e /= len;

    std::vector<double> w(d);
    double lambda = 0.0;
    for (std::size_t it = 0; it < kPowerIterations; ++it) {
        for (std::size_t r = 0; r < d; ++r) {
            double s = 0.0;
            for (std::size_t k = 0; k < d; ++k) s += c[r * d + k] * v[k];
            w[r] = s;
        }
        double norm = 0.0;
        for (double e : w) norm += e * e;
        norm = std::sqrt(norm);
        if (norm == 0.0) return 0.0;
        double change = 0.0;
        for (std::size_t r = 0; r < d; ++r) {
            const double nv = w[r] / norm;
            change = std::max(change, std::abs(nv - v[r]));
            v[r] = nv;
        }
        lambda = norm;
        if (change < kPowerTolerance) break;
    }
    return lambda;
}

void fix_sign(std::vector<double>& v)
{
    std::size_t arg = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (std::abs(v[i]) > std::abs(v[arg])) arg = i;
    if (v[arg] < 0.0)
        for (auto& e : v) e = -e;
}

std::string fmt12(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

}  // namespace

std::string to_string(EmbedMethod m) { return m == EmbedMethod::tsne ? "tsne" : "pca"; }
std::string to_string(SourceSpace s) { return s == SourceSpace::genotype ? "genotype" : "feature"; }

PrincipalAxes principal_axes(const PointSet& x)
{
    check_points(x);
    if (x.size() < 2) throw ValidationError("PCA needs at least two points");
    const std::size_t n = x.size(), d = x.front().size();
    if (d < 2) throw ValidationError("PCA needs at least two dimensions");

    PrincipalAxes axes;
    axes.mean.assign(d, 0.0);
    for (const auto& row : x)
        for (std::size_t k = 0; k < d; ++k) axes.mean[k] += row[k];
    for (auto& m : axes.mean) m /= static_cast<double>(n);

    std::vector<double> cov(d * d, 0.0);
    for (const auto& row : x)
        for (std::size_t a = 0; a < d; ++a) {
            const double da = row[a] - axes.mean[a];
            for (std::size_t b = a; b < d; ++b) cov[a * d + b] += da * (row[b] - axes.mean[b]);
        }
    for (std::size_t a = 0; a < d; ++a)
        for (std::size_t b = a; b < d; ++b) {
            cov[a * d + b] /= static_cast<double>(n);
            cov[b * d + a] = cov[a * d + b];
        }

    for (std::size_t c = 0; c < 2; ++c) {
        auto& v = axes.vectors[c];
        const double lambda = power_iteration(cov, d, v);
        if (lambda == 0.0) {
            v.assign(d, 0.0);
            axes.variances[c] = 0.0;
            continue;
        }
        fix_sign(v);
        axes.variances[c] = lambda;
        for (std::size_t a = 0; a < d; ++a)
            for (std::size_t b = 0; b < d; ++b) cov[a * d + b] -= lambda * v[a] * v[b];
    }
    return axes;
}

EmbeddingLayout pca2(const PointSet& x)
{
    const auto axes = principal_axes(x);
    EmbeddingLayout out;
    out.method = EmbedMethod::pca;
    out.coords.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        for (std::size_t c = 0; c < 2; ++c) {
            double s = 0.0;
            for (std::size_t k = 0; k < axes.mean.size(); ++k) s += (x[i][k] - axes.mean[k]) * axes.vectors[c][k];
            out.coords[i][c] = s;
        }
    }
    return out;
}

std::vector<double> conditional_affinities(const PointSet& x, double perplexity, std::vector<double>* row_perplexity)
{
    check_points(x);
    const std::size_t n = x.size();
    const auto dist = squared_distances(x);
    const double target = std::log(perplexity);
    std::vector<double> p(n * n, 0.0);
    if (row_perplexity) row_perplexity->assign(n, 0.0);

    for (std::size_t i = 0; i < n; ++i) {
        const double* d = &dist[i * n];
        double dmin = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) dmin = std::min(dmin, d[j]);
        double beta = 1.0, lo = 0.0, hi = std::numeric_limits<double>::infinity();
        double* row = &p[i * n];
        double entropy = 0.0;
        for (int step = 0; step < kBisectionSteps; ++step) {
            double sum = 0.0, weighted = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i) continue;
                const double shifted = d[j] - dmin;
                row[j] = std::exp(-beta * shifted);
                sum += row[j];
                weighted += shifted * row[j];
            }
            entropy = std::log(sum) + beta * weighted / sum;
            for (std::size_t j = 0; j < n; ++j) row[j] /= sum;
            const double diff = entropy - target;
            if (std::abs(diff) < kPerplexityTolerance) break;
            if (diff > 0.0) {
                lo = beta;
                beta = std::isinf(hi) ? beta * 2.0 : 0.5 * (beta + hi);
            } else {
                hi = beta;
                beta = 0.5 * (beta + lo);
            }
        }
        row[i] = 0.0;
        if (row_perplexity) (*row_perplexity)[i] = std::exp(entropy);
    }
    return p;
}

std::vector<double> joint_affinities(const PointSet& x, double perplexity)
{
    auto p = conditional_affinities(x, perplexity);
    const std::size_t n = x.size();
    std::vector<double> joint(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) joint[i * n + j] = (p[i * n + j] + p[j * n + i]) / (2.0 * static_cast<double>(n));
    return joint;
}

double kl_divergence(const std::vector<double>& p, const std::vector<std::array<double, 2>>& y)
{
    const std::size_t n = y.size();
    std::vector<double> num(n * n, 0.0);
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double dx = y[i][0] - y[j][0], dy = y[i][1] - y[j][1];
            const double q = 1.0 / (1.0 + dx * dx + dy * dy);
            num[i * n + j] = num[j * n + i] = q;
            z += 2.0 * q;
        }
    double kl = 0.0;
    for (std::size_t k = 0; k < n * n; ++k) {
        if (p[k] <= 0.0) continue;
        kl += p[k] * std::log(p[k] / std::max(num[k] / z, kQFloor));
    }
    return kl;
}

EmbeddingLayout tsne(const PointSet& x, const TsneParams& params)
{
    check_points(x);
    const std::size_t n = x.size();
    if (n > 5000) throw ValidationError("exact t-SNE is limited to 5000 points");
    if (!(params.perplexity > 1.0) || !(params.perplexity < static_cast<double>(n) / 3.0))
        throw ValidationError("perplexity must satisfy 1 < perplexity < N/3");

    const auto p = joint_affinities(x, params.perplexity);
    EmbeddingLayout out;
    out.method = EmbedMethod::tsne;
    out.params = params;

    SplitMix64 rng(params.seed);
    std::vector<std::array<double, 2>> y(n), update(n, {0.0, 0.0}), grad(n);
    for (auto& pt : y) {
        pt[0] = 1e-4 * rng.gaussian();
        pt[1] = 1e-4 * rng.gaussian();
    }

    std::vector<double> num(n * n, 0.0);
    for (std::size_t it = 0; it < params.iterations; ++it) {
        const double exaggeration = it < params.exaggeration_iterations ? params.exaggeration : 1.0;
        const double momentum = it < params.momentum_switch ? params.initial_momentum : params.final_momentum;

        double z = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) {
                const double dx = y[i][0] - y[j][0], dy = y[i][1] - y[j][1];
                const double q = 1.0 / (1.0 + dx * dx + dy * dy);
                num[i * n + j] = num[j * n + i] = q;
                z += 2.0 * q;
            }
        for (std::size_t i = 0; i < n; ++i) {
            double gx = 0.0, gy = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i) continue;
                const double q = num[i * n + j];
                const double coeff = (exaggeration * p[i * n + j] - q / z) * q;
                gx += coeff * (y[i][0] - y[j][0]);
                gy += coeff * (y[i][1] - y[j][1]);
            }
            grad[i] = {4.0 * gx, 4.0 * gy};
        }
        double mx = 0.0, my = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            for (int c = 0; c < 2; ++c) {
                update[i][c] = momentum * update[i][c] - params.learning_rate * grad[i][c];
                y[i][c] += update[i][c];
            }
            mx += y[i][0];
            my += y[i][1];
        }
        mx /= static_cast<double>(n);
        my /= static_cast<double>(n);
        for (auto& pt : y) {
            pt[0] -= mx;
            pt[1] -= my;
        }
        out.kl_history.push_back(kl_divergence(p, y));
    }
    out.coords = std::move(y);
    return out;
}

int score_band(int rank)
{
    if (rank < 0 || rank > 10) throw ValidationError("rank outside [0,10]");
    return rank >= 8 ? 4 : rank / 2;
}

std::string layout_csv(const EmbeddingLayout& layout, const std::vector<LayoutPoint>& points)
{
    if (points.size() != layout.coords.size()) throw ValidationError("layout and metadata row counts differ");
    std::string out = "id,x,y,category,rank\n";
    for (std::size_t i = 0; i < points.size(); ++i) {
        const auto& pt = points[i];
        out += csv::join({std::to_string(pt.id), fmt12(layout.coords[i][0]), fmt12(layout.coords[i][1]),
                          pt.category.value_or(""), pt.rank ? std::to_string(*pt.rank) : ""});
        out += '\n';
    }
    return out;
}

std::vector<LayoutRow> parse_layout_csv(const std::string& text)
{
    const auto rows = csv::parse(text);
    if (rows.empty() || rows.front() != std::vector<std::string>{"id", "x", "y", "category", "rank"})
        throw FormatError("layout CSV header mismatch");
    std::vector<LayoutRow> out;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& f = rows[r];
        if (f.size() != 5) throw FormatError("layout CSV row " + std::to_string(r) + " has wrong field count");
        LayoutRow row;
        row.point.id = std::stoull(f[0]);
        row.x = std::stod(f[1]);
        row.y = std::stod(f[2]);
        if (!f[3].empty()) row.point.category = f[3];
        if (!f[4].empty()) row.point.rank = std::stoi(f[4]);
        out.push_back(std::move(row));
    }
    return out;
}

}  // namespace formlab
