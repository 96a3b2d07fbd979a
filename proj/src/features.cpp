#include "formlab/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

namespace formlab {

namespace {

using namespace feature_layout;

constexpr int kLit = 127;  // strictly above mid-gray counts as ink

int count_components(const Image& img)
{
    const int w = img.width, h = img.height;
    std::vector<std::uint8_t> seen(img.pixels.size(), 0);
    std::vector<int> stack;
    int components = 0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::size_t idx = static_cast<std::size_t>(y) * w + x;
            if (seen[idx] || img.pixels[idx] <= kLit) continue;
            ++components;
            seen[idx] = 1;
            stack.assign(1, static_cast<int>(idx));
            while (!stack.empty()) {
                const int cur = stack.back();
                stack.pop_back();
                const int cx = cur % w, cy = cur / w;
                const int nbr[4][2] = {{cx - 1, cy}, {cx + 1, cy}, {cx, cy - 1}, {cx, cy + 1}};
                for (const auto& n : nbr) {
                    if (n[0] < 0 || n[0] >= w || n[1] < 0 || n[1] >= h) continue;
                    const std::size_t ni = static_cast<std::size_t>(n[1]) * w + n[0];
                    if (seen[ni] || img.pixels[ni] <= kLit) continue;
                    seen[ni] = 1;
                    stack.push_back(static_cast<int>(ni));
                }
            }
        }
    }
    return components;
}

void put_u32(std::string& out, std::uint32_t v)
{
    for (int s = 0; s < 32; s += 8) out.push_back(static_cast<char>((v >> s) & 0xFF));
}

void put_u64(std::string& out, std::uint64_t v)
{
    for (int s = 0; s < 64; s += 8) out.push_back(static_cast<char>((v >> s) & 0xFF));
}

template <typename T>
T get_le(const std::string& bytes, std::size_t& pos)
{
    if (pos + sizeof(T) > bytes.size())
        throw FeatureFileError(FeatureFileError::Kind::truncated, "feature file truncated at byte " + std::to_string(pos));
    std::uint64_t v = 0;
    for (std::size_t b = 0; b < sizeof(T); ++b)
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[pos + b])) << (8 * b);
    pos += sizeof(T);
    return static_cast<T>(v);
}

}  // namespace

FeatureVector extract_features(const Image& img)
{
    const int w = img.width, h = img.height;
    if (w <= 0 || h <= 0 || img.pixels.size() != static_cast<std::size_t>(w) * h)
        throw ValidationError("invalid image");
    FeatureVector out;
    out.values.assign(kDim, 0.0);
    auto& f = out.values;
    const double total = static_cast<double>(img.pixels.size());

    // intensity histogram
    std::vector<std::uint64_t> counts(kIntensityBins, 0);
    for (auto p : img.pixels) ++counts[p >> 2];
    for (std::size_t b = 0; b < kIntensityBins; ++b) f[kIntensityOffset + b] = static_cast<double>(counts[b]) / total;

    // Sobel orientation histogram, clamp-to-edge borders
    auto px = [&](int x, int y) {
        return static_cast<int>(img.at(std::clamp(x, 0, w - 1), std::clamp(y, 0, h - 1)));
    };
    double mag_total = 0.0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const int gx = (px(x + 1, y - 1) + 2 * px(x + 1, y) + px(x + 1, y + 1)) -
                           (px(x - 1, y - 1) + 2 * px(x - 1, y) + px(x - 1, y + 1));
            const int gy = (px(x - 1, y + 1) + 2 * px(x, y + 1) + px(x + 1, y + 1)) -
                           (px(x - 1, y - 1) + 2 * px(x, y - 1) + px(x + 1, y - 1));
            if (gx == 0 && gy == 0) continue;
            const double mag = std::sqrt(static_cast<double>(gx * gx + gy * gy));
            const double theta = std::atan2(static_cast<double>(gy), static_cast<double>(gx));
            auto bin = static_cast<std::size_t>(std::floor((theta + std::numbers::pi) / (2.0 * std::numbers::pi) *
                                                           static_cast<double>(kOrientationBins)));
            if (bin >= kOrientationBins) bin = 0;  // theta == pi folds onto -pi
            f[kOrientationOffset + bin] += mag;
            mag_total += mag;
        }
    }
    if (mag_total > 0.0)
        for (std::size_t b = 0; b < kOrientationBins; ++b) f[kOrientationOffset + b] /= mag_total;

    // radial ink density and moments; ink sums are exact integers
    const double half_w = w / 2.0, half_h = h / 2.0;
    const double rmax2 = half_w * half_w + half_h * half_h;
    std::vector<std::uint64_t> ring(kRadialBins, 0);
    std::uint64_t ink = 0, lit = 0, boundary = 0;
    double sx = 0.0, sy = 0.0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::uint8_t p = img.at(x, y);
            if (p > kLit) {
                ++lit;
                const bool edge = x == 0 || y == 0 || x == w - 1 || y == h - 1 || img.at(x - 1, y) <= kLit ||
                                  img.at(x + 1, y) <= kLit || img.at(x, y - 1) <= kLit || img.at(x, y + 1) <= kLit;
                if (edge) ++boundary;
            }
            if (p == 0) continue;
            const double dx = x + 0.5 - half_w, dy = y + 0.5 - half_h;
            auto bin = static_cast<std::size_t>((dx * dx + dy * dy) / rmax2 * static_cast<double>(kRadialBins));
            ring[std::min(bin, kRadialBins - 1)] += p;
            ink += p;
            sx += p * (x + 0.5);
            sy += p * (y + 0.5);
        }
    }
    if (ink > 0)
        for (std::size_t b = 0; b < kRadialBins; ++b)
            f[kRadialOffset + b] = static_cast<double>(ring[b]) / static_cast<double>(ink);

    double cx = half_w, cy = half_h, mxx = 0.0, myy = 0.0, mxy = 0.0;
    if (ink > 0) {
        const double wsum = static_cast<double>(ink);
        cx = sx / wsum;
        cy = sy / wsum;
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const std::uint8_t p = img.at(x, y);
                if (p == 0) continue;
                const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
                mxx += p * dx * dx;
                myy += p * dy * dy;
                mxy += p * dx * dy;
            }
        }
        mxx /= wsum;
        myy /= wsum;
        mxy /= wsum;
    }
    double* s = &f[kScalarOffset];
    s[0] = static_cast<double>(lit) / total;
    s[1] = cx / w;
    s[2] = cy / h;
    s[3] = std::min(1.0, 4.0 * mxx / (static_cast<double>(w) * w));
    s[4] = std::min(1.0, 4.0 * myy / (static_cast<double>(h) * h));
    s[5] = std::clamp(0.5 + 2.0 * mxy / (static_cast<double>(w) * h), 0.0, 1.0);
    s[6] = static_cast<double>(boundary) / total;
    s[7] = std::min(count_components(img), 255) / 255.0;
    return out;
}

Normalizer Normalizer::identity(std::size_t dim)
{
    return {std::vector<double>(dim, 0.0), std::vector<double>(dim, 1.0)};
}

Normalizer fit_normalizer(const std::vector<std::vector<double>>& rows)
{
    if (rows.empty()) throw ValidationError("cannot fit a normalizer on zero vectors");
    const std::size_t d = rows.front().size();
    for (const auto& r : rows)
        if (r.size() != d) throw ValidationError("mixed vector dimensions in normalizer fit");
    Normalizer n{std::vector<double>(d, 0.0), std::vector<double>(d, 0.0)};
    const double count = static_cast<double>(rows.size());
    for (const auto& r : rows)
        for (std::size_t i = 0; i < d; ++i) n.mean[i] += r[i];
    for (auto& m : n.mean) m /= count;
    for (const auto& r : rows)
        for (std::size_t i = 0; i < d; ++i) n.std[i] += (r[i] - n.mean[i]) * (r[i] - n.mean[i]);
    for (auto& s : n.std) s = std::max(std::sqrt(s / count), Normalizer::kStdFloor);
    return n;
}

Normalizer fit_normalizer(std::span<const FeatureVector> vectors)
{
    std::vector<std::vector<double>> rows;
    rows.reserve(vectors.size());
    for (const auto& v : vectors) rows.push_back(v.values);
    return fit_normalizer(rows);
}

std::vector<double> normalize(std::span<const double> v, const Normalizer& n)
{
    if (v.size() != n.dim())
        throw ValidationError("normalizer expects dim " + std::to_string(n.dim()) + ", got " + std::to_string(v.size()));
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - n.mean[i]) / n.std[i];
    return out;
}

std::vector<double> denormalize(std::span<const double> v, const Normalizer& n)
{
    if (v.size() != n.dim())
        throw ValidationError("normalizer expects dim " + std::to_string(n.dim()) + ", got " + std::to_string(v.size()));
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] * n.std[i] + n.mean[i];
    return out;
}

FeatureVector normalize(const FeatureVector& v, const Normalizer& n) { return {normalize(v.values, n), v.source}; }

FeatureVector denormalize(const FeatureVector& v, const Normalizer& n) { return {denormalize(v.values, n), v.source}; }

std::string encode_features(const std::map<std::uint64_t, FeatureVector>& vectors, std::size_t dim)
{
    std::string out = "AEFV";
    out.push_back('\x01');
    put_u32(out, static_cast<std::uint32_t>(vectors.size()));
    put_u32(out, static_cast<std::uint32_t>(dim));
    for (const auto& [id, v] : vectors) {
        if (v.dim() != dim) throw ValidationError("feature vector " + std::to_string(id) + " has wrong dimension");
        put_u64(out, id);
        for (double x : v.values) {
            const float fx = static_cast<float>(x);
            std::uint32_t bits;
            std::memcpy(&bits, &fx, sizeof bits);
            put_u32(out, bits);
        }
    }
    return out;
}

std::map<std::uint64_t, FeatureVector> decode_features(const std::string& bytes)
{
    using Kind = FeatureFileError::Kind;
    if (bytes.size() < 4 || bytes.compare(0, 4, "AEFV") != 0) throw FeatureFileError(Kind::bad_magic, "not an AEFV file");
    if (bytes.size() < 5) throw FeatureFileError(Kind::truncated, "feature file truncated in header");
    if (bytes[4] != '\x01') throw FeatureFileError(Kind::bad_version, "unsupported AEFV version");
    std::size_t pos = 5;
    const auto count = get_le<std::uint32_t>(bytes, pos);
    const auto dim = get_le<std::uint32_t>(bytes, pos);
    std::map<std::uint64_t, FeatureVector> out;
    for (std::uint32_t r = 0; r < count; ++r) {
        const auto id = get_le<std::uint64_t>(bytes, pos);
        FeatureVector v;
        v.source = FeatureSource::imported;
        v.values.resize(dim);
        for (auto& x : v.values) {
            const auto bits = get_le<std::uint32_t>(bytes, pos);
            float fx;
            std::memcpy(&fx, &bits, sizeof fx);
            if (!std::isfinite(fx))
                throw FeatureFileError(Kind::non_finite, "non-finite value for record " + std::to_string(id));
            x = fx;
        }
        if (!out.emplace(id, std::move(v)).second)
            throw FeatureFileError(Kind::id_mismatch, "duplicate record id " + std::to_string(id));
    }
    return out;
}

void export_features(const std::filesystem::path& path, const std::map<std::uint64_t, FeatureVector>& vectors,
                     std::size_t dim)
{
    const std::string bytes = encode_features(vectors, dim);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw StoreError("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::map<std::uint64_t, FeatureVector> import_features(const std::filesystem::path& path,
                                                       std::span<const std::uint64_t> expected_ids)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw StoreError("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    auto out = decode_features(ss.str());
    if (!expected_ids.empty()) {
        const std::set<std::uint64_t> expected(expected_ids.begin(), expected_ids.end());
        for (const auto& [id, v] : out)
            if (!expected.contains(id))
                throw FeatureFileError(FeatureFileError::Kind::id_mismatch, "unknown record id " + std::to_string(id));
    }
    return out;
}

}  // namespace formlab
