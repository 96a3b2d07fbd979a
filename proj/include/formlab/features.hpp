#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "formlab/error.hpp"
#include "formlab/image.hpp"

namespace formlab {

enum class FeatureSource { builtin, imported };

struct FeatureVector {
    std::vector<double> values;
    FeatureSource source = FeatureSource::builtin;

    std::size_t dim() const { return values.size(); }
};

/// Block layout of the built-in descriptor.
namespace feature_layout {
inline constexpr std::size_t kIntensityBins = 64;
inline constexpr std::size_t kOrientationBins = 32;
inline constexpr std::size_t kRadialBins = 16;
inline constexpr std::size_t kScalars = 8;
inline constexpr std::size_t kIntensityOffset = 0;
inline constexpr std::size_t kOrientationOffset = kIntensityOffset + kIntensityBins;
inline constexpr std::size_t kRadialOffset = kOrientationOffset + kOrientationBins;
inline constexpr std::size_t kScalarOffset = kRadialOffset + kRadialBins;
inline constexpr std::size_t kDim = kScalarOffset + kScalars;  // 120
}  // namespace feature_layout

/// Built-in 120-d image descriptor:
///   [0,64)    intensity histogram, bin = pixel >> 2, sums to 1
///   [64,96)   Sobel orientation histogram over atan2(gy, gx) in [-pi, pi),
///             magnitude weighted, sums to 1 (all zero for a flat image)
///   [96,112)  ink (pixel/255) in 16 equal-area annuli about the image centre,
///             outer radius = half diagonal, sums to 1 (all zero without ink)
///   [112,120) ink fraction (pixels > 127), ink centroid x/W and y/H,
///             4*mu_xx/W^2, 4*mu_yy/H^2, 0.5 + 2*mu_xy/(W*H),
///             boundary pixel fraction, 4-connected component count / 255
///             (count capped at 255). Centroid defaults to 0.5 without ink.
FeatureVector extract_features(const Image& img);

/// Per-dimension z-scoring. std is the population deviation, floored at 1e-8.
struct Normalizer {
    static constexpr double kStdFloor = 1e-8;

    std::vector<double> mean;
    std::vector<double> std;

    std::size_t dim() const { return mean.size(); }
    static Normalizer identity(std::size_t dim);
};

Normalizer fit_normalizer(std::span<const FeatureVector> vectors);
Normalizer fit_normalizer(const std::vector<std::vector<double>>& rows);

std::vector<double> normalize(std::span<const double> v, const Normalizer& n);
std::vector<double> denormalize(std::span<const double> v, const Normalizer& n);
FeatureVector normalize(const FeatureVector& v, const Normalizer& n);
FeatureVector denormalize(const FeatureVector& v, const Normalizer& n);

/// Raised by the AEFV reader; kind() tells the failure modes apart.
class FeatureFileError : public FormatError {
public:
    enum class Kind { bad_magic, bad_version, truncated, id_mismatch, non_finite };
    FeatureFileError(Kind kind, const std::string& what) : FormatError(what), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

/// AEFV container: "AEFV", version 0x01, u32 count, u32 dim, then per record a
/// u64 id followed by dim f32 values. All integers and floats little-endian.
std::string encode_features(const std::map<std::uint64_t, FeatureVector>& vectors, std::size_t dim);
std::map<std::uint64_t, FeatureVector> decode_features(const std::string& bytes);

void export_features(const std::filesystem::path& path, const std::map<std::uint64_t, FeatureVector>& vectors,
                     std::size_t dim);

/// Reads an AEFV file. Every id in the file must be one of `expected_ids`
/// (unless that list is empty) and may appear only once; otherwise the read
/// fails with Kind::id_mismatch. Ids absent from the file are simply missing
/// from the result.
std::map<std::uint64_t, FeatureVector> import_features(const std::filesystem::path& path,
                                                       std::span<const std::uint64_t> expected_ids);

}  // namespace formlab
