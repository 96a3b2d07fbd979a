#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "fixtures.hpp"
#include "formlab/features.hpp"
#include "formlab/rng.hpp"

using namespace formlab;

namespace {

std::vector<double> golden_vector()
{
    std::istringstream in(fixtures::read("checkerboard_features.txt"));
    std::vector<double> v;
    double x;
    while (in >> x) v.push_back(x);
    return v;
}

double block_sum(const FeatureVector& f, std::size_t off, std::size_t n)
{
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += f.values[off + i];
    return s;
}

}  // namespace

TEST_SUITE("features")
{
    using namespace feature_layout;

    TEST_CASE("checkerboard matches the reference evaluation")
    {
        const Image img = read_pgm(fixtures::path("checkerboard.pgm"));
        const auto f = extract_features(img);
        const auto ref = golden_vector();
        REQUIRE(ref.size() == kDim);
        REQUIRE(f.dim() == kDim);
        for (std::size_t i = 0; i < kDim; ++i) {
            INFO("component " << i);
            CHECK(f.values[i] == doctest::Approx(ref[i]).epsilon(1e-12).scale(1.0));
        }
        CHECK(block_sum(f, kIntensityOffset, kIntensityBins) == doctest::Approx(1.0));
        CHECK(block_sum(f, kOrientationOffset, kOrientationBins) == doctest::Approx(1.0));
        CHECK(block_sum(f, kRadialOffset, kRadialBins) == doctest::Approx(1.0));
    }

    TEST_CASE("constant black image")
    {
        const auto f = extract_features(Image(64, 64, 0));
        CHECK(f.values[kIntensityOffset] == 1.0);
        CHECK(block_sum(f, kOrientationOffset, kOrientationBins) == 0.0);
        CHECK(f.values[kScalarOffset] == 0.0);
        CHECK(f.values[kScalarOffset + 1] == 0.5);
        CHECK(f.values[kScalarOffset + 2] == 0.5);
    }

    TEST_CASE("radial bins are invariant under 180 degree rotation")
    {
        const Image img = render(grow(fixtures::reference_genotype(), 11, 800), 128);
        Image rot(img.width, img.height);
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x) rot.at(img.width - 1 - x, img.height - 1 - y) = img.at(x, y);
        const auto a = extract_features(img), b = extract_features(rot);
        for (std::size_t i = 0; i < kRadialBins; ++i) CHECK(a.values[kRadialOffset + i] == b.values[kRadialOffset + i]);
    }

    TEST_CASE("normalizer arithmetic")
    {
        const auto single = fit_normalizer(std::vector<std::vector<double>>{{3.0, -1.0}});
        CHECK(single.mean == std::vector<double>{3.0, -1.0});
        CHECK(single.std == std::vector<double>{1e-8, 1e-8});

        const auto two = fit_normalizer(std::vector<std::vector<double>>{{0.0}, {2.0}});
        CHECK(two.mean[0] == 1.0);
        CHECK(two.std[0] == 1.0);

        CHECK_THROWS_AS(fit_normalizer(std::vector<std::vector<double>>{{1.0}, {1.0, 2.0}}), ValidationError);

        SplitMix64 rng(5);
        std::vector<std::vector<double>> rows(100, std::vector<double>(7));
        for (auto& r : rows)
            for (auto& v : r) v = rng.uniform(-50.0, 80.0);
        const auto n = fit_normalizer(rows);
        std::vector<std::vector<double>> z;
        for (const auto& r : rows) {
            z.push_back(normalize(r, n));
            const auto back = denormalize(z.back(), n);
            for (std::size_t i = 0; i < r.size(); ++i) CHECK(std::abs(back[i] - r[i]) < 1e-12 * std::max(1.0, std::abs(r[i])));
        }
        const auto refit = fit_normalizer(z);
        for (std::size_t i = 0; i < 7; ++i) {
            CHECK(std::abs(refit.mean[i]) < 1e-9);
            CHECK(std::abs(refit.std[i] - 1.0) < 1e-9);
        }
        const auto id = Normalizer::identity(7);
        CHECK(normalize(rows[0], id) == rows[0]);
        CHECK(normalize(n.mean, n) == std::vector<double>(7, 0.0));
        CHECK_THROWS_AS(normalize(std::vector<double>(3, 0.0), n), ValidationError);
    }

    TEST_CASE("AEFV round trip and error kinds")
    {
        const auto dir = std::filesystem::temp_directory_path() / "formlab_aefv_test";
        std::filesystem::create_directories(dir);
        std::map<std::uint64_t, FeatureVector> vecs;
        SplitMix64 rng(3);
        for (std::uint64_t id : {4ull, 9ull, 17ull}) {
            FeatureVector v;
            for (int i = 0; i < 2048; ++i) v.values.push_back(static_cast<float>(rng.symmetric()));
            vecs[id] = v;
        }
        export_features(dir / "v.aefv", vecs, 2048);
        const std::vector<std::uint64_t> ids{4, 9, 17, 20};
        const auto back = import_features(dir / "v.aefv", ids);
        REQUIRE(back.size() == 3);
        for (const auto& [id, v] : back) {
            CHECK(v.dim() == 2048);
            CHECK(v.values == vecs[id].values);
        }

        export_features(dir / "empty.aefv", {}, 16);
        CHECK(import_features(dir / "empty.aefv", ids).empty());

        const std::string bytes = encode_features(vecs, 2048);
        auto kind_of = [](const std::string& b) -> std::string {
            try {
                (void)decode_features(b);
                return "ok";
            } catch (const FeatureFileError& e) {
                switch (e.kind()) {
                case FeatureFileError::Kind::bad_magic: return "bad_magic";
                case FeatureFileError::Kind::bad_version: return "bad_version";
                case FeatureFileError::Kind::truncated: return "truncated";
                case FeatureFileError::Kind::id_mismatch: return "id_mismatch";
                case FeatureFileError::Kind::non_finite: return "non_finite";
                }
            }
            return "?";
        };
        CHECK(kind_of(bytes) == "ok");
        CHECK(kind_of("XXXX" + bytes.substr(4)) == "bad_magic");
        std::string v2 = bytes;
        v2[4] = 2;
        CHECK(kind_of(v2) == "bad_version");
        CHECK(kind_of(bytes.substr(0, bytes.size() - 3)) == "truncated");
        std::string nan = bytes;
        const float bad = std::numeric_limits<float>::quiet_NaN();
        std::memcpy(nan.data() + 4 + 1 + 4 + 4 + 8, &bad, 4);
        CHECK(kind_of(nan) == "non_finite");

        std::ofstream(dir / "w.aefv", std::ios::binary) << bytes;
        const std::vector<std::uint64_t> wrong{4, 9};
        try {
            import_features(dir / "w.aefv", wrong);
            FAIL("expected id mismatch");
        } catch (const FeatureFileError& e) {
            CHECK(e.kind() == FeatureFileError::Kind::id_mismatch);
        }
        std::filesystem::remove_all(dir);
    }
}
