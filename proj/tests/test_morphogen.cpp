#include <doctest.h>

#include <cmath>
#include <limits>

#include "fixtures.hpp"
#include "formlab/error.hpp"
#include "formlab/morphogen.hpp"
#include "formlab/rng.hpp"

using namespace formlab;

namespace {

// Frozen from the first reference run (all parameters 0.5, seed 7, budget 4096).
constexpr std::size_t kGoldenCells = 4096;
constexpr std::size_t kGoldenSteps = 238;
constexpr const char* kGoldenHash = "f03de59bb87be18c";

Genotype random_genotype(SplitMix64& rng)
{
    std::array<double, 12> u;
    for (auto& v : u) v = rng.uniform();
    return make_genotype(u);
}

}  // namespace

TEST_SUITE("morphogen")
{
    TEST_CASE("validate_genotype clamps and reports")
    {
        std::vector<double> half(12, 0.5);
        auto v = validate_genotype(half);
        CHECK(v.clamped.empty());
        for (double u : v.genotype.u) CHECK(u == 0.5);

        half[3] = 1.5;
        v = validate_genotype(half);
        REQUIRE(v.clamped.size() == 1);
        CHECK(v.clamped[0] == 3);
        CHECK(v.genotype.u[3] == 1.0);

        auto again = validate_genotype(v.genotype.u);
        CHECK(again.genotype == v.genotype);
        CHECK(again.clamped.empty());
    }

    TEST_CASE("validate_genotype rejects bad input")
    {
        std::vector<double> bad(12, 0.5);
        bad[0] = std::numeric_limits<double>::quiet_NaN();
        try {
            validate_genotype(bad);
            FAIL("expected ParameterError");
        } catch (const ParameterError& e) {
            CHECK(e.index() == 0);
            CHECK(std::string(e.what()) == "non-finite parameter 0");
        }
        CHECK_THROWS_AS(validate_genotype(std::vector<double>(11, 0.5)), ValidationError);
    }

    TEST_CASE("physical values follow the range table")
    {
        const auto g = fixtures::reference_genotype();
        for (std::size_t i = 0; i < kGenotypeSize; ++i)
            CHECK(g.physical[i] == doctest::Approx(0.5 * (kParameterRanges[i].lo + kParameterRanges[i].hi)));
        CHECK(kParameterRanges[1].lo == 0.005);
        CHECK(kParameterRanges[1].hi == 0.02);
    }

    TEST_CASE("growth is deterministic")
    {
        std::array<double, 12> u;
        u.fill(0.37);
        const auto g = make_genotype(u);
        CHECK(serialize_growth(grow(g, 42)) == serialize_growth(grow(g, 42)));
    }

    TEST_CASE("no food income never divides")
    {
        const auto g = fixtures::no_food_genotype();
        for (std::uint64_t seed : {0ull, 1ull, 7ull, 123456789ull}) {
            const auto r = grow(g, seed);
            CHECK(r.cell_count() == kInitialCells);
            CHECK_FALSE(r.viable);
        }
    }

    TEST_CASE("reference run matches the frozen golden")
    {
        const auto r = grow(fixtures::reference_genotype(), 7, 4096);
        CHECK(r.cell_count() == kGoldenCells);
        CHECK(r.steps_run == kGoldenSteps);
        CHECK(hash_hex(image_hash(render(r, 256))) == kGoldenHash);
    }

    TEST_CASE("budget bound and monotone growth")
    {
        SplitMix64 rng(99);
        for (int k = 0; k < 12; ++k) {
            const auto r = grow(random_genotype(rng), rng.next(), 600);
            CHECK(r.cell_count() <= 600);
            for (std::size_t s = 1; s < r.count_history.size(); ++s)
                CHECK(r.count_history[s] >= r.count_history[s - 1]);
        }
    }

    TEST_CASE("growth text format round trips")
    {
        const auto r = grow(fixtures::reference_genotype(), 3, 300);
        const auto text = serialize_growth(r);
        CHECK(text.rfind("formlab-growth 1\n", 0) == 0);
        const auto back = parse_growth(text);
        CHECK(back.cells == r.cells);
        CHECK(back.steps_run == r.steps_run);
        CHECK(back.viable == r.viable);
        CHECK(back.blow_up == r.blow_up);
        CHECK(serialize_growth(back) == text);
    }

    TEST_CASE("render geometry")
    {
        GrowthResult none;
        none.rest_length = 0.01;
        const Image black = render(none, 256);
        CHECK(black.width == 256);
        for (auto p : black.pixels) CHECK(p == 0);

        GrowthResult one;
        one.rest_length = 0.02;
        one.cells.push_back({0.0, 0.0, 0.0});
        const Image dot = render(one, 256);
        CHECK(dot.at(128, 128) > 0);
        CHECK(dot.at(127, 127) > 0);
        CHECK(dot.at(0, 0) == 0);
        double sx = 0.0, sy = 0.0, total = 0.0;
        for (int y = 0; y < 256; ++y)
            for (int x = 0; x < 256; ++x) {
                sx += dot.at(x, y) * (x + 0.5);
                sy += dot.at(x, y) * (y + 0.5);
                total += dot.at(x, y);
            }
        CHECK(sx / total == doctest::Approx(128.0).epsilon(1e-9));
        CHECK(sy / total == doctest::Approx(128.0).epsilon(1e-9));

        CHECK_THROWS_AS(render(one, 200), ValidationError);
    }

    TEST_CASE("classify_empty thresholds")
    {
        CHECK(classify_empty(Image(100, 100, 0)));
        CHECK(classify_empty(Image(100, 100, 255)));

        Image img(200, 100, 0);  // 20000 pixels; 0.5% is 100 pixels
        for (int i = 0; i < 100; ++i) img.pixels[static_cast<std::size_t>(i)] = 200;
        CHECK_FALSE(classify_empty(img));
        img.pixels[99] = 0;
        CHECK(classify_empty(img));

        Image third(100, 100, 0);
        for (std::size_t i = 0; i < 3000; ++i) third.pixels[i] = 255;
        CHECK_FALSE(classify_empty(third));
    }

    TEST_CASE("PGM encoding round trips")
    {
        const Image img = render(grow(fixtures::reference_genotype(), 1, 200), 128);
        CHECK(decode_pgm(encode_pgm(img)) == img);
        const auto png = encode_png(img);
        CHECK(png.substr(1, 3) == "PNG");
    }
}
