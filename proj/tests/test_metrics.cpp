#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "formlab/error.hpp"
#include "formlab/knn.hpp"
#include "formlab/metrics.hpp"
#include "formlab/rng.hpp"

using namespace formlab;

namespace {

// Builds margin/outcome rows so that each quartile, lowest margin first, holds
// `sizes[q]` rows of which `correct[q]` are right.
std::vector<MarginOutcome> quartile_fixture(const std::array<std::size_t, 4>& sizes,
                                            const std::array<std::size_t, 4>& correct, std::uint64_t seed)
{
    std::vector<MarginOutcome> rows;
    for (std::size_t q = 0; q < 4; ++q)
        for (std::size_t i = 0; i < sizes[q]; ++i)
            rows.push_back({0.25 * static_cast<double>(q) + 0.2 * static_cast<double>(i + 1) / static_cast<double>(sizes[q] + 1),
                            i < correct[q]});
    SplitMix64 rng(seed);
    for (std::size_t i = rows.size(); i > 1; --i) std::swap(rows[i - 1], rows[rng.below(i)]);
    return rows;
}

}  // namespace

TEST_SUITE("metrics")
{
    TEST_CASE("confidence margin")
    {
        CHECK(confidence_margin({{0.7, 0.2, 0.1}}) == doctest::Approx(0.5));
        CHECK(confidence_margin({{0.4, 0.4, 0.2}}) == 0.0);
        CHECK_THROWS_AS(confidence_margin({{1.0}}), ValidationError);
        CHECK(CategoryDistribution{{0.4, 0.4, 0.2}}.argmax() == 0);
    }

    TEST_CASE("quartiles reproduce the published table")
    {
        const auto rows = quartile_fixture({241, 241, 240, 240}, {163, 218, 235, 233}, 962);
        const auto q = quartile_report(rows);
        REQUIRE(q.size() == 4);
        const double expect[4] = {67.6, 90.5, 97.9, 97.1};
        const std::size_t sizes[4] = {241, 241, 240, 240};
        for (std::size_t k = 0; k < 4; ++k) {
            CHECK(q[k].count == sizes[k]);
            CHECK(std::round(q[k].accuracy * 1000.0) / 10.0 == doctest::Approx(expect[k]));
            CHECK(q[k].lower_percent == 25.0 * static_cast<double>(k));
        }
        std::vector<double> m;
        std::vector<bool> c;
        for (const auto& r : rows) {
            m.push_back(r.margin);
            c.push_back(r.correct);
        }
        const auto brute = fixtures::brute_quartiles(m, c);
        for (std::size_t k = 0; k < 4; ++k) {
            CHECK(q[k].count == brute[k].count);
            CHECK(q[k].correct == brute[k].correct);
        }
    }

    TEST_CASE("eight row quartile example")
    {
        const std::vector<MarginOutcome> rows{{0.9, true},  {0.1, false}, {0.5, true}, {0.3, false},
                                              {0.7, true},  {0.2, true},  {0.6, false}, {0.8, true}};
        const auto q = quartile_report(rows);
        CHECK(q[0].correct == 1);  // 0.1, 0.2
        CHECK(q[1].correct == 1);  // 0.3, 0.5
        CHECK(q[2].correct == 1);  // 0.6, 0.7
        CHECK(q[3].correct == 2);  // 0.8, 0.9
        CHECK(q[0].min_margin == 0.1);
        CHECK(q[3].max_margin == 0.9);
        CHECK_THROWS_AS(quartile_report(std::span<const MarginOutcome>(rows.data(), 3)), ValidationError);
    }

    TEST_CASE("uneven quartiles give extras to the first")
    {
        const std::vector<MarginOutcome> rows(7, {0.5, true});
        const auto q = quartile_report(rows);
        CHECK(q[0].count == 2);
        CHECK(q[1].count == 2);
        CHECK(q[2].count == 2);
        CHECK(q[3].count == 1);
    }

    TEST_CASE("confusion matrix matches brute force")
    {
        SplitMix64 rng(2);
        std::vector<int> p, t;
        for (int i = 0; i < 300; ++i) {
            p.push_back(static_cast<int>(rng.below(4)));
            t.push_back(static_cast<int>(rng.below(4)));
        }
        CHECK(confusion_matrix(p, t, 4) == fixtures::brute_confusion(p, t, 4));
        const std::vector<int> bad{5};
        CHECK_THROWS_AS(confusion_matrix(bad, bad, 4), ValidationError);
    }

    TEST_CASE("k-NN agrees with brute force")
    {
        const auto ds = fixtures::load_planted("planted_categories.csv");
        const auto knn = knn_fit(ds, 5);
        for (const auto& r : ds.rows) {
            if (r.split != Split::validation) continue;
            const auto fast = knn_predict(knn, r.input);
            const auto slow = fixtures::brute_knn(ds, 5, r.input);
            REQUIRE(fast.category);
            CHECK(fast.category->probs == slow.votes);
        }
        const auto ranks = fixtures::load_planted("planted_ranks.csv");
        const auto rk = knn_fit(ranks, 5);
        for (std::size_t i = 0; i < ranks.rows.size(); i += 17) {
            const auto fast = knn_predict(rk, ranks.rows[i].input);
            const auto slow = fixtures::brute_knn(ranks, 5, ranks.rows[i].input);
            CHECK(*fast.rank == doctest::Approx(slow.rank).epsilon(1e-12));
        }
    }

    TEST_CASE("evaluate agrees with brute force")
    {
        const auto ds = fixtures::load_planted("planted_categories.csv");
        const auto knn = knn_fit(ds, 7);
        const Predictor p = [&](std::span<const double> x) { return knn_predict(knn, x); };
        const auto m = evaluate(p, ds);
        const auto b = fixtures::brute_evaluate(p, ds);
        CHECK(m.has_category);
        CHECK(m.accuracy == doctest::Approx(b.accuracy));
        CHECK(m.confusion == b.confusion);
        REQUIRE(m.quartiles.size() == 4);
        for (std::size_t k = 0; k < 4; ++k) {
            CHECK(m.quartiles[k].count == b.quartiles[k].count);
            CHECK(m.quartiles[k].correct == b.quartiles[k].correct);
        }

        const auto ranks = fixtures::load_planted("planted_ranks.csv");
        const auto rk = knn_fit(ranks, 5);
        const Predictor pr = [&](std::span<const double> x) { return knn_predict(rk, x); };
        CHECK(evaluate(pr, ranks).rank_rmse == doctest::Approx(fixtures::brute_evaluate(pr, ranks).rmse));
        CHECK_FALSE(format_metrics(m, ds.label_names).empty());
    }
}
