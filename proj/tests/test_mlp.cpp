#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "formlab/error.hpp"
#include "formlab/mlp.hpp"
#include "formlab/pseudo_label.hpp"
#include "formlab/rng.hpp"

using namespace formlab;

namespace {

MlpModel hand_model()
{
    MlpModel m = mlp_init(2, HeadKind::both, {"a", "b"}, 0, {2, 2});
    m.layers[0].weights = {1.0f, -1.0f, 0.5f, 2.0f};
    m.layers[0].bias = {0.0f, -1.0f};
    m.layers[1].weights = {1.0f, 1.0f, -1.0f, 0.5f};
    m.layers[1].bias = {0.5f, 0.0f};
    m.layers[2].weights = {1.0f, 0.0f, 0.0f, 1.0f, 0.25f, 0.0f};
    m.layers[2].bias = {0.0f, 0.0f, 0.125f};
    return m;
}

LabeledDataset blobs(std::size_t per_class, std::uint64_t seed)
{
    LabeledDataset ds;
    ds.label_names = {"x", "y", "z"};
    SplitMix64 rng(seed);
    const double centres[3][2] = {{0.2, 0.2}, {0.8, 0.3}, {0.5, 0.8}};
    for (int c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < per_class; ++i) {
            LabeledRow r;
            r.input = {centres[c][0] + 0.05 * rng.gaussian(), centres[c][1] + 0.05 * rng.gaussian()};
            r.category = c;
            r.rank = 2.0 + 3.0 * c;
            r.split = i % 5 == 0 ? Split::validation : Split::train;
            ds.rows.push_back(r);
        }
    return ds;
}

}  // namespace

TEST_SUITE("mlp")
{
    TEST_CASE("forward pass matches a hand trace")
    {
        const auto m = hand_model();
        const std::vector<double> x{2.0, 1.0};
        // layer0: (1, 2) ; layer1: (3.5, 0) ; out: (3.5, 0, 0.25*3.5 + 0.125)
        const auto out = mlp_forward(m, x);
        REQUIRE(out.size() == 3);
        CHECK(out[0] == 3.5);
        CHECK(out[1] == 0.0);
        CHECK(out[2] == 1.0);
        const auto p = mlp_predict(m, x);
        REQUIRE(p.category);
        CHECK(p.category->probs[1] == doctest::Approx(1.0 / (1.0 + std::exp(3.5))));
        CHECK(p.category->argmax() == 0);
        CHECK(*p.rank == 10.0);
        CHECK(objective_value(m, x, Objective::rank()) == 10.0);
        CHECK(objective_value(m, x, Objective::margin()) ==
              doctest::Approx(std::tanh(1.75)));

        const std::vector<double> far{0.0, 20.0};  // rank unit 10 * (0.25*h + 0.125) exceeds 10
        CHECK(*mlp_predict(m, far).rank == 10.0);
        CHECK_THROWS_AS(mlp_forward(m, std::vector<double>{1.0}), ValidationError);
    }

    TEST_CASE("initialization is seeded and bounded")
    {
        const auto a = mlp_init(12, HeadKind::classifier, {"p", "q"}, 5);
        const auto b = mlp_init(12, HeadKind::classifier, {"p", "q"}, 5);
        const auto c = mlp_init(12, HeadKind::classifier, {"p", "q"}, 6);
        CHECK(a.layers[0].weights == b.layers[0].weights);
        CHECK(a.layers[0].weights != c.layers[0].weights);
        CHECK(a.layers[0].out == 200);
        CHECK(a.layers[1].out == 100);
        CHECK(a.layers[2].out == 2);
        const double bound = std::sqrt(6.0 / 12.0);
        for (float w : a.layers[0].weights) CHECK(std::abs(w) <= bound);
        for (float v : a.layers[2].bias) CHECK(v == 0.0f);
    }

    TEST_CASE("input gradient agrees with central differences")
    {
        SplitMix64 rng(17);
        for (int trial = 0; trial < 10; ++trial) {
            auto m = mlp_init(4, HeadKind::both, {"a", "b", "c"}, rng.next(), {6, 5});
            for (std::size_t i = 0; i < 4; ++i) {
                m.normalizer.mean.at(i) = rng.symmetric();
                m.normalizer.std.at(i) = 0.5 + rng.uniform();
            }
            std::vector<double> x(4);
            for (auto& v : x) v = rng.symmetric();
            for (auto obj : {Objective::rank(), Objective::probability(1), Objective::margin()}) {
                const auto g = input_gradient(m, x, obj);
                for (std::size_t i = 0; i < 4; ++i) {
                    auto hi = x, lo = x;
                    hi[i] += 1e-6;
                    lo[i] -= 1e-6;
                    const double fd = (objective_value(m, hi, obj) - objective_value(m, lo, obj)) / 2e-6;
                    CHECK(g[i] == doctest::Approx(fd).epsilon(1e-4).scale(1.0));
                }
            }
        }
    }

    TEST_CASE("training is deterministic and memorizes separable data")
    {
        const auto ds = blobs(40, 3);
        TrainConfig cfg;
        cfg.epochs = 150;
        cfg.learning_rate = 1e-2;
        cfg.batch_size = 16;
        cfg.seed = 4;
        const auto init = mlp_init(2, HeadKind::both, ds.label_names, 9, {16, 8});
        const auto [a, ha] = mlp_train(init, ds, cfg);
        const auto [b, hb] = mlp_train(init, ds, cfg);
        for (std::size_t l = 0; l < 3; ++l) CHECK(a.layers[l].weights == b.layers[l].weights);
        CHECK(ha.train_loss == hb.train_loss);

        std::size_t hits = 0, total = 0;
        for (const auto& r : ds.rows) {
            hits += mlp_predict(a, r.input).category->argmax() == *r.category;
            ++total;
        }
        CHECK(hits == total);
        CHECK(ha.train_loss.back() < ha.train_loss.front());
        CHECK(a.manifest.trained);
        CHECK(a.manifest.best_epoch == ha.best_epoch);
    }

    TEST_CASE("early stopping keeps the best validation epoch")
    {
        const auto ds = blobs(10, 8);
        TrainConfig cfg;
        cfg.epochs = 400;
        cfg.patience = 5;
        cfg.learning_rate = 5e-2;
        const auto [m, h] = mlp_train(mlp_init(2, HeadKind::classifier, ds.label_names, 1, {32, 32}), ds, cfg);
        REQUIRE(h.best_epoch >= 1);
        const double best = h.validation_loss[h.best_epoch - 1];
        for (double v : h.validation_loss) CHECK(best <= v);
        CHECK(mlp_loss(m, ds, Split::validation) == doctest::Approx(best).epsilon(1e-9));
        if (h.stopped_early) CHECK(h.validation_loss.size() == h.best_epoch + cfg.patience);
    }

    TEST_CASE("training input errors")
    {
        auto ds = blobs(5, 1);
        for (auto& r : ds.rows) r.split = Split::train;
        CHECK_THROWS_AS(mlp_train(mlp_init(2, HeadKind::classifier, ds.label_names, 0, {4, 4}), ds, {}),
                        ValidationError);
        CHECK_THROWS_AS(mlp_init(2, HeadKind::classifier, {}, 0), ValidationError);
        CHECK(head_from_string("both") == HeadKind::both);
        CHECK_THROWS_AS(head_from_string("tree"), ValidationError);
    }

    TEST_CASE("checkpoint round trip is exact")
    {
        const auto ds = blobs(12, 2);
        TrainConfig cfg;
        cfg.epochs = 5;
        auto [m, h] = mlp_train(mlp_init(2, HeadKind::both, ds.label_names, 3, {8, 8}), ds, cfg);
        const auto dir = std::filesystem::temp_directory_path() / "formlab_ckpt_test";
        std::filesystem::remove_all(dir);
        save_checkpoint(m, dir, {{"note", "kept"}});
        const auto back = load_checkpoint(dir);
        CHECK(back.input_dim == m.input_dim);
        CHECK(back.head == m.head);
        CHECK(back.label_names == m.label_names);
        for (std::size_t l = 0; l < 3; ++l) {
            CHECK(back.layers[l].weights == m.layers[l].weights);
            CHECK(back.layers[l].bias == m.layers[l].bias);
        }
        CHECK(back.normalizer.mean == m.normalizer.mean);
        CHECK(back.normalizer.std == m.normalizer.std);
        CHECK(back.manifest.train_loss == m.manifest.train_loss);
        CHECK(back.manifest.best_epoch == m.manifest.best_epoch);
        for (const auto& r : ds.rows) CHECK(mlp_forward(back, r.input) == mlp_forward(m, r.input));

        std::ofstream(dir / "weights.bin", std::ios::binary | std::ios::trunc) << "short";
        CHECK_THROWS_AS(load_checkpoint(dir), FormatError);
        std::filesystem::remove_all(dir);
    }

    TEST_CASE("pseudo labelling respects the margin threshold")
    {
        auto m = mlp_init(1, HeadKind::classifier, {"lo", "hi"}, 0, {2, 2});
        m.layers[0].weights = {1.0f, -1.0f};
        m.layers[0].bias = {0.0f, 0.0f};
        m.layers[1].weights = {1.0f, -1.0f, -1.0f, 1.0f};
        m.layers[1].bias = {0.0f, 0.0f};
        m.layers[2].weights = {0.0f, 0.0f, 1.0f, -1.0f};  // logit(hi) - logit(lo) = x
        m.layers[2].bias = {0.0f, 0.0f};
        std::vector<UnlabeledRecord> recs{{1, std::vector<double>{3.0}},
                                          {2, std::vector<double>{0.1}},
                                          {3, std::vector<double>{-4.0}},
                                          {4, std::nullopt}};
        const auto r = pseudo_label(m, recs, 0.5);
        REQUIRE(r.proposals.size() == 2);
        CHECK(r.proposals[0].id == 1);
        CHECK(r.proposals[0].label == "hi");
        CHECK(r.proposals[0].margin == doctest::Approx(std::tanh(1.5)));
        CHECK(r.proposals[1].id == 3);
        CHECK(r.proposals[1].label == "lo");
        CHECK(r.warnings.size() == 1);
    }
}
