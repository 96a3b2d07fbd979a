#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "formlab/embed.hpp"
#include "formlab/error.hpp"
#include "formlab/explore.hpp"
#include "formlab/features.hpp"
#include "formlab/mlp.hpp"
#include "formlab/morphogen.hpp"
#include "formlab/store.hpp"

namespace py = pybind11;
using namespace formlab;

namespace {

Genotype to_genotype(const std::vector<double>& u)
{
    const auto vg = validate_genotype(u);
    if (!vg.clamped.empty()) throw ValidationError("genotype values must lie in [0,1]");
    return vg.genotype;
}

py::bytes image_bytes(const Image& img)
{
    return py::bytes(reinterpret_cast<const char*>(img.pixels.data()), img.pixels.size());
}

}  // namespace

PYBIND11_MODULE(_formlab, m)
{
    m.doc() = "Differential-growth forms, aesthetic predictors and genotype-space exploration";

    py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
    py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
    py::register_exception<StoreError>(m, "StoreError", PyExc_RuntimeError);

    m.attr("GENOTYPE_SIZE") = kGenotypeSize;
    m.attr("FEATURE_DIM") = feature_layout::kDim;

    m.def("parameter_names", [] {
        std::vector<std::string> out;
        for (const auto& r : kParameterRanges) out.emplace_back(r.name);
        return out;
    });

    m.def(
        "validate_genotype",
        [](const std::vector<double>& raw) {
            const auto vg = validate_genotype(raw);
            return py::make_tuple(std::vector<double>(vg.genotype.u.begin(), vg.genotype.u.end()),
                                  std::vector<double>(vg.genotype.physical.begin(), vg.genotype.physical.end()),
                                  vg.clamped);
        },
        py::arg("u"), "Returns (u, physical, clamped_indices).");

    py::class_<Image>(m, "Image")
        .def_readonly("width", &Image::width)
        .def_readonly("height", &Image::height)
        .def_property_readonly("pixels", &image_bytes)
        .def("hash", [](const Image& img) { return hash_hex(image_hash(img)); })
        .def("pgm", [](const Image& img) { return py::bytes(encode_pgm(img)); })
        .def("png", [](const Image& img) { return py::bytes(encode_png(img)); })
        .def("is_empty", &classify_empty);

    py::class_<GrowthResult>(m, "GrowthResult")
        .def_property_readonly("cell_count", &GrowthResult::cell_count)
        .def_readonly("steps_run", &GrowthResult::steps_run)
        .def_readonly("viable", &GrowthResult::viable)
        .def_readonly("blow_up", &GrowthResult::blow_up)
        .def_property_readonly("cells",
                               [](const GrowthResult& r) {
                                   std::vector<std::tuple<double, double, double>> out;
                                   for (const auto& c : r.cells) out.emplace_back(c.x, c.y, c.food);
                                   return out;
                               })
        .def("serialize", &serialize_growth);

    m.def(
        "grow",
        [](const std::vector<double>& u, std::uint64_t seed, std::size_t budget) {
            return grow(to_genotype(u), seed, budget);
        },
        py::arg("u"), py::arg("seed"), py::arg("budget") = kDefaultCellBudget,
        py::call_guard<py::gil_scoped_release>());
    m.def("render", &render, py::arg("growth"), py::arg("resolution") = kDefaultResolution,
          py::call_guard<py::gil_scoped_release>());
    m.def("extract_features", [](const Image& img) { return extract_features(img).values; });

    m.def(
        "pca2", [](const PointSet& x) { return pca2(x).coords; }, py::arg("x"));
    m.def(
        "tsne",
        [](const PointSet& x, double perplexity, std::size_t iterations, std::uint64_t seed) {
            TsneParams p;
            p.perplexity = perplexity;
            p.iterations = iterations;
            p.seed = seed;
            return tsne(x, p).coords;
        },
        py::arg("x"), py::arg("perplexity") = 30.0, py::arg("iterations") = 1000, py::arg("seed") = 0,
        py::call_guard<py::gil_scoped_release>());

    py::class_<StoredModel>(m, "Model")
        .def_readonly("id", &StoredModel::id)
        .def_property_readonly("space", [](const StoredModel& s) { return to_string(s.space); })
        .def_property_readonly("labels", [](const StoredModel& s) { return s.model.label_names; })
        .def_property_readonly("input_dim", [](const StoredModel& s) { return s.model.input_dim; })
        .def("predict", [](const StoredModel& s, const std::vector<double>& x) {
            const auto p = mlp_predict(s.model, x);
            py::dict d;
            if (p.category) {
                d["category"] = s.model.label_names[static_cast<std::size_t>(p.category->argmax())];
                d["probabilities"] = p.category->probs;
            }
            if (p.rank) d["rank"] = *p.rank;
            return d;
        });

    py::class_<Store>(m, "Store")
        .def(py::init([](const std::filesystem::path& root, int resolution) {
                 StoreOptions o;
                 o.resolution = resolution;
                 return std::make_unique<Store>(Store::open(root, o));
             }),
             py::arg("root"), py::arg("resolution") = kDefaultResolution)
        .def("__len__", [](const Store& s) { return s.records().size(); })
        .def("ids",
             [](const Store& s) {
                 std::vector<std::uint64_t> out;
                 for (const auto& r : s.records()) out.push_back(r.id);
                 return out;
             })
        .def("record",
             [](const Store& s, std::uint64_t id) {
                 const auto& r = s.record(id);
                 py::dict d;
                 d["id"] = r.id;
                 d["genotype"] = std::vector<double>(r.genotype.u.begin(), r.genotype.u.end());
                 d["seed"] = r.seed;
                 d["rank"] = r.rank ? py::object(py::int_(*r.rank)) : py::object(py::none());
                 d["category"] = r.category ? py::object(py::str(*r.category)) : py::object(py::none());
                 d["provenance"] = to_string(r.provenance);
                 d["viable"] = r.viable;
                 return d;
             })
        .def(
            "add",
            [](Store& s, const std::vector<double>& u, std::uint64_t seed) { return s.add_record(to_genotype(u), seed).id; },
            py::arg("u"), py::arg("seed"))
        .def(
            "judge",
            [](Store& s, std::uint64_t id, std::optional<int> rank, std::optional<std::string> category, bool force) {
                s.submit_judgement(id, rank, category, force);
            },
            py::arg("id"), py::arg("rank") = py::none(), py::arg("category") = py::none(), py::arg("force") = false)
        .def("image", &Store::image)
        .def("taxonomy", &Store::taxonomy)
        .def("export_csv", &Store::export_csv)
        .def("model_ids", &Store::model_ids)
        .def("load_model", &Store::load_model)
        .def("verify", [](const Store& s) {
            std::vector<std::pair<std::uint64_t, std::string>> out;
            for (const auto& i : s.verify()) out.emplace_back(i.id, i.problem);
            return out;
        });

    m.def(
        "sweep_genotypes",
        [](const std::vector<double>& base, std::size_t i, std::size_t j, std::pair<double, double> ri,
           std::pair<double, double> rj, std::size_t resolution) {
            const auto g = sweep_grid(to_genotype(base), i, j, ri, rj, resolution);
            std::vector<std::vector<double>> out;
            for (const auto& c : g.cells) out.emplace_back(c.u.begin(), c.u.end());
            return out;
        },
        py::arg("base"), py::arg("dim_i"), py::arg("dim_j"), py::arg("range_i") = std::pair{0.0, 1.0},
        py::arg("range_j") = std::pair{0.0, 1.0}, py::arg("resolution") = 8);
}
