#include <algorithm>
#include <csignal>
#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "formlab/csv.hpp"
#include "formlab/embed.hpp"
#include "formlab/error.hpp"
#include "formlab/explore.hpp"
#include "formlab/service.hpp"
#include "formlab/store.hpp"

using namespace formlab;

namespace {

std::vector<double> parse_genotype(const std::string& s)
{
    std::vector<double> u;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) u.push_back(std::stod(tok));
    return u;
}

Genotype checked_genotype(const std::string& s)
{
    const auto vg = validate_genotype(parse_genotype(s));
    if (!vg.clamped.empty()) {
        std::cerr << "warning: clamped parameter(s)";
        for (auto i : vg.clamped) std::cerr << ' ' << i;
        std::cerr << " into [0,1]\n";
    }
    return vg.genotype;
}

std::string fmt(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

std::string genotype_csv(const Genotype& g)
{
    std::string out;
    for (std::size_t i = 0; i < kGenotypeSize; ++i) out += (i ? "," : "") + fmt(g.u[i]);
    return out;
}

std::string genotype_header()
{
    std::string out;
    for (std::size_t i = 0; i < kGenotypeSize; ++i) out += (i ? ",u" : "u") + std::to_string(i);
    return out;
}

Genotype base_genotype(Store& store, std::optional<std::uint64_t> record, const std::string& genotype)
{
    if (record) return store.record(*record).genotype;
    if (!genotype.empty()) return checked_genotype(genotype);
    throw ValidationError("give --record or --genotype");
}

SourceSpace parse_space(const std::string& s)
{
    if (s == "genotype") return SourceSpace::genotype;
    if (s == "feature") return SourceSpace::feature;
    throw ValidationError("space must be genotype or feature");
}

std::pair<double, double> parse_range(const std::string& s)
{
    const auto v = parse_genotype(s);
    if (v.size() != 2) throw ValidationError("range must be lo,hi");
    return {v[0], v[1]};
}

Service* g_service = nullptr;

void on_signal(int)
{
    if (g_service) g_service->stop();
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"formlab: grow, judge, learn and explore 2D differential-growth forms"};
    app.require_subcommand(1);
    app.fallthrough();
    std::string store_dir = "formlab-store";
    std::uint64_t seed = 0;
    int resolution = kDefaultResolution;
    app.add_option("--store", store_dir, "Store directory")->capture_default_str();
    app.add_option("--seed", seed, "PRNG seed")->capture_default_str();
    app.add_option("--resolution", resolution, "Render resolution (128, 256 or 512)")->capture_default_str();

    auto open_store = [&] {
        StoreOptions o;
        o.resolution = resolution;
        return Store::open(store_dir, o);
    };

    // generate
    auto* gen = app.add_subcommand("generate", "Grow new forms into the store");
    std::size_t gen_n = 1;
    std::string gen_sampler = "uniform", gen_genotype, gen_model, gen_category;
    std::uint64_t gen_source = 0;
    double gen_sigma = 0.05, gen_min_rank = -1.0;
    gen->add_option("-n,--count", gen_n, "Number of forms")->capture_default_str();
    gen->add_option("--sampler", gen_sampler, "uniform, around or monte_carlo")->capture_default_str();
    gen->add_option("--genotype", gen_genotype, "Explicit genotype u0,...,u11 (overrides the sampler)");
    gen->add_option("--source", gen_source, "Source record for the around sampler");
    gen->add_option("--sigma", gen_sigma, "Perturbation for the around sampler")->capture_default_str();
    gen->add_option("--model", gen_model, "Genotype model for monte_carlo");
    gen->add_option("--min-rank", gen_min_rank, "monte_carlo minimum predicted rank");
    gen->add_option("--category", gen_category, "monte_carlo required category");
    gen->callback([&] {
        auto store = open_store();
        std::vector<std::uint64_t> ids;
        if (!gen_genotype.empty()) {
            for (std::size_t k = 0; k < gen_n; ++k) ids.push_back(store.add_record(checked_genotype(gen_genotype), seed + k).id);
        } else {
            BatchSampler s;
            if (gen_sampler == "around") {
                s.kind = BatchSampler::Kind::around;
                s.source_id = gen_source;
                s.sigma = gen_sigma;
            } else if (gen_sampler == "monte_carlo") {
                s.kind = BatchSampler::Kind::monte_carlo;
                s.model_id = gen_model;
                if (gen_min_rank >= 0.0) s.criteria.min_rank = gen_min_rank;
                if (!gen_category.empty()) {
                    const auto& labels = store.load_model(gen_model).model.label_names;
                    auto it = std::find(labels.begin(), labels.end(), gen_category);
                    if (it == labels.end()) throw ValidationError("model has no category '" + gen_category + "'");
                    s.criteria.category = static_cast<int>(it - labels.begin());
                }
            } else if (gen_sampler != "uniform") {
                throw ValidationError("unknown sampler '" + gen_sampler + "'");
            }
            auto r = store.batch_generate(gen_n, s, seed);
            for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
            ids = r.ids;
        }
        std::cout << "id,category,rank,viable\n";
        for (auto id : ids) {
            const auto& r = store.record(id);
            std::cout << id << ',' << r.category.value_or("") << ',' << (r.rank ? std::to_string(*r.rank) : "") << ','
                      << (r.viable ? "true" : "false") << '\n';
        }
    });

    // judge
    auto* judge = app.add_subcommand("judge", "Record a human rank and/or category");
    std::uint64_t judge_id = 0;
    std::optional<int> judge_rank;
    std::string judge_category;
    bool judge_force = false;
    judge->add_option("id", judge_id, "Record id")->required();
    judge->add_option("--rank", judge_rank, "Rank 0-10");
    judge->add_option("--category", judge_category, "Category label");
    judge->add_flag("--force", judge_force, "Allow rank 0 on a viable form");
    judge->callback([&] {
        auto store = open_store();
        std::optional<std::string> cat;
        if (!judge_category.empty()) cat = judge_category;
        const auto& r = store.submit_judgement(judge_id, judge_rank, cat, judge_force);
        std::cout << records_csv({r});
    });

    // features
    auto* feat = app.add_subcommand("features", "Manage feature vectors");
    feat->require_subcommand(1);
    auto* feat_import = feat->add_subcommand("import", "Import an AEFV file of external vectors");
    std::string feat_path;
    feat_import->add_option("file", feat_path, "AEFV file")->required();
    feat_import->callback([&] {
        auto store = open_store();
        std::cout << store.import_features(feat_path) << " vectors imported\n";
    });
    auto* feat_extract = feat->add_subcommand("extract", "Recompute built-in features");
    std::string feat_out;
    feat_extract->add_option("--out", feat_out, "Also write all vectors to this AEFV file");
    feat_extract->callback([&] {
        auto store = open_store();
        std::cout << store.extract_features() << " records featurized\n";
        if (!feat_out.empty()) store.export_features(feat_out);
    });

    // split
    auto* split = app.add_subcommand("split", "Assign train/validation split");
    double split_ratio = 0.8;
    split->add_option("--ratio", split_ratio, "Training fraction")->capture_default_str();
    split->callback([&] {
        auto store = open_store();
        const auto rep = store.split_dataset(split_ratio, seed);
        for (const auto& w : rep.warnings) std::cerr << "warning: " << w << '\n';
        std::cout << "train," << rep.train << "\nvalidation," << rep.validation << '\n';
    });

    // train
    auto* train = app.add_subcommand("train", "Train a predictor on human-labeled records");
    std::string train_space = "genotype", train_target = "category";
    TrainConfig train_cfg;
    bool train_pseudo = false;
    train->add_option("--space", train_space, "genotype or feature")->capture_default_str();
    train->add_option("--target", train_target, "category, rank or both")->capture_default_str();
    train->add_option("--epochs", train_cfg.epochs)->capture_default_str();
    train->add_option("--batch-size", train_cfg.batch_size)->capture_default_str();
    train->add_option("--lr", train_cfg.learning_rate)->capture_default_str();
    train->add_option("--patience", train_cfg.patience)->capture_default_str();
    train->add_flag("--include-pseudo", train_pseudo, "Also train on predicted labels");
    train->callback([&] {
        auto store = open_store();
        TrainRequest req;
        req.space = parse_space(train_space);
        req.target = head_from_string(train_target);
        req.config = train_cfg;
        req.config.seed = seed;
        req.init_seed = seed;
        req.include_pseudo = train_pseudo;
        const auto r = store.train_job(req);
        std::cout << "model " << r.model_id << " (" << r.train_rows << " train rows, best epoch "
                  << r.history.best_epoch << ")\n"
                  << format_metrics(r.metrics, store.load_model(r.model_id).model.label_names);
    });

    // predict
    auto* pred = app.add_subcommand("predict", "Predict category/rank for records or a genotype");
    std::string pred_model, pred_genotype;
    std::vector<std::uint64_t> pred_ids;
    pred->add_option("--model", pred_model, "Model id")->required();
    pred->add_option("--genotype", pred_genotype, "Genotype u0,...,u11");
    pred->add_option("--record", pred_ids, "Record id(s); all records when omitted");
    pred->callback([&] {
        auto store = open_store();
        const auto m = store.load_model(pred_model);
        std::cout << "id,category,margin,rank\n";
        auto emit = [&](const std::string& id, const std::vector<double>& x) {
            const auto p = mlp_predict(m.model, x);
            std::cout << id << ',';
            if (p.category) {
                std::cout << m.model.label_names[static_cast<std::size_t>(p.category->argmax())] << ','
                          << fmt(p.category->size() >= 2 ? confidence_margin(*p.category) : 1.0);
            } else {
                std::cout << ',';
            }
            std::cout << ',' << (p.rank ? fmt(*p.rank) : "") << '\n';
        };
        if (!pred_genotype.empty()) {
            if (m.space != SourceSpace::genotype) throw ValidationError("a feature-space model needs --record");
            const auto g = checked_genotype(pred_genotype);
            emit("", {g.u.begin(), g.u.end()});
            return;
        }
        if (pred_ids.empty())
            for (const auto& r : store.records()) pred_ids.push_back(r.id);
        for (auto id : pred_ids) emit(std::to_string(id), store.model_input(m, id));
    });

    // embed
    auto* embed = app.add_subcommand("embed", "2D layout of the population as CSV");
    std::string embed_space = "genotype", embed_method = "tsne";
    TsneParams embed_params;
    embed->add_option("--space", embed_space, "genotype or feature")->capture_default_str();
    embed->add_option("--method", embed_method, "tsne or pca")->capture_default_str();
    embed->add_option("--perplexity", embed_params.perplexity)->capture_default_str();
    embed->add_option("--iterations", embed_params.iterations)->capture_default_str();
    embed->callback([&] {
        auto store = open_store();
        embed_params.seed = seed;
        if (embed_method != "tsne" && embed_method != "pca") throw ValidationError("method must be tsne or pca");
        const auto e = store.embedding(parse_space(embed_space),
                                       embed_method == "tsne" ? EmbedMethod::tsne : EmbedMethod::pca, embed_params);
        std::cout << layout_csv(e.layout, e.points);
    });

    // shared grid options for sweep and cross-section
    std::optional<std::uint64_t> grid_record;
    std::string grid_genotype, grid_range_i = "0,1", grid_range_j = "0,1", grid_out, grid_model;
    std::size_t grid_i = 0, grid_j = 1, grid_res = 8;
    auto add_grid_options = [&](CLI::App* sub) {
        sub->add_option("--record", grid_record, "Base record id");
        sub->add_option("--genotype", grid_genotype, "Base genotype u0,...,u11");
        sub->add_option("--dim-i", grid_i, "Parameter varied along columns")->capture_default_str();
        sub->add_option("--dim-j", grid_j, "Parameter varied along rows")->capture_default_str();
        sub->add_option("--range-i", grid_range_i, "lo,hi")->capture_default_str();
        sub->add_option("--range-j", grid_range_j, "lo,hi")->capture_default_str();
        sub->add_option("-R,--grid", grid_res, "Grid resolution")->capture_default_str();
    };
    auto make_grid = [&](Store& store) {
        return sweep_grid(base_genotype(store, grid_record, grid_genotype), grid_i, grid_j, parse_range(grid_range_i),
                          parse_range(grid_range_j), grid_res);
    };

    auto* sweep = app.add_subcommand("sweep", "Render a two-parameter contact sheet (PGM)");
    add_grid_options(sweep);
    int sweep_tile = 128;
    sweep->add_option("--tile", sweep_tile, "Tile resolution")->capture_default_str();
    sweep->add_option("-o,--out", grid_out, "Output PGM")->required();
    sweep->callback([&] {
        auto store = open_store();
        const Image sheet = sweep_render(make_grid(store), seed, sweep_tile);
        write_pgm(grid_out, sheet);
        std::cout << grid_out << ' ' << hash_hex(image_hash(sheet)) << '\n';
    });

    auto* xs = app.add_subcommand("cross-section", "Predicted categories over a 2D genotype slice (CSV)");
    add_grid_options(xs);
    xs->add_option("--model", grid_model, "Genotype model id")->required();
    xs->callback([&] {
        auto store = open_store();
        const auto m = store.load_model(grid_model);
        std::cout << cross_section_csv(cross_section(m.model, make_grid(store)));
    });

    auto* tr = app.add_subcommand("transitions", "Category transition points on a 2D slice (CSV)");
    add_grid_options(tr);
    tr->add_option("--model", grid_model, "Genotype model id")->required();
    bool tr_descend = false;
    tr->add_flag("--descend", tr_descend, "Refine each midpoint by margin descent");
    tr->callback([&] {
        auto store = open_store();
        const auto m = store.load_model(grid_model);
        const auto cs = cross_section(m.model, make_grid(store));
        std::cout << "row_a,col_a,row_b,col_b,category_a,category_b," << genotype_header()
                  << (tr_descend ? ",margin" : "") << '\n';
        for (const auto& t : find_transitions(cs)) {
            Genotype g = t.midpoint;
            std::string extra;
            if (tr_descend) {
                const auto d = boundary_descent(m.model, g);
                g = d.genotype;
                extra = "," + fmt(d.margin);
            }
            std::cout << t.a[0] << ',' << t.a[1] << ',' << t.b[0] << ',' << t.b[1] << ','
                      << csv::escape(cs.label_names[static_cast<std::size_t>(t.category_a)]) << ','
                      << csv::escape(cs.label_names[static_cast<std::size_t>(t.category_b)]) << ','
                      << genotype_csv(g) << extra << '\n';
        }
    });

    // sample
    auto* sample = app.add_subcommand("sample", "Monte Carlo candidates under a genotype model (CSV)");
    std::string sample_model, sample_category;
    std::size_t sample_n = 10;
    double sample_min_rank = -1.0;
    sample->add_option("--model", sample_model, "Genotype model id")->required();
    sample->add_option("-n,--count", sample_n)->capture_default_str();
    sample->add_option("--min-rank", sample_min_rank, "Minimum predicted rank");
    sample->add_option("--category", sample_category, "Required predicted category");
    sample->callback([&] {
        auto store = open_store();
        const auto m = store.load_model(sample_model);
        SampleCriteria c;
        if (sample_min_rank >= 0.0) c.min_rank = sample_min_rank;
        if (!sample_category.empty()) {
            auto it = std::find(m.model.label_names.begin(), m.model.label_names.end(), sample_category);
            if (it == m.model.label_names.end()) throw ValidationError("model has no category '" + sample_category + "'");
            c.category = static_cast<int>(it - m.model.label_names.begin());
        }
        const auto r = monte_carlo_sample(mlp_predictor(m.model), c, sample_n, seed);
        for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
        std::cout << "rank,category,margin," << genotype_header() << '\n';
        for (const auto& cand : r.candidates)
            std::cout << (cand.rank ? fmt(*cand.rank) : "") << ','
                      << (cand.category ? csv::escape(m.model.label_names[static_cast<std::size_t>(*cand.category)]) : "")
                      << ',' << fmt(cand.margin) << ',' << genotype_csv(cand.genotype) << '\n';
    });

    // climb
    auto* climb = app.add_subcommand("climb", "Hill-climb predicted rank from a start genotype (CSV)");
    std::string climb_model, climb_genotype;
    std::optional<std::uint64_t> climb_record;
    std::size_t climb_iters = 2000;
    double climb_sigma = 0.05;
    climb->add_option("--model", climb_model, "Genotype model id with a rank head")->required();
    climb->add_option("--record", climb_record, "Start record id");
    climb->add_option("--genotype", climb_genotype, "Start genotype u0,...,u11");
    climb->add_option("--iterations", climb_iters)->capture_default_str();
    climb->add_option("--sigma", climb_sigma)->capture_default_str();
    climb->callback([&] {
        auto store = open_store();
        const auto m = store.load_model(climb_model);
        const auto path = hill_climb(mlp_predictor(m.model), base_genotype(store, climb_record, climb_genotype),
                                     climb_iters, climb_sigma, seed);
        std::cout << "iteration,rank," << genotype_header() << '\n';
        for (const auto& s : path) std::cout << s.iteration << ',' << fmt(s.rank) << ',' << genotype_csv(s.genotype) << '\n';
    });

    // export / import / verify
    auto* exp = app.add_subcommand("export", "Write the records CSV");
    std::string exp_path;
    exp->add_option("file", exp_path, "Output CSV (stdout when omitted)");
    exp->callback([&] {
        auto store = open_store();
        if (exp_path.empty())
            std::cout << store.export_csv();
        else
            store.export_dataset(exp_path);
    });
    auto* imp = app.add_subcommand("import", "Add records from an exported CSV");
    std::string imp_path;
    imp->add_option("file", imp_path, "Input CSV")->required();
    imp->callback([&] {
        auto store = open_store();
        std::cout << store.import_dataset(imp_path) << " records imported\n";
    });
    auto* ver = app.add_subcommand("verify", "Re-render every record and compare image hashes");
    ver->callback([&] {
        auto store = open_store();
        const auto issues = store.verify();
        for (const auto& i : issues) std::cout << i.id << ',' << csv::escape(i.problem) << '\n';
        std::cout << store.records().size() - issues.size() << " of " << store.records().size() << " records verified\n";
        if (!issues.empty()) throw StoreError("verification failed");
    });

    // serve
    auto* serve = app.add_subcommand("serve", "Run the HTTP/JSON service");
    std::string serve_host = "127.0.0.1";
    int serve_port = 8080;
    serve->add_option("--host", serve_host)->capture_default_str();
    serve->add_option("--port", serve_port)->capture_default_str();
    serve->callback([&] {
        auto store = open_store();
        Service service(store);
        const int port = service.bind(serve_host, serve_port);
        g_service = &service;
        std::signal(SIGINT, on_signal);
        std::signal(SIGTERM, on_signal);
        std::cerr << "serving " << store.root().string() << " on http://" << serve_host << ':' << port << "/api\n";
        service.listen();
        g_service = nullptr;
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
