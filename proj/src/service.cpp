#include "formlab/service.hpp"

#include <atomic>
#include <condition_variable>
#include <deque>
#include <map>
#include <mutex>
#include <shared_mutex>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "formlab/error.hpp"

namespace formlab {

using nlohmann::json;

namespace {

json record_json(const PhenotypeRecord& r)
{
    json j;
    j["id"] = r.id;
    j["genotype"] = r.genotype.u;
    j["seed"] = r.seed;
    j["image_path"] = r.image_path;
    j["features_path"] = r.features_path;
    j["rank"] = r.rank ? json(*r.rank) : json(nullptr);
    j["category"] = r.category ? json(*r.category) : json(nullptr);
    j["provenance"] = to_string(r.provenance);
    j["viable"] = r.viable;
    j["created"] = r.created;
    j["modified"] = r.modified;
    return j;
}

json prediction_json(const Prediction& p, const std::vector<std::string>& labels)
{
    json j;
    if (p.category) {
        const int c = p.category->argmax();
        j["category"] = labels.at(static_cast<std::size_t>(c));
        j["category_id"] = c;
        j["probabilities"] = p.category->probs;
        j["margin"] = p.category->size() >= 2 ? confidence_margin(*p.category) : 1.0;
    }
    if (p.rank) j["rank"] = *p.rank;
    return j;
}

json cross_section_value(const CrossSection& cs, const std::string& id)
{
    json cells = json::array();
    const std::size_t r = cs.grid.resolution;
    for (std::size_t row = 0; row < r; ++row)
        for (std::size_t col = 0; col < r; ++col) {
            const std::size_t k = row * r + col;
            const auto& g = cs.grid.cells[k];
            json c;
            c["row"] = row;
            c["col"] = col;
            c["u_i"] = g.u[cs.grid.dim_i];
            c["u_j"] = g.u[cs.grid.dim_j];
            c["category"] = cs.category[k] ? json(cs.label_names.at(static_cast<std::size_t>(*cs.category[k])))
                                           : json(nullptr);
            c["margin"] = cs.margin[k];
            c["rank"] = cs.rank[k] ? json(*cs.rank[k]) : json(nullptr);
            cells.push_back(std::move(c));
        }
    return {{"cross_section_id", id},
            {"dim_i", cs.grid.dim_i},
            {"dim_j", cs.grid.dim_j},
            {"resolution", r},
            {"labels", cs.label_names},
            {"cells", std::move(cells)}};
}

/// Thrown by handlers to choose the status code.
struct HttpError : std::runtime_error {
    int status;
    HttpError(int s, const std::string& what) : std::runtime_error(what), status(s) {}
};

json parse_body(const httplib::Request& req)
{
    if (req.body.empty()) return json::object();
    try {
        auto j = json::parse(req.body);
        if (!j.is_object()) throw HttpError(400, "request body must be a JSON object");
        return j;
    } catch (const json::parse_error& e) {
        throw HttpError(400, std::string("malformed JSON: ") + e.what());
    }
}

std::uint64_t parse_id(const std::string& s)
{
    try {
        return std::stoull(s);
    } catch (const std::exception&) {
        throw HttpError(400, "bad id '" + s + "'");
    }
}

SourceSpace space_from(const std::string& s)
{
    if (s == "genotype") return SourceSpace::genotype;
    if (s == "feature") return SourceSpace::feature;
    throw ValidationError("space must be genotype or feature");
}

std::pair<double, double> range_from(const json& j)
{
    if (!j.is_array() || j.size() != 2) throw ValidationError("range must be [lo, hi]");
    return {j[0].get<double>(), j[1].get<double>()};
}

}  // namespace

std::string cross_section_json(const CrossSection& cs, const std::string& id)
{
    return cross_section_value(cs, id).dump();
}

struct Service::Impl {
    struct Job {
        std::string id;
        std::string kind;
        std::string status = "queued";
        json result;
        std::string error;
    };

    Store& store;
    std::shared_mutex store_mutex;
    httplib::Server server;
    std::thread listener;

    std::mutex jobs_mutex;
    std::condition_variable jobs_cv;
    std::map<std::string, Job> jobs;
    std::deque<std::pair<std::string, std::function<json()>>> queue;
    std::size_t job_counter = 0;
    bool shutting_down = false;
    std::thread worker;

    std::mutex sections_mutex;
    std::map<std::string, CrossSection> sections;
    std::size_t section_counter = 0;

    explicit Impl(Store& s) : store(s)
    {
        worker = std::thread([this] { run_jobs(); });
        routes();
    }

    ~Impl()
    {
        server.stop();
        if (listener.joinable()) listener.join();
        {
            std::lock_guard lk(jobs_mutex);
            shutting_down = true;
        }
        jobs_cv.notify_all();
        worker.join();
    }

    std::string submit(const std::string& kind, std::function<json()> fn)
    {
        std::lock_guard lk(jobs_mutex);
        const std::string id = "j" + std::to_string(++job_counter);
        Job job;
        job.id = id;
        job.kind = kind;
        jobs[id] = std::move(job);
        queue.emplace_back(id, std::move(fn));
        jobs_cv.notify_one();
        return id;
    }

    void run_jobs()
    {
        for (;;) {
            std::pair<std::string, std::function<json()>> task;
            {
                std::unique_lock lk(jobs_mutex);
                jobs_cv.wait(lk, [this] { return shutting_down || !queue.empty(); });
                if (queue.empty()) return;
                task = std::move(queue.front());
                queue.pop_front();
                jobs[task.first].status = "running";
            }
            json result;
            std::string error;
            try {
                result = task.second();
            } catch (const std::exception& e) {
                error = e.what();
            }
            std::lock_guard lk(jobs_mutex);
            auto& job = jobs[task.first];
            job.status = error.empty() ? "done" : "failed";
            job.result = std::move(result);
            job.error = std::move(error);
        }
    }

    using Handler = std::function<json(const httplib::Request&, httplib::Response&)>;

    static httplib::Server::Handler wrap(Handler h)
    {
        return [h = std::move(h)](const httplib::Request& req, httplib::Response& res) {
            int status = 200;
            json body;
            try {
                body = h(req, res);
                if (res.status > 0 && res.status != 200) status = res.status;
                if (body.is_null() && !res.body.empty()) return;
            } catch (const HttpError& e) {
                status = e.status;
                body = {{"error", e.what()}};
            } catch (const ValidationError& e) {
                status = 400;
                body = {{"error", e.what()}};
            } catch (const FormatError& e) {
                status = 400;
                body = {{"error", e.what()}};
            } catch (const json::exception& e) {
                status = 400;
                body = {{"error", std::string("bad request field: ") + e.what()}};
            } catch (const StoreError& e) {
                const std::string what = e.what();
                status = what.rfind("unknown", 0) == 0 ? 404 : 500;
                body = {{"error", what}};
            } catch (const std::exception& e) {
                status = 500;
                body = {{"error", e.what()}};
            }
            res.status = status;
            res.set_content(body.dump(), "application/json");
        };
    }

    Genotype genotype_from(const json& j)
    {
        if (!j.is_array()) throw ValidationError("genotype must be an array of 12 numbers");
        std::vector<double> u;
        for (const auto& v : j) u.push_back(v.get<double>());
        auto vg = validate_genotype(u);
        if (!vg.clamped.empty()) throw ValidationError("genotype values must lie in [0,1]");
        return vg.genotype;
    }

    void routes()
    {
        server.Get("/api/records", wrap([this](const httplib::Request& req, httplib::Response&) {
                       std::optional<std::string> category;
                       std::optional<int> rank_min, rank_max;
                       std::optional<Provenance> prov;
                       if (req.has_param("category")) category = req.get_param_value("category");
                       if (req.has_param("rank_min")) rank_min = std::stoi(req.get_param_value("rank_min"));
                       if (req.has_param("rank_max")) rank_max = std::stoi(req.get_param_value("rank_max"));
                       if (req.has_param("provenance"))
                           prov = provenance_from_string(req.get_param_value("provenance"));
                       std::shared_lock lk(store_mutex);
                       json out = json::array();
                       for (const auto& r : store.records()) {
                           if (category && r.category != category) continue;
                           if ((rank_min || rank_max) && !r.rank) continue;
                           if (rank_min && *r.rank < *rank_min) continue;
                           if (rank_max && *r.rank > *rank_max) continue;
                           if (prov && r.provenance != *prov) continue;
                           out.push_back(record_json(r));
                       }
                       return out;
                   }));

        server.Get(R"(/api/records/(\d+))", wrap([this](const httplib::Request& req, httplib::Response&) {
                       std::shared_lock lk(store_mutex);
                       return record_json(store.record(parse_id(req.matches[1])));
                   }));

        server.Get(R"(/api/records/(\d+)/image)", wrap([this](const httplib::Request& req, httplib::Response& res) {
                       Image img;
                       {
                           std::shared_lock lk(store_mutex);
                           img = store.image(parse_id(req.matches[1]));
                       }
                       const std::string accept = req.get_header_value("Accept");
                       if (accept.find("image/x-portable-graymap") != std::string::npos ||
                           accept.find("image/pgm") != std::string::npos)
                           res.set_content(encode_pgm(img), "image/x-portable-graymap");
                       else
                           res.set_content(encode_png(img), "image/png");
                       return json();
                   }));

        server.Post(R"(/api/records/(\d+)/judgement)",
                    wrap([this](const httplib::Request& req, httplib::Response&) {
                        const json body = parse_body(req);
                        std::optional<int> rank;
                        std::optional<std::string> category;
                        if (body.contains("rank") && !body["rank"].is_null()) {
                            if (!body["rank"].is_number_integer()) throw ValidationError("rank must be an integer");
                            rank = body["rank"].get<int>();
                        }
                        if (body.contains("category") && !body["category"].is_null())
                            category = body["category"].get<std::string>();
                        const bool force = body.value("force", false);
                        std::unique_lock lk(store_mutex);
                        return record_json(store.submit_judgement(parse_id(req.matches[1]), rank, category, force));
                    }));

        server.Get("/api/taxonomy", wrap([this](const httplib::Request&, httplib::Response&) {
                       std::shared_lock lk(store_mutex);
                       return json(store.taxonomy());
                   }));

        server.Post("/api/split", wrap([this](const httplib::Request& req, httplib::Response&) {
                        const json body = parse_body(req);
                        std::unique_lock lk(store_mutex);
                        const auto rep = store.split_dataset(body.value("ratio", 0.8), body.value("seed", 0ULL));
                        return json{{"train", rep.train}, {"validation", rep.validation}, {"warnings", rep.warnings}};
                    }));

        server.Post("/api/generate", wrap([this](const httplib::Request& req, httplib::Response& res) {
                        const json body = parse_body(req);
                        const std::size_t n = body.at("n").get<std::size_t>();
                        const std::uint64_t seed = body.value("seed", 0ULL);
                        BatchSampler sampler;
                        json s = body.value("sampler", json("uniform"));
                        if (s.is_string()) s = json{{"kind", s}};
                        const std::string kind = s.at("kind").get<std::string>();
                        if (kind == "uniform") {
                            sampler.kind = BatchSampler::Kind::uniform;
                        } else if (kind == "around") {
                            sampler.kind = BatchSampler::Kind::around;
                            sampler.source_id = s.at("id").get<std::uint64_t>();
                            sampler.sigma = s.value("sigma", 0.05);
                        } else if (kind == "monte_carlo") {
                            sampler.kind = BatchSampler::Kind::monte_carlo;
                            sampler.model_id = s.at("model_id").get<std::string>();
                            if (s.contains("min_rank")) sampler.criteria.min_rank = s["min_rank"].get<double>();
                            if (s.contains("category")) {
                                std::shared_lock lk(store_mutex);
                                const auto m = store.load_model(sampler.model_id);
                                const auto name = s["category"].get<std::string>();
                                auto it = std::find(m.model.label_names.begin(), m.model.label_names.end(), name);
                                if (it == m.model.label_names.end())
                                    throw ValidationError("model has no category '" + name + "'");
                                sampler.criteria.category = static_cast<int>(it - m.model.label_names.begin());
                            }
                        } else if (kind == "genotype") {
                            const Genotype g = genotype_from(s.at("genotype"));
                            const std::string id = submit("generate", [this, g, seed] {
                                std::unique_lock lk(store_mutex);
                                return json{{"ids", {store.add_record(g, seed).id}}, {"warnings", json::array()}};
                            });
                            res.status = 202;
                            return json{{"job_id", id}};
                        } else {
                            throw ValidationError("unknown sampler '" + kind + "'");
                        }
                        if (n < 1 || n > 256) throw ValidationError("n must be in [1, 256]");
                        const std::string id = submit("generate", [this, n, sampler, seed] {
                            std::unique_lock lk(store_mutex);
                            const auto r = store.batch_generate(n, sampler, seed);
                            return json{{"ids", r.ids}, {"warnings", r.warnings}};
                        });
                        res.status = 202;
                        return json{{"job_id", id}};
                    }));

        server.Post("/api/train", wrap([this](const httplib::Request& req, httplib::Response& res) {
                        const json body = parse_body(req);
                        TrainRequest tr;
                        tr.space = space_from(body.value("space", std::string("genotype")));
                        tr.target = head_from_string(body.value("target", std::string("category")));
                        tr.include_pseudo = body.value("include_pseudo", false);
                        const json cfg = body.value("config", json::object());
                        tr.config.epochs = cfg.value("epochs", tr.config.epochs);
                        tr.config.batch_size = cfg.value("batch_size", tr.config.batch_size);
                        tr.config.learning_rate = cfg.value("learning_rate", tr.config.learning_rate);
                        tr.config.patience = cfg.value("patience", tr.config.patience);
                        tr.config.seed = cfg.value("seed", tr.config.seed);
                        tr.init_seed = cfg.value("init_seed", tr.config.seed);
                        const std::string id = submit("train", [this, tr] {
                            std::shared_lock lk(store_mutex);
                            const auto r = store.train_job(tr);
                            return json::parse(store.model_metrics_json(r.model_id));
                        });
                        res.status = 202;
                        return json{{"job_id", id}};
                    }));

        server.Get(R"(/api/jobs/([A-Za-z0-9]+))", wrap([this](const httplib::Request& req, httplib::Response&) {
                       std::lock_guard lk(jobs_mutex);
                       auto it = jobs.find(req.matches[1]);
                       if (it == jobs.end()) throw HttpError(404, "unknown job " + std::string(req.matches[1]));
                       const auto& j = it->second;
                       json out{{"id", j.id}, {"kind", j.kind}, {"status", j.status}};
                       if (j.status == "done") out["result"] = j.result;
                       if (j.status == "failed") out["error"] = j.error;
                       return out;
                   }));

        server.Get("/api/models", wrap([this](const httplib::Request&, httplib::Response&) {
                       std::shared_lock lk(store_mutex);
                       json out = json::array();
                       for (const auto& id : store.model_ids()) {
                           const auto m = store.load_model(id);
                           out.push_back({{"id", id},
                                          {"space", to_string(m.space)},
                                          {"head", to_string(m.model.head)},
                                          {"input_dim", m.model.input_dim},
                                          {"labels", m.model.label_names}});
                       }
                       return out;
                   }));

        server.Get(R"(/api/models/([A-Za-z0-9]+)/metrics)",
                   wrap([this](const httplib::Request& req, httplib::Response&) {
                       std::shared_lock lk(store_mutex);
                       return json::parse(store.model_metrics_json(req.matches[1]));
                   }));

        server.Post("/api/predict", wrap([this](const httplib::Request& req, httplib::Response&) {
                        const json body = parse_body(req);
                        std::shared_lock lk(store_mutex);
                        const auto m = store.load_model(body.at("model_id").get<std::string>());
                        std::vector<double> x;
                        if (body.contains("record_id")) {
                            x = store.model_input(m, body["record_id"].get<std::uint64_t>());
                        } else if (body.contains("genotype")) {
                            if (m.space != SourceSpace::genotype)
                                throw ValidationError("a feature-space model needs record_id");
                            const auto g = genotype_from(body["genotype"]);
                            x.assign(g.u.begin(), g.u.end());
                        } else {
                            throw ValidationError("predict needs genotype or record_id");
                        }
                        if (x.size() != m.model.input_dim) throw ValidationError("input dimension mismatch");
                        return prediction_json(mlp_predict(m.model, x), m.model.label_names);
                    }));

        server.Get("/api/embedding", wrap([this](const httplib::Request& req, httplib::Response&) {
                       const auto space = space_from(req.has_param("space") ? req.get_param_value("space") : "genotype");
                       const std::string method = req.has_param("method") ? req.get_param_value("method") : "pca";
                       if (method != "pca" && method != "tsne") throw ValidationError("method must be pca or tsne");
                       TsneParams p;
                       if (req.has_param("perplexity")) p.perplexity = std::stod(req.get_param_value("perplexity"));
                       if (req.has_param("seed")) p.seed = std::stoull(req.get_param_value("seed"));
                       std::shared_lock lk(store_mutex);
                       const auto e = store.embedding(space, method == "tsne" ? EmbedMethod::tsne : EmbedMethod::pca, p);
                       json pts = json::array();
                       for (std::size_t i = 0; i < e.points.size(); ++i) {
                           const auto& pt = e.points[i];
                           pts.push_back({{"id", pt.id},
                                          {"x", e.layout.coords[i][0]},
                                          {"y", e.layout.coords[i][1]},
                                          {"category", pt.category ? json(*pt.category) : json(nullptr)},
                                          {"rank", pt.rank ? json(*pt.rank) : json(nullptr)},
                                          {"band", pt.rank ? json(score_band(*pt.rank)) : json(nullptr)}});
                       }
                       return json{{"space", to_string(space)}, {"method", method}, {"points", pts}};
                   }));

        server.Post("/api/cross-section", wrap([this](const httplib::Request& req, httplib::Response&) {
                        const json body = parse_body(req);
                        CrossSection cs;
                        {
                            std::shared_lock lk(store_mutex);
                            const auto m = store.load_model(body.at("model_id").get<std::string>());
                            if (m.space != SourceSpace::genotype)
                                throw ValidationError("cross-sections need a genotype-space model");
                            Genotype base;
                            if (body.contains("base_record_id"))
                                base = store.record(body["base_record_id"].get<std::uint64_t>()).genotype;
                            else
                                base = genotype_from(body.at("base_genotype"));
                            const json ranges = body.value("ranges", json::array({{0.0, 1.0}, {0.0, 1.0}}));
                            if (!ranges.is_array() || ranges.size() != 2)
                                throw ValidationError("ranges must hold two [lo, hi] pairs");
                            const auto grid =
                                sweep_grid(base, body.at("dim_i").get<std::size_t>(), body.at("dim_j").get<std::size_t>(),
                                           range_from(ranges[0]), range_from(ranges[1]),
                                           body.value("resolution", std::size_t{32}));
                            cs = cross_section(m.model, grid);
                        }
                        std::lock_guard lk(sections_mutex);
                        const std::string id = "cs" + std::to_string(++section_counter);
                        auto out = cross_section_value(cs, id);
                        sections.emplace(id, std::move(cs));
                        return out;
                    }));

        server.Get("/api/transitions", wrap([this](const httplib::Request& req, httplib::Response&) {
                       if (!req.has_param("cross_section_id")) throw ValidationError("cross_section_id is required");
                       const std::string id = req.get_param_value("cross_section_id");
                       std::lock_guard lk(sections_mutex);
                       auto it = sections.find(id);
                       if (it == sections.end()) throw HttpError(404, "unknown cross-section " + id);
                       const auto& cs = it->second;
                       json out = json::array();
                       for (const auto& t : find_transitions(cs))
                           out.push_back({{"a", t.a},
                                          {"b", t.b},
                                          {"category_a", cs.label_names.at(static_cast<std::size_t>(t.category_a))},
                                          {"category_b", cs.label_names.at(static_cast<std::size_t>(t.category_b))},
                                          {"midpoint", t.midpoint.u}});
                       return out;
                   }));

        server.Post("/api/pseudo-label", wrap([this](const httplib::Request& req, httplib::Response&) {
                        const json body = parse_body(req);
                        std::unique_lock lk(store_mutex);
                        const auto r = store.pseudo_label(body.at("model_id").get<std::string>(), body.at("tau").get<double>());
                        json props = json::array();
                        for (const auto& p : r.proposals)
                            props.push_back({{"id", p.id}, {"category", p.label}, {"margin", p.margin}});
                        return json{{"proposals", props}, {"warnings", r.warnings}};
                    }));
    }
};

Service::Service(Store& store) : impl_(std::make_unique<Impl>(store)) {}

Service::~Service() = default;

int Service::bind(const std::string& host, int port)
{
    if (port == 0) {
        const int p = impl_->server.bind_to_any_port(host);
        if (p < 0) throw StoreError("cannot bind " + host);
        return p;
    }
    if (!impl_->server.bind_to_port(host, port))
        throw StoreError("cannot bind " + host + ":" + std::to_string(port) + " (port busy?)");
    return port;
}

void Service::listen() { impl_->server.listen_after_bind(); }

int Service::start(const std::string& host, int port)
{
    const int p = bind(host, port);
    impl_->listener = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    return p;
}

void Service::stop()
{
    impl_->server.stop();
    if (impl_->listener.joinable()) impl_->listener.join();
}

}  // namespace formlab
