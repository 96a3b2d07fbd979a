#include "formlab/store.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "formlab/csv.hpp"
#include "formlab/error.hpp"
#include "formlab/knn.hpp"
#include "formlab/rng.hpp"

namespace fs = std::filesystem;

namespace formlab {

namespace {

constexpr const char* kEmptyCategory = "empty";

std::vector<std::string> record_header()
{
    std::vector<std::string> h{"id"};
    for (std::size_t i = 0; i < kGenotypeSize; ++i) h.push_back("u" + std::to_string(i));
    for (const char* c : {"seed", "image_path", "features_path", "rank", "category", "provenance", "viable", "created",
                          "modified"})
        h.emplace_back(c);
    return h;
}

std::string fmt17(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::uint64_t parse_u64(const std::string& s, const char* what)
{
    if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
        throw FormatError(std::string("bad ") + what + " '" + s + "'");
    try {
        return std::stoull(s);
    } catch (const std::exception&) {
        throw FormatError(std::string(what) + " out of range");
    }
}

double parse_double(const std::string& s, const char* what)
{
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        throw FormatError(std::string("bad ") + what + " '" + s + "'");
    }
    if (used != s.size()) throw FormatError(std::string("bad ") + what + " '" + s + "'");
    return v;
}

void check_category_name(const std::string& name)
{
    if (name.empty()) throw ValidationError("category name must be nonempty");
    if (name.find_first_of("\r\n") != std::string::npos) throw ValidationError("category name contains a line break");
}

void check_relative(const std::string& p)
{
    const fs::path path(p);
    if (path.is_absolute()) throw FormatError("path '" + p + "' must be relative to the store");
    for (const auto& part : path)
        if (part == "..") throw FormatError("path '" + p + "' escapes the store");
}

std::string image_rel(std::uint64_t id) { return "images/" + std::to_string(id) + ".pgm"; }
std::string features_rel(std::uint64_t id) { return "features/" + std::to_string(id) + ".aefv"; }

}  // namespace

std::string to_string(Provenance p) { return p == Provenance::human ? "human" : "predicted"; }

Provenance provenance_from_string(const std::string& s)
{
    if (s == "human") return Provenance::human;
    if (s == "predicted") return Provenance::predicted;
    throw FormatError("unknown provenance '" + s + "'");
}

std::string records_csv(const std::vector<PhenotypeRecord>& records)
{
    std::string out = csv::join(record_header()) + "\n";
    for (const auto& r : records) {
        std::vector<std::string> f{std::to_string(r.id)};
        for (double u : r.genotype.u) f.push_back(fmt17(u));
        f.push_back(std::to_string(r.seed));
        f.push_back(r.image_path);
        f.push_back(r.features_path);
        f.push_back(r.rank ? std::to_string(*r.rank) : "");
        f.push_back(r.category.value_or(""));
        f.push_back(to_string(r.provenance));
        f.push_back(r.viable ? "true" : "false");
        f.push_back(r.created);
        f.push_back(r.modified);
        out += csv::join(f) + "\n";
    }
    return out;
}

std::vector<PhenotypeRecord> parse_records_csv(const std::string& text)
{
    const auto rows = csv::parse(text);
    if (rows.empty() || rows.front() != record_header()) throw FormatError("records CSV header mismatch");
    std::vector<PhenotypeRecord> out;
    std::set<std::uint64_t> seen;
    for (std::size_t n = 1; n < rows.size(); ++n) {
        const auto& f = rows[n];
        try {
            if (f.size() != record_header().size()) throw FormatError("wrong field count");
            PhenotypeRecord r;
            std::size_t k = 0;
            r.id = parse_u64(f[k++], "id");
            std::array<double, kGenotypeSize> u{};
            for (auto& v : u) v = parse_double(f[k++], "genotype value");
            for (std::size_t i = 0; i < kGenotypeSize; ++i)
                if (!(u[i] >= 0.0 && u[i] <= 1.0))
                    throw FormatError("u" + std::to_string(i) + " outside [0,1]");
            r.genotype = make_genotype(u);
            r.seed = parse_u64(f[k++], "seed");
            r.image_path = f[k++];
            check_relative(r.image_path);
            r.features_path = f[k++];
            if (!r.features_path.empty()) check_relative(r.features_path);
            if (const auto& s = f[k++]; !s.empty()) {
                const auto rank = parse_u64(s, "rank");
                if (rank > 10) throw FormatError("rank " + s + " outside [0,10]");
                r.rank = static_cast<int>(rank);
            }
            if (const auto& s = f[k++]; !s.empty()) {
                if (s.find_first_of("\r\n") != std::string::npos) throw FormatError("category contains a line break");
                r.category = s;
            }
            r.provenance = provenance_from_string(f[k++]);
            const auto& viable = f[k++];
            if (viable != "true" && viable != "false") throw FormatError("viable must be true or false");
            r.viable = viable == "true";
            if (r.rank == 0 && r.viable) throw FormatError("rank 0 on a viable form");
            r.created = f[k++];
            r.modified = f[k++];
            if (!seen.insert(r.id).second) throw FormatError("duplicate id " + std::to_string(r.id));
            out.push_back(std::move(r));
        } catch (const std::exception& e) {
            throw FormatError("row " + std::to_string(n) + ": " + e.what());
        }
    }
    return out;
}

std::string utc_timestamp()
{
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void write_file_atomic(const fs::path& path, const std::string& bytes)
{
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw StoreError("cannot write " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        out.flush();
        if (!out) throw StoreError("write failed for " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw StoreError("cannot replace " + path.string() + ": " + ec.message());
}

std::string read_file(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw StoreError("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Store::Store(fs::path root, StoreOptions options, int lock_fd)
    : root_(std::move(root)), options_(std::move(options)), lock_fd_(lock_fd)
{
}

Store::Store(Store&& other) noexcept
    : root_(std::move(other.root_)),
      options_(std::move(other.options_)),
      lock_fd_(std::exchange(other.lock_fd_, -1)),
      records_(std::move(other.records_)),
      index_(std::move(other.index_)),
      taxonomy_(std::move(other.taxonomy_)),
      splits_(std::move(other.splits_))
{
}

Store::~Store()
{
    if (lock_fd_ >= 0) {
        ::flock(lock_fd_, LOCK_UN);
        ::close(lock_fd_);
    }
}

Store Store::open(const fs::path& root, StoreOptions options)
{
    std::error_code ec;
    for (const char* sub : {"", "images", "features", "models"}) {
        fs::create_directories(root / sub, ec);
        if (ec) throw StoreError("cannot create " + (root / sub).string() + ": " + ec.message());
    }
    const int fd = ::open((root / "store.lock").c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
    if (fd < 0) throw StoreError("cannot open lock file in " + root.string());
    if (::flock(fd, LOCK_EX | LOCK_NB) != 0) {
        ::close(fd);
        throw StoreError("store " + root.string() + " is locked by another process");
    }
    Store s(root, std::move(options), fd);
    if (!s.options_.clock) s.options_.clock = utc_timestamp;

    if (fs::exists(root / "records.csv")) {
        try {
            s.records_ = parse_records_csv(read_file(root / "records.csv"));
        } catch (const FormatError& e) {
            throw StoreError("records.csv: " + std::string(e.what()));
        }
    }
    std::sort(s.records_.begin(), s.records_.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    for (std::size_t i = 0; i < s.records_.size(); ++i) s.index_[s.records_[i].id] = i;

    if (fs::exists(root / "taxonomy.txt")) {
        std::istringstream in(read_file(root / "taxonomy.txt"));
        std::string line;
        while (std::getline(in, line))
            if (!line.empty()) s.taxonomy_.push_back(line);
    }
    if (fs::exists(root / "splits.csv")) {
        const auto rows = csv::parse(read_file(root / "splits.csv"));
        for (std::size_t n = 1; n < rows.size(); ++n) {
            if (rows[n].size() != 2) throw StoreError("splits.csv row " + std::to_string(n) + " malformed");
            s.splits_[parse_u64(rows[n][0], "id")] = rows[n][1] == "validation" ? Split::validation : Split::train;
        }
    }
    return s;
}

const PhenotypeRecord& Store::record(std::uint64_t id) const
{
    auto it = index_.find(id);
    if (it == index_.end()) throw StoreError("unknown record id " + std::to_string(id));
    return records_[it->second];
}

PhenotypeRecord& Store::mutable_record(std::uint64_t id)
{
    auto it = index_.find(id);
    if (it == index_.end()) throw StoreError("unknown record id " + std::to_string(id));
    return records_[it->second];
}

Image Store::image(std::uint64_t id) const { return read_pgm(root_ / record(id).image_path); }

void Store::save_records() const { write_file_atomic(root_ / "records.csv", records_csv(records_)); }

void Store::save_taxonomy() const
{
    std::string out;
    for (const auto& t : taxonomy_) out += t + "\n";
    write_file_atomic(root_ / "taxonomy.txt", out);
}

void Store::save_splits() const
{
    std::string out = "id,split\n";
    for (const auto& [id, side] : splits_)
        out += std::to_string(id) + (side == Split::train ? ",train\n" : ",validation\n");
    write_file_atomic(root_ / "splits.csv", out);
}

void Store::ensure_category(const std::string& name)
{
    check_category_name(name);
    if (std::find(taxonomy_.begin(), taxonomy_.end(), name) == taxonomy_.end()) {
        taxonomy_.push_back(name);
        save_taxonomy();
    }
}

void Store::add_category(const std::string& name) { ensure_category(name); }

void Store::remove_category(const std::string& name)
{
    auto it = std::find(taxonomy_.begin(), taxonomy_.end(), name);
    if (it == taxonomy_.end()) throw ValidationError("unknown category '" + name + "'");
    for (const auto& r : records_)
        if (r.category == name)
            throw ValidationError("category '" + name + "' is still used by record " + std::to_string(r.id));
    taxonomy_.erase(it);
    save_taxonomy();
}

const PhenotypeRecord& Store::add_record(const Genotype& g, std::uint64_t seed)
{
    const std::uint64_t id = records_.empty() ? 1 : records_.back().id + 1;
    const GrowthResult growth = grow(g, seed, options_.cell_budget);
    const Image img = render(growth, options_.resolution);
    const bool empty = classify_empty(img);

    PhenotypeRecord r;
    r.id = id;
    r.genotype = g;
    r.seed = seed;
    r.image_path = image_rel(id);
    r.features_path = features_rel(id);
    r.viable = growth.viable && !empty;
    r.provenance = Provenance::human;
    if (empty) {
        r.category = kEmptyCategory;
        r.rank = 0;
        r.provenance = Provenance::predicted;
        r.viable = false;
    }
    r.created = r.modified = options_.clock();

    write_file_atomic(root_ / r.image_path, encode_pgm(img));
    write_file_atomic(root_ / r.features_path, encode_features({{id, formlab::extract_features(img)}}, feature_layout::kDim));
    if (r.category) ensure_category(*r.category);
    records_.push_back(std::move(r));
    index_[id] = records_.size() - 1;
    save_records();
    return records_.back();
}

const PhenotypeRecord& Store::submit_judgement(std::uint64_t id, std::optional<int> rank,
                                               std::optional<std::string> category, bool force)
{
    auto& r = mutable_record(id);
    if (rank && (*rank < 0 || *rank > 10)) throw ValidationError("rank must be in [0,10]");
    if (category) check_category_name(*category);
    if (rank == 0 && r.viable && !force)
        throw ValidationError("rank 0 marks a failed form; record " + std::to_string(id) +
                              " is viable (pass force to override)");
    if (category) ensure_category(*category);
    if (rank) {
        r.rank = rank;
        if (*rank == 0) r.viable = false;
    }
    if (category) r.category = category;
    r.provenance = Provenance::human;
    r.modified = options_.clock();
    save_records();
    return r;
}

SplitReport Store::split_dataset(double ratio, std::uint64_t seed)
{
    if (!(ratio > 0.0 && ratio <= 1.0)) throw ValidationError("split ratio must be in (0,1]");
    std::map<std::string, std::vector<std::uint64_t>> strata;
    for (const auto& r : records_)
        if (r.category || r.rank) strata[r.category.value_or("")].push_back(r.id);
    std::size_t labeled = 0;
    for (const auto& [_, ids] : strata) labeled += ids.size();
    if (labeled < 10) throw ValidationError("split needs at least 10 labeled records, have " + std::to_string(labeled));

    SplitReport rep;
    SplitMix64 rng(seed);
    splits_.clear();
    for (auto& [name, ids] : strata) {
        for (std::size_t i = ids.size(); i > 1; --i) std::swap(ids[i - 1], ids[rng.below(i)]);
        std::size_t val = 0;
        if (ids.size() < 2) {
            rep.warnings.push_back("category '" + name + "' has fewer than 2 records; placed in training");
        } else {
            val = static_cast<std::size_t>(std::floor(static_cast<double>(ids.size()) * (1.0 - ratio) + 1e-9));
        }
        for (std::size_t k = 0; k < ids.size(); ++k) splits_[ids[k]] = k < val ? Split::validation : Split::train;
        rep.validation += val;
        rep.train += ids.size() - val;
    }
    save_splits();
    return rep;
}

BatchResult Store::batch_generate(std::size_t n, const BatchSampler& sampler, std::uint64_t seed)
{
    if (n < 1 || n > 256) throw ValidationError("batch size must be in [1, 256]");
    BatchResult res;
    std::vector<Genotype> genotypes;
    SplitMix64 rng(seed);
    switch (sampler.kind) {
    case BatchSampler::Kind::uniform:
        for (std::size_t k = 0; k < n; ++k) {
            std::array<double, kGenotypeSize> u{};
            for (auto& v : u) v = rng.uniform();
            genotypes.push_back(make_genotype(u));
        }
        break;
    case BatchSampler::Kind::around: {
        if (!(sampler.sigma >= 0.0)) throw ValidationError("sigma must be non-negative");
        const Genotype src = record(sampler.source_id).genotype;
        for (std::size_t k = 0; k < n; ++k) {
            auto u = src.u;
            for (auto& v : u) v = std::clamp(v + sampler.sigma * rng.gaussian(), 0.0, 1.0);
            genotypes.push_back(make_genotype(u));
        }
        break;
    }
    case BatchSampler::Kind::monte_carlo: {
        const StoredModel m = load_model(sampler.model_id);
        if (m.space != SourceSpace::genotype) throw ValidationError("monte carlo sampling needs a genotype-space model");
        auto sample = monte_carlo_sample(mlp_predictor(m.model), sampler.criteria, n, seed);
        for (auto& c : sample.candidates) genotypes.push_back(c.genotype);
        res.warnings = std::move(sample.warnings);
        rng = SplitMix64(seed ^ 0x9E3779B97F4A7C15ULL);
        break;
    }
    }
    for (const auto& g : genotypes) res.ids.push_back(add_record(g, rng.next()).id);
    return res;
}

void Store::export_dataset(const fs::path& path) const { write_file_atomic(path, export_csv()); }

std::size_t Store::import_dataset(const fs::path& path)
{
    const auto incoming = parse_records_csv(read_file(path));
    for (std::size_t n = 0; n < incoming.size(); ++n)
        if (index_.count(incoming[n].id))
            throw StoreError("row " + std::to_string(n + 1) + ": id " + std::to_string(incoming[n].id) +
                             " already exists");
    for (const auto& r : incoming) {
        const fs::path img = root_ / r.image_path;
        const bool need_image = !fs::exists(img);
        const bool need_features = !r.features_path.empty() && !fs::exists(root_ / r.features_path);
        if (need_image || need_features) {
            const Image rendered = render(grow(r.genotype, r.seed, options_.cell_budget), options_.resolution);
            if (need_image) {
                fs::create_directories(img.parent_path());
                write_file_atomic(img, encode_pgm(rendered));
            }
            if (need_features) {
                const fs::path fp = root_ / r.features_path;
                fs::create_directories(fp.parent_path());
                write_file_atomic(fp, encode_features({{r.id, formlab::extract_features(rendered)}}, feature_layout::kDim));
            }
        }
        if (r.category) ensure_category(*r.category);
        records_.push_back(r);
    }
    std::sort(records_.begin(), records_.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    index_.clear();
    for (std::size_t i = 0; i < records_.size(); ++i) index_[records_[i].id] = i;
    save_records();
    return incoming.size();
}

std::optional<FeatureVector> Store::features(std::uint64_t id) const
{
    const auto& r = record(id);
    if (r.features_path.empty()) return std::nullopt;
    const fs::path p = root_ / r.features_path;
    if (!fs::exists(p)) return std::nullopt;
    const auto v = decode_features(read_file(p));
    auto it = v.find(id);
    if (it == v.end()) return std::nullopt;
    return it->second;
}

std::size_t Store::import_features(const fs::path& path)
{
    std::vector<std::uint64_t> ids;
    for (const auto& r : records_) ids.push_back(r.id);
    auto vectors = formlab::import_features(path, ids);
    if (vectors.empty()) return 0;
    const std::size_t dim = vectors.begin()->second.dim();
    const std::string stamp = options_.clock();
    for (auto& [id, v] : vectors) {
        v.source = FeatureSource::imported;
        auto& r = mutable_record(id);
        r.features_path = "features/" + std::to_string(id) + ".imported.aefv";
        write_file_atomic(root_ / r.features_path, encode_features({{id, v}}, dim));
        r.modified = stamp;
    }
    save_records();
    return vectors.size();
}

std::size_t Store::extract_features()
{
    for (auto& r : records_) {
        r.features_path = features_rel(r.id);
        write_file_atomic(root_ / r.features_path,
                          encode_features({{r.id, formlab::extract_features(image(r.id))}}, feature_layout::kDim));
    }
    save_records();
    return records_.size();
}

void Store::export_features(const fs::path& path) const
{
    std::map<std::uint64_t, FeatureVector> all;
    std::size_t dim = 0;
    for (const auto& r : records_) {
        auto f = features(r.id);
        if (!f) continue;
        if (dim == 0) dim = f->dim();
        if (f->dim() != dim) throw StoreError("stored feature vectors have mixed dimensions");
        all.emplace(r.id, std::move(*f));
    }
    formlab::export_features(path, all, dim);
}

std::string Store::next_model_id() const
{
    std::size_t n = 1;
    for (const auto& id : model_ids())
        if (id.size() > 1 && id[0] == 'm') n = std::max<std::size_t>(n, std::stoull(id.substr(1)) + 1);
    char buf[16];
    std::snprintf(buf, sizeof buf, "m%04zu", n);
    return buf;
}

std::vector<std::string> Store::model_ids() const
{
    std::vector<std::string> out;
    for (const auto& e : fs::directory_iterator(root_ / "models"))
        if (e.is_directory() && e.path().filename().string().front() != '.' && fs::exists(e.path() / "manifest.txt"))
            out.push_back(e.path().filename().string());
    std::sort(out.begin(), out.end());
    return out;
}

StoredModel Store::load_model(const std::string& id) const
{
    if (id.empty() || id.find_first_of("/\\.") != std::string::npos) throw StoreError("bad model id '" + id + "'");
    const fs::path dir = root_ / "models" / id;
    if (!fs::exists(dir / "manifest.txt")) throw StoreError("unknown model id '" + id + "'");
    StoredModel m;
    m.id = id;
    m.model = load_checkpoint(dir);
    std::istringstream in(read_file(dir / "manifest.txt"));
    std::string line;
    while (std::getline(in, line))
        if (line == "space = feature") m.space = SourceSpace::feature;
    return m;
}

std::string Store::model_metrics_json(const std::string& id) const
{
    load_model(id);
    return read_file(root_ / "models" / id / "metrics.json");
}

std::vector<double> Store::model_input(const StoredModel& m, std::uint64_t id) const
{
    if (m.space == SourceSpace::genotype) {
        const auto& u = record(id).genotype.u;
        return {u.begin(), u.end()};
    }
    auto f = features(id);
    if (!f) throw ValidationError("record " + std::to_string(id) + " has no features");
    return std::move(f->values);
}

TrainResult Store::train_job(const TrainRequest& req)
{
    LabeledDataset ds;
    ds.label_names = taxonomy_;
    const bool need_cat = req.target != HeadKind::regressor;
    const bool need_rank = req.target != HeadKind::classifier;
    if (need_cat && taxonomy_.size() < 2) throw ValidationError("classifier training needs at least two categories");
    for (const auto& r : records_) {
        if (r.provenance == Provenance::predicted && !req.include_pseudo) continue;
        auto sp = splits_.find(r.id);
        if (sp == splits_.end()) continue;
        if (need_cat && !r.category) continue;
        if (need_rank && !r.rank) continue;
        LabeledRow row;
        row.id = r.id;
        row.split = sp->second;
        if (r.category) {
            auto it = std::find(taxonomy_.begin(), taxonomy_.end(), *r.category);
            row.category = static_cast<int>(it - taxonomy_.begin());
        }
        if (r.rank) row.rank = *r.rank;
        if (req.space == SourceSpace::genotype) {
            row.input.assign(r.genotype.u.begin(), r.genotype.u.end());
        } else {
            auto f = features(r.id);
            if (!f) throw ValidationError("record " + std::to_string(r.id) + " has no features");
            row.input = std::move(f->values);
        }
        if (!need_cat) row.category.reset();
        if (!need_rank) row.rank.reset();
        ds.rows.push_back(std::move(row));
    }
    const auto train = ds.side(Split::train).size(), val = ds.side(Split::validation).size();
    if (train < 10 || val < 10)
        throw ValidationError("insufficient labels: " + std::to_string(train) + " train / " + std::to_string(val) +
                              " validation rows (need at least 10 per side)");
    ds.validate();

    const auto init = mlp_init(ds.input_dim(), req.target, need_cat ? taxonomy_ : std::vector<std::string>{},
                               req.init_seed);
    auto [model, history] = mlp_train(init, ds, req.config);
    const Metrics metrics = evaluate([&model](std::span<const double> x) { return mlp_predict(model, x); }, ds);

    TrainResult res;
    res.model_id = next_model_id();
    res.metrics = metrics;
    res.history = history;
    res.train_rows = train;
    res.validation_rows = val;
    const fs::path dir = root_ / "models" / ("." + res.model_id + ".tmp");
    fs::remove_all(dir);
    save_checkpoint(model, dir,
                    {{"space", to_string(req.space)},
                     {"include_pseudo", req.include_pseudo ? "1" : "0"},
                     {"train_rows", std::to_string(train)},
                     {"validation_rows", std::to_string(val)}});

    nlohmann::json j;
    j["model_id"] = res.model_id;
    j["space"] = to_string(req.space);
    j["target"] = to_string(req.target);
    j["validation_count"] = metrics.validation_count;
    if (metrics.has_category) {
        j["accuracy"] = metrics.accuracy;
        j["confusion"] = metrics.confusion;
        j["labels"] = model.label_names;
        auto q = nlohmann::json::array();
        for (const auto& row : metrics.quartiles)
            q.push_back({{"lower_percent", row.lower_percent},
                         {"upper_percent", row.upper_percent},
                         {"min_margin", row.min_margin},
                         {"max_margin", row.max_margin},
                         {"count", row.count},
                         {"correct", row.correct},
                         {"accuracy", row.accuracy}});
        j["quartiles"] = q;
    }
    if (metrics.has_rank) j["rank_rmse"] = metrics.rank_rmse;
    j["best_epoch"] = history.best_epoch;
    j["epochs_run"] = history.train_loss.size();
    write_file_atomic(dir / "metrics.json", j.dump(2) + "\n");
    fs::rename(dir, root_ / "models" / res.model_id);
    return res;
}

PseudoLabelResult Store::pseudo_label(const std::string& model_id, double tau)
{
    const StoredModel m = load_model(model_id);
    std::vector<UnlabeledRecord> pending;
    PseudoLabelResult pre;
    for (const auto& r : records_) {
        if (r.category) continue;
        UnlabeledRecord u{r.id, std::nullopt};
        try {
            u.features = model_input(m, r.id);
        } catch (const ValidationError&) {
        }
        pending.push_back(std::move(u));
    }
    auto res = formlab::pseudo_label(m.model, pending, tau);
    const std::string stamp = options_.clock();
    for (const auto& p : res.proposals) {
        auto& r = mutable_record(p.id);
        ensure_category(p.label);
        r.category = p.label;
        r.provenance = Provenance::predicted;
        r.modified = stamp;
    }
    if (!res.proposals.empty()) save_records();
    return res;
}

EmbeddingResult Store::embedding(SourceSpace space, EmbedMethod method, const TsneParams& params) const
{
    PointSet x;
    EmbeddingResult res;
    for (const auto& r : records_) {
        if (space == SourceSpace::genotype) {
            x.emplace_back(r.genotype.u.begin(), r.genotype.u.end());
        } else {
            auto f = features(r.id);
            if (!f) throw ValidationError("record " + std::to_string(r.id) + " has no features");
            x.push_back(std::move(f->values));
        }
        res.points.push_back({r.id, r.category, r.rank});
    }
    if (space == SourceSpace::feature && !x.empty()) {
        const auto norm = fit_normalizer(x);
        for (auto& row : x) row = normalize(row, norm);
    }
    res.layout = method == EmbedMethod::tsne ? tsne(x, params) : pca2(x);
    res.layout.space = space;
    return res;
}

std::vector<VerifyIssue> Store::verify() const
{
    std::vector<VerifyIssue> issues;
    for (const auto& r : records_) {
        const fs::path p = root_ / r.image_path;
        if (!fs::exists(p)) {
            issues.push_back({r.id, "image file missing"});
            continue;
        }
        Image stored;
        try {
            stored = read_pgm(p);
        } catch (const std::exception& e) {
            issues.push_back({r.id, std::string("image unreadable: ") + e.what()});
            continue;
        }
        const Image fresh = render(grow(r.genotype, r.seed, options_.cell_budget), stored.width);
        if (image_hash(fresh) != image_hash(stored))
            issues.push_back({r.id, "image hash " + hash_hex(image_hash(stored)) + " differs from re-render " +
                                        hash_hex(image_hash(fresh))});
    }
    return issues;
}

}  // namespace formlab
