#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "formlab/embed.hpp"
#include "formlab/explore.hpp"
#include "formlab/features.hpp"
#include "formlab/metrics.hpp"
#include "formlab/mlp.hpp"
#include "formlab/morphogen.hpp"
#include "formlab/pseudo_label.hpp"

namespace formlab {

enum class Provenance { human, predicted };

std::string to_string(Provenance p);
Provenance provenance_from_string(const std::string& s);

struct PhenotypeRecord {
    std::uint64_t id = 0;
    Genotype genotype;
    std::uint64_t seed = 0;
    std::string image_path;     ///< relative to the store root
    std::string features_path;  ///< relative; empty when no features are stored
    std::optional<int> rank;
    std::optional<std::string> category;
    Provenance provenance = Provenance::human;
    bool viable = true;
    std::string created;  ///< RFC-3339 UTC
    std::string modified;

    bool operator==(const PhenotypeRecord&) const = default;
};

/// records.csv: id, u0..u11, seed, image_path, features_path, rank, category,
/// provenance, viable, created, modified.
std::string records_csv(const std::vector<PhenotypeRecord>& records);

/// Validates every row; errors name the 1-based data row.
std::vector<PhenotypeRecord> parse_records_csv(const std::string& text);

std::string utc_timestamp();

/// Writes through a temporary sibling and renames over the target.
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);
std::string read_file(const std::filesystem::path& path);

struct StoreOptions {
    int resolution = kDefaultResolution;
    std::size_t cell_budget = kDefaultCellBudget;
    std::function<std::string()> clock = utc_timestamp;
};

struct SplitReport {
    std::size_t train = 0;
    std::size_t validation = 0;
    std::vector<std::string> warnings;
};

struct BatchSampler {
    enum class Kind { uniform, monte_carlo, around };
    Kind kind = Kind::uniform;
    std::string model_id;  ///< monte_carlo: genotype-space model
    SampleCriteria criteria;
    std::uint64_t source_id = 0;  ///< around
    double sigma = 0.0;           ///< around
};

struct BatchResult {
    std::vector<std::uint64_t> ids;
    std::vector<std::string> warnings;
};

struct TrainRequest {
    SourceSpace space = SourceSpace::genotype;
    HeadKind target = HeadKind::classifier;
    TrainConfig config;
    std::uint64_t init_seed = 0;
    bool include_pseudo = false;
};

struct TrainResult {
    std::string model_id;
    Metrics metrics;
    TrainingHistory history;
    std::size_t train_rows = 0;
    std::size_t validation_rows = 0;
};

struct StoredModel {
    std::string id;
    SourceSpace space = SourceSpace::genotype;
    MlpModel model;
};

struct VerifyIssue {
    std::uint64_t id = 0;
    std::string problem;
};

struct EmbeddingResult {
    EmbeddingLayout layout;
    std::vector<LayoutPoint> points;
};

/// Directory-backed population store: records.csv (authoritative), images/
/// (PGM), features/ (AEFV), models/ (checkpoints), taxonomy.txt, splits.csv.
/// An exclusive advisory lock on store.lock is held for the object's lifetime.
/// Not internally synchronized.
class Store {
public:
    static Store open(const std::filesystem::path& root, StoreOptions options = {});

    Store(Store&& other) noexcept;
    Store& operator=(Store&&) = delete;
    Store(const Store&) = delete;
    ~Store();

    const std::filesystem::path& root() const { return root_; }
    const StoreOptions& options() const { return options_; }

    const std::vector<PhenotypeRecord>& records() const { return records_; }
    const PhenotypeRecord& record(std::uint64_t id) const;
    Image image(std::uint64_t id) const;

    /// Grows, renders and featurizes; empty forms get category "empty", rank 0
    /// and provenance predicted.
    const PhenotypeRecord& add_record(const Genotype& g, std::uint64_t seed);

    /// Rank 0 on a viable form requires `force`, which marks the form non-viable.
    const PhenotypeRecord& submit_judgement(std::uint64_t id, std::optional<int> rank,
                                            std::optional<std::string> category, bool force = false);

    const std::vector<std::string>& taxonomy() const { return taxonomy_; }
    void add_category(const std::string& name);
    void remove_category(const std::string& name);

    SplitReport split_dataset(double ratio = 0.8, std::uint64_t seed = 0);
    const std::map<std::uint64_t, Split>& splits() const { return splits_; }

    BatchResult batch_generate(std::size_t n, const BatchSampler& sampler, std::uint64_t seed);

    std::string export_csv() const { return records_csv(records_); }
    void export_dataset(const std::filesystem::path& path) const;
    /// Adds every row of an exported CSV; the whole import fails on the first
    /// malformed row or an id already present. Missing images are re-rendered.
    std::size_t import_dataset(const std::filesystem::path& path);

    /// Stores externally computed vectors (AEFV) as each record's features.
    std::size_t import_features(const std::filesystem::path& path);
    /// Recomputes the built-in descriptor for every record.
    std::size_t extract_features();
    std::optional<FeatureVector> features(std::uint64_t id) const;
    void export_features(const std::filesystem::path& path) const;

    TrainResult train_job(const TrainRequest& req);
    std::vector<std::string> model_ids() const;
    StoredModel load_model(const std::string& id) const;
    std::string model_metrics_json(const std::string& id) const;

    /// Model input for a record in the model's space.
    std::vector<double> model_input(const StoredModel& m, std::uint64_t id) const;

    /// Labels uncategorized records whose predicted margin reaches tau.
    PseudoLabelResult pseudo_label(const std::string& model_id, double tau);

    EmbeddingResult embedding(SourceSpace space, EmbedMethod method, const TsneParams& params) const;

    /// Re-renders every record and compares against the stored image.
    std::vector<VerifyIssue> verify() const;

private:
    Store(std::filesystem::path root, StoreOptions options, int lock_fd);

    PhenotypeRecord& mutable_record(std::uint64_t id);
    void save_records() const;
    void save_taxonomy() const;
    void save_splits() const;
    void ensure_category(const std::string& name);
    std::string next_model_id() const;

    std::filesystem::path root_;
    StoreOptions options_;
    int lock_fd_ = -1;
    std::vector<PhenotypeRecord> records_;
    std::map<std::uint64_t, std::size_t> index_;
    std::vector<std::string> taxonomy_;
    std::map<std::uint64_t, Split> splits_;
};

}  // namespace formlab
