#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "powerprof/cluster.hpp"
#include "powerprof/common.hpp"
#include "powerprof/features.hpp"
#include "powerprof/gan.hpp"
#include "powerprof/openset.hpp"

namespace powerprof {

// ---------------------------------------------------------------------------
// Artifact envelope
//
// Model-bearing outputs (GAN, catalog, classifier, manifest, review state)
// are wrapped in a versioned JSON envelope whose digest covers the payload,
// so silent corruption or drift is detectable on load. Plain tabular outputs
// (CSV, JSONL, scaler, clusters) keep their bare documented formats.
// ---------------------------------------------------------------------------

inline constexpr int kArtifactVersion = 1;

void save_artifact(const std::filesystem::path& path, const std::string& kind,
                   const nlohmann::json& payload);

// Verifies envelope shape, version, kind, and payload digest; returns the payload.
nlohmann::json load_artifact(const std::filesystem::path& path, const std::string& kind);

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

struct PipelineConfig {
    // input: either a prebuilt profiles JSONL, or raw telemetry + job log
    std::string profiles;
    std::string telemetry;
    std::string jobs;

    std::string out_dir;
    std::uint64_t seed = 0;  // master seed; stages derive their own streams

    GanConfig gan;
    double eps = 1.0;          // latent-space DBSCAN
    std::size_t min_pts = 8;
    CatalogParams catalog;
    ClassifierConfig classifier;
    double test_frac = 0.2;    // held-out share for the threshold sweep
    std::size_t sweep_grid = 200;
};

void validate_pipeline_config(const PipelineConfig& cfg);
nlohmann::json pipeline_config_to_json(const PipelineConfig& cfg);
// Missing keys keep defaults; unknown keys are rejected.
PipelineConfig pipeline_config_from_json(const nlohmann::json& j, const std::string& origin);

struct ArtifactRef {
    std::string path;  // relative to the run directory
    std::string digest;
};

struct StageRecord {
    std::string name;
    int version = 1;
    double wall_ms = 0.0;
};

struct RunManifest {
    nlohmann::json config;
    std::uint64_t seed = 0;
    std::map<std::string, std::string> inputs;       // name -> file digest
    std::map<std::string, ArtifactRef> artifacts;    // name -> {path, digest}
    std::vector<StageRecord> stages;
};

nlohmann::json manifest_to_payload(const RunManifest& m);
RunManifest manifest_from_payload(const nlohmann::json& payload);

// Every referenced artifact must exist under base_dir and match its digest.
void verify_manifest(const RunManifest& m, const std::filesystem::path& base_dir);

// Runs ingest -> features -> scaler -> gan.train -> embed -> cluster ->
// catalog -> train_closed -> sweep_threshold, persisting each stage's output
// under cfg.out_dir and writing manifest.json last. A stage failure is
// rethrown with a "stage=<name>: " prefix; artifacts written so far are left
// in place. Reruns with identical inputs and seed reproduce identical
// artifact bytes (the manifest's wall-clock fields excepted).
RunManifest run_pipeline(const PipelineConfig& cfg);

// ---------------------------------------------------------------------------
// Unknown pool and class proposals
// ---------------------------------------------------------------------------

struct PoolEntry {
    std::string job_id;
    std::vector<double> latent;
    std::vector<double> feature;  // raw (unstandardized) scale, for cataloging
    std::int64_t timestamp = 0;   // submit epoch when known, else 0
};

struct UnknownPool {
    std::vector<PoolEntry> entries;  // append-only between review cycles
};

// Appends predictions rejected as UNKNOWN, skipping job ids already pooled.
// Latents and features are looked up by job id and must cover every rejected
// job. Returns the number of entries actually added.
std::size_t pool_add_unknowns(UnknownPool& pool, const std::vector<Prediction>& preds,
                              const LatentMatrix& latents, const FeatureMatrix& features,
                              const std::map<std::string, std::int64_t>& submits);

struct ClassProposal {
    std::string proposal_id;
    std::vector<std::string> member_job_ids;  // sorted
    std::string medoid_job_id;
    std::size_t size = 0;
    int proposed_class_id = -1;   // assigned on approval
    std::string status = "pending";  // pending | approved | rejected
    std::string decided_by;
    std::int64_t decided_at = 0;
};

// DBSCAN over the pooled latents; clusters of at least min_class_size become
// pending proposals, sorted by size descending, ids numbered from first_seq.
// A pool smaller than min_pts cannot be clustered and raises DataError.
std::vector<ClassProposal> recluster_unknowns(const UnknownPool& pool, double eps,
                                              std::size_t min_pts, std::size_t min_class_size,
                                              std::size_t first_seq = 0);

// ---------------------------------------------------------------------------
// Review state: the pool, the proposals, and the decision log, persisted as
// one artifact so a review cycle survives process boundaries.
// ---------------------------------------------------------------------------

struct ReviewState {
    UnknownPool pool;
    std::vector<PoolEntry> promoted;  // entries moved out of the pool on approval
    std::vector<ClassProposal> proposals;
    std::vector<std::string> log;     // one line per decision
    std::size_t next_proposal_seq = 0;
};

nlohmann::json review_state_to_payload(const ReviewState& state);
ReviewState review_state_from_payload(const nlohmann::json& payload);

// Drops undecided proposals, reclusters the current pool, and appends the
// fresh pending proposals. Returns their ids.
std::vector<std::string> refresh_proposals(ReviewState& state, double eps, std::size_t min_pts,
                                           std::size_t min_class_size);

// Decides one pending proposal. "approve" assigns the catalog's next free
// class id (ids are never reused), adds the class to the catalog with its
// intensity label and latent-space medoid, and moves the members out of the
// pool; "reject" leaves the members pooled. Either way the decision is
// logged with operator and timestamp. Deciding twice raises DataError.
const ClassProposal& review_proposal(ReviewState& state, ClassCatalog& catalog,
                                     const std::string& proposal_id, const std::string& verdict,
                                     const std::string& operator_name, std::int64_t now_epoch);

// ---------------------------------------------------------------------------
// Retraining after promotions
// ---------------------------------------------------------------------------

struct RetrainResult {
    bool retrained = false;
    bool swept = false;
    std::string notice;           // set when skipped or when the sweep had no unknowns
    std::string archived_digest;  // sha256 of the previous model payload
    ClassifierModel model;
    SweepResult sweep;
    std::vector<std::string> holdout_ids;       // job ids of the held-out split
    std::map<int, double> holdout_class_recall; // per class, closed-set (tau = inf)
};

// Rebuilds the classifier over every catalog class (original plus promoted),
// holding out test_frac per class, and re-sweeps tau against whatever is
// still pooled. Without newly approved classes this is a no-op unless forced.
// Previously-known class ids must all survive into the new model.
RetrainResult retrain_classifier(const ClassifierModel& old_model, const ClassCatalog& catalog,
                                 const LatentMatrix& latents, const ReviewState& state,
                                 ClassifierConfig cfg, double test_frac, std::size_t sweep_grid,
                                 bool force);

// ---------------------------------------------------------------------------
// Temporal evaluation
// ---------------------------------------------------------------------------

struct TemporalOptions {
    std::vector<std::size_t> train_months = {1, 3, 6, 9, 11};
    std::vector<std::size_t> horizon_days = {7, 30, 90};
    ClassifierConfig classifier;
    std::int64_t epoch_base = -1;        // -1: earliest submit timestamp
    std::size_t min_train_per_class = 2; // classes thinner than this are not learnable
};

inline constexpr std::int64_t kSecondsPerMonth = 30LL * 86400LL;  // 30-day months

// One evaluated anchor: train on [train_begin, train_end), test on
// [test_begin, test_end). Windows are half-open and never overlap.
struct TemporalWindow {
    std::size_t train_months = 0;
    std::size_t horizon_days = 0;
    std::size_t anchor = 0;  // months after epoch_base
    std::int64_t train_begin = 0, train_end = 0;
    std::int64_t test_begin = 0, test_end = 0;
    std::size_t known_classes = 0;
    std::size_t train_jobs = 0, test_jobs = 0;
    double closed_acc = 0.0, open_acc = 0.0;
};

struct TemporalCell {
    std::size_t train_months = 0;
    std::size_t horizon_days = 0;
    std::size_t anchors = 0;  // 0 = the configuration never fit the data span
    double mean_closed_acc = 0.0;
    double mean_open_acc = 0.0;
    double mean_known_classes = 0.0;
};

struct TemporalResult {
    std::int64_t epoch_base = 0;
    std::vector<TemporalCell> cells;      // train_months x horizons, input order
    std::vector<TemporalWindow> windows;  // audit trail of every evaluated anchor
};

// For each (train months m, horizon h): slide a monthly anchor, train a
// closed-set classifier on the m training months (classes with enough
// samples there are the knowns), threshold at the training p95 distance,
// and score the following h days: closed accuracy over known-class samples,
// open accuracy with novel-class samples expected to be rejected. Cell
// values average the fitting anchors; configurations that never fit stay at
// zero anchors. No configuration fitting at all raises DataError naming the
// required span.
TemporalResult temporal_eval(const LatentMatrix& latents, const std::vector<int>& labels,
                             const std::vector<std::int64_t>& submits,
                             const TemporalOptions& opt);

// "train_months,horizon_days,anchors,mean_closed_acc,mean_open_acc,mean_known_classes";
// never-fitting cells keep empty accuracy fields.
std::string temporal_result_to_csv(const TemporalResult& result);

// Missing keys keep defaults; unknown keys are rejected. The "classifier"
// value is a full classifier config object.
TemporalOptions temporal_options_from_json(const nlohmann::json& j, const std::string& origin);

// "tau,tau_normalized,accuracy,known_acc,unknown_reject"
std::string sweep_curve_to_csv(const SweepResult& sweep);

// ---------------------------------------------------------------------------
// Review exclusivity: create <target>.lock or fail, remove on destruction.
// ---------------------------------------------------------------------------
class FileLock {
public:
    explicit FileLock(const std::filesystem::path& target);
    ~FileLock();
    FileLock(const FileLock&) = delete;
    FileLock& operator=(const FileLock&) = delete;

private:
    std::filesystem::path lock_path_;
};

}  // namespace powerprof
