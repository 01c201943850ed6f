// powerprof — job power profiling pipeline front end.
//
// Subcommands cover the whole flow: synthesize or ingest profiles, extract
// features, train the embedding GAN, cluster latents, build the class
// catalog, train and serve the open-set classifier, and run the review loop
// that promotes recurring unknowns into new classes. `run` drives the whole
// pipeline from one JSON config. Exit codes: 0 success, 2 config error,
// 3 data error, 4 numeric failure.

#include <cinttypes>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "powerprof/cluster.hpp"
#include "powerprof/common.hpp"
#include "powerprof/features.hpp"
#include "powerprof/gan.hpp"
#include "powerprof/ingest.hpp"
#include "powerprof/openset.hpp"
#include "powerprof/synth.hpp"
#include "powerprof/workflow.hpp"

namespace {

using json = nlohmann::json;
using namespace powerprof;

// Options shared across subcommands; each command reads the fields it owns.
struct Opts {
    // global
    std::string config;
    std::string out;
    std::uint64_t seed = 0;
    bool seed_given = false;
    std::string log_level = "info";

    // inputs
    std::string spec;
    std::string telemetry;
    std::string jobs;
    std::string profiles;
    std::string features;
    std::string model;
    std::string latents;
    std::string clusters;
    std::string catalog;
    std::string labels;
    std::string state;
    std::string predictions;
    std::string known;
    std::string known_labels;
    std::string unknown;
    std::string pipeline_config;

    // extra outputs
    std::string scaler_out;
    std::string drops_out;
    std::string windows_out;
    std::string model_out;

    // knobs
    std::size_t per_class = 250;
    std::size_t min_len = 32;
    std::size_t max_len = 96;
    std::int64_t year_start = 1700000000;
    std::string prefix = "synth";
    std::string algo = "dbscan";
    double eps = 1.0;
    std::size_t min_pts = 8;
    std::size_t k = 8;
    CatalogParams catalog_params;
    std::string threshold = "auto";
    std::size_t grid = 200;
    double test_frac = 0.2;
    bool force = false;

    // review
    bool list = false;
    std::string approve;
    std::string reject;
    std::string operator_name;
};

json read_json_file(const std::string& path, const char* what) {
    const std::string text = read_text_file(path);
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded()) {
        throw ConfigError(path + ": " + what + " is not valid JSON");
    }
    return j;
}

void require(const std::string& value, const char* flag) {
    if (value.empty()) throw ConfigError(std::string("missing required ") + flag);
}

// Validates the flag before any file is touched; "auto" resolves to the
// model's stored tau once the model is loaded.
void check_threshold_flag(const std::string& s) {
    if (s == "auto") return;
    try {
        (void)parse_double(s, "--threshold");
    } catch (const DataError& e) {
        throw ConfigError(e.what());
    }
}

double resolve_threshold(const std::string& s, const ClassifierModel& model) {
    if (s == "auto") return model.tau;
    return parse_double(s, "--threshold");
}

// Accepts either a labels CSV (job_id,class_id,submit_epoch) or a catalog
// artifact; catalogs label members with their class id and residual jobs -1.
std::map<std::string, int> load_label_map(const std::string& path) {
    const std::string text = read_text_file(path);
    std::size_t first = text.find_first_not_of(" \t\r\n");
    std::map<std::string, int> out;
    if (first != std::string::npos && text[first] == '{') {
        ClassCatalog catalog = catalog_from_payload(load_artifact(path, "catalog"));
        for (const CatalogClass& c : catalog.classes) {
            for (const std::string& id : c.member_job_ids) out[id] = c.class_id;
        }
        for (const std::string& id : catalog.residual) out[id] = -1;
        return out;
    }
    for (const LabelRow& row : parse_labels_text(text, path)) {
        out[row.job_id] = row.class_id;
    }
    return out;
}

std::vector<int> align_labels(const LatentMatrix& latents, const std::map<std::string, int>& map,
                              const std::string& origin) {
    std::vector<int> labels;
    labels.reserve(latents.job_ids.size());
    for (const std::string& id : latents.job_ids) {
        auto it = map.find(id);
        if (it == map.end()) {
            throw DataError(origin + ": no label for job " + id);
        }
        labels.push_back(it->second);
    }
    return labels;
}

void write_profile_csv(const std::filesystem::path& path, const JobProfile& profile) {
    std::string csv = "t_s,power_w\n";
    for (std::size_t i = 0; i < profile.values.size(); ++i) {
        csv += std::to_string(i * profile.step) + "," + fmt_double(profile.values[i]) + "\n";
    }
    write_text_file(path, csv);
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

void cmd_synth(const Opts& o) {
    require(o.spec, "--spec");
    require(o.out, "--out");
    std::vector<PatternSpec> specs = parse_pattern_specs(o.spec);
    SynthConfig cfg;
    cfg.jobs_per_class = o.per_class;
    cfg.min_len = o.min_len;
    cfg.max_len = o.max_len;
    cfg.year_start_epoch = o.year_start;
    cfg.prefix = o.prefix;
    SynthDataset ds = generate_dataset(specs, cfg, o.seed);
    const std::filesystem::path dir(o.out);
    std::filesystem::create_directories(dir);
    write_profiles(dir / "profiles.jsonl", ds.profiles);
    write_labels(dir / "labels.csv", ds);
    std::printf("synth: %zu classes, %zu profiles -> %s\n", specs.size(), ds.profiles.size(),
                dir.string().c_str());
}

void cmd_ingest(const Opts& o) {
    require(o.telemetry, "--telemetry");
    require(o.jobs, "--jobs");
    require(o.out, "--out");
    std::vector<PowerSample> telemetry = parse_telemetry(o.telemetry);
    std::vector<JobRecord> jobs = parse_jobs(o.jobs);
    BuildResult built = build_profiles(jobs, telemetry);
    write_profiles(o.out, built.profiles);
    if (!o.drops_out.empty()) {
        std::string csv = "job_id,reason\n";
        for (const DropRecord& d : built.drops) csv += d.job_id + "," + d.reason + "\n";
        write_text_file(o.drops_out, csv);
    }
    for (const DropRecord& d : built.drops) {
        log_info("dropped " + d.job_id + ": " + d.reason);
    }
    std::printf("ingest: %zu profiles built, %zu jobs dropped -> %s\n", built.profiles.size(),
                built.drops.size(), o.out.c_str());
}

void cmd_features(const Opts& o) {
    require(o.profiles, "--profiles");
    require(o.out, "--out");
    std::vector<JobProfile> profiles = read_profiles(o.profiles);
    FeatureMatrix m = extract_feature_matrix(profiles);
    write_feature_matrix(o.out, m);
    if (!o.scaler_out.empty()) {
        write_scaler(o.scaler_out, fit_scaler(m));
    }
    std::printf("features: %zu rows x %zu columns -> %s\n", m.rows.size(), kNumFeatures,
                o.out.c_str());
}

void cmd_train_gan(const Opts& o) {
    require(o.features, "--features");
    require(o.out, "--out");
    GanConfig cfg;
    if (!o.config.empty()) {
        cfg = gan_config_from_json(read_json_file(o.config, "GAN config"), o.config);
    }
    if (o.seed_given) cfg.seed = o.seed;
    FeatureMatrix raw = read_feature_matrix(o.features);
    Scaler scaler = fit_scaler(raw);
    FeatureMatrix standardized = apply_scaler(scaler, raw);
    GanModel model = train_gan(standardized, cfg, &scaler);
    save_artifact(o.out, "gan-model", gan_model_to_payload(model));
    const GanEpochStats& last = model.log.epochs.back();
    std::printf("train-gan: %zu epochs on %zu rows, final recon MSE %s -> %s\n", cfg.epochs,
                raw.rows.size(), fmt_double(last.recon_mse).c_str(), o.out.c_str());
}

void cmd_embed(const Opts& o) {
    require(o.model, "--model");
    require(o.features, "--features");
    require(o.out, "--out");
    GanModel model = gan_model_from_payload(load_artifact(o.model, "gan-model"));
    if (model.scaler.means.empty()) {
        throw DataError(o.model + ": model carries no scaler; cannot embed raw features");
    }
    FeatureMatrix raw = read_feature_matrix(o.features);
    FeatureMatrix standardized = apply_scaler(model.scaler, raw);
    LatentMatrix latents = encode_features(model, standardized);
    write_latents(o.out, latents);
    std::printf("embed: %zu rows -> %s\n", latents.rows.size(), o.out.c_str());
}

void cmd_cluster(const Opts& o) {
    require(o.latents, "--latents");
    require(o.out, "--out");
    if (o.algo != "dbscan" && o.algo != "kmeans") {
        throw ConfigError("--algo must be dbscan or kmeans, got \"" + o.algo + "\"");
    }
    LatentMatrix latents = read_latents(o.latents);
    std::vector<Point> points(latents.rows.begin(), latents.rows.end());
    ClusterResult result = o.algo == "dbscan" ? dbscan(points, o.eps, o.min_pts)
                                              : kmeans(points, o.k, o.seed);
    write_cluster_result(o.out, result, latents.job_ids);
    std::size_t noise = 0;
    int max_label = -1;
    for (int label : result.labels) {
        if (label < 0) ++noise;
        max_label = std::max(max_label, label);
    }
    std::printf("cluster: %s found %d cluster(s), %zu noise point(s) -> %s\n", o.algo.c_str(),
                max_label + 1, noise, o.out.c_str());
}

void cmd_label(const Opts& o) {
    require(o.clusters, "--clusters");
    require(o.profiles, "--profiles");
    require(o.features, "--features");
    require(o.out, "--out");
    std::vector<std::string> ids;
    ClusterResult result =
        cluster_result_from_json(read_text_file(o.clusters), o.clusters, &ids);
    FeatureMatrix raw = read_feature_matrix(o.features);
    std::unordered_map<std::string, std::size_t> row_of;
    for (std::size_t i = 0; i < raw.job_ids.size(); ++i) row_of[raw.job_ids[i]] = i;

    FeatureMatrix ordered;
    ordered.job_ids = ids;
    ordered.rows.reserve(ids.size());
    for (const std::string& id : ids) {
        auto it = row_of.find(id);
        if (it == row_of.end()) throw DataError(o.features + ": no feature row for job " + id);
        ordered.rows.push_back(raw.rows[it->second]);
    }

    std::vector<Point> latent_points;
    const std::vector<Point>* latents_ptr = nullptr;
    if (!o.latents.empty()) {
        LatentMatrix latents = read_latents(o.latents);
        std::unordered_map<std::string, std::size_t> lrow;
        for (std::size_t i = 0; i < latents.job_ids.size(); ++i) lrow[latents.job_ids[i]] = i;
        latent_points.reserve(ids.size());
        for (const std::string& id : ids) {
            auto it = lrow.find(id);
            if (it == lrow.end()) throw DataError(o.latents + ": no latent row for job " + id);
            latent_points.push_back(latents.rows[it->second]);
        }
        latents_ptr = &latent_points;
    }

    std::vector<JobProfile> profiles = read_profiles(o.profiles);
    ClassCatalog catalog = build_catalog(result, ordered, profiles, latents_ptr, o.catalog_params);
    save_artifact(o.out, "catalog", catalog_to_payload(catalog));
    std::printf("label: %zu class(es), %zu residual job(s) -> %s\n", catalog.classes.size(),
                catalog.residual.size(), o.out.c_str());
    for (const CatalogClass& c : catalog.classes) {
        std::printf("  class %d  %-3s  %zu members, medoid %s\n", c.class_id,
                    c.intensity.c_str(), c.member_job_ids.size(), c.medoid_job_id.c_str());
    }
}

void cmd_train_classifier(const Opts& o) {
    require(o.latents, "--latents");
    require(o.catalog, "--catalog");
    require(o.out, "--out");
    json catalog_payload = load_artifact(o.catalog, "catalog");
    ClassCatalog catalog = catalog_from_payload(catalog_payload);
    LatentMatrix all = read_latents(o.latents);
    std::unordered_map<std::string, std::size_t> row_of;
    for (std::size_t i = 0; i < all.job_ids.size(); ++i) row_of[all.job_ids[i]] = i;

    LatentMatrix train;
    std::vector<int> labels;
    for (const CatalogClass& c : catalog.classes) {
        for (const std::string& id : c.member_job_ids) {
            auto it = row_of.find(id);
            if (it == row_of.end()) throw DataError(o.latents + ": no latent row for job " + id);
            train.job_ids.push_back(id);
            train.rows.push_back(all.rows[it->second]);
            labels.push_back(c.class_id);
        }
    }

    ClassifierConfig cfg;
    if (!o.config.empty()) {
        cfg = classifier_config_from_json(read_json_file(o.config, "classifier config"),
                                          o.config);
    }
    if (o.seed_given) cfg.seed = o.seed;
    ClassifierModel model = train_closed(train, labels, cfg);
    model.catalog_ref = sha256_hex(catalog_payload.dump());
    save_artifact(o.out, "classifier", classifier_to_payload(model));
    std::printf("train-classifier: %zu classes on %zu rows -> %s\n", model.class_ids.size(),
                train.rows.size(), o.out.c_str());
}

void cmd_classify(const Opts& o) {
    require(o.model, "--model");
    require(o.latents, "--latents");
    require(o.out, "--out");
    check_threshold_flag(o.threshold);
    ClassifierModel model = classifier_from_payload(load_artifact(o.model, "classifier"));
    LatentMatrix latents = read_latents(o.latents);
    const double tau = resolve_threshold(o.threshold, model);
    std::vector<Prediction> preds = predict(model, latents, tau);
    write_text_file(o.out, predictions_to_jsonl(preds));
    std::size_t unknown = 0;
    for (const Prediction& p : preds) {
        if (p.outcome < 0) ++unknown;
    }
    std::printf("classify: %zu jobs, %zu assigned, %zu UNKNOWN (tau %s) -> %s\n", preds.size(),
                preds.size() - unknown, unknown, fmt_double(tau).c_str(), o.out.c_str());
}

void cmd_sweep(const Opts& o) {
    require(o.model, "--model");
    require(o.known, "--known");
    require(o.known_labels, "--known-labels");
    require(o.unknown, "--unknown");
    require(o.out, "--out");
    ClassifierModel model = classifier_from_payload(load_artifact(o.model, "classifier"));
    LatentMatrix known = read_latents(o.known);
    LatentMatrix unknown = read_latents(o.unknown);
    std::vector<int> labels = align_labels(known, load_label_map(o.known_labels),
                                           o.known_labels);
    SweepResult sweep = sweep_threshold(model, known, labels, unknown, o.grid);
    write_text_file(o.out, sweep_curve_to_csv(sweep));
    if (!o.model_out.empty()) {
        model.tau = sweep.tau_star;
        save_artifact(o.model_out, "classifier", classifier_to_payload(model));
    }
    std::printf("sweep: tau* %s, balanced accuracy %s -> %s\n",
                fmt_double(sweep.tau_star).c_str(), fmt_double(sweep.best_accuracy).c_str(),
                o.out.c_str());
}

void cmd_evaluate(const Opts& o) {
    require(o.model, "--model");
    require(o.latents, "--latents");
    require(o.labels, "--labels");
    require(o.out, "--out");
    check_threshold_flag(o.threshold);
    ClassifierModel model = classifier_from_payload(load_artifact(o.model, "classifier"));
    LatentMatrix latents = read_latents(o.latents);
    std::vector<int> labels = align_labels(latents, load_label_map(o.labels), o.labels);
    const double tau = resolve_threshold(o.threshold, model);
    EvalReport report = evaluate(model, latents, labels, tau);

    json confusion = json::array();
    for (std::size_t r = 0; r < report.confusion.rows; ++r) {
        json row = json::array();
        for (std::size_t c = 0; c < report.confusion.cols; ++c) {
            row.push_back(report.confusion.at(r, c));
        }
        confusion.push_back(row);
    }
    // The confusion matrix carries one extra trailing row/column for UNKNOWN.
    json out = {{"closed_acc", report.closed_acc},
                {"open_acc", report.open_acc},
                {"has_unknown", report.has_unknown},
                {"tau", tau},
                {"class_ids", report.confusion_class_ids},
                {"confusion", confusion}};
    write_text_file(o.out, out.dump(2) + "\n");
    std::printf("evaluate: closed_acc %s, open_acc %s (tau %s) -> %s\n",
                fmt_double(report.closed_acc).c_str(), fmt_double(report.open_acc).c_str(),
                fmt_double(tau).c_str(), o.out.c_str());
}

void cmd_temporal_eval(const Opts& o) {
    require(o.latents, "--latents");
    require(o.labels, "--labels");
    require(o.out, "--out");
    LatentMatrix latents = read_latents(o.latents);
    std::vector<LabelRow> rows = read_labels(o.labels);
    std::map<std::string, int> class_of;
    std::map<std::string, std::int64_t> submit_of;
    for (const LabelRow& r : rows) {
        class_of[r.job_id] = r.class_id;
        submit_of[r.job_id] = r.submit_epoch;
    }
    std::vector<int> labels;
    std::vector<std::int64_t> submits;
    for (const std::string& id : latents.job_ids) {
        auto c = class_of.find(id);
        if (c == class_of.end()) throw DataError(o.labels + ": no label for job " + id);
        labels.push_back(c->second);
        submits.push_back(submit_of[id]);
    }

    TemporalOptions opt;
    if (!o.config.empty()) {
        opt = temporal_options_from_json(read_json_file(o.config, "temporal options"), o.config);
    }
    if (o.seed_given) opt.classifier.seed = o.seed;
    TemporalResult result = temporal_eval(latents, labels, submits, opt);
    write_text_file(o.out, temporal_result_to_csv(result));
    if (!o.windows_out.empty()) {
        std::string csv =
            "train_months,horizon_days,anchor,train_begin,train_end,test_begin,test_end,"
            "known_classes,train_jobs,test_jobs,closed_acc,open_acc\n";
        for (const TemporalWindow& w : result.windows) {
            csv += std::to_string(w.train_months) + "," + std::to_string(w.horizon_days) + "," +
                   std::to_string(w.anchor) + "," + std::to_string(w.train_begin) + "," +
                   std::to_string(w.train_end) + "," + std::to_string(w.test_begin) + "," +
                   std::to_string(w.test_end) + "," + std::to_string(w.known_classes) + "," +
                   std::to_string(w.train_jobs) + "," + std::to_string(w.test_jobs) + "," +
                   fmt_double(w.closed_acc) + "," + fmt_double(w.open_acc) + "\n";
        }
        write_text_file(o.windows_out, csv);
    }
    std::printf("temporal-eval: %zu cells, %zu windows, epoch base %" PRId64 " -> %s\n",
                result.cells.size(), result.windows.size(), result.epoch_base, o.out.c_str());
}

void cmd_pool(const Opts& o) {
    require(o.state, "--state");
    require(o.predictions, "--predictions");
    require(o.latents, "--latents");
    require(o.features, "--features");
    ReviewState state;
    if (std::filesystem::exists(o.state)) {
        state = review_state_from_payload(load_artifact(o.state, "review-state"));
    }
    std::vector<Prediction> preds =
        predictions_from_jsonl(read_text_file(o.predictions), o.predictions);
    LatentMatrix latents = read_latents(o.latents);
    FeatureMatrix features = read_feature_matrix(o.features);
    std::map<std::string, std::int64_t> submits;
    if (!o.labels.empty()) {
        for (const LabelRow& r : read_labels(o.labels)) submits[r.job_id] = r.submit_epoch;
    }
    std::size_t added = pool_add_unknowns(state.pool, preds, latents, features, submits);
    save_artifact(o.state, "review-state", review_state_to_payload(state));
    std::printf("pool: %zu job(s) added, pool now holds %zu -> %s\n", added,
                state.pool.entries.size(), o.state.c_str());
}

void cmd_recluster(const Opts& o) {
    require(o.state, "--state");
    ReviewState state = review_state_from_payload(load_artifact(o.state, "review-state"));
    std::vector<std::string> fresh =
        refresh_proposals(state, o.eps, o.min_pts, o.catalog_params.min_class_size);
    save_artifact(o.state, "review-state", review_state_to_payload(state));
    std::printf("recluster: %zu pooled job(s), %zu fresh proposal(s) -> %s\n",
                state.pool.entries.size(), fresh.size(), o.state.c_str());

    // Medoid and sample-member CSVs for external plotting.
    if (!o.profiles.empty() && !fresh.empty()) {
        std::vector<JobProfile> profiles = read_profiles(o.profiles);
        std::unordered_map<std::string, const JobProfile*> by_id;
        for (const JobProfile& p : profiles) by_id[p.job_id] = &p;
        const std::filesystem::path dir =
            o.out.empty() ? std::filesystem::path(o.state).parent_path()
                          : std::filesystem::path(o.out);
        if (!dir.empty()) std::filesystem::create_directories(dir);
        std::set<std::string> fresh_set(fresh.begin(), fresh.end());
        for (const ClassProposal& p : state.proposals) {
            if (!fresh_set.count(p.proposal_id)) continue;
            auto medoid = by_id.find(p.medoid_job_id);
            if (medoid != by_id.end()) {
                write_profile_csv(dir / (p.proposal_id + "_medoid.csv"), *medoid->second);
            }
            std::size_t written = 0;
            for (const std::string& id : p.member_job_ids) {
                if (written >= 3) break;
                auto member = by_id.find(id);
                if (member == by_id.end()) continue;
                write_profile_csv(
                    dir / (p.proposal_id + "_sample" + std::to_string(written) + ".csv"),
                    *member->second);
                ++written;
            }
        }
    }
    for (const ClassProposal& p : state.proposals) {
        if (p.status == "pending") {
            std::printf("  %s  %zu members, medoid %s\n", p.proposal_id.c_str(), p.size,
                        p.medoid_job_id.c_str());
        }
    }
}

void cmd_review(const Opts& o) {
    require(o.state, "--state");
    ReviewState state = review_state_from_payload(load_artifact(o.state, "review-state"));

    if (o.list) {
        std::printf("%-10s %-9s %7s %5s  %-14s %s\n", "proposal", "status", "members", "class",
                    "medoid", "decided by");
        for (const ClassProposal& p : state.proposals) {
            std::string class_col = p.proposed_class_id < 0
                                        ? std::string("-")
                                        : std::to_string(p.proposed_class_id);
            std::printf("%-10s %-9s %7zu %5s  %-14s %s\n", p.proposal_id.c_str(),
                        p.status.c_str(), p.size, class_col.c_str(), p.medoid_job_id.c_str(),
                        p.decided_by.c_str());
        }
        std::printf("pool %zu, promoted %zu, decisions %zu\n", state.pool.entries.size(),
                    state.promoted.size(), state.log.size());
        return;
    }

    if (o.approve.empty() == o.reject.empty()) {
        throw ConfigError("review needs exactly one of --list, --approve ID, --reject ID");
    }
    require(o.catalog, "--catalog");
    require(o.operator_name, "--operator");
    const std::string& id = o.approve.empty() ? o.reject : o.approve;
    const std::string verdict = o.approve.empty() ? "reject" : "approve";

    // Single-writer review: decisions mutate the catalog and the state
    // together, so both writes happen under one catalog lock.
    FileLock lock{std::filesystem::path(o.catalog)};
    ClassCatalog catalog = catalog_from_payload(load_artifact(o.catalog, "catalog"));
    const ClassProposal& decided = review_proposal(state, catalog, id, verdict, o.operator_name,
                                                   static_cast<std::int64_t>(std::time(nullptr)));
    save_artifact(o.catalog, "catalog", catalog_to_payload(catalog));
    save_artifact(o.state, "review-state", review_state_to_payload(state));
    if (verdict == "approve") {
        std::printf("review: %s approved as class %d (%zu members)\n", id.c_str(),
                    decided.proposed_class_id, decided.size);
    } else {
        std::printf("review: %s rejected, %zu member(s) stay pooled\n", id.c_str(), decided.size);
    }
}

void cmd_retrain(const Opts& o) {
    // Full-pipeline redo: rebuild every artifact instead of just the classifier.
    if (!o.pipeline_config.empty()) {
        PipelineConfig cfg = pipeline_config_from_json(
            read_json_file(o.pipeline_config, "pipeline config"), o.pipeline_config);
        if (!o.out.empty()) cfg.out_dir = o.out;
        if (o.seed_given) cfg.seed = o.seed;
        RunManifest manifest = run_pipeline(cfg);
        std::printf("retrain: full pipeline rerun, %zu artifacts in %s\n",
                    manifest.artifacts.size(), cfg.out_dir.c_str());
        return;
    }

    require(o.model, "--model");
    require(o.catalog, "--catalog");
    require(o.state, "--state");
    require(o.latents, "--latents");
    require(o.out, "--out");
    ClassifierModel old_model = classifier_from_payload(load_artifact(o.model, "classifier"));
    json catalog_payload = load_artifact(o.catalog, "catalog");
    ClassCatalog catalog = catalog_from_payload(catalog_payload);
    ReviewState state = review_state_from_payload(load_artifact(o.state, "review-state"));
    LatentMatrix latents = read_latents(o.latents);

    ClassifierConfig cfg = old_model.config;
    if (!o.config.empty()) {
        cfg = classifier_config_from_json(read_json_file(o.config, "classifier config"),
                                          o.config);
    }
    if (o.seed_given) cfg.seed = o.seed;

    RetrainResult result =
        retrain_classifier(old_model, catalog, latents, state, cfg, o.test_frac, o.grid, o.force);
    if (!result.notice.empty()) std::printf("retrain: %s\n", result.notice.c_str());
    if (!result.retrained) return;

    result.model.catalog_ref = sha256_hex(catalog_payload.dump());
    save_artifact(o.out + ".prev", "classifier", classifier_to_payload(old_model));
    save_artifact(o.out, "classifier", classifier_to_payload(result.model));
    std::printf("retrain: %zu classes, tau %s, previous model archived as %s.prev\n",
                result.model.class_ids.size(), fmt_double(result.model.tau).c_str(),
                o.out.c_str());
    for (const auto& [class_id, recall] : result.holdout_class_recall) {
        std::printf("  class %d holdout recall %s\n", class_id, fmt_double(recall).c_str());
    }
}

void cmd_run(const Opts& o) {
    require(o.config, "--config");
    PipelineConfig cfg =
        pipeline_config_from_json(read_json_file(o.config, "pipeline config"), o.config);
    if (!o.out.empty()) cfg.out_dir = o.out;
    if (o.seed_given) cfg.seed = o.seed;
    RunManifest manifest = run_pipeline(cfg);
    for (const StageRecord& s : manifest.stages) {
        std::printf("  %-16s %6.1f ms\n", s.name.c_str(), s.wall_ms);
    }
    std::printf("run: %zu artifacts, manifest -> %s/manifest.json\n", manifest.artifacts.size(),
                cfg.out_dir.c_str());
}

}  // namespace

int main(int argc, char** argv) {
    Opts o;
    CLI::App app{"job power profile pipeline"};
    app.require_subcommand(1);
    app.fallthrough();
    app.add_option("--config", o.config, "JSON config file for the subcommand");
    app.add_option("--out", o.out, "output path (a directory for synth/run)");
    app.add_option("--seed", o.seed, "master random seed");
    app.add_option("--log-level", o.log_level, "debug|info|warn|error")
        ->capture_default_str();

    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic labeled dataset");
    synth->add_option("--spec", o.spec, "pattern spec JSON file");
    synth->add_option("--per-class", o.per_class, "jobs per class")->capture_default_str();
    synth->add_option("--min-len", o.min_len, "minimum profile windows")->capture_default_str();
    synth->add_option("--max-len", o.max_len, "maximum profile windows")->capture_default_str();
    synth->add_option("--year-start", o.year_start, "calendar origin (unix epoch)")
        ->capture_default_str();
    synth->add_option("--prefix", o.prefix, "job-id namespace; keep batches distinct")
        ->capture_default_str();

    CLI::App* ingest = app.add_subcommand("ingest", "build job profiles from telemetry + jobs");
    ingest->add_option("--telemetry", o.telemetry, "per-node power telemetry CSV");
    ingest->add_option("--jobs", o.jobs, "scheduler job log JSONL");
    ingest->add_option("--drops", o.drops_out, "write dropped-job CSV here");

    CLI::App* features = app.add_subcommand("features", "extract feature vectors from profiles");
    features->add_option("--profiles", o.profiles, "profiles JSONL");
    features->add_option("--scaler-out", o.scaler_out, "also fit and write a scaler");

    CLI::App* train_gan_cmd = app.add_subcommand("train-gan", "train the embedding ensemble");
    train_gan_cmd->add_option("--features", o.features, "raw feature CSV");

    CLI::App* embed = app.add_subcommand("embed", "encode features into latent vectors");
    embed->add_option("--model", o.model, "GAN model artifact");
    embed->add_option("--features", o.features, "raw feature CSV");

    CLI::App* cluster_cmd = app.add_subcommand("cluster", "cluster latent vectors");
    cluster_cmd->add_option("--latents", o.latents, "latent CSV");
    cluster_cmd->add_option("--algo", o.algo, "dbscan|kmeans")->capture_default_str();
    cluster_cmd->add_option("--eps", o.eps, "DBSCAN neighborhood radius")->capture_default_str();
    cluster_cmd->add_option("--min-pts", o.min_pts, "DBSCAN core threshold")
        ->capture_default_str();
    cluster_cmd->add_option("--k", o.k, "k-means cluster count")->capture_default_str();

    CLI::App* label = app.add_subcommand("label", "build a class catalog from a clustering");
    label->add_option("--clusters", o.clusters, "cluster assignment JSON");
    label->add_option("--profiles", o.profiles, "profiles JSONL");
    label->add_option("--features", o.features, "raw feature CSV");
    label->add_option("--latents", o.latents, "latent CSV (medoids in latent space)");
    label->add_option("--min-class-size", o.catalog_params.min_class_size,
                      "smaller clusters go to the residual")
        ->capture_default_str();
    label->add_option("--power-split", o.catalog_params.power_split,
                      "watts separating High from Low")
        ->capture_default_str();
    label->add_option("--swing-split", o.catalog_params.swing_split,
                      "swing activity separating Mixed")
        ->capture_default_str();
    label->add_option("--plateau-power-min", o.catalog_params.plateau_power_min,
                      "bin mean counted as plateau")
        ->capture_default_str();
    label->add_option("--plateau-min-frac", o.catalog_params.plateau_min_frac,
                      "plateau fraction for Compute-Intensive")
        ->capture_default_str();

    CLI::App* train_classifier_cmd =
        app.add_subcommand("train-classifier", "train the open-set classifier on a catalog");
    train_classifier_cmd->add_option("--latents", o.latents, "latent CSV");
    train_classifier_cmd->add_option("--catalog", o.catalog, "catalog artifact");

    CLI::App* classify = app.add_subcommand("classify", "assign classes or UNKNOWN");
    classify->add_option("--model", o.model, "classifier artifact");
    classify->add_option("--latents", o.latents, "latent CSV");
    classify->add_option("--threshold", o.threshold, "rejection distance or \"auto\"")
        ->capture_default_str();

    CLI::App* sweep = app.add_subcommand("sweep", "sweep the rejection threshold");
    sweep->add_option("--model", o.model, "classifier artifact");
    sweep->add_option("--known", o.known, "held-out known latent CSV");
    sweep->add_option("--known-labels", o.known_labels, "labels for the known rows");
    sweep->add_option("--unknown", o.unknown, "unknown latent CSV");
    sweep->add_option("--grid", o.grid, "sweep resolution")->capture_default_str();
    sweep->add_option("--model-out", o.model_out, "re-save the model with tau = tau*");

    CLI::App* evaluate_cmd = app.add_subcommand("evaluate", "score predictions against labels");
    evaluate_cmd->add_option("--model", o.model, "classifier artifact");
    evaluate_cmd->add_option("--latents", o.latents, "latent CSV");
    evaluate_cmd->add_option("--labels", o.labels,
                             "labels CSV or catalog artifact (-1 / residual = unknown)");
    evaluate_cmd->add_option("--threshold", o.threshold, "rejection distance or \"auto\"")
        ->capture_default_str();

    CLI::App* temporal = app.add_subcommand("temporal-eval", "anchored train/test over time");
    temporal->add_option("--latents", o.latents, "latent CSV");
    temporal->add_option("--labels", o.labels, "labels CSV with submit timestamps");
    temporal->add_option("--windows", o.windows_out, "write the per-window audit CSV here");

    CLI::App* pool = app.add_subcommand("pool", "pool UNKNOWN predictions for review");
    pool->add_option("--state", o.state, "review state artifact (created if missing)");
    pool->add_option("--predictions", o.predictions, "predictions JSONL");
    pool->add_option("--latents", o.latents, "latent CSV");
    pool->add_option("--features", o.features, "raw feature CSV");
    pool->add_option("--labels", o.labels, "labels CSV supplying submit timestamps");

    CLI::App* recluster = app.add_subcommand("recluster", "propose classes from the pool");
    recluster->add_option("--state", o.state, "review state artifact");
    recluster->add_option("--eps", o.eps, "DBSCAN neighborhood radius")->capture_default_str();
    recluster->add_option("--min-pts", o.min_pts, "DBSCAN core threshold")
        ->capture_default_str();
    recluster->add_option("--min-class-size", o.catalog_params.min_class_size,
                          "smallest cluster worth proposing")
        ->capture_default_str();
    recluster->add_option("--profiles", o.profiles, "profiles JSONL for plot CSVs");

    CLI::App* review = app.add_subcommand("review", "list or decide class proposals");
    review->add_option("--state", o.state, "review state artifact");
    review->add_option("--catalog", o.catalog, "catalog artifact");
    review->add_flag("--list", o.list, "print all proposals");
    review->add_option("--approve", o.approve, "approve this proposal id");
    review->add_option("--reject", o.reject, "reject this proposal id");
    review->add_option("--operator", o.operator_name, "name recorded in the decision log");

    CLI::App* retrain = app.add_subcommand("retrain", "rebuild the classifier after approvals");
    retrain->add_option("--model", o.model, "current classifier artifact");
    retrain->add_option("--catalog", o.catalog, "catalog artifact");
    retrain->add_option("--state", o.state, "review state artifact");
    retrain->add_option("--latents", o.latents, "latent CSV covering catalog members");
    retrain->add_option("--test-frac", o.test_frac, "held-out fraction per class")
        ->capture_default_str();
    retrain->add_option("--grid", o.grid, "threshold sweep resolution")->capture_default_str();
    retrain->add_flag("--force", o.force, "retrain even without new approvals");
    retrain->add_option("--pipeline-config", o.pipeline_config,
                        "redo the full pipeline from this config instead");

    CLI::App* run = app.add_subcommand("run", "run the whole pipeline from a JSON config");
    (void)run;

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        set_log_level(log_level_from_string(o.log_level));
        o.seed_given = app.count("--seed") > 0;
        if (app.got_subcommand(synth)) cmd_synth(o);
        else if (app.got_subcommand(ingest)) cmd_ingest(o);
        else if (app.got_subcommand(features)) cmd_features(o);
        else if (app.got_subcommand(train_gan_cmd)) cmd_train_gan(o);
        else if (app.got_subcommand(embed)) cmd_embed(o);
        else if (app.got_subcommand(cluster_cmd)) cmd_cluster(o);
        else if (app.got_subcommand(label)) cmd_label(o);
        else if (app.got_subcommand(train_classifier_cmd)) cmd_train_classifier(o);
        else if (app.got_subcommand(classify)) cmd_classify(o);
        else if (app.got_subcommand(sweep)) cmd_sweep(o);
        else if (app.got_subcommand(evaluate_cmd)) cmd_evaluate(o);
        else if (app.got_subcommand(temporal)) cmd_temporal_eval(o);
        else if (app.got_subcommand(pool)) cmd_pool(o);
        else if (app.got_subcommand(recluster)) cmd_recluster(o);
        else if (app.got_subcommand(review)) cmd_review(o);
        else if (app.got_subcommand(retrain)) cmd_retrain(o);
        else if (app.got_subcommand(run)) cmd_run(o);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "powerprof: %s\n", e.what());
        return 2;
    } catch (const DataError& e) {
        std::fprintf(stderr, "powerprof: %s\n", e.what());
        return 3;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "powerprof: %s\n", e.what());
        return 4;
    }
    return 0;
}
