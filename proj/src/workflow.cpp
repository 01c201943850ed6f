#include "powerprof/workflow.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <set>
#include <unordered_map>
#include <unordered_set>

using json = nlohmann::json;

namespace powerprof {

// ---------------------------------------------------------------------------
// Artifact envelope
// ---------------------------------------------------------------------------

void save_artifact(const std::filesystem::path& path, const std::string& kind,
                   const json& payload) {
    json envelope{{"artifact", "powerprof"},
                  {"kind", kind},
                  {"version", kArtifactVersion},
                  {"digest", sha256_hex(payload.dump())},
                  {"payload", payload}};
    write_text_file(path, envelope.dump(2) + "\n");
}

json load_artifact(const std::filesystem::path& path, const std::string& kind) {
    const std::string text = read_text_file(path);
    json envelope;
    try {
        envelope = json::parse(text);
    } catch (const json::exception& e) {
        throw DataError("corrupt artifact " + path.string() + ": " + e.what());
    }
    if (!envelope.is_object() || !envelope.contains("artifact") || !envelope.contains("kind") ||
        !envelope.contains("version") || !envelope.contains("digest") ||
        !envelope.contains("payload")) {
        throw DataError("corrupt artifact " + path.string() + ": missing envelope fields");
    }
    if (envelope["artifact"] != "powerprof") {
        throw DataError("corrupt artifact " + path.string() + ": not a powerprof artifact");
    }
    if (!envelope["version"].is_number_integer() ||
        envelope["version"].get<int>() != kArtifactVersion) {
        throw DataError(path.string() + ": unsupported version " + envelope["version"].dump());
    }
    const std::string found_kind = envelope["kind"].get<std::string>();
    if (found_kind != kind) {
        throw DataError(path.string() + ": expected kind " + kind + ", found " + found_kind);
    }
    const std::string digest = sha256_hex(envelope["payload"].dump());
    const std::string recorded = envelope["digest"].get<std::string>();
    if (digest != recorded) {
        throw DataError("corrupt artifact " + path.string() + ": digest mismatch (recorded " +
                        recorded + ", payload " + digest + ")");
    }
    return envelope["payload"];
}

// ---------------------------------------------------------------------------
// Pipeline configuration
// ---------------------------------------------------------------------------

void validate_pipeline_config(const PipelineConfig& cfg) {
    const bool has_profiles = !cfg.profiles.empty();
    const bool has_raw = !cfg.telemetry.empty() || !cfg.jobs.empty();
    if (has_profiles && has_raw) {
        throw ConfigError("pipeline config: give either profiles or telemetry+jobs, not both");
    }
    if (!has_profiles && (cfg.telemetry.empty() || cfg.jobs.empty())) {
        throw ConfigError("pipeline config: input missing (profiles, or telemetry and jobs)");
    }
    if (cfg.out_dir.empty()) throw ConfigError("pipeline config: out_dir is required");
    if (!(cfg.eps > 0.0)) throw ConfigError("pipeline config: eps must be positive");
    if (cfg.min_pts == 0) throw ConfigError("pipeline config: min_pts must be positive");
    if (!(cfg.test_frac > 0.0) || !(cfg.test_frac < 1.0)) {
        throw ConfigError("pipeline config: test_frac must be in (0, 1)");
    }
    if (cfg.sweep_grid < 2) throw ConfigError("pipeline config: sweep_grid must be at least 2");
    validate_gan_config(cfg.gan);
    validate_classifier_config(cfg.classifier);
}

json pipeline_config_to_json(const PipelineConfig& cfg) {
    return json{{"profiles", cfg.profiles},
                {"telemetry", cfg.telemetry},
                {"jobs", cfg.jobs},
                {"out_dir", cfg.out_dir},
                {"seed", cfg.seed},
                {"gan", gan_config_to_json(cfg.gan)},
                {"eps", cfg.eps},
                {"min_pts", cfg.min_pts},
                {"catalog", json{{"min_class_size", cfg.catalog.min_class_size},
                                 {"power_split", cfg.catalog.power_split},
                                 {"swing_split", cfg.catalog.swing_split},
                                 {"plateau_power_min", cfg.catalog.plateau_power_min},
                                 {"plateau_min_frac", cfg.catalog.plateau_min_frac}}},
                {"classifier", classifier_config_to_json(cfg.classifier)},
                {"test_frac", cfg.test_frac},
                {"sweep_grid", cfg.sweep_grid}};
}

PipelineConfig pipeline_config_from_json(const json& j, const std::string& origin) {
    if (!j.is_object()) throw ConfigError(origin + ": pipeline config must be a JSON object");
    PipelineConfig cfg;
    try {
        for (const auto& [key, value] : j.items()) {
            if (key == "profiles") {
                cfg.profiles = value.get<std::string>();
            } else if (key == "telemetry") {
                cfg.telemetry = value.get<std::string>();
            } else if (key == "jobs") {
                cfg.jobs = value.get<std::string>();
            } else if (key == "out_dir") {
                cfg.out_dir = value.get<std::string>();
            } else if (key == "seed") {
                cfg.seed = value.get<std::uint64_t>();
            } else if (key == "gan") {
                cfg.gan = gan_config_from_json(value, origin);
            } else if (key == "eps") {
                cfg.eps = value.get<double>();
            } else if (key == "min_pts") {
                cfg.min_pts = value.get<std::size_t>();
            } else if (key == "catalog") {
                for (const auto& [ck, cv] : value.items()) {
                    if (ck == "min_class_size") {
                        cfg.catalog.min_class_size = cv.get<std::size_t>();
                    } else if (ck == "power_split") {
                        cfg.catalog.power_split = cv.get<double>();
                    } else if (ck == "swing_split") {
                        cfg.catalog.swing_split = cv.get<double>();
                    } else if (ck == "plateau_power_min") {
                        cfg.catalog.plateau_power_min = cv.get<double>();
                    } else if (ck == "plateau_min_frac") {
                        cfg.catalog.plateau_min_frac = cv.get<double>();
                    } else {
                        throw ConfigError(origin + ": unknown catalog key \"" + ck + "\"");
                    }
                }
            } else if (key == "classifier") {
                cfg.classifier = classifier_config_from_json(value, origin);
            } else if (key == "test_frac") {
                cfg.test_frac = value.get<double>();
            } else if (key == "sweep_grid") {
                cfg.sweep_grid = value.get<std::size_t>();
            } else {
                throw ConfigError(origin + ": unknown pipeline config key \"" + key + "\"");
            }
        }
    } catch (const json::exception& e) {
        throw ConfigError(origin + ": bad pipeline config value: " + e.what());
    }
    validate_pipeline_config(cfg);
    return cfg;
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

json manifest_to_payload(const RunManifest& m) {
    json inputs = json::object();
    for (const auto& [name, digest] : m.inputs) inputs[name] = digest;
    json artifacts = json::object();
    for (const auto& [name, ref] : m.artifacts) {
        artifacts[name] = json{{"path", ref.path}, {"digest", ref.digest}};
    }
    json stages = json::array();
    for (const StageRecord& s : m.stages) {
        stages.push_back(json{{"name", s.name}, {"version", s.version}, {"wall_ms", s.wall_ms}});
    }
    return json{{"config", m.config},
                {"seed", m.seed},
                {"inputs", inputs},
                {"artifacts", artifacts},
                {"stages", stages}};
}

RunManifest manifest_from_payload(const json& payload) {
    RunManifest m;
    try {
        m.config = payload.at("config");
        m.seed = payload.at("seed").get<std::uint64_t>();
        for (const auto& [name, digest] : payload.at("inputs").items()) {
            m.inputs[name] = digest.get<std::string>();
        }
        for (const auto& [name, ref] : payload.at("artifacts").items()) {
            m.artifacts[name] = ArtifactRef{ref.at("path").get<std::string>(),
                                            ref.at("digest").get<std::string>()};
        }
        for (const json& sj : payload.at("stages")) {
            m.stages.push_back(StageRecord{sj.at("name").get<std::string>(),
                                           sj.at("version").get<int>(),
                                           sj.at("wall_ms").get<double>()});
        }
    } catch (const json::exception& e) {
        throw DataError(std::string("bad manifest payload: ") + e.what());
    }
    return m;
}

void verify_manifest(const RunManifest& m, const std::filesystem::path& base_dir) {
    for (const auto& [name, ref] : m.artifacts) {
        const std::filesystem::path path = base_dir / ref.path;
        if (!std::filesystem::exists(path)) {
            throw DataError("manifest artifact " + name + " missing at " + path.string());
        }
        const std::string digest = sha256_file(path);
        if (digest != ref.digest) {
            throw DataError("manifest artifact " + name + " drifted: recorded " + ref.digest +
                            ", file " + digest);
        }
    }
}

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

namespace {

template <typename F>
auto timed_stage(RunManifest& manifest, const std::string& name, F&& fn) {
    const auto start = std::chrono::steady_clock::now();
    try {
        auto result = fn();
        const auto stop = std::chrono::steady_clock::now();
        const double ms = std::chrono::duration<double, std::milli>(stop - start).count();
        manifest.stages.push_back(StageRecord{name, 1, ms});
        log_info("stage " + name + " done in " + fmt_double(ms) + " ms");
        return result;
    } catch (const ConfigError& e) {
        throw ConfigError("stage=" + name + ": " + e.what());
    } catch (const DataError& e) {
        throw DataError("stage=" + name + ": " + e.what());
    } catch (const NumericError& e) {
        throw NumericError("stage=" + name + ": " + e.what());
    } catch (const std::exception& e) {
        throw DataError("stage=" + name + ": " + e.what());
    }
}

struct Unit {};

void record_artifact(RunManifest& manifest, const std::string& name,
                     const std::filesystem::path& dir, const std::string& rel) {
    manifest.artifacts[name] = ArtifactRef{rel, sha256_file(dir / rel)};
}

}  // namespace

std::string sweep_curve_to_csv(const SweepResult& sweep) {
    std::string csv = "tau,tau_normalized,accuracy,known_acc,unknown_reject\n";
    for (const SweepPoint& p : sweep.curve) {
        csv += fmt_double(p.tau) + "," + fmt_double(p.tau_normalized) + "," +
               fmt_double(p.accuracy) + "," + fmt_double(p.known_acc) + "," +
               fmt_double(p.unknown_reject) + "\n";
    }
    return csv;
}

RunManifest run_pipeline(const PipelineConfig& cfg) {
    validate_pipeline_config(cfg);
    const std::filesystem::path dir(cfg.out_dir);
    std::filesystem::create_directories(dir);

    RunManifest manifest;
    manifest.config = pipeline_config_to_json(cfg);
    manifest.seed = cfg.seed;

    // ingest
    std::vector<JobProfile> profiles = timed_stage(manifest, "ingest", [&] {
        std::vector<JobProfile> out;
        if (!cfg.profiles.empty()) {
            manifest.inputs["profiles"] = sha256_file(cfg.profiles);
            out = read_profiles(cfg.profiles);
        } else {
            manifest.inputs["telemetry"] = sha256_file(cfg.telemetry);
            manifest.inputs["jobs"] = sha256_file(cfg.jobs);
            std::vector<PowerSample> telemetry = parse_telemetry(cfg.telemetry);
            std::vector<JobRecord> jobs = parse_jobs(cfg.jobs);
            BuildResult built = build_profiles(jobs, telemetry);
            if (!built.drops.empty()) {
                log_info("ingest dropped " + std::to_string(built.drops.size()) + " of " +
                         std::to_string(jobs.size()) + " jobs");
            }
            out = std::move(built.profiles);
        }
        if (out.empty()) throw DataError("no usable job profiles");
        write_profiles(dir / "profiles.jsonl", out);
        return out;
    });
    record_artifact(manifest, "profiles", dir, "profiles.jsonl");

    // features
    FeatureMatrix features = timed_stage(manifest, "features", [&] {
        FeatureMatrix fm = extract_feature_matrix(profiles);
        write_feature_matrix(dir / "features.csv", fm);
        return fm;
    });
    record_artifact(manifest, "features", dir, "features.csv");

    // scaler
    Scaler scaler = timed_stage(manifest, "scaler", [&] {
        Scaler s = fit_scaler(features);
        write_scaler(dir / "scaler.json", s);
        return s;
    });
    record_artifact(manifest, "scaler", dir, "scaler.json");

    // gan.train
    FeatureMatrix standardized = apply_scaler(scaler, features);
    GanModel gan = timed_stage(manifest, "gan.train", [&] {
        GanConfig gan_cfg = cfg.gan;
        gan_cfg.seed = cfg.seed;
        GanModel model = train_gan(standardized, gan_cfg, &scaler);
        save_artifact(dir / "gan.json", "gan-model", gan_model_to_payload(model));
        return model;
    });
    record_artifact(manifest, "gan", dir, "gan.json");

    // embed
    LatentMatrix latents = timed_stage(manifest, "embed", [&] {
        LatentMatrix lm = encode_features(gan, standardized);
        write_latents(dir / "latents.csv", lm);
        return lm;
    });
    record_artifact(manifest, "latents", dir, "latents.csv");

    // cluster
    std::vector<Point> points(latents.rows.begin(), latents.rows.end());
    ClusterResult clusters = timed_stage(manifest, "cluster", [&] {
        ClusterResult r = dbscan(points, cfg.eps, cfg.min_pts);
        write_cluster_result(dir / "clusters.json", r, latents.job_ids);
        return r;
    });
    record_artifact(manifest, "clusters", dir, "clusters.json");

    // catalog
    ClassCatalog catalog = timed_stage(manifest, "catalog", [&] {
        ClassCatalog c = build_catalog(clusters, features, profiles, &points, cfg.catalog);
        if (c.classes.size() < 2) {
            throw DataError("clustering yielded " + std::to_string(c.classes.size()) +
                            " class(es); at least 2 are needed to train a classifier");
        }
        save_artifact(dir / "catalog.json", "catalog", catalog_to_payload(c));
        return c;
    });
    record_artifact(manifest, "catalog", dir, "catalog.json");

    // train_closed
    std::unordered_map<std::string, std::size_t> row_of;
    for (std::size_t i = 0; i < latents.job_ids.size(); ++i) row_of[latents.job_ids[i]] = i;
    LatentMatrix known_test;
    std::vector<int> known_test_labels;
    ClassifierModel classifier = timed_stage(manifest, "train_closed", [&] {
        LatentMatrix all_known;
        std::vector<int> all_labels;
        for (const CatalogClass& cls : catalog.classes) {
            for (const std::string& id : cls.member_job_ids) {
                all_known.job_ids.push_back(id);
                all_known.rows.push_back(latents.rows[row_of.at(id)]);
                all_labels.push_back(cls.class_id);
            }
        }
        SplitIndices split = stratified_split(all_labels, cfg.test_frac, cfg.seed);
        LatentMatrix train;
        std::vector<int> train_labels;
        for (std::size_t i : split.train) {
            train.job_ids.push_back(all_known.job_ids[i]);
            train.rows.push_back(all_known.rows[i]);
            train_labels.push_back(all_labels[i]);
        }
        for (std::size_t i : split.test) {
            known_test.job_ids.push_back(all_known.job_ids[i]);
            known_test.rows.push_back(all_known.rows[i]);
            known_test_labels.push_back(all_labels[i]);
        }
        ClassifierConfig clf_cfg = cfg.classifier;
        clf_cfg.seed = cfg.seed;
        ClassifierModel model = train_closed(train, train_labels, clf_cfg);
        model.catalog_ref = manifest.artifacts.at("catalog").digest;
        save_artifact(dir / "classifier.json", "classifier", classifier_to_payload(model));
        return model;
    });
    record_artifact(manifest, "classifier", dir, "classifier.json");

    // sweep_threshold
    timed_stage(manifest, "sweep_threshold", [&] {
        LatentMatrix unknown;
        for (const std::string& id : catalog.residual) {
            unknown.job_ids.push_back(id);
            unknown.rows.push_back(latents.rows[row_of.at(id)]);
        }
        if (unknown.rows.empty()) {
            // nothing to reject against: fall back to the training p95
            classifier.tau = classifier.train_min_dist_p95;
            write_text_file(dir / "sweep.csv", "tau,tau_normalized,accuracy\n");
            log_info("sweep: no residual jobs; tau fixed at train p95 " +
                     fmt_double(classifier.tau));
        } else {
            SweepResult sweep = sweep_threshold(classifier, known_test, known_test_labels,
                                                unknown, cfg.sweep_grid);
            classifier.tau = sweep.tau_star;
            write_text_file(dir / "sweep.csv", sweep_curve_to_csv(sweep));
            log_info("sweep: tau* " + fmt_double(sweep.tau_star) + ", balanced accuracy " +
                     fmt_double(sweep.best_accuracy));
        }
        save_artifact(dir / "classifier.json", "classifier",
                      classifier_to_payload(classifier));
        return Unit{};
    });
    record_artifact(manifest, "sweep", dir, "sweep.csv");
    record_artifact(manifest, "classifier", dir, "classifier.json");  // tau was updated

    save_artifact(dir / "manifest.json", "manifest", manifest_to_payload(manifest));
    return manifest;
}

// ---------------------------------------------------------------------------
// Unknown pool
// ---------------------------------------------------------------------------

std::size_t pool_add_unknowns(UnknownPool& pool, const std::vector<Prediction>& preds,
                              const LatentMatrix& latents, const FeatureMatrix& features,
                              const std::map<std::string, std::int64_t>& submits) {
    std::unordered_map<std::string, std::size_t> latent_row, feature_row;
    for (std::size_t i = 0; i < latents.job_ids.size(); ++i) latent_row[latents.job_ids[i]] = i;
    for (std::size_t i = 0; i < features.job_ids.size(); ++i) {
        feature_row[features.job_ids[i]] = i;
    }
    std::unordered_set<std::string> pooled;
    for (const PoolEntry& e : pool.entries) pooled.insert(e.job_id);

    std::size_t added = 0;
    for (const Prediction& p : preds) {
        if (p.outcome != -1) continue;
        if (!pooled.insert(p.job_id).second) continue;
        auto lit = latent_row.find(p.job_id);
        if (lit == latent_row.end()) {
            throw DataError("pool: no latent row for job " + p.job_id);
        }
        auto fit = feature_row.find(p.job_id);
        if (fit == feature_row.end()) {
            throw DataError("pool: no feature row for job " + p.job_id);
        }
        PoolEntry entry;
        entry.job_id = p.job_id;
        entry.latent = latents.rows[lit->second];
        const FeatureVector& f = features.rows[fit->second];
        entry.feature.assign(f.begin(), f.end());
        auto sit = submits.find(p.job_id);
        entry.timestamp = sit == submits.end() ? 0 : sit->second;
        pool.entries.push_back(std::move(entry));
        ++added;
    }
    return added;
}

// ---------------------------------------------------------------------------
// Reclustering
// ---------------------------------------------------------------------------

std::vector<ClassProposal> recluster_unknowns(const UnknownPool& pool, double eps,
                                              std::size_t min_pts, std::size_t min_class_size,
                                              std::size_t first_seq) {
    if (pool.entries.size() < min_pts) {
        throw DataError("recluster: pool has " + std::to_string(pool.entries.size()) +
                        " entries, fewer than min_pts " + std::to_string(min_pts));
    }
    std::vector<Point> points;
    points.reserve(pool.entries.size());
    for (const PoolEntry& e : pool.entries) points.push_back(e.latent);

    ClusterResult clusters = dbscan(points, eps, min_pts);
    std::map<int, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < clusters.labels.size(); ++i) {
        if (clusters.labels[i] >= 0) groups[clusters.labels[i]].push_back(i);
    }

    std::vector<ClassProposal> proposals;
    for (const auto& [label, rows] : groups) {
        if (rows.size() < min_class_size) continue;
        ClassProposal p;
        p.size = rows.size();
        // latent-space medoid: minimum summed distance to the other members
        double best_sum = std::numeric_limits<double>::infinity();
        for (std::size_t i : rows) {
            double sum = 0.0;
            for (std::size_t j : rows) {
                if (i != j) {
                    sum += std::sqrt(squared_l2(points[i].data(), points[j].data(),
                                                points[i].size()));
                }
            }
            if (sum < best_sum) {
                best_sum = sum;
                p.medoid_job_id = pool.entries[i].job_id;
            }
        }
        for (std::size_t i : rows) p.member_job_ids.push_back(pool.entries[i].job_id);
        std::sort(p.member_job_ids.begin(), p.member_job_ids.end());
        proposals.push_back(std::move(p));
    }
    std::stable_sort(proposals.begin(), proposals.end(),
                     [](const ClassProposal& a, const ClassProposal& b) { return a.size > b.size; });
    for (std::size_t i = 0; i < proposals.size(); ++i) {
        char buf[24];
        std::snprintf(buf, sizeof(buf), "prop-%03zu", first_seq + i);
        proposals[i].proposal_id = buf;
    }
    return proposals;
}

// ---------------------------------------------------------------------------
// Review state
// ---------------------------------------------------------------------------

namespace {

json pool_entry_to_json(const PoolEntry& e) {
    return json{{"job_id", e.job_id},
                {"latent", e.latent},
                {"feature", e.feature},
                {"timestamp", e.timestamp}};
}

PoolEntry pool_entry_from_json(const json& j) {
    PoolEntry e;
    e.job_id = j.at("job_id").get<std::string>();
    e.latent = j.at("latent").get<std::vector<double>>();
    e.feature = j.at("feature").get<std::vector<double>>();
    e.timestamp = j.at("timestamp").get<std::int64_t>();
    return e;
}

json proposal_to_json(const ClassProposal& p) {
    return json{{"proposal_id", p.proposal_id},
                {"member_job_ids", p.member_job_ids},
                {"medoid_job_id", p.medoid_job_id},
                {"size", p.size},
                {"proposed_class_id", p.proposed_class_id},
                {"status", p.status},
                {"decided_by", p.decided_by},
                {"decided_at", p.decided_at}};
}

ClassProposal proposal_from_json(const json& j) {
    ClassProposal p;
    p.proposal_id = j.at("proposal_id").get<std::string>();
    p.member_job_ids = j.at("member_job_ids").get<std::vector<std::string>>();
    p.medoid_job_id = j.at("medoid_job_id").get<std::string>();
    p.size = j.at("size").get<std::size_t>();
    p.proposed_class_id = j.at("proposed_class_id").get<int>();
    p.status = j.at("status").get<std::string>();
    p.decided_by = j.at("decided_by").get<std::string>();
    p.decided_at = j.at("decided_at").get<std::int64_t>();
    return p;
}

}  // namespace

json review_state_to_payload(const ReviewState& state) {
    json pool = json::array();
    for (const PoolEntry& e : state.pool.entries) pool.push_back(pool_entry_to_json(e));
    json promoted = json::array();
    for (const PoolEntry& e : state.promoted) promoted.push_back(pool_entry_to_json(e));
    json proposals = json::array();
    for (const ClassProposal& p : state.proposals) proposals.push_back(proposal_to_json(p));
    return json{{"pool", pool},
                {"promoted", promoted},
                {"proposals", proposals},
                {"log", state.log},
                {"next_proposal_seq", state.next_proposal_seq}};
}

ReviewState review_state_from_payload(const json& payload) {
    ReviewState state;
    try {
        for (const json& e : payload.at("pool")) {
            state.pool.entries.push_back(pool_entry_from_json(e));
        }
        for (const json& e : payload.at("promoted")) {
            state.promoted.push_back(pool_entry_from_json(e));
        }
        for (const json& p : payload.at("proposals")) {
            state.proposals.push_back(proposal_from_json(p));
        }
        state.log = payload.at("log").get<std::vector<std::string>>();
        state.next_proposal_seq = payload.at("next_proposal_seq").get<std::size_t>();
    } catch (const json::exception& e) {
        throw DataError(std::string("bad review state payload: ") + e.what());
    }
    return state;
}

std::vector<std::string> refresh_proposals(ReviewState& state, double eps, std::size_t min_pts,
                                           std::size_t min_class_size) {
    // undecided proposals are superseded by the fresh clustering
    state.proposals.erase(std::remove_if(state.proposals.begin(), state.proposals.end(),
                                         [](const ClassProposal& p) {
                                             return p.status == "pending";
                                         }),
                          state.proposals.end());
    std::vector<ClassProposal> fresh =
        recluster_unknowns(state.pool, eps, min_pts, min_class_size, state.next_proposal_seq);
    state.next_proposal_seq += fresh.size();
    std::vector<std::string> ids;
    for (ClassProposal& p : fresh) {
        ids.push_back(p.proposal_id);
        state.proposals.push_back(std::move(p));
    }
    return ids;
}

const ClassProposal& review_proposal(ReviewState& state, ClassCatalog& catalog,
                                     const std::string& proposal_id, const std::string& verdict,
                                     const std::string& operator_name, std::int64_t now_epoch) {
    if (verdict != "approve" && verdict != "reject") {
        throw ConfigError("review: verdict must be approve or reject, got \"" + verdict + "\"");
    }
    auto it = std::find_if(state.proposals.begin(), state.proposals.end(),
                           [&](const ClassProposal& p) { return p.proposal_id == proposal_id; });
    if (it == state.proposals.end()) {
        throw DataError("review: no proposal " + proposal_id);
    }
    ClassProposal& proposal = *it;
    if (proposal.status != "pending") {
        throw DataError("review: proposal " + proposal_id + " already decided (" +
                        proposal.status + " by " + proposal.decided_by + " at " +
                        std::to_string(proposal.decided_at) + ")");
    }

    if (verdict == "approve") {
        std::set<std::string> members(proposal.member_job_ids.begin(),
                                      proposal.member_job_ids.end());
        // collect the members' pooled vectors
        FeatureMatrix fm;
        std::vector<Point> member_latents;
        for (const PoolEntry& e : state.pool.entries) {
            if (!members.count(e.job_id)) continue;
            fm.job_ids.push_back(e.job_id);
            FeatureVector fv{};
            if (e.feature.size() != fv.size()) {
                throw DataError("review: pooled feature vector for " + e.job_id +
                                " has wrong width");
            }
            std::copy(e.feature.begin(), e.feature.end(), fv.begin());
            fm.rows.push_back(fv);
            member_latents.push_back(e.latent);
        }
        if (fm.rows.size() != members.size()) {
            throw DataError("review: proposal " + proposal_id +
                            " references jobs missing from the pool");
        }
        // single-cluster catalog build reuses the intensity/medoid rules
        ClusterResult one;
        one.algorithm = "dbscan";
        one.labels.assign(fm.rows.size(), 0);
        CatalogParams params = catalog.params;
        params.min_class_size = 1;
        ClassCatalog built = build_catalog(one, fm, {}, &member_latents, params);
        CatalogClass cls = std::move(built.classes.at(0));
        cls.class_id = catalog.next_class_id++;
        catalog.classes.push_back(std::move(cls));

        proposal.proposed_class_id = catalog.classes.back().class_id;
        proposal.status = "approved";
        // approved members leave the pool but stay reachable for retraining
        auto split = std::stable_partition(
            state.pool.entries.begin(), state.pool.entries.end(),
            [&](const PoolEntry& e) { return !members.count(e.job_id); });
        for (auto e = split; e != state.pool.entries.end(); ++e) {
            state.promoted.push_back(std::move(*e));
        }
        state.pool.entries.erase(split, state.pool.entries.end());
    } else {
        proposal.status = "rejected";
    }
    proposal.decided_by = operator_name;
    proposal.decided_at = now_epoch;
    state.log.push_back("ts=" + std::to_string(now_epoch) + " operator=" + operator_name +
                        " proposal=" + proposal_id + " verdict=" + verdict +
                        (verdict == "approve"
                             ? " class_id=" + std::to_string(proposal.proposed_class_id)
                             : ""));
    return proposal;
}

// ---------------------------------------------------------------------------
// Retraining
// ---------------------------------------------------------------------------

RetrainResult retrain_classifier(const ClassifierModel& old_model, const ClassCatalog& catalog,
                                 const LatentMatrix& latents, const ReviewState& state,
                                 ClassifierConfig cfg, double test_frac, std::size_t sweep_grid,
                                 bool force) {
    RetrainResult result;

    std::set<int> old_ids(old_model.class_ids.begin(), old_model.class_ids.end());
    std::size_t approved = 0;
    for (const CatalogClass& cls : catalog.classes) {
        if (!old_ids.count(cls.class_id)) ++approved;
    }
    if (approved == 0 && !force) {
        result.notice = "no newly approved classes; pass force to retrain anyway";
        result.model = classifier_from_payload(classifier_to_payload(old_model));
        return result;
    }

    std::unordered_map<std::string, const std::vector<double>*> latent_of;
    for (std::size_t i = 0; i < latents.job_ids.size(); ++i) {
        latent_of[latents.job_ids[i]] = &latents.rows[i];
    }
    for (const PoolEntry& e : state.promoted) latent_of.emplace(e.job_id, &e.latent);

    LatentMatrix all;
    std::vector<int> labels;
    for (const CatalogClass& cls : catalog.classes) {
        for (const std::string& id : cls.member_job_ids) {
            auto it = latent_of.find(id);
            if (it == latent_of.end()) {
                throw DataError("retrain: no latent vector for catalog member " + id);
            }
            all.job_ids.push_back(id);
            all.rows.push_back(*it->second);
            labels.push_back(cls.class_id);
        }
    }

    SplitIndices split = stratified_split(labels, test_frac, cfg.seed);
    LatentMatrix train, holdout;
    std::vector<int> train_labels, holdout_labels;
    for (std::size_t i : split.train) {
        train.job_ids.push_back(all.job_ids[i]);
        train.rows.push_back(all.rows[i]);
        train_labels.push_back(labels[i]);
    }
    for (std::size_t i : split.test) {
        holdout.job_ids.push_back(all.job_ids[i]);
        holdout.rows.push_back(all.rows[i]);
        holdout_labels.push_back(labels[i]);
    }

    result.model = train_closed(train, train_labels, cfg);
    result.model.catalog_ref = old_model.catalog_ref;
    result.archived_digest = sha256_hex(classifier_to_payload(old_model).dump());
    result.model.previous = result.archived_digest;
    result.retrained = true;

    // previously-known ids must all survive
    for (int id : old_model.class_ids) {
        if (!std::binary_search(result.model.class_ids.begin(), result.model.class_ids.end(),
                                id)) {
            throw DataError("retrain: class id " + std::to_string(id) +
                            " vanished from the catalog; ids must be stable");
        }
    }

    // re-sweep tau against whatever is still pooled
    if (!state.pool.entries.empty()) {
        LatentMatrix unknown;
        for (const PoolEntry& e : state.pool.entries) {
            unknown.job_ids.push_back(e.job_id);
            unknown.rows.push_back(e.latent);
        }
        result.sweep = sweep_threshold(result.model, holdout, holdout_labels, unknown,
                                       sweep_grid);
        result.model.tau = result.sweep.tau_star;
        result.swept = true;
    } else {
        result.model.tau = result.model.train_min_dist_p95;
        result.notice = "pool is empty; tau set to the training p95 distance";
    }

    // closed-set recall per class on the held-out split
    result.holdout_ids = holdout.job_ids;
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<Prediction> preds = predict(result.model, holdout, inf);
    std::map<int, std::pair<std::size_t, std::size_t>> per_class;  // correct, total
    for (std::size_t i = 0; i < preds.size(); ++i) {
        auto& [correct, total] = per_class[holdout_labels[i]];
        ++total;
        if (preds[i].outcome == holdout_labels[i]) ++correct;
    }
    for (const auto& [id, ct] : per_class) {
        result.holdout_class_recall[id] =
            static_cast<double>(ct.first) / static_cast<double>(ct.second);
    }
    return result;
}

// ---------------------------------------------------------------------------
// Temporal evaluation
// ---------------------------------------------------------------------------

TemporalResult temporal_eval(const LatentMatrix& latents, const std::vector<int>& labels,
                             const std::vector<std::int64_t>& submits,
                             const TemporalOptions& opt) {
    const std::size_t n = latents.rows.size();
    if (n == 0) throw DataError("temporal_eval: empty dataset");
    if (labels.size() != n || submits.size() != n) {
        throw DataError("temporal_eval: labels/submits do not match latent rows");
    }
    if (opt.train_months.empty() || opt.horizon_days.empty()) {
        throw ConfigError("temporal_eval: train_months and horizon_days must be non-empty");
    }

    TemporalResult result;
    result.epoch_base = opt.epoch_base >= 0
                            ? opt.epoch_base
                            : *std::min_element(submits.begin(), submits.end());
    const std::int64_t data_end = *std::max_element(submits.begin(), submits.end()) + 1;

    for (std::size_t m : opt.train_months) {
        for (std::size_t h : opt.horizon_days) {
            TemporalCell cell;
            cell.train_months = m;
            cell.horizon_days = h;
            double sum_closed = 0.0, sum_open = 0.0, sum_known = 0.0;

            for (std::size_t anchor = 0;; ++anchor) {
                const std::int64_t train_begin =
                    result.epoch_base + static_cast<std::int64_t>(anchor) * kSecondsPerMonth;
                const std::int64_t train_end =
                    train_begin + static_cast<std::int64_t>(m) * kSecondsPerMonth;
                const std::int64_t test_begin = train_end;
                const std::int64_t test_end =
                    test_begin + static_cast<std::int64_t>(h) * 86400LL;
                if (test_end > data_end) break;
                if (test_begin < train_end) {
                    throw DataError("temporal_eval: train/test windows overlap");
                }

                // training slice and its learnable classes
                std::map<int, std::size_t> class_counts;
                for (std::size_t i = 0; i < n; ++i) {
                    if (submits[i] >= train_begin && submits[i] < train_end) {
                        ++class_counts[labels[i]];
                    }
                }
                std::set<int> known;
                for (const auto& [cls, count] : class_counts) {
                    if (count >= opt.min_train_per_class) known.insert(cls);
                }
                if (known.size() < 2) continue;

                LatentMatrix train, test;
                std::vector<int> train_labels, test_labels;
                std::size_t known_test = 0;
                for (std::size_t i = 0; i < n; ++i) {
                    if (submits[i] >= train_begin && submits[i] < train_end) {
                        if (!known.count(labels[i])) continue;
                        train.job_ids.push_back(latents.job_ids[i]);
                        train.rows.push_back(latents.rows[i]);
                        train_labels.push_back(labels[i]);
                    } else if (submits[i] >= test_begin && submits[i] < test_end) {
                        test.job_ids.push_back(latents.job_ids[i]);
                        test.rows.push_back(latents.rows[i]);
                        // a class unseen in training is expected to be rejected
                        test_labels.push_back(known.count(labels[i]) ? labels[i] : -1);
                        if (known.count(labels[i])) ++known_test;
                    }
                }
                if (test.rows.empty() || known_test == 0) continue;

                ClassifierConfig cfg = opt.classifier;
                cfg.num_classes = 0;
                ClassifierModel model = train_closed(train, train_labels, cfg);
                const double tau = model.train_min_dist_p95;
                EvalReport rep = evaluate(model, test, test_labels, tau);

                TemporalWindow window;
                window.train_months = m;
                window.horizon_days = h;
                window.anchor = anchor;
                window.train_begin = train_begin;
                window.train_end = train_end;
                window.test_begin = test_begin;
                window.test_end = test_end;
                window.known_classes = known.size();
                window.train_jobs = train.rows.size();
                window.test_jobs = test.rows.size();
                window.closed_acc = rep.closed_acc;
                window.open_acc = rep.open_acc;
                result.windows.push_back(window);

                ++cell.anchors;
                sum_closed += rep.closed_acc;
                sum_open += rep.open_acc;
                sum_known += static_cast<double>(known.size());
            }

            if (cell.anchors > 0) {
                const double k = static_cast<double>(cell.anchors);
                cell.mean_closed_acc = sum_closed / k;
                cell.mean_open_acc = sum_open / k;
                cell.mean_known_classes = sum_known / k;
            }
            result.cells.push_back(cell);
        }
    }

    bool any = false;
    for (const TemporalCell& c : result.cells) any = any || c.anchors > 0;
    if (!any) {
        std::int64_t smallest = std::numeric_limits<std::int64_t>::max();
        for (std::size_t m : opt.train_months) {
            for (std::size_t h : opt.horizon_days) {
                smallest = std::min<std::int64_t>(
                    smallest, static_cast<std::int64_t>(m) * kSecondsPerMonth +
                                  static_cast<std::int64_t>(h) * 86400LL);
            }
        }
        const std::int64_t have = data_end - result.epoch_base;
        throw DataError("temporal_eval: data spans " + std::to_string(have / 86400) +
                        " day(s) but the smallest train+horizon configuration needs " +
                        std::to_string(smallest / 86400) + " day(s)");
    }
    return result;
}

TemporalOptions temporal_options_from_json(const json& j, const std::string& origin) {
    if (!j.is_object()) throw ConfigError(origin + ": temporal options must be a JSON object");
    TemporalOptions opt;
    try {
        for (const auto& [key, value] : j.items()) {
            if (key == "train_months") {
                opt.train_months = value.get<std::vector<std::size_t>>();
            } else if (key == "horizon_days") {
                opt.horizon_days = value.get<std::vector<std::size_t>>();
            } else if (key == "classifier") {
                opt.classifier = classifier_config_from_json(value, origin);
            } else if (key == "epoch_base") {
                opt.epoch_base = value.get<std::int64_t>();
            } else if (key == "min_train_per_class") {
                opt.min_train_per_class = value.get<std::size_t>();
            } else {
                throw ConfigError(origin + ": unknown temporal option \"" + key + "\"");
            }
        }
    } catch (const json::exception& e) {
        throw ConfigError(origin + ": bad temporal option value: " + e.what());
    }
    return opt;
}

std::string temporal_result_to_csv(const TemporalResult& result) {
    std::string csv =
        "train_months,horizon_days,anchors,mean_closed_acc,mean_open_acc,mean_known_classes\n";
    for (const TemporalCell& c : result.cells) {
        csv += std::to_string(c.train_months) + "," + std::to_string(c.horizon_days) + "," +
               std::to_string(c.anchors) + ",";
        if (c.anchors > 0) {
            csv += fmt_double(c.mean_closed_acc) + "," + fmt_double(c.mean_open_acc) + "," +
                   fmt_double(c.mean_known_classes);
        } else {
            csv += ",,";
        }
        csv += "\n";
    }
    return csv;
}

// ---------------------------------------------------------------------------
// File lock
// ---------------------------------------------------------------------------

FileLock::FileLock(const std::filesystem::path& target)
    : lock_path_(target.string() + ".lock") {
    int fd = ::open(lock_path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd < 0) {
        throw DataError("cannot lock " + target.string() + ": " + lock_path_.string() +
                        " exists (another review in progress? remove it if stale)");
    }
    ::close(fd);
}

FileLock::~FileLock() {
    std::error_code ec;
    std::filesystem::remove(lock_path_, ec);
}

}  // namespace powerprof
