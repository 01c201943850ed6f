#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <set>

#include <json.hpp>

#include "powerprof/synth.hpp"
#include "powerprof/workflow.hpp"

using namespace powerprof;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    fs::path dir = fs::temp_directory_path() / ("powerprof_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

// three visually distinct synthetic job classes, small enough for unit tests
SynthDataset small_dataset() {
    std::vector<PatternSpec> specs(3);
    specs[0] = {PatternFamily::Constant, 2000.0, 0.0, 4, 30.0, "high"};
    specs[1] = {PatternFamily::SquareWave, 600.0, 500.0, 6, 20.0, "high"};
    specs[2] = {PatternFamily::RampUp, 300.0, 900.0, 4, 25.0, "low"};
    SynthConfig scfg;
    scfg.jobs_per_class = 60;
    scfg.min_len = 24;
    scfg.max_len = 48;
    return generate_dataset(specs, scfg, 42);
}

PipelineConfig small_config(const fs::path& profiles, const fs::path& out_dir) {
    PipelineConfig cfg;
    cfg.profiles = profiles.string();
    cfg.out_dir = out_dir.string();
    cfg.seed = 7;
    cfg.gan.epochs = 60;
    cfg.gan.batch = 16;
    cfg.eps = 1.2;
    cfg.min_pts = 6;
    cfg.catalog.min_class_size = 20;
    cfg.classifier.epochs = 40;
    cfg.classifier.hidden = {32};
    cfg.test_frac = 0.2;
    cfg.sweep_grid = 50;
    return cfg;
}

std::vector<double> flat_features(double watts) {
    JobProfile p;
    p.job_id = "tmp";
    p.values.assign(24, watts);
    FeatureVector f = extract_features(p);
    return std::vector<double>(f.begin(), f.end());
}

PoolEntry entry_at(const std::string& id, double x, double y, double watts = 1800.0,
                   std::int64_t ts = 0) {
    PoolEntry e;
    e.job_id = id;
    e.latent = {x, y};
    e.feature = flat_features(watts);
    e.timestamp = ts;
    return e;
}

std::string padded(const char* prefix, int i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s%02d", prefix, i);
    return buf;
}

}  // namespace

// ---------------------------------------------------------------------------
// Artifact envelope
// ---------------------------------------------------------------------------

TEST_CASE("artifact envelope round trips and detects corruption") {
    fs::path dir = fresh_dir("envelope");
    nlohmann::json payload{{"hello", {1, 2, 3}}, {"pi", 3.25}};

    fs::path path = dir / "thing.json";
    save_artifact(path, "thing", payload);
    CHECK(load_artifact(path, "thing") == payload);

    // save -> load -> save produces identical bytes
    fs::path again = dir / "thing2.json";
    save_artifact(again, "thing", load_artifact(path, "thing"));
    CHECK(read_text_file(path) == read_text_file(again));

    // wrong kind
    CHECK_THROWS_WITH_AS(load_artifact(path, "other"),
                         doctest::Contains("expected kind other"), DataError);

    // truncation
    std::string bytes = read_text_file(path);
    write_text_file(dir / "trunc.json", bytes.substr(0, bytes.size() / 2));
    CHECK_THROWS_WITH_AS(load_artifact(dir / "trunc.json", "thing"),
                         doctest::Contains("corrupt artifact"), DataError);

    // version bump
    nlohmann::json envelope = nlohmann::json::parse(bytes);
    envelope["version"] = 99;
    write_text_file(dir / "v99.json", envelope.dump());
    CHECK_THROWS_WITH_AS(load_artifact(dir / "v99.json", "thing"),
                         doctest::Contains("unsupported version 99"), DataError);

    // payload tampering
    envelope = nlohmann::json::parse(bytes);
    envelope["payload"]["pi"] = 99.0;
    write_text_file(dir / "tampered.json", envelope.dump());
    CHECK_THROWS_WITH_AS(load_artifact(dir / "tampered.json", "thing"),
                         doctest::Contains("digest mismatch"), DataError);

    // not ours
    envelope = nlohmann::json::parse(bytes);
    envelope["artifact"] = "somebody-else";
    write_text_file(dir / "foreign.json", envelope.dump());
    CHECK_THROWS_AS(load_artifact(dir / "foreign.json", "thing"), DataError);

    CHECK_THROWS_AS(load_artifact(dir / "missing.json", "thing"), DataError);
    fs::remove_all(dir);
}

// ---------------------------------------------------------------------------
// Pipeline config
// ---------------------------------------------------------------------------

TEST_CASE("pipeline config json round trips and rejects unknown keys") {
    PipelineConfig cfg;
    cfg.profiles = "p.jsonl";
    cfg.out_dir = "out";
    cfg.seed = 3;
    cfg.eps = 0.7;
    cfg.catalog.min_class_size = 10;

    nlohmann::json j = pipeline_config_to_json(cfg);
    PipelineConfig back = pipeline_config_from_json(j, "test");
    CHECK(pipeline_config_to_json(back).dump() == j.dump());
    CHECK(back.eps == 0.7);
    CHECK(back.catalog.min_class_size == 10);

    nlohmann::json bad = j;
    bad["epz"] = 1.0;
    CHECK_THROWS_AS(pipeline_config_from_json(bad, "test"), ConfigError);
    bad = j;
    bad["catalog"]["min_size"] = 1;
    CHECK_THROWS_AS(pipeline_config_from_json(bad, "test"), ConfigError);

    PipelineConfig both = cfg;
    both.telemetry = "t.csv";
    both.jobs = "j.jsonl";
    CHECK_THROWS_AS(validate_pipeline_config(both), ConfigError);
    PipelineConfig neither;
    neither.out_dir = "out";
    CHECK_THROWS_AS(validate_pipeline_config(neither), ConfigError);
    PipelineConfig bad_frac = cfg;
    bad_frac.test_frac = 1.0;
    CHECK_THROWS_AS(validate_pipeline_config(bad_frac), ConfigError);
}

// ---------------------------------------------------------------------------
// Full pipeline
// ---------------------------------------------------------------------------

TEST_CASE("run_pipeline produces a verifiable manifest and identical reruns") {
    fs::path dir = fresh_dir("pipeline");
    SynthDataset ds = small_dataset();
    write_profiles(dir / "profiles_in.jsonl", ds.profiles);

    PipelineConfig cfg = small_config(dir / "profiles_in.jsonl", dir / "run1");
    RunManifest manifest = run_pipeline(cfg);

    const std::vector<std::string> stage_order = {"ingest",  "features", "scaler",
                                                  "gan.train", "embed",  "cluster",
                                                  "catalog", "train_closed", "sweep_threshold"};
    REQUIRE(manifest.stages.size() == stage_order.size());
    for (std::size_t i = 0; i < stage_order.size(); ++i) {
        CHECK(manifest.stages[i].name == stage_order[i]);
        CHECK(manifest.stages[i].version == 1);
    }

    const std::vector<std::string> artifact_names = {"catalog", "classifier", "clusters",
                                                     "features", "gan",       "latents",
                                                     "profiles", "scaler",    "sweep"};
    REQUIRE(manifest.artifacts.size() == artifact_names.size());
    for (const std::string& name : artifact_names) {
        REQUIRE(manifest.artifacts.count(name) == 1);
        CHECK(fs::exists(dir / "run1" / manifest.artifacts.at(name).path));
    }
    CHECK(manifest.inputs.count("profiles") == 1);
    verify_manifest(manifest, dir / "run1");

    // the manifest artifact itself round trips
    RunManifest reloaded =
        manifest_from_payload(load_artifact(dir / "run1" / "manifest.json", "manifest"));
    CHECK(reloaded.seed == 7);
    CHECK(reloaded.artifacts.at("gan").digest == manifest.artifacts.at("gan").digest);
    verify_manifest(reloaded, dir / "run1");

    // the catalog recovered the three synthetic classes
    ClassCatalog catalog =
        catalog_from_payload(load_artifact(dir / "run1" / "catalog.json", "catalog"));
    CHECK(catalog.classes.size() == 3);
    CHECK(catalog.next_class_id == 3);

    // clustering quality against the generator labels
    std::vector<std::string> ids;
    ClusterResult clusters = cluster_result_from_json(
        read_text_file(dir / "run1" / "clusters.json"), "clusters", &ids);
    std::vector<int> truth;
    for (const std::string& id : ids) truth.push_back(ds.labels.at(id));
    CHECK(homogeneity(truth, clusters.labels) >= 0.9);

    // residual jobs exist, so the sweep ran and pinned a finite tau
    ClassifierModel clf = classifier_from_payload(
        load_artifact(dir / "run1" / "classifier.json", "classifier"));
    CHECK(std::isfinite(clf.tau));
    CHECK(clf.tau > 0.0);
    CHECK(clf.catalog_ref == manifest.artifacts.at("catalog").digest);
    std::string sweep_csv = read_text_file(dir / "run1" / "sweep.csv");
    CHECK(std::count(sweep_csv.begin(), sweep_csv.end(), '\n') == 51);  // header + grid

    // identical rerun: every artifact digest matches
    PipelineConfig cfg2 = small_config(dir / "profiles_in.jsonl", dir / "run2");
    RunManifest manifest2 = run_pipeline(cfg2);
    for (const std::string& name : artifact_names) {
        CHECK(manifest.artifacts.at(name).digest == manifest2.artifacts.at(name).digest);
    }

    // drift detection
    std::string latents_bytes = read_text_file(dir / "run1" / "latents.csv");
    write_text_file(dir / "run1" / "latents.csv", latents_bytes + "tampered\n");
    CHECK_THROWS_WITH_AS(verify_manifest(manifest, dir / "run1"),
                         doctest::Contains("drifted"), DataError);

    // a stage failure names the stage; earlier artifacts are retained
    PipelineConfig missing = small_config(dir / "nope.jsonl", dir / "run3");
    CHECK_THROWS_WITH_AS(run_pipeline(missing), doctest::Contains("stage=ingest"), DataError);
    PipelineConfig starved = small_config(dir / "profiles_in.jsonl", dir / "run4");
    starved.catalog.min_class_size = 10000;
    CHECK_THROWS_WITH_AS(run_pipeline(starved), doctest::Contains("stage=catalog"), DataError);
    CHECK(fs::exists(dir / "run4" / "latents.csv"));

    fs::remove_all(dir);
}

// ---------------------------------------------------------------------------
// Unknown pool
// ---------------------------------------------------------------------------

TEST_CASE("pool_add_unknowns appends only new rejections") {
    LatentMatrix lm;
    FeatureMatrix fm;
    std::vector<Prediction> preds(5);
    for (int i = 0; i < 5; ++i) {
        std::string id = padded("u-", i);
        lm.job_ids.push_back(id);
        lm.rows.push_back({double(i), 0.0});
        fm.job_ids.push_back(id);
        JobProfile p;
        p.values.assign(24, 100.0 * (i + 1));
        FeatureVector f = extract_features(p);
        fm.rows.push_back(f);
        preds[i].job_id = id;
        preds[i].outcome = (i == 1) ? 3 : -1;  // u-01 was accepted, the rest rejected
        preds[i].min_distance = 9.0;
    }
    std::map<std::string, std::int64_t> submits{{"u-00", 111}, {"u-02", 222}};

    UnknownPool pool;
    CHECK(pool_add_unknowns(pool, preds, lm, fm, submits) == 4);
    REQUIRE(pool.entries.size() == 4);
    CHECK(pool.entries[0].job_id == "u-00");
    CHECK(pool.entries[0].timestamp == 111);
    CHECK(pool.entries[1].job_id == "u-02");
    CHECK(pool.entries[1].timestamp == 222);
    CHECK(pool.entries[2].timestamp == 0);  // no submit known
    CHECK(pool.entries[0].latent == std::vector<double>{0.0, 0.0});
    CHECK(pool.entries[0].feature.size() == kNumFeatures);
    CHECK(pool.entries[0].feature[184] == doctest::Approx(100.0));

    // idempotent re-add
    CHECK(pool_add_unknowns(pool, preds, lm, fm, submits) == 0);
    CHECK(pool.entries.size() == 4);

    // a rejected prediction without a latent row is an error
    Prediction orphan;
    orphan.job_id = "ghost";
    orphan.outcome = -1;
    CHECK_THROWS_WITH_AS(pool_add_unknowns(pool, {orphan}, lm, fm, submits),
                         doctest::Contains("no latent row"), DataError);
}

TEST_CASE("recluster_unknowns proposes dense pooled clusters") {
    UnknownPool pool;
    for (int i = 0; i < 60; ++i) pool.entries.push_back(entry_at(padded("a-", i), 0.0, 0.0));
    for (int i = 0; i < 55; ++i) pool.entries.push_back(entry_at(padded("b-", i), 8.0, 0.0));
    for (int i = 0; i < 9; ++i) {
        pool.entries.push_back(entry_at(padded("x-", i), 100.0 + 7.0 * i, 50.0));
    }

    std::vector<ClassProposal> proposals = recluster_unknowns(pool, 0.5, 5, 50);
    REQUIRE(proposals.size() == 2);
    CHECK(proposals[0].proposal_id == "prop-000");
    CHECK(proposals[0].size == 60);
    CHECK(proposals[0].member_job_ids.front() == "a-00");
    CHECK(proposals[0].medoid_job_id.substr(0, 2) == "a-");
    CHECK(proposals[0].status == "pending");
    CHECK(proposals[1].proposal_id == "prop-001");
    CHECK(proposals[1].size == 55);
    CHECK(std::is_sorted(proposals[1].member_job_ids.begin(),
                         proposals[1].member_job_ids.end()));

    // id numbering continues from first_seq
    std::vector<ClassProposal> later = recluster_unknowns(pool, 0.5, 5, 50, 4);
    CHECK(later[0].proposal_id == "prop-004");

    // scattered points make no proposals
    UnknownPool scattered;
    for (int i = 0; i < 30; ++i) {
        scattered.entries.push_back(entry_at(padded("s-", i), 10.0 * i, -40.0));
    }
    CHECK(recluster_unknowns(scattered, 0.5, 5, 50).empty());

    // too small to cluster at all
    UnknownPool tiny;
    for (int i = 0; i < 3; ++i) tiny.entries.push_back(entry_at(padded("t-", i), 0, 0));
    CHECK_THROWS_WITH_AS(recluster_unknowns(tiny, 0.5, 5, 50),
                         doctest::Contains("fewer than min_pts"), DataError);
}

// ---------------------------------------------------------------------------
// Review
// ---------------------------------------------------------------------------

namespace {

ReviewState pooled_state(std::size_t n, double x, double y) {
    ReviewState state;
    for (std::size_t i = 0; i < n; ++i) {
        state.pool.entries.push_back(entry_at(padded("new-", int(i)), x, y));
    }
    return state;
}

}  // namespace

TEST_CASE("review approves a proposal into the catalog") {
    ReviewState state = pooled_state(60, 5.0, 5.0);
    ClassCatalog catalog;
    catalog.next_class_id = 2;  // ids 0 and 1 were used by earlier classes

    std::vector<std::string> fresh = refresh_proposals(state, 0.5, 5, 50);
    REQUIRE(fresh == std::vector<std::string>{"prop-000"});
    CHECK(state.next_proposal_seq == 1);

    const ClassProposal& decided =
        review_proposal(state, catalog, "prop-000", "approve", "alice", 1234);
    CHECK(decided.status == "approved");
    CHECK(decided.proposed_class_id == 2);
    CHECK(decided.decided_by == "alice");
    CHECK(decided.decided_at == 1234);

    REQUIRE(catalog.classes.size() == 1);
    const CatalogClass& cls = catalog.classes.back();
    CHECK(cls.class_id == 2);
    CHECK(catalog.next_class_id == 3);
    CHECK(cls.member_job_ids.size() == 60);
    CHECK(cls.intensity == "CIH");  // flat 1800 W members
    CHECK(cls.medoid_job_id.substr(0, 4) == "new-");

    // members moved out of the pool but stay reachable
    CHECK(state.pool.entries.empty());
    CHECK(state.promoted.size() == 60);
    REQUIRE(state.log.size() == 1);
    CHECK(state.log[0].find("operator=alice") != std::string::npos);
    CHECK(state.log[0].find("class_id=2") != std::string::npos);

    CHECK_THROWS_WITH_AS(
        review_proposal(state, catalog, "prop-000", "approve", "bob", 1235),
        doctest::Contains("already decided"), DataError);
    CHECK_THROWS_WITH_AS(
        review_proposal(state, catalog, "prop-000", "reject", "bob", 1235),
        doctest::Contains("already decided"), DataError);
}

TEST_CASE("review rejection keeps members pooled") {
    ReviewState state = pooled_state(55, -3.0, 4.0);
    ClassCatalog catalog;
    catalog.next_class_id = 1;

    refresh_proposals(state, 0.5, 5, 50);
    const ClassProposal& decided =
        review_proposal(state, catalog, "prop-000", "reject", "carol", 99);
    CHECK(decided.status == "rejected");
    CHECK(decided.proposed_class_id == -1);
    CHECK(catalog.classes.empty());
    CHECK(catalog.next_class_id == 1);
    CHECK(state.pool.entries.size() == 55);
    CHECK(state.promoted.empty());

    // a later cycle keeps the decided proposal and numbers past it
    std::vector<std::string> fresh = refresh_proposals(state, 0.5, 5, 50);
    REQUIRE(fresh == std::vector<std::string>{"prop-001"});
    CHECK(state.proposals.size() == 2);
    CHECK(state.proposals[0].status == "rejected");
    CHECK(state.proposals[1].status == "pending");

    CHECK_THROWS_AS(review_proposal(state, catalog, "prop-001", "maybe", "carol", 99),
                    ConfigError);
    CHECK_THROWS_WITH_AS(review_proposal(state, catalog, "prop-999", "approve", "carol", 99),
                         doctest::Contains("no proposal"), DataError);
}

TEST_CASE("review state payload round trips") {
    ReviewState state = pooled_state(6, 1.0, 2.0);
    state.pool.entries[0].timestamp = 777;
    state.promoted.push_back(entry_at("old-00", 9.0, 9.0));
    ClassProposal p;
    p.proposal_id = "prop-000";
    p.member_job_ids = {"new-00", "new-01"};
    p.medoid_job_id = "new-00";
    p.size = 2;
    p.status = "rejected";
    p.decided_by = "dave";
    p.decided_at = 42;
    state.proposals.push_back(p);
    state.log.push_back("ts=42 operator=dave proposal=prop-000 verdict=reject");
    state.next_proposal_seq = 1;

    nlohmann::json payload = review_state_to_payload(state);
    ReviewState back = review_state_from_payload(payload);
    CHECK(review_state_to_payload(back).dump() == payload.dump());
    CHECK(back.pool.entries.size() == 6);
    CHECK(back.pool.entries[0].timestamp == 777);
    CHECK(back.promoted.size() == 1);
    CHECK(back.proposals.size() == 1);
    CHECK(back.proposals[0].decided_by == "dave");
    CHECK(back.next_proposal_seq == 1);

    CHECK_THROWS_AS(review_state_from_payload(nlohmann::json::object()), DataError);
}

// ---------------------------------------------------------------------------
// Retrain
// ---------------------------------------------------------------------------

namespace {

struct RetrainFixture {
    LatentMatrix known;          // classes 0 and 1
    std::vector<int> known_labels;
    ClassifierModel old_model;
    ClassCatalog catalog;        // classes 0, 1 and the promoted class 2
    ReviewState state;
    ClassifierConfig cfg;
};

RetrainFixture make_retrain_fixture(bool with_promotion) {
    RetrainFixture fx;
    Rng rng = Rng::for_stage(31, "test.wf.retrain");
    CatalogClass cls0, cls1;
    cls0.class_id = 0;
    cls1.class_id = 1;
    for (int i = 0; i < 30; ++i) {
        std::string a = padded("a-", i), b = padded("b-", i);
        fx.known.job_ids.push_back(a);
        fx.known.rows.push_back({rng.normal(0.0, 0.3), rng.normal(0.0, 0.3)});
        fx.known_labels.push_back(0);
        cls0.member_job_ids.push_back(a);
        fx.known.job_ids.push_back(b);
        fx.known.rows.push_back({6.0 + rng.normal(0.0, 0.3), rng.normal(0.0, 0.3)});
        fx.known_labels.push_back(1);
        cls1.member_job_ids.push_back(b);
    }
    fx.cfg.input_dim = 2;
    fx.cfg.hidden = {16};
    fx.cfg.epochs = 40;
    fx.cfg.batch = 12;
    fx.cfg.seed = 3;
    fx.old_model = train_closed(fx.known, fx.known_labels, fx.cfg);

    std::sort(cls0.member_job_ids.begin(), cls0.member_job_ids.end());
    std::sort(cls1.member_job_ids.begin(), cls1.member_job_ids.end());
    fx.catalog.classes = {cls0, cls1};
    fx.catalog.next_class_id = 2;

    if (with_promotion) {
        CatalogClass cls2;
        cls2.class_id = 2;
        for (int i = 0; i < 30; ++i) {
            std::string c = padded("c-", i);
            cls2.member_job_ids.push_back(c);
            PoolEntry e = entry_at(c, rng.normal(0.0, 0.3), 6.0 + rng.normal(0.0, 0.3));
            fx.state.promoted.push_back(std::move(e));
        }
        fx.catalog.classes.push_back(cls2);
        fx.catalog.next_class_id = 3;
        // a few undecided stragglers stay pooled
        for (int i = 0; i < 8; ++i) {
            fx.state.pool.entries.push_back(entry_at(padded("z-", i), 20.0, 20.0));
        }
    }
    return fx;
}

}  // namespace

TEST_CASE("retrain adds the approved class and keeps old ids") {
    RetrainFixture fx = make_retrain_fixture(true);
    RetrainResult result = retrain_classifier(fx.old_model, fx.catalog, fx.known, fx.state,
                                              fx.cfg, 0.2, 50, false);
    CHECK(result.retrained);
    CHECK(result.model.class_ids == std::vector<int>{0, 1, 2});
    CHECK(result.archived_digest == sha256_hex(classifier_to_payload(fx.old_model).dump()));
    CHECK(result.model.previous == result.archived_digest);

    // 6 held out per class
    CHECK(result.holdout_ids.size() == 18);
    REQUIRE(result.holdout_class_recall.size() == 3);
    CHECK(result.holdout_class_recall.at(2) >= 0.8);
    CHECK(result.holdout_class_recall.at(0) >= 0.8);
    CHECK(result.holdout_class_recall.at(1) >= 0.8);

    // the leftover pool drove a sweep
    CHECK(result.swept);
    CHECK(result.model.tau == result.sweep.tau_star);
    CHECK(result.sweep.best_accuracy > 0.9);
}

TEST_CASE("retrain without approvals is a no-op unless forced") {
    RetrainFixture fx = make_retrain_fixture(false);
    RetrainResult skipped = retrain_classifier(fx.old_model, fx.catalog, fx.known, fx.state,
                                               fx.cfg, 0.2, 50, false);
    CHECK(!skipped.retrained);
    CHECK(skipped.notice.find("force") != std::string::npos);
    CHECK(classifier_to_payload(skipped.model).dump() ==
          classifier_to_payload(fx.old_model).dump());

    RetrainResult forced = retrain_classifier(fx.old_model, fx.catalog, fx.known, fx.state,
                                              fx.cfg, 0.2, 50, true);
    CHECK(forced.retrained);
    CHECK(forced.model.class_ids == std::vector<int>{0, 1});
    // empty pool: tau falls back to the training p95
    CHECK(!forced.swept);
    CHECK(forced.model.tau == forced.model.train_min_dist_p95);
    CHECK(forced.notice.find("pool is empty") != std::string::npos);
}

TEST_CASE("retrain validates id stability and latent coverage") {
    RetrainFixture fx = make_retrain_fixture(true);

    // the old model knows a class id the catalog no longer has
    RetrainFixture fx7 = make_retrain_fixture(true);
    std::vector<int> shifted = fx7.known_labels;
    for (int& l : shifted) {
        if (l == 1) l = 7;
    }
    ClassifierModel old7 = train_closed(fx7.known, shifted, fx7.cfg);
    CHECK_THROWS_WITH_AS(retrain_classifier(old7, fx.catalog, fx.known, fx.state, fx.cfg, 0.2,
                                            50, false),
                         doctest::Contains("ids must be stable"), DataError);

    // a catalog member with no latent anywhere
    fx.catalog.classes[0].member_job_ids.push_back("ghost-job");
    CHECK_THROWS_WITH_AS(retrain_classifier(fx.old_model, fx.catalog, fx.known, fx.state,
                                            fx.cfg, 0.2, 50, false),
                         doctest::Contains("no latent vector"), DataError);
}

// ---------------------------------------------------------------------------
// Temporal evaluation
// ---------------------------------------------------------------------------

namespace {

struct Calendar {
    LatentMatrix latents;
    std::vector<int> labels;
    std::vector<std::int64_t> submits;
};

// classes 0 and 1 run all year; class 2 first appears in month 7
Calendar make_calendar() {
    Calendar cal;
    const std::int64_t base = 1700000000;
    Rng rng = Rng::for_stage(11, "test.wf.temporal");
    auto add = [&](int cls, double cx, double cy, int month, int j) {
        cal.latents.job_ids.push_back(padded(("m" + std::to_string(month) + "c" +
                                              std::to_string(cls) + "-").c_str(), j));
        cal.latents.rows.push_back({cx + rng.normal(0.0, 0.3), cy + rng.normal(0.0, 0.3)});
        cal.labels.push_back(cls);
        cal.submits.push_back(base + month * kSecondsPerMonth + j * 3600);
    };
    for (int month = 0; month < 12; ++month) {
        for (int j = 0; j < 6; ++j) {
            add(0, 0.0, 0.0, month, j);
            add(1, 10.0, 0.0, month, j);
            if (month >= 7) add(2, 0.0, 10.0, month, j);
        }
    }
    return cal;
}

TemporalOptions calendar_options() {
    TemporalOptions opt;
    opt.classifier.input_dim = 2;
    opt.classifier.hidden = {16};
    opt.classifier.epochs = 30;
    opt.classifier.batch = 12;
    opt.classifier.seed = 3;
    opt.epoch_base = 1700000000;
    return opt;
}

}  // namespace

TEST_CASE("temporal_eval matches a constructed calendar") {
    Calendar cal = make_calendar();
    TemporalOptions opt = calendar_options();
    opt.train_months = {1, 9};
    opt.horizon_days = {7, 30};

    TemporalResult result = temporal_eval(cal.latents, cal.labels, cal.submits, opt);
    CHECK(result.epoch_base == 1700000000);
    REQUIRE(result.cells.size() == 4);

    // every evaluated window: test follows training with no overlap, and the
    // known-class count equals what the calendar was built to contain
    CHECK(!result.windows.empty());
    for (const TemporalWindow& w : result.windows) {
        CHECK(w.test_begin >= w.train_end);
        CHECK(w.test_end > w.test_begin);
        CHECK(w.train_end == w.train_begin +
                                 std::int64_t(w.train_months) * kSecondsPerMonth);
        const std::size_t last_train_month = w.anchor + w.train_months - 1;
        CHECK(w.known_classes == (last_train_month >= 7 ? 3 : 2));
        CHECK(w.closed_acc >= 0.9);
    }

    const TemporalCell& m1h7 = result.cells[0];
    CHECK(m1h7.train_months == 1);
    CHECK(m1h7.horizon_days == 7);
    CHECK(m1h7.anchors == 10);
    CHECK(m1h7.mean_known_classes == doctest::Approx((7.0 * 2 + 3.0 * 3) / 10.0));
    CHECK(m1h7.mean_closed_acc >= 0.95);
    CHECK(m1h7.mean_open_acc >= 0.9);

    const TemporalCell& m9h7 = result.cells[2];
    CHECK(m9h7.train_months == 9);
    CHECK(m9h7.anchors == 2);
    CHECK(m9h7.mean_known_classes == 3.0);

    // a shorter training span sees fewer known classes on average
    CHECK(m1h7.mean_known_classes < m9h7.mean_known_classes);

    std::string csv = temporal_result_to_csv(result);
    CHECK(csv.rfind("train_months,horizon_days,anchors,", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
}

TEST_CASE("temporal_eval leaves unfitting cells blank and rejects hopeless spans") {
    Calendar cal = make_calendar();
    TemporalOptions opt = calendar_options();
    opt.train_months = {1, 13};  // 13 months + horizon never fits a 1-year span
    opt.horizon_days = {7};

    TemporalResult result = temporal_eval(cal.latents, cal.labels, cal.submits, opt);
    REQUIRE(result.cells.size() == 2);
    CHECK(result.cells[0].anchors > 0);
    CHECK(result.cells[1].anchors == 0);
    std::string csv = temporal_result_to_csv(result);
    CHECK(csv.find("13,7,0,,,\n") != std::string::npos);

    // three days of data cannot host a 1-month + 7-day evaluation
    Calendar tiny;
    Rng rng = Rng::for_stage(12, "test.wf.temporal.tiny");
    for (int i = 0; i < 20; ++i) {
        tiny.latents.job_ids.push_back(padded("t-", i));
        tiny.latents.rows.push_back({rng.normal(0.0, 1.0), rng.normal(0.0, 1.0)});
        tiny.labels.push_back(i % 2);
        tiny.submits.push_back(1700000000 + i * 10000);
    }
    TemporalOptions small = calendar_options();
    small.train_months = {1};
    small.horizon_days = {7};
    CHECK_THROWS_WITH_AS(temporal_eval(tiny.latents, tiny.labels, tiny.submits, small),
                         doctest::Contains("needs 37 day(s)"), DataError);

    CHECK_THROWS_AS(temporal_eval(LatentMatrix{}, {}, {}, small), DataError);
}

// ---------------------------------------------------------------------------
// File lock
// ---------------------------------------------------------------------------

TEST_CASE("file lock is exclusive while held") {
    fs::path dir = fresh_dir("lock");
    fs::path target = dir / "catalog.json";
    {
        FileLock lock(target);
        CHECK(fs::exists(dir / "catalog.json.lock"));
        CHECK_THROWS_WITH_AS(FileLock{target}, doctest::Contains("another review"), DataError);
    }
    CHECK(!fs::exists(dir / "catalog.json.lock"));
    FileLock relock(target);  // released locks can be retaken
    fs::remove_all(dir);
}
