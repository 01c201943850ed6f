// Acceptance gates for the job power profiling pipeline.
//
// Twelve numbered end-to-end checks, each printing one [PASS]/[FAIL] line
// with its measured values and wall time. Unlike the unit suite these run
// the real models at realistic sizes: an 8-class synthetic corpus of 2,000
// jobs is built once (criterion 6) and reused by the classifier, sweep,
// reconstruction, and injection checks (7-10). The binary exits nonzero if
// any criterion fails.
//
// Tolerances and dataset parameters are pinned here on purpose: a change in
// any numeric path that moves a gate shows up as a FAIL, not as a silently
// shifted expectation.

#include <algorithm>
#include <chrono>
#include <cctype>
#include <cmath>
#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "powerprof/cluster.hpp"
#include "powerprof/features.hpp"
#include "powerprof/gan.hpp"
#include "powerprof/ingest.hpp"
#include "powerprof/openset.hpp"
#include "powerprof/synth.hpp"
#include "powerprof/workflow.hpp"

#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace powerprof;

namespace {

// ---------------------------------------------------------------------------
// Criterion runner
// ---------------------------------------------------------------------------

int g_failures = 0;

struct Outcome {
    bool ok = true;
    std::string detail;
};

std::string fmt(const char* format, ...) {
    char buf[512];
    va_list args;
    va_start(args, format);
    std::vsnprintf(buf, sizeof(buf), format, args);
    va_end(args);
    return buf;
}

// Runs one criterion, enforces its wall-clock budget (0 = none), prints one
// line. Exceptions count as failures rather than aborting the remaining
// criteria.
void criterion(int number, const char* name, double time_limit_s,
               const std::function<Outcome()>& body) {
    auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    try {
        out = body();
    } catch (const std::exception& e) {
        out.ok = false;
        out.detail = std::string("exception: ") + e.what();
    }
    double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (time_limit_s > 0.0 && secs > time_limit_s) {
        out.ok = false;
        out.detail += fmt(" [exceeded %.0fs budget]", time_limit_s);
    }
    std::printf("[%s] %2d %-32s %7.1fs  %s\n", out.ok ? "PASS" : "FAIL", number, name, secs,
                out.detail.c_str());
    std::fflush(stdout);
    if (!out.ok) ++g_failures;
}

// ---------------------------------------------------------------------------
// Shared fixtures
// ---------------------------------------------------------------------------

// Eight visually distinct synthetic workload classes spanning the catalog's
// intensity space: steady high/low power, two square waves, both ramps, a
// spike train, and a wide-noise flat class.
std::vector<PatternSpec> eight_specs() {
    std::vector<PatternSpec> s(8);
    s[0].family = PatternFamily::Constant;   s[0].base_power = 2000; s[0].noise_std = 30;
    s[1].family = PatternFamily::Constant;   s[1].base_power = 400;  s[1].noise_std = 15;
    s[2].family = PatternFamily::SquareWave; s[2].base_power = 600;  s[2].swing_amplitude = 500;  s[2].period = 6;  s[2].noise_std = 20;
    s[3].family = PatternFamily::SquareWave; s[3].base_power = 1500; s[3].swing_amplitude = 900;  s[3].period = 12; s[3].noise_std = 25;
    s[4].family = PatternFamily::RampUp;     s[4].base_power = 300;  s[4].swing_amplitude = 900;  s[4].noise_std = 25;
    s[5].family = PatternFamily::RampDown;   s[5].base_power = 1800; s[5].swing_amplitude = 1200; s[5].noise_std = 25;
    s[6].family = PatternFamily::SpikeTrain; s[6].base_power = 500;  s[6].swing_amplitude = 1800; s[6].period = 10; s[6].noise_std = 20;
    s[7].family = PatternFamily::NoiseFlat;  s[7].base_power = 1000; s[7].noise_std = 150;
    return s;
}

// The 2,000-job corpus plus everything trained on it, built inside
// criterion 6 (so its cost counts against that budget) and reused by 7-10.
struct Heavy {
    SynthDataset ds;
    FeatureMatrix raw;
    Scaler scaler;
    FeatureMatrix standardized;
    GanModel gan;
    LatentMatrix latents;
    std::vector<int> truth;        // generator labels aligned with latent rows
    std::vector<Point> points;     // latent rows as cluster points
    ClusterResult clusters;        // latent-space DBSCAN, eps 0.6 / min_pts 6
};

std::unique_ptr<Heavy> g_heavy;

// Splits rows of (Z, y) into the train/test partition given by `split`.
struct LabeledSplit {
    LatentMatrix train_z, test_z;
    std::vector<int> train_y, test_y;
};

LabeledSplit partition(const LatentMatrix& z, const std::vector<int>& y,
                       const SplitIndices& split) {
    LabeledSplit out;
    for (std::size_t i : split.train) {
        out.train_z.job_ids.push_back(z.job_ids[i]);
        out.train_z.rows.push_back(z.rows[i]);
        out.train_y.push_back(y[i]);
    }
    for (std::size_t i : split.test) {
        out.test_z.job_ids.push_back(z.job_ids[i]);
        out.test_z.rows.push_back(z.rows[i]);
        out.test_y.push_back(y[i]);
    }
    return out;
}

Matrix one_hot_anchors(std::size_t n, double magnitude) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m.at(i, i) = magnitude;
    return m;
}

double double_bits_equal(double a, double b) {
    return std::memcmp(&a, &b, sizeof(double)) == 0;
}

fs::path fresh_dir(const std::string& leaf) {
    fs::path dir = fs::temp_directory_path() / "powerprof-acceptance" / leaf;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

// ---------------------------------------------------------------------------
// 1. Production feature extractor vs the naive oracle, bitwise, 1,000 profiles
// ---------------------------------------------------------------------------

Outcome check_feature_oracle() {
    SynthConfig cfg;
    cfg.jobs_per_class = 125;  // 8 classes -> 1,000 profiles
    cfg.min_len = 8;           // shortest legal profile
    cfg.max_len = 200;
    SynthDataset ds = generate_dataset(eight_specs(), cfg, 5);

    std::size_t mismatched_profiles = 0;
    for (const JobProfile& p : ds.profiles) {
        FeatureVector prod = extract_features(p);
        std::array<double, 186> ref = oracle::features(p);
        if (std::memcmp(prod.data(), ref.data(), sizeof(prod)) != 0) ++mismatched_profiles;
    }
    Outcome out;
    out.ok = ds.profiles.size() == 1000 && mismatched_profiles == 0;
    out.detail = fmt("%zu profiles, %zu bitwise mismatches", ds.profiles.size(),
                     mismatched_profiles);
    return out;
}

// ---------------------------------------------------------------------------
// 2. Feature layout identity: 186 features, FEATURES.md matches the canonical
//    names row for row
// ---------------------------------------------------------------------------

static_assert(11 * 2 * 2 * 4 + 4 + 4 + 1 + 1 == 186);
static_assert(kNumFeatures == 186);

Outcome check_feature_layout() {
    std::vector<std::string> names = canonical_feature_names();

    std::string text = read_text_file(fs::path(POWERPROF_SOURCE_DIR) / "FEATURES.md");
    std::istringstream in(text);
    std::string line;
    std::vector<std::pair<std::size_t, std::string>> rows;
    while (std::getline(in, line)) {
        // table rows look like "| f042 | `bin2_lag1_rise_25_50` | ..."
        if (line.rfind("| f", 0) != 0 || line.size() < 6 ||
            !std::isdigit(static_cast<unsigned char>(line[3]))) {
            continue;
        }
        std::size_t idx = std::stoul(line.substr(3, 3));
        std::size_t b1 = line.find('`');
        std::size_t b2 = b1 == std::string::npos ? std::string::npos : line.find('`', b1 + 1);
        if (b2 == std::string::npos) return {false, "malformed FEATURES.md table row: " + line};
        rows.emplace_back(idx, line.substr(b1 + 1, b2 - b1 - 1));
    }

    std::size_t agree = 0;
    for (std::size_t i = 0; i < rows.size() && i < names.size(); ++i) {
        if (rows[i].first == i && rows[i].second == names[i]) ++agree;
    }
    Outcome out;
    out.ok = names.size() == 186 && rows.size() == 186 && agree == 186;
    out.detail = fmt("%zu canonical names, %zu documented rows, %zu agree", names.size(),
                     rows.size(), agree);
    return out;
}

// ---------------------------------------------------------------------------
// 3. Gradient checks on the five production architectures
// ---------------------------------------------------------------------------

Outcome check_gradients() {
    Rng rng(90210);

    LossFn mean_square = [](const Matrix& out) {
        LossEval e;
        e.dy = Matrix(out.rows, out.cols);
        double scale = 1.0 / static_cast<double>(out.rows * out.cols);
        for (std::size_t i = 0; i < out.data.size(); ++i) {
            e.loss += out.data[i] * out.data[i] * scale;
            e.dy.data[i] = 2.0 * out.data[i] * scale;
        }
        return e;
    };

    Matrix anchors = one_hot_anchors(4, 10.0);
    std::vector<std::size_t> labels(12);
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = i % 4;
    LossFn cac = [&anchors, labels](const Matrix& out) {
        CacEval ev = cac_loss_batch(out, labels, anchors, 0.1);
        LossEval le;
        le.loss = ev.loss;
        le.dy = ev.dlogits;
        return le;
    };

    double worst = 0.0;
    std::size_t total_params = 0;
    std::string failing;
    // ReLU kinks make finite differences lie when a perturbation flips an
    // activation; h = 1e-5 keeps the crossing window negligible while staying
    // far above roundoff.
    auto check_one = [&](const char* name, const std::vector<std::size_t>& dims, bool batchnorm,
                         std::size_t batch_rows, const LossFn& loss) {
        Network net = make_mlp(dims, rng, batchnorm);
        Matrix batch(batch_rows, dims.front());
        for (double& v : batch.data) v = rng.normal(0.0, 1.0);
        GradCheckResult r = grad_check(net, loss, batch, 500, rng, 1e-5);
        total_params += r.params_checked;
        worst = std::max(worst, r.max_rel_error);
        if (!(r.max_rel_error < 1e-4) || r.params_checked == 0) {
            failing += fmt(" %s=%.2e", name, r.max_rel_error);
        }
    };
    check_one("encoder", {186, 40, 10}, true, 16, mean_square);
    check_one("generator", {10, 128, 186}, false, 16, mean_square);
    check_one("critic_data", {186, 100, 10, 1}, false, 16, mean_square);
    check_one("critic_latent", {10, 1}, false, 16, mean_square);
    check_one("classifier", {10, 64, 64, 4}, false, 12, cac);
    Outcome out;
    out.ok = failing.empty();
    out.detail = fmt("5 networks, %zu parameters sampled, worst rel error %.2e%s",
                     total_params, worst, failing.c_str());
    return out;
}

// ---------------------------------------------------------------------------
// 4. Production DBSCAN vs the brute-force oracle on 50 random suites
// ---------------------------------------------------------------------------

// Cluster labels may differ by renumbering; require a consistent bijection
// between the two labelings and identical noise sets.
bool labelings_equivalent(const std::vector<int>& a, const std::vector<int>& b) {
    if (a.size() != b.size()) return false;
    std::map<int, int> fwd, rev;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if ((a[i] < 0) != (b[i] < 0)) return false;
        if (a[i] < 0) continue;
        auto [fit, finserted] = fwd.emplace(a[i], b[i]);
        if (!finserted && fit->second != b[i]) return false;
        auto [rit, rinserted] = rev.emplace(b[i], a[i]);
        if (!rinserted && rit->second != a[i]) return false;
    }
    return true;
}

Outcome check_dbscan_oracle() {
    Rng rng(4242);
    std::size_t suites_ok = 0, total_points = 0;
    std::string first_failure;

    for (std::size_t suite = 0; suite < 50; ++suite) {
        std::size_t n = 40 + rng.uniform_int(161);  // 40..200
        std::size_t dim = 2 + rng.uniform_int(3);   // 2..4
        std::size_t blobs = 1 + rng.uniform_int(4); // 1..4

        std::vector<Point> centers(blobs, Point(dim));
        for (Point& c : centers)
            for (double& v : c) v = rng.uniform(-5.0, 5.0);

        std::vector<Point> pts(n, Point(dim));
        for (Point& p : pts) {
            if (rng.uniform() < 0.8) {
                const Point& c = centers[rng.uniform_int(blobs)];
                for (std::size_t d = 0; d < dim; ++d) p[d] = c[d] + rng.normal(0.0, 0.4);
            } else {
                for (double& v : p) v = rng.uniform(-6.0, 6.0);
            }
        }
        double eps = rng.uniform(0.3, 1.2);
        std::size_t min_pts = 2 + rng.uniform_int(7);  // 2..8

        ClusterResult prod = dbscan(pts, eps, min_pts);
        std::vector<int> ref = oracle::dbscan(pts, eps, min_pts);
        total_points += n;
        if (labelings_equivalent(prod.labels, ref)) {
            ++suites_ok;
        } else if (first_failure.empty()) {
            first_failure = fmt(" first divergence: suite %zu (n=%zu eps=%.3f min_pts=%zu)",
                                suite, n, eps, min_pts);
        }
    }
    Outcome out;
    out.ok = suites_ok == 50;
    out.detail = fmt("%zu/50 suites equivalent, %zu points total%s", suites_ok, total_points,
                     first_failure.c_str());
    return out;
}

// ---------------------------------------------------------------------------
// 5. Homogeneity against hand-computed entropy values
// ---------------------------------------------------------------------------

Outcome check_homogeneity_cases() {
    const double ln2 = std::log(2.0);
    const double ln3 = std::log(3.0);
    const double ln6 = std::log(6.0);

    struct Case {
        std::vector<int> truth, pred;
        double expected;
    };
    // H(C) and H(C|K) evaluated by hand from the entropy definition.
    const double stray = 1.0 - (0.75 * ln3 - 0.5 * ln2) / ln2;
    const double h_c = 0.5 * ln2 + ln3 / 3.0 + ln6 / 6.0;
    std::vector<Case> cases = {
        {{0, 0, 1, 1}, {0, 0, 1, 1}, 1.0},              // perfect
        {{0, 0, 1, 1}, {0, 1, 2, 2}, 1.0},              // split classes stay pure
        {{0, 0, 1, 1}, {0, 0, 0, 0}, 0.0},              // one cluster: h = 0
        {{5, 5, 5}, {0, 1, 2}, 1.0},                    // single-class truth
        {{0, 0, 1, 1}, {0, 1, 1, 1}, stray},            // one stray point
        {{0, 0, 0, 1, 1, 2}, {0, 0, 1, 1, 1, 1}, 1.0 - ln2 / h_c},
        {{0, 0, 1, 1}, {-1, -1, 0, 0}, 1.0},            // noise as its own cluster
    };

    std::size_t ok = 0;
    double worst = 0.0;
    for (const Case& c : cases) {
        double prod = homogeneity(c.truth, c.pred);
        double ref = oracle::homogeneity(c.truth, c.pred);
        double err = std::max(std::abs(prod - c.expected), std::abs(ref - c.expected));
        worst = std::max(worst, err);
        if (err <= 1e-12) ++ok;
    }
    Outcome out;
    out.ok = ok == cases.size();
    out.detail = fmt("%zu/%zu cases within 1e-12 (worst %.2e), production and oracle", ok,
                     cases.size(), worst);
    return out;
}

// ---------------------------------------------------------------------------
// 6. End-to-end synthetic clustering: 8 classes x 250 jobs -> latent DBSCAN
// ---------------------------------------------------------------------------

Outcome check_end_to_end_clustering() {
    auto heavy = std::make_unique<Heavy>();

    SynthConfig scfg;
    scfg.jobs_per_class = 250;
    heavy->ds = generate_dataset(eight_specs(), scfg, 42);
    heavy->raw = extract_feature_matrix(heavy->ds.profiles);
    heavy->scaler = fit_scaler(heavy->raw);
    heavy->standardized = apply_scaler(heavy->scaler, heavy->raw);

    GanConfig gcfg;
    gcfg.epochs = 150;
    gcfg.seed = 7;
    heavy->gan = train_gan(heavy->standardized, gcfg, &heavy->scaler);
    heavy->latents = encode_features(heavy->gan, heavy->standardized);

    for (const std::string& id : heavy->latents.job_ids)
        heavy->truth.push_back(heavy->ds.labels.at(id));
    heavy->points.assign(heavy->latents.rows.begin(), heavy->latents.rows.end());
    heavy->clusters = dbscan(heavy->points, 0.6, 6);

    std::size_t noise = 0;
    int max_label = -1;
    for (int l : heavy->clusters.labels) {
        if (l < 0) ++noise;
        max_label = std::max(max_label, l);
    }
    double noise_frac = static_cast<double>(noise) / heavy->clusters.labels.size();
    double homog = homogeneity(heavy->truth, heavy->clusters.labels);

    Outcome out;
    out.ok = homog >= 0.80 && noise_frac <= 0.20;
    out.detail = fmt("2000 jobs: homogeneity %.3f (>= 0.80), noise %.1f%% (<= 20%%), "
                     "%d clusters",
                     homog, 100.0 * noise_frac, max_label + 1);
    g_heavy = std::move(heavy);  // keep even on failure; 7-10 report their own numbers
    return out;
}

// ---------------------------------------------------------------------------
// 7. Closed-set classifier accuracy on the 8 true classes
// ---------------------------------------------------------------------------

ClassifierConfig acceptance_classifier_config() {
    ClassifierConfig cfg;
    cfg.epochs = 80;
    cfg.seed = 3;
    return cfg;
}

Outcome check_closed_set() {
    if (!g_heavy) return {false, "8-class corpus unavailable (criterion 6 threw)"};
    Heavy& h = *g_heavy;

    LabeledSplit s = partition(h.latents, h.truth, stratified_split(h.truth, 0.2, 11));
    ClassifierModel clf = train_closed(s.train_z, s.train_y, acceptance_classifier_config());
    EvalReport rep =
        evaluate(clf, s.test_z, s.test_y, std::numeric_limits<double>::infinity());

    Outcome out;
    out.ok = rep.closed_acc >= 0.90;
    out.detail = fmt("held-out accuracy %.4f over %zu jobs (>= 0.90)", rep.closed_acc,
                     s.test_y.size());
    return out;
}

// ---------------------------------------------------------------------------
// 8. Open-set threshold sweep: 6 known classes, 2 held out as unknown
// ---------------------------------------------------------------------------

Outcome check_open_set_sweep() {
    if (!g_heavy) return {false, "8-class corpus unavailable (criterion 6 threw)"};
    Heavy& h = *g_heavy;

    const std::set<int> unknown_classes = {0, 3};
    LatentMatrix known, unknown;
    std::vector<int> known_truth;
    for (std::size_t i = 0; i < h.latents.rows.size(); ++i) {
        if (unknown_classes.count(h.truth[i])) {
            unknown.job_ids.push_back(h.latents.job_ids[i]);
            unknown.rows.push_back(h.latents.rows[i]);
        } else {
            known.job_ids.push_back(h.latents.job_ids[i]);
            known.rows.push_back(h.latents.rows[i]);
            known_truth.push_back(h.truth[i]);
        }
    }

    LabeledSplit s = partition(known, known_truth, stratified_split(known_truth, 0.2, 12));
    ClassifierModel clf = train_closed(s.train_z, s.train_y, acceptance_classifier_config());
    SweepResult sweep = sweep_threshold(clf, s.test_z, s.test_y, unknown, 200);

    double front = sweep.curve.front().accuracy;
    double back = sweep.curve.back().accuracy;
    Outcome out;
    out.ok = sweep.best_accuracy >= 0.85 && sweep.best_accuracy > front &&
             sweep.best_accuracy > back;
    out.detail = fmt("balanced accuracy %.4f at tau* %.3f (>= 0.85), curve %.3f -> peak -> "
                     "%.3f rises then falls",
                     sweep.best_accuracy, sweep.tau_star, front, back);
    return out;
}

// ---------------------------------------------------------------------------
// 9. Reconstruction distributions track the real feature distributions
// ---------------------------------------------------------------------------

Outcome check_reconstruction_distributions() {
    if (!g_heavy) return {false, "8-class corpus unavailable (criterion 6 threw)"};
    Heavy& h = *g_heavy;

    Matrix real(h.standardized.rows.size(), kNumFeatures);
    for (std::size_t i = 0; i < h.standardized.rows.size(); ++i)
        for (std::size_t j = 0; j < kNumFeatures; ++j) real.at(i, j) = h.standardized.rows[i][j];
    Matrix recon = reconstruct(h.gan, real);

    std::vector<FeatureDistribution> stats = distribution_check(real, recon);
    std::size_t considered = 0, within = 0;
    for (const FeatureDistribution& st : stats) {
        if (st.std_real <= 0.0) continue;  // degenerate feature (constant across the corpus)
        ++considered;
        if (std::abs(st.mean_recon - st.mean_real) <= 0.15 * st.std_real) ++within;
    }
    double frac = considered ? static_cast<double>(within) / considered : 0.0;
    double initial = h.gan.log.initial_recon_mse;
    double final_mse = h.gan.log.final_recon_mse;

    Outcome out;
    out.ok = frac >= 0.80 && final_mse <= 0.5 * initial;
    out.detail = fmt("%zu/%zu non-degenerate features within 0.15*std (%.0f%%, >= 80%%); "
                     "recon MSE %.3f -> %.3f (ratio %.2f <= 0.5)",
                     within, considered, 100.0 * frac, initial, final_mse,
                     final_mse / initial);
    return out;
}

// ---------------------------------------------------------------------------
// 10. Unknown-injection workflow: 9th pattern -> pool -> proposal -> retrain
// ---------------------------------------------------------------------------

Outcome check_injection_workflow() {
    if (!g_heavy) return {false, "8-class corpus unavailable (criterion 6 threw)"};
    Heavy& h = *g_heavy;

    // Catalog the discovered clusters and train the production classifier on
    // catalog labels with a swept threshold, exactly as the pipeline does.
    ClassCatalog catalog =
        build_catalog(h.clusters, h.raw, h.ds.profiles, &h.points, CatalogParams{});
    if (catalog.classes.empty()) return {false, "catalog came back empty"};

    std::map<std::string, std::size_t> row_of;
    for (std::size_t i = 0; i < h.latents.job_ids.size(); ++i)
        row_of[h.latents.job_ids[i]] = i;

    LatentMatrix cat_z;
    std::vector<int> cat_y;
    for (const CatalogClass& c : catalog.classes) {
        for (const std::string& id : c.member_job_ids) {
            cat_z.job_ids.push_back(id);
            cat_z.rows.push_back(h.latents.rows[row_of.at(id)]);
            cat_y.push_back(c.class_id);
        }
    }
    LabeledSplit s = partition(cat_z, cat_y, stratified_split(cat_y, 0.2, 13));
    ClassifierConfig ccfg = acceptance_classifier_config();
    ClassifierModel clf = train_closed(s.train_z, s.train_y, ccfg);

    LatentMatrix residual;
    for (const std::string& id : catalog.residual) {
        residual.job_ids.push_back(id);
        residual.rows.push_back(h.latents.rows[row_of.at(id)]);
    }
    SweepResult sweep = sweep_threshold(clf, s.test_z, s.test_y, residual, 200);
    clf.tau = sweep.tau_star;

    // Pre-injection recall per class on the holdout, closed set.
    std::vector<Prediction> before_preds =
        predict(clf, s.test_z, std::numeric_limits<double>::infinity());
    std::map<int, std::pair<std::size_t, std::size_t>> before;  // class -> {hits, total}
    for (std::size_t i = 0; i < before_preds.size(); ++i) {
        before[s.test_y[i]].second++;
        if (before_preds[i].outcome == s.test_y[i]) before[s.test_y[i]].first++;
    }

    // Inject a pattern the corpus has never seen. The distinct id prefix
    // matters: pooled ids must not collide with the base corpus.
    PatternSpec ninth;
    ninth.family = PatternFamily::PlateauShift;
    ninth.base_power = 1200;
    ninth.swing_amplitude = 800;
    ninth.period = 8;
    ninth.noise_std = 25;
    SynthConfig icfg;
    icfg.jobs_per_class = 250;
    icfg.prefix = "inj";
    SynthDataset injected = generate_dataset({ninth}, icfg, 43);

    FeatureMatrix inj_raw = extract_feature_matrix(injected.profiles);
    FeatureMatrix inj_std = apply_scaler(h.gan.scaler, inj_raw);
    LatentMatrix inj_z = encode_features(h.gan, inj_std);
    std::vector<Prediction> inj_preds = predict(clf, inj_z, clf.tau);

    ReviewState state;
    std::size_t pooled = pool_add_unknowns(state.pool, inj_preds, inj_z, inj_raw,
                                           injected.submits);
    double pooled_frac = static_cast<double>(pooled) / injected.profiles.size();

    std::vector<std::string> fresh = refresh_proposals(state, 0.6, 6, 50);
    std::size_t proposal_size = state.proposals.empty() ? 0 : state.proposals[0].size;
    double captured =
        pooled ? static_cast<double>(proposal_size) / static_cast<double>(pooled) : 0.0;

    bool shape_ok = pooled_frac >= 0.70 && fresh.size() == 1 && captured >= 0.80;
    if (!shape_ok) {
        return {false, fmt("pooled %.0f%% (>= 70%%), %zu proposals (want 1), capture %.0f%% "
                           "(>= 80%%)",
                           100.0 * pooled_frac, fresh.size(), 100.0 * captured)};
    }

    const ClassProposal& decided = review_proposal(state, catalog, state.proposals[0].proposal_id,
                                                   "approve", "acceptance", 1700000000);
    int new_class = decided.proposed_class_id;

    RetrainResult rt =
        retrain_classifier(clf, catalog, h.latents, state, ccfg, 0.2, 200, false);
    if (!rt.retrained) return {false, "retrain was skipped: " + rt.notice};

    auto new_it = rt.holdout_class_recall.find(new_class);
    double new_recall = new_it == rt.holdout_class_recall.end() ? 0.0 : new_it->second;

    double worst_drop = 0.0;
    int worst_class = -1;
    for (const auto& [cls, stats] : before) {
        double before_recall = static_cast<double>(stats.first) / stats.second;
        auto it = rt.holdout_class_recall.find(cls);
        double after_recall = it == rt.holdout_class_recall.end() ? 0.0 : it->second;
        double drop = before_recall - after_recall;
        if (drop > worst_drop) {
            worst_drop = drop;
            worst_class = cls;
        }
    }

    std::string drop_txt =
        worst_class < 0 ? std::string("no old-class recall drop")
                        : fmt("worst old-class drop %.1f pts on class %d (<= 5)",
                              100.0 * worst_drop, worst_class);
    Outcome out;
    out.ok = new_recall >= 0.80 && worst_drop <= 0.05 + 1e-12;
    out.detail = fmt("pooled %.0f%%, one proposal captured %.0f%%, class %d recall %.3f "
                     "(>= 0.80), %s",
                     100.0 * pooled_frac, 100.0 * captured, new_class, new_recall,
                     drop_txt.c_str());
    return out;
}

// ---------------------------------------------------------------------------
// 11. Determinism: identical reruns, bitwise save/load round trips
// ---------------------------------------------------------------------------

PipelineConfig small_pipeline(const fs::path& profiles, const fs::path& out_dir) {
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

Outcome check_determinism() {
    fs::path dir = fresh_dir("determinism");

    std::vector<PatternSpec> specs(3);
    specs[0] = {PatternFamily::Constant, 2000.0, 0.0, 4, 30.0, "high"};
    specs[1] = {PatternFamily::SquareWave, 600.0, 500.0, 6, 20.0, "high"};
    specs[2] = {PatternFamily::RampUp, 300.0, 900.0, 4, 25.0, "low"};
    SynthConfig scfg;
    scfg.jobs_per_class = 60;
    scfg.min_len = 24;
    scfg.max_len = 48;
    SynthDataset ds = generate_dataset(specs, scfg, 42);
    write_profiles(dir / "profiles_in.jsonl", ds.profiles);

    RunManifest m1 = run_pipeline(small_pipeline(dir / "profiles_in.jsonl", dir / "run1"));
    RunManifest m2 = run_pipeline(small_pipeline(dir / "profiles_in.jsonl", dir / "run2"));

    std::size_t artifacts_equal = 0;
    for (const auto& [name, ref] : m1.artifacts) {
        if (m2.artifacts.count(name) &&
            sha256_file(dir / "run1" / ref.path) ==
                sha256_file(dir / "run2" / m2.artifacts.at(name).path)) {
            ++artifacts_equal;
        }
    }
    bool digests_ok = artifacts_equal == m1.artifacts.size() &&
                      m1.artifacts.size() == m2.artifacts.size() && !m1.artifacts.empty();

    // Save/load round trip: the reloaded classifier must predict bitwise the
    // same as the original on the pipeline's own latents.
    ClassifierModel clf1 =
        classifier_from_payload(load_artifact(dir / "run1" / "classifier.json", "classifier"));
    ClassifierModel clf2 = classifier_from_payload(classifier_to_payload(clf1));
    LatentMatrix latents = read_latents(dir / "run1" / "latents.csv");

    std::vector<Prediction> p1 = predict(clf1, latents, clf1.tau);
    std::vector<Prediction> p2 = predict(clf2, latents, clf2.tau);
    bool preds_ok = p1.size() == p2.size() && !p1.empty();
    for (std::size_t i = 0; preds_ok && i < p1.size(); ++i) {
        preds_ok = p1[i].job_id == p2[i].job_id && p1[i].outcome == p2[i].outcome &&
                   double_bits_equal(p1[i].min_distance, p2[i].min_distance) &&
                   p1[i].distances.size() == p2[i].distances.size();
        for (std::size_t d = 0; preds_ok && d < p1[i].distances.size(); ++d)
            preds_ok = double_bits_equal(p1[i].distances[d], p2[i].distances[d]);
    }
    bool jsonl_ok = predictions_to_jsonl(p1) == predictions_to_jsonl(p2);

    Outcome out;
    out.ok = digests_ok && preds_ok && jsonl_ok;
    out.detail = fmt("%zu/%zu artifact digests identical across reruns; %zu predictions "
                     "bitwise-stable through save/load: %s",
                     artifacts_equal, m1.artifacts.size(), p1.size(),
                     preds_ok && jsonl_ok ? "yes" : "NO");
    return out;
}

// ---------------------------------------------------------------------------
// 12. Temporal harness: constructed calendar, exact known-class audit
// ---------------------------------------------------------------------------

Outcome check_temporal_audit() {
    // Classes 0 and 1 submit jobs all year at separated latent sites; class 2
    // first appears in month 7. Six jobs per class per active month.
    LatentMatrix latents;
    std::vector<int> labels;
    std::vector<std::int64_t> submits;
    const std::int64_t base = 1700000000;
    Rng rng = Rng::for_stage(11, "acceptance.temporal");
    auto add = [&](int cls, double cx, double cy, int month, int j) {
        char id[48];
        std::snprintf(id, sizeof(id), "m%02dc%d-%02d", month, cls, j);
        latents.job_ids.push_back(id);
        latents.rows.push_back({cx + rng.normal(0.0, 0.3), cy + rng.normal(0.0, 0.3)});
        labels.push_back(cls);
        submits.push_back(base + month * kSecondsPerMonth + j * 3600);
    };
    for (int month = 0; month < 12; ++month) {
        for (int j = 0; j < 6; ++j) {
            add(0, 0.0, 0.0, month, j);
            add(1, 10.0, 0.0, month, j);
            if (month >= 7) add(2, 0.0, 10.0, month, j);
        }
    }

    TemporalOptions opt;
    opt.train_months = {1, 9};
    opt.horizon_days = {7, 30};
    opt.classifier.input_dim = 2;
    opt.classifier.hidden = {16};
    opt.classifier.epochs = 30;
    opt.classifier.batch = 12;
    opt.classifier.seed = 3;
    opt.epoch_base = base;

    TemporalResult result = temporal_eval(latents, labels, submits, opt);

    std::size_t windows_ok = 0;
    std::string first_bad;
    for (const TemporalWindow& w : result.windows) {
        // the calendar fixes exactly which classes any training span can see
        std::size_t last_train_month = w.anchor + w.train_months - 1;
        std::size_t expect_known = last_train_month >= 7 ? 3 : 2;
        bool no_overlap = w.test_begin >= w.train_end && w.test_end > w.test_begin &&
                          w.train_end == w.train_begin + static_cast<std::int64_t>(
                                                              w.train_months) *
                                                              kSecondsPerMonth;
        if (no_overlap && w.known_classes == expect_known) {
            ++windows_ok;
        } else if (first_bad.empty()) {
            first_bad = fmt(" first bad window: anchor %zu m%zu h%zu known %zu (want %zu)",
                            w.anchor, w.train_months, w.horizon_days, w.known_classes,
                            expect_known);
        }
    }

    Outcome out;
    out.ok = result.cells.size() == 4 && !result.windows.empty() &&
             windows_ok == result.windows.size();
    out.detail = fmt("%zu/%zu windows: disjoint train/test spans and exact known-class "
                     "counts%s",
                     windows_ok, result.windows.size(), first_bad.c_str());
    return out;
}

}  // namespace

int main() {
    std::printf("powerprof acceptance gates\n");
    std::printf("--------------------------\n");

    criterion(1, "feature extractor vs oracle", 10, check_feature_oracle);
    criterion(2, "feature layout identity", 0, check_feature_layout);
    criterion(3, "gradient checks", 30, check_gradients);
    criterion(4, "dbscan vs brute-force oracle", 20, check_dbscan_oracle);
    criterion(5, "homogeneity hand cases", 0, check_homogeneity_cases);
    criterion(6, "end-to-end synthetic clustering", 600, check_end_to_end_clustering);
    criterion(7, "closed-set accuracy", 0, check_closed_set);
    criterion(8, "open-set threshold sweep", 0, check_open_set_sweep);
    criterion(9, "reconstruction distributions", 0, check_reconstruction_distributions);
    criterion(10, "unknown-injection workflow", 0, check_injection_workflow);
    criterion(11, "pipeline determinism", 0, check_determinism);
    criterion(12, "temporal window audit", 0, check_temporal_audit);

    std::printf("--------------------------\n");
    if (g_failures == 0) {
        std::printf("all 12 criteria passed\n");
        return 0;
    }
    std::printf("%d criteria FAILED\n", g_failures);
    return 1;
}
