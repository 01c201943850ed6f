#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "powerprof/common.hpp"
#include "powerprof/gan.hpp"
#include "powerprof/matrix.hpp"
#include "powerprof/neural.hpp"

namespace powerprof {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct ClassifierConfig {
    std::size_t input_dim = 10;
    std::vector<std::size_t> hidden = {64, 64};
    std::size_t num_classes = 0;    // 0 = infer from the training labels
    double anchor_magnitude = 10.0; // scale of the one-hot class anchors
    double lambda = 0.1;            // weight of the anchor (pull-in) term
    double lr = 1e-3;
    std::size_t epochs = 150;
    std::size_t batch = 32;
    std::uint64_t seed = 0;
};

void validate_classifier_config(const ClassifierConfig& cfg);
nlohmann::json classifier_config_to_json(const ClassifierConfig& cfg);
// Missing keys keep their defaults; unknown keys are rejected.
ClassifierConfig classifier_config_from_json(const nlohmann::json& j, const std::string& origin);

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

struct ClassifierModel {
    ClassifierConfig config;
    Network net;                  // input_dim -> N logits
    std::vector<int> class_ids;   // external class ids, ascending
    Matrix anchors;               // N x N, fixed scaled one-hot rows
    Matrix centers;               // N x N, empirical per-class logit means
    double tau = 0.0;             // rejection threshold; +inf = closed set
    double train_min_dist_p95 = 0.0;  // p95 of training min-center distances
    std::string catalog_ref;      // digest of the catalog the labels came from
    std::string previous;         // digest of the archived predecessor model
    std::string fingerprint;      // digest of config + training data
};

// ---------------------------------------------------------------------------
// CAC loss
//
// d_j = ||logits - c_j||; per sample
//   L = log(1 + sum_{j != y} exp(d_y - d_j)) + lambda * d_y
// computed with a log-sum-exp shift. Gradients flow through every d_j; a
// zero distance contributes a zero subgradient.
// ---------------------------------------------------------------------------

double cac_loss(const std::vector<double>& logits, std::size_t y, const Matrix& anchors,
                double lambda);

struct CacEval {
    double loss = 0.0;  // batch mean
    Matrix dlogits;     // dLoss/dlogits, same shape as the logits batch
};

CacEval cac_loss_batch(const Matrix& logits, const std::vector<std::size_t>& y,
                       const Matrix& anchors, double lambda);

// ---------------------------------------------------------------------------
// Training and prediction
// ---------------------------------------------------------------------------

// Labels are external class ids aligned with latents rows; they need not be
// dense. Anchors are fixed at anchor_magnitude * e_j during training; after
// the last epoch the centers are recomputed as per-class logit means, and
// train_min_dist_p95 is measured on the training rows. Deterministic for a
// fixed config.
ClassifierModel train_closed(const LatentMatrix& latents, const std::vector<int>& labels,
                             const ClassifierConfig& cfg);

// -1 in `outcome` means UNKNOWN (min center distance above tau).
struct Prediction {
    std::string job_id;
    int outcome = -1;
    double min_distance = 0.0;
    std::vector<double> distances;  // ordered by ascending class id
};

Prediction predict_one(ClassifierModel& model, const std::vector<double>& latent,
                       const std::string& job_id, double tau);
std::vector<Prediction> predict(ClassifierModel& model, const LatentMatrix& latents, double tau);

// Per-class stratified holdout. Classes with a single sample stay in train.
struct SplitIndices {
    std::vector<std::size_t> train, test;
};
SplitIndices stratified_split(const std::vector<int>& labels, double test_frac,
                              std::uint64_t seed);

// ---------------------------------------------------------------------------
// Threshold sweep and evaluation
// ---------------------------------------------------------------------------

struct SweepPoint {
    double tau = 0.0;
    double tau_normalized = 0.0;  // tau / sweep max
    double accuracy = 0.0;        // balanced open-set accuracy
    double known_acc = 0.0;
    double unknown_reject = 0.0;
};

struct SweepResult {
    std::vector<SweepPoint> curve;
    double tau_star = 0.0;
    double best_accuracy = 0.0;
};

// Sweeps tau over [0, 3 * train_min_dist_p95] on a uniform grid.
// accuracy(tau) = 0.5 * P(known assigned true class) + 0.5 * P(unknown rejected);
// tau* is the argmax, ties to the smallest tau.
SweepResult sweep_threshold(ClassifierModel& model, const LatentMatrix& known,
                            const std::vector<int>& known_labels, const LatentMatrix& unknown,
                            std::size_t grid = 200);

struct EvalReport {
    double closed_acc = 0.0;  // over known-labeled samples at tau = +inf
    double open_acc = 0.0;    // balanced accuracy at the given tau
    bool has_unknown = false;
    // (N+1) x (N+1) row-normalized counts: rows = true classes then UNKNOWN,
    // columns = predicted classes then UNKNOWN; all-zero rows stay zero
    Matrix confusion;
    std::vector<int> confusion_class_ids;
};

// labels: external class ids, -1 for samples that are truly unknown.
EvalReport evaluate(ClassifierModel& model, const LatentMatrix& latents,
                    const std::vector<int>& labels, double tau);

// ---------------------------------------------------------------------------
// IO
// ---------------------------------------------------------------------------

// Payload round trip preserves predictions bitwise. tau = +inf is stored as
// json null.
nlohmann::json classifier_to_payload(const ClassifierModel& model);
ClassifierModel classifier_from_payload(const nlohmann::json& payload);

// One json object per line: {"job_id", "outcome" (id or "UNKNOWN"),
// "min_distance", "distances"}.
std::string predictions_to_jsonl(const std::vector<Prediction>& preds);
std::vector<Prediction> predictions_from_jsonl(std::string_view text, const std::string& origin);

}  // namespace powerprof
