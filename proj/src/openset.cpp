#include "powerprof/openset.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <sstream>

namespace powerprof {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

void validate_classifier_config(const ClassifierConfig& cfg) {
    if (cfg.input_dim == 0) throw ConfigError("classifier config: input_dim must be > 0");
    for (std::size_t h : cfg.hidden) {
        if (h == 0) throw ConfigError("classifier config: hidden widths must be > 0");
    }
    if (cfg.num_classes == 1) {
        throw ConfigError("classifier config: num_classes must be 0 (infer) or >= 2");
    }
    if (cfg.anchor_magnitude <= 0.0) {
        throw ConfigError("classifier config: anchor_magnitude must be > 0");
    }
    if (cfg.lambda < 0.0) throw ConfigError("classifier config: lambda must be >= 0");
    if (cfg.lr <= 0.0) throw ConfigError("classifier config: lr must be > 0");
    if (cfg.epochs < 1) throw ConfigError("classifier config: epochs must be >= 1");
    if (cfg.batch < 1) throw ConfigError("classifier config: batch must be >= 1");
}

json classifier_config_to_json(const ClassifierConfig& cfg) {
    return json{{"input_dim", cfg.input_dim},
                {"hidden", cfg.hidden},
                {"num_classes", cfg.num_classes},
                {"anchor_magnitude", cfg.anchor_magnitude},
                {"lambda", cfg.lambda},
                {"lr", cfg.lr},
                {"epochs", cfg.epochs},
                {"batch", cfg.batch},
                {"seed", cfg.seed}};
}

ClassifierConfig classifier_config_from_json(const json& j, const std::string& origin) {
    if (!j.is_object()) throw ConfigError(origin + ": classifier config must be a json object");
    ClassifierConfig cfg;
    try {
        for (auto it = j.begin(); it != j.end(); ++it) {
            const std::string& key = it.key();
            if (key == "input_dim") cfg.input_dim = it->get<std::size_t>();
            else if (key == "hidden") cfg.hidden = it->get<std::vector<std::size_t>>();
            else if (key == "num_classes") cfg.num_classes = it->get<std::size_t>();
            else if (key == "anchor_magnitude") cfg.anchor_magnitude = it->get<double>();
            else if (key == "lambda") cfg.lambda = it->get<double>();
            else if (key == "lr") cfg.lr = it->get<double>();
            else if (key == "epochs") cfg.epochs = it->get<std::size_t>();
            else if (key == "batch") cfg.batch = it->get<std::size_t>();
            else if (key == "seed") cfg.seed = it->get<std::uint64_t>();
            else throw ConfigError(origin + ": unknown classifier config key \"" + key + "\"");
        }
    } catch (const json::exception& e) {
        throw ConfigError(origin + ": bad classifier config: " + e.what());
    }
    validate_classifier_config(cfg);
    return cfg;
}

// ---------------------------------------------------------------------------
// CAC loss
// ---------------------------------------------------------------------------

namespace {

// distances from one logit row to every anchor/center row
std::vector<double> row_distances(const double* v, const Matrix& rows) {
    std::vector<double> d(rows.rows);
    for (std::size_t j = 0; j < rows.rows; ++j) {
        d[j] = std::sqrt(squared_l2(v, rows.row(j), rows.cols));
    }
    return d;
}

}  // namespace

double cac_loss(const std::vector<double>& logits, std::size_t y, const Matrix& anchors,
                double lambda) {
    Matrix batch = Matrix::from_row(logits);
    return cac_loss_batch(batch, {y}, anchors, lambda).loss;
}

CacEval cac_loss_batch(const Matrix& logits, const std::vector<std::size_t>& y,
                       const Matrix& anchors, double lambda) {
    const std::size_t n_classes = anchors.rows;
    if (logits.cols != anchors.cols) {
        throw ConfigError("cac loss: logit dim " + std::to_string(logits.cols) +
                          " does not match anchor dim " + std::to_string(anchors.cols));
    }
    if (y.size() != logits.rows) throw ConfigError("cac loss: label count mismatch");

    CacEval ev;
    ev.dlogits = Matrix(logits.rows, logits.cols);
    const double inv_b = 1.0 / static_cast<double>(logits.rows);

    for (std::size_t i = 0; i < logits.rows; ++i) {
        if (y[i] >= n_classes) throw ConfigError("cac loss: label out of range");
        const double* v = logits.row(i);
        std::vector<double> d = row_distances(v, anchors);
        const double dy = d[y[i]];

        // log(1 + sum_{j!=y} exp(dy - d_j)) via a shifted log-sum-exp where
        // the implicit 1 is exp(0)
        double shift = 0.0;
        for (std::size_t j = 0; j < n_classes; ++j) {
            if (j != y[i]) shift = std::max(shift, dy - d[j]);
        }
        double denom = std::exp(-shift);  // the "1" term
        std::vector<double> num(n_classes, 0.0);
        for (std::size_t j = 0; j < n_classes; ++j) {
            if (j == y[i]) continue;
            num[j] = std::exp(dy - d[j] - shift);
            denom += num[j];
        }
        double tuplet = shift + std::log(denom);
        ev.loss += (tuplet + lambda * dy) * inv_b;

        // dL/dd_j = -p_j for j != y; dL/dd_y = sum p_j + lambda
        double g_y = lambda;
        std::vector<double> g(n_classes, 0.0);
        for (std::size_t j = 0; j < n_classes; ++j) {
            if (j == y[i]) continue;
            double p = num[j] / denom;
            g[j] = -p;
            g_y += p;
        }
        g[y[i]] = g_y;

        // chain through d_j = ||v - c_j||; zero distance => zero subgradient
        double* dv = ev.dlogits.row(i);
        for (std::size_t j = 0; j < n_classes; ++j) {
            if (d[j] == 0.0 || g[j] == 0.0) continue;
            double scale = g[j] / d[j] * inv_b;
            for (std::size_t k = 0; k < logits.cols; ++k) {
                dv[k] += scale * (v[k] - anchors.at(j, k));
            }
        }
    }
    return ev;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

namespace {

Matrix latents_to_matrix(const LatentMatrix& latents, std::size_t expect_dim,
                         const char* caller) {
    if (latents.rows.empty()) throw DataError(std::string(caller) + ": no latent rows");
    Matrix x(latents.rows.size(), expect_dim);
    for (std::size_t i = 0; i < latents.rows.size(); ++i) {
        if (latents.rows[i].size() != expect_dim) {
            throw DataError(std::string(caller) + ": latent dim " +
                            std::to_string(latents.rows[i].size()) + " does not match " +
                            std::to_string(expect_dim));
        }
        std::copy(latents.rows[i].begin(), latents.rows[i].end(), x.row(i));
    }
    return x;
}

double percentile_95(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    std::size_t rank = static_cast<std::size_t>(
        std::ceil(0.95 * static_cast<double>(v.size())));
    if (rank == 0) rank = 1;
    return v[std::min(rank - 1, v.size() - 1)];
}

}  // namespace

ClassifierModel train_closed(const LatentMatrix& latents, const std::vector<int>& labels,
                             const ClassifierConfig& cfg) {
    validate_classifier_config(cfg);
    if (latents.rows.size() != labels.size()) {
        throw DataError("train_closed: latent rows and labels differ in count");
    }
    Matrix x_all = latents_to_matrix(latents, cfg.input_dim, "train_closed");
    const std::size_t n = x_all.rows;

    // dense class indexing over the external ids
    std::map<int, std::size_t> counts;
    for (int label : labels) {
        if (label < 0) throw DataError("train_closed: negative class id in labels");
        counts[label]++;
    }
    if (counts.size() < 2) throw DataError("train_closed: need at least 2 classes");
    for (const auto& [id, cnt] : counts) {
        if (cnt < 2) {
            throw DataError("train_closed: class " + std::to_string(id) +
                            " has fewer than 2 samples");
        }
    }
    if (cfg.num_classes != 0 && cfg.num_classes != counts.size()) {
        throw ConfigError("train_closed: config says " + std::to_string(cfg.num_classes) +
                          " classes, labels have " + std::to_string(counts.size()));
    }

    ClassifierModel model;
    model.config = cfg;
    for (const auto& [id, cnt] : counts) model.class_ids.push_back(id);
    const std::size_t n_classes = model.class_ids.size();
    std::map<int, std::size_t> dense;
    for (std::size_t k = 0; k < n_classes; ++k) dense[model.class_ids[k]] = k;
    std::vector<std::size_t> y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = dense[labels[i]];

    model.anchors = Matrix(n_classes, n_classes);
    for (std::size_t j = 0; j < n_classes; ++j) model.anchors.at(j, j) = cfg.anchor_magnitude;

    Rng rng = Rng::for_stage(cfg.seed, "classifier.train");
    std::vector<std::size_t> dims;
    dims.push_back(cfg.input_dim);
    dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
    dims.push_back(n_classes);
    model.net = make_mlp(dims, rng);

    RmsProp opt(cfg.lr);
    const std::size_t batch = std::min(cfg.batch, n);
    const std::size_t batches_per_epoch = n / batch;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<std::size_t> perm = rng.permutation(n);
        for (std::size_t bi = 0; bi < batches_per_epoch; ++bi) {
            Matrix x(batch, cfg.input_dim);
            std::vector<std::size_t> yb(batch);
            for (std::size_t i = 0; i < batch; ++i) {
                std::size_t src = perm[bi * batch + i];
                std::copy(x_all.row(src), x_all.row(src) + cfg.input_dim, x.row(i));
                yb[i] = y[src];
            }
            Matrix logits = model.net.forward(x, true);
            CacEval ev = cac_loss_batch(logits, yb, model.anchors, cfg.lambda);
            if (!std::isfinite(ev.loss)) {
                std::ostringstream msg;
                msg << "train_closed: non-finite loss (" << ev.loss << ") at epoch " << epoch
                    << ", batch " << bi;
                throw NumericError(msg.str());
            }
            model.net.backward(ev.dlogits);
            opt.step(model.net.params());
            model.net.zero_grads();
        }
    }

    // empirical centers: per-class mean of the final logits
    Matrix logits = model.net.forward(x_all, false);
    model.centers = Matrix(n_classes, n_classes);
    std::vector<double> class_n(n_classes, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        class_n[y[i]] += 1.0;
        for (std::size_t k = 0; k < n_classes; ++k) {
            model.centers.at(y[i], k) += logits.at(i, k);
        }
    }
    for (std::size_t j = 0; j < n_classes; ++j) {
        for (std::size_t k = 0; k < n_classes; ++k) model.centers.at(j, k) /= class_n[j];
    }

    std::vector<double> min_dists(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> d = row_distances(logits.row(i), model.centers);
        min_dists[i] = *std::min_element(d.begin(), d.end());
    }
    model.train_min_dist_p95 = percentile_95(std::move(min_dists));
    model.tau = std::numeric_limits<double>::infinity();

    {
        std::string blob = classifier_config_to_json(cfg).dump();
        blob += latents_to_csv(latents);
        for (int label : labels) {
            blob += ',';
            blob += std::to_string(label);
        }
        model.fingerprint = sha256_hex(blob);
    }
    return model;
}

// ---------------------------------------------------------------------------
// Prediction
// ---------------------------------------------------------------------------

Prediction predict_one(ClassifierModel& model, const std::vector<double>& latent,
                       const std::string& job_id, double tau) {
    if (model.centers.rows == 0) throw DataError("predict: model has no centers");
    Matrix x = Matrix::from_row(latent);
    if (x.cols != model.config.input_dim) {
        throw DataError("predict: latent dim " + std::to_string(x.cols) + " does not match " +
                        std::to_string(model.config.input_dim));
    }
    Matrix logits = model.net.forward(x, false);

    Prediction p;
    p.job_id = job_id;
    p.distances = row_distances(logits.row(0), model.centers);
    std::size_t best = 0;
    for (std::size_t j = 1; j < p.distances.size(); ++j) {
        if (p.distances[j] < p.distances[best]) best = j;  // tie keeps the lowest id
    }
    p.min_distance = p.distances[best];
    p.outcome = p.min_distance <= tau ? model.class_ids[best] : -1;
    return p;
}

std::vector<Prediction> predict(ClassifierModel& model, const LatentMatrix& latents, double tau) {
    if (latents.job_ids.size() != latents.rows.size()) {
        throw DataError("predict: job id count does not match latent rows");
    }
    std::vector<Prediction> out;
    out.reserve(latents.rows.size());
    for (std::size_t i = 0; i < latents.rows.size(); ++i) {
        out.push_back(predict_one(model, latents.rows[i], latents.job_ids[i], tau));
    }
    return out;
}

SplitIndices stratified_split(const std::vector<int>& labels, double test_frac,
                              std::uint64_t seed) {
    if (test_frac < 0.0 || test_frac >= 1.0) {
        throw ConfigError("stratified_split: test_frac must be in [0, 1)");
    }
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);

    Rng rng = Rng::for_stage(seed, "stratified.split");
    SplitIndices split;
    for (auto& [label, members] : by_class) {
        if (members.size() < 2 || test_frac == 0.0) {
            split.train.insert(split.train.end(), members.begin(), members.end());
            continue;
        }
        std::vector<std::size_t> order = rng.permutation(members.size());
        std::size_t n_test = static_cast<std::size_t>(
            std::floor(test_frac * static_cast<double>(members.size()) + 0.5));
        n_test = std::max<std::size_t>(1, std::min(n_test, members.size() - 1));
        for (std::size_t i = 0; i < members.size(); ++i) {
            if (i < n_test) split.test.push_back(members[order[i]]);
            else split.train.push_back(members[order[i]]);
        }
    }
    std::sort(split.train.begin(), split.train.end());
    std::sort(split.test.begin(), split.test.end());
    return split;
}

// ---------------------------------------------------------------------------
// Sweep and evaluation
// ---------------------------------------------------------------------------

SweepResult sweep_threshold(ClassifierModel& model, const LatentMatrix& known,
                            const std::vector<int>& known_labels, const LatentMatrix& unknown,
                            std::size_t grid) {
    if (known.rows.empty()) throw DataError("sweep_threshold: empty known set");
    if (unknown.rows.empty()) throw DataError("sweep_threshold: empty unknown set");
    if (known.rows.size() != known_labels.size()) {
        throw DataError("sweep_threshold: known labels do not match rows");
    }
    if (grid < 2) throw ConfigError("sweep_threshold: grid must be >= 2");

    // distances do not depend on tau: precompute once at tau = +inf
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<Prediction> known_preds = predict(model, known, inf);
    std::vector<Prediction> unknown_preds = predict(model, unknown, inf);

    const double tau_max = 3.0 * model.train_min_dist_p95;
    SweepResult result;
    result.best_accuracy = -1.0;
    for (std::size_t g = 0; g < grid; ++g) {
        double tau = tau_max * static_cast<double>(g) / static_cast<double>(grid - 1);
        SweepPoint point;
        point.tau = tau;
        point.tau_normalized = tau_max > 0.0 ? tau / tau_max : 0.0;

        std::size_t correct = 0;
        for (std::size_t i = 0; i < known_preds.size(); ++i) {
            const Prediction& p = known_preds[i];
            if (p.min_distance <= tau && p.outcome == known_labels[i]) ++correct;
        }
        std::size_t rejected = 0;
        for (const Prediction& p : unknown_preds) {
            if (p.min_distance > tau) ++rejected;
        }
        point.known_acc = static_cast<double>(correct) / static_cast<double>(known_preds.size());
        point.unknown_reject =
            static_cast<double>(rejected) / static_cast<double>(unknown_preds.size());
        point.accuracy = 0.5 * point.known_acc + 0.5 * point.unknown_reject;
        if (point.accuracy > result.best_accuracy) {
            result.best_accuracy = point.accuracy;
            result.tau_star = tau;
        }
        result.curve.push_back(point);
    }
    return result;
}

EvalReport evaluate(ClassifierModel& model, const LatentMatrix& latents,
                    const std::vector<int>& labels, double tau) {
    if (latents.rows.empty()) throw DataError("evaluate: empty test set");
    if (latents.rows.size() != labels.size()) {
        throw DataError("evaluate: labels do not match rows");
    }
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<Prediction> preds = predict(model, latents, inf);

    const std::size_t n_classes = model.class_ids.size();
    std::map<int, std::size_t> dense;
    for (std::size_t k = 0; k < n_classes; ++k) dense[model.class_ids[k]] = k;

    std::size_t known_total = 0, known_closed_correct = 0, known_open_correct = 0;
    std::size_t unknown_total = 0, unknown_rejected = 0;
    Matrix counts(n_classes + 1, n_classes + 1);

    for (std::size_t i = 0; i < preds.size(); ++i) {
        const Prediction& p = preds[i];
        const bool rejected = p.min_distance > tau;
        // row/column: dense class index, last slot = unknown
        std::size_t col = rejected ? n_classes : dense.at(p.outcome);
        if (labels[i] >= 0) {
            auto it = dense.find(labels[i]);
            if (it == dense.end()) {
                throw DataError("evaluate: label " + std::to_string(labels[i]) +
                                " is not a model class");
            }
            ++known_total;
            if (p.outcome == labels[i]) {
                ++known_closed_correct;
                if (!rejected) ++known_open_correct;
            }
            counts.at(it->second, col) += 1.0;
        } else {
            ++unknown_total;
            if (rejected) ++unknown_rejected;
            counts.at(n_classes, col) += 1.0;
        }
    }

    EvalReport report;
    report.confusion_class_ids = model.class_ids;
    if (known_total > 0) {
        report.closed_acc =
            static_cast<double>(known_closed_correct) / static_cast<double>(known_total);
    }
    report.has_unknown = unknown_total > 0;
    double known_term = known_total > 0 ? static_cast<double>(known_open_correct) /
                                              static_cast<double>(known_total)
                                        : 0.0;
    if (report.has_unknown) {
        double reject_term =
            static_cast<double>(unknown_rejected) / static_cast<double>(unknown_total);
        report.open_acc = 0.5 * known_term + 0.5 * reject_term;
    } else {
        report.open_acc = known_term;
    }

    report.confusion = Matrix(n_classes + 1, n_classes + 1);
    for (std::size_t r = 0; r <= n_classes; ++r) {
        double row_sum = 0.0;
        for (std::size_t c = 0; c <= n_classes; ++c) row_sum += counts.at(r, c);
        if (row_sum == 0.0) continue;
        for (std::size_t c = 0; c <= n_classes; ++c) {
            report.confusion.at(r, c) = counts.at(r, c) / row_sum;
        }
    }
    return report;
}

// ---------------------------------------------------------------------------
// IO
// ---------------------------------------------------------------------------

namespace {

json matrix_to_json(const Matrix& m) {
    json rows = json::array();
    for (std::size_t r = 0; r < m.rows; ++r) {
        rows.push_back(std::vector<double>(m.row(r), m.row(r) + m.cols));
    }
    return rows;
}

Matrix matrix_from_json(const json& j) {
    Matrix m;
    m.rows = j.size();
    for (const json& row : j) {
        std::vector<double> vals = row.get<std::vector<double>>();
        if (m.cols == 0) m.cols = vals.size();
        if (vals.size() != m.cols) throw DataError("matrix payload: ragged rows");
        m.data.insert(m.data.end(), vals.begin(), vals.end());
    }
    return m;
}

}  // namespace

json classifier_to_payload(const ClassifierModel& model) {
    json tau;
    if (std::isinf(model.tau)) tau = nullptr;
    else tau = model.tau;
    return json{{"config", classifier_config_to_json(model.config)},
                {"network", model.net.to_json()},
                {"class_ids", model.class_ids},
                {"anchors", matrix_to_json(model.anchors)},
                {"centers", matrix_to_json(model.centers)},
                {"tau", tau},
                {"train_min_dist_p95", model.train_min_dist_p95},
                {"catalog_ref", model.catalog_ref},
                {"previous", model.previous},
                {"fingerprint", model.fingerprint}};
}

ClassifierModel classifier_from_payload(const json& payload) {
    ClassifierModel model;
    try {
        model.config = classifier_config_from_json(payload.at("config"), "classifier payload");
        model.net = Network::from_json(payload.at("network"));
        model.class_ids = payload.at("class_ids").get<std::vector<int>>();
        model.anchors = matrix_from_json(payload.at("anchors"));
        model.centers = matrix_from_json(payload.at("centers"));
        const json& tau = payload.at("tau");
        model.tau = tau.is_null() ? std::numeric_limits<double>::infinity() : tau.get<double>();
        model.train_min_dist_p95 = payload.at("train_min_dist_p95").get<double>();
        model.catalog_ref = payload.at("catalog_ref").get<std::string>();
        model.previous = payload.at("previous").get<std::string>();
        model.fingerprint = payload.at("fingerprint").get<std::string>();
    } catch (const json::exception& e) {
        throw DataError(std::string("bad classifier payload: ") + e.what());
    }
    return model;
}

std::string predictions_to_jsonl(const std::vector<Prediction>& preds) {
    std::string out;
    for (const Prediction& p : preds) {
        json outcome;
        if (p.outcome < 0) outcome = "UNKNOWN";
        else outcome = p.outcome;
        json line{{"job_id", p.job_id},
                  {"outcome", outcome},
                  {"min_distance", p.min_distance},
                  {"distances", p.distances}};
        out += line.dump();
        out += '\n';
    }
    return out;
}

std::vector<Prediction> predictions_from_jsonl(std::string_view text, const std::string& origin) {
    std::vector<Prediction> out;
    std::size_t pos = 0, line_no = 0;
    while (pos < text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
            Prediction p;
            p.job_id = j.at("job_id").get<std::string>();
            const json& outcome = j.at("outcome");
            if (outcome.is_string()) {
                if (outcome.get<std::string>() != "UNKNOWN") {
                    throw DataError(origin + ": bad outcome, line " + std::to_string(line_no));
                }
                p.outcome = -1;
            } else {
                p.outcome = outcome.get<int>();
            }
            p.min_distance = j.at("min_distance").get<double>();
            p.distances = j.at("distances").get<std::vector<double>>();
            out.push_back(std::move(p));
        } catch (const json::exception& e) {
            throw DataError(origin + ": bad prediction json, line " + std::to_string(line_no) +
                            ": " + e.what());
        }
    }
    return out;
}

}  // namespace powerprof
