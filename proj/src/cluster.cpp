#include "powerprof/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <unordered_map>

#include "powerprof/matrix.hpp"

namespace powerprof {

using nlohmann::json;

namespace {

double dist2(const Point& a, const Point& b) {
    double acc = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        double d = a[k] - b[k];
        acc += d * d;
    }
    return acc;
}

void check_points(const std::vector<Point>& points) {
    if (points.empty()) throw DataError("clustering: no points");
    for (const Point& p : points) {
        if (p.size() != points[0].size()) {
            throw DataError("clustering: inconsistent point dimensionality");
        }
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// DBSCAN
// ---------------------------------------------------------------------------

ClusterResult dbscan(const std::vector<Point>& points, double eps, std::size_t min_pts) {
    if (eps <= 0.0) throw ConfigError("dbscan: eps must be > 0");
    if (min_pts == 0) throw ConfigError("dbscan: min_pts must be > 0");
    check_points(points);

    const std::size_t n = points.size();
    const double eps2 = eps * eps;

    std::vector<std::vector<std::size_t>> neighbors(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (dist2(points[i], points[j]) <= eps2) neighbors[i].push_back(j);
        }
    }
    std::vector<bool> core(n);
    for (std::size_t i = 0; i < n; ++i) core[i] = neighbors[i].size() >= min_pts;

    std::vector<int> labels(n, -1);
    int next_label = 0;

    // clusters = connected components of core points; BFS in input order so
    // labels are dense in first-core-appearance order
    for (std::size_t i = 0; i < n; ++i) {
        if (!core[i] || labels[i] != -1) continue;
        int cluster = next_label++;
        std::deque<std::size_t> queue;
        labels[i] = cluster;
        queue.push_back(i);
        while (!queue.empty()) {
            std::size_t cur = queue.front();
            queue.pop_front();
            for (std::size_t nb : neighbors[cur]) {
                if (core[nb] && labels[nb] == -1) {
                    labels[nb] = cluster;
                    queue.push_back(nb);
                }
            }
        }
    }

    // border points: claimed by the first core (in input order) that reaches them
    for (std::size_t i = 0; i < n; ++i) {
        if (!core[i]) continue;
        for (std::size_t nb : neighbors[i]) {
            if (!core[nb] && labels[nb] == -1) labels[nb] = labels[i];
        }
    }

    ClusterResult result;
    result.algorithm = "dbscan";
    result.params = {{"eps", eps}, {"min_pts", static_cast<double>(min_pts)}};
    result.labels = std::move(labels);
    return result;
}

// ---------------------------------------------------------------------------
// k-means
// ---------------------------------------------------------------------------

ClusterResult kmeans(const std::vector<Point>& points, std::size_t k, std::uint64_t seed,
                     std::size_t max_iter, double tol) {
    check_points(points);
    if (k == 0 || k > points.size()) {
        throw ConfigError("kmeans: k must be in [1, n_points]");
    }
    const std::size_t n = points.size();
    const std::size_t dim = points[0].size();
    Rng rng = Rng::for_stage(seed, "kmeans");

    // k-means++ seeding
    std::vector<Point> centroids;
    centroids.reserve(k);
    centroids.push_back(points[rng.uniform_int(n)]);
    std::vector<double> d2(n);
    while (centroids.size() < k) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (const Point& c : centroids) best = std::min(best, dist2(points[i], c));
            d2[i] = best;
            total += best;
        }
        std::size_t pick;
        if (total > 0.0) {
            double target = rng.uniform() * total;
            double acc = 0.0;
            pick = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                acc += d2[i];
                if (acc >= target) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = rng.uniform_int(n);  // all points coincide with a centroid
        }
        centroids.push_back(points[pick]);
    }

    std::vector<int> assign(n, 0);
    for (std::size_t iter = 0; iter < max_iter; ++iter) {
        // assignment, ties to the lowest centroid index
        for (std::size_t i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            int best_c = 0;
            for (std::size_t c = 0; c < k; ++c) {
                double d = dist2(points[i], centroids[c]);
                if (d < best) {
                    best = d;
                    best_c = static_cast<int>(c);
                }
            }
            assign[i] = best_c;
        }

        // update
        std::vector<Point> next(k, Point(dim, 0.0));
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            counts[assign[i]]++;
            for (std::size_t t = 0; t < dim; ++t) next[assign[i]][t] += points[i][t];
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] > 0) {
                for (std::size_t t = 0; t < dim; ++t) {
                    next[c][t] /= static_cast<double>(counts[c]);
                }
            } else {
                // re-seed an empty cluster at the point farthest from its centroid
                double worst = -1.0;
                std::size_t worst_i = 0;
                for (std::size_t i = 0; i < n; ++i) {
                    double d = dist2(points[i], centroids[assign[i]]);
                    if (d > worst) {
                        worst = d;
                        worst_i = i;
                    }
                }
                next[c] = points[worst_i];
            }
        }

        double max_shift = 0.0;
        for (std::size_t c = 0; c < k; ++c) {
            max_shift = std::max(max_shift, std::sqrt(dist2(centroids[c], next[c])));
        }
        centroids = std::move(next);
        if (max_shift < tol) break;
    }

    // final assignment against the converged centroids
    for (std::size_t i = 0; i < n; ++i) {
        double best = std::numeric_limits<double>::infinity();
        int best_c = 0;
        for (std::size_t c = 0; c < k; ++c) {
            double d = dist2(points[i], centroids[c]);
            if (d < best) {
                best = d;
                best_c = static_cast<int>(c);
            }
        }
        assign[i] = best_c;
    }

    ClusterResult result;
    result.algorithm = "kmeans";
    result.params = {{"k", static_cast<double>(k)},
                     {"max_iter", static_cast<double>(max_iter)},
                     {"tol", tol}};
    result.labels = std::move(assign);
    result.centroids = std::move(centroids);
    return result;
}

std::size_t predict_nearest(const ClusterResult& result, const Point& x) {
    if (result.centroids.empty()) {
        throw ConfigError("predict_nearest: result has no centroids (dbscan?)");
    }
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_c = 0;
    for (std::size_t c = 0; c < result.centroids.size(); ++c) {
        double d = dist2(x, result.centroids[c]);
        if (d < best) {
            best = d;
            best_c = c;
        }
    }
    return best_c;
}

double kmeans_inertia(const std::vector<Point>& points, const ClusterResult& result) {
    if (result.centroids.empty()) throw ConfigError("kmeans_inertia: no centroids");
    double total = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
        total += dist2(points[i], result.centroids[result.labels[i]]);
    }
    return total;
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

double homogeneity(const std::vector<int>& truth, const std::vector<int>& pred) {
    if (truth.empty() || truth.size() != pred.size()) {
        throw DataError("homogeneity: label vectors must be non-empty and equal length");
    }
    const double n = static_cast<double>(truth.size());

    std::map<int, std::size_t> class_counts, cluster_counts;
    std::map<std::pair<int, int>, std::size_t> joint;  // (cluster, class)
    for (std::size_t i = 0; i < truth.size(); ++i) {
        class_counts[truth[i]]++;
        cluster_counts[pred[i]]++;
        joint[{pred[i], truth[i]}]++;
    }

    double h_class = 0.0;
    for (const auto& [c, cnt] : class_counts) {
        double p = static_cast<double>(cnt) / n;
        h_class -= p * std::log(p);
    }
    if (h_class == 0.0) return 1.0;

    double h_cond = 0.0;
    for (const auto& [k, k_cnt] : cluster_counts) {
        double pk = static_cast<double>(k_cnt) / n;
        double inner = 0.0;
        for (const auto& [key, cnt] : joint) {
            if (key.first != k) continue;
            double p = static_cast<double>(cnt) / static_cast<double>(k_cnt);
            inner -= p * std::log(p);
        }
        h_cond += pk * inner;
    }
    return 1.0 - h_cond / h_class;
}

double silhouette(const std::vector<Point>& points, const std::vector<int>& labels) {
    if (points.size() != labels.size()) throw DataError("silhouette: size mismatch");
    std::map<int, std::vector<std::size_t>> clusters;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= 0) clusters[labels[i]].push_back(i);
    }
    if (clusters.size() < 2) {
        throw DataError("silhouette: needs at least 2 clusters, got " +
                        std::to_string(clusters.size()));
    }

    double total = 0.0;
    std::size_t counted = 0;
    for (const auto& [own, members] : clusters) {
        for (std::size_t i : members) {
            ++counted;
            if (members.size() == 1) continue;  // singleton scores 0
            double a = 0.0;
            for (std::size_t j : members) {
                if (j != i) a += std::sqrt(dist2(points[i], points[j]));
            }
            a /= static_cast<double>(members.size() - 1);

            double b = std::numeric_limits<double>::infinity();
            for (const auto& [other, other_members] : clusters) {
                if (other == own) continue;
                double mean = 0.0;
                for (std::size_t j : other_members) mean += std::sqrt(dist2(points[i], points[j]));
                mean /= static_cast<double>(other_members.size());
                b = std::min(b, mean);
            }
            double denom = std::max(a, b);
            total += denom == 0.0 ? 0.0 : (b - a) / denom;
        }
    }
    return total / static_cast<double>(counted);
}

// ---------------------------------------------------------------------------
// Catalog
// ---------------------------------------------------------------------------

ClassCatalog build_catalog(const ClusterResult& result, const FeatureMatrix& features,
                           const std::vector<JobProfile>& profiles,
                           const std::vector<Point>* latents, const CatalogParams& params) {
    const std::size_t n = features.rows.size();
    if (result.labels.size() != n) {
        throw DataError("build_catalog: cluster labels do not match feature rows");
    }
    if (latents && latents->size() != n) {
        throw DataError("build_catalog: latents do not match feature rows");
    }

    std::unordered_map<std::string, const JobProfile*> by_id;
    for (const JobProfile& p : profiles) by_id[p.job_id] = &p;

    std::map<int, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < n; ++i) groups[result.labels[i]].push_back(i);

    ClassCatalog catalog;
    catalog.params = params;

    for (const auto& [label, rows] : groups) {
        if (label < 0 || rows.size() < params.min_class_size) {
            for (std::size_t i : rows) catalog.residual.push_back(features.job_ids[i]);
            continue;
        }

        CatalogClass cls;
        cls.class_id = catalog.next_class_id++;

        double mean_power = 0.0, activity = 0.0, plateau = 0.0;
        for (std::size_t i : rows) {
            const FeatureVector& f = features.rows[i];
            mean_power += f[184];
            double swings = 0.0;
            for (std::size_t j = 2 * kNumBins; j < 184; ++j) swings += f[j];
            activity += swings;
            int high_bins = 0;
            for (std::size_t b = 0; b < kNumBins; ++b) {
                if (f[b] >= params.plateau_power_min) ++high_bins;
            }
            plateau += static_cast<double>(high_bins) / static_cast<double>(kNumBins);
        }
        const double sz = static_cast<double>(rows.size());
        cls.mean_power = mean_power / sz;
        cls.swing_activity = activity / sz;
        plateau /= sz;

        std::string base;
        if (cls.swing_activity >= params.swing_split) {
            base = "M";
        } else if (plateau >= params.plateau_min_frac) {
            base = "CI";
        } else {
            base = "NC";
        }
        cls.intensity = base + (cls.mean_power >= params.power_split ? "H" : "L");

        // medoid: minimum summed distance to the other members
        double best_sum = std::numeric_limits<double>::infinity();
        std::size_t best_i = rows[0];
        for (std::size_t i : rows) {
            double sum = 0.0;
            for (std::size_t j : rows) {
                if (i == j) continue;
                if (latents) {
                    sum += std::sqrt(dist2((*latents)[i], (*latents)[j]));
                } else {
                    sum += std::sqrt(squared_l2(features.rows[i].data(), features.rows[j].data(),
                                                kNumFeatures));
                }
            }
            if (sum < best_sum) {
                best_sum = sum;
                best_i = i;
            }
        }
        cls.medoid_job_id = features.job_ids[best_i];
        if (auto it = by_id.find(cls.medoid_job_id); it != by_id.end()) {
            cls.medoid_profile = it->second->values;
        }

        for (std::size_t i : rows) cls.member_job_ids.push_back(features.job_ids[i]);
        std::sort(cls.member_job_ids.begin(), cls.member_job_ids.end());
        catalog.classes.push_back(std::move(cls));
    }
    std::sort(catalog.residual.begin(), catalog.residual.end());
    return catalog;
}

// ---------------------------------------------------------------------------
// IO
// ---------------------------------------------------------------------------

std::string cluster_result_to_json(const ClusterResult& result,
                                   const std::vector<std::string>& job_ids) {
    if (job_ids.size() != result.labels.size()) {
        throw DataError("cluster_result_to_json: job id count does not match labels");
    }
    json labels = json::object();
    for (std::size_t i = 0; i < job_ids.size(); ++i) labels[job_ids[i]] = result.labels[i];
    json j{{"algorithm", result.algorithm}, {"params", result.params}, {"labels", labels}};
    if (!result.centroids.empty()) j["centroids"] = result.centroids;
    return j.dump(2) + "\n";
}

ClusterResult cluster_result_from_json(std::string_view text, const std::string& origin,
                                       std::vector<std::string>* job_ids_out) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw DataError(origin + ": bad cluster json: " + e.what());
    }
    ClusterResult result;
    try {
        result.algorithm = j.at("algorithm").get<std::string>();
        result.params = j.at("params").get<std::map<std::string, double>>();
        const json& labels = j.at("labels");
        std::vector<std::string> ids;
        for (auto it = labels.begin(); it != labels.end(); ++it) ids.push_back(it.key());
        std::sort(ids.begin(), ids.end());
        for (const std::string& id : ids) result.labels.push_back(labels.at(id).get<int>());
        if (job_ids_out) *job_ids_out = std::move(ids);
        if (j.contains("centroids")) {
            result.centroids = j.at("centroids").get<std::vector<Point>>();
        }
    } catch (const json::exception& e) {
        throw DataError(origin + ": bad cluster json: " + e.what());
    }
    return result;
}

void write_cluster_result(const std::filesystem::path& path, const ClusterResult& result,
                          const std::vector<std::string>& job_ids) {
    write_text_file(path, cluster_result_to_json(result, job_ids));
}

json catalog_to_payload(const ClassCatalog& catalog) {
    json classes = json::array();
    for (const CatalogClass& c : catalog.classes) {
        classes.push_back(json{{"class_id", c.class_id},
                               {"intensity", c.intensity},
                               {"member_job_ids", c.member_job_ids},
                               {"medoid_job_id", c.medoid_job_id},
                               {"medoid_profile", c.medoid_profile},
                               {"mean_power", c.mean_power},
                               {"swing_activity", c.swing_activity}});
    }
    return json{{"classes", classes},
                {"residual", catalog.residual},
                {"next_class_id", catalog.next_class_id},
                {"params", json{{"min_class_size", catalog.params.min_class_size},
                                {"power_split", catalog.params.power_split},
                                {"swing_split", catalog.params.swing_split},
                                {"plateau_power_min", catalog.params.plateau_power_min},
                                {"plateau_min_frac", catalog.params.plateau_min_frac}}}};
}

ClassCatalog catalog_from_payload(const json& payload) {
    ClassCatalog catalog;
    try {
        for (const json& cj : payload.at("classes")) {
            CatalogClass c;
            c.class_id = cj.at("class_id").get<int>();
            c.intensity = cj.at("intensity").get<std::string>();
            c.member_job_ids = cj.at("member_job_ids").get<std::vector<std::string>>();
            c.medoid_job_id = cj.at("medoid_job_id").get<std::string>();
            c.medoid_profile = cj.at("medoid_profile").get<std::vector<double>>();
            c.mean_power = cj.at("mean_power").get<double>();
            c.swing_activity = cj.at("swing_activity").get<double>();
            catalog.classes.push_back(std::move(c));
        }
        catalog.residual = payload.at("residual").get<std::vector<std::string>>();
        catalog.next_class_id = payload.at("next_class_id").get<int>();
        const json& pj = payload.at("params");
        catalog.params.min_class_size = pj.at("min_class_size").get<std::size_t>();
        catalog.params.power_split = pj.at("power_split").get<double>();
        catalog.params.swing_split = pj.at("swing_split").get<double>();
        catalog.params.plateau_power_min = pj.at("plateau_power_min").get<double>();
        catalog.params.plateau_min_frac = pj.at("plateau_min_frac").get<double>();
    } catch (const json::exception& e) {
        throw DataError(std::string("bad catalog payload: ") + e.what());
    }
    return catalog;
}

}  // namespace powerprof
