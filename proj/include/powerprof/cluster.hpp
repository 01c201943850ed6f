#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "powerprof/common.hpp"
#include "powerprof/features.hpp"
#include "powerprof/ingest.hpp"

namespace powerprof {

using Point = std::vector<double>;

// ---------------------------------------------------------------------------
// Clustering
// ---------------------------------------------------------------------------

struct ClusterResult {
    std::string algorithm;  // "dbscan" | "kmeans"
    std::map<std::string, double> params;
    std::vector<int> labels;             // -1 = noise, otherwise dense 0..C-1
    std::vector<Point> centroids;        // kmeans only
};

// Euclidean DBSCAN. A point's neighborhood includes the point itself; core
// points have at least min_pts neighbors; clusters are the connected
// components of core points under eps-reachability; border points join the
// cluster of the first core point that reaches them in input order; the rest
// is noise (-1). Labels are dense in first-appearance order of the cores.
ClusterResult dbscan(const std::vector<Point>& points, double eps, std::size_t min_pts);

// Lloyd's algorithm with seeded k-means++ initialization. Stops when the
// largest centroid shift drops below tol or after max_iter rounds. Ties in
// assignment go to the lowest centroid index; a cluster that empties is
// re-seeded at the point farthest from its assigned centroid.
ClusterResult kmeans(const std::vector<Point>& points, std::size_t k, std::uint64_t seed,
                     std::size_t max_iter = 100, double tol = 1e-6);

// Nearest centroid, ties to the lowest index. DBSCAN results have no
// centroids and raise ConfigError.
std::size_t predict_nearest(const ClusterResult& result, const Point& x);

// Wall-to-wall inertia (sum of squared distances to assigned centroids).
double kmeans_inertia(const std::vector<Point>& points, const ClusterResult& result);

// ---------------------------------------------------------------------------
// External cluster metrics
// ---------------------------------------------------------------------------

// h = 1 - H(class|cluster) / H(class), natural logs, h = 1 when H(class) = 0.
// Noise (-1) counts as its own cluster.
double homogeneity(const std::vector<int>& truth, const std::vector<int>& pred);

// Mean silhouette over non-noise points; singleton clusters score 0.
// Fewer than 2 clusters raises DataError.
double silhouette(const std::vector<Point>& points, const std::vector<int>& labels);

// ---------------------------------------------------------------------------
// Class catalog
// ---------------------------------------------------------------------------

struct CatalogParams {
    std::size_t min_class_size = 50;
    double power_split = 500.0;        // watts: High vs Low mean power
    double swing_split = 0.05;         // normalized swing activity: Mixed threshold
    double plateau_power_min = 500.0;  // watts: a bin mean above this counts as plateau
    double plateau_min_frac = 0.5;     // fraction of plateau bins for Compute-Intensive
};

struct CatalogClass {
    int class_id = 0;
    std::string intensity;  // CIH, CIL, MH, ML, NCH, NCL
    std::vector<std::string> member_job_ids;
    std::string medoid_job_id;
    std::vector<double> medoid_profile;
    double mean_power = 0.0;
    double swing_activity = 0.0;
};

struct ClassCatalog {
    std::vector<CatalogClass> classes;      // ordered by class_id
    std::vector<std::string> residual;      // noise and sub-threshold clusters
    int next_class_id = 0;                  // monotone, never reused
    CatalogParams params;
};

// Turns a clustering of the rows of `features` into a catalog. Clusters
// smaller than min_class_size and noise go to the residual. The intensity
// label crosses swing activity (sum of normalized swing counts, features
// 8..183) against the power-shape test:
//   activity >= swing_split            -> Mixed
//   else plateau fraction >= plateau_min_frac -> Compute-Intensive
//   else                               -> Non-compute
// suffixed High/Low by mean power vs power_split. The representative medoid
// minimizes the summed distance to its class members in latent space when
// latents are given, in feature space otherwise.
ClassCatalog build_catalog(const ClusterResult& result, const FeatureMatrix& features,
                           const std::vector<JobProfile>& profiles,
                           const std::vector<Point>* latents, const CatalogParams& params);

// ---------------------------------------------------------------------------
// IO
// ---------------------------------------------------------------------------

// {"algorithm", "params", "labels": {job_id: int}, "centroids"?}
std::string cluster_result_to_json(const ClusterResult& result,
                                   const std::vector<std::string>& job_ids);
ClusterResult cluster_result_from_json(std::string_view text, const std::string& origin,
                                       std::vector<std::string>* job_ids_out);
void write_cluster_result(const std::filesystem::path& path, const ClusterResult& result,
                          const std::vector<std::string>& job_ids);

nlohmann::json catalog_to_payload(const ClassCatalog& catalog);
ClassCatalog catalog_from_payload(const nlohmann::json& payload);

}  // namespace powerprof
