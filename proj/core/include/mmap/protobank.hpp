#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mmap/autodiff.hpp"

namespace mmap {

// Per-WSI set of K-means centroids over fused patch embeddings, with the
// mean pixel coordinates of each centroid's member spots.
struct PrototypeBank {
    std::string slide_id;
    Mat centroids;         // K x d
    Mat centroid_centers;  // K x 2 (x, y)
    std::vector<int> member_counts;
    int K = 0;
};

// Top-L retrieval result for one patch, ranked by cosine similarity.
struct PrototypeSet {
    Mat prototypes;  // L x d
    std::vector<int> indices;
    std::vector<double> similarities;  // descending
};

// K = min(n_patches, clamp(ceil(n_patches/8), k_min, k_max)).
int choose_cluster_count(int n_patches, int k_min = 32, int k_max = 80);

struct KmeansResult {
    Mat centroids;  // K x d
    std::vector<int> assignments;
    double inertia = 0.0;
    std::vector<double> inertia_trace;  // per Lloyd iteration, non-increasing
    int iterations = 0;
};

// Seeded k-means++ initial centroids (exposed so oracles can share the
// exact initialization).
Mat kmeans_pp_init(const Mat& embeddings, int K, std::uint64_t seed);

// Lloyd iterations from the given initial centroids: Euclidean metric,
// stops when assignments are unchanged or after max_iter; empty clusters
// are repaired by stealing the point farthest from its centroid.
KmeansResult lloyd_from_init(const Mat& embeddings, const Mat& init_centroids, int max_iter = 300);

// k-means++ init followed by Lloyd; deterministic given (embeddings, K, seed).
KmeansResult fit_kmeans(const Mat& embeddings, int K, std::uint64_t seed, int max_iter = 300);

struct PrototypeStrategy {
    enum class Kind { fixed, adaptive };
    Kind kind = Kind::adaptive;
    int fixed_l = 16;

    static PrototypeStrategy fixed(int l) { return {Kind::fixed, l}; }
    static PrototypeStrategy adaptive() { return {Kind::adaptive, 0}; }
};

// adaptive: max(1, round(0.5*K)); fixed(L): min(L, K).
int choose_prototype_count(int K, const PrototypeStrategy& strategy);

// Ranks bank centroids by cosine similarity to f (ties by ascending
// index) and returns the top L.
PrototypeSet retrieve_prototypes(const Vec& f, const PrototypeBank& bank, int L);

struct BankConfig {
    int k_min = 32;
    int k_max = 80;
};

// choose_cluster_count + fit_kmeans + per-cluster center/count bookkeeping.
PrototypeBank build_bank(const Mat& slide_embeddings, const Mat& spot_centers,
                         const std::string& slide_id, const BankConfig& cfg, std::uint64_t seed);

}  // namespace mmap
