#include "mmap/protobank.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "mmap/errors.hpp"
#include "mmap/rng.hpp"

namespace mmap {

int choose_cluster_count(int n_patches, int k_min, int k_max) {
    if (n_patches < 1) throw ConfigError("choose_cluster_count: n_patches must be >= 1");
    if (k_min < 1 || k_min > k_max) throw ConfigError("choose_cluster_count: bad [k_min, k_max]");
    int target = static_cast<int>((n_patches + 7) / 8);  // ceil(n/8)
    int clamped = std::clamp(target, k_min, k_max);
    return std::min(n_patches, clamped);
}

Mat kmeans_pp_init(const Mat& embeddings, int K, std::uint64_t seed) {
    const Eigen::Index n = embeddings.rows();
    if (K < 1 || n < K) throw ConfigError("kmeans_pp_init: need 1 <= K <= N");
    Rng rng(derive_seed(seed, fnv1a64("kmeans++")));
    Mat centroids(K, embeddings.cols());

    Eigen::Index first = static_cast<Eigen::Index>(rng.uniform_index(static_cast<std::uint64_t>(n)));
    centroids.row(0) = embeddings.row(first);

    Vec dist2(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        dist2(i) = (embeddings.row(i) - centroids.row(0)).squaredNorm();
    }
    for (int k = 1; k < K; ++k) {
        double total = dist2.sum();
        Eigen::Index chosen;
        if (total <= 0.0) {
            // All remaining points coincide with chosen centroids.
            chosen = static_cast<Eigen::Index>(rng.uniform_index(static_cast<std::uint64_t>(n)));
        } else {
            double r = rng.uniform() * total;
            double acc = 0.0;
            chosen = n - 1;
            for (Eigen::Index i = 0; i < n; ++i) {
                acc += dist2(i);
                if (acc >= r) {
                    chosen = i;
                    break;
                }
            }
        }
        centroids.row(k) = embeddings.row(chosen);
        for (Eigen::Index i = 0; i < n; ++i) {
            dist2(i) = std::min(dist2(i), (embeddings.row(i) - centroids.row(k)).squaredNorm());
        }
    }
    return centroids;
}

namespace {

// Assigns each point to its nearest centroid (ties to the lower index).
void assign_points(const Mat& emb, const Mat& centroids, std::vector<int>& assignment,
                   Vec& point_dist2) {
    const Eigen::Index n = emb.rows();
    const Eigen::Index k = centroids.rows();
    for (Eigen::Index i = 0; i < n; ++i) {
        double best = std::numeric_limits<double>::infinity();
        int best_k = 0;
        for (Eigen::Index c = 0; c < k; ++c) {
            double d = (emb.row(i) - centroids.row(c)).squaredNorm();
            if (d < best) {
                best = d;
                best_k = static_cast<int>(c);
            }
        }
        assignment[i] = best_k;
        point_dist2(i) = best;
    }
}

}  // namespace

KmeansResult lloyd_from_init(const Mat& embeddings, const Mat& init_centroids, int max_iter) {
    const Eigen::Index n = embeddings.rows();
    const int K = static_cast<int>(init_centroids.rows());
    if (n < K || K < 1) throw ConfigError("lloyd_from_init: need 1 <= K <= N");
    if (init_centroids.cols() != embeddings.cols()) {
        throw ShapeError("lloyd_from_init: centroid dimension mismatch");
    }

    KmeansResult res;
    res.centroids = init_centroids;
    res.assignments.assign(n, -1);
    Vec point_dist2(n);
    std::vector<int> prev(n, -2);

    for (int it = 0; it < max_iter; ++it) {
        assign_points(embeddings, res.centroids, res.assignments, point_dist2);

        // Repair empty clusters: each steals the point farthest from its
        // current centroid and relocates the empty centroid onto it, so
        // repairs can only lower inertia.
        std::vector<int> counts(K, 0);
        for (Eigen::Index i = 0; i < n; ++i) ++counts[res.assignments[i]];
        std::vector<bool> stolen(n, false);
        for (int c = 0; c < K; ++c) {
            if (counts[c] > 0) continue;
            double worst = -1.0;
            Eigen::Index worst_i = -1;
            for (Eigen::Index i = 0; i < n; ++i) {
                if (stolen[i] || counts[res.assignments[i]] <= 1) continue;
                if (point_dist2(i) > worst) {
                    worst = point_dist2(i);
                    worst_i = i;
                }
            }
            if (worst_i < 0) break;  // fewer distinct points than clusters
            --counts[res.assignments[worst_i]];
            res.assignments[worst_i] = c;
            ++counts[c];
            stolen[worst_i] = true;
            res.centroids.row(c) = embeddings.row(worst_i);
            point_dist2(worst_i) = 0.0;
        }

        double inertia = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            inertia += (embeddings.row(i) - res.centroids.row(res.assignments[i])).squaredNorm();
        }
        res.inertia_trace.push_back(inertia);
        res.iterations = it + 1;

        if (res.assignments == prev) break;
        prev = res.assignments;

        Mat sums = Mat::Zero(K, embeddings.cols());
        std::fill(counts.begin(), counts.end(), 0);
        for (Eigen::Index i = 0; i < n; ++i) {
            sums.row(res.assignments[i]) += embeddings.row(i);
            ++counts[res.assignments[i]];
        }
        for (int c = 0; c < K; ++c) {
            if (counts[c] > 0) res.centroids.row(c) = sums.row(c) / counts[c];
        }
    }

    res.inertia = res.inertia_trace.empty() ? 0.0 : res.inertia_trace.back();
    return res;
}

KmeansResult fit_kmeans(const Mat& embeddings, int K, std::uint64_t seed, int max_iter) {
    if (embeddings.rows() < K) {
        throw ConfigError("fit_kmeans: N=" + std::to_string(embeddings.rows()) +
                          " is smaller than K=" + std::to_string(K));
    }
    return lloyd_from_init(embeddings, kmeans_pp_init(embeddings, K, seed), max_iter);
}

int choose_prototype_count(int K, const PrototypeStrategy& strategy) {
    if (K < 1) throw ConfigError("choose_prototype_count: K must be >= 1");
    if (strategy.kind == PrototypeStrategy::Kind::adaptive) {
        return std::max(1, static_cast<int>(std::lround(0.5 * K)));
    }
    if (strategy.fixed_l < 1) throw ConfigError("choose_prototype_count: fixed L must be >= 1");
    return std::min(strategy.fixed_l, K);
}

PrototypeSet retrieve_prototypes(const Vec& f, const PrototypeBank& bank, int L) {
    if (L < 1 || L > bank.K) {
        throw ConfigError("retrieve_prototypes: L=" + std::to_string(L) +
                          " outside [1, K=" + std::to_string(bank.K) + "]");
    }
    if (f.size() != bank.centroids.cols()) {
        throw ShapeError("retrieve_prototypes: feature dimension mismatch");
    }
    constexpr double kEps = 1e-8;
    const double fn = f.norm();
    std::vector<std::pair<double, int>> ranked(bank.K);
    for (int k = 0; k < bank.K; ++k) {
        double denom = std::max(fn * bank.centroids.row(k).norm(), kEps);
        ranked[k] = {bank.centroids.row(k).dot(f) / denom, k};
    }
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });

    PrototypeSet out;
    out.prototypes.resize(L, f.size());
    out.indices.reserve(L);
    out.similarities.reserve(L);
    for (int i = 0; i < L; ++i) {
        out.indices.push_back(ranked[i].second);
        out.similarities.push_back(ranked[i].first);
        out.prototypes.row(i) = bank.centroids.row(ranked[i].second);
    }
    return out;
}

PrototypeBank build_bank(const Mat& slide_embeddings, const Mat& spot_centers,
                         const std::string& slide_id, const BankConfig& cfg, std::uint64_t seed) {
    const Eigen::Index n = slide_embeddings.rows();
    if (n < 1) throw ConfigError("build_bank: slide has no embeddings");
    if (spot_centers.rows() != n || spot_centers.cols() != 2) {
        throw ShapeError("build_bank: spot_centers must be N x 2");
    }
    int K = choose_cluster_count(static_cast<int>(n), cfg.k_min, cfg.k_max);
    KmeansResult km = fit_kmeans(slide_embeddings, K, seed);

    PrototypeBank bank;
    bank.slide_id = slide_id;
    bank.K = K;
    bank.centroids = km.centroids;
    bank.centroid_centers = Mat::Zero(K, 2);
    bank.member_counts.assign(K, 0);
    for (Eigen::Index i = 0; i < n; ++i) {
        int c = km.assignments[i];
        bank.centroid_centers.row(c) += spot_centers.row(i);
        ++bank.member_counts[c];
    }
    for (int c = 0; c < K; ++c) {
        if (bank.member_counts[c] > 0) bank.centroid_centers.row(c) /= bank.member_counts[c];
    }
    return bank;
}

}  // namespace mmap
