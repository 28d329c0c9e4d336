#pragma once

#include <filesystem>
#include <utility>

#include "mmap/checkpoint.hpp"
#include "mmap/ingest.hpp"
#include "mmap/model.hpp"

namespace mmap {

struct MetricsReport {
    Vec pcc_per_gene;
    double pcc_mean = 0.0;
    double mse = 0.0;
    double mae = 0.0;
    int n_spots = 0;
    int n_genes = 0;
    std::string config_hash;
};

// Per-gene Pearson correlation across spots; zero-variance columns get
// PCC = 0. Returns (per-gene values, mean).
std::pair<Vec, double> pearson_per_gene(const Mat& pred, const Mat& truth);

// (mse, mae) over all S*g entries.
std::pair<double, double> compute_errors(const Mat& pred, const Mat& truth);

struct EvalOptions {
    Split split = Split::test;
    bool stage1_only = false;  // use the stage-1 head even on a stage-2 checkpoint
};

// Deterministic center-mode inference over the chosen split. Stage-2
// checkpoints rebuild per-slide banks (same seeds as training) before the
// prototype-enhanced prediction.
MetricsReport evaluate_model(const Checkpoint& checkpoint, const DatasetBundle& bundle,
                             const EvalOptions& options = {});

// Stacked predictions/targets for the chosen split (rows align).
struct PredictionSet {
    Mat pred;
    Mat truth;
    Mat centers;  // S x 2
    std::vector<std::string> spot_ids;
};

PredictionSet predict_split(const Checkpoint& checkpoint, const DatasetBundle& bundle,
                            const EvalOptions& options = {});

// JSON document with exactly the report fields.
std::string metrics_to_json(const MetricsReport& report);

// K-means over predicted expression; writes a scatter PNG colored by
// cluster and a (spot_id, label) TSV. Returns the label array.
std::vector<int> render_cluster_map(const Mat& pred, const Mat& centers,
                                    const std::vector<std::string>& spot_ids, int k,
                                    std::uint64_t seed, const std::filesystem::path& out_png,
                                    const std::filesystem::path& out_tsv);

}  // namespace mmap
