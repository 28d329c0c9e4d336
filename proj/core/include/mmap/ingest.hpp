#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "mmap/autodiff.hpp"
#include "mmap/image.hpp"

namespace mmap {

enum class Split { train, test };

// One sequencing spot: center in pixel coordinates (x = column, y = row)
// and its log-normalized expression vector of length g.
struct SpotRecord {
    std::string spot_id;
    int x = 0;
    int y = 0;
    Vec expression;
};

struct SlideRecord {
    std::string slide_id;
    std::string patient_id;
    ImageU8 image;
    std::vector<SpotRecord> spots;
    Split split = Split::train;
};

// What the preprocessing pipeline did, plus the generating map when the
// bundle is synthetic (so tests can verify learnability).
struct PreprocessingLog {
    int genes_total = 0;
    int genes_after_hvg = 0;
    int genes_after_min_spots = 0;
    int spots_total = 0;
    int spots_skipped_boundary = 0;
    std::vector<std::string> notes;

    bool synthetic = false;
    Mat gen_weight;  // g x 3, expression = gen_weight * mean_rgb + gen_bias (+ noise)
    Vec gen_bias;    // g
    double gen_sigma = 0.0;
};

struct DatasetBundle {
    std::vector<SlideRecord> slides;
    std::vector<std::string> gene_names;
    PreprocessingLog preprocessing_log;

    int gene_count() const { return static_cast<int>(gene_names.size()); }
    int spot_count() const;
    int count_split(Split s) const;
};

struct IngestConfig {
    int n_hvg = 1000;      // <= 0 keeps every gene
    int min_spots = 1000;
    int patch = 112;  // spots whose window leaves the image are skipped
};

struct GeneFilterLog {
    int genes_total = 0;
    int genes_after_hvg = 0;
    int genes_after_min_spots = 0;
};

// Dataset layout under root:
//   slides/<slide_id>.png           RGB image
//   counts/<slide_id>.tsv           header: spot_id + gene names; rows: spot_id, counts
//   spots/<slide_id>.tsv            header: spot_id, x_pixel, y_pixel
//   meta.json                       {"patients": {...}, "test_slides": [...]}
DatasetBundle load_dataset(const std::filesystem::path& root, const IngestConfig& cfg);

// Writes a bundle in the same layout (counts = expm1(expression)).
void write_dataset(const std::filesystem::path& root, const DatasetBundle& bundle);

// Ranks genes by variance of log1p counts (descending, ties by ascending
// index), keeps the top n_hvg, then drops genes with nonzero raw counts in
// fewer than min_spots spots. Returned indices keep the variance order.
std::pair<std::vector<int>, GeneFilterLog> select_genes(const Mat& counts,
                                                        const std::vector<std::string>& gene_names,
                                                        int n_hvg, int min_spots);

// Element-wise log(1 + x); rejects negative entries.
Mat normalize_expression(const Mat& counts);

// Exact p x p pixel window centered at (x, y): rows [y-p/2, y+p/2),
// cols [x-p/2, x+p/2). Throws BoundaryError when the window leaves the image.
ImageU8 extract_patch(const SlideRecord& slide, std::pair<int, int> center_xy, int p);

// Assigns the split field; test_slide_ids must all exist in the bundle.
DatasetBundle split_by_slide(DatasetBundle bundle, const std::set<std::string>& test_slide_ids);

enum class SynthPattern { field, blobs };

struct SynthConfig {
    int n_slides = 2;
    int spots_per_slide = 50;
    int n_genes = 8;
    int patch = 32;
    int image_h = 256;
    int image_w = 256;
    double sigma = 0.0;
    int n_test_slides = 0;  // last slides become the test split
    SynthPattern pattern = SynthPattern::field;
};

// Deterministic synthetic dataset whose expression is a known linear map
// of mean patch RGB plus Gaussian noise; the map is recorded in
// preprocessing_log.
DatasetBundle generate_synthetic(const SynthConfig& cfg, std::uint64_t seed);

}  // namespace mmap
