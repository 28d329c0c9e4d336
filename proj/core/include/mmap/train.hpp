#pragma once

#include <ostream>

#include "mmap/checkpoint.hpp"
#include "mmap/config.hpp"
#include "mmap/ingest.hpp"
#include "mmap/model.hpp"

namespace mmap {

// Cosine annealing: lr(t) = lr_min + 0.5 (lr_max - lr_min)(1 + cos(pi t / epochs)).
double cosine_lr(int t, const TrainConfig& cfg);

// Flip -> right-angle rotation -> multiplicative per-channel jitter in
// [1-a, 1+a], clamped to [0, 255]. Deterministic given the rng state.
ImageU8 augment_patch(const ImageU8& patch, Rng& rng, const AugmentConfig& cfg);

struct EpochLog {
    int epoch = 0;
    double lr = 0.0;
    double mean_lge = 0.0;
    double mean_lmag = 0.0;
    double seconds = 0.0;
    int steps = 0;  // optimizer steps taken this epoch
};

// Deterministic center-mode phase-1 features for every spot of one slide
// that fits the model patch window.
struct SlideFeatures {
    Mat f;        // N x d
    Mat e0;       // N x d
    Mat e2;       // N x d
    Mat pred1;    // N x genes (stage-1 head outputs)
    Mat centers;  // N x 2 (x, y)
    std::vector<int> spot_indices;  // rows -> slide.spots positions
};

SlideFeatures phase1_slide_features(const Phase1Model& model, const SlideRecord& slide, int patch);

// Stage 1: trains encoder + fusion + head on the train split with the
// combined regression/alignment loss. The log stream, when given, gets one
// line per epoch (epoch, lr, mean L_ge, mean L_mag, seconds).
Checkpoint run_stage1(const DatasetBundle& bundle, const TrainConfig& cfg,
                      std::ostream* log = nullptr, std::vector<EpochLog>* epochs_out = nullptr);

// Stage 2: freezes phase 1, builds one prototype bank per train slide from
// center-mode embeddings, and trains the global-fusion block plus the
// three ensemble heads. The returned checkpoint carries both phases and
// the banks.
Checkpoint run_stage2(const DatasetBundle& bundle, const Checkpoint& stage1,
                      const TrainConfig& cfg, std::ostream* log = nullptr,
                      std::vector<EpochLog>* epochs_out = nullptr);

// Per-slide bank seed shared by training and evaluation.
std::uint64_t bank_seed(std::uint64_t train_seed, const std::string& slide_id);

}  // namespace mmap
