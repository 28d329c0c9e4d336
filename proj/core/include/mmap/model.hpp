#pragma once

#include <optional>

#include "mmap/checkpoint.hpp"
#include "mmap/config.hpp"
#include "mmap/encoder.hpp"
#include "mmap/globalfusion.hpp"
#include "mmap/magfusion.hpp"
#include "mmap/nn.hpp"

namespace mmap {

// Phase 1: encoder + magnification fusion + stage-1 regression head.
struct Phase1Model {
    VitEncoder encoder;
    FusionModule fusion;
    Linear head;  // d -> genes

    static Phase1Model create(const ModelConfig& cfg, std::uint64_t seed);
    void collect(ParamRefs& out);
    void set_frozen(bool frozen);
};

// Phase 2: prototype cross-attention and the three ensemble heads.
struct Phase2Model {
    GlobalFusionModule glob;
    EnsembleHeads heads;

    static Phase2Model create(const ModelConfig& cfg, std::uint64_t seed);
    void collect(ParamRefs& out);
};

struct ModelSet {
    ModelConfig cfg;
    Phase1Model phase1;
    std::optional<Phase2Model> phase2;
};

struct Phase1Outputs {
    Var tokens0, tokens1, tokens2;
    Var f_row;   // 1 x d
    Var e0_row;  // 1 x d ([CLS] of the x5 view)
    Var e1_row;
    Var e2_row;  // 1 x d ([CLS] of the x20 view)
    Var pred1;   // 1 x genes
};

// Normalizes + patchifies the three views, encodes them, fuses, and runs
// the stage-1 head. Used by training (grad on) and inference (grad off).
Phase1Outputs phase1_forward(Graph& g, const Phase1Model& model, const MultiMagViews& views,
                             std::vector<Mat>* fusion_attn_trace = nullptr);

// Builds fresh models from a config (used before stage-1 training).
ModelSet create_models(const ModelConfig& cfg, std::uint64_t seed, bool with_phase2);

// Rebuilds models from a checkpoint and loads every parameter by name.
ModelSet models_from_checkpoint(const Checkpoint& ckpt);

// Serializes all model parameters (and banks, for stage 2) into a
// checkpoint container.
Checkpoint checkpoint_from_models(const ModelSet& models, const std::string& stage,
                                  const TrainConfig& cfg, int epoch,
                                  std::vector<PrototypeBank> banks = {});

}  // namespace mmap
