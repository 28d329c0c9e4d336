#pragma once

#include "mmap/autodiff.hpp"
#include "mmap/nn.hpp"
#include "mmap/protobank.hpp"

namespace mmap {

struct EnrichedFeature {
    Vec h;
};

enum class AggregationStrategy { cross_attn, cross_attn_pos, mean, sum };

AggregationStrategy aggregation_from_string(const std::string& s);
std::string to_string(AggregationStrategy s);

// Spatial inputs for the positional-bias ablation: the patch center, the
// retrieved centroids' centers, and the slide diagonal used to normalize
// coordinate offsets.
struct SpatialContext {
    double patch_x = 0.0;
    double patch_y = 0.0;
    Mat centroid_centers;  // L x 2, aligned with the PrototypeSet rows
    double slide_diagonal = 1.0;

    // (centroid - patch) offsets scaled by the slide diagonal.
    Mat normalized_offsets() const;
};

// Single-query cross-attention from f onto the retrieved prototypes:
// h = LayerNorm(f + Attention(f -> prototypes)) under the default
// configuration (residual/normalization toggles live in the params).
EnrichedFeature local_global_attention(const Vec& f, const PrototypeSet& protos,
                                       const GlobalFusionModule& params,
                                       std::vector<Mat>* attn_trace = nullptr);

// Strategy dispatch: cross_attn -> local_global_attention; mean/sum ->
// f + element-wise mean/sum of prototypes; cross_attn_pos adds the learned
// relative-position logit bias (spatial context required).
EnrichedFeature aggregate_context(const Vec& f, const PrototypeSet& protos,
                                  const SpatialContext* spatial, AggregationStrategy strategy,
                                  const GlobalFusionModule& params,
                                  std::vector<Mat>* attn_trace = nullptr);

// Graph-level strategy dispatch shared with the stage-2 training pass.
Var aggregate_context_var(Graph& g, Var f_row, Var protos, const SpatialContext* spatial,
                          AggregationStrategy strategy, const GlobalFusionModule& params,
                          std::vector<Mat>* attn_trace = nullptr);

struct EnsembleHeads {
    Linear mlp1, mlp2, mlp3;  // inputs: e2, f, h

    static EnsembleHeads create(int d, int genes, const std::string& prefix = "phase2/heads");
    Var predict(Graph& g, Var e2, Var f, Var h) const;
    void collect(ParamRefs& out);
};

// (MLP1(e2) + MLP2(f) + MLP3(h)) / 3.
Vec ensemble_predict(const Vec& e2, const Vec& f, const Vec& h, const EnsembleHeads& heads);

// Mean squared error over genes plus gamma2 * (1 - cos(f, h)).
double stage2_loss(const Vec& pred, const Vec& target, const Vec& f, const Vec& h, double gamma2);

}  // namespace mmap
