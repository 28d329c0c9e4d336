#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mmap/autodiff.hpp"
#include "mmap/rng.hpp"

namespace mmap {

using ParamRefs = std::vector<Parameter*>;

// Affine map y = x W^T + b with an optional low-rank adapter
// W_eff = W + (alpha/rank) * B A.
struct Linear {
    Parameter weight;  // out x in
    Parameter bias;    // 1 x out
    bool has_bias = true;

    bool lora_enabled = false;
    int lora_rank = 0;
    double lora_alpha = 0.0;
    Parameter lora_a;  // rank x in
    Parameter lora_b;  // out x rank

    static Linear create(const std::string& name, int in, int out, Rng& rng, bool bias = true);
    static Linear zeros(const std::string& name, int in, int out, bool bias = true);

    int in_features() const { return static_cast<int>(weight.value.cols()); }
    int out_features() const { return static_cast<int>(weight.value.rows()); }

    Var forward(Graph& g, Var x) const;  // x: n x in -> n x out
    Vec apply(const Vec& x) const;       // plain single-vector evaluation

    // Effective weight with the adapter folded in.
    Mat merged_weight() const;

    void collect(ParamRefs& out);
    void set_base_trainable(bool trainable);
};

// Returns a copy of `layer` with a rank-`rank` adapter attached: A is
// random-initialized, B starts at zero so the adapted layer is initially
// identical to the base layer.
Linear apply_lowrank_adapter(const Linear& layer, int rank, double alpha, Rng& rng);

struct LayerNorm {
    Parameter gain;  // 1 x d
    Parameter bias;  // 1 x d

    static LayerNorm create(const std::string& name, int d);
    Var forward(Graph& g, Var x, double eps = 1e-5) const;
    void collect(ParamRefs& out);
};

// Shared q/k/v/o projection set used for both self- and cross-attention.
// Scores are scaled by 1/sqrt(head_dim); per-head softmax rows can be
// captured into attn_trace for the attention-invariant checks.
struct AttentionProjections {
    Linear wq, wk, wv, wo;
    int heads = 1;

    static AttentionProjections create(const std::string& name, int d, int heads, Rng& rng,
                                       bool zero_output_proj = false);

    Var self_attention(Graph& g, Var x, std::vector<Mat>* attn_trace = nullptr) const;
    // q: 1 x d query row, kv: L x d keys/values. pos_logits, when present,
    // is an L x heads additive bias on the attention scores.
    Var cross_attention(Graph& g, Var q, Var kv, Var* pos_logits = nullptr,
                        std::vector<Mat>* attn_trace = nullptr) const;

    void collect(ParamRefs& out);
};

struct VitConfig {
    int image_px = 112;  // input view side p
    int vit_patch = 16;  // token patch side
    int d = 128;
    int depth = 4;
    int heads = 4;
    int mlp_ratio = 4;
};

struct VitBlock {
    LayerNorm ln1;
    AttentionProjections attn;
    LayerNorm ln2;
    Linear fc1, fc2;
};

//uint8-scale views never reach this class: callers normalize first
// (see normalize_view) and patchify into a tau x (3*vp^2) matrix.
struct VitEncoder {
    VitConfig cfg;
    Linear patch_embed;
    Parameter cls_token;  // 1 x d
    Parameter pos_embed;  // (tau+1) x d
    std::vector<VitBlock> blocks;
    LayerNorm final_ln;
    bool frozen = false;

    int tau() const {
        int n = cfg.image_px / cfg.vit_patch;
        return n * n;
    }

    static VitEncoder create(const VitConfig& cfg, std::uint64_t seed,
                             const std::string& prefix = "phase1/encoder");

    // patches: tau x (3*vp^2) -> (tau+1) x d token matrix, row 0 = [CLS].
    Var forward(Graph& g, const Mat& patches, std::vector<Mat>* attn_trace = nullptr) const;

    void collect(ParamRefs& out);
    // Marks every base parameter non-trainable; adapters stay trainable.
    void set_frozen(bool frozen);
    // Attaches low-rank adapters to every linear layer in the encoder.
    void enable_adapters(int rank, double alpha, std::uint64_t seed);
};

struct FusionConfig {
    int n_layers = 2;
    int heads = 4;
    bool use_layer_norm = true;  // test configurations may disable
};

struct FusionLayer {
    LayerNorm ln;
    AttentionProjections attn;
};

// Self-attention stack over the assembled multi-magnification sequence.
// No positional encoding anywhere in this module.
struct FusionModule {
    FusionConfig cfg;
    std::vector<FusionLayer> layers;
    LayerNorm final_ln;

    static FusionModule create(const FusionConfig& cfg, int d, std::uint64_t seed,
                               const std::string& prefix = "phase1/fusion");

    // seq: n x d -> n x d; callers read row 0 as the fused feature.
    Var forward(Graph& g, Var seq, std::vector<Mat>* attn_trace = nullptr) const;

    void collect(ParamRefs& out);
};

struct GlobalFusionConfig {
    int heads = 4;
    int pos_hidden = 16;
    bool use_residual = true;    // test configurations may disable
    bool use_layer_norm = true;  // test configurations may disable
};

// Single-query cross-attention from the fused feature onto retrieved
// prototypes, with an optional relative-position logit bias for the
// cross_attn_pos ablation.
struct GlobalFusionModule {
    GlobalFusionConfig cfg;
    AttentionProjections attn;
    LayerNorm ln;
    Linear pos_fc1, pos_fc2;  // 2 -> pos_hidden -> heads

    static GlobalFusionModule create(const GlobalFusionConfig& cfg, int d, std::uint64_t seed,
                                     const std::string& prefix = "phase2/global");

    // f_row: 1 x d, protos: L x d. offsets (L x 2, normalized) enables the
    // positional bias path. Returns h as 1 x d.
    Var forward(Graph& g, Var f_row, Var protos, const Mat* offsets = nullptr,
                std::vector<Mat>* attn_trace = nullptr) const;

    void collect(ParamRefs& out);
};

// Adam with bias correction and no weight decay.
class AdamOptimizer {
public:
    AdamOptimizer(ParamRefs params, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

    void step(double lr);
    void zero_grad();
    const ParamRefs& params() const { return params_; }

private:
    ParamRefs params_;
    std::vector<Mat> m_, v_;
    double beta1_, beta2_, eps_;
    long t_ = 0;
};

}  // namespace mmap
