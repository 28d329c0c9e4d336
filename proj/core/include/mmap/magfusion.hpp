#pragma once

#include "mmap/autodiff.hpp"
#include "mmap/encoder.hpp"
#include "mmap/nn.hpp"

namespace mmap {

// Output of the multi-magnification fusion stage: the fused feature f and
// the three source [CLS] vectors (rows: x5, x10, x20).
struct FusedFeature {
    Vec f;
    Mat source_cls;  // 3 x d
};

// Assembles [cls0; patch tokens of seq1; patch tokens of seq2] and runs
// the fusion self-attention stack; f is the position-0 output.
FusedFeature fuse_magnifications(const TokenSequence& seq0, const TokenSequence& seq1,
                                 const TokenSequence& seq2, const FusionModule& params,
                                 std::vector<Mat>* attn_trace = nullptr);

// Builds the fusion input sequence (1+2*tau rows) from graph tokens;
// shared between the public operation and the training forward pass.
Var assemble_fusion_sequence(Graph& g, Var tokens0, Var tokens1, Var tokens2);

// 1 - cos(f, e0) with an eps guard on the norms; range [0, 2].
double magnification_alignment_loss(const Vec& f, const Vec& e0);

// Linear regression head: W f + b.
Vec stage1_predict(const Vec& f, const Linear& head);

// Mean squared error over genes plus gamma1 * magnification loss.
double stage1_loss(const Vec& pred, const Vec& target, const Vec& f, const Vec& e0, double gamma1);

}  // namespace mmap
