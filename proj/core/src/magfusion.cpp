#include "mmap/magfusion.hpp"

#include "mmap/errors.hpp"

namespace mmap {

Var assemble_fusion_sequence(Graph& g, Var tokens0, Var tokens1, Var tokens2) {
    const Mat& t0 = g.value(tokens0);
    const Mat& t1 = g.value(tokens1);
    const Mat& t2 = g.value(tokens2);
    if (t0.cols() != t1.cols() || t0.cols() != t2.cols() || t0.rows() != t1.rows() ||
        t0.rows() != t2.rows()) {
        throw ShapeError("fuse_magnifications: token sequences must share tau and d");
    }
    const int tau = static_cast<int>(t0.rows()) - 1;
    if (tau < 1) throw ShapeError("fuse_magnifications: sequences need at least one patch token");
    // {z0_cls, z1_1..z1_tau, z2_1..z2_tau}: seq0 contributes only its [CLS],
    // seq1/seq2 contribute only patch tokens.
    return g.concat_rows({g.slice_rows(tokens0, 0, 1), g.slice_rows(tokens1, 1, tau),
                          g.slice_rows(tokens2, 1, tau)});
}

FusedFeature fuse_magnifications(const TokenSequence& seq0, const TokenSequence& seq1,
                                 const TokenSequence& seq2, const FusionModule& params,
                                 std::vector<Mat>* attn_trace) {
    Graph g(/*grad_enabled=*/false);
    Var s = assemble_fusion_sequence(g, g.constant(seq0.tokens), g.constant(seq1.tokens),
                                     g.constant(seq2.tokens));
    Var out = params.forward(g, s, attn_trace);
    FusedFeature fused;
    fused.f = g.value(out).row(0).transpose();
    fused.source_cls.resize(3, seq0.tokens.cols());
    fused.source_cls.row(0) = seq0.tokens.row(0);
    fused.source_cls.row(1) = seq1.tokens.row(0);
    fused.source_cls.row(2) = seq2.tokens.row(0);
    return fused;
}

double magnification_alignment_loss(const Vec& f, const Vec& e0) {
    if (f.size() != e0.size()) throw ShapeError("magnification_alignment_loss: length mismatch");
    constexpr double kEps = 1e-8;
    double denom = std::max(f.norm() * e0.norm(), kEps);
    return 1.0 - f.dot(e0) / denom;
}

Vec stage1_predict(const Vec& f, const Linear& head) {
    return head.apply(f);
}

double stage1_loss(const Vec& pred, const Vec& target, const Vec& f, const Vec& e0, double gamma1) {
    if (pred.size() != target.size()) throw ShapeError("stage1_loss: pred/target length mismatch");
    double l_ge = (pred - target).squaredNorm() / static_cast<double>(pred.size());
    return l_ge + gamma1 * magnification_alignment_loss(f, e0);
}

}  // namespace mmap
