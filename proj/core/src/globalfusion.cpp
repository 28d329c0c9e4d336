#include "mmap/globalfusion.hpp"

#include "mmap/errors.hpp"
#include "mmap/magfusion.hpp"

namespace mmap {

AggregationStrategy aggregation_from_string(const std::string& s) {
    if (s == "cross_attn") return AggregationStrategy::cross_attn;
    if (s == "cross_attn_pos") return AggregationStrategy::cross_attn_pos;
    if (s == "mean") return AggregationStrategy::mean;
    if (s == "sum") return AggregationStrategy::sum;
    throw ConfigError("unknown aggregation strategy '" + s + "'");
}

std::string to_string(AggregationStrategy s) {
    switch (s) {
        case AggregationStrategy::cross_attn: return "cross_attn";
        case AggregationStrategy::cross_attn_pos: return "cross_attn_pos";
        case AggregationStrategy::mean: return "mean";
        case AggregationStrategy::sum: return "sum";
    }
    throw ConfigError("unknown aggregation strategy");
}

Mat SpatialContext::normalized_offsets() const {
    if (centroid_centers.cols() != 2) throw ShapeError("SpatialContext: centers must be L x 2");
    double scale = slide_diagonal > 0 ? slide_diagonal : 1.0;
    Mat off(centroid_centers.rows(), 2);
    for (Eigen::Index i = 0; i < centroid_centers.rows(); ++i) {
        off(i, 0) = (centroid_centers(i, 0) - patch_x) / scale;
        off(i, 1) = (centroid_centers(i, 1) - patch_y) / scale;
    }
    return off;
}

Var aggregate_context_var(Graph& g, Var f_row, Var protos, const SpatialContext* spatial,
                          AggregationStrategy strategy, const GlobalFusionModule& params,
                          std::vector<Mat>* attn_trace) {
    const Eigen::Index L = g.value(protos).rows();
    if (L < 1) throw ConfigError("aggregate_context: empty prototype set");
    switch (strategy) {
        case AggregationStrategy::cross_attn:
            return params.forward(g, f_row, protos, nullptr, attn_trace);
        case AggregationStrategy::cross_attn_pos: {
            if (spatial == nullptr) {
                throw ConfigError("aggregate_context: cross_attn_pos requires centroid centers");
            }
            Mat offsets = spatial->normalized_offsets();
            if (offsets.rows() != L) {
                throw ShapeError("aggregate_context: offset rows must match prototype count");
            }
            return params.forward(g, f_row, protos, &offsets, attn_trace);
        }
        case AggregationStrategy::mean: {
            Var m = g.scale(g.matmul(g.constant(Mat::Ones(1, L)), protos), 1.0 / static_cast<double>(L));
            return g.add(f_row, m);
        }
        case AggregationStrategy::sum: {
            Var s = g.matmul(g.constant(Mat::Ones(1, L)), protos);
            return g.add(f_row, s);
        }
    }
    throw ConfigError("aggregate_context: unknown strategy");
}

EnrichedFeature local_global_attention(const Vec& f, const PrototypeSet& protos,
                                       const GlobalFusionModule& params,
                                       std::vector<Mat>* attn_trace) {
    if (protos.prototypes.rows() < 1) {
        throw ConfigError("local_global_attention: empty prototype set");
    }
    Graph g(/*grad_enabled=*/false);
    Var h = params.forward(g, g.constant(f.transpose()), g.constant(protos.prototypes), nullptr,
                           attn_trace);
    return {g.value(h).row(0).transpose()};
}

EnrichedFeature aggregate_context(const Vec& f, const PrototypeSet& protos,
                                  const SpatialContext* spatial, AggregationStrategy strategy,
                                  const GlobalFusionModule& params, std::vector<Mat>* attn_trace) {
    Graph g(/*grad_enabled=*/false);
    Var h = aggregate_context_var(g, g.constant(f.transpose()), g.constant(protos.prototypes),
                                  spatial, strategy, params, attn_trace);
    return {g.value(h).row(0).transpose()};
}

EnsembleHeads EnsembleHeads::create(int d, int genes, const std::string& prefix) {
    EnsembleHeads h;
    // Zero init: stage 2 starts from the stage-1 solution once MLP2 is
    // seeded from the stage-1 regression head.
    h.mlp1 = Linear::zeros(prefix + "/mlp1", d, genes);
    h.mlp2 = Linear::zeros(prefix + "/mlp2", d, genes);
    h.mlp3 = Linear::zeros(prefix + "/mlp3", d, genes);
    return h;
}

Var EnsembleHeads::predict(Graph& g, Var e2, Var f, Var h) const {
    Var sum = g.add(g.add(mlp1.forward(g, e2), mlp2.forward(g, f)), mlp3.forward(g, h));
    return g.scale(sum, 1.0 / 3.0);
}

void EnsembleHeads::collect(ParamRefs& out) {
    mlp1.collect(out);
    mlp2.collect(out);
    mlp3.collect(out);
}

Vec ensemble_predict(const Vec& e2, const Vec& f, const Vec& h, const EnsembleHeads& heads) {
    if (e2.size() != f.size() || f.size() != h.size()) {
        throw ShapeError("ensemble_predict: input vectors must share dimension d");
    }
    Graph g(/*grad_enabled=*/false);
    Var pred = heads.predict(g, g.constant(e2.transpose()), g.constant(f.transpose()),
                             g.constant(h.transpose()));
    return g.value(pred).row(0).transpose();
}

double stage2_loss(const Vec& pred, const Vec& target, const Vec& f, const Vec& h, double gamma2) {
    if (pred.size() != target.size()) throw ShapeError("stage2_loss: pred/target length mismatch");
    double l_ge = (pred - target).squaredNorm() / static_cast<double>(pred.size());
    return l_ge + gamma2 * magnification_alignment_loss(f, h);
}

}  // namespace mmap
