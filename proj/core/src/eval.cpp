#include "mmap/eval.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>

#include "mmap/errors.hpp"
#include "mmap/train.hpp"

using nlohmann::json;

namespace mmap {

std::pair<Vec, double> pearson_per_gene(const Mat& pred, const Mat& truth) {
    if (pred.rows() != truth.rows() || pred.cols() != truth.cols()) {
        throw ShapeError("pearson_per_gene: shape mismatch");
    }
    const Eigen::Index s = pred.rows();
    const Eigen::Index g = pred.cols();
    if (s < 2) throw ConfigError("pearson_per_gene: need at least 2 spots");

    Vec pcc(g);
    for (Eigen::Index j = 0; j < g; ++j) {
        Eigen::ArrayXd a = pred.col(j).array();
        Eigen::ArrayXd b = truth.col(j).array();
        double ma = a.mean();
        double mb = b.mean();
        Eigen::ArrayXd ca = a - ma;
        Eigen::ArrayXd cb = b - mb;
        double va = ca.square().sum();
        double vb = cb.square().sum();
        if (va <= 0.0 || vb <= 0.0) {
            pcc(j) = 0.0;  // undefined correlation treated as "no signal"
        } else {
            pcc(j) = (ca * cb).sum() / std::sqrt(va * vb);
        }
    }
    return {pcc, pcc.mean()};
}

std::pair<double, double> compute_errors(const Mat& pred, const Mat& truth) {
    if (pred.rows() != truth.rows() || pred.cols() != truth.cols()) {
        throw ShapeError("compute_errors: shape mismatch");
    }
    const double n = static_cast<double>(pred.size());
    Mat diff = pred - truth;
    double mse = diff.squaredNorm() / n;
    double mae = diff.cwiseAbs().sum() / n;
    return {mse, mae};
}

PredictionSet predict_split(const Checkpoint& checkpoint, const DatasetBundle& bundle,
                            const EvalOptions& options) {
    if (checkpoint.stage != "stage1" && checkpoint.stage != "stage2") {
        throw ConfigError("evaluate_model: checkpoint stage must be stage1 or stage2");
    }
    const bool stage1_mode = options.stage1_only || checkpoint.stage == "stage1";

    ModelSet models = models_from_checkpoint(checkpoint);
    if (!stage1_mode && !models.phase2) {
        throw ConfigError("evaluate_model: checkpoint has no phase-2 parameters");
    }
    TrainConfig cfg = train_config_from_json(checkpoint.config_json);
    const ModelConfig& mc = models.cfg;

    PrototypeStrategy strategy = cfg.bank.retrieval == "adaptive"
                                     ? PrototypeStrategy::adaptive()
                                     : PrototypeStrategy::fixed(cfg.bank.fixed_l);
    AggregationStrategy aggregation = aggregation_from_string(cfg.bank.aggregation);

    std::vector<Mat> pred_rows, truth_rows, center_rows;
    std::vector<std::string> spot_ids;
    for (const SlideRecord& slide : bundle.slides) {
        if (slide.split != options.split) continue;
        SlideFeatures feats = phase1_slide_features(models.phase1, slide, mc.patch);
        const int n = static_cast<int>(feats.f.rows());
        if (n == 0) continue;

        Mat pred(n, bundle.gene_count());
        if (stage1_mode) {
            pred = feats.pred1;
        } else {
            BankConfig bc{cfg.bank.k_min, cfg.bank.k_max};
            PrototypeBank bank = build_bank(feats.f, feats.centers, slide.slide_id, bc,
                                            bank_seed(checkpoint.seed, slide.slide_id));
            int top_l = choose_prototype_count(bank.K, strategy);
            double diagonal = std::hypot(static_cast<double>(slide.image.height),
                                         static_cast<double>(slide.image.width));
            for (int i = 0; i < n; ++i) {
                Vec f = feats.f.row(i).transpose();
                PrototypeSet protos = retrieve_prototypes(f, bank, top_l);
                SpatialContext spatial;
                spatial.patch_x = feats.centers(i, 0);
                spatial.patch_y = feats.centers(i, 1);
                spatial.slide_diagonal = diagonal;
                spatial.centroid_centers.resize(protos.prototypes.rows(), 2);
                for (Eigen::Index r = 0; r < spatial.centroid_centers.rows(); ++r) {
                    spatial.centroid_centers.row(r) = bank.centroid_centers.row(protos.indices[r]);
                }
                Graph g(/*grad_enabled=*/false);
                Var f_row = g.constant(feats.f.row(i));
                Var h = aggregate_context_var(g, f_row, g.constant(protos.prototypes), &spatial,
                                              aggregation, models.phase2->glob);
                Var e_head1 = g.constant(mc.mlp1_uses_e0 ? feats.e0.row(i) : feats.e2.row(i));
                Var p = models.phase2->heads.predict(g, e_head1, f_row, h);
                pred.row(i) = g.value(p).row(0);
            }
        }

        Mat truth(n, bundle.gene_count());
        for (int i = 0; i < n; ++i) {
            truth.row(i) = slide.spots[feats.spot_indices[i]].expression.transpose();
            spot_ids.push_back(slide.slide_id + ":" + slide.spots[feats.spot_indices[i]].spot_id);
        }
        pred_rows.push_back(std::move(pred));
        truth_rows.push_back(std::move(truth));
        center_rows.push_back(feats.centers);
    }

    Eigen::Index total = 0;
    for (const Mat& m : pred_rows) total += m.rows();
    if (total == 0) throw ConfigError("evaluate_model: selected split has no usable spots");

    PredictionSet out;
    out.pred.resize(total, bundle.gene_count());
    out.truth.resize(total, bundle.gene_count());
    out.centers.resize(total, 2);
    Eigen::Index r = 0;
    for (std::size_t i = 0; i < pred_rows.size(); ++i) {
        out.pred.middleRows(r, pred_rows[i].rows()) = pred_rows[i];
        out.truth.middleRows(r, pred_rows[i].rows()) = truth_rows[i];
        out.centers.middleRows(r, pred_rows[i].rows()) = center_rows[i];
        r += pred_rows[i].rows();
    }
    out.spot_ids = std::move(spot_ids);
    return out;
}

MetricsReport evaluate_model(const Checkpoint& checkpoint, const DatasetBundle& bundle,
                             const EvalOptions& options) {
    PredictionSet set = predict_split(checkpoint, bundle, options);
    MetricsReport report;
    auto [pcc, mean] = pearson_per_gene(set.pred, set.truth);
    report.pcc_per_gene = pcc;
    report.pcc_mean = mean;
    auto [mse, mae] = compute_errors(set.pred, set.truth);
    report.mse = mse;
    report.mae = mae;
    report.n_spots = static_cast<int>(set.pred.rows());
    report.n_genes = static_cast<int>(set.pred.cols());
    report.config_hash = config_hash_hex(checkpoint.config_json);
    return report;
}

std::string metrics_to_json(const MetricsReport& report) {
    json j;
    j["pcc_per_gene"] = std::vector<double>(report.pcc_per_gene.data(),
                                            report.pcc_per_gene.data() + report.pcc_per_gene.size());
    j["pcc_mean"] = report.pcc_mean;
    j["mse"] = report.mse;
    j["mae"] = report.mae;
    j["n_spots"] = report.n_spots;
    j["n_genes"] = report.n_genes;
    j["config_hash"] = report.config_hash;
    return j.dump(2);
}

namespace {

// Fixed 10-color palette (tab10).
constexpr std::uint8_t kPalette[10][3] = {
    {31, 119, 180}, {255, 127, 14},  {44, 160, 44},  {214, 39, 40},  {148, 103, 189},
    {140, 86, 75},  {227, 119, 194}, {127, 127, 127}, {188, 189, 34}, {23, 190, 207}};

void draw_disc(ImageU8& img, int cx, int cy, int radius, const std::uint8_t color[3]) {
    for (int dy = -radius; dy <= radius; ++dy) {
        for (int dx = -radius; dx <= radius; ++dx) {
            if (dx * dx + dy * dy > radius * radius) continue;
            int x = cx + dx;
            int y = cy + dy;
            if (x < 0 || y < 0 || x >= img.width || y >= img.height) continue;
            for (int c = 0; c < 3; ++c) img.at(y, x, c) = color[c];
        }
    }
}

}  // namespace

std::vector<int> render_cluster_map(const Mat& pred, const Mat& centers,
                                    const std::vector<std::string>& spot_ids, int k,
                                    std::uint64_t seed, const std::filesystem::path& out_png,
                                    const std::filesystem::path& out_tsv) {
    const Eigen::Index s = pred.rows();
    if (k < 1) throw ConfigError("render_cluster_map: k must be >= 1");
    if (s < k) throw ConfigError("render_cluster_map: fewer spots than clusters");
    if (centers.rows() != s || centers.cols() != 2) {
        throw ShapeError("render_cluster_map: centers must be S x 2");
    }
    if (static_cast<Eigen::Index>(spot_ids.size()) != s) {
        throw ShapeError("render_cluster_map: spot_ids length mismatch");
    }

    KmeansResult km = fit_kmeans(pred, k, seed);

    const int radius = 4;
    const int margin = radius + 4;
    int width = static_cast<int>(std::lround(centers.col(0).maxCoeff())) + margin + 1;
    int height = static_cast<int>(std::lround(centers.col(1).maxCoeff())) + margin + 1;
    ImageU8 canvas(height, width);
    std::fill(canvas.data.begin(), canvas.data.end(), std::uint8_t{255});
    for (Eigen::Index i = 0; i < s; ++i) {
        const std::uint8_t* color = kPalette[km.assignments[i] % 10];
        draw_disc(canvas, static_cast<int>(std::lround(centers(i, 0))),
                  static_cast<int>(std::lround(centers(i, 1))), radius, color);
    }
    write_png(out_png, canvas);

    std::ofstream tsv(out_tsv);
    tsv << "spot_id\tlabel\n";
    for (Eigen::Index i = 0; i < s; ++i) {
        tsv << spot_ids[i] << '\t' << km.assignments[i] << '\n';
    }
    return km.assignments;
}

}  // namespace mmap
