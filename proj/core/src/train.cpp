#include "mmap/train.hpp"

#include <chrono>
#include <cmath>

#include "mmap/errors.hpp"

namespace mmap {

namespace {

constexpr double kPi = 3.14159265358979323846;

void validate(const TrainConfig& cfg) {
    if (cfg.epochs < 1) throw ConfigError("train: epochs must be >= 1");
    if (cfg.batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (cfg.lr_min > cfg.lr_max) throw ConfigError("train: lr_min must be <= lr_max");
    if (cfg.aug.jitter < 0) throw ConfigError("train: jitter amplitude must be >= 0");
}

struct SpotRef {
    int slide = 0;
    int spot = 0;
};

// Train-split spots whose patch window fits the model patch size.
std::vector<SpotRef> trainable_spots(const DatasetBundle& bundle, int patch) {
    std::vector<SpotRef> refs;
    for (int si = 0; si < static_cast<int>(bundle.slides.size()); ++si) {
        const SlideRecord& slide = bundle.slides[si];
        if (slide.split != Split::train) continue;
        for (int sj = 0; sj < static_cast<int>(slide.spots.size()); ++sj) {
            const SpotRecord& spot = slide.spots[sj];
            int half = patch / 2;
            if (spot.y - half >= 0 && spot.y + half <= slide.image.height && spot.x - half >= 0 &&
                spot.x + half <= slide.image.width) {
                refs.push_back({si, sj});
            }
        }
    }
    return refs;
}

double wallclock_seconds(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

void emit_epoch(std::ostream* log, std::vector<EpochLog>* out, const EpochLog& e) {
    if (log != nullptr) {
        (*log) << "epoch=" << e.epoch << " lr=" << e.lr << " l_ge=" << e.mean_lge
               << " l_mag=" << e.mean_lmag << " seconds=" << e.seconds << '\n';
        log->flush();
    }
    if (out != nullptr) out->push_back(e);
}

}  // namespace

double cosine_lr(int t, const TrainConfig& cfg) {
    if (cfg.epochs < 1) throw ConfigError("cosine_lr: epochs must be >= 1");
    if (t < 0 || t > cfg.epochs) {
        throw ConfigError("cosine_lr: epoch " + std::to_string(t) + " outside [0, " +
                          std::to_string(cfg.epochs) + "]");
    }
    return cfg.lr_min +
           0.5 * (cfg.lr_max - cfg.lr_min) * (1.0 + std::cos(kPi * t / cfg.epochs));
}

ImageU8 augment_patch(const ImageU8& patch, Rng& rng, const AugmentConfig& cfg) {
    ImageU8 out = patch;
    const int h = out.height;
    const int w = out.width;

    if (cfg.flip && rng.bernoulli(0.5)) {
        ImageU8 flipped(h, w);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                for (int c = 0; c < 3; ++c) flipped.at(y, x, c) = out.at(y, w - 1 - x, c);
            }
        }
        out = std::move(flipped);
    }

    if (cfg.rotation) {
        int quarter = static_cast<int>(rng.uniform_int(0, 3));
        for (int q = 0; q < quarter; ++q) {
            // 90 degrees clockwise; square patches keep their shape.
            ImageU8 rot(out.width, out.height);
            for (int y = 0; y < out.height; ++y) {
                for (int x = 0; x < out.width; ++x) {
                    for (int c = 0; c < 3; ++c) {
                        rot.at(x, out.height - 1 - y, c) = out.at(y, x, c);
                    }
                }
            }
            out = std::move(rot);
        }
    }

    if (cfg.jitter > 0) {
        double factor[3];
        for (int c = 0; c < 3; ++c) factor[c] = rng.uniform(1.0 - cfg.jitter, 1.0 + cfg.jitter);
        for (int y = 0; y < out.height; ++y) {
            for (int x = 0; x < out.width; ++x) {
                for (int c = 0; c < 3; ++c) {
                    double v = out.at(y, x, c) * factor[c];
                    out.at(y, x, c) =
                        static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
                }
            }
        }
    }
    return out;
}

SlideFeatures phase1_slide_features(const Phase1Model& model, const SlideRecord& slide,
                                    int patch) {
    const int d = model.encoder.cfg.d;
    const int genes = model.head.out_features();
    std::vector<int> usable;
    for (int sj = 0; sj < static_cast<int>(slide.spots.size()); ++sj) {
        const SpotRecord& spot = slide.spots[sj];
        int half = patch / 2;
        if (spot.y - half >= 0 && spot.y + half <= slide.image.height && spot.x - half >= 0 &&
            spot.x + half <= slide.image.width) {
            usable.push_back(sj);
        }
    }
    SlideFeatures out;
    out.spot_indices = usable;
    const int n = static_cast<int>(usable.size());
    out.f.resize(n, d);
    out.e0.resize(n, d);
    out.e2.resize(n, d);
    out.pred1.resize(n, genes);
    out.centers.resize(n, 2);

    Rng unused(0);  // center mode draws nothing
    for (int i = 0; i < n; ++i) {
        const SpotRecord& spot = slide.spots[usable[i]];
        ImageU8 patch_img = extract_patch(slide, {spot.x, spot.y}, patch);
        MultiMagViews views = make_multimag_views(patch_img, CropMode::center, unused);
        Graph g(/*grad_enabled=*/false);
        Phase1Outputs p1 = phase1_forward(g, model, views);
        out.f.row(i) = g.value(p1.f_row).row(0);
        out.e0.row(i) = g.value(p1.e0_row).row(0);
        out.e2.row(i) = g.value(p1.e2_row).row(0);
        out.pred1.row(i) = g.value(p1.pred1).row(0);
        out.centers(i, 0) = spot.x;
        out.centers(i, 1) = spot.y;
    }
    return out;
}

std::uint64_t bank_seed(std::uint64_t train_seed, const std::string& slide_id) {
    return derive_seed(train_seed, fnv1a64("bank"), fnv1a64(slide_id));
}

Checkpoint run_stage1(const DatasetBundle& bundle, const TrainConfig& cfg, std::ostream* log,
                      std::vector<EpochLog>* epochs_out) {
    validate(cfg);
    ModelConfig mc = cfg.model;
    mc.genes = bundle.gene_count();
    TrainConfig resolved = cfg;
    resolved.model = mc;

    std::vector<SpotRef> refs = trainable_spots(bundle, mc.patch);
    if (refs.empty()) throw ConfigError("run_stage1: train split has no usable spots");

    ModelSet models = create_models(mc, cfg.seed, /*with_phase2=*/false);
    ParamRefs params;
    models.phase1.collect(params);
    AdamOptimizer opt(params);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        auto start = std::chrono::steady_clock::now();
        double lr = cosine_lr(epoch, resolved);

        std::vector<int> order(refs.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
        Rng shuffle_rng(derive_seed(cfg.seed, fnv1a64("shuffle"), epoch));
        shuffle_rng.shuffle(order);

        double sum_lge = 0.0, sum_lmag = 0.0;
        int batch_index = 0;
        for (std::size_t pos = 0; pos < order.size(); pos += cfg.batch_size, ++batch_index) {
            std::size_t end = std::min(order.size(), pos + cfg.batch_size);
            const double inv_batch = 1.0 / static_cast<double>(end - pos);
            opt.zero_grad();
            for (std::size_t b = pos; b < end; ++b) {
                const SpotRef ref = refs[order[b]];
                const SlideRecord& slide = bundle.slides[ref.slide];
                const SpotRecord& spot = slide.spots[ref.spot];
                Rng rng(derive_seed(cfg.seed, fnv1a64("sample"), epoch, order[b]));

                ImageU8 patch = extract_patch(slide, {spot.x, spot.y}, mc.patch);
                patch = augment_patch(patch, rng, cfg.aug);
                MultiMagViews views = make_multimag_views(patch, CropMode::random, rng);

                Graph g;
                Phase1Outputs p1 = phase1_forward(g, models.phase1, views);
                Var target = g.constant(spot.expression.transpose());
                Var lge = g.mse(p1.pred1, target);
                Var lmag = g.sub(g.constant(Mat::Ones(1, 1)),
                                 g.cosine_sim(p1.f_row, p1.e0_row));
                Var loss = g.add(lge, g.scale(lmag, cfg.gamma1));

                double lge_v = g.value(lge)(0, 0);
                double lmag_v = g.value(lmag)(0, 0);
                if (!std::isfinite(lge_v) || !std::isfinite(lmag_v)) {
                    throw DivergenceError("run_stage1: non-finite loss at epoch " +
                                          std::to_string(epoch + 1) + ", batch " +
                                          std::to_string(batch_index));
                }
                sum_lge += lge_v;
                sum_lmag += lmag_v;

                g.backward(g.scale(loss, inv_batch));
            }
            opt.step(lr);
        }

        EpochLog e;
        e.epoch = epoch + 1;
        e.lr = lr;
        e.mean_lge = sum_lge / static_cast<double>(refs.size());
        e.mean_lmag = sum_lmag / static_cast<double>(refs.size());
        e.seconds = wallclock_seconds(start);
        e.steps = batch_index;
        emit_epoch(log, epochs_out, e);
    }

    return checkpoint_from_models(models, "stage1", resolved, cfg.epochs);
}

Checkpoint run_stage2(const DatasetBundle& bundle, const Checkpoint& stage1,
                      const TrainConfig& cfg, std::ostream* log,
                      std::vector<EpochLog>* epochs_out) {
    validate(cfg);
    if (stage1.stage != "stage1") throw ConfigError("run_stage2: checkpoint is not a stage-1 checkpoint");

    ModelSet models = models_from_checkpoint(stage1);
    TrainConfig resolved = cfg;
    resolved.model = models.cfg;  // phase-1 architecture is fixed by the checkpoint
    const ModelConfig& mc = models.cfg;

    models.phase1.set_frozen(true);
    models.phase2 = Phase2Model::create(mc, cfg.seed);
    // MLP2 starts from the stage-1 regression head, scaled by 3 because the
    // ensemble divides by 3: with MLP1 and MLP3 at zero, stage 2 opens at
    // exactly the stage-1 predictions.
    models.phase2->heads.mlp2.weight.value = 3.0 * models.phase1.head.weight.value;
    models.phase2->heads.mlp2.bias.value = 3.0 * models.phase1.head.bias.value;

    std::vector<SpotRef> refs = trainable_spots(bundle, mc.patch);
    if (refs.empty()) throw ConfigError("run_stage2: train split has no usable spots");

    // Banks are built once from deterministic center-crop embeddings and
    // stay fixed for the whole stage.
    struct SlideBank {
        PrototypeBank bank;
        int top_l = 0;
        double diagonal = 1.0;
    };
    std::vector<SlideBank> slide_banks(bundle.slides.size());
    PrototypeStrategy strategy = cfg.bank.retrieval == "adaptive"
                                     ? PrototypeStrategy::adaptive()
                                     : PrototypeStrategy::fixed(cfg.bank.fixed_l);
    AggregationStrategy aggregation = aggregation_from_string(cfg.bank.aggregation);
    for (int si = 0; si < static_cast<int>(bundle.slides.size()); ++si) {
        const SlideRecord& slide = bundle.slides[si];
        if (slide.split != Split::train) continue;
        SlideFeatures feats = phase1_slide_features(models.phase1, slide, mc.patch);
        if (feats.f.rows() == 0) continue;
        BankConfig bc{cfg.bank.k_min, cfg.bank.k_max};
        slide_banks[si].bank = build_bank(feats.f, feats.centers, slide.slide_id, bc,
                                          bank_seed(cfg.seed, slide.slide_id));
        slide_banks[si].top_l = choose_prototype_count(slide_banks[si].bank.K, strategy);
        slide_banks[si].diagonal = std::hypot(static_cast<double>(slide.image.height),
                                              static_cast<double>(slide.image.width));
    }

    ParamRefs params;
    models.phase2->collect(params);
    AdamOptimizer opt(params);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        auto start = std::chrono::steady_clock::now();
        double lr = cosine_lr(epoch, resolved);

        std::vector<int> order(refs.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
        Rng shuffle_rng(derive_seed(cfg.seed, fnv1a64("shuffle2"), epoch));
        shuffle_rng.shuffle(order);

        double sum_lge = 0.0, sum_lmag = 0.0;
        int batch_index = 0;
        for (std::size_t pos = 0; pos < order.size(); pos += cfg.batch_size, ++batch_index) {
            std::size_t end = std::min(order.size(), pos + cfg.batch_size);
            const double inv_batch = 1.0 / static_cast<double>(end - pos);
            opt.zero_grad();
            for (std::size_t b = pos; b < end; ++b) {
                const SpotRef ref = refs[order[b]];
                const SlideRecord& slide = bundle.slides[ref.slide];
                const SpotRecord& spot = slide.spots[ref.spot];
                const SlideBank& sb = slide_banks[ref.slide];
                if (sb.bank.K < 1) continue;
                Rng rng(derive_seed(cfg.seed, fnv1a64("sample2"), epoch, order[b]));

                ImageU8 patch = extract_patch(slide, {spot.x, spot.y}, mc.patch);
                patch = augment_patch(patch, rng, cfg.aug);
                MultiMagViews views = make_multimag_views(patch, CropMode::random, rng);

                Graph g;
                Phase1Outputs p1 = phase1_forward(g, models.phase1, views);
                Vec f_val = g.value(p1.f_row).row(0).transpose();
                PrototypeSet protos = retrieve_prototypes(f_val, sb.bank, sb.top_l);

                SpatialContext spatial;
                spatial.patch_x = spot.x;
                spatial.patch_y = spot.y;
                spatial.slide_diagonal = sb.diagonal;
                spatial.centroid_centers.resize(protos.prototypes.rows(), 2);
                for (Eigen::Index r = 0; r < spatial.centroid_centers.rows(); ++r) {
                    spatial.centroid_centers.row(r) =
                        sb.bank.centroid_centers.row(protos.indices[r]);
                }

                Var proto_var = g.constant(protos.prototypes);
                Var h = aggregate_context_var(g, p1.f_row, proto_var, &spatial, aggregation,
                                              models.phase2->glob);
                Var e_head1 = mc.mlp1_uses_e0 ? p1.e0_row : p1.e2_row;
                Var pred = models.phase2->heads.predict(g, e_head1, p1.f_row, h);
                Var target = g.constant(spot.expression.transpose());
                Var lge = g.mse(pred, target);
                Var lmag = g.sub(g.constant(Mat::Ones(1, 1)), g.cosine_sim(p1.f_row, h));
                Var loss = g.add(lge, g.scale(lmag, cfg.gamma2));

                double lge_v = g.value(lge)(0, 0);
                double lmag_v = g.value(lmag)(0, 0);
                if (!std::isfinite(lge_v) || !std::isfinite(lmag_v)) {
                    throw DivergenceError("run_stage2: non-finite loss at epoch " +
                                          std::to_string(epoch + 1) + ", batch " +
                                          std::to_string(batch_index));
                }
                sum_lge += lge_v;
                sum_lmag += lmag_v;

                g.backward(g.scale(loss, inv_batch));
            }
            opt.step(lr);
        }

        EpochLog e;
        e.epoch = epoch + 1;
        e.lr = lr;
        e.mean_lge = sum_lge / static_cast<double>(refs.size());
        e.mean_lmag = sum_lmag / static_cast<double>(refs.size());
        e.seconds = wallclock_seconds(start);
        e.steps = batch_index;
        emit_epoch(log, epochs_out, e);
    }

    std::vector<PrototypeBank> banks;
    for (const auto& sb : slide_banks) {
        if (sb.bank.K > 0) banks.push_back(sb.bank);
    }
    return checkpoint_from_models(models, "stage2", resolved, cfg.epochs, std::move(banks));
}

}  // namespace mmap
