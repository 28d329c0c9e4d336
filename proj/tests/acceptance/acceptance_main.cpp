// Acceptance suite: one line per criterion, [PASS]/[FAIL]/[SKIP].
// Exit code 0 when nothing failed. Criteria that shell out to the CLI
// need --cli; everything else runs in-process against the library.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "mmap/checkpoint.hpp"
#include "mmap/errors.hpp"
#include "mmap/eval.hpp"
#include "mmap/globalfusion.hpp"
#include "mmap/ingest.hpp"
#include "mmap/magfusion.hpp"
#include "mmap/protobank.hpp"
#include "mmap/train.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace mmap;

namespace {

struct Context {
    std::string cli;
    fs::path workdir;
    std::string her2st_root;
    int failures = 0;
    int skips = 0;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void report(Context& ctx, int number, const std::string& name, bool pass,
            const std::string& detail, double seconds) {
    std::ostringstream line;
    line << (pass ? "[PASS] " : "[FAIL] ") << "criterion " << number << ": " << name << " ("
         << detail << "; " << std::fixed << seconds << "s)";
    std::cout << line.str() << std::endl;
    if (!pass) ++ctx.failures;
}

void report_skip(Context& ctx, int number, const std::string& name, const std::string& why) {
    std::cout << "[SKIP] criterion " << number << ": " << name << " (" << why << ")" << std::endl;
    ++ctx.skips;
}

int run_cli(const Context& ctx, const std::string& args, bool deterministic = false) {
    std::string cmd;
    if (deterministic) cmd += "MMAP_DETERMINISTIC=1 ";
    cmd += ctx.cli + " " + args + " > /dev/null 2>&1";
    return std::system(cmd.c_str());
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), {});
}

Mat random_mat(int r, int c, Rng& rng, double scale = 1.0) {
    Mat m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal(0.0, scale);
    return m;
}

Vec random_vec(int n, Rng& rng) {
    Vec v(n);
    for (int i = 0; i < n; ++i) v(i) = rng.normal(0.0, 1.0);
    return v;
}

// ---------------------------------------------------------------- 1
void criterion_dataset_ingestion(Context& ctx) {
    const std::string name = "HER2st dataset ingestion";
    if (ctx.her2st_root.empty() || !fs::exists(ctx.her2st_root)) {
        report_skip(ctx, 1, name,
                    "HER2st root not present; set MMAP_HER2ST_ROOT or --her2st to enable");
        return;
    }
    auto t0 = std::chrono::steady_clock::now();
    IngestConfig cfg;  // n_hvg 1000, min_spots 1000, patch 112
    DatasetBundle bundle = load_dataset(ctx.her2st_root, cfg);
    std::set<std::string> patients;
    for (const auto& s : bundle.slides) patients.insert(s.patient_id);
    int spots = bundle.spot_count();
    int genes = bundle.gene_count();
    bool pass = bundle.slides.size() == 36 && patients.size() == 8 &&
                bundle.count_split(Split::train) == 28 && bundle.count_split(Split::test) == 8 &&
                std::abs(spots - 9612) <= 0.02 * 9612 && std::abs(genes - 785) <= 0.02 * 785;
    double secs = seconds_since(t0);
    pass = pass && secs < 600;
    std::ostringstream detail;
    detail << bundle.slides.size() << " slides, " << patients.size() << " patients, " << spots
           << " spots, " << genes << " genes, " << bundle.count_split(Split::train) << "/"
           << bundle.count_split(Split::test) << " split";
    report(ctx, 1, name, pass, detail.str(), secs);
}

// ---------------------------------------------------------------- 2
void criterion_synthetic_overfit(Context& ctx) {
    const std::string name = "synthetic stage-1 overfit";
    auto t0 = std::chrono::steady_clock::now();

    SynthConfig sc;
    sc.n_slides = 2;
    sc.spots_per_slide = 50;  // 100 spots total
    sc.n_genes = 8;
    sc.patch = 32;
    sc.image_h = 192;
    sc.image_w = 192;
    sc.sigma = 0.0;
    DatasetBundle bundle = generate_synthetic(sc, 2024);

    TrainConfig cfg;
    cfg.lr_max = 2e-3;
    cfg.epochs = 30;
    cfg.batch_size = 16;
    cfg.seed = 7;
    cfg.model.patch = 32;
    cfg.model.vit_patch = 8;
    cfg.model.d = 64;
    cfg.model.depth = 2;
    cfg.model.heads = 4;
    cfg.model.mlp_ratio = 2;
    cfg.model.fusion_layers = 2;
    cfg.model.fusion_heads = 4;
    cfg.bank.k_min = 4;
    cfg.bank.k_max = 16;

    std::vector<EpochLog> log;
    Checkpoint ckpt = run_stage1(bundle, cfg, nullptr, &log);

    EvalOptions opts;
    opts.split = Split::train;
    opts.stage1_only = true;
    MetricsReport train_report = evaluate_model(ckpt, bundle, opts);

    double first = log.front().mean_lge;
    double last = log.back().mean_lge;
    double secs = seconds_since(t0);
    bool pass = last <= 0.10 * first && train_report.pcc_mean >= 0.9 && secs < 600;
    std::ostringstream detail;
    detail << "L_ge1 epoch1=" << first << " epoch30=" << last << " (" << (100.0 * last / first)
           << "% of start), train pcc_mean=" << train_report.pcc_mean;
    report(ctx, 2, name, pass, detail.str(), secs);
}

// ---------------------------------------------------------------- 3
void criterion_gradient_suite(Context& ctx) {
    const std::string name = "analytic gradients vs central differences";
    auto t0 = std::chrono::steady_clock::now();
    Rng rng(404);

    // stage-1 loss at d=4, tau=2, g=3
    const int tau = 2, d = 4, genes = 3;
    FusionConfig fc;
    fc.n_layers = 1;
    fc.heads = 2;
    FusionModule fusion = FusionModule::create(fc, d, 71);
    Rng head_rng(72);
    Linear head = Linear::create("head", d, genes, head_rng);
    Mat t0m = random_mat(tau + 1, d, rng), t1m = random_mat(tau + 1, d, rng),
        t2m = random_mat(tau + 1, d, rng);
    Vec target1 = random_vec(genes, rng);

    ParamRefs p1;
    fusion.collect(p1);
    head.collect(p1);
    auto loss1 = [&](bool with_grad) {
        Graph g(with_grad);
        Var seq = assemble_fusion_sequence(g, g.constant(t0m), g.constant(t1m), g.constant(t2m));
        Var f_row = g.slice_rows(fusion.forward(g, seq), 0, 1);
        Var pred = head.forward(g, f_row);
        Var loss = g.add(g.mse(pred, g.constant(target1.transpose())),
                         g.scale(g.sub(g.constant(Mat::Ones(1, 1)),
                                       g.cosine_sim(f_row, g.constant(t0m.row(0)))),
                                 0.3));
        if (with_grad) g.backward(loss);
        return g.value(loss)(0, 0);
    };
    auto res1 = oracle::check_gradients(p1, loss1, 0, 11);

    // stage-2 loss at d=4, L=3, g=3 (positional variant covers every group)
    const int L = 3;
    GlobalFusionConfig gc;
    gc.heads = 2;
    GlobalFusionModule glob = GlobalFusionModule::create(gc, d, 73);
    glob.attn.wo.weight.value = random_mat(d, d, rng, 0.4);
    EnsembleHeads heads = EnsembleHeads::create(d, genes);
    Rng wrng(74);
    heads.mlp1 = Linear::create("phase2/heads/mlp1", d, genes, wrng);
    heads.mlp2 = Linear::create("phase2/heads/mlp2", d, genes, wrng);
    heads.mlp3 = Linear::create("phase2/heads/mlp3", d, genes, wrng);

    Vec f = random_vec(d, rng), e2 = random_vec(d, rng), target2 = random_vec(genes, rng);
    Mat protos = random_mat(L, d, rng);
    SpatialContext spatial;
    spatial.patch_x = 3;
    spatial.patch_y = 4;
    spatial.slide_diagonal = 50;
    spatial.centroid_centers = random_mat(L, 2, rng, 10.0);

    ParamRefs p2;
    glob.collect(p2);
    heads.collect(p2);
    auto loss2 = [&](bool with_grad) {
        Graph g(with_grad);
        Var f_row = g.constant(f.transpose());
        Var h = aggregate_context_var(g, f_row, g.constant(protos), &spatial,
                                      AggregationStrategy::cross_attn_pos, glob);
        Var pred = heads.predict(g, g.constant(e2.transpose()), f_row, h);
        Var loss = g.add(g.mse(pred, g.constant(target2.transpose())),
                         g.scale(g.sub(g.constant(Mat::Ones(1, 1)), g.cosine_sim(f_row, h)), 0.3));
        if (with_grad) g.backward(loss);
        return g.value(loss)(0, 0);
    };
    auto res2 = oracle::check_gradients(p2, loss2, 0, 75);

    double secs = seconds_since(t0);
    bool pass = res1.max_rel_error < 1e-4 && res2.max_rel_error < 1e-4 &&
                res1.entries_checked > 50 && res2.entries_checked > 50 && secs < 60;
    std::ostringstream detail;
    detail << "stage1 max_rel=" << res1.max_rel_error << " over " << res1.entries_checked
           << " entries; stage2 max_rel=" << res2.max_rel_error << " over "
           << res2.entries_checked;
    report(ctx, 3, name, pass, detail.str(), secs);
}

// ---------------------------------------------------------------- 4
void criterion_attention_invariants(Context& ctx) {
    const std::string name = "attention rows and permutation invariance";
    auto t0 = std::chrono::steady_clock::now();
    Rng rng(505);
    bool pass = true;
    std::string why;

    const int tau = 4, d = 8;
    FusionConfig fc;
    fc.n_layers = 2;
    fc.heads = 2;
    FusionModule fusion = FusionModule::create(fc, d, 81);
    GlobalFusionConfig gc;
    gc.heads = 2;
    GlobalFusionModule glob = GlobalFusionModule::create(gc, d, 82);
    glob.attn.wo.weight.value = random_mat(d, d, rng, 0.4);

    auto seq_of = [](Mat m) {
        TokenSequence s;
        s.tokens = std::move(m);
        return s;
    };

    for (int trial = 0; trial < 100 && pass; ++trial) {
        // magfusion: row stochasticity + position-0 permutation invariance
        Mat assembled = random_mat(1 + 2 * tau, d, rng);
        Mat junk = random_mat(tau + 1, d, rng);
        auto build = [&](const Mat& asmb) {
            Mat m0 = junk, m1 = junk, m2 = junk;
            m0.row(0) = asmb.row(0);
            m1.bottomRows(tau) = asmb.middleRows(1, tau);
            m2.bottomRows(tau) = asmb.middleRows(1 + tau, tau);
            return std::array<TokenSequence, 3>{seq_of(m0), seq_of(m1), seq_of(m2)};
        };
        auto base_seqs = build(assembled);
        std::vector<Mat> trace;
        FusedFeature base =
            fuse_magnifications(base_seqs[0], base_seqs[1], base_seqs[2], fusion, &trace);
        for (const Mat& attn : trace) {
            for (Eigen::Index i = 0; i < attn.rows(); ++i) {
                if (attn.row(i).minCoeff() < 0 ||
                    std::abs(attn.row(i).sum() - 1.0) > 1e-6) {
                    pass = false;
                    why = "magfusion softmax row violation";
                }
            }
        }
        std::vector<int> perm(2 * tau);
        for (int i = 0; i < 2 * tau; ++i) perm[i] = i;
        rng.shuffle(perm);
        Mat shuffled = assembled;
        for (int i = 0; i < 2 * tau; ++i) shuffled.row(1 + i) = assembled.row(1 + perm[i]);
        auto perm_seqs = build(shuffled);
        FusedFeature permuted =
            fuse_magnifications(perm_seqs[0], perm_seqs[1], perm_seqs[2], fusion);
        if ((base.f - permuted.f).cwiseAbs().maxCoeff() > 1e-6) {
            pass = false;
            why = "magfusion permutation variance";
        }

        // globalfusion: same checks on the prototype cross-attention
        const int L = 6;
        Vec f = random_vec(d, rng);
        Mat protos = random_mat(L, d, rng);
        PrototypeSet set;
        set.prototypes = protos;
        for (int i = 0; i < L; ++i) set.indices.push_back(i);
        set.similarities.assign(L, 0.0);
        std::vector<Mat> gtrace;
        EnrichedFeature h = local_global_attention(f, set, glob, &gtrace);
        for (const Mat& attn : gtrace) {
            if (attn.minCoeff() < 0 || std::abs(attn.sum() - 1.0) > 1e-6) {
                pass = false;
                why = "globalfusion softmax row violation";
            }
        }
        std::vector<int> gperm(L);
        for (int i = 0; i < L; ++i) gperm[i] = i;
        rng.shuffle(gperm);
        PrototypeSet permset = set;
        for (int i = 0; i < L; ++i) permset.prototypes.row(i) = protos.row(gperm[i]);
        EnrichedFeature hp = local_global_attention(f, permset, glob);
        if ((h.h - hp.h).cwiseAbs().maxCoeff() > 1e-6) {
            pass = false;
            why = "globalfusion permutation variance";
        }
    }
    report(ctx, 4, name, pass, pass ? "100 random instances clean" : why, seconds_since(t0));
}

// ---------------------------------------------------------------- 5
void criterion_clustering_retrieval(Context& ctx) {
    const std::string name = "k-means and retrieval oracles";
    auto t0 = std::chrono::steady_clock::now();
    Rng rng(606);
    bool pass = true;
    std::string why;
    double worst_inertia_gap = 0;

    for (int trial = 0; trial < 50 && pass; ++trial) {
        int n = 8 + static_cast<int>(rng.uniform_index(57));  // <= 64
        int d = 2 + static_cast<int>(rng.uniform_index(7));   // <= 8
        int k = 1 + static_cast<int>(rng.uniform_index(std::min(n, 10)));
        Mat emb = random_mat(n, d, rng, 2.0);
        Mat init = kmeans_pp_init(emb, k, 1000 + trial);
        KmeansResult mine = lloyd_from_init(emb, init);
        auto ref = oracle::reference_lloyd(emb, init);
        double gap = std::abs(mine.inertia - ref.inertia);
        worst_inertia_gap = std::max(worst_inertia_gap, gap);
        if (gap > 1e-9) {
            pass = false;
            why = "inertia gap " + std::to_string(gap);
        }
    }

    int retrieval_checked = 0;
    for (int trial = 0; trial < 1000 && pass; ++trial) {
        int k = 2 + static_cast<int>(rng.uniform_index(40));
        int d = 2 + static_cast<int>(rng.uniform_index(15));
        int l = 1 + static_cast<int>(rng.uniform_index(k));
        PrototypeBank bank;
        bank.K = k;
        bank.centroids = random_mat(k, d, rng);
        Vec f = random_vec(d, rng);
        PrototypeSet mine = retrieve_prototypes(f, bank, l);
        auto ranked = oracle::cosine_ranking(f, bank.centroids);
        for (int i = 0; i < l; ++i) {
            if (mine.indices[i] != ranked[i].second) {
                pass = false;
                why = "retrieval order mismatch at trial " + std::to_string(trial);
                break;
            }
        }
        ++retrieval_checked;
    }

    std::ostringstream detail;
    detail << "50 k-means instances (worst inertia gap " << worst_inertia_gap << "), "
           << retrieval_checked << " retrieval instances";
    report(ctx, 5, name, pass, pass ? detail.str() : why, seconds_since(t0));
}

// ---------------------------------------------------------------- 6
void criterion_loss_identities(Context& ctx) {
    const std::string name = "magnification loss identities";
    auto t0 = std::chrono::steady_clock::now();
    Rng rng(707);
    bool pass = true;
    std::string why;

    for (int trial = 0; trial < 200 && pass; ++trial) {
        int d = 2 + static_cast<int>(rng.uniform_index(15));
        Vec f = random_vec(d, rng);
        if (f.norm() < 1e-6) continue;
        double c = rng.uniform(1e-3, 1e3);

        if (std::abs(magnification_alignment_loss(f, c * f)) > 1e-12) {
            pass = false;
            why = "colinear pair not 0";
        }
        if (std::abs(magnification_alignment_loss(f, -c * f) - 2.0) > 1e-12) {
            pass = false;
            why = "antiparallel pair not 2";
        }
        // orthogonal witness: swap two coordinates and negate one
        Vec g = Vec::Zero(d);
        g(0) = -f(1);
        g(1) = f(0);
        if (g.norm() > 1e-6 && std::abs(magnification_alignment_loss(f.head(2).eval(),
                                                                     g.head(2).eval()) -
                                        1.0) > 1e-12) {
            pass = false;
            why = "orthogonal pair not 1";
        }
    }
    report(ctx, 6, name, pass, pass ? "0/1/2 identities and scale invariance hold" : why,
           seconds_since(t0));
}

// ---------------------------------------------------------------- 7
void criterion_adaptive_rules(Context& ctx) {
    const std::string name = "adaptive-L and cluster-count rules";
    auto t0 = std::chrono::steady_clock::now();
    bool pass = true;
    std::string why;

    for (int k = 1; k <= 80; ++k) {
        int expected = std::max(1, static_cast<int>(std::lround(0.5 * k)));
        if (choose_prototype_count(k, PrototypeStrategy::adaptive()) != expected) {
            pass = false;
            why = "adaptive L wrong at K=" + std::to_string(k);
            break;
        }
    }
    for (int n = 1; n <= 10000 && pass; ++n) {
        int k = choose_cluster_count(n);
        if (k > n || k > 80 || k < 1 || (n >= 32 && k < 32)) {
            pass = false;
            why = "cluster count violation at N=" + std::to_string(n);
        }
    }
    report(ctx, 7, name, pass, pass ? "K in [1,80] and N in [1,10000] verified" : why,
           seconds_since(t0));
}

// ---------------------------------------------------------------- 8
void criterion_freeze_and_determinism(Context& ctx) {
    const std::string name = "freezing and end-to-end determinism";
    if (ctx.cli.empty()) {
        report_skip(ctx, 8, name, "no --cli given");
        return;
    }
    auto t0 = std::chrono::steady_clock::now();
    bool pass = true;
    std::string why;

    // freezing contract (in-process)
    {
        SynthConfig sc;
        sc.n_slides = 2;
        sc.spots_per_slide = 12;
        sc.n_genes = 4;
        sc.patch = 16;
        sc.image_h = 80;
        sc.image_w = 80;
        DatasetBundle bundle = generate_synthetic(sc, 99);
        TrainConfig cfg;
        cfg.lr_max = 1e-3;
        cfg.epochs = 2;
        cfg.batch_size = 8;
        cfg.model.patch = 16;
        cfg.model.vit_patch = 8;
        cfg.model.d = 16;
        cfg.model.depth = 1;
        cfg.model.heads = 2;
        cfg.model.mlp_ratio = 2;
        cfg.model.fusion_layers = 1;
        cfg.model.fusion_heads = 2;
        cfg.model.glob_heads = 2;
        cfg.bank.k_min = 2;
        cfg.bank.k_max = 4;
        Checkpoint s1 = run_stage1(bundle, cfg);
        Checkpoint s2 = run_stage2(bundle, s1, cfg);
        for (const auto& [nm, m] : s2.arrays) {
            if (nm.rfind("phase1/", 0) == 0 && m != s1.arrays.at(nm)) {
                pass = false;
                why = "phase-1 parameter " + nm + " changed during stage 2";
            }
        }
    }

    // byte-identical pipeline outputs across two runs
    fs::path base = ctx.workdir / "determinism";
    fs::remove_all(base);
    fs::create_directories(base);
    fs::path cfg_file = base / "cfg.toml";
    std::ofstream(cfg_file) << "[train]\nlr_max = 1e-3\nepochs = 2\nbatch_size = 8\nseed = 5\n"
                               "[model]\npatch = 16\nvit_patch = 8\nd = 16\ndepth = 1\nheads = 2\n"
                               "mlp_ratio = 2\nfusion_layers = 1\nfusion_heads = 2\nglob_heads = 2\n"
                               "[bank]\nk_min = 2\nk_max = 4\n";
    for (const char* run : {"r1", "r2"}) {
        fs::path dir = base / run;
        std::string d = dir.string();
        if (run_cli(ctx, "synth --out " + d + "/data --seed 3 --slides 2 --spots 12 --genes 4 "
                             "--patch 16 --image-size 80 --sigma 0 --test-slides 1",
                    true) != 0 ||
            run_cli(ctx, "train1 --data " + d + "/data --out " + d + "/s1 --config " +
                             cfg_file.string(),
                    true) != 0 ||
            run_cli(ctx, "train2 --data " + d + "/data --stage1 " + d + "/s1/model.ckpt --out " +
                             d + "/s2 --config " + cfg_file.string(),
                    true) != 0 ||
            run_cli(ctx, "eval --data " + d + "/data --checkpoint " + d + "/s2/model.ckpt --out " +
                             d + "/eval",
                    true) != 0) {
            pass = false;
            why = "pipeline command failed in " + d;
            break;
        }
    }
    if (pass) {
        std::string m1 = slurp(base / "r1" / "eval" / "metrics.json");
        std::string m2 = slurp(base / "r2" / "eval" / "metrics.json");
        if (m1.empty() || m1 != m2) {
            pass = false;
            why = "metrics.json differs between identical runs";
        }
        std::string c1 = slurp(base / "r1" / "s2" / "model.ckpt");
        std::string c2 = slurp(base / "r2" / "s2" / "model.ckpt");
        if (c1.empty() || c1 != c2) {
            pass = false;
            why = "model.ckpt differs between identical runs";
        }
    }
    report(ctx, 8, name, pass,
           pass ? "phase-1 bit-identical; metrics.json and model.ckpt byte-identical" : why,
           seconds_since(t0));
}

// ---------------------------------------------------------------- 9
void criterion_metric_oracles(Context& ctx) {
    const std::string name = "metric oracles";
    auto t0 = std::chrono::steady_clock::now();
    Rng rng(808);
    bool pass = true;
    std::string why;
    double worst = 0;

    for (int trial = 0; trial < 100 && pass; ++trial) {
        int s = 3 + static_cast<int>(rng.uniform_index(40));
        int g = 1 + static_cast<int>(rng.uniform_index(8));
        Mat pred = random_mat(s, g, rng, 2.0);
        Mat truth = random_mat(s, g, rng, 2.0);

        auto [pcc, mean] = pearson_per_gene(pred, truth);
        for (int j = 0; j < g; ++j) {
            std::vector<double> a(s), b(s);
            for (int i = 0; i < s; ++i) {
                a[i] = pred(i, j);
                b[i] = truth(i, j);
            }
            double gap = std::abs(pcc(j) - oracle::pearson(a, b));
            worst = std::max(worst, gap);
            if (gap > 1e-10) {
                pass = false;
                why = "pcc oracle gap " + std::to_string(gap);
            }
        }

        auto [mse, mae] = compute_errors(pred, truth);
        double mse_ref = 0, mae_ref = 0;
        for (int i = 0; i < s; ++i) {
            for (int j = 0; j < g; ++j) {
                double dd = pred(i, j) - truth(i, j);
                mse_ref += dd * dd;
                mae_ref += std::abs(dd);
            }
        }
        mse_ref /= s * g;
        mae_ref /= s * g;
        if (std::abs(mse - mse_ref) > 1e-10 || std::abs(mae - mae_ref) > 1e-10) {
            pass = false;
            why = "error metrics deviate from direct formula";
        }
        if (mae * mae > mse + 1e-12) {
            pass = false;
            why = "mae^2 <= mse violated";
        }
    }
    std::ostringstream detail;
    detail << "100 instances, worst pcc gap " << worst;
    report(ctx, 9, name, pass, pass ? detail.str() : why, seconds_since(t0));
}

// ---------------------------------------------------------------- 10
void criterion_ablation_harness(Context& ctx) {
    const std::string name = "ablation harness";
    if (ctx.cli.empty()) {
        report_skip(ctx, 10, name, "no --cli given");
        return;
    }
    auto t0 = std::chrono::steady_clock::now();
    bool pass = true;
    std::string why;

    fs::path base = ctx.workdir / "ablation";
    fs::remove_all(base);
    fs::create_directories(base);
    fs::path cfg_file = base / "cfg.toml";
    std::ofstream(cfg_file)
        << "[train]\nlr_max = 2e-3\nepochs = 8\nbatch_size = 16\nseed = 9\n"
           "[model]\npatch = 16\nvit_patch = 8\nd = 32\ndepth = 1\nheads = 2\nmlp_ratio = 2\n"
           "fusion_layers = 1\nfusion_heads = 2\nglob_heads = 2\n"
           "[bank]\nk_min = 4\nk_max = 8\n";
    std::string d = base.string();

    if (run_cli(ctx, "synth --out " + d + "/data --seed 13 --slides 3 --spots 64 --genes 8 "
                         "--patch 16 --image-size 128 --sigma 0.05 --test-slides 1 --pattern blobs",
                true) != 0 ||
        run_cli(ctx, "train1 --data " + d + "/data --out " + d + "/s1 --config " +
                         cfg_file.string() + " --epochs 12",
                true) != 0 ||
        run_cli(ctx, "ablate --axis neighbors --data " + d + "/data --stage1 " + d +
                         "/s1/model.ckpt --out " + d + "/neighbors --config " + cfg_file.string(),
                true) != 0 ||
        run_cli(ctx, "ablate --axis aggregation --data " + d + "/data --stage1 " + d +
                         "/s1/model.ckpt --out " + d + "/aggregation --config " + cfg_file.string(),
                true) != 0) {
        report(ctx, 10, name, false, "a CLI step failed", seconds_since(t0));
        return;
    }

    auto parse_csv = [&](const fs::path& p, std::vector<std::string>& variants,
                         std::vector<std::array<double, 3>>& rows) {
        std::ifstream in(p);
        std::string line;
        std::getline(in, line);
        if (line != "variant,pcc_mean,mse,mae") return false;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            std::stringstream ss(line);
            std::string v, a, b, c;
            std::getline(ss, v, ',');
            std::getline(ss, a, ',');
            std::getline(ss, b, ',');
            std::getline(ss, c, ',');
            variants.push_back(v);
            rows.push_back({std::stod(a), std::stod(b), std::stod(c)});
        }
        return true;
    };

    std::vector<std::string> nvars, avars;
    std::vector<std::array<double, 3>> nrows, arows;
    if (!parse_csv(base / "neighbors" / "ablation.csv", nvars, nrows) ||
        !parse_csv(base / "aggregation" / "ablation.csv", avars, arows)) {
        pass = false;
        why = "ablation.csv missing or malformed";
    }
    if (pass && (nvars != std::vector<std::string>{"4", "8", "16", "32", "adaptive"} ||
                 avars != std::vector<std::string>{"mean", "sum", "cross_attn", "cross_attn_pos"})) {
        pass = false;
        why = "unexpected grid rows";
    }
    if (pass) {
        for (const auto& r : nrows) {
            for (double v : r) {
                if (!std::isfinite(v)) {
                    pass = false;
                    why = "non-finite metric in neighbor grid";
                }
            }
        }
        for (const auto& r : arows) {
            for (double v : r) {
                if (!std::isfinite(v)) {
                    pass = false;
                    why = "non-finite metric in aggregation grid";
                }
            }
        }
    }
    double cross_mse = 0, mean_mse = 0;
    if (pass) {
        for (std::size_t i = 0; i < avars.size(); ++i) {
            if (avars[i] == "cross_attn") cross_mse = arows[i][1];
            if (avars[i] == "mean") mean_mse = arows[i][1];
        }
        if (!(cross_mse <= mean_mse)) {
            pass = false;
            why = "cross_attn mse " + std::to_string(cross_mse) + " > mean mse " +
                  std::to_string(mean_mse);
        }
    }
    std::ostringstream detail;
    detail << "5-row neighbor grid, 4-row aggregation grid; cross_attn mse=" << cross_mse
           << " <= mean mse=" << mean_mse;
    report(ctx, 10, name, pass, pass ? detail.str() : why, seconds_since(t0));
}

}  // namespace

int main(int argc, char** argv) {
    Context ctx;
    for (int i = 1; i < argc; ++i) {
        std::string arg = argv[i];
        if (arg == "--cli" && i + 1 < argc) ctx.cli = argv[++i];
        else if (arg == "--workdir" && i + 1 < argc) ctx.workdir = argv[++i];
        else if (arg == "--her2st" && i + 1 < argc) ctx.her2st_root = argv[++i];
    }
    if (ctx.her2st_root.empty()) {
        if (const char* env = std::getenv("MMAP_HER2ST_ROOT")) ctx.her2st_root = env;
    }
    if (ctx.workdir.empty()) ctx.workdir = fs::temp_directory_path() / "mmap_acceptance";
    fs::create_directories(ctx.workdir);

    try {
        criterion_dataset_ingestion(ctx);
        criterion_synthetic_overfit(ctx);
        criterion_gradient_suite(ctx);
        criterion_attention_invariants(ctx);
        criterion_clustering_retrieval(ctx);
        criterion_loss_identities(ctx);
        criterion_adaptive_rules(ctx);
        criterion_freeze_and_determinism(ctx);
        criterion_metric_oracles(ctx);
        criterion_ablation_harness(ctx);
    } catch (const std::exception& e) {
        std::cout << "[FAIL] acceptance aborted: " << e.what() << std::endl;
        return 1;
    }

    std::cout << (ctx.failures == 0 ? "ACCEPTANCE PASSED" : "ACCEPTANCE FAILED") << " ("
              << ctx.failures << " failures, " << ctx.skips << " skips)" << std::endl;
    return ctx.failures == 0 ? 0 : 1;
}
