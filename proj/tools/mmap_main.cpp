#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <set>

#include "mmap/checkpoint.hpp"
#include "mmap/config.hpp"
#include "mmap/errors.hpp"
#include "mmap/eval.hpp"
#include "mmap/ingest.hpp"
#include "mmap/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string now_iso8601() {
    auto now = std::chrono::system_clock::now();
    std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

bool deterministic_mode() {
    const char* v = std::getenv("MMAP_DETERMINISTIC");
    return v != nullptr && std::string(v) == "1";
}

struct ManifestWriter {
    std::string command;
    std::string config_path;
    json config = json::object();
    std::uint64_t seed = 0;
    fs::path out_dir;
    std::string started_at = now_iso8601();

    void write() const {
        json m;
        m["command"] = command;
        m["config_path"] = config_path;
        m["config"] = config;
        m["seed"] = seed;
        m["output_directory"] = out_dir.string();
        m["started_at"] = started_at;
        m["finished_at"] = now_iso8601();
        m["deterministic"] = deterministic_mode();
        std::ofstream out(out_dir / "run_manifest.json");
        out << m.dump(2) << '\n';
    }
};

// Options shared by the training-family commands.
struct TrainCli {
    std::string data;
    std::string out;
    std::string config_path;
    CLI::App* cmd = nullptr;

    double lr_max = 0, lr_min = 0, gamma1 = 0, gamma2 = 0, jitter = 0;
    long long epochs = 0, batch_size = 0, seed = 0;
    std::string retrieval, aggregation;
    long long fixed_l = 0;
    bool has_bank_options = false;

    void attach(CLI::App* app, bool with_bank_options) {
        cmd = app;
        has_bank_options = with_bank_options;
        app->add_option("--data", data, "dataset root directory")->required();
        app->add_option("--out", out, "output directory")->required();
        app->add_option("--config", config_path, "key = value config file");
        app->add_option("--epochs", epochs, "override train.epochs");
        app->add_option("--batch-size", batch_size, "override train.batch_size");
        app->add_option("--lr-max", lr_max, "override train.lr_max");
        app->add_option("--lr-min", lr_min, "override train.lr_min");
        app->add_option("--gamma1", gamma1, "override train.gamma1");
        app->add_option("--gamma2", gamma2, "override train.gamma2");
        app->add_option("--seed", seed, "override train.seed");
        app->add_option("--jitter", jitter, "override augment.jitter");
        if (with_bank_options) {
            app->add_option("--retrieval", retrieval, "override bank.retrieval (adaptive|fixed)");
            app->add_option("--fixed-l", fixed_l, "override bank.fixed_l");
            app->add_option("--aggregation", aggregation,
                            "override bank.aggregation (cross_attn|cross_attn_pos|mean|sum)");
        }
    }

    mmap::TrainConfig resolve() const {
        mmap::TrainConfig cfg;
        if (!config_path.empty()) {
            mmap::apply_config_file(cfg, mmap::parse_config_file(config_path));
        }
        if (cmd->count("--epochs")) cfg.epochs = static_cast<int>(epochs);
        if (cmd->count("--batch-size")) cfg.batch_size = static_cast<int>(batch_size);
        if (cmd->count("--lr-max")) cfg.lr_max = lr_max;
        if (cmd->count("--lr-min")) cfg.lr_min = lr_min;
        if (cmd->count("--gamma1")) cfg.gamma1 = gamma1;
        if (cmd->count("--gamma2")) cfg.gamma2 = gamma2;
        if (cmd->count("--seed")) cfg.seed = static_cast<std::uint64_t>(seed);
        if (cmd->count("--jitter")) cfg.aug.jitter = jitter;
        if (!has_bank_options) return cfg;
        if (cmd->count("--retrieval")) {
            if (retrieval != "adaptive" && retrieval != "fixed") {
                throw mmap::ConfigError("--retrieval must be adaptive or fixed");
            }
            cfg.bank.retrieval = retrieval;
        }
        if (cmd->count("--fixed-l")) cfg.bank.fixed_l = static_cast<int>(fixed_l);
        if (cmd->count("--aggregation")) {
            mmap::aggregation_from_string(aggregation);  // validates
            cfg.bank.aggregation = aggregation;
        }
        return cfg;
    }
};

mmap::DatasetBundle load_for_training(const std::string& root, const mmap::TrainConfig& cfg,
                                      long long n_hvg, long long min_spots) {
    mmap::IngestConfig ic;
    ic.n_hvg = static_cast<int>(n_hvg);
    ic.min_spots = static_cast<int>(min_spots);
    ic.patch = cfg.model.patch;
    return mmap::load_dataset(root, ic);
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    out << text;
    if (text.empty() || text.back() != '\n') out << '\n';
}

json metrics_json_object(const mmap::MetricsReport& r) {
    return json::parse(mmap::metrics_to_json(r));
}

int dispatch(CLI::App& app, int argc, char** argv);

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"MMAP: two-phase prediction of spot-level gene expression from histology patches"};
    app.require_subcommand(1);
    try {
        return dispatch(app, argc, argv);
    } catch (const mmap::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return 1;
    }
}

namespace {

int dispatch(CLI::App& app, int argc, char** argv) {
    // ---- synth ----
    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset on disk");
    std::string synth_out, synth_pattern = "field";
    long long synth_seed = 7, synth_slides = 4, synth_spots = 64, synth_genes = 8;
    long long synth_patch = 32, synth_image = 256, synth_test = 1;
    double synth_sigma = 0.05;
    synth->add_option("--out", synth_out, "dataset root to create")->required();
    synth->add_option("--seed", synth_seed, "generator seed");
    synth->add_option("--slides", synth_slides, "number of slides");
    synth->add_option("--spots", synth_spots, "spots per slide");
    synth->add_option("--genes", synth_genes, "gene count");
    synth->add_option("--patch", synth_patch, "patch size p");
    synth->add_option("--image-size", synth_image, "slide image side");
    synth->add_option("--sigma", synth_sigma, "expression noise std");
    synth->add_option("--test-slides", synth_test, "slides reserved for the test split");
    synth->add_option("--pattern", synth_pattern, "image pattern: field|blobs");

    // ---- ingest ----
    auto* ingest = app.add_subcommand("ingest", "load, preprocess and summarize a dataset");
    std::string ingest_data, ingest_out;
    long long ingest_nhvg = 1000, ingest_minspots = 1000, ingest_patch = 112;
    ingest->add_option("--data", ingest_data, "dataset root")->required();
    ingest->add_option("--out", ingest_out, "output directory")->required();
    ingest->add_option("--n-hvg", ingest_nhvg, "highly-variable genes to keep (0 = all)");
    ingest->add_option("--min-spots", ingest_minspots, "min spots a gene must be expressed in");
    ingest->add_option("--patch", ingest_patch, "patch size used for the boundary filter");

    // ---- train1 ----
    auto* train1 = app.add_subcommand("train1", "stage 1: train encoder + fusion + head");
    TrainCli t1;
    t1.attach(train1, /*with_bank_options=*/false);
    long long t1_nhvg = 0, t1_minspots = 0;
    train1->add_option("--n-hvg", t1_nhvg, "HVG count for loading (0 = all)");
    train1->add_option("--min-spots", t1_minspots, "min-spot gene filter for loading");

    // ---- bank ----
    auto* bank = app.add_subcommand("bank", "build and persist per-slide prototype banks");
    std::string bank_data, bank_stage1, bank_out;
    long long bank_nhvg = 0, bank_minspots = 0;
    bank->add_option("--data", bank_data, "dataset root")->required();
    bank->add_option("--stage1", bank_stage1, "stage-1 checkpoint")->required();
    bank->add_option("--out", bank_out, "output directory")->required();
    bank->add_option("--n-hvg", bank_nhvg, "HVG count for loading (0 = all)");
    bank->add_option("--min-spots", bank_minspots, "min-spot gene filter for loading");

    // ---- train2 ----
    auto* train2 = app.add_subcommand("train2", "stage 2: freeze phase 1, train global fusion");
    TrainCli t2;
    t2.attach(train2, /*with_bank_options=*/true);
    std::string t2_stage1;
    long long t2_nhvg = 0, t2_minspots = 0;
    train2->add_option("--stage1", t2_stage1, "stage-1 checkpoint")->required();
    train2->add_option("--n-hvg", t2_nhvg, "HVG count for loading (0 = all)");
    train2->add_option("--min-spots", t2_minspots, "min-spot gene filter for loading");

    // ---- eval ----
    auto* eval_cmd = app.add_subcommand("eval", "compute PCC/MSE/MAE on a split");
    std::string eval_data, eval_ckpt, eval_out, eval_split = "test", eval_compare;
    bool eval_stage1_only = false;
    long long eval_nhvg = 0, eval_minspots = 0;
    eval_cmd->add_option("--data", eval_data, "dataset root")->required();
    eval_cmd->add_option("--checkpoint", eval_ckpt, "model checkpoint")->required();
    eval_cmd->add_option("--out", eval_out, "output directory")->required();
    eval_cmd->add_option("--split", eval_split, "split to evaluate: test|train");
    eval_cmd->add_flag("--stage1-only", eval_stage1_only, "use the stage-1 head only");
    eval_cmd->add_option("--compare", eval_compare, "second checkpoint for a comparison report");
    eval_cmd->add_option("--n-hvg", eval_nhvg, "HVG count for loading (0 = all)");
    eval_cmd->add_option("--min-spots", eval_minspots, "min-spot gene filter for loading");

    // ---- viz ----
    auto* viz = app.add_subcommand("viz", "render a predicted-expression cluster map");
    std::string viz_data, viz_ckpt, viz_out, viz_slide, viz_split = "test";
    long long viz_k = 5, viz_seed = -1, viz_nhvg = 0, viz_minspots = 0;
    viz->add_option("--data", viz_data, "dataset root")->required();
    viz->add_option("--checkpoint", viz_ckpt, "model checkpoint")->required();
    viz->add_option("--out", viz_out, "output directory")->required();
    viz->add_option("--slide", viz_slide, "slide id (default: first slide of the split)");
    viz->add_option("--split", viz_split, "split to draw from: test|train");
    viz->add_option("--k", viz_k, "number of clusters");
    viz->add_option("--seed", viz_seed, "clustering seed (default: checkpoint seed)");
    viz->add_option("--n-hvg", viz_nhvg, "HVG count for loading (0 = all)");
    viz->add_option("--min-spots", viz_minspots, "min-spot gene filter for loading");

    // ---- ablate ----
    auto* ablate = app.add_subcommand("ablate", "run the neighbor-count or aggregation grid");
    TrainCli ta;
    ta.attach(ablate, /*with_bank_options=*/false);
    std::string ablate_axis = "neighbors", ablate_stage1;
    long long ab_nhvg = 0, ab_minspots = 0;
    ablate->add_option("--axis", ablate_axis, "grid axis: neighbors|aggregation")->required();
    ablate->add_option("--stage1", ablate_stage1, "stage-1 checkpoint")->required();
    ablate->add_option("--n-hvg", ab_nhvg, "HVG count for loading (0 = all)");
    ablate->add_option("--min-spots", ab_minspots, "min-spot gene filter for loading");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    if (synth->parsed()) {
        mmap::SynthConfig sc;
        sc.n_slides = static_cast<int>(synth_slides);
        sc.spots_per_slide = static_cast<int>(synth_spots);
        sc.n_genes = static_cast<int>(synth_genes);
        sc.patch = static_cast<int>(synth_patch);
        sc.image_h = static_cast<int>(synth_image);
        sc.image_w = static_cast<int>(synth_image);
        sc.sigma = synth_sigma;
        sc.n_test_slides = static_cast<int>(synth_test);
        if (synth_pattern == "field") sc.pattern = mmap::SynthPattern::field;
        else if (synth_pattern == "blobs") sc.pattern = mmap::SynthPattern::blobs;
        else throw mmap::ConfigError("--pattern must be field or blobs");

        fs::create_directories(synth_out);
        mmap::DatasetBundle bundle =
            mmap::generate_synthetic(sc, static_cast<std::uint64_t>(synth_seed));
        mmap::write_dataset(synth_out, bundle);

        ManifestWriter mw;
        mw.command = "synth";
        mw.seed = static_cast<std::uint64_t>(synth_seed);
        mw.out_dir = synth_out;
        mw.config = {{"slides", sc.n_slides},   {"spots_per_slide", sc.spots_per_slide},
                     {"genes", sc.n_genes},     {"patch", sc.patch},
                     {"image_size", sc.image_h}, {"sigma", sc.sigma},
                     {"test_slides", sc.n_test_slides}, {"pattern", synth_pattern}};
        mw.write();
        std::cout << "wrote synthetic dataset: " << bundle.slides.size() << " slides, "
                  << bundle.spot_count() << " spots, " << bundle.gene_count() << " genes\n";
        return 0;
    }

    if (ingest->parsed()) {
        mmap::IngestConfig ic;
        ic.n_hvg = static_cast<int>(ingest_nhvg);
        ic.min_spots = static_cast<int>(ingest_minspots);
        ic.patch = static_cast<int>(ingest_patch);
        mmap::DatasetBundle bundle = mmap::load_dataset(ingest_data, ic);

        std::set<std::string> patients;
        for (const auto& s : bundle.slides) patients.insert(s.patient_id);

        json summary;
        summary["slides"] = bundle.slides.size();
        summary["patients"] = patients.size();
        summary["spots"] = bundle.spot_count();
        summary["genes"] = bundle.gene_count();
        summary["train_slides"] = bundle.count_split(mmap::Split::train);
        summary["test_slides"] = bundle.count_split(mmap::Split::test);
        summary["genes_total"] = bundle.preprocessing_log.genes_total;
        summary["genes_after_hvg"] = bundle.preprocessing_log.genes_after_hvg;
        summary["genes_after_min_spots"] = bundle.preprocessing_log.genes_after_min_spots;
        summary["spots_skipped_boundary"] = bundle.preprocessing_log.spots_skipped_boundary;

        fs::create_directories(ingest_out);
        write_text(fs::path(ingest_out) / "ingest_summary.json", summary.dump(2));
        ManifestWriter mw;
        mw.command = "ingest";
        mw.out_dir = ingest_out;
        mw.config = {{"n_hvg", ic.n_hvg}, {"min_spots", ic.min_spots}, {"patch", ic.patch}};
        mw.write();
        std::cout << summary.dump(2) << '\n';
        return 0;
    }

    if (train1->parsed()) {
        mmap::TrainConfig cfg = t1.resolve();
        mmap::DatasetBundle bundle = load_for_training(t1.data, cfg, t1_nhvg, t1_minspots);
        fs::create_directories(t1.out);
        std::ofstream log(fs::path(t1.out) / "train_log.txt");
        mmap::Checkpoint ckpt = mmap::run_stage1(bundle, cfg, &log);
        mmap::save_checkpoint(fs::path(t1.out) / "model.ckpt", ckpt);

        ManifestWriter mw;
        mw.command = "train1";
        mw.config_path = t1.config_path;
        mw.config = json::parse(ckpt.config_json);
        mw.seed = cfg.seed;
        mw.out_dir = t1.out;
        mw.write();
        std::cout << "stage-1 checkpoint written to " << (fs::path(t1.out) / "model.ckpt") << '\n';
        return 0;
    }

    if (bank->parsed()) {
        mmap::Checkpoint stage1 = mmap::load_checkpoint(bank_stage1);
        mmap::TrainConfig cfg = mmap::train_config_from_json(stage1.config_json);
        mmap::DatasetBundle bundle = load_for_training(bank_data, cfg, bank_nhvg, bank_minspots);
        mmap::ModelSet models = mmap::models_from_checkpoint(stage1);

        fs::path bank_dir = fs::path(bank_out) / "banks";
        fs::create_directories(bank_dir);
        std::string hash = mmap::config_hash_hex(stage1.config_json);
        int written = 0;
        for (const auto& slide : bundle.slides) {
            if (slide.split != mmap::Split::train) continue;
            mmap::SlideFeatures feats =
                mmap::phase1_slide_features(models.phase1, slide, models.cfg.patch);
            if (feats.f.rows() == 0) continue;
            mmap::BankConfig bc{cfg.bank.k_min, cfg.bank.k_max};
            std::uint64_t seed = mmap::bank_seed(stage1.seed, slide.slide_id);
            mmap::PrototypeBank pb =
                mmap::build_bank(feats.f, feats.centers, slide.slide_id, bc, seed);
            mmap::save_bank(bank_dir / (slide.slide_id + ".bank"), pb, seed, hash);
            ++written;
        }
        ManifestWriter mw;
        mw.command = "bank";
        mw.config = json::parse(stage1.config_json);
        mw.seed = stage1.seed;
        mw.out_dir = bank_out;
        mw.write();
        std::cout << "wrote " << written << " prototype banks to " << bank_dir << '\n';
        return 0;
    }

    if (train2->parsed()) {
        mmap::Checkpoint stage1 = mmap::load_checkpoint(t2_stage1);
        mmap::TrainConfig cfg = t2.resolve();
        mmap::DatasetBundle bundle = load_for_training(
            t2.data, mmap::train_config_from_json(stage1.config_json), t2_nhvg, t2_minspots);
        fs::create_directories(t2.out);
        std::ofstream log(fs::path(t2.out) / "train_log.txt");
        mmap::Checkpoint ckpt = mmap::run_stage2(bundle, stage1, cfg, &log);
        mmap::save_checkpoint(fs::path(t2.out) / "model.ckpt", ckpt);

        ManifestWriter mw;
        mw.command = "train2";
        mw.config_path = t2.config_path;
        mw.config = json::parse(ckpt.config_json);
        mw.seed = cfg.seed;
        mw.out_dir = t2.out;
        mw.write();
        std::cout << "stage-2 checkpoint written to " << (fs::path(t2.out) / "model.ckpt") << '\n';
        return 0;
    }

    if (eval_cmd->parsed()) {
        if (eval_split != "test" && eval_split != "train") {
            throw mmap::ConfigError("--split must be test or train");
        }
        mmap::Checkpoint ckpt = mmap::load_checkpoint(eval_ckpt);
        mmap::TrainConfig cfg = mmap::train_config_from_json(ckpt.config_json);
        mmap::DatasetBundle bundle = load_for_training(eval_data, cfg, eval_nhvg, eval_minspots);

        mmap::EvalOptions opts;
        opts.split = eval_split == "test" ? mmap::Split::test : mmap::Split::train;
        opts.stage1_only = eval_stage1_only;
        mmap::MetricsReport report = mmap::evaluate_model(ckpt, bundle, opts);

        fs::create_directories(eval_out);
        write_text(fs::path(eval_out) / "metrics.json", mmap::metrics_to_json(report));

        if (!eval_compare.empty()) {
            mmap::Checkpoint ref = mmap::load_checkpoint(eval_compare);
            mmap::MetricsReport ref_report = mmap::evaluate_model(ref, bundle, opts);
            json cmp;
            cmp["primary"] = metrics_json_object(report);
            cmp["reference"] = metrics_json_object(ref_report);
            write_text(fs::path(eval_out) / "metrics_compare.json", cmp.dump(2));
        }

        ManifestWriter mw;
        mw.command = "eval";
        mw.config = json::parse(ckpt.config_json);
        mw.seed = ckpt.seed;
        mw.out_dir = eval_out;
        mw.write();
        std::cout << "pcc_mean=" << report.pcc_mean << " mse=" << report.mse
                  << " mae=" << report.mae << " n_spots=" << report.n_spots << '\n';
        return 0;
    }

    if (viz->parsed()) {
        if (viz_split != "test" && viz_split != "train") {
            throw mmap::ConfigError("--split must be test or train");
        }
        mmap::Checkpoint ckpt = mmap::load_checkpoint(viz_ckpt);
        mmap::TrainConfig cfg = mmap::train_config_from_json(ckpt.config_json);
        mmap::DatasetBundle bundle = load_for_training(viz_data, cfg, viz_nhvg, viz_minspots);
        mmap::Split split = viz_split == "test" ? mmap::Split::test : mmap::Split::train;

        std::string slide_id = viz_slide;
        if (slide_id.empty()) {
            for (const auto& s : bundle.slides) {
                if (s.split == split) {
                    slide_id = s.slide_id;
                    break;
                }
            }
            if (slide_id.empty()) throw mmap::ConfigError("viz: no slide in the requested split");
        }
        mmap::DatasetBundle one;
        one.gene_names = bundle.gene_names;
        for (auto& s : bundle.slides) {
            if (s.slide_id == slide_id) {
                s.split = split;
                one.slides.push_back(std::move(s));
                break;
            }
        }
        if (one.slides.empty()) throw mmap::ConfigError("viz: unknown slide id '" + slide_id + "'");

        mmap::EvalOptions opts;
        opts.split = split;
        mmap::PredictionSet preds = mmap::predict_split(ckpt, one, opts);

        std::uint64_t seed = viz_seed >= 0 ? static_cast<std::uint64_t>(viz_seed) : ckpt.seed;
        fs::create_directories(viz_out);
        mmap::render_cluster_map(preds.pred, preds.centers, preds.spot_ids,
                                 static_cast<int>(viz_k), seed,
                                 fs::path(viz_out) / "cluster_map.png",
                                 fs::path(viz_out) / "cluster_labels.tsv");

        ManifestWriter mw;
        mw.command = "viz";
        mw.config = {{"slide", slide_id}, {"k", viz_k}, {"split", viz_split}};
        mw.seed = seed;
        mw.out_dir = viz_out;
        mw.write();
        std::cout << "cluster map for slide " << slide_id << " written to "
                  << (fs::path(viz_out) / "cluster_map.png") << '\n';
        return 0;
    }

    if (ablate->parsed()) {
        mmap::Checkpoint stage1 = mmap::load_checkpoint(ablate_stage1);
        mmap::TrainConfig base = ta.resolve();
        mmap::DatasetBundle bundle = load_for_training(
            ta.data, mmap::train_config_from_json(stage1.config_json), ab_nhvg, ab_minspots);

        struct Variant {
            std::string name;
            mmap::TrainConfig cfg;
        };
        std::vector<Variant> grid;
        if (ablate_axis == "neighbors") {
            for (int l : {4, 8, 16, 32}) {
                mmap::TrainConfig c = base;
                c.bank.retrieval = "fixed";
                c.bank.fixed_l = l;
                grid.push_back({std::to_string(l), c});
            }
            mmap::TrainConfig c = base;
            c.bank.retrieval = "adaptive";
            grid.push_back({"adaptive", c});
        } else if (ablate_axis == "aggregation") {
            for (const char* s : {"mean", "sum", "cross_attn", "cross_attn_pos"}) {
                mmap::TrainConfig c = base;
                c.bank.aggregation = s;
                grid.push_back({s, c});
            }
        } else {
            throw mmap::ConfigError("--axis must be neighbors or aggregation");
        }

        fs::create_directories(ta.out);
        std::string csv = "variant,pcc_mean,mse,mae\n";
        for (const Variant& v : grid) {
            std::ofstream log(fs::path(ta.out) / ("train_log_" + v.name + ".txt"));
            mmap::Checkpoint ckpt = mmap::run_stage2(bundle, stage1, v.cfg, &log);
            mmap::MetricsReport r = mmap::evaluate_model(ckpt, bundle, {});
            char line[256];
            std::snprintf(line, sizeof(line), "%s,%.10g,%.10g,%.10g\n", v.name.c_str(), r.pcc_mean,
                          r.mse, r.mae);
            csv += line;
            std::cout << "variant " << v.name << ": pcc_mean=" << r.pcc_mean << " mse=" << r.mse
                      << " mae=" << r.mae << '\n';
        }
        write_text(fs::path(ta.out) / "ablation.csv", csv);

        ManifestWriter mw;
        mw.command = "ablate";
        mw.config_path = ta.config_path;
        mw.config = {{"axis", ablate_axis}, {"base", json::parse(mmap::config_snapshot_json(base))}};
        mw.seed = base.seed;
        mw.out_dir = ta.out;
        mw.write();
        return 0;
    }

    return 2;
}

}  // namespace
