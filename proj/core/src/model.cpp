#include "mmap/model.hpp"

#include "mmap/errors.hpp"

namespace mmap {

Phase1Model Phase1Model::create(const ModelConfig& cfg, std::uint64_t seed) {
    if (cfg.genes < 1) throw ConfigError("Phase1Model: genes must be set from the dataset");
    if (cfg.patch % 4 != 0) throw ConfigError("Phase1Model: patch must be divisible by 4");
    Phase1Model m;
    VitConfig vc;
    vc.image_px = cfg.patch;
    vc.vit_patch = cfg.vit_patch;
    vc.d = cfg.d;
    vc.depth = cfg.depth;
    vc.heads = cfg.heads;
    vc.mlp_ratio = cfg.mlp_ratio;
    m.encoder = VitEncoder::create(vc, seed);
    if (cfg.use_lora) {
        m.encoder.enable_adapters(cfg.lora_rank, cfg.lora_alpha, seed);
        m.encoder.set_frozen(true);  // base weights stay fixed, adapters train
    }
    FusionConfig fc;
    fc.n_layers = cfg.fusion_layers;
    fc.heads = cfg.fusion_heads;
    m.fusion = FusionModule::create(fc, cfg.d, derive_seed(seed, fnv1a64("fusion")));
    Rng head_rng(derive_seed(seed, fnv1a64("stage1-head")));
    m.head = Linear::create("phase1/head", cfg.d, cfg.genes, head_rng);
    return m;
}

void Phase1Model::collect(ParamRefs& out) {
    encoder.collect(out);
    fusion.collect(out);
    head.collect(out);
}

void Phase1Model::set_frozen(bool frozen) {
    ParamRefs all;
    collect(all);
    for (Parameter* p : all) p->trainable = !frozen;
    if (frozen) encoder.frozen = true;
}

Phase2Model Phase2Model::create(const ModelConfig& cfg, std::uint64_t seed) {
    if (cfg.genes < 1) throw ConfigError("Phase2Model: genes must be set from the dataset");
    Phase2Model m;
    GlobalFusionConfig gc;
    gc.heads = cfg.glob_heads;
    gc.pos_hidden = cfg.pos_hidden;
    m.glob = GlobalFusionModule::create(gc, cfg.d, derive_seed(seed, fnv1a64("global")));
    m.heads = EnsembleHeads::create(cfg.d, cfg.genes);
    return m;
}

void Phase2Model::collect(ParamRefs& out) {
    glob.collect(out);
    heads.collect(out);
}

Phase1Outputs phase1_forward(Graph& g, const Phase1Model& model, const MultiMagViews& views,
                             std::vector<Mat>* fusion_attn_trace) {
    const int vp = model.encoder.cfg.vit_patch;
    Phase1Outputs out;
    out.tokens0 = model.encoder.forward(g, patchify(normalize_view(views.view0), vp));
    out.tokens1 = model.encoder.forward(g, patchify(normalize_view(views.view1), vp));
    out.tokens2 = model.encoder.forward(g, patchify(normalize_view(views.view2), vp));
    Var seq = assemble_fusion_sequence(g, out.tokens0, out.tokens1, out.tokens2);
    Var fused = model.fusion.forward(g, seq, fusion_attn_trace);
    out.f_row = g.slice_rows(fused, 0, 1);
    out.e0_row = g.slice_rows(out.tokens0, 0, 1);
    out.e1_row = g.slice_rows(out.tokens1, 0, 1);
    out.e2_row = g.slice_rows(out.tokens2, 0, 1);
    out.pred1 = model.head.forward(g, out.f_row);
    return out;
}

ModelSet create_models(const ModelConfig& cfg, std::uint64_t seed, bool with_phase2) {
    ModelSet set{cfg, Phase1Model::create(cfg, seed), std::nullopt};
    if (with_phase2) set.phase2 = Phase2Model::create(cfg, seed);
    return set;
}

namespace {

void load_params(const Checkpoint& ckpt, ParamRefs params) {
    for (Parameter* p : params) {
        auto it = ckpt.arrays.find(p->name);
        if (it == ckpt.arrays.end()) {
            throw ParseError("checkpoint missing parameter '" + p->name + "'");
        }
        if (it->second.rows() != p->value.rows() || it->second.cols() != p->value.cols()) {
            throw ShapeError("checkpoint parameter '" + p->name + "' has unexpected shape");
        }
        p->value = it->second;
    }
}

}  // namespace

ModelSet models_from_checkpoint(const Checkpoint& ckpt) {
    TrainConfig cfg = train_config_from_json(ckpt.config_json);
    ModelSet set = create_models(cfg.model, ckpt.seed, ckpt.stage == "stage2");
    ParamRefs params;
    set.phase1.collect(params);
    if (set.phase2) set.phase2->collect(params);
    load_params(ckpt, params);
    return set;
}

Checkpoint checkpoint_from_models(const ModelSet& models, const std::string& stage,
                                  const TrainConfig& cfg, int epoch,
                                  std::vector<PrototypeBank> banks) {
    Checkpoint ckpt;
    ckpt.stage = stage;
    ckpt.seed = cfg.seed;
    ckpt.epoch = epoch;
    ckpt.config_json = config_snapshot_json(cfg);
    ParamRefs params;
    ModelSet& mutable_models = const_cast<ModelSet&>(models);  // collect() is logically const
    mutable_models.phase1.collect(params);
    if (mutable_models.phase2) mutable_models.phase2->collect(params);
    for (Parameter* p : params) ckpt.arrays[p->name] = p->value;
    ckpt.banks = std::move(banks);
    return ckpt;
}

}  // namespace mmap
