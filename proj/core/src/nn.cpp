#include "mmap/nn.hpp"

#include <cmath>

#include "mmap/errors.hpp"

namespace mmap {

namespace {

Mat random_normal(int rows, int cols, double stddev, Rng& rng) {
    Mat m(rows, cols);
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) m(i, j) = rng.normal(0.0, stddev);
    }
    return m;
}

}  // namespace

Linear Linear::create(const std::string& name, int in, int out, Rng& rng, bool bias) {
    if (in <= 0 || out <= 0) throw ConfigError("Linear: non-positive dimensions");
    Linear l;
    double stddev = std::sqrt(2.0 / (in + out));
    l.weight = Parameter(name + "/weight", random_normal(out, in, stddev, rng));
    l.has_bias = bias;
    if (bias) l.bias = Parameter(name + "/bias", Mat::Zero(1, out));
    return l;
}

Linear Linear::zeros(const std::string& name, int in, int out, bool bias) {
    if (in <= 0 || out <= 0) throw ConfigError("Linear: non-positive dimensions");
    Linear l;
    l.weight = Parameter(name + "/weight", Mat::Zero(out, in));
    l.has_bias = bias;
    if (bias) l.bias = Parameter(name + "/bias", Mat::Zero(1, out));
    return l;
}

Var Linear::forward(Graph& g, Var x) const {
    Var w = g.leaf(weight);
    if (lora_enabled) {
        Var delta = g.scale(g.matmul(g.leaf(lora_b), g.leaf(lora_a)), lora_alpha / lora_rank);
        w = g.add(w, delta);
    }
    Var y = g.matmul(x, g.transpose(w));
    if (has_bias) y = g.add_rowvec(y, g.leaf(bias));
    return y;
}

Vec Linear::apply(const Vec& x) const {
    if (x.size() != in_features()) throw ShapeError("Linear::apply: input length mismatch");
    Vec y = merged_weight() * x;
    if (has_bias) y += bias.value.row(0).transpose();
    return y;
}

Mat Linear::merged_weight() const {
    if (!lora_enabled) return weight.value;
    return weight.value + (lora_alpha / lora_rank) * (lora_b.value * lora_a.value);
}

void Linear::collect(ParamRefs& out) {
    out.push_back(&weight);
    if (has_bias) out.push_back(&bias);
    if (lora_enabled) {
        out.push_back(&lora_a);
        out.push_back(&lora_b);
    }
}

void Linear::set_base_trainable(bool trainable) {
    weight.trainable = trainable;
    if (has_bias) bias.trainable = trainable;
}

Linear apply_lowrank_adapter(const Linear& layer, int rank, double alpha, Rng& rng) {
    int in = layer.in_features();
    int out = layer.out_features();
    if (rank < 1 || rank > std::min(in, out)) {
        throw ConfigError("apply_lowrank_adapter: rank " + std::to_string(rank) +
                          " out of range [1, " + std::to_string(std::min(in, out)) + "]");
    }
    Linear adapted = layer;
    adapted.lora_enabled = true;
    adapted.lora_rank = rank;
    adapted.lora_alpha = alpha;
    adapted.lora_a =
        Parameter(layer.weight.name.substr(0, layer.weight.name.size() - 7) + "/lora_a",
                  random_normal(rank, in, 1.0 / std::sqrt(static_cast<double>(in)), rng));
    adapted.lora_b =
        Parameter(layer.weight.name.substr(0, layer.weight.name.size() - 7) + "/lora_b",
                  Mat::Zero(out, rank));
    return adapted;
}

LayerNorm LayerNorm::create(const std::string& name, int d) {
    LayerNorm ln;
    ln.gain = Parameter(name + "/gain", Mat::Ones(1, d));
    ln.bias = Parameter(name + "/bias", Mat::Zero(1, d));
    return ln;
}

Var LayerNorm::forward(Graph& g, Var x, double eps) const {
    Var y = g.layernorm_rows(x, eps);
    return g.add_rowvec(g.cmul_rowvec(y, g.leaf(gain)), g.leaf(bias));
}

void LayerNorm::collect(ParamRefs& out) {
    out.push_back(&gain);
    out.push_back(&bias);
}

AttentionProjections AttentionProjections::create(const std::string& name, int d, int heads,
                                                  Rng& rng, bool zero_output_proj) {
    if (heads < 1 || d % heads != 0) {
        throw ConfigError("attention: d must be divisible by heads");
    }
    AttentionProjections a;
    a.heads = heads;
    a.wq = Linear::create(name + "/wq", d, d, rng);
    a.wk = Linear::create(name + "/wk", d, d, rng);
    a.wv = Linear::create(name + "/wv", d, d, rng);
    a.wo = zero_output_proj ? Linear::zeros(name + "/wo", d, d)
                            : Linear::create(name + "/wo", d, d, rng);
    return a;
}

namespace {

// Shared scaled-dot-product attention body. q_src: n x d, kv_src: m x d.
// pos_logits, when given, is an m x heads additive score bias.
Var attention_impl(const AttentionProjections& p, Graph& g, Var q_src, Var kv_src,
                   Var* pos_logits, std::vector<Mat>* attn_trace) {
    const int d = p.wq.out_features();
    const int hd = d / p.heads;
    Var Q = p.wq.forward(g, q_src);
    Var K = p.wk.forward(g, kv_src);
    Var V = p.wv.forward(g, kv_src);
    std::vector<Var> head_outs;
    head_outs.reserve(p.heads);
    const double inv_sqrt_hd = 1.0 / std::sqrt(static_cast<double>(hd));
    for (int h = 0; h < p.heads; ++h) {
        Var Qh = g.slice_cols(Q, h * hd, hd);
        Var Kh = g.slice_cols(K, h * hd, hd);
        Var Vh = g.slice_cols(V, h * hd, hd);
        Var scores = g.scale(g.matmul(Qh, g.transpose(Kh)), inv_sqrt_hd);
        if (pos_logits != nullptr) {
            Var bias_h = g.transpose(g.slice_cols(*pos_logits, h, 1));  // 1 x m
            scores = g.add_rowvec(scores, bias_h);
        }
        Var A = g.softmax_rows(scores);
        if (attn_trace != nullptr) attn_trace->push_back(g.value(A));
        head_outs.push_back(g.matmul(A, Vh));
    }
    return p.wo.forward(g, g.concat_cols(head_outs));
}

}  // namespace

Var AttentionProjections::self_attention(Graph& g, Var x, std::vector<Mat>* attn_trace) const {
    return attention_impl(*this, g, x, x, nullptr, attn_trace);
}

Var AttentionProjections::cross_attention(Graph& g, Var q, Var kv, Var* pos_logits,
                                          std::vector<Mat>* attn_trace) const {
    return attention_impl(*this, g, q, kv, pos_logits, attn_trace);
}

void AttentionProjections::collect(ParamRefs& out) {
    wq.collect(out);
    wk.collect(out);
    wv.collect(out);
    wo.collect(out);
}

VitEncoder VitEncoder::create(const VitConfig& cfg, std::uint64_t seed,
                              const std::string& prefix) {
    if (cfg.image_px <= 0 || cfg.vit_patch <= 0 || cfg.image_px % cfg.vit_patch != 0) {
        throw ConfigError("VitEncoder: image_px must be a positive multiple of vit_patch");
    }
    if (cfg.d % cfg.heads != 0) throw ConfigError("VitEncoder: d must be divisible by heads");
    Rng rng(derive_seed(seed, fnv1a64(prefix)));
    VitEncoder e;
    e.cfg = cfg;
    int pix = 3 * cfg.vit_patch * cfg.vit_patch;
    e.patch_embed = Linear::create(prefix + "/patch_embed", pix, cfg.d, rng);
    e.cls_token = Parameter(prefix + "/cls_token", random_normal(1, cfg.d, 0.02, rng));
    e.pos_embed = Parameter(prefix + "/pos_embed", random_normal(e.tau() + 1, cfg.d, 0.02, rng));
    e.blocks.reserve(cfg.depth);
    for (int b = 0; b < cfg.depth; ++b) {
        std::string bp = prefix + "/blocks/" + std::to_string(b);
        VitBlock blk;
        blk.ln1 = LayerNorm::create(bp + "/ln1", cfg.d);
        blk.attn = AttentionProjections::create(bp + "/attn", cfg.d, cfg.heads, rng);
        blk.ln2 = LayerNorm::create(bp + "/ln2", cfg.d);
        blk.fc1 = Linear::create(bp + "/fc1", cfg.d, cfg.d * cfg.mlp_ratio, rng);
        blk.fc2 = Linear::create(bp + "/fc2", cfg.d * cfg.mlp_ratio, cfg.d, rng);
        e.blocks.push_back(std::move(blk));
    }
    e.final_ln = LayerNorm::create(prefix + "/final_ln", cfg.d);
    return e;
}

Var VitEncoder::forward(Graph& g, const Mat& patches, std::vector<Mat>* attn_trace) const {
    if (patches.rows() != tau() || patches.cols() != 3 * cfg.vit_patch * cfg.vit_patch) {
        throw ShapeError("VitEncoder: patch matrix must be tau x 3*vp^2");
    }
    Var tokens = patch_embed.forward(g, g.constant(patches));
    Var seq = g.concat_rows({g.leaf(cls_token), tokens});
    seq = g.add(seq, g.leaf(pos_embed));
    for (const VitBlock& blk : blocks) {
        Var a = blk.attn.self_attention(g, blk.ln1.forward(g, seq), attn_trace);
        seq = g.add(seq, a);
        Var m = blk.fc2.forward(g, g.gelu(blk.fc1.forward(g, blk.ln2.forward(g, seq))));
        seq = g.add(seq, m);
    }
    return final_ln.forward(g, seq);
}

void VitEncoder::collect(ParamRefs& out) {
    patch_embed.collect(out);
    out.push_back(&cls_token);
    out.push_back(&pos_embed);
    for (VitBlock& blk : blocks) {
        blk.ln1.collect(out);
        blk.attn.collect(out);
        blk.ln2.collect(out);
        blk.fc1.collect(out);
        blk.fc2.collect(out);
    }
    final_ln.collect(out);
}

void VitEncoder::set_frozen(bool f) {
    frozen = f;
    ParamRefs all;
    collect(all);
    for (Parameter* p : all) {
        bool is_adapter = p->name.find("/lora_") != std::string::npos;
        p->trainable = is_adapter ? true : !f;
    }
}

void VitEncoder::enable_adapters(int rank, double alpha, std::uint64_t seed) {
    Rng rng(derive_seed(seed, fnv1a64("lora")));
    patch_embed = apply_lowrank_adapter(patch_embed, rank, alpha, rng);
    for (VitBlock& blk : blocks) {
        blk.attn.wq = apply_lowrank_adapter(blk.attn.wq, rank, alpha, rng);
        blk.attn.wk = apply_lowrank_adapter(blk.attn.wk, rank, alpha, rng);
        blk.attn.wv = apply_lowrank_adapter(blk.attn.wv, rank, alpha, rng);
        blk.attn.wo = apply_lowrank_adapter(blk.attn.wo, rank, alpha, rng);
        blk.fc1 = apply_lowrank_adapter(blk.fc1, rank, alpha, rng);
        blk.fc2 = apply_lowrank_adapter(blk.fc2, rank, alpha, rng);
    }
}

FusionModule FusionModule::create(const FusionConfig& cfg, int d, std::uint64_t seed,
                                  const std::string& prefix) {
    if (cfg.n_layers < 1) throw ConfigError("FusionModule: n_layers must be >= 1");
    Rng rng(derive_seed(seed, fnv1a64(prefix)));
    FusionModule m;
    m.cfg = cfg;
    for (int i = 0; i < cfg.n_layers; ++i) {
        std::string lp = prefix + "/layers/" + std::to_string(i);
        FusionLayer layer;
        layer.ln = LayerNorm::create(lp + "/ln", d);
        layer.attn = AttentionProjections::create(lp + "/attn", d, cfg.heads, rng);
        m.layers.push_back(std::move(layer));
    }
    m.final_ln = LayerNorm::create(prefix + "/final_ln", d);
    return m;
}

Var FusionModule::forward(Graph& g, Var seq, std::vector<Mat>* attn_trace) const {
    for (const FusionLayer& layer : layers) {
        Var x = cfg.use_layer_norm ? layer.ln.forward(g, seq) : seq;
        seq = g.add(seq, layer.attn.self_attention(g, x, attn_trace));
    }
    if (cfg.use_layer_norm) seq = final_ln.forward(g, seq);
    return seq;
}

void FusionModule::collect(ParamRefs& out) {
    for (FusionLayer& layer : layers) {
        layer.ln.collect(out);
        layer.attn.collect(out);
    }
    final_ln.collect(out);
}

GlobalFusionModule GlobalFusionModule::create(const GlobalFusionConfig& cfg, int d,
                                              std::uint64_t seed, const std::string& prefix) {
    Rng rng(derive_seed(seed, fnv1a64(prefix)));
    GlobalFusionModule m;
    m.cfg = cfg;
    // Zero output projection keeps h near f at the start of stage 2.
    m.attn = AttentionProjections::create(prefix + "/attn", d, cfg.heads, rng,
                                          /*zero_output_proj=*/true);
    m.ln = LayerNorm::create(prefix + "/ln", d);
    m.pos_fc1 = Linear::create(prefix + "/pos_fc1", 2, cfg.pos_hidden, rng);
    m.pos_fc2 = Linear::create(prefix + "/pos_fc2", cfg.pos_hidden, cfg.heads, rng);
    return m;
}

Var GlobalFusionModule::forward(Graph& g, Var f_row, Var protos, const Mat* offsets,
                                std::vector<Mat>* attn_trace) const {
    Var attn_out{-1};
    if (offsets != nullptr) {
        if (offsets->rows() != g.value(protos).rows() || offsets->cols() != 2) {
            throw ShapeError("GlobalFusionModule: offsets must be L x 2");
        }
        Var bias = pos_fc2.forward(g, g.gelu(pos_fc1.forward(g, g.constant(*offsets))));
        attn_out = attn.cross_attention(g, f_row, protos, &bias, attn_trace);
    } else {
        attn_out = attn.cross_attention(g, f_row, protos, nullptr, attn_trace);
    }
    Var h = cfg.use_residual ? g.add(f_row, attn_out) : attn_out;
    if (cfg.use_layer_norm) h = ln.forward(g, h);
    return h;
}

void GlobalFusionModule::collect(ParamRefs& out) {
    attn.collect(out);
    ln.collect(out);
    pos_fc1.collect(out);
    pos_fc2.collect(out);
}

AdamOptimizer::AdamOptimizer(ParamRefs params, double beta1, double beta2, double eps)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (Parameter* p : params_) {
        m_.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
        v_.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
    }
}

void AdamOptimizer::step(double lr) {
    ++t_;
    double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        Parameter* p = params_[i];
        if (!p->trainable) continue;
        m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * p->grad;
        v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * p->grad.cwiseProduct(p->grad);
        Mat mhat = m_[i] / bc1;
        Mat vhat = v_[i] / bc2;
        p->value.array() -= lr * mhat.array() / (vhat.array().sqrt() + eps_);
    }
}

void AdamOptimizer::zero_grad() {
    for (Parameter* p : params_) p->zero_grad();
}

}  // namespace mmap
