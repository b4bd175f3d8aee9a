#include "agf/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "agf/error.hpp"
#include "json.hpp"

namespace agf {

namespace {

constexpr double kLnEps = 1e-5;

struct LinearP {
    Param w;  // in x out, row-major
    int in = 0, out = 0;
};

struct LnP {
    Param gain, bias;
};

struct HeadPos {
    PositionalMode mode = PositionalMode::none;
    Param agf;     // [gamma_fwd, gamma_bwd, rho_fwd, rho_bwd]
    Param amp;     // [2][seq_len]
    Param w3;      // [2][seq_len][d_k]
    Param slopes;  // [fwd, bwd]
};

struct AttnBlock {
    LnP ln;
    LinearP wq, wk, wv, wo;
    std::vector<HeadPos> pos;
};

struct FfBlock {
    LnP ln;
    LinearP w1, w2;
    Param b1, b2;
};

struct EncLayer {
    AttnBlock attn;
    FfBlock ff;
};

struct DecLayer {
    AttnBlock self_attn;
    AttnBlock cross;
    FfBlock ff;
};

Dense2 lin_fwd(const LinearP& l, const Dense2& x) {
    if (x.cols != l.in) throw ShapeError("linear input width mismatch");
    Dense2 out(x.rows, l.out);
    for (int i = 0; i < x.rows; ++i) {
        const double* xr = x.row(i);
        double* orow = out.row(i);
        for (int k = 0; k < l.in; ++k) {
            const double a = xr[k];
            if (a == 0.0) continue;
            const double* wrow = l.w.v.data() + static_cast<size_t>(k) * l.out;
            for (int j = 0; j < l.out; ++j) orow[j] += a * wrow[j];
        }
    }
    return out;
}

Dense2 lin_bwd(const LinearP& l, const Dense2& x, const Dense2& gout, Grads& grads) {
    Dense2 dx(x.rows, x.cols);
    std::vector<double>& gw = grads.g[l.w.id];
    for (int i = 0; i < x.rows; ++i) {
        const double* xr = x.row(i);
        const double* grow = gout.row(i);
        double* dxr = dx.row(i);
        for (int k = 0; k < l.in; ++k) {
            const double* wrow = l.w.v.data() + static_cast<size_t>(k) * l.out;
            double* gwrow = gw.data() + static_cast<size_t>(k) * l.out;
            double s = 0.0;
            const double xk = xr[k];
            for (int j = 0; j < l.out; ++j) {
                s += grow[j] * wrow[j];
                gwrow[j] += xk * grow[j];
            }
            dxr[k] = s;
        }
    }
    return dx;
}

Dense2 slice_cols(const Dense2& x, int c0, int width) {
    Dense2 out(x.rows, width);
    for (int i = 0; i < x.rows; ++i)
        for (int j = 0; j < width; ++j) out.at(i, j) = x.at(i, c0 + j);
    return out;
}

void add_cols(Dense2& dst, const Dense2& src, int c0) {
    for (int i = 0; i < src.rows; ++i)
        for (int j = 0; j < src.cols; ++j) dst.at(i, c0 + j) += src.at(i, j);
}

// Forward caches, one per example.
struct AttnCache {
    Dense2 x_in;
    LayerNormCache lnc;
    Dense2 xn;
    Dense2 Q, K, V;
    std::vector<AttentionOutput> heads;
    Dense2 concat;
};

struct FfCache {
    Dense2 x_in;
    LayerNormCache lnc;
    Dense2 xn;
    Dense2 h_pre, h;
};

struct EncLayerCache {
    AttnCache attn;
    FfCache ff;
};

struct DecLayerCache {
    AttnCache self_attn;
    AttnCache cross;
    FfCache ff;
};

struct SeqCache {
    Dense2 enc_x0, dec_x0;
    std::vector<EncLayerCache> enc;
    std::vector<DecLayerCache> dec;
    Dense2 enc_pre_final;
    LayerNormCache enc_final_lnc;
    Dense2 memory;
    Dense2 dec_pre_final;
    LayerNormCache dec_final_lnc;
    Dense2 dec_y;
    Dense2 logits;
};

}  // namespace

void ModelConfig::validate() const {
    if (layers < 1) throw ConfigError("need at least one layer");
    if (heads < 1) throw ConfigError("need at least one head");
    if (d_model % heads != 0) throw ConfigError("d_model must be divisible by heads");
    if (d_ff < 1) throw ConfigError("d_ff must be positive");
    if (seq_len < 2) throw ConfigError("seq_len must be at least 2");
    if (vocab < 4) throw ConfigError("vocab must be at least 4");
    attn.validate();
    if (attn.mask != MaskKind::none)
        throw ConfigError("masking is chosen per attention context, not in the config");
}

void Grads::init_like(const std::vector<Param*>& params) {
    g.resize(params.size());
    for (size_t i = 0; i < params.size(); ++i) g[i].assign(params[i]->v.size(), 0.0);
}

void Grads::zero() {
    for (auto& v : g) std::fill(v.begin(), v.end(), 0.0);
}

void Grads::add(const Grads& other) {
    if (other.g.size() != g.size()) throw ShapeError("gradient reduction shape mismatch");
    for (size_t i = 0; i < g.size(); ++i)
        for (size_t j = 0; j < g[i].size(); ++j) g[i][j] += other.g[i][j];
}

std::vector<double> sinusoidal_pe(int position, int d_model) {
    if (position < 0) throw DomainError("position must be non-negative");
    std::vector<double> v(d_model);
    for (int i = 0; i < d_model; i += 2) {
        double freq = std::pow(10000.0, -static_cast<double>(i) / d_model);
        v[i] = std::sin(position * freq);
        if (i + 1 < d_model) v[i + 1] = std::cos(position * freq);
    }
    return v;
}

struct Model::Impl {
    ModelConfig cfg;
    Param emb;
    std::vector<EncLayer> enc;
    std::vector<DecLayer> dec;
    LnP enc_final, dec_final;
    LinearP w_out;
    Param b_out;
    Dense2 pe;

    std::vector<Param*> order;

    void reg(Param& p, size_t n, double fill) {
        p.v.assign(n, fill);
        p.id = static_cast<int>(order.size());
        order.push_back(&p);
    }

    void reg_normal(Param& p, size_t n, Rng& rng, double stddev = 0.02) {
        reg(p, n, 0.0);
        for (double& x : p.v) x = stddev * rng.normal();
    }

    void init_linear(LinearP& l, int in, int out, Rng& rng) {
        l.in = in;
        l.out = out;
        reg_normal(l.w, static_cast<size_t>(in) * out, rng);
    }

    void init_ln(LnP& ln, int n) {
        reg(ln.gain, n, 1.0);
        reg(ln.bias, n, 0.0);
    }

    void init_headpos(HeadPos& hp, PositionalMode mode, int head, Rng&) {
        hp.mode = mode;
        if (mode == PositionalMode::agf || mode == PositionalMode::agf_m ||
            mode == PositionalMode::agf_full) {
            reg(hp.agf, 4, 0.0);
            hp.agf.v[2] = hp.agf.v[3] = AgfHeadParams::kDefaultRho;
        }
        if (mode_uses_lc2(mode)) reg(hp.amp, 2 * static_cast<size_t>(cfg.seq_len), 1.0);
        if (mode_uses_lc3(mode))
            reg(hp.w3, 2 * static_cast<size_t>(cfg.seq_len) * cfg.d_k(), 1.0);
        if (mode == PositionalMode::alibi_add || mode == PositionalMode::alibi_mul) {
            reg(hp.slopes, 2, 0.0);
            hp.slopes.v[0] = hp.slopes.v[1] = alibi_default_slope(head, cfg.heads);
        }
    }

    void init_attn_block(AttnBlock& b, PositionalMode mode, Rng& rng) {
        init_ln(b.ln, cfg.d_model);
        init_linear(b.wq, cfg.d_model, cfg.d_model, rng);
        init_linear(b.wk, cfg.d_model, cfg.d_model, rng);
        init_linear(b.wv, cfg.d_model, cfg.d_model, rng);
        init_linear(b.wo, cfg.d_model, cfg.d_model, rng);
        b.pos.resize(cfg.heads);
        for (int h = 0; h < cfg.heads; ++h) init_headpos(b.pos[h], mode, h, rng);
    }

    void init_ff(FfBlock& f, Rng& rng) {
        init_ln(f.ln, cfg.d_model);
        init_linear(f.w1, cfg.d_model, cfg.d_ff, rng);
        reg(f.b1, cfg.d_ff, 0.0);
        init_linear(f.w2, cfg.d_ff, cfg.d_model, rng);
        reg(f.b2, cfg.d_model, 0.0);
    }

    explicit Impl(const ModelConfig& c) : cfg(c) {
        cfg.validate();
        Rng rng(cfg.seed);
        reg_normal(emb, static_cast<size_t>(cfg.vocab) * cfg.d_model, rng);
        const PositionalMode mode = cfg.attn.positional_mode;
        const PositionalMode cross_mode =
            cfg.cross_positional ? PositionalMode::agf : PositionalMode::none;
        enc.resize(cfg.layers);
        for (EncLayer& l : enc) {
            init_attn_block(l.attn, mode, rng);
            init_ff(l.ff, rng);
        }
        dec.resize(cfg.layers);
        for (DecLayer& l : dec) {
            init_attn_block(l.self_attn, mode, rng);
            init_attn_block(l.cross, cross_mode, rng);
            init_ff(l.ff, rng);
        }
        init_ln(enc_final, cfg.d_model);
        init_ln(dec_final, cfg.d_model);
        init_linear(w_out, cfg.d_model, cfg.vocab, rng);
        reg(b_out, cfg.vocab, 0.0);

        pe = Dense2(cfg.seq_len, cfg.d_model);
        for (int p = 0; p < cfg.seq_len; ++p) {
            std::vector<double> row = sinusoidal_pe(p, cfg.d_model);
            std::copy(row.begin(), row.end(), pe.row(p));
        }
    }

    HeadPosRef head_ref(const HeadPos& hp) const {
        HeadPosRef r;
        r.mode = hp.mode;
        if (!hp.agf.v.empty()) {
            r.agf.gamma[0] = hp.agf.v[0];
            r.agf.gamma[1] = hp.agf.v[1];
            r.agf.rho[0] = hp.agf.v[2];
            r.agf.rho[1] = hp.agf.v[3];
        }
        if (!hp.amp.v.empty()) {
            r.seq_len = cfg.seq_len;
            r.lc2 = hp.amp.v.data();
        }
        if (!hp.w3.v.empty()) r.lc3 = {cfg.seq_len, cfg.d_k(), hp.w3.v.data()};
        if (!hp.slopes.v.empty()) {
            r.alibi.slope[0] = hp.slopes.v[0];
            r.alibi.slope[1] = hp.slopes.v[1];
            r.alibi.integration = hp.mode == PositionalMode::alibi_mul
                                      ? Integration::multiplicative
                                      : Integration::additive;
        }
        return r;
    }

    AttentionOptions context_options(bool causal, bool is_cross) const {
        AttentionOptions o = cfg.attn;
        o.mask = causal ? MaskKind::causal : MaskKind::none;
        if (is_cross) {
            o.positional_mode =
                cfg.cross_positional ? PositionalMode::agf : PositionalMode::none;
            o.pcm_v = false;
            o.pcm_v_exp = false;
        }
        return o;
    }

    Dense2 embed(const std::vector<int>& tokens) const {
        if (static_cast<int>(tokens.size()) > cfg.seq_len)
            throw ShapeError("sequence exceeds the configured cap");
        const double s = std::sqrt(static_cast<double>(cfg.d_model));
        Dense2 x(static_cast<int>(tokens.size()), cfg.d_model);
        for (size_t i = 0; i < tokens.size(); ++i) {
            int t = tokens[i];
            if (t < 0 || t >= cfg.vocab) throw DomainError("token id outside vocabulary");
            const double* e = emb.v.data() + static_cast<size_t>(t) * cfg.d_model;
            double* xr = x.row(static_cast<int>(i));
            for (int j = 0; j < cfg.d_model; ++j) xr[j] = e[j] * s;
            if (cfg.use_abs_pe) {
                const double* pr = pe.row(static_cast<int>(i));
                for (int j = 0; j < cfg.d_model; ++j) xr[j] += pr[j];
            }
        }
        return x;
    }

    void embed_backward(const std::vector<int>& tokens, const Dense2& dx, Grads& grads) const {
        const double s = std::sqrt(static_cast<double>(cfg.d_model));
        std::vector<double>& ge = grads.g[emb.id];
        for (size_t i = 0; i < tokens.size(); ++i) {
            double* g = ge.data() + static_cast<size_t>(tokens[i]) * cfg.d_model;
            const double* d = dx.row(static_cast<int>(i));
            for (int j = 0; j < cfg.d_model; ++j) g[j] += d[j] * s;
        }
    }

    // x <- x + MHA(LN(x)) over kv (kv == xn for self-attention).
    Dense2 attn_forward(const AttnBlock& b, const Dense2& x, const Dense2* kv_input,
                        const AttentionOptions& opts, AttnCache& c) const {
        const int dk = cfg.d_k();
        c.x_in = x;
        c.xn = layer_norm(x, b.ln.gain.v, b.ln.bias.v, kLnEps, &c.lnc);
        const Dense2& kv = kv_input ? *kv_input : c.xn;
        c.Q = lin_fwd(b.wq, c.xn);
        c.K = lin_fwd(b.wk, kv);
        c.V = lin_fwd(b.wv, kv);
        c.heads.resize(cfg.heads);
        c.concat = Dense2(x.rows, cfg.d_model);
        for (int h = 0; h < cfg.heads; ++h) {
            Dense2 qh = slice_cols(c.Q, h * dk, dk);
            Dense2 kh = slice_cols(c.K, h * dk, dk);
            Dense2 vh = slice_cols(c.V, h * dk, dk);
            HeadPosRef ref = head_ref(b.pos[h]);
            CoeffMatrix coeff = build_coeff_matrix(ref, qh.rows, kh.rows);
            Lc3Ref lc3 = ref.lc3;
            c.heads[h] = attention_forward(qh, kh, vh, coeff,
                                           mode_uses_lc3(ref.mode) ? &lc3 : nullptr, opts);
            add_cols(c.concat, c.heads[h].output, h * dk);
        }
        Dense2 proj = lin_fwd(b.wo, c.concat);
        Dense2 out = x;
        for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += proj.data[i];
        return out;
    }

    void accumulate_pos_grads(const HeadPos& hp, const HeadPosRef& ref, const Dense2& dcoeff,
                              Grads& grads) const {
        if (hp.mode == PositionalMode::none) return;
        PosGradSink sink;
        if (!hp.agf.v.empty()) sink.agf4 = grads.g[hp.agf.id].data();
        if (!hp.amp.v.empty()) sink.lc2 = grads.g[hp.amp.id].data();
        if (!hp.slopes.v.empty()) sink.slopes = grads.g[hp.slopes.id].data();
        // entries are Toeplitz: collapse each diagonal before the chain rule
        for (long long off = -(dcoeff.rows - 1); off < dcoeff.cols; ++off) {
            double sum = 0.0;
            int m0 = off < 0 ? static_cast<int>(-off) : 0;
            for (int m = m0; m < dcoeff.rows; ++m) {
                long long n = m + off;
                if (n >= dcoeff.cols) break;
                sum += dcoeff.at(m, static_cast<int>(n));
            }
            if (sum != 0.0) accumulate_entry_grads(ref, off, sum, sink);
        }
    }

    // Returns dx; for cross-attention also accumulates into *dkv.
    Dense2 attn_backward(const AttnBlock& b, const Dense2* kv_input,
                         const AttentionOptions& opts, const AttnCache& c, const Dense2& dout,
                         Grads& grads, Dense2* dkv) const {
        const int dk = cfg.d_k();
        const Dense2& kv = kv_input ? *kv_input : c.xn;

        Dense2 dconcat = lin_bwd(b.wo, c.concat, dout, grads);
        Dense2 dQ(c.Q.rows, c.Q.cols), dK(c.K.rows, c.K.cols), dV(c.V.rows, c.V.cols);
        for (int h = 0; h < cfg.heads; ++h) {
            Dense2 qh = slice_cols(c.Q, h * dk, dk);
            Dense2 kh = slice_cols(c.K, h * dk, dk);
            Dense2 vh = slice_cols(c.V, h * dk, dk);
            Dense2 dout_h = slice_cols(dconcat, h * dk, dk);
            HeadPosRef ref = head_ref(b.pos[h]);
            CoeffMatrix coeff = build_coeff_matrix(ref, qh.rows, kh.rows);
            Lc3Ref lc3 = ref.lc3;
            AttentionGrads ag =
                attention_backward(qh, kh, vh, coeff, mode_uses_lc3(ref.mode) ? &lc3 : nullptr,
                                   opts, c.heads[h], dout_h);
            add_cols(dQ, ag.dQ, h * dk);
            add_cols(dK, ag.dK, h * dk);
            add_cols(dV, ag.dV, h * dk);
            accumulate_pos_grads(b.pos[h], ref, ag.dcoeff, grads);
            if (!ag.dlc3.empty()) {
                std::vector<double>& gw = grads.g[b.pos[h].w3.id];
                for (size_t i = 0; i < gw.size(); ++i) gw[i] += ag.dlc3[i];
            }
        }
        Dense2 dxn = lin_bwd(b.wq, c.xn, dQ, grads);
        Dense2 dkv_local = lin_bwd(b.wk, kv, dK, grads);
        {
            Dense2 dv_in = lin_bwd(b.wv, kv, dV, grads);
            for (size_t i = 0; i < dkv_local.data.size(); ++i)
                dkv_local.data[i] += dv_in.data[i];
        }
        if (kv_input) {
            if (dkv)
                for (size_t i = 0; i < dkv->data.size(); ++i)
                    dkv->data[i] += dkv_local.data[i];
        } else {
            for (size_t i = 0; i < dxn.data.size(); ++i) dxn.data[i] += dkv_local.data[i];
        }
        Dense2 dx = layer_norm_backward(c.x_in, dxn, b.ln.gain.v, c.lnc,
                                        grads.g[b.ln.gain.id], grads.g[b.ln.bias.id]);
        for (size_t i = 0; i < dx.data.size(); ++i) dx.data[i] += dout.data[i];
        return dx;
    }

    Dense2 ff_forward(const FfBlock& f, const Dense2& x, FfCache& c) const {
        c.x_in = x;
        c.xn = layer_norm(x, f.ln.gain.v, f.ln.bias.v, kLnEps, &c.lnc);
        c.h_pre = lin_fwd(f.w1, c.xn);
        for (int i = 0; i < c.h_pre.rows; ++i)
            for (int j = 0; j < cfg.d_ff; ++j) c.h_pre.at(i, j) += f.b1.v[j];
        c.h = c.h_pre;
        for (double& v : c.h.data) v = v > 0.0 ? v : 0.0;
        Dense2 y = lin_fwd(f.w2, c.h);
        Dense2 out = x;
        for (int i = 0; i < out.rows; ++i)
            for (int j = 0; j < cfg.d_model; ++j) out.at(i, j) += y.at(i, j) + f.b2.v[j];
        return out;
    }

    Dense2 ff_backward(const FfBlock& f, const FfCache& c, const Dense2& dout,
                       Grads& grads) const {
        std::vector<double>& gb2 = grads.g[f.b2.id];
        for (int i = 0; i < dout.rows; ++i)
            for (int j = 0; j < cfg.d_model; ++j) gb2[j] += dout.at(i, j);
        Dense2 dh = lin_bwd(f.w2, c.h, dout, grads);
        for (size_t i = 0; i < dh.data.size(); ++i)
            if (c.h_pre.data[i] <= 0.0) dh.data[i] = 0.0;
        std::vector<double>& gb1 = grads.g[f.b1.id];
        for (int i = 0; i < dh.rows; ++i)
            for (int j = 0; j < cfg.d_ff; ++j) gb1[j] += dh.at(i, j);
        Dense2 dxn = lin_bwd(f.w1, c.xn, dh, grads);
        Dense2 dx = layer_norm_backward(c.x_in, dxn, f.ln.gain.v, c.lnc,
                                        grads.g[f.ln.gain.id], grads.g[f.ln.bias.id]);
        for (size_t i = 0; i < dx.data.size(); ++i) dx.data[i] += dout.data[i];
        return dx;
    }

    void forward(const Example& ex, SeqCache& c) const {
        if (ex.src.empty() || ex.tgt.empty()) throw ShapeError("empty example");
        for (int t : ex.tgt)
            if (t < 0 || t >= cfg.vocab) throw DomainError("token id outside vocabulary");
        c.enc_x0 = embed(ex.src);
        c.enc.resize(cfg.layers);
        Dense2 x = c.enc_x0;
        const AttentionOptions enc_opts = context_options(false, false);
        for (int l = 0; l < cfg.layers; ++l) {
            x = attn_forward(enc[l].attn, x, nullptr, enc_opts, c.enc[l].attn);
            x = ff_forward(enc[l].ff, x, c.enc[l].ff);
        }
        c.enc_pre_final = x;
        c.memory = layer_norm(x, enc_final.gain.v, enc_final.bias.v, kLnEps, &c.enc_final_lnc);

        std::vector<int> dec_in(ex.tgt.size());
        dec_in[0] = 0;
        for (size_t i = 1; i < ex.tgt.size(); ++i) dec_in[i] = ex.tgt[i - 1];
        c.dec_x0 = embed(dec_in);
        c.dec.resize(cfg.layers);
        Dense2 y = c.dec_x0;
        const AttentionOptions dec_opts = context_options(true, false);
        const AttentionOptions cross_opts = context_options(false, true);
        for (int l = 0; l < cfg.layers; ++l) {
            y = attn_forward(dec[l].self_attn, y, nullptr, dec_opts, c.dec[l].self_attn);
            y = attn_forward(dec[l].cross, y, &c.memory, cross_opts, c.dec[l].cross);
            y = ff_forward(dec[l].ff, y, c.dec[l].ff);
        }
        c.dec_pre_final = y;
        c.dec_y = layer_norm(y, dec_final.gain.v, dec_final.bias.v, kLnEps, &c.dec_final_lnc);
        c.logits = lin_fwd(w_out, c.dec_y);
        for (int i = 0; i < c.logits.rows; ++i)
            for (int j = 0; j < cfg.vocab; ++j) c.logits.at(i, j) += b_out.v[j];
    }

    // Sum of per-token cross-entropies; each token's upstream weight is
    // token_weight when grads are requested.
    double example_loss(const Example& ex, double token_weight, Grads* grads) const {
        SeqCache c;
        forward(ex, c);
        Dense2 probs = softmax_rows(c.logits);
        double ce = 0.0;
        for (size_t i = 0; i < ex.tgt.size(); ++i) {
            double p = probs.at(static_cast<int>(i), ex.tgt[i]);
            ce -= std::log(std::max(p, 1e-300));
        }
        if (!grads) return ce;

        Dense2 dlogits = probs;
        for (size_t i = 0; i < ex.tgt.size(); ++i)
            dlogits.at(static_cast<int>(i), ex.tgt[i]) -= 1.0;
        for (double& v : dlogits.data) v *= token_weight;

        std::vector<double>& gbo = grads->g[b_out.id];
        for (int i = 0; i < dlogits.rows; ++i)
            for (int j = 0; j < cfg.vocab; ++j) gbo[j] += dlogits.at(i, j);
        Dense2 ddec_y = lin_bwd(w_out, c.dec_y, dlogits, *grads);
        Dense2 dy = layer_norm_backward(c.dec_pre_final, ddec_y, dec_final.gain.v,
                                        c.dec_final_lnc, grads->g[dec_final.gain.id],
                                        grads->g[dec_final.bias.id]);

        Dense2 dmemory(c.memory.rows, c.memory.cols);
        const AttentionOptions dec_opts = context_options(true, false);
        const AttentionOptions cross_opts = context_options(false, true);
        for (int l = cfg.layers - 1; l >= 0; --l) {
            dy = ff_backward(dec[l].ff, c.dec[l].ff, dy, *grads);
            dy = attn_backward(dec[l].cross, &c.memory, cross_opts, c.dec[l].cross, dy, *grads,
                               &dmemory);
            dy = attn_backward(dec[l].self_attn, nullptr, dec_opts, c.dec[l].self_attn, dy,
                               *grads, nullptr);
        }
        std::vector<int> dec_in(ex.tgt.size());
        dec_in[0] = 0;
        for (size_t i = 1; i < ex.tgt.size(); ++i) dec_in[i] = ex.tgt[i - 1];
        embed_backward(dec_in, dy, *grads);

        Dense2 dx = layer_norm_backward(c.enc_pre_final, dmemory, enc_final.gain.v,
                                        c.enc_final_lnc, grads->g[enc_final.gain.id],
                                        grads->g[enc_final.bias.id]);
        const AttentionOptions enc_opts = context_options(false, false);
        for (int l = cfg.layers - 1; l >= 0; --l) {
            dx = ff_backward(enc[l].ff, c.enc[l].ff, dx, *grads);
            dx = attn_backward(enc[l].attn, nullptr, enc_opts, c.enc[l].attn, dx, *grads,
                               nullptr);
        }
        embed_backward(ex.src, dx, *grads);
        return ce;
    }
};

Model::Model(const ModelConfig& cfg) : cfg_(cfg), impl_(std::make_shared<Impl>(cfg)) {
    params_ = impl_->order;
}

double Model::batch_loss(const std::vector<const Example*>& batch, Grads* grads) const {
    if (batch.empty()) throw ShapeError("empty batch");
    size_t total_tokens = 0;
    for (const Example* ex : batch) total_tokens += ex->tgt.size();
    const double w = 1.0 / static_cast<double>(total_tokens);
    double ce = 0.0;
    for (const Example* ex : batch) ce += impl_->example_loss(*ex, w, grads);
    return ce * w;
}

Dense2 Model::logits(const Example& ex) const {
    SeqCache c;
    impl_->forward(ex, c);
    return c.logits;
}

double Model::accuracy(const Dataset& ds) const {
    long long correct = 0, total = 0;
    for (const Example& ex : ds) {
        Dense2 lg = logits(ex);
        for (size_t i = 0; i < ex.tgt.size(); ++i) {
            int best = 0;
            double hi = lg.at(static_cast<int>(i), 0);
            for (int j = 1; j < cfg_.vocab; ++j)
                if (lg.at(static_cast<int>(i), j) > hi) {
                    hi = lg.at(static_cast<int>(i), j);
                    best = j;
                }
            correct += best == ex.tgt[i];
            ++total;
        }
    }
    if (total == 0) return 0.0;
    return 100.0 * static_cast<double>(correct) / static_cast<double>(total);
}

std::vector<Dense2> Model::first_layer_scores(const std::vector<int>& tokens) const {
    const Impl& im = *impl_;
    const int dk = cfg_.d_k();
    Dense2 x = im.embed(tokens);
    LayerNormCache lnc;
    const AttnBlock& b = im.enc[0].attn;
    Dense2 xn = layer_norm(x, b.ln.gain.v, b.ln.bias.v, kLnEps, &lnc);
    Dense2 Q = lin_fwd(b.wq, xn), K = lin_fwd(b.wk, xn);
    AttentionOptions opts = im.context_options(false, false);

    std::vector<Dense2> scores(cfg_.heads);
    const int len = static_cast<int>(tokens.size());
    for (int h = 0; h < cfg_.heads; ++h) {
        HeadPosRef ref = im.head_ref(b.pos[h]);
        scores[h] = Dense2(len, len);
        for (int m = 0; m < len; ++m)
            for (int n = 0; n < len; ++n) {
                std::span<const double> q(Q.row(m) + h * dk, static_cast<size_t>(dk));
                std::span<const double> k(K.row(n) + h * dk, static_cast<size_t>(dk));
                const double* w3 = nullptr;
                if (mode_uses_lc3(ref.mode))
                    w3 = ref.lc3.w + lc3_index(ref.lc3.seq_len, ref.lc3.d_k, n - m);
                scores[h].at(m, n) = single_pair_score(q, k, coeff_entry(ref, n - m), w3, opts);
            }
    }
    return scores;
}

ShiftCheckReport Model::shift_equivariance_check(const std::vector<int>& tokens,
                                                 int shift) const {
    ShiftCheckReport rep;
    if (cfg_.use_abs_pe) {
        rep.reason = "absolute positional encoding enabled";
        return rep;
    }
    if (shift < 0 || static_cast<int>(tokens.size()) + shift > cfg_.seq_len)
        throw ShapeError("shift pushes the sequence past the cap");
    rep.applicable = true;

    std::vector<int> padded(tokens.size() + shift, 2);
    std::copy(tokens.begin(), tokens.end(), padded.begin() + shift);

    std::vector<Dense2> base = first_layer_scores(tokens);
    std::vector<Dense2> moved = first_layer_scores(padded);
    const int len = static_cast<int>(tokens.size());
    for (int h = 0; h < cfg_.heads; ++h)
        for (int m = 0; m < len; ++m)
            for (int n = 0; n < len; ++n) {
                double d = std::abs(base[h].at(m, n) - moved[h].at(m + shift, n + shift));
                rep.max_deviation = std::max(rep.max_deviation, d);
            }
    return rep;
}

size_t Model::positional_params_per_attention_layer() const {
    return cfg_.heads *
           positional_param_count(cfg_.attn.positional_mode, cfg_.seq_len, cfg_.d_k());
}

size_t Model::total_positional_params() const {
    size_t n = 0;
    auto block = [&](const AttnBlock& b) {
        for (const HeadPos& hp : b.pos)
            n += hp.agf.v.size() + hp.amp.v.size() + hp.w3.v.size() + hp.slopes.v.size();
    };
    for (const EncLayer& l : impl_->enc) block(l.attn);
    for (const DecLayer& l : impl_->dec) {
        block(l.self_attn);
        block(l.cross);
    }
    return n;
}

size_t Model::total_params() const {
    size_t n = 0;
    for (const Param* p : params_) n += p->v.size();
    return n;
}

namespace {

using nlohmann::json;

json headpos_json(const HeadPos& hp) {
    json j;
    j["mode"] = to_string(hp.mode);
    if (!hp.agf.v.empty()) {
        j["gamma"] = {hp.agf.v[0], hp.agf.v[1]};
        j["rho"] = {hp.agf.v[2], hp.agf.v[3]};
    }
    if (!hp.slopes.v.empty()) j["slopes"] = hp.slopes.v;
    if (!hp.amp.v.empty()) j["amp"] = hp.amp.v;
    if (!hp.w3.v.empty()) j["w"] = hp.w3.v;
    return j;
}

json attn_pos_json(const AttnBlock& b, const char* context, int layer) {
    json j;
    j["context"] = context;
    j["layer"] = layer;
    json heads = json::array();
    for (const HeadPos& hp : b.pos) heads.push_back(headpos_json(hp));
    j["heads"] = heads;
    return j;
}

}  // namespace

void Model::save_checkpoint(const std::string& path, uint64_t rng_state) const {
    json j;
    j["format"] = "agf-checkpoint-1";
    json cfg;
    cfg["layers"] = cfg_.layers;
    cfg["heads"] = cfg_.heads;
    cfg["d_model"] = cfg_.d_model;
    cfg["d_ff"] = cfg_.d_ff;
    cfg["seq_len"] = cfg_.seq_len;
    cfg["vocab"] = cfg_.vocab;
    cfg["use_abs_pe"] = cfg_.use_abs_pe;
    cfg["cross_positional"] = cfg_.cross_positional;
    cfg["seed"] = cfg_.seed;
    json attn;
    attn["positional_mode"] = to_string(cfg_.attn.positional_mode);
    attn["pcm_v"] = cfg_.attn.pcm_v;
    attn["pcm_v_exp"] = cfg_.attn.pcm_v_exp;
    attn["pcm_v_stop_grad"] = cfg_.attn.pcm_v_stop_grad;
    attn["sco"] = cfg_.attn.sco;
    attn["scale"] = cfg_.attn.scale;
    cfg["attention"] = attn;
    j["config"] = cfg;
    j["rng_state"] = rng_state;

    json pos = json::array();
    for (int l = 0; l < cfg_.layers; ++l) pos.push_back(attn_pos_json(impl_->enc[l].attn, "encoder_self", l));
    for (int l = 0; l < cfg_.layers; ++l) {
        pos.push_back(attn_pos_json(impl_->dec[l].self_attn, "decoder_self", l));
        pos.push_back(attn_pos_json(impl_->dec[l].cross, "decoder_cross", l));
    }
    j["positional"] = pos;

    json params = json::array();
    for (const Param* p : params_) params.push_back(p->v);
    j["params"] = params;

    std::ofstream out(path);
    if (!out) throw IoError("cannot write checkpoint: " + path);
    out << j.dump();
    out << '\n';
    if (!out) throw IoError("failed writing checkpoint: " + path);
}

Model Model::load_checkpoint(const std::string& path, uint64_t* rng_state) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw IoError(std::string("bad checkpoint JSON: ") + e.what());
    }
    try {
        if (j.at("format") != "agf-checkpoint-1") throw ConfigError("unknown checkpoint format");
        const json& cfg = j.at("config");
        ModelConfig mc;
        mc.layers = cfg.at("layers");
        mc.heads = cfg.at("heads");
        mc.d_model = cfg.at("d_model");
        mc.d_ff = cfg.at("d_ff");
        mc.seq_len = cfg.at("seq_len");
        mc.vocab = cfg.at("vocab");
        mc.use_abs_pe = cfg.at("use_abs_pe");
        mc.cross_positional = cfg.at("cross_positional");
        mc.seed = cfg.at("seed");
        const json& attn = cfg.at("attention");
        mc.attn.positional_mode = parse_positional_mode(attn.at("positional_mode"));
        mc.attn.pcm_v = attn.at("pcm_v");
        mc.attn.pcm_v_exp = attn.at("pcm_v_exp");
        mc.attn.pcm_v_stop_grad = attn.at("pcm_v_stop_grad");
        mc.attn.sco = attn.at("sco");
        mc.attn.scale = attn.at("scale");

        Model model(mc);
        const json& params = j.at("params");
        if (params.size() != model.params_.size())
            throw ConfigError("checkpoint parameter count mismatch");
        for (size_t i = 0; i < params.size(); ++i) {
            const auto v = params[i].get<std::vector<double>>();
            if (v.size() != model.params_[i]->v.size())
                throw ConfigError("checkpoint parameter size mismatch");
            model.params_[i]->v = v;
        }
        if (rng_state) *rng_state = j.at("rng_state").get<uint64_t>();
        return model;
    } catch (const json::exception& e) {
        throw IoError(std::string("bad checkpoint contents: ") + e.what());
    }
}

}  // namespace agf
