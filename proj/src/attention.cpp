#include "agf/attention.hpp"

#include <cmath>
#include <limits>

#include "agf/error.hpp"

namespace agf {

namespace {

constexpr double kNormFloor = 1e-6;
constexpr double kMaskedLogit = std::numeric_limits<double>::lowest();

bool allowed(MaskKind mask, int m, int n) { return mask != MaskKind::causal || n <= m; }

// Weighted dot products q_m . k_n (per-dimension weights from the lc3 table
// when present).
Dense2 weighted_dots(const Dense2& Q, const Dense2& K, const Lc3Ref* lc3) {
    if (!lc3) return matmul_nt(Q, K);
    Dense2 out(Q.rows, K.rows);
    for (int m = 0; m < Q.rows; ++m) {
        const double* q = Q.row(m);
        for (int n = 0; n < K.rows; ++n) {
            const double* k = K.row(n);
            const double* w = lc3->w + lc3_index(lc3->seq_len, lc3->d_k, n - m);
            double s = 0.0;
            for (int j = 0; j < Q.cols; ++j) s += q[j] * k[j] * w[j];
            out.at(m, n) = s;
        }
    }
    return out;
}

}  // namespace

void AttentionOptions::validate() const {
    if (pcm_v && pcm_v_exp) throw ConfigError("pcm_v and pcm_v_exp are mutually exclusive");
    if (pcm_v && !mode_is_multiplicative(positional_mode))
        throw ConfigError("pcm_v requires a multiplicative positional mode");
    if (pcm_v_exp && positional_mode != PositionalMode::alibi_add)
        throw ConfigError("pcm_v_exp requires the additive-bias positional mode");
    if (scale < 0.0) throw ConfigError("scale must be positive (or 0 for the default)");
}

double AttentionOptions::effective_scale(int d_k) const {
    return scale > 0.0 ? scale : 1.0 / std::sqrt(static_cast<double>(d_k));
}

double single_pair_score(std::span<const double> q, std::span<const double> k, double coeff,
                         const double* lc3_w, const AttentionOptions& opts) {
    if (q.size() != k.size()) throw ShapeError("query/key length mismatch");
    double wdot = 0.0;
    for (size_t j = 0; j < q.size(); ++j) wdot += q[j] * k[j] * (lc3_w ? lc3_w[j] : 1.0);

    double base;
    if (opts.sco) {
        double nsq = 0.0;
        for (double v : k) nsq += v * v;
        base = wdot / std::max(std::sqrt(nsq), kNormFloor);
    } else {
        base = wdot * opts.effective_scale(static_cast<int>(q.size()));
    }

    switch (opts.positional_mode) {
        case PositionalMode::none:
            return base;
        case PositionalMode::alibi_add:
            return base + coeff;
        default:
            return base * coeff;
    }
}

AttentionOutput attention_forward(const Dense2& Q, const Dense2& K, const Dense2& V,
                                  const CoeffMatrix& coeffs, const Lc3Ref* lc3,
                                  const AttentionOptions& opts) {
    opts.validate();
    if (Q.cols != K.cols) throw ShapeError("query/key width mismatch");
    if (V.rows != K.rows) throw ShapeError("value/key count mismatch");
    if (coeffs.lq != Q.rows || coeffs.lk != K.rows)
        throw ShapeError("coefficient matrix does not span the attention shape");
    if (coeffs.additive != (opts.positional_mode == PositionalMode::alibi_add))
        throw ConfigError("coefficient matrix integration does not match positional mode");
    if (lc3 && lc3->d_k != Q.cols) throw ShapeError("per-dimension weight width mismatch");

    const int lq = Q.rows, lk = K.rows;
    const bool mul_post_exp = opts.positional_mode == PositionalMode::alibi_mul;

    AttentionOutput out;
    out.wdot = weighted_dots(Q, K, lc3);

    out.base = Dense2(lq, lk);
    if (opts.sco) {
        out.knorm.resize(lk);
        for (int n = 0; n < lk; ++n) {
            double nsq = 0.0;
            for (int j = 0; j < K.cols; ++j) nsq += K.at(n, j) * K.at(n, j);
            out.knorm[n] = std::max(std::sqrt(nsq), kNormFloor);
        }
        for (int m = 0; m < lq; ++m)
            for (int n = 0; n < lk; ++n) out.base.at(m, n) = out.wdot.at(m, n) / out.knorm[n];
    } else {
        const double s = opts.effective_scale(Q.cols);
        for (int m = 0; m < lq; ++m)
            for (int n = 0; n < lk; ++n) out.base.at(m, n) = out.wdot.at(m, n) * s;
    }

    // Logits for the softmax path. The post-exp integration keeps the bare
    // base here and multiplies the coefficient into the numerator after
    // exponentiation, which matches adding the log-coefficient to the logit.
    Dense2 logits(lq, lk);
    for (int m = 0; m < lq; ++m) {
        int open = 0;
        for (int n = 0; n < lk; ++n) {
            if (!allowed(opts.mask, m, n)) {
                logits.at(m, n) = kMaskedLogit;
                continue;
            }
            ++open;
            double b = out.base.at(m, n);
            switch (opts.positional_mode) {
                case PositionalMode::none:
                case PositionalMode::alibi_mul:
                    logits.at(m, n) = b;
                    break;
                case PositionalMode::alibi_add:
                    logits.at(m, n) = b + coeffs.at(m, n);
                    break;
                default:
                    logits.at(m, n) = b * coeffs.at(m, n);
            }
        }
        if (open == 0) throw DomainError("attention row with every key masked");
    }

    out.weights = Dense2(lq, lk);
    if (mul_post_exp) {
        out.expn = Dense2(lq, lk);
        out.denom.resize(lq);
        for (int m = 0; m < lq; ++m) {
            double hi = kMaskedLogit;
            for (int n = 0; n < lk; ++n)
                if (logits.at(m, n) > hi) hi = logits.at(m, n);
            double den = 0.0;
            for (int n = 0; n < lk; ++n) {
                double e = std::exp(logits.at(m, n) - hi);
                out.expn.at(m, n) = e;
                den += e * coeffs.at(m, n);
            }
            if (den <= 0.0) throw DomainError("post-exp coefficients underflowed to zero");
            out.denom[m] = den;
            for (int n = 0; n < lk; ++n)
                out.weights.at(m, n) = out.expn.at(m, n) * coeffs.at(m, n) / den;
        }
    } else {
        out.weights = softmax_rows(logits);
    }

    if (opts.pcm_v || opts.pcm_v_exp) {
        Dense2 eff(lq, lk);
        for (int m = 0; m < lq; ++m)
            for (int n = 0; n < lk; ++n) {
                double c = opts.pcm_v_exp ? std::exp(coeffs.at(m, n)) : coeffs.at(m, n);
                eff.at(m, n) = out.weights.at(m, n) * c;
            }
        out.output = matmul(eff, V);
    } else {
        out.output = matmul(out.weights, V);
    }
    return out;
}

AttentionGrads attention_backward(const Dense2& Q, const Dense2& K, const Dense2& V,
                                  const CoeffMatrix& coeffs, const Lc3Ref* lc3,
                                  const AttentionOptions& opts, const AttentionOutput& fwd,
                                  const Dense2& dout) {
    const int lq = Q.rows, lk = K.rows;
    if (!dout.same_shape(fwd.output)) throw ShapeError("upstream gradient shape mismatch");
    const bool mul_post_exp = opts.positional_mode == PositionalMode::alibi_mul;
    const bool pcm = opts.pcm_v || opts.pcm_v_exp;

    AttentionGrads g;
    g.dQ = Dense2(Q.rows, Q.cols);
    g.dK = Dense2(K.rows, K.cols);
    g.dV = Dense2(V.rows, V.cols);
    g.dcoeff = Dense2(lq, lk);
    if (lc3) g.dlc3.assign(2 * static_cast<size_t>(lc3->seq_len) * lc3->d_k, 0.0);

    // Aggregation weights W and their coefficient factor.
    Dense2 eff = fwd.weights;
    Dense2 aggc;
    if (pcm) {
        aggc = Dense2(lq, lk);
        for (int m = 0; m < lq; ++m)
            for (int n = 0; n < lk; ++n) {
                double c = opts.pcm_v_exp ? std::exp(coeffs.at(m, n)) : coeffs.at(m, n);
                aggc.at(m, n) = c;
                eff.at(m, n) *= c;
            }
    }

    Dense2 dW(lq, lk);
    matmul_backward(eff, V, dout, dW, g.dV);

    Dense2 dA(lq, lk);
    if (pcm) {
        for (int m = 0; m < lq; ++m)
            for (int n = 0; n < lk; ++n) {
                dA.at(m, n) = dW.at(m, n) * aggc.at(m, n);
                if (!opts.pcm_v_stop_grad) {
                    double d = dW.at(m, n) * fwd.weights.at(m, n);
                    // For the exp integration the aggregation factor is
                    // exp(bias); chain through it to the bias.
                    g.dcoeff.at(m, n) += opts.pcm_v_exp ? d * aggc.at(m, n) : d;
                }
            }
    } else {
        dA = dW;
    }

    // Shared softmax structure: dlogit_j = a_j (dA_j - sum_i dA_i a_i).
    Dense2 dbase(lq, lk);
    for (int m = 0; m < lq; ++m) {
        double inner = 0.0;
        for (int n = 0; n < lk; ++n) inner += dA.at(m, n) * fwd.weights.at(m, n);
        for (int n = 0; n < lk; ++n) {
            double centered = dA.at(m, n) - inner;
            double dlogit = fwd.weights.at(m, n) * centered;
            switch (opts.positional_mode) {
                case PositionalMode::none:
                    dbase.at(m, n) = dlogit;
                    break;
                case PositionalMode::alibi_add:
                    dbase.at(m, n) = dlogit;
                    g.dcoeff.at(m, n) += dlogit;
                    break;
                case PositionalMode::alibi_mul:
                    dbase.at(m, n) = dlogit;
                    // d(weight_n)/d(c_j) = (e_j/denom)(delta - a_n)
                    g.dcoeff.at(m, n) += fwd.expn.at(m, n) / fwd.denom[m] * centered;
                    break;
                default:  // field modes: logit = base * coeff
                    dbase.at(m, n) = dlogit * coeffs.at(m, n);
                    g.dcoeff.at(m, n) += dlogit * fwd.base.at(m, n);
            }
        }
    }

    // Undo the scaling to reach the raw weighted dots.
    Dense2 dwdot(lq, lk);
    if (opts.sco) {
        for (int n = 0; n < lk; ++n) {
            double dnorm = 0.0;
            for (int m = 0; m < lq; ++m) {
                dwdot.at(m, n) = dbase.at(m, n) / fwd.knorm[n];
                dnorm -= dbase.at(m, n) * fwd.wdot.at(m, n) / (fwd.knorm[n] * fwd.knorm[n]);
            }
            double raw = 0.0;
            for (int j = 0; j < K.cols; ++j) raw += K.at(n, j) * K.at(n, j);
            raw = std::sqrt(raw);
            if (raw > kNormFloor)
                for (int j = 0; j < K.cols; ++j) g.dK.at(n, j) += dnorm * K.at(n, j) / raw;
        }
    } else {
        const double s = opts.effective_scale(Q.cols);
        for (size_t i = 0; i < dbase.data.size(); ++i) dwdot.data[i] = dbase.data[i] * s;
    }

    if (lc3) {
        for (int m = 0; m < lq; ++m)
            for (int n = 0; n < lk; ++n) {
                double d = dwdot.at(m, n);
                if (d == 0.0) continue;
                size_t wi = lc3_index(lc3->seq_len, lc3->d_k, n - m);
                const double* w = lc3->w + wi;
                for (int j = 0; j < Q.cols; ++j) {
                    g.dQ.at(m, j) += d * K.at(n, j) * w[j];
                    g.dK.at(n, j) += d * Q.at(m, j) * w[j];
                    g.dlc3[wi + j] += d * Q.at(m, j) * K.at(n, j);
                }
            }
    } else {
        matmul_backward_nt(Q, K, dwdot, g.dQ, g.dK);
    }
    return g;
}

}  // namespace agf
