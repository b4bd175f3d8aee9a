#pragma once

#include <span>
#include <vector>

#include "agf/matrix.hpp"
#include "agf/poscoeff.hpp"

namespace agf {

enum class MaskKind { none, causal };

struct AttentionOptions {
    PositionalMode positional_mode = PositionalMode::none;
    bool pcm_v = false;
    bool pcm_v_exp = false;
    // Ablation: exclude the aggregation coefficient from the parameter
    // gradient (treat it as a constant in the value path).
    bool pcm_v_stop_grad = false;
    bool sco = false;
    MaskKind mask = MaskKind::none;
    double scale = 0.0;  // 0 = 1/sqrt(d_k)

    void validate() const;  // throws ConfigError on illegal combinations
    double effective_scale(int d_k) const;
};

// Forward result plus everything the backward pass needs.
struct AttentionOutput {
    Dense2 output;   // L_q x d_v
    Dense2 weights;  // softmax rows, before any value-path reweighting
    Dense2 wdot;     // weighted dot products, before scaling
    Dense2 base;     // scaled scores, before the positional term
    // post-exp integration intermediates: stabilized numerator factors and
    // per-row denominators
    Dense2 expn;
    std::vector<double> denom;
    std::vector<double> knorm;  // per-key norms (floored) when sco
};

struct AttentionGrads {
    Dense2 dQ, dK, dV;
    // d(loss)/d(coefficient-matrix entry); holds bias gradients for the
    // additive integration.
    Dense2 dcoeff;
    std::vector<double> dlc3;  // [2][seq_len][d_k], empty when lc3 absent
};

// Score for one query/key pair. coeff is the multiplicative coefficient, or
// the additive bias when the mode is additive. lc3_w, when given, points at
// d_k per-dimension weights applied inside the dot product.
double single_pair_score(std::span<const double> q, std::span<const double> k, double coeff,
                         const double* lc3_w, const AttentionOptions& opts);

AttentionOutput attention_forward(const Dense2& Q, const Dense2& K, const Dense2& V,
                                  const CoeffMatrix& coeffs, const Lc3Ref* lc3,
                                  const AttentionOptions& opts);

AttentionGrads attention_backward(const Dense2& Q, const Dense2& K, const Dense2& V,
                                  const CoeffMatrix& coeffs, const Lc3Ref* lc3,
                                  const AttentionOptions& opts, const AttentionOutput& fwd,
                                  const Dense2& dout);

}  // namespace agf
