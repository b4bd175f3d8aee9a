#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace agf {

enum class Direction { forward = 0, backward = 1 };

// Offset convention throughout: offset = key index - query index.
// Offset 0 is routed to the forward branch.
inline Direction offset_direction(long long offset) {
    return offset >= 0 ? Direction::forward : Direction::backward;
}

enum class PositionalMode { none, agf, agf_m, agf_full, alibi_add, alibi_mul };

const char* to_string(PositionalMode mode);
PositionalMode parse_positional_mode(const std::string& name);  // throws ConfigError

// A multiplicative positional coefficient enters the attention computation;
// additive means the stored value is a logit bias instead.
bool mode_is_multiplicative(PositionalMode mode);
bool mode_uses_lc2(PositionalMode mode);
bool mode_uses_lc3(PositionalMode mode);

// Trainable parameters per head: number of scalars for one direction pair.
size_t positional_param_count(PositionalMode mode, int seq_len, int d_k);

// ---------------------------------------------------------------------------
// Gravitational-field coefficient: F(d) = G * (1 + d/r)^(-k) with G = exp(gamma)
// and r = exp(rho) per direction, so positivity holds by construction. k is
// fixed (not trained); four trainable scalars per head.
struct AgfHeadParams {
    double gamma[2] = {0.0, 0.0};                        // ln G, [forward, backward]
    double rho[2] = {kDefaultRho, kDefaultRho};          // ln r
    double k_exp = 2.0;

    static constexpr double kDefaultRho = 3.1780538303479458;  // ln 24, reciprocal radius 1/24

    double g(Direction d) const;
    double r(Direction d) const;
};

double agf_coeff(const AgfHeadParams& p, long long offset);
// Accumulates d(loss)/d{gamma_f, gamma_b, rho_f, rho_b} given upstream
// d(loss)/d(coeff) at this offset. grad4 layout: [gamma_f, gamma_b, rho_f, rho_b].
void agf_coeff_grads(const AgfHeadParams& p, long long offset, double upstream, double grad4[4]);

// ---------------------------------------------------------------------------
// Per-offset amplitude table (centered at 1), clamped at seq_len-1.
// Storage layout [direction][offset], 2*seq_len values.
double lc2_lookup(int seq_len, const double* amp, long long offset);
void lc2_grad(int seq_len, double* amp_grad, long long offset, double upstream);

struct Lc2Amplitudes {
    int seq_len = 0;
    std::vector<double> amp;
    explicit Lc2Amplitudes(int n) : seq_len(n), amp(2 * static_cast<size_t>(n), 1.0) {}
    double& at(Direction d, int dist) { return amp[static_cast<int>(d) * seq_len + dist]; }
};

inline double lc2_amplitude(const Lc2Amplitudes& a, long long offset) {
    return lc2_lookup(a.seq_len, a.amp.data(), offset);
}

// ---------------------------------------------------------------------------
// Per-dimension weight table (centered at 1); applied inside the dot product
// as score = sum_j q_j k_j w_j. Storage [direction][offset][dim], 2*seq_len*d_k.
size_t lc3_index(int seq_len, int d_k, long long offset);  // base index of the clamped row

struct Lc3Weights {
    int seq_len = 0;
    int d_k = 0;
    std::vector<double> w;
    Lc3Weights(int n, int dk)
        : seq_len(n), d_k(dk), w(2 * static_cast<size_t>(n) * dk, 1.0) {}
    double& at(Direction d, int dist, int dim) {
        return w[(static_cast<size_t>(static_cast<int>(d)) * seq_len + dist) * d_k + dim];
    }
};

std::span<const double> lc3_weights(const Lc3Weights& t, long long offset);

// Non-owning view used by the attention kernel.
struct Lc3Ref {
    int seq_len = 0;
    int d_k = 0;
    const double* w = nullptr;
};

// ---------------------------------------------------------------------------
// Bidirectional learnable ALiBi slopes. bias(d) = -slope_dir * |d|; the
// multiplicative integration exponentiates the bias.
enum class Integration { additive, multiplicative };

struct AlibiHeadParams {
    double slope[2] = {0.0, 0.0};  // [forward, backward]
    Integration integration = Integration::additive;
};

double alibi_bias(const AlibiHeadParams& p, long long offset);
// upstream is d(loss)/d(bias); gslope layout [forward, backward].
void alibi_bias_grads(long long offset, double upstream, double gslope[2]);
// ALiBi's published geometric slope schedule, reused for both directions.
double alibi_default_slope(int head, int n_heads);

// ---------------------------------------------------------------------------
// KERPLE composite log kernel: bias(d) = c - r1*log(1 + r2*d), r1, r2 > 0.
struct KerpleLogParams {
    double c = 0.0;
    double r1 = 1.0;
    double r2 = 1.0;
};

double kerple_log_bias(const KerpleLogParams& p, long long offset);
// Coefficient by exponentiating the bias: exp(c - r1*log(1 + r2*d)).
double kerple_coeff_exp_form(const KerpleLogParams& p, long long offset);
// The same coefficient through the field parameterization: G = e^c, r = 1/r2,
// k = r1, giving e^c * (1 + r2*d)^(-r1).
AgfHeadParams kerple_to_agf(const KerpleLogParams& p);

// ---------------------------------------------------------------------------
// Dense per-head coefficient matrix. Entries are multiplicative coefficients,
// or logit biases when additive is set. Relative-only modes yield Toeplitz
// matrices (entries depend only on key index - query index).
struct CoeffMatrix {
    int lq = 0;
    int lk = 0;
    bool additive = false;
    std::vector<double> v;

    CoeffMatrix() = default;
    CoeffMatrix(int q, int k, bool add = false)
        : lq(q), lk(k), additive(add), v(static_cast<size_t>(q) * k, add ? 0.0 : 1.0) {}
    double& at(int m, int n) { return v[static_cast<size_t>(m) * lk + n]; }
    double at(int m, int n) const { return v[static_cast<size_t>(m) * lk + n]; }
};

// Non-owning bundle of one head's positional parameters.
struct HeadPosRef {
    PositionalMode mode = PositionalMode::none;
    AgfHeadParams agf;
    int seq_len = 0;
    const double* lc2 = nullptr;  // required for agf_m / agf_full
    Lc3Ref lc3;                   // required for agf_full
    AlibiHeadParams alibi;
};

// Owning bundle, convenient for tests and standalone use.
struct HeadPosParams {
    PositionalMode mode = PositionalMode::none;
    AgfHeadParams agf;
    Lc2Amplitudes lc2{0};
    Lc3Weights lc3{0, 0};
    AlibiHeadParams alibi;

    HeadPosParams() = default;
    HeadPosParams(PositionalMode m, int seq_len, int d_k);
    HeadPosRef ref() const;
};

// Single matrix entry for the mode: multiplicative coefficient, or bias for
// alibi_add. agf_full stores only LC1*LC2 here; LC3 applies in the dot product.
double coeff_entry(const HeadPosRef& p, long long offset);

CoeffMatrix build_coeff_matrix(const HeadPosRef& p, int lq, int lk);

// Gradient sinks; null pointers skip the corresponding family.
struct PosGradSink {
    double* agf4 = nullptr;    // [gamma_f, gamma_b, rho_f, rho_b]
    double* lc2 = nullptr;     // [2][seq_len]
    double* slopes = nullptr;  // [forward, backward]
};

// Chain-rule accumulation from d(loss)/d(matrix entry) at one offset into the
// mode's parameter gradients. For alibi_mul the entry is exp(bias), and the
// slope gradient includes that factor.
void accumulate_entry_grads(const HeadPosRef& p, long long offset, double upstream,
                            const PosGradSink& sink);

}  // namespace agf
